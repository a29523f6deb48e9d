"""Desk-scale experiment shared by the acceptance suite: the default
command line corpus and training budget, one seed per call."""
import time

from oolib.datagen import Corpus, EnvConfig, corpus_problems, generate_episodes, sample_scene_split, split_problems
from oolib.env import Variant
from oolib.evaluation import binding_accuracy, evaluate
from oolib.models import Hyper
from oolib.training import TrainConfig, make_model, train

KINDS = ("howm", "exact_sigma_n", "sigma_k_nobind", "flat_mlp")
METRICS = ("train1", "eval1", "train5", "eval5", "gap5", "binding", "seconds")


def desk_data(variant: Variant, seed: int):
    """Split and episodes exactly as ``oolib gen-data --seed seed`` makes them,
    plus every protocol problem found in them."""
    cfg = EnvConfig(variant, 10, 5)
    split = sample_scene_split(cfg.library(), 5, 20, 20, seed)
    tr = generate_episodes(split.train_scenes, cfg, 200, 50, [seed, 1])
    ev = generate_episodes(split.eval_scenes, cfg, 500, 10, [seed, 2])
    problems = split_problems(split, 10, 5) + corpus_problems(tr, cfg) + corpus_problems(ev, cfg)
    return Corpus.from_episodes(tr, 10), Corpus.from_episodes(ev, 10), problems


def desk_run(variant: Variant, seed: int, kinds=KINDS, hyper: Hyper = None, log=print) -> dict:
    """-> {kind: metrics dict with the trained model under "model"}, and
    "problems" -> protocol problems of the generated corpora."""
    tr, ev, problems = desk_data(variant, seed)
    out = {"problems": problems, "corpora": (tr, ev)}
    for kind in kinds:
        t0 = time.time()
        m = make_model(kind, 10, 5, hyper=hyper or Hyper(), seed=seed)
        train(m, tr, TrainConfig(seed=seed), log_mrr=False)
        rep = evaluate(m, {"train": tr, "eval": ev}, (1, 5), seed=seed)
        r = {"train1": rep.get("train", 1), "eval1": rep.get("eval", 1), "train5": rep.get("train", 5),
             "eval5": rep.get("eval", 5), "gap5": rep.gap(5)}
        r["binding"] = binding_accuracy(m, ev, 2000, seed) if m.binds else None
        r["seconds"] = time.time() - t0
        if log:
            log(f"{variant.name.lower()} seed {seed} {kind}: " + " ".join(
                f"{k} {r[k]:.3f}" for k in METRICS if r[k] is not None))
        r["model"] = m
        out[kind] = r
    return out
