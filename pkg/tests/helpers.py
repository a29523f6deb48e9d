"""Small corpora and batches shared by the model tests."""
import numpy as np

from oolib import autodiff as ad
from oolib.datagen import Corpus, EnvConfig, generate_episodes, sample_scene_split
from oolib.env import Variant
from oolib.models import Hyper
from oolib.training import NegativeSampler, make_batch, make_model

KINDS = ("howm", "exact_sigma_n", "sigma_k_nobind", "sigma_k_copyall", "flat_mlp")
SMALL = Hyper(hidden=16, flat_hidden=32)


def tiny_corpus(n=6, k=3, episodes=6, ep_len=5, seed=1, variant=Variant.SHAPES):
    cfg = EnvConfig(variant, n, k)
    sp = sample_scene_split(cfg.library(), k, 6, 4, 0)
    return Corpus.from_episodes(generate_episodes(sp.train_scenes, cfg, episodes, ep_len, seed), n)


def tiny_batch(c, size=6, seed=0):
    rng = np.random.default_rng(seed)
    e, t = c.transitions()
    e, t = e[:size], t[:size]
    ne, nt = NegativeSampler(c, 0.5).sample(e, rng)
    return make_batch(c, e, t, ne, nt)


def kink_free_model(kind, batch, n=6, k=3, hyper=SMALL, margin=1e-4, tries=50):
    """First seed whose loss at this batch keeps every relu input further
    than `margin` from zero, so central differences stay on one branch."""
    for seed in range(tries):
        m = make_model(kind, n, k, hyper=hyper, seed=seed)
        with ad.Tape() as tape:
            m.loss(batch)
        if tape.kink_margin() > margin:
            return m
    raise RuntimeError(f"no kink-free {kind} instance in {tries} seeds")


def random_obs(rng, b, k, f, n):
    feats = rng.normal(size=(b, k, f))
    order = np.stack([rng.permutation(n)[:k] for _ in range(b)])
    return feats, order
