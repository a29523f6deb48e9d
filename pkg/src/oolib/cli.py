"""Command line front end: ``oolib <subcommand> ...``.

Every subcommand reads a JSON run config (``--config``), applies
``--set section.key=value`` overrides and echoes the effective config into
its output directory. Exit codes: 0 success, 2 config error, 3 data error,
4 numeric failure, 5 verification failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import os
import sys

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

DEFAULT_CONFIG = {
    "env": {"variant": "shapes", "N": 10, "K": 5, "grid_w": 5, "grid_h": 5},
    "split": {"n_train_scenes": 20, "n_eval_scenes": 20, "freq_tol": 0.25},
    "data": {"train_episodes": 200, "ep_len": 50, "eval_episodes": 500, "eval_ep_len": 10},
    "model": {"kind": "howm", "hyper": {}},
    "train": {"epochs": 60, "batch": 64, "lr": 5e-4},
    "seed": 0,
}

TRAIN_FILE = "train.jsonl.gz"
EVAL_FILE = "eval.jsonl.gz"
SPLIT_FILE = "split.json"
CONFIG_FILE = "config.json"
CHECKPOINT_FILE = "model.json"


def _config_error(msg):
    from .errors import ConfigError
    return ConfigError(msg)


def _merge(base: dict, over: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in out:
            raise _config_error(f"unknown config key {path + k!r}")
        if isinstance(out[k], dict) and k != "hyper":
            if not isinstance(v, dict):
                raise _config_error(f"config key {path + k!r} must be an object")
            out[k] = _merge(out[k], v, path + k + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path=None, overrides=()) -> dict:
    """Defaults, then the JSON file, then ``a.b=value`` overrides; validated."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except OSError as e:
            raise _config_error(f"cannot read config {path}: {e}")
        except json.JSONDecodeError as e:
            raise _config_error(f"config {path} is not valid JSON: {e}")
        cfg = _merge(cfg, user)
    for item in overrides:
        if "=" not in item:
            raise _config_error(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        parts = key.split(".")
        node = cfg
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise _config_error(f"unknown config key {key!r}")
            node = node[p]
        if parts[-1] not in node and not (len(parts) >= 2 and parts[-2] == "hyper"):
            raise _config_error(f"unknown config key {key!r}")
        node[parts[-1]] = _parse_value(value)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict):
    from .datagen import EnvConfig
    from .models import Hyper
    from .perms import binom
    from .training import MODEL_KINDS

    env = EnvConfig.from_dict(cfg["env"])
    sp, data, tr = cfg["split"], cfg["data"], cfg["train"]
    for key in ("n_train_scenes", "n_eval_scenes"):
        if int(sp[key]) < 1:
            raise _config_error(f"split.{key} must be at least 1")
    total = int(sp["n_train_scenes"]) + int(sp["n_eval_scenes"])
    if total > binom(env.n, env.k):
        raise _config_error(f"{total} scenes requested but only C({env.n},{env.k}) = {binom(env.n, env.k)} exist")
    for key in ("train_episodes", "ep_len", "eval_episodes", "eval_ep_len"):
        if int(data[key]) < 1:
            raise _config_error(f"data.{key} must be at least 1")
    kind = cfg["model"]["kind"]
    if kind not in MODEL_KINDS and kind != "oracle":
        raise _config_error(f"unknown model kind {kind!r}; choose from {sorted(MODEL_KINDS) + ['oracle']}")
    Hyper().replace(**cfg["model"]["hyper"])
    if int(tr["epochs"]) < 0 or int(tr["batch"]) < 1 or float(tr["lr"]) <= 0:
        raise _config_error("train.epochs >= 0, train.batch >= 1 and train.lr > 0 are required")


def echo_config(cfg: dict, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, CONFIG_FILE), "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)


def _env_config(cfg):
    from .datagen import EnvConfig
    return EnvConfig.from_dict(cfg["env"])


def _load_corpora(data_dir: str, n: int):
    from .datagen import Corpus, read_jsonl
    from .errors import IoError
    out = {}
    for split, name in (("train", TRAIN_FILE), ("eval", EVAL_FILE)):
        path = os.path.join(data_dir, name)
        if not os.path.exists(path):
            raise IoError(f"missing corpus file {path}")
        out[split] = Corpus.from_episodes(read_jsonl(path), n)
    return out


# ---------------------------------------------------------------- subcommands

def cmd_gen_data(args, cfg) -> int:
    from .datagen import corpus_problems, generate_episodes, sample_scene_split, split_problems, write_jsonl
    from .errors import DataError

    env = _env_config(cfg)
    lib = env.library()
    seed = int(cfg["seed"])
    sp = cfg["split"]
    split = sample_scene_split(lib, env.k, int(sp["n_train_scenes"]), int(sp["n_eval_scenes"]), seed,
                               tol=float(sp["freq_tol"]))
    problems = split_problems(split, env.n, env.k, float(sp["freq_tol"]))
    data = cfg["data"]
    train = generate_episodes(split.train_scenes, env, int(data["train_episodes"]), int(data["ep_len"]), [seed, 1])
    evals = generate_episodes(split.eval_scenes, env, int(data["eval_episodes"]), int(data["eval_ep_len"]), [seed, 2])
    problems += [f"train: {p}" for p in corpus_problems(train, env)]
    problems += [f"eval: {p}" for p in corpus_problems(evals, env)]
    if problems:
        raise DataError("generated data failed its self-check:\n  " + "\n  ".join(problems[:20]))
    echo_config(cfg, args.out)
    with open(os.path.join(args.out, SPLIT_FILE), "w") as fh:
        json.dump(split.to_dict(), fh, indent=1)
    write_jsonl(train, os.path.join(args.out, TRAIN_FILE))
    write_jsonl(evals, os.path.join(args.out, EVAL_FILE))
    print(f"train scenes: {len(split.train_scenes)}  eval scenes: {len(split.eval_scenes)}")
    print(f"train episodes: {len(train)} x {data['ep_len']} steps  eval episodes: {len(evals)} x {data['eval_ep_len']} steps")
    print(f"wrote {args.out}")
    return 0


def cmd_train(args, cfg) -> int:
    from . import checkpoint
    from .datagen import Corpus, read_jsonl
    from .errors import ConfigError, IoError
    from .models import Hyper
    from .training import TrainConfig, make_model, train

    ckpt = os.path.join(args.out, CHECKPOINT_FILE)
    if os.path.exists(ckpt) and not args.force:
        raise ConfigError(f"{ckpt} already exists; pass --force to overwrite")
    env = _env_config(cfg)
    seed = int(cfg["seed"])
    kind = cfg["model"]["kind"]
    hyper = Hyper().replace(**cfg["model"]["hyper"])
    meta = {"N": env.n, "K": env.k, "hyper": hyper.to_dict(), "seed": seed, "env": env.to_dict()}
    if kind == "oracle":
        echo_config(cfg, args.out)
        digest = checkpoint.save(ckpt, {}, "oracle", meta)
        print(f"checkpoint {ckpt} sha256 {digest}")
        return 0
    path = os.path.join(args.data, TRAIN_FILE)
    if not os.path.exists(path):
        raise IoError(f"missing corpus file {path}")
    corpus = Corpus.from_episodes(read_jsonl(path), env.n)
    model = make_model(kind, env.n, env.k, hyper, seed)
    tc = TrainConfig(epochs=int(cfg["train"]["epochs"]), batch=int(cfg["train"]["batch"]),
                     lr=float(cfg["train"]["lr"]), seed=seed)

    def report(epoch, loss, mrr):
        print(f"epoch {epoch:3d}  loss {loss:.5f}  train_mrr_1step {mrr:.4f}", flush=True)

    log = train(model, corpus, tc, on_epoch=report)
    echo_config(cfg, args.out)
    log.write_csv(os.path.join(args.out, "train_log.csv"))
    digest = checkpoint.save(ckpt, model.arrays(), kind, meta)
    print(f"trained {len(log.epochs)} epochs in {log.seconds:.1f}s")
    print(f"checkpoint {ckpt} sha256 {digest}")
    return 0


def load_model(path: str):
    """Rebuild the model stored by ``train``; oracle checkpoints yield None."""
    from . import checkpoint
    from .errors import IoError
    from .models import Hyper
    from .training import make_model

    if not os.path.exists(path):
        raise IoError(f"checkpoint {path} not found")
    kind, meta, arrays = checkpoint.load(path)
    if kind == "oracle":
        return None, meta
    model = make_model(kind, int(meta["N"]), int(meta["K"]), Hyper(**meta["hyper"]), int(meta.get("seed", 0)))
    model.load_arrays(arrays)
    return model, meta


def cmd_evaluate(args, cfg) -> int:
    from .errors import ConfigError
    from .datagen import EnvConfig
    from .evaluation import OracleModel, evaluate

    try:
        horizons = tuple(int(h) for h in args.horizons.split(","))
    except ValueError:
        raise ConfigError(f"--horizons must be a comma list of integers, got {args.horizons!r}")
    model, meta = load_model(args.checkpoint)
    splits = _load_corpora(args.data, int(meta["N"]))
    seed = int(cfg["seed"])
    if model is None:
        report = evaluate(OracleModel(EnvConfig.from_dict(meta["env"]), int(meta["K"])), splits, horizons, seed=seed)
    else:
        report = evaluate(model, splits, horizons, seed=seed)
    out = args.out or os.path.dirname(os.path.abspath(args.checkpoint))
    echo_config(cfg, out)
    report.write_csv(os.path.join(out, "metrics.csv"))
    with open(os.path.join(out, "metrics.json"), "w") as fh:
        json.dump(report.to_json(), fh, indent=1)
    cols = ["method", "N", "K", "horizon", "split", "h@1", "mrr", "gap"]
    print(",".join(cols))
    for row in report.table():
        print(",".join(f"{row[c]:.4f}" if isinstance(row[c], float) else str(row[c]) for c in cols))
    for split, acc in report.binding.items():
        print(f"# binding accuracy ({split}): {acc:.4f}")
    return 0


def cmd_verify_prop(args, cfg) -> int:
    from .errors import ConfigError
    from .tabular import prop_report

    try:
        gw, gh = (int(x) for x in args.grid.lower().split("x"))
    except ValueError:
        raise ConfigError(f"--grid must look like 2x2, got {args.grid!r}")
    report = prop_report(args.n, args.k, (gw, gh), args.eps, args.seed)
    print(json.dumps(report, indent=1, default=float))
    return 0 if report["passed"] else 5


def cmd_render(args, cfg) -> int:
    from .datagen import positions_from_observation, run_episode
    from .env import EnvState, Scene, render_ppm
    from .errors import ConfigError

    env = _env_config(cfg)
    lib = env.library()
    try:
        ids = [int(x) for x in args.scene.split(",")]
    except ValueError:
        raise ConfigError(f"--scene must be a comma list of object ids, got {args.scene!r}")
    scene = Scene(ids)
    scene.validate(lib)
    if len(ids) != env.k:
        raise ConfigError(f"scene has {len(ids)} objects but env.K = {env.k}")
    ep = run_episode(env, lib, scene, int(cfg["data"]["ep_len"]), args.seed)
    echo_config(cfg, args.out)
    for t, obs in enumerate(ep.observations):
        pos = positions_from_observation(obs, env)
        state = EnvState(lib, scene, tuple(pos[i] for i in scene.object_ids), env.grid_w, env.grid_h)
        with open(os.path.join(args.out, f"frame_{t:03d}.ppm"), "wb") as fh:
            fh.write(render_ppm(state))
    print(f"wrote {len(ep.observations)} frames to {args.out}")
    return 0


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oolib", description="Object library environments, verification and world models.")
    p.add_argument("--threads", type=int, default=None, help="cap worker threads (also OOLIB_THREADS)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None, help="JSON run config")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. train.epochs=5")
        sp.add_argument("--seed", type=int, default=None, help="shorthand for --set seed=S")

    g = sub.add_parser("gen-data", help="sample a scene split and write train/eval corpora")
    common(g)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model on a generated corpus")
    common(t)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--force", action="store_true", help="overwrite an existing checkpoint")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a checkpoint on both splits")
    common(e)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--horizons", default="1,5,10")
    e.add_argument("--out", default=None, help="output directory (default: next to the checkpoint)")
    e.set_defaults(func=cmd_evaluate)

    v = sub.add_parser("verify-prop", help="exact tabular check of the slot scaling law")
    common(v)
    v.add_argument("--n", type=int, default=4)
    v.add_argument("--k", type=int, default=2)
    v.add_argument("--grid", default="2x2")
    v.add_argument("--eps", type=float, default=1e-3)
    v.set_defaults(func=cmd_verify_prop)

    r = sub.add_parser("render", help="write PPM frames of one random episode")
    common(r)
    r.add_argument("--scene", required=True, help="comma separated object ids, e.g. 1,3,5")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = args.threads if args.threads is not None else os.environ.get("OOLIB_THREADS")
    if threads is not None:
        for var in THREAD_VARS:
            os.environ[var] = str(threads)
    from .errors import OolibError
    try:
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = load_config(args.config, overrides)
        if args.command == "verify-prop":
            args.seed = int(cfg["seed"])
        elif args.command == "render":
            args.seed = int(cfg["seed"])
        return args.func(args, cfg)
    except OolibError as e:
        print(f"oolib {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
