"""Scene splits, random-policy episodes and the JSONL corpus format."""
from __future__ import annotations

import gzip
import io
import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import env
from .env import ActionId, EnvState, Library, Observation, Scene, Variant
from .errors import ConfigError, DataError, Infeasible, IoError, ParseError
from .perms import binom

MAX_ATTEMPTS = 10_000
MAX_RESAMPLES = 10


@dataclass(frozen=True)
class EnvConfig:
    variant: Variant = Variant.SHAPES
    n: int = 10
    k: int = 5
    grid_w: int = 5
    grid_h: int = 5

    def library(self) -> Library:
        return Library.make(self.variant, self.n)

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        cfg = cls(Variant.parse(d.get("variant", "shapes")), int(d.get("N", d.get("n", 10))),
                  int(d.get("K", d.get("k", 5))), int(d.get("grid_w", 5)), int(d.get("grid_h", 5)))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {"variant": self.variant.name.lower(), "N": self.n, "K": self.k,
                "grid_w": self.grid_w, "grid_h": self.grid_h}

    def validate(self):
        if not 1 < self.k < self.n:
            raise ConfigError(f"need 1 < K < N, got K={self.k}, N={self.n}")
        if self.grid_w < 1 or self.grid_h < 1:
            raise ConfigError("grid dimensions must be positive")
        if self.k > self.grid_w * self.grid_h:
            raise ConfigError(f"{self.k} objects do not fit on {self.grid_w}x{self.grid_h}")
        self.library()


@dataclass
class SceneSplit:
    train_scenes: List[Scene]
    eval_scenes: List[Scene]

    def to_dict(self):
        return {"train": [list(s.object_ids) for s in self.train_scenes],
                "eval": [list(s.object_ids) for s in self.eval_scenes]}

    @classmethod
    def from_dict(cls, d):
        return cls([Scene(s) for s in d["train"]], [Scene(s) for s in d["eval"]])


def frequency_bounds(n_scenes: int, k: int, n: int, tol: float):
    """Integer count window for each object: uniform share +-tol, rounded
    outward so that small splits remain satisfiable."""
    e = n_scenes * k / n
    return int(np.floor(e * (1 - tol) + 1e-9)), int(np.ceil(e * (1 + tol) - 1e-9))


def object_counts(scenes: Sequence[Scene], n: int) -> np.ndarray:
    c = np.zeros(n, dtype=np.int64)
    for s in scenes:
        c[list(s.object_ids)] += 1
    return c


def _balanced(scenes, n, k, tol, require_cover):
    counts = object_counts(scenes, n)
    lo, hi = frequency_bounds(len(scenes), k, n, tol)
    if require_cover and counts.min() < 1:
        return False
    return bool(counts.min() >= lo and counts.max() <= hi)


def split_problems(split: SceneSplit, n: int, k: int, tol: float = 0.25) -> List[str]:
    """Empty list when the split satisfies every protocol rule."""
    out = []
    tr = {s.object_ids for s in split.train_scenes}
    ev = {s.object_ids for s in split.eval_scenes}
    if len(tr) != len(split.train_scenes) or len(ev) != len(split.eval_scenes):
        out.append("duplicate scenes within a split")
    if tr & ev:
        out.append(f"{len(tr & ev)} scenes appear in both splits")
    if object_counts(split.train_scenes, n).min() < 1:
        out.append("training scenes do not cover the library")
    for name, sc in (("train", split.train_scenes), ("eval", split.eval_scenes)):
        if any(s.k != k for s in sc):
            out.append(f"{name} scene of wrong size")
        if sc and not _balanced(sc, n, k, tol, False):
            out.append(f"{name} object frequencies outside +-{tol:.0%} of uniform")
    return out


def sample_scene_split(library: Library, k: int, n_train: int, n_eval: int, seed, tol: float = 0.25) -> SceneSplit:
    n = library.n
    if not 1 < k < n:
        raise ConfigError(f"need 1 < K < N, got K={k}, N={n}")
    total = binom(n, k)
    if n_train + n_eval > total:
        raise Infeasible(f"{n_train}+{n_eval} scenes requested but only C({n},{k})={total} exist")
    if n_train * k < n:
        raise Infeasible(f"{n_train} scenes of size {k} cannot cover {n} objects")
    rng = np.random.default_rng(seed)

    def draw(count, exclude):
        chosen = []
        seen = set(exclude)
        while len(chosen) < count:
            ids = tuple(sorted(int(i) for i in rng.choice(n, size=k, replace=False)))
            if ids not in seen:
                seen.add(ids)
                chosen.append(Scene(ids))
        return chosen

    for _ in range(MAX_ATTEMPTS):
        train = draw(n_train, ())
        if not _balanced(train, n, k, tol, True):
            continue
        for _ in range(20):
            ev = draw(n_eval, {s.object_ids for s in train})
            if n_eval == 0 or _balanced(ev, n, k, tol, False):
                return SceneSplit(train, ev)
    raise Infeasible(f"no split satisfied coverage and +-{tol:.0%} balance in {MAX_ATTEMPTS} attempts")


# ---------------------------------------------------------------- episodes

@dataclass
class Episode:
    scene: Scene
    seed: int
    observations: List[Observation]  # ep_len + 1
    actions: List[ActionId]  # ep_len
    moved: List[bool]

    def __len__(self):
        return len(self.actions)

    def __eq__(self, other):
        if not isinstance(other, Episode):
            return NotImplemented
        return (self.scene == other.scene and self.seed == other.seed and self.actions == other.actions
                and self.moved == other.moved and len(self.observations) == len(other.observations)
                and all(np.array_equal(a.slot_features, b.slot_features) and np.array_equal(a.slot_order, b.slot_order)
                        for a, b in zip(self.observations, other.observations)))


def run_episode(cfg: EnvConfig, library: Library, scene: Scene, ep_len: int, seed: int) -> Episode:
    rng = np.random.default_rng(seed)
    state = env.reset(library, scene, rng.integers(2 ** 63), cfg.grid_w, cfg.grid_h)
    obs = [env.observe(state, rng)]
    actions, moved = [], []
    ids = scene.object_ids
    for _ in range(ep_len):
        for attempt in range(MAX_RESAMPLES + 1):
            act = ActionId(int(ids[rng.integers(len(ids))]), int(rng.integers(env.N_PRIMITIVES)))
            nxt, mv = env.step(state, act)
            if mv:
                break
        state = nxt
        actions.append(act)
        moved.append(bool(mv))
        obs.append(env.observe(state, rng))
    return Episode(scene, int(seed), obs, actions, moved)


def episode_seeds(seed, n_episodes: int) -> List[int]:
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1, np.uint64)[0] >> np.uint64(1)) for c in ss.spawn(n_episodes)]


def generate_episodes(scenes: Sequence[Scene], cfg: EnvConfig, n_episodes: int, ep_len: int, seed) -> List[Episode]:
    """Random-policy episodes, scenes assigned round-robin. A blocked action
    is re-drawn up to MAX_RESAMPLES times before being accepted."""
    if not scenes:
        raise ConfigError("no scenes to generate episodes from")
    lib = cfg.library()
    for s in scenes:
        s.validate(lib)
    seeds = episode_seeds(seed, n_episodes)
    return [run_episode(cfg, lib, scenes[e % len(scenes)], ep_len, seeds[e]) for e in range(n_episodes)]


def positions_from_observation(obs: Observation, cfg: EnvConfig) -> Dict[int, tuple]:
    f = obs.slot_features
    rows = np.rint(f[:, -2] * cfg.grid_h).astype(int)
    cols = np.rint(f[:, -1] * cfg.grid_w).astype(int)
    return {int(o): (int(r), int(c)) for o, r, c in zip(obs.slot_order, rows, cols)}


def replay_problems(ep: Episode, cfg: EnvConfig, library: Optional[Library] = None) -> List[str]:
    """Re-run every recorded action under env.step and report mismatches."""
    lib = library or cfg.library()
    out = []
    pos = positions_from_observation(ep.observations[0], cfg)
    state = EnvState(lib, ep.scene, tuple(pos[i] for i in ep.scene.object_ids), cfg.grid_w, cfg.grid_h)
    for t, (act, mv) in enumerate(zip(ep.actions, ep.moved)):
        obs = ep.observations[t]
        if sorted(int(i) for i in obs.slot_order) != list(ep.scene.object_ids):
            out.append(f"step {t}: slot order is not a bijection onto the scene")
        expect = env.state_features(state)[[ep.scene.object_ids.index(int(o)) for o in obs.slot_order]]
        if not np.allclose(expect, obs.slot_features, atol=1e-12):
            out.append(f"step {t}: observation disagrees with replayed state")
            return out
        state, moved = env.step(state, act)
        if moved != mv:
            out.append(f"step {t}: recorded moved={mv} but replay gives {moved}")
    last = ep.observations[-1]
    expect = env.state_features(state)[[ep.scene.object_ids.index(int(o)) for o in last.slot_order]]
    if not np.allclose(expect, last.slot_features, atol=1e-12):
        out.append("final observation disagrees with replayed state")
    return out


def moved_fraction(episodes: Sequence[Episode]) -> float:
    flags = [m for ep in episodes for m in ep.moved]
    return float(np.mean(flags)) if flags else 1.0


def corpus_problems(episodes: Sequence[Episode], cfg: EnvConfig, min_moving: float = 0.9) -> List[str]:
    lib = cfg.library()
    out = []
    for i, ep in enumerate(episodes):
        if len(ep.observations) != len(ep.actions) + 1:
            out.append(f"episode {i}: {len(ep.observations)} observations for {len(ep.actions)} actions")
        out.extend(f"episode {i}: {p}" for p in replay_problems(ep, cfg, lib))
    frac = moved_fraction(episodes)
    if frac < min_moving:
        out.append(f"only {frac:.3f} of transitions move (need {min_moving})")
    return out


# ---------------------------------------------------------------- JSONL

def _episode_to_json(ep: Episode) -> dict:
    steps = []
    for t, obs in enumerate(ep.observations):
        rec = {"slots": obs.slot_features.tolist(), "order": [int(i) for i in obs.slot_order]}
        if t < len(ep.actions):
            rec["action"] = {"obj": ep.actions[t].object_id, "prim": ep.actions[t].primitive}
            rec["moved"] = ep.moved[t]
        else:
            rec["action"] = None
            rec["moved"] = None
        steps.append(rec)
    return {"scene": list(ep.scene.object_ids), "seed": ep.seed, "steps": steps}


def _episode_from_json(d: dict) -> Episode:
    obs, acts, moved = [], [], []
    steps = d["steps"]
    for t, rec in enumerate(steps):
        obs.append(Observation(np.asarray(rec["slots"], dtype=np.float64), np.asarray(rec["order"], dtype=np.int64)))
        if rec.get("action") is None:
            if t != len(steps) - 1:
                raise ValueError("only the final step may omit its action")
            continue
        acts.append(ActionId(int(rec["action"]["obj"]), int(rec["action"]["prim"])))
        moved.append(bool(rec["moved"]))
    return Episode(Scene(d["scene"]), int(d["seed"]), obs, acts, moved)


def _open(path, mode):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def write_jsonl(episodes: Sequence[Episode], path) -> None:
    try:
        with _open(path, "w") as fh:
            for ep in episodes:
                fh.write(json.dumps(_episode_to_json(ep), separators=(",", ":")))
                fh.write("\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def read_jsonl(path) -> List[Episode]:
    out = []
    try:
        with _open(path, "r") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    out.append(_episode_from_json(json.loads(line)))
                except (ValueError, KeyError, TypeError) as e:
                    raise ParseError(f"{path}: line {lineno}: {e}", line=lineno) from None
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    return out


# ---------------------------------------------------------------- arrays

@dataclass
class Corpus:
    """Episodes packed into arrays for the learners.

    feats (E, L+1, K, F); order (E, L+1, K); act_obj, act_prim, moved (E, L);
    scene (E,) indexes into scenes.
    """
    feats: np.ndarray
    order: np.ndarray
    act_obj: np.ndarray
    act_prim: np.ndarray
    moved: np.ndarray
    scene: np.ndarray
    scenes: List[Scene]
    n_objects: int

    @classmethod
    def from_episodes(cls, episodes: Sequence[Episode], n_objects: int) -> "Corpus":
        if not episodes:
            raise DataError("empty corpus")
        L = len(episodes[0])
        if any(len(ep) != L for ep in episodes):
            raise DataError("episodes of unequal length")
        scenes = sorted({ep.scene.object_ids for ep in episodes})
        sidx = {s: i for i, s in enumerate(scenes)}
        feats = np.stack([np.stack([o.slot_features for o in ep.observations]) for ep in episodes])
        order = np.stack([np.stack([o.slot_order for o in ep.observations]) for ep in episodes])
        act_obj = np.array([[a.object_id for a in ep.actions] for ep in episodes], dtype=np.int64)
        act_prim = np.array([[a.primitive for a in ep.actions] for ep in episodes], dtype=np.int64)
        moved = np.array([ep.moved for ep in episodes], dtype=bool)
        scene = np.array([sidx[ep.scene.object_ids] for ep in episodes], dtype=np.int64)
        return cls(feats, order, act_obj, act_prim, moved, scene, [Scene(s) for s in scenes], n_objects)

    @property
    def n_episodes(self):
        return self.feats.shape[0]

    @property
    def ep_len(self):
        return self.act_obj.shape[1]

    @property
    def k(self):
        return self.feats.shape[2]

    def transitions(self):
        """(episode, step) index arrays over all recorded transitions."""
        e, t = np.meshgrid(np.arange(self.n_episodes), np.arange(self.ep_len), indexing="ij")
        return e.reshape(-1), t.reshape(-1)
