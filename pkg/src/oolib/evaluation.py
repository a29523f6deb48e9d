"""Ranking evaluation of latent dynamics.

For a query (episode e, step t) and horizon h the model rolls the recorded
actions forward from observation t, and the prediction is ranked against
the embedded h-step-ahead observations of a reference set. The candidate
list starts with the query's own target, then the reference rows, so a
duplicate state ties in the target's favour; rank = 1 + number of
candidates strictly closer than the target.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import env
from .datagen import Corpus, positions_from_observation
from .env import Observation
from .errors import NotABindingModel, TargetMissing

DEFAULT_CAP = 2000
BATCH = 500


def rank_query(pred: np.ndarray, references: np.ndarray, target_index: int) -> int:
    """1-based rank of references[target_index] by squared distance to pred.

    Candidates are ordered stably, that is by index, with the target moved
    to the front, so ties resolve in its favour.
    """
    if not 0 <= target_index < len(references):
        raise TargetMissing(f"target index {target_index} not in reference set of size {len(references)}")
    d = np.sum((references - pred[None]) ** 2, axis=tuple(range(1, references.ndim)))
    dt = d[target_index]
    return int(1 + np.sum(np.delete(d, target_index) < dt))


def hits_at_1(ranks: Sequence[int]) -> float:
    ranks = np.asarray(ranks)
    return float(np.mean(ranks == 1))


def mean_reciprocal_rank(ranks: Sequence[int]) -> float:
    ranks = np.asarray(ranks, dtype=np.float64)
    return float(np.mean(1.0 / ranks))


def ranks_against(preds: np.ndarray, refs: np.ndarray, target_idx: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Vectorised rank_query for many predictions against one set."""
    P = preds.reshape(len(preds), -1)
    R = refs.reshape(len(refs), -1)
    rn = np.sum(R * R, axis=1)
    out = np.empty(len(P), dtype=np.int64)
    for lo in range(0, len(P), chunk):
        p = P[lo:lo + chunk]
        d = np.sum(p * p, axis=1)[:, None] + rn[None] - 2.0 * p @ R.T
        ti = target_idx[lo:lo + chunk]
        dt = d[np.arange(len(p)), ti]
        closer = d < dt[:, None]
        closer[np.arange(len(p)), ti] = False
        out[lo:lo + chunk] = 1 + closer.sum(axis=1)
    return out


@dataclass
class ReferenceSet:
    episodes: np.ndarray
    steps: np.ndarray  # query steps; targets sit at steps + horizon
    horizon: int
    scene_counts: Dict[str, int]
    embeddings: Optional[np.ndarray] = None


def build_reference_set(corpus: Corpus, horizon: int, cap: int = DEFAULT_CAP, seed: int = 0) -> ReferenceSet:
    """All (episode, step) pairs with a target h steps ahead, subsampled to
    at most `cap` with an equal share per scene."""
    L = corpus.ep_len
    if not 1 <= horizon <= L:
        raise ValueError(f"horizon {horizon} outside 1..{L}")
    rng = np.random.default_rng(seed)
    steps = np.arange(L - horizon + 1)
    n_sc = len(corpus.scenes)
    per = [cap // n_sc + (1 if i < cap % n_sc else 0) for i in range(n_sc)]
    eps, sts, counts = [], [], {}
    for si in range(n_sc):
        ep_ids = np.nonzero(corpus.scene == si)[0]
        cand_e = np.repeat(ep_ids, len(steps))
        cand_t = np.tile(steps, len(ep_ids))
        take = min(per[si], len(cand_e))
        pick = np.sort(rng.choice(len(cand_e), size=take, replace=False)) if take < len(cand_e) else np.arange(len(cand_e))
        eps.append(cand_e[pick])
        sts.append(cand_t[pick])
        counts[",".join(map(str, corpus.scenes[si].object_ids))] = int(take)
    return ReferenceSet(np.concatenate(eps), np.concatenate(sts), horizon, counts)


def predict_horizon(model, corpus: Corpus, episodes: np.ndarray, steps: np.ndarray, h: int) -> np.ndarray:
    out = []
    for lo in range(0, len(episodes), BATCH):
        e, t = episodes[lo:lo + BATCH], steps[lo:lo + BATCH]
        span = t[:, None] + np.arange(h)[None]
        pred = model.rollout(corpus.feats[e, t], corpus.order[e, t],
                             corpus.act_obj[e[:, None], span], corpus.act_prim[e[:, None], span])
        out.append(pred[:, -1])
    return np.concatenate(out)


def embed_states(model, corpus: Corpus, episodes: np.ndarray, steps: np.ndarray) -> np.ndarray:
    out = []
    for lo in range(0, len(episodes), BATCH):
        e, t = episodes[lo:lo + BATCH], steps[lo:lo + BATCH]
        out.append(model.embed(corpus.feats[e, t], corpus.order[e, t]))
    return np.concatenate(out)


def score_horizon(model, corpus: Corpus, horizon: int, cap: int = DEFAULT_CAP, seed: int = 0):
    """-> (ranks, reference set) for one horizon."""
    ref = build_reference_set(corpus, horizon, cap, seed)
    ref.embeddings = embed_states(model, corpus, ref.episodes, ref.steps + horizon)
    preds = predict_horizon(model, corpus, ref.episodes, ref.steps, horizon)
    ranks = ranks_against(preds, ref.embeddings, np.arange(len(preds)))
    return ranks, ref


@dataclass
class MetricsReport:
    method: str
    n: int
    k: int
    # rows[(split, horizon)] = {"h@1": ..., "mrr": ..., "queries": ...}
    rows: Dict[tuple, dict] = field(default_factory=dict)
    composition: Dict[str, dict] = field(default_factory=dict)
    binding: Dict[str, float] = field(default_factory=dict)

    def get(self, split: str, horizon: int, metric: str = "mrr") -> float:
        return self.rows[(split, horizon)][metric]

    def gap(self, horizon: int, metric: str = "mrr") -> float:
        return self.get("train", horizon, metric) - self.get("eval", horizon, metric)

    def table(self) -> List[dict]:
        out = []
        for (split, h), r in sorted(self.rows.items(), key=lambda kv: (kv[0][1], kv[0][0] != "train")):
            gap = ""
            if ("train", h) in self.rows and ("eval", h) in self.rows:
                gap = self.gap(h)
            out.append({"method": self.method, "N": self.n, "K": self.k, "horizon": h, "split": split,
                        "h@1": r["h@1"], "mrr": r["mrr"], "gap": gap})
        return out

    def write_csv(self, path):
        cols = ["method", "N", "K", "horizon", "split", "h@1", "mrr", "gap"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            for row in self.table():
                w.writerow(row)

    def to_json(self) -> dict:
        return {"method": self.method, "N": self.n, "K": self.k, "rows": self.table(),
                "reference_composition": self.composition, "binding_accuracy": self.binding}


def evaluate(model, splits: Dict[str, Corpus], horizons=(1, 5, 10), cap: int = DEFAULT_CAP, seed: int = 0,
             method: Optional[str] = None) -> MetricsReport:
    """Score every split at every horizon that fits in its episodes."""
    rep = MetricsReport(method or model.kind, model.n, model.k)
    for split, corpus in splits.items():
        for h in horizons:
            if h > corpus.ep_len:
                continue
            ranks, ref = score_horizon(model, corpus, h, cap, seed)
            rep.rows[(split, h)] = {"h@1": hits_at_1(ranks), "mrr": mean_reciprocal_rank(ranks),
                                   "queries": int(len(ranks))}
            rep.composition[f"{split}@{h}"] = ref.scene_counts
        if getattr(model, "binds", False):
            rep.binding[split] = binding_accuracy(model, corpus, cap, seed)
    return rep


class OracleModel:
    """Simulator-backed stand-in for a model: embeds an observation as its
    features placed in N rows by object id and rolls out with env.step, so
    its predictions are the exact future states."""
    kind = "oracle"

    def __init__(self, cfg, k: int):
        self.cfg = cfg
        self.library = cfg.library()
        self.n, self.k = cfg.n, k

    def _place(self, feats, order):
        out = np.zeros((feats.shape[0], self.n, feats.shape[-1]))
        out[np.arange(feats.shape[0])[:, None], order] = feats
        return out

    def embed(self, feats, order):
        return self._place(feats, order)

    def rollout(self, feats, order, act_obj, act_prim):
        h = act_obj.shape[1]
        out = np.zeros((len(feats), h, self.n, feats.shape[-1]))
        for b in range(len(feats)):
            ids = np.sort(order[b])
            pos = positions_from_observation(Observation(feats[b], order[b]), self.cfg)
            state = env.EnvState(self.library, env.Scene(ids), tuple(pos[int(i)] for i in ids),
                                 self.cfg.grid_w, self.cfg.grid_h)
            for j in range(h):
                state, _ = env.step(state, env.ActionId(int(act_obj[b, j]), int(act_prim[b, j])))
                out[b, j, ids] = env.state_features(state)
        return out


def argmax_random_ties(x: np.ndarray, rng) -> np.ndarray:
    """Row-wise argmax over the last axis, exact ties broken uniformly."""
    top = x == np.max(x, axis=-1, keepdims=True)
    noise = rng.random(x.shape)
    return np.argmax(np.where(top, noise, -1.0), axis=-1)


def binding_accuracy(model, corpus: Corpus, max_transitions: Optional[int] = None, seed: int = 0) -> float:
    """Fraction of moving transitions whose actor's column of M peaks at
    the slot that holds the actor. Exact ties are broken at random."""
    if not getattr(model, "binds", False):
        raise NotABindingModel(f"{getattr(model, 'kind', type(model).__name__)} has no binding matrix")
    rng = np.random.default_rng(seed)
    e, t = corpus.transitions()
    keep = corpus.moved[e, t]
    e, t = e[keep], t[keep]
    if max_transitions is not None and len(e) > max_transitions:
        pick = np.sort(rng.choice(len(e), size=max_transitions, replace=False))
        e, t = e[pick], t[pick]
    hits = 0
    for lo in range(0, len(e), BATCH):
        ee, tt = e[lo:lo + BATCH], t[lo:lo + BATCH]
        M = model.binding(corpus.feats[ee, tt])  # (B, K+1, N)
        obj = corpus.act_obj[ee, tt]
        col = M[np.arange(len(ee)), :, obj]
        truth = np.argmax(corpus.order[ee, tt] == obj[:, None], axis=1)
        hits += int(np.sum(argmax_random_ties(col, rng) == truth))
    return hits / max(len(e), 1)


def binding_accuracy_from_matrices(M: np.ndarray, obj: np.ndarray, order: np.ndarray, seed: int = 0) -> float:
    col = M[np.arange(len(obj)), :, obj]
    truth = np.argmax(order == obj[:, None], axis=1)
    return float(np.mean(argmax_random_ties(col, np.random.default_rng(seed)) == truth))
