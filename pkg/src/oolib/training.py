"""Minibatch Adam training shared by HOWM and the baselines."""
from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from . import env
from .autodiff import Tape
from .baselines import ExactSigmaN, FlatMlp, SigmaKCopyAll, SigmaKNoBind
from .datagen import Corpus
from .errors import ConfigError, NonFiniteLoss
from .evaluation import hits_at_1, mean_reciprocal_rank, score_horizon
from .howm import HOWM
from .models import Hyper, WorldModel
from .optim import Adam

MODEL_KINDS = {cls.kind: cls for cls in (HOWM, ExactSigmaN, SigmaKNoBind, SigmaKCopyAll, FlatMlp)}


def make_model(kind: str, n: int, k: int, hyper: Hyper = None, seed: int = 0,
               feat_dim: int = None) -> WorldModel:
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; choose from {sorted(MODEL_KINDS)}")
    return MODEL_KINDS[kind](n, k, feat_dim or env.feature_dim(), hyper or Hyper(), seed)


@dataclass
class TrainConfig:
    epochs: int = 60
    batch: int = 64
    lr: float = 5e-4
    seed: int = 0
    mrr_queries: int = 500

    def validate(self):
        if self.epochs < 0 or self.batch < 1 or self.lr <= 0 or self.mrr_queries < 1:
            raise ConfigError(f"invalid training config {self}")


@dataclass
class TrainLog:
    epochs: List[int] = field(default_factory=list)
    loss: List[float] = field(default_factory=list)
    train_mrr_1step: List[float] = field(default_factory=list)
    seconds: float = 0.0

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "train_mrr_1step"])
            for row in zip(self.epochs, self.loss, self.train_mrr_1step):
                w.writerow(row)


class NegativeSampler:
    """Negatives are observations from random steps of random episodes,
    with probability p_same restricted to the positive's scene."""

    def __init__(self, corpus: Corpus, p_same: float):
        self.corpus = corpus
        self.p_same = p_same
        self.by_scene = [np.nonzero(corpus.scene == s)[0] for s in range(len(corpus.scenes))]
        self.others = [np.nonzero(corpus.scene != s)[0] for s in range(len(corpus.scenes))]

    def sample(self, episodes: np.ndarray, rng) -> tuple:
        c = self.corpus
        same = rng.random(len(episodes)) < self.p_same
        out = np.empty(len(episodes), dtype=np.int64)
        for i, e in enumerate(episodes):
            s = c.scene[e]
            pool = self.by_scene[s] if (same[i] or len(self.others[s]) == 0) else self.others[s]
            out[i] = pool[rng.integers(len(pool))]
        steps = rng.integers(c.ep_len + 1, size=len(episodes))
        return out, steps


def make_batch(corpus: Corpus, e: np.ndarray, t: np.ndarray, ne: np.ndarray, nt: np.ndarray) -> dict:
    return {
        "f_t": corpus.feats[e, t], "o_t": corpus.order[e, t],
        "f_1": corpus.feats[e, t + 1], "o_1": corpus.order[e, t + 1],
        "f_n": corpus.feats[ne, nt], "o_n": corpus.order[ne, nt],
        "a_obj": corpus.act_obj[e, t], "a_prim": corpus.act_prim[e, t],
    }


def train_mrr(model, corpus: Corpus, queries: int, seed: int) -> float:
    ranks, _ = score_horizon(model, corpus, 1, cap=queries, seed=seed)
    return mean_reciprocal_rank(ranks)


def train(model: WorldModel, corpus: Corpus, cfg: TrainConfig,
          on_epoch: Optional[Callable[[int, float, float], None]] = None, log_mrr: bool = True) -> TrainLog:
    """Deterministic given cfg.seed and the model's initial parameters."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, lr=cfg.lr)
    sampler = NegativeSampler(corpus, model.hyper.neg_same_scene)
    all_e, all_t = corpus.transitions()
    log = TrainLog()
    start = time.time()
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(len(all_e))
        total, count = 0.0, 0
        for lo in range(0, len(perm), cfg.batch):
            idx = perm[lo:lo + cfg.batch]
            e, t = all_e[idx], all_t[idx]
            ne, nt = sampler.sample(e, rng)
            batch = make_batch(corpus, e, t, ne, nt)
            with Tape() as tape:
                loss = model.loss(batch)
            value = float(loss.data)
            if not np.isfinite(value):
                raise NonFiniteLoss(f"{model.kind}: non-finite loss at epoch {epoch}, batch starting {lo}")
            opt.step(tape.backward(loss, model.params))
            total += value * len(idx)
            count += len(idx)
        mrr = train_mrr(model, corpus, cfg.mrr_queries, cfg.seed) if log_mrr else float("nan")
        log.epochs.append(epoch)
        log.loss.append(total / count)
        log.train_mrr_1step.append(mrr)
        if on_epoch is not None:
            on_epoch(epoch, total / count, mrr)
    log.seconds = time.time() - start
    return log
