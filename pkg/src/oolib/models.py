"""Common interface for the learned world models.

Every model maps an observation to a latent `rep`, steps it with an action,
and lifts it into a comparison space whose rows have a fixed meaning, so
that distances there do not depend on slot order. Training and evaluation
only use that interface.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Tuple

import numpy as np

from . import autodiff as ad
from . import env
from .autodiff import Tensor
from .errors import ConfigError


SLOT_ORDERS = ("appearance", "scene", "observed")


@dataclass
class Hyper:
    d_slot: int = 16
    d_att: int = 16
    hidden: int = 64
    margin: float = 1.0
    ridge: float = 1e-2
    neg_same_scene: float = 0.5
    # K-slot baselines: "appearance" sorts slots by (color, shape), "scene" applies a fixed
    # pseudo-random permutation per object set, "observed" keeps the given order
    slot_order: str = "appearance"
    edge_actions: bool = True
    flat_hidden: int = 256

    def replace(self, **kw) -> "Hyper":
        d = asdict(self)
        for k, v in kw.items():
            if k not in d:
                raise ConfigError(f"unknown hyperparameter {k!r}")
            d[k] = type(d[k])(v) if not isinstance(d[k], bool) else bool(v)
        h = Hyper(**d)
        h.validate()
        return h

    def validate(self):
        for f in ("d_slot", "d_att", "hidden", "flat_hidden"):
            if getattr(self, f) <= 0:
                raise ConfigError(f"{f} must be positive")
        if self.margin <= 0 or self.ridge <= 0:
            raise ConfigError("margin and ridge must be positive")
        if not 0.0 <= self.neg_same_scene <= 1.0:
            raise ConfigError("neg_same_scene must lie in [0, 1]")
        if self.slot_order not in SLOT_ORDERS:
            raise ConfigError(f"slot_order must be one of {SLOT_ORDERS}, got {self.slot_order!r}")

    def to_dict(self):
        return asdict(self)


def action_matrix(act_obj: np.ndarray, act_prim: np.ndarray, n: int) -> np.ndarray:
    """One-hot (B, N, 4) with a single 1 at (object, primitive)."""
    B = act_obj.shape[0]
    a = np.zeros((B, n, env.N_PRIMITIVES))
    a[np.arange(B), act_obj, act_prim] = 1.0
    return a


def energy(a: Tensor, b: Tensor) -> Tensor:
    """Per-sample squared distance summed over features, averaged over rows."""
    return ad.mean(ad.squared_distance(a, b, axis=-1), axis=-1)


def contrastive_loss(pred: Tensor, target: Tensor, neg: Tensor, margin: float) -> Tensor:
    """mean over rows and batch of ||pred - target||^2 plus the hinge
    mean(max(0, margin - ||neg - target||^2))."""
    pos = ad.mean(energy(pred, target))
    hinge = ad.mean(ad.max0(ad.add_scalar(ad.scale(energy(neg, target), -1.0), margin)))
    return ad.add(pos, hinge)


class WorldModel:
    kind = "base"
    binds = False

    def __init__(self, n_objects: int, k: int, feat_dim: int, hyper: Hyper = None, seed: int = 0):
        self.n = int(n_objects)
        self.k = int(k)
        self.feat_dim = int(feat_dim)
        self.hyper = hyper or Hyper()
        self.hyper.validate()
        self.params: Dict[str, Tensor] = {}
        self.init_params(np.random.default_rng(seed))

    # model-specific pieces -------------------------------------------------
    def init_params(self, rng):
        raise NotImplementedError

    def encode(self, feats: np.ndarray, order: np.ndarray):
        """-> (rep Tensor, ctx) for a batch of observations."""
        raise NotImplementedError

    def step(self, rep: Tensor, act_obj: np.ndarray, act_prim: np.ndarray, ctx) -> Tensor:
        raise NotImplementedError

    def lift(self, rep: Tensor, ctx) -> Tensor:
        return rep

    # shared ---------------------------------------------------------------
    def loss(self, batch: dict) -> Tensor:
        z, ctx = self.encode(batch["f_t"], batch["o_t"])
        z1, ctx1 = self.encode(batch["f_1"], batch["o_1"])
        zn, ctxn = self.encode(batch["f_n"], batch["o_n"])
        pred = self.step(z, batch["a_obj"], batch["a_prim"], ctx)
        return contrastive_loss(self.lift(pred, ctx), self.lift(z1, ctx1), self.lift(zn, ctxn), self.hyper.margin)

    def embed(self, feats, order) -> np.ndarray:
        z, ctx = self.encode(feats, order)
        return self.lift(z, ctx).data

    def rollout(self, feats, order, act_obj: np.ndarray, act_prim: np.ndarray) -> np.ndarray:
        """Predictions after each of h actions, shape (B, h, R, D). Only the
        first observation is consumed."""
        z, ctx = self.encode(feats, order)
        out = []
        for j in range(act_obj.shape[1]):
            z = self.step(z, act_obj[:, j], act_prim[:, j], ctx)
            out.append(self.lift(z, ctx).data)
        return np.stack(out, axis=1)

    def arrays(self) -> Dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]):
        missing = set(self.params) ^ set(arrays)
        if missing:
            raise ConfigError(f"checkpoint tensors do not match model: {sorted(missing)}")
        for k, v in arrays.items():
            if v.shape != self.params[k].data.shape:
                raise ConfigError(f"tensor {k}: checkpoint shape {v.shape} vs model {self.params[k].data.shape}")
            self.params[k].data = np.array(v, dtype=np.float64)

    def describe(self) -> dict:
        return {"kind": self.kind, "N": self.n, "K": self.k, "feat_dim": self.feat_dim,
                "hyper": self.hyper.to_dict()}
