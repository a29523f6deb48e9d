"""Comparison models sharing the loss, training loop and evaluation of HOWM.

ExactSigmaN   rows fixed by object id (oracle order), N-node GNN.
SigmaKNoBind  K slots, the scene's K action factors sorted by id attached by
              slot position, so the action need not belong to the slot.
SigmaKCopyAll K slots, the full 4N action attached to every slot.
FlatMlp       flat MLP encoder and transition, no weight sharing.
"""
from __future__ import annotations

import hashlib
from enum import Enum

import numpy as np

from . import autodiff as ad
from . import env, nets
from .autodiff import Tensor
from .errors import ConfigError
from .models import WorldModel, action_matrix


class BaselineKind(str, Enum):
    EXACT_SIGMA_N = "exact_sigma_n"
    SIGMA_K_NOBIND = "sigma_k_nobind"
    SIGMA_K_COPYALL = "sigma_k_copyall"
    FLAT_MLP = "flat_mlp"


def appearance_order(feats: np.ndarray) -> np.ndarray:
    """Per-sample slot permutation sorting rows by (color, shape) one-hots.

    This is a stand-in for an extractor that always assigns the same object
    to the same slot; it is unrelated to object ids.
    """
    shape = np.argmax(feats[..., :env.N_SHAPES], axis=-1)
    color = np.argmax(feats[..., env.N_SHAPES:env.N_SHAPES + env.N_COLORS], axis=-1)
    return np.argsort(color * env.N_SHAPES + shape, axis=-1, kind="stable")


def scene_order(feats: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Slot permutation that is fixed for a given object set but unrelated
    across sets: appearance order followed by a permutation seeded by the
    set's ids. Models an extractor whose slot assignment depends on context."""
    base = appearance_order(feats)
    out = np.empty_like(base)
    cache = {}
    for b in range(len(order)):
        key = tuple(sorted(int(i) for i in order[b]))
        if key not in cache:
            seed = int.from_bytes(hashlib.sha256(repr(key).encode()).digest()[:8], "little")
            cache[key] = np.random.default_rng(seed).permutation(len(key))
        out[b] = base[b][cache[key]]
    return out


def gather_rows(x: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """x (B, K, F) reordered per sample by perm (B, K)."""
    return np.take_along_axis(x, perm[..., None], axis=-2)


class ExactSigmaN(WorldModel):
    """Row i always holds object i; absent rows are zero features."""
    kind = BaselineKind.EXACT_SIGMA_N.value

    def init_params(self, rng):
        h = self.hyper
        nets.init_encoder(self.params, rng, "enc", self.feat_dim, h.d_slot, h.hidden)
        nets.init_gnn(self.params, rng, h.d_slot, env.N_PRIMITIVES, h.hidden)

    def place(self, feats: np.ndarray, order: np.ndarray) -> np.ndarray:
        B, K, F = feats.shape
        x = np.zeros((B, self.n, F))
        x[np.arange(B)[:, None], order] = feats
        return x

    def encode(self, feats, order):
        return nets.encoder(Tensor(self.place(feats, order)), self.params, "enc"), None

    def step(self, rep, act_obj, act_prim, ctx):
        return nets.gnn(rep, Tensor(action_matrix(act_obj, act_prim, self.n)), self.params)


class _SlotBaseline(WorldModel):
    """K-slot model; rows follow the extractor order chosen by hyper.slot_order."""
    act_dim = env.N_PRIMITIVES

    def init_params(self, rng):
        h = self.hyper
        nets.init_encoder(self.params, rng, "enc", self.feat_dim, h.d_slot, h.hidden)
        nets.init_gnn(self.params, rng, h.d_slot, self.act_dim, h.hidden, edge_act=h.edge_actions)

    def slot_perm(self, feats, order):
        if self.hyper.slot_order == "appearance":
            return appearance_order(feats)
        if self.hyper.slot_order == "scene":
            return scene_order(feats, order)
        return np.broadcast_to(np.arange(feats.shape[1]), feats.shape[:2])

    def encode(self, feats, order):
        perm = self.slot_perm(feats, order)
        x = gather_rows(feats, perm)
        ids = np.take_along_axis(order, perm, axis=-1)
        return nets.encoder(Tensor(x), self.params, "enc"), ids

    def slot_actions(self, act_obj, act_prim, ids) -> np.ndarray:
        raise NotImplementedError

    def step(self, rep, act_obj, act_prim, ids):
        a = Tensor(self.slot_actions(act_obj, act_prim, ids))
        return nets.gnn(rep, a, self.params, edge_act=self.hyper.edge_actions)


class SigmaKNoBind(_SlotBaseline):
    kind = BaselineKind.SIGMA_K_NOBIND.value

    def slot_actions(self, act_obj, act_prim, ids):
        # factor j belongs to the j-th smallest present id, whatever slot j holds
        B, K = ids.shape
        ranked = np.sort(ids, axis=-1)
        a = np.zeros((B, K, env.N_PRIMITIVES))
        j = np.argmax(ranked == act_obj[:, None], axis=-1)
        a[np.arange(B), j, act_prim] = 1.0
        return a


class SigmaKCopyAll(_SlotBaseline):
    kind = BaselineKind.SIGMA_K_COPYALL.value

    @property
    def act_dim(self):
        return env.N_PRIMITIVES * self.n

    def slot_actions(self, act_obj, act_prim, ids):
        B, K = ids.shape
        flat = action_matrix(act_obj, act_prim, self.n).reshape(B, -1)
        return np.repeat(flat[:, None, :], K, axis=1)


class FlatMlp(WorldModel):
    """Slots concatenated in the given order; outputs an N-row latent."""
    kind = BaselineKind.FLAT_MLP.value

    def init_params(self, rng):
        h = self.hyper
        H = h.flat_hidden
        nets.init_encoder(self.params, rng, "enc", self.k * self.feat_dim, self.n * h.d_slot, H)
        nets.init_linear(self.params, rng, "tr1", self.n * h.d_slot + env.N_PRIMITIVES * self.n, H)
        nets.init_linear(self.params, rng, "tr2", H, H)
        nets.init_linear(self.params, rng, "tr3", H, self.n * h.d_slot)

    def encode(self, feats, order):
        B = feats.shape[0]
        z = nets.encoder(Tensor(feats.reshape(B, -1)), self.params, "enc")
        return z, None

    def step(self, rep, act_obj, act_prim, ctx):
        B = rep.shape[0]
        a = Tensor(action_matrix(act_obj, act_prim, self.n).reshape(B, -1))
        h = ad.relu(nets.dense(ad.concat([rep, a], axis=-1), self.params, "tr1"))
        h = ad.relu(nets.dense(h, self.params, "tr2"))
        return ad.add(rep, nets.dense(h, self.params, "tr3"))

    def lift(self, rep, ctx):
        return ad.reshape(rep, (rep.shape[0], self.n, self.hyper.d_slot))


def exact_sigma_n_forward(model: ExactSigmaN, feats, order, act_obj, act_prim) -> np.ndarray:
    return model.rollout(feats, order, act_obj[:, None], act_prim[:, None])[:, 0]


def sigma_k_nobind_forward(model: SigmaKNoBind, feats, order, act_obj, act_prim) -> np.ndarray:
    return model.rollout(feats, order, act_obj[:, None], act_prim[:, None])[:, 0]


def sigma_k_copyall_forward(model: SigmaKCopyAll, feats, order, act_obj, act_prim) -> np.ndarray:
    return model.rollout(feats, order, act_obj[:, None], act_prim[:, None])[:, 0]


def flat_mlp_forward(model: FlatMlp, feats, order, act_obj, act_prim) -> np.ndarray:
    return model.rollout(feats, order, act_obj[:, None], act_prim[:, None])[:, 0]
