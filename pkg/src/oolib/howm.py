"""Slot world model with learned action binding.

Observations arrive as K feature rows in arbitrary order. The model embeds
them (plus one learned background row), lets every library object attend
over the K+1 slots to form the binding matrix M (K+1, N), routes the action
through M into slot space, steps a slot-permutation-equivariant GNN, and
compares states after lifting them to N object rows with the ridge
pseudoinverse of M. The lift is treated as a constant, so learning signal
reaches the attention only through the routed action.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from . import autodiff as ad
from . import env, nets
from .autodiff import Tensor
from .errors import SingularSystem
from .models import Hyper, WorldModel, action_matrix

PIVOT_TOL = 1e-300


def solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve A X = B for batches of square systems, Gaussian elimination
    with partial pivoting. A (..., n, n), B (..., n, m)."""
    A = np.array(A, dtype=np.float64)
    X = np.array(B, dtype=np.float64)
    lead = A.shape[:-2]
    n = A.shape[-1]
    A = A.reshape(-1, n, n)
    X = X.reshape(-1, n, X.shape[-1])
    idx = np.arange(A.shape[0])
    for c in range(n):
        p = c + np.argmax(np.abs(A[:, c:, c]), axis=1)
        piv = A[idx, p, c]
        if np.any(np.abs(piv) <= PIVOT_TOL) or not np.all(np.isfinite(piv)):
            raise SingularSystem("ridged system is numerically singular")
        # swap rows c and p
        rc, rp = A[idx, c].copy(), A[idx, p].copy()
        A[idx, c], A[idx, p] = rp, rc
        xc, xp = X[idx, c].copy(), X[idx, p].copy()
        X[idx, c], X[idx, p] = xp, xc
        f = A[:, c + 1:, c] / A[:, c, c][:, None]
        A[:, c + 1:, c:] -= f[:, :, None] * A[:, c, c:][:, None, :]
        X[:, c + 1:] -= f[:, :, None] * X[:, c][:, None, :]
    for c in range(n - 1, -1, -1):
        X[:, c] -= np.einsum("bj,bjm->bm", A[:, c, c + 1:], X[:, c + 1:])
        X[:, c] /= A[:, c, c][:, None]
    return X.reshape(lead + (n, X.shape[-1]))


def pseudoinverse(M: np.ndarray, ridge: float = 1e-6) -> np.ndarray:
    """M+ = M^T (M M^T + ridge I)^-1 for M (..., R, N); returns (..., N, R)."""
    R = M.shape[-2]
    A = M @ np.swapaxes(M, -1, -2) + ridge * np.eye(R)
    # A is symmetric, so (A^-1 M)^T = M^T A^-1
    return np.swapaxes(solve(A, M), -1, -2)


class HOWM(WorldModel):
    kind = "howm"
    binds = True
    _frozen = None
    _frozen_i = 0

    def init_params(self, rng):
        h = self.hyper
        p = self.params
        nets.init_encoder(p, rng, "enc", self.feat_dim, h.d_slot, h.hidden)
        p["background"] = Tensor(rng.normal(0.0, 1.0, size=h.d_slot), requires_grad=True)
        p["key_w"] = Tensor(rng.normal(0.0, 1.0, size=(self.n, h.d_att)), requires_grad=True)
        p["query_w"] = Tensor(rng.uniform(-1, 1, size=(h.d_slot, h.d_att)) / np.sqrt(h.d_slot), requires_grad=True)
        nets.init_gnn(p, rng, h.d_slot, env.N_PRIMITIVES, h.hidden)

    # pipeline stages ------------------------------------------------------
    def encode_slots(self, feats: np.ndarray) -> Tensor:
        """(B, K, F) -> (B, K+1, D); row K is the background embedding."""
        B = feats.shape[0]
        rows = nets.encoder(Tensor(feats), self.params, "enc")
        bg = ad.expand(ad.expand(self.params["background"], 0, 1), 0, B)
        return ad.concat([rows, bg], axis=1)

    def action_attention(self, s: Tensor) -> Tensor:
        """Binding matrix (B, K+1, N); each column is a softmax over slots."""
        B = s.shape[0]
        q = ad.linear(s, self.params["query_w"])  # (B, K+1, D_att)
        keys = ad.expand(self.params["key_w"], 0, B)  # (B, N, D_att)
        logits = ad.scale(ad.matmul(keys, ad.swap_last(q)), 1.0 / np.sqrt(self.hyper.d_att))
        return ad.swap_last(ad.softmax(logits, axis=-1))

    @staticmethod
    def bind_actions(M: Tensor, a_mat: np.ndarray) -> Tensor:
        return ad.matmul(M, Tensor(a_mat))

    def pinv(self, M: Tensor) -> np.ndarray:
        if self._frozen is None:
            return pseudoinverse(M.data, self.hyper.ridge)
        if self._frozen_i == len(self._frozen):
            self._frozen.append(pseudoinverse(M.data, self.hyper.ridge))
        out = self._frozen[self._frozen_i]
        self._frozen_i += 1
        return out

    @contextmanager
    def frozen_lifts(self):
        """Inside this block the pseudoinverses computed by the first loss
        evaluation are replayed by later ones, so the loss becomes a function
        of the parameters with every lift held fixed."""
        self._frozen, self._frozen_i = [], 0
        try:
            yield self
        finally:
            self._frozen = None

    def loss(self, batch):
        self._frozen_i = 0
        return super().loss(batch)

    @staticmethod
    def lift_with(Mp: np.ndarray, s: Tensor) -> Tensor:
        return ad.matmul(Tensor(Mp), s)

    def transition(self, s: Tensor, a_bar: Tensor) -> Tensor:
        return nets.gnn(s, a_bar, self.params)

    # WorldModel interface -------------------------------------------------
    def encode(self, feats, order=None):
        s = self.encode_slots(feats)
        M = self.action_attention(s)
        return s, (M, self.pinv(M))

    def step(self, rep, act_obj, act_prim, ctx):
        M, _ = ctx
        return self.transition(rep, self.bind_actions(M, action_matrix(act_obj, act_prim, self.n)))

    def lift(self, rep, ctx):
        return self.lift_with(ctx[1], rep)

    def binding(self, feats) -> np.ndarray:
        return self.action_attention(self.encode_slots(feats)).data


def aligned_contrastive_loss(model: HOWM, batch: dict) -> Tensor:
    return model.loss(batch)
