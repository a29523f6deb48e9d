"""Layers shared by the world models: MLPs, the slot encoder and a fully
connected message-passing transition over a set of rows."""
from __future__ import annotations

from typing import Dict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

HIDDEN = 64


def init_linear(params: Dict[str, Tensor], rng, name: str, fan_in: int, fan_out: int, bias=True):
    bound = 1.0 / np.sqrt(fan_in)
    params[name + "_w"] = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True)
    if bias:
        params[name + "_b"] = Tensor(rng.uniform(-bound, bound, size=fan_out), requires_grad=True)


def dense(x: Tensor, params, name: str) -> Tensor:
    return ad.affine(x, params[name + "_w"], params[name + "_b"])


def init_encoder(params, rng, prefix: str, d_in: int, d_out: int, hidden=HIDDEN):
    init_linear(params, rng, prefix + "1", d_in, hidden)
    init_linear(params, rng, prefix + "2", hidden, d_out)


def encoder(x: Tensor, params, prefix: str) -> Tensor:
    """Two-layer per-row network: affine, layernorm, relu, affine."""
    h = ad.relu(ad.layernorm(dense(x, params, prefix + "1")))
    return dense(h, params, prefix + "2")


def pair_selectors(n: int):
    """0/1 matrices picking row i and row j for every ordered pair i != j,
    ordered by i then j."""
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    si = np.zeros((len(pairs), n))
    sj = np.zeros((len(pairs), n))
    for p, (i, j) in enumerate(pairs):
        si[p, i] = 1.0
        sj[p, j] = 1.0
    return si, sj


_SELECTORS = {}


def _selectors(n):
    if n not in _SELECTORS:
        _SELECTORS[n] = pair_selectors(n)
    return _SELECTORS[n]


def init_gnn(params, rng, d: int, d_act: int, hidden=HIDDEN, prefix="gnn_", edge_act=False):
    """Edge net sees [s_i | s_j] (plus both attached actions when edge_act),
    node net sees [s_i | a_i | sum_j msg_ij]."""
    d_edge = 2 * d + (2 * d_act if edge_act else 0)
    bound = 1.0 / np.sqrt(d_edge)
    half = d + (d_act if edge_act else 0)
    params[prefix + "edge1a_w"] = Tensor(rng.uniform(-bound, bound, size=(half, hidden)), requires_grad=True)
    params[prefix + "edge1b_w"] = Tensor(rng.uniform(-bound, bound, size=(half, hidden)), requires_grad=True)
    params[prefix + "edge1_b"] = Tensor(rng.uniform(-bound, bound, size=hidden), requires_grad=True)
    init_linear(params, rng, prefix + "edge2", hidden, d)
    init_linear(params, rng, prefix + "node1", d + d_act + d, hidden)
    init_linear(params, rng, prefix + "node2", hidden, d)


def gnn(s: Tensor, a: Tensor, params, prefix="gnn_", edge_act=False) -> Tensor:
    """Residual message-passing step over all rows of s (B, R, D).

    msg_i = sum_{j != i} edge([s_i | s_j]); out_i = s_i + node([s_i | a_i | msg_i]).
    The first edge layer is split as W [x_i | x_j] = x_i Wa + x_j Wb, and the
    sum over j is taken before the (linear) second edge layer, which gives
    the same result with fewer flops.
    """
    B, R, D = s.shape
    si, sj = _selectors(R)
    x = ad.concat([s, a], axis=-1) if edge_act else s
    u = ad.linear(x, params[prefix + "edge1a_w"])
    v = ad.linear(x, params[prefix + "edge1b_w"])
    h = ad.relu(ad.add_bias(ad.add(ad.select_rows(si, u), ad.select_rows(sj, v)), params[prefix + "edge1_b"]))
    H = h.shape[-1]
    hsum = ad.sum_(ad.reshape(h, (B, R, R - 1, H)), axis=2)
    msg = ad.add_bias(ad.linear(hsum, params[prefix + "edge2_w"]),
                      ad.scale(params[prefix + "edge2_b"], R - 1))
    node_in = ad.concat([s, a, msg], axis=-1)
    delta = dense(ad.relu(dense(node_in, params, prefix + "node1")), params, prefix + "node2")
    return ad.add(s, delta)


def copy_params(params: Dict[str, Tensor]) -> Dict[str, np.ndarray]:
    return {k: v.data.copy() for k, v in params.items()}
