"""Small reverse-mode autodiff over float64 numpy arrays.

Operations are recorded on the innermost active `Tape`. Outside a tape
nothing is recorded and ops just compute values, which is what inference
uses. Shapes are never broadcast implicitly: every op checks that its
inputs agree, and anything that changes a shape is its own op (`expand`,
`reshape`, `add_bias`, ...).

    with Tape() as tape:
        loss = mean(squared_distance(linear(x, W), y))
    grads = tape.backward(loss, {"W": W})
"""
from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .errors import NonFinite, NotScalarLoss, ShapeMismatch

_TAPES: List["Tape"] = []
_CHECK_FINITE = [False]


class Tensor:
    __slots__ = ("data", "requires_grad", "parents", "pullback", "op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.parents = ()
        self.pullback = None
        self.op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Records nodes in creation order, which is a topological order."""

    def __init__(self):
        self.nodes: List[Tensor] = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)

    def kink_margin(self) -> float:
        """Smallest |input| over recorded relu/max0 nodes. Finite-difference
        checks are only meaningful when this exceeds the perturbation."""
        m = np.inf
        for node in self.nodes:
            if node.op in ("relu", "max0"):
                m = min(m, float(np.min(np.abs(node.parents[0].data))))
        return m

    def backward(self, loss: Tensor, params=None):
        """Gradients of a scalar loss.

        params may be a dict name -> Tensor (returns a dict of arrays), a
        sequence of Tensors (returns a list) or None (returns the raw
        id -> gradient map).
        """
        if loss.data.size != 1:
            raise NotScalarLoss(f"loss must be scalar, got shape {loss.shape}")
        grads = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            for parent, pg in zip(node.parents, node.pullback(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                prev = grads.get(key)
                grads[key] = pg if prev is None else prev + pg
        if params is None:
            return grads
        if isinstance(params, dict):
            return {k: grads.get(id(p), np.zeros_like(p.data)) for k, p in params.items()}
        return [grads.get(id(p), np.zeros_like(p.data)) for p in params]


def backward(tape: Tape, loss: Tensor, params=None):
    return tape.backward(loss, params)


@contextmanager
def finite_checks(enabled: bool = True):
    """Raise NonFinite as soon as any op produces inf/nan."""
    old = _CHECK_FINITE[0]
    _CHECK_FINITE[0] = enabled
    try:
        yield
    finally:
        _CHECK_FINITE[0] = old


def _node(data, parents: Sequence[Tensor], pullback: Callable, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.parents = ()
    out.pullback = None
    out.op = op
    out.requires_grad = False
    if _CHECK_FINITE[0] and not np.all(np.isfinite(data)):
        raise NonFinite(f"{op} produced non-finite values")
    if _TAPES and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.pullback = pullback
        _TAPES[-1].nodes.append(out)
    return out


def _same(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same(a, b, "add")
    return _node(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same(a, b, "sub")
    return _node(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same(a, b, "mul")
    return _node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node(x.data * c, (x,), lambda g: (g * c,), "scale")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _node(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def max0(x: Tensor) -> Tensor:
    """Hinge max(0, x)."""
    mask = x.data > 0
    return _node(x.data * mask, (x,), lambda g: (g * mask,), "max0")


def add_scalar(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node(x.data + c, (x,), lambda g: (g,), "add_scalar")


def stop_gradient(x: Tensor) -> Tensor:
    """Identity value, zero pullback."""
    return Tensor(x.data)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    """(..., m, k) @ (..., k, n) with identical leading dimensions."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def pb(g):
        return (g @ np.swapaxes(bd, -1, -2) if a.requires_grad else None,
                np.swapaxes(ad, -1, -2) @ g if b.requires_grad else None)

    return _node(ad @ bd, (a, b), pb, "matmul")


def linear(x: Tensor, w: Tensor) -> Tensor:
    """Shared weight (k, n) applied to the last axis of x (..., k)."""
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ShapeMismatch(f"linear: input {x.shape} vs weight {w.shape}")
    xd, wd = x.data, w.data

    def pb(g):
        gx = g @ wd.T if x.requires_grad else None
        gw = xd.reshape(-1, xd.shape[-1]).T @ g.reshape(-1, g.shape[-1]) if w.requires_grad else None
        return gx, gw

    return _node(xd @ wd, (x, w), pb, "linear")


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a vector (n,) along the last axis of x (..., n)."""
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"add_bias: input {x.shape} vs bias {b.shape}")
    lead = tuple(range(x.ndim - 1))
    return _node(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=lead)), "add_bias")


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """linear followed by add_bias, fused into one node."""
    if w.ndim != 2 or b.ndim != 1 or x.shape[-1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"affine: input {x.shape}, weight {w.shape}, bias {b.shape}")
    xd, wd = x.data, w.data
    lead = tuple(range(x.ndim - 1))

    def pb(g):
        gx = g @ wd.T if x.requires_grad else None
        gw = xd.reshape(-1, xd.shape[-1]).T @ g.reshape(-1, g.shape[-1]) if w.requires_grad else None
        gb = g.sum(axis=lead) if b.requires_grad else None
        return gx, gw, gb

    return _node(xd @ wd + b.data, (x, w, b), pb, "affine")


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return _node(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def swap_last(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


# ---------------------------------------------------------------- shape ops

def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    ax = axis % xs[0].ndim
    for t in xs[1:]:
        if t.ndim != xs[0].ndim or any(t.shape[i] != xs[0].shape[i] for i in range(t.ndim) if i != ax):
            raise ShapeMismatch(f"concat: {[t.shape for t in xs]} along axis {axis}")
    sizes = np.cumsum([t.shape[ax] for t in xs])[:-1]

    def pb(g):
        return tuple(np.split(g, sizes, axis=ax))

    return _node(np.concatenate([t.data for t in xs], axis=ax), xs, pb, "concat")


def slice_(x: Tensor, key) -> Tensor:
    """Basic (view) indexing: ints and slices only."""
    shape = x.shape

    def pb(g):
        z = np.zeros(shape)
        z[key] = g
        return (z,)

    return _node(x.data[key], (x,), pb, "slice")


def take(x: Tensor, idx, axis: int) -> Tensor:
    """Gather entries along one axis; repeated indices accumulate."""
    idx = np.asarray(idx, dtype=np.int64)
    ax = axis % x.ndim
    shape = x.shape

    def pb(g):
        z = np.zeros(shape)
        zm = np.moveaxis(z, ax, 0)
        np.add.at(zm, idx, np.moveaxis(g, ax, 0))
        return (z,)

    return _node(np.take(x.data, idx, axis=ax), (x,), pb, "take")


def select_rows(sel: np.ndarray, x: Tensor) -> Tensor:
    """Row gather on axis -2 through a constant 0/1 matrix sel (p, n):
    (..., n, d) -> (..., p, d). Cheaper than `take` for repeated indices."""
    sel = np.asarray(sel, dtype=np.float64)
    if x.shape[-2] != sel.shape[1]:
        raise ShapeMismatch(f"select_rows: selector {sel.shape} vs input {x.shape}")
    return _node(sel @ x.data, (x,), lambda g: (sel.T @ g,), "select_rows")


def expand(x: Tensor, axis: int, n: int) -> Tensor:
    """Insert a new axis and repeat x n times along it."""
    ax = axis % (x.ndim + 1)
    data = np.repeat(np.expand_dims(x.data, ax), n, axis=ax)
    return _node(data, (x,), lambda g: (g.sum(axis=ax),), "expand")


# ---------------------------------------------------------------- reductions

def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = x.shape

    def pb(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), pb, "sum")


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return scale(sum_(x, axis=axis), 1.0 / n)


def squared_distance(a: Tensor, b: Tensor, axis=-1) -> Tensor:
    """Sum of squared differences over `axis` (an int or tuple)."""
    _same(a, b, "squared_distance")
    d = a.data - b.data
    axes = axis if isinstance(axis, tuple) else (axis,)

    def pb(g):
        g = np.expand_dims(g, tuple(ax % d.ndim for ax in axes))
        gd = 2.0 * d * g
        return gd, -gd

    return _node(np.sum(d * d, axis=axis), (a, b), pb, "squared_distance")


# ---------------------------------------------------------------- normalisers

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def pb(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _node(y, (x,), pb, "softmax")


def layernorm(x: Tensor, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Normalise to zero mean and unit variance along one axis (no gain)."""
    mu = np.mean(x.data, axis=axis, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt(np.mean(xc * xc, axis=axis, keepdims=True) + eps)
    y = xc * inv

    def pb(g):
        gm = np.mean(g, axis=axis, keepdims=True)
        gy = np.mean(g * y, axis=axis, keepdims=True)
        return (inv * (g - gm - y * gy),)

    return _node(y, (x,), pb, "layernorm")


# ---------------------------------------------------------------- checking

class GradCheckReport:
    def __init__(self, max_error, tol, worst, n_checked):
        self.max_error = max_error
        self.tol = tol
        self.worst = worst
        self.n_checked = n_checked

    @property
    def passed(self):
        return self.max_error <= self.tol

    def __repr__(self):
        return (f"GradCheckReport(max_error={self.max_error:.3e}, tol={self.tol}, "
                f"passed={self.passed}, worst={self.worst}, n={self.n_checked})")


def grad_check(f: Callable[[Dict[str, Tensor]], Tensor], params: Dict[str, Tensor], h: float = 1e-5,
               tol: float = 1e-4, max_per_param: Optional[int] = None, seed: int = 0) -> GradCheckReport:
    """Compare tape gradients with central differences.

    The error for a coordinate is |analytic - numeric| / max(1, |analytic|).
    With max_per_param set, a seeded random subset of each tensor's
    coordinates is checked instead of all of them.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step h={h} outside [1e-7, 1e-3]")
    with Tape() as tape:
        loss = f(params)
    analytic = tape.backward(loss, params)
    rng = np.random.default_rng(seed)
    worst, max_err, count = None, 0.0, 0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_per_param is not None and flat.size > max_per_param:
            coords = np.sort(rng.choice(flat.size, size=max_per_param, replace=False))
        ga = analytic[name].reshape(-1)
        for i in coords:
            old = flat[i]
            flat[i] = old + h
            fp = float(f(params).data)
            flat[i] = old - h
            fm = float(f(params).data)
            flat[i] = old
            num = (fp - fm) / (2 * h)
            err = abs(ga[i] - num) / max(1.0, abs(ga[i]))
            count += 1
            if err > max_err:
                max_err, worst = err, (name, int(i), float(ga[i]), num)
    return GradCheckReport(max_err, tol, worst, count)
