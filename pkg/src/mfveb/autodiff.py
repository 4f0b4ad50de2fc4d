"""Reverse-mode automatic differentiation over unrolled recurrent graphs.

The tape is implicit: every operation that touches a :class:`Tensor` returns
a new node holding its value, its parent nodes, and a closure per parent
that maps the node's adjoint to the parent's adjoint.  ``backward`` walks
the nodes in reverse topological order, so each node reachable from the
loss contributes exactly one accumulation per parent edge.

Operations also accept plain numpy arrays (or floats).  When no operand is
a ``Tensor`` the op short-circuits to raw numpy, which means the same
forward code serves both gradient evaluation and fast value-only
prediction, with identical arithmetic order in both modes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import digamma as _digamma
from scipy.special import gammaln as _gammaln

__all__ = [
    "NonFiniteLossError",
    "ParamVector",
    "Tensor",
    "add",
    "backward",
    "div",
    "exp",
    "finite_difference_grad",
    "grad",
    "leaf",
    "lgamma",
    "linear",
    "log",
    "matmul",
    "mul",
    "neg",
    "sigmoid",
    "slice_cols",
    "softplus",
    "square",
    "sub",
    "sum_all",
    "tanh",
]


class NonFiniteLossError(FloatingPointError):
    """Loss evaluated non-finite; carries the offending parameter name."""

    def __init__(self, param_name: str):
        super().__init__(f"loss is non-finite (first offending parameter: {param_name})")
        self.param_name = param_name


class Tensor:
    """One node of the tape: a value plus backward edges to its parents."""

    __slots__ = ("value", "grad", "parents")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents  # tuple of (Tensor, adjoint_fn)

    @property
    def shape(self):
        return self.value.shape


def leaf(value) -> Tensor:
    return Tensor(value)


def _val(x):
    return x.value if isinstance(x, Tensor) else x


def _is_node(*xs):
    return any(isinstance(x, Tensor) for x in xs)


def _unbroadcast(g, shape):
    """Sum an adjoint over axes that numpy broadcasting expanded."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary(a, b, out_value, da, db):
    parents = []
    if isinstance(a, Tensor):
        parents.append((a, da))
    if isinstance(b, Tensor):
        parents.append((b, db))
    return Tensor(out_value, tuple(parents))


def add(a, b):
    av, bv = _val(a), _val(b)
    out = av + bv
    if not _is_node(a, b):
        return out
    return _binary(
        a, b, out,
        lambda g: _unbroadcast(g, np.shape(av)),
        lambda g: _unbroadcast(g, np.shape(bv)),
    )


def sub(a, b):
    av, bv = _val(a), _val(b)
    out = av - bv
    if not _is_node(a, b):
        return out
    return _binary(
        a, b, out,
        lambda g: _unbroadcast(g, np.shape(av)),
        lambda g: _unbroadcast(-g, np.shape(bv)),
    )


def neg(a):
    av = _val(a)
    if not _is_node(a):
        return -av
    return Tensor(-av, ((a, lambda g: -g),))


def mul(a, b):
    av, bv = _val(a), _val(b)
    out = av * bv
    if not _is_node(a, b):
        return out
    return _binary(
        a, b, out,
        lambda g: _unbroadcast(g * bv, np.shape(av)),
        lambda g: _unbroadcast(g * av, np.shape(bv)),
    )


def div(a, b):
    av, bv = _val(a), _val(b)
    out = av / bv
    if not _is_node(a, b):
        return out
    return _binary(
        a, b, out,
        lambda g: _unbroadcast(g / bv, np.shape(av)),
        lambda g: _unbroadcast(-g * av / (bv * bv), np.shape(bv)),
    )


def matmul(a, b):
    av, bv = _val(a), _val(b)
    out = av @ bv
    if not _is_node(a, b):
        return out
    return _binary(
        a, b, out,
        lambda g: g @ bv.T,
        lambda g: av.T @ g,
    )


def linear(x, w, b):
    """Affine map x @ w.T + b for x (N, D), w (H, D), b (H,)."""
    xv, wv, bv = _val(x), _val(w), _val(b)
    out = xv @ wv.T + bv
    if not _is_node(x, w, b):
        return out
    parents = []
    if isinstance(x, Tensor):
        parents.append((x, lambda g: g @ wv))
    if isinstance(w, Tensor):
        parents.append((w, lambda g: g.T @ xv))
    if isinstance(b, Tensor):
        parents.append((b, lambda g: g.sum(axis=0)))
    return Tensor(out, tuple(parents))


def _unary(a, out_value, da):
    return Tensor(out_value, ((a, da),))


def sigmoid(a):
    av = _val(a)
    out = 1.0 / (1.0 + np.exp(-av))
    if not _is_node(a):
        return out
    return _unary(a, out, lambda g: g * out * (1.0 - out))


def tanh(a):
    av = _val(a)
    out = np.tanh(av)
    if not _is_node(a):
        return out
    return _unary(a, out, lambda g: g * (1.0 - out * out))


def softplus(a):
    av = _val(a)
    safe = np.where(av > 30.0, 0.0, av)
    out = np.where(av > 30.0, av, np.log1p(np.exp(safe)))
    if not _is_node(a):
        return out
    sig = 1.0 / (1.0 + np.exp(-av))
    return _unary(a, out, lambda g: g * sig)


def exp(a):
    av = _val(a)
    out = np.exp(av)
    if not _is_node(a):
        return out
    return _unary(a, out, lambda g: g * out)


def log(a):
    av = _val(a)
    out = np.log(av)
    if not _is_node(a):
        return out
    return _unary(a, out, lambda g: g / av)


def square(a):
    av = _val(a)
    out = av * av
    if not _is_node(a):
        return out
    return _unary(a, out, lambda g: g * (2.0 * av))


def lgamma(a):
    av = _val(a)
    out = _gammaln(av)
    if not _is_node(a):
        return out
    return _unary(a, out, lambda g: g * _digamma(av))


def sum_all(a):
    av = _val(a)
    out = np.sum(av)
    if not _is_node(a):
        return out
    shape = np.shape(av)
    return _unary(a, out, lambda g: np.broadcast_to(g, shape).copy() if shape else g)


def slice_cols(a, j0, j1):
    av = _val(a)
    out = av[..., j0:j1]
    if not _is_node(a):
        return out

    def adjoint(g):
        full = np.zeros_like(av)
        full[..., j0:j1] = g
        return full

    return _unary(a, out, adjoint)


def backward(loss: Tensor) -> None:
    """Accumulate adjoints into every leaf reachable from ``loss``.

    Non-leaf adjoints are dropped as soon as they are consumed to bound
    peak memory on long unrolled graphs.
    """
    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.value)
    for node in reversed(topo):
        g = node.grad
        if g is None:
            continue
        for parent, adjoint in node.parents:
            contrib = adjoint(g)
            if parent.grad is None:
                parent.grad = np.asarray(contrib, dtype=np.float64)
            else:
                parent.grad = parent.grad + contrib
        if node.parents:
            node.grad = None


# ---------------------------------------------------------------------------
# Flat parameter vectors with named layouts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamVector:
    """Flat 64-bit parameter vector plus a (name, shape) layout map."""

    values: np.ndarray
    layout: tuple

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64).ravel()
        object.__setattr__(self, "values", values)
        layout = tuple((str(n), tuple(int(d) for d in s)) for n, s in self.layout)
        object.__setattr__(self, "layout", layout)
        total = sum(int(np.prod(s, dtype=np.int64)) if s else 1 for _, s in layout)
        if total != values.size:
            raise ValueError(f"layout covers {total} values, vector has {values.size}")
        names = [n for n, _ in layout]
        if len(set(names)) != len(names):
            raise ValueError("layout names must be unique")

    @property
    def size(self) -> int:
        return self.values.size

    @staticmethod
    def zeros(layout) -> "ParamVector":
        total = sum(int(np.prod(s, dtype=np.int64)) if s else 1 for _, s in layout)
        return ParamVector(np.zeros(total), tuple(layout))

    def unflatten(self) -> dict:
        """Views into the flat vector, reshaped per layout entry."""
        out = {}
        offset = 0
        for name, shape in self.layout:
            n = int(np.prod(shape, dtype=np.int64)) if shape else 1
            out[name] = self.values[offset:offset + n].reshape(shape)
            offset += n
        return out

    @staticmethod
    def flatten(tensors: Mapping[str, np.ndarray], layout) -> "ParamVector":
        parts = []
        for name, shape in layout:
            arr = np.asarray(tensors[name], dtype=np.float64)
            if arr.shape != tuple(shape):
                raise ValueError(f"{name}: expected shape {tuple(shape)}, got {arr.shape}")
            parts.append(arr.ravel())
        return ParamVector(np.concatenate(parts) if parts else np.zeros(0), tuple(layout))

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(values, self.layout)

    def first_nonfinite_name(self) -> str | None:
        for name, arr in self.unflatten().items():
            if not np.all(np.isfinite(arr)):
                return name
        return None


def _leaves_from(params: ParamVector) -> dict:
    return {name: leaf(arr) for name, arr in params.unflatten().items()}


def grad(loss_fn: Callable, params: ParamVector, batch=None) -> ParamVector:
    """Gradient of a scalar loss with respect to ``params``.

    ``loss_fn`` receives a mapping from layout names to graph nodes (plus
    ``batch`` when given) and returns a scalar.  The result carries the
    same layout as ``params``.
    """
    leaves = _leaves_from(params)
    out = loss_fn(leaves, batch) if batch is not None else loss_fn(leaves)
    if not isinstance(out, Tensor):
        # Loss did not touch any parameter: gradient is identically zero.
        value = float(out)
        if not np.isfinite(value):
            raise NonFiniteLossError(params.first_nonfinite_name() or "<loss>")
        return params.with_values(np.zeros_like(params.values))
    if out.value.ndim != 0:
        raise ValueError(f"loss must be a scalar, got shape {out.value.shape}")
    if not np.isfinite(out.value):
        raise NonFiniteLossError(params.first_nonfinite_name() or "<loss>")
    backward(out)
    parts = []
    for name, _ in params.layout:
        node = leaves[name]
        g = node.grad if node.grad is not None else np.zeros_like(node.value)
        parts.append(np.asarray(g, dtype=np.float64).ravel())
    return params.with_values(np.concatenate(parts) if parts else np.zeros(0))


def loss_value(loss_fn: Callable, params: ParamVector, batch=None) -> float:
    """Evaluate the loss in value mode (no tape is built)."""
    arrays = params.unflatten()
    out = loss_fn(arrays, batch) if batch is not None else loss_fn(arrays)
    return float(_val(out))


def finite_difference_grad(loss_fn: Callable, params: ParamVector, step: float,
                           batch=None) -> ParamVector:
    """Central-difference gradient oracle: (f(p + h e_i) - f(p - h e_i)) / 2h."""
    if step <= 0:
        raise ValueError("step must be positive")
    base = params.values
    out = np.zeros_like(base)
    for i in range(base.size):
        bumped = base.copy()
        bumped[i] = base[i] + step
        hi = loss_value(loss_fn, params.with_values(bumped), batch)
        bumped[i] = base[i] - step
        lo = loss_value(loss_fn, params.with_values(bumped), batch)
        out[i] = (hi - lo) / (2.0 * step)
    return params.with_values(out)
