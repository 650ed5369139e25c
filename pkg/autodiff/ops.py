# autodiff/ops.py
"""Differentiable primitives.

Every op takes Tensors (or array-likes, promoted to constants), computes the
forward value with numpy/scipy and, when any input lives on a tape, records a
vector-Jacobian product. Results are checked for finiteness.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from scipy import special

from autodiff.tensor import Tape, Tensor, as_tensor
from domain.errors import ArgumentError, DegenerateVectorError, DimensionError, NumericError

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
# Largest double strictly below 1; keeps sigmoid inside the open interval.
_ONE_MINUS = float(np.nextafter(1.0, 0.0))
_TINY = float(np.finfo(np.float64).tiny)


def _tape_of(inputs: Sequence[Tensor]) -> Optional[Tape]:
    tape = None
    for t in inputs:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif t.tape is not tape:
            raise ArgumentError("operands belong to different tapes")
    return tape


def _emit(name: str, values: np.ndarray, inputs: Sequence[Tensor], vjp) -> Tensor:
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NumericError(f"{name}: produced non-finite values")
    values.setflags(write=False)
    tape = _tape_of(inputs)
    if tape is None:
        out = Tensor.__new__(Tensor)
        out.values = values
        out.tape = None
        out.grad_id = None
        return out
    parents = tuple(t.grad_id if t.tape is tape else None for t in inputs)
    return tape.record(values, parents, vjp)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(name: str, a: Tensor, b: Tensor):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(name, a.shape, b.shape) from None


# ---------- elementwise arithmetic ----------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit("add", a.values + b.values, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _emit("sub", a.values - b.values, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def vjp(g):
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)

    return _emit("mul", a.values * b.values, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    if np.any(b.values == 0.0):
        raise NumericError("div: division by zero")

    def vjp(g):
        return (
            _unbroadcast(g / b.values, a.shape),
            _unbroadcast(-g * a.values / (b.values * b.values), b.shape),
        )

    return _emit("div", a.values / b.values, (a, b), vjp)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _emit("neg", -a.values, (a,), lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    """a ** exponent for a constant exponent."""
    a = as_tensor(a)
    with np.errstate(all="ignore"):
        out = np.power(a.values, exponent)

    def vjp(g):
        with np.errstate(all="ignore"):
            local = exponent * np.power(a.values, exponent - 1.0) if exponent != 0 else 0.0
        return (g * local,)

    return _emit("power", out, (a,), vjp)


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.values)
    return _emit("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.values <= 0.0):
        raise NumericError("log: non-positive input")
    return _emit("log", np.log(a.values), (a,), lambda g: (g / a.values,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.values <= 0.0):
        raise NumericError("sqrt: non-positive input")
    out = np.sqrt(a.values)
    return _emit("sqrt", out, (a,), lambda g: (g * 0.5 / out,))


def absolute(a) -> Tensor:
    a = as_tensor(a)
    return _emit("abs", np.abs(a.values), (a,), lambda g: (g * np.sign(a.values),))


# ---------- shape ops ----------
def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError("matmul", a.shape, b.shape) from None

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.values, -1, -2))
        gb = np.matmul(np.swapaxes(a.values, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _emit("matmul", np.matmul(a.values, b.values), (a, b), vjp)


def transpose(a, axes: Sequence[int] | None = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        if a.ndim < 2:
            return a
        axes = list(range(a.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _emit(
        "transpose", np.transpose(a.values, axes), (a,), lambda g: (np.transpose(g, inverse),)
    )


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = np.reshape(a.values, shape)
    except ValueError:
        raise DimensionError("reshape", a.shape, tuple(shape)) from None
    return _emit("reshape", out, (a,), lambda g: (np.reshape(g, a.shape),))


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = np.sum(a.values, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _emit("sum", out, (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.values for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError("concat", *[t.shape for t in tensors]) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit("concat", out, tensors, vjp)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.values for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError("stack", *[t.shape for t in tensors]) from None

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _emit("stack", out, tensors, vjp)


def take(a, index) -> Tensor:
    """numpy indexing (basic or fancy); repeated indices accumulate gradient."""
    a = as_tensor(a)
    out = np.array(a.values[index], dtype=np.float64)

    def vjp(g):
        full = np.zeros(a.shape)
        np.add.at(full, index, g)
        return (full,)

    return _emit("take", out, (a,), vjp)


# ---------- nonlinearities ----------
def softmax_rows(m) -> Tensor:
    """Softmax along the last axis, max-subtracted."""
    m = as_tensor(m)
    shifted = m.values - np.max(m.values, axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=-1, keepdims=True)

    def vjp(g):
        return (out * (g - np.sum(g * out, axis=-1, keepdims=True)),)

    return _emit("softmax_rows", out, (m,), vjp)


def logsumexp_rows(m) -> Tensor:
    m = as_tensor(m)
    out = special.logsumexp(m.values, axis=-1)

    def vjp(g):
        weights = np.exp(m.values - out[..., None])
        return (g[..., None] * weights,)

    return _emit("logsumexp_rows", out, (m,), vjp)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then gain and bias.

    Constant rows normalize to exactly-centred zeros: eps keeps the
    denominator positive.
    """
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1] if x.ndim else 0
    if d < 2:
        raise ArgumentError(f"layer_norm: need at least 2 features, got {d}")
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError("layer_norm", x.shape, gain.shape, bias.shape)
    mu = np.mean(x.values, axis=-1, keepdims=True)
    centred = x.values - mu
    var = np.mean(centred * centred, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centred * inv_std
    out = xhat * gain.values + bias.values

    def vjp(g):
        dxhat = g * gain.values
        dx = inv_std * (
            dxhat
            - np.mean(dxhat, axis=-1, keepdims=True)
            - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return dx, np.sum(g * xhat, axis=lead), np.sum(g, axis=lead)

    return _emit("layer_norm", out, (x, gain, bias), vjp)


def gelu(x) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + special.erf(x.values / SQRT2))
    pdf = INV_SQRT_2PI * np.exp(-0.5 * x.values * x.values)
    return _emit("gelu", x.values * cdf, (x,), lambda g: (g * (cdf + x.values * pdf),))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = np.clip(special.expit(x.values), _TINY, _ONE_MINUS)
    return _emit("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def log_sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = special.log_expit(x.values)
    return _emit("log_sigmoid", out, (x,), lambda g: (g * special.expit(-x.values),))


# ---------- vector helpers ----------
def l2_normalize(x, axis: int = -1, eps: float = 1e-12) -> Tensor:
    x = as_tensor(x)
    norms = np.sqrt(np.sum(x.values * x.values, axis=axis, keepdims=True))
    if np.any(norms <= eps):
        raise DegenerateVectorError("l2_normalize: vector norm is (near) zero")
    unit = x.values / norms

    def vjp(g):
        return ((g - unit * np.sum(g * unit, axis=axis, keepdims=True)) / norms,)

    return _emit("l2_normalize", unit, (x,), vjp)


def cosine_sim(u, v, eps: float = 1e-12) -> Tensor:
    """Cosine similarity of two d-vectors, as a scalar tensor."""
    u, v = as_tensor(u), as_tensor(v)
    if u.shape != v.shape or u.ndim != 1:
        raise DimensionError("cosine_sim", u.shape, v.shape)
    sim = sum(mul(l2_normalize(u, eps=eps), l2_normalize(v, eps=eps)))
    if abs(sim.item()) > 1.0:
        sim = _emit("clip", np.clip(sim.values, -1.0, 1.0), (sim,), lambda g: (g,))
    return sim


def mlp_forward(x, layers: Sequence[tuple], activation=gelu) -> Tensor:
    """Affine layers with `activation` between them (not after the last).

    Each layer is (W, b) with W of shape (in, out); x has shape (..., in).
    """
    h = as_tensor(x)
    for i, (w, b) in enumerate(layers):
        w, b = as_tensor(w), as_tensor(b)
        if w.ndim != 2 or h.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
            raise DimensionError(f"mlp_forward layer {i}", h.shape, w.shape, b.shape)
        if h.ndim == 1:
            h = reshape(matmul(reshape(h, (1, -1)), w), (w.shape[1],))
        else:
            h = matmul(h, w)
        h = add(h, b)
        if i < len(layers) - 1:
            h = activation(h)
    return h
