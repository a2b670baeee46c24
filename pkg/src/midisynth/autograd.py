"""Reverse-mode automatic differentiation over float64 numpy arrays.

A Tensor wraps an ndarray and remembers how it was produced; backward()
walks the recorded graph in reverse topological order accumulating
gradients.  Recording can be switched off globally with no_grad(), in
which case the same op functions run as plain numpy with no tape, so
forward inference and training share one code path.

Convolutions and linear-interpolation upsampling are single primitives
with hand-written adjoints rather than compositions, which keeps the
tape small for long sequences.
"""

from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """An array plus the backward closures that feed its parents."""

    __slots__ = ("value", "grad", "parents")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = tuple(parents) if _GRAD_ENABLED else ()

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def backward(root: Tensor, seed=None) -> None:
    """Accumulate gradients of root into every reachable Tensor's .grad."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _fn in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    if seed is None:
        seed = np.ones_like(root.value)
    root.grad = np.asarray(seed, dtype=np.float64).reshape(root.value.shape)
    for node in reversed(order):
        if node.grad is None:
            continue
        for parent, fn in node.parents:
            g = fn(node.grad)
            parent.grad = g if parent.grad is None else parent.grad + g


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the original shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# --- elementwise and linear ops -------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.value + b.value,
                  [(a, lambda g: _unbroadcast(g, a.value.shape)),
                   (b, lambda g: _unbroadcast(g, b.value.shape))])


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.value - b.value,
                  [(a, lambda g: _unbroadcast(g, a.value.shape)),
                   (b, lambda g: _unbroadcast(-g, b.value.shape))])


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.value * b.value,
                  [(a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
                   (b, lambda g: _unbroadcast(g * a.value, b.value.shape))])


def scale(a, s: float):
    a = as_tensor(a)
    return Tensor(a.value * s, [(a, lambda g: g * s)])


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ValueError("matmul handles 2-D operands only")
    return Tensor(a.value @ b.value,
                  [(a, lambda g: g @ b.value.T),
                   (b, lambda g: a.value.T @ g)])


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.value)
    return Tensor(y, [(a, lambda g: g * (1.0 - y * y))])


def sigmoid(a):
    a = as_tensor(a)
    y = 1.0 / (1.0 + np.exp(-a.value))
    return Tensor(y, [(a, lambda g: g * y * (1.0 - y))])


def relu(a):
    a = as_tensor(a)
    mask = a.value > 0
    return Tensor(a.value * mask, [(a, lambda g: g * mask)])


def hard_clip(a, lo: float, hi: float):
    """Clip values; gradient passes through inside [lo, hi] and is cut outside."""
    a = as_tensor(a)
    mask = (a.value >= lo) & (a.value <= hi)
    return Tensor(np.clip(a.value, lo, hi), [(a, lambda g: g * mask)])


def square_error_mean(a, b):
    """Mean of (a - b)^2 as a scalar tensor."""
    a, b = as_tensor(a), as_tensor(b)
    diff = a.value - b.value
    n = max(diff.size, 1)
    return Tensor(np.array((diff * diff).sum() / n),
                  [(a, lambda g: (2.0 / n) * g * diff),
                   (b, lambda g: (-2.0 / n) * g * diff)])


def add_scalar_losses(losses):
    total = losses[0]
    for item in losses[1:]:
        total = add(total, item)
    return total


# --- shape ops -------------------------------------------------------------


def concat_cols(tensors):
    """Concatenate 2-D tensors along axis 1."""
    tensors = [as_tensor(t) for t in tensors]
    widths = [t.value.shape[1] for t in tensors]
    offsets = np.concatenate(([0], np.cumsum(widths)))
    parents = []
    for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
        parents.append((t, lambda g, lo=int(lo), hi=int(hi): g[:, lo:hi]))
    return Tensor(np.concatenate([t.value for t in tensors], axis=1), parents)


def concat_rows(tensors):
    """Concatenate 2-D tensors along axis 0."""
    tensors = [as_tensor(t) for t in tensors]
    heights = [t.value.shape[0] for t in tensors]
    offsets = np.concatenate(([0], np.cumsum(heights)))
    parents = []
    for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
        parents.append((t, lambda g, lo=int(lo), hi=int(hi): g[lo:hi]))
    return Tensor(np.concatenate([t.value for t in tensors], axis=0), parents)


def slice_rows(a, start: int, stop: int):
    a = as_tensor(a)
    n = a.value.shape[0]

    def back(g):
        out = np.zeros_like(a.value)
        out[start:stop] = g
        return out

    if not 0 <= start <= stop <= n:
        raise ValueError(f"slice [{start}:{stop}] outside {n} rows")
    return Tensor(a.value[start:stop], [(a, back)])


def shift_rows(a, k: int):
    """Shift rows down by k (prepending zero rows); negative k shifts up."""
    a = as_tensor(a)
    value = _shift_array(a.value, k)
    return Tensor(value, [(a, lambda g: _shift_array(g, -k))])


def _shift_array(x, k):
    out = np.zeros_like(x)
    n = x.shape[0]
    if k >= n or -k >= n:
        return out
    if k >= 0:
        out[k:] = x[: n - k]
    else:
        out[: n + k] = x[-k:]
    return out


# --- sequence primitives ----------------------------------------------------


def conv1d(x, weight, bias, dilation: int = 1, causal: bool = True):
    """Dilated 1-D convolution over rows of x (time, channels).

    weight is (taps, in_channels, out_channels).  Causal mode reads only
    rows at t - j * dilation for tap j (tap 0 is the current row);
    non-causal mode centers the kernel, reading t + (j - taps//2) *
    dilation.  Out-of-range rows are zero.
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    taps = weight.value.shape[0]
    center = 0 if causal else taps // 2
    # positive offset shifts rows down, so tap j reads t - offset
    offsets = [(j - center) * dilation for j in range(taps)]
    out = np.zeros((x.value.shape[0], weight.value.shape[2]))
    for j, off in enumerate(offsets):
        out += _shift_array(x.value, off) @ weight.value[j]
    out += bias.value

    def back_x(g):
        gx = np.zeros_like(x.value)
        for j, off in enumerate(offsets):
            gx += _shift_array(g @ weight.value[j].T, -off)
        return gx

    def back_w(g):
        gw = np.empty_like(weight.value)
        for j, off in enumerate(offsets):
            gw[j] = _shift_array(x.value, off).T @ g
        return gw

    return Tensor(out, [(x, back_x), (weight, back_w),
                        (bias, lambda g: g.sum(axis=0))])


def upsample_linear(a, out_rows: int):
    """Stretch rows to out_rows by linear interpolation with held endpoints.

    Output row t samples input position t * (n_in - 1) / (out_rows - 1);
    a single input row or a single output row degenerates to repetition.
    """
    a = as_tensor(a)
    n_in = a.value.shape[0]
    if n_in == 0 or out_rows <= 0:
        raise ValueError("upsample needs at least one input and output row")
    if n_in == 1 or out_rows == 1:
        pos = np.zeros(out_rows)
    else:
        pos = np.arange(out_rows) * (n_in - 1) / (out_rows - 1)
    idx0 = np.minimum(pos.astype(np.int64), n_in - 1)
    idx1 = np.minimum(idx0 + 1, n_in - 1)
    frac = (pos - idx0)[:, None]
    value = a.value[idx0] * (1.0 - frac) + a.value[idx1] * frac

    def back(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx0, g * (1.0 - frac))
        np.add.at(out, idx1, g * frac)
        return out

    return Tensor(value, [(a, back)])
