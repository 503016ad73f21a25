"""Reverse-mode automatic differentiation on numpy arrays.

Small tape-based engine covering exactly the ops the models in this
package need: broadcasting arithmetic, matmul, 2-d convolution (im2col
forward, slice-accumulate backward), nearest upsampling, group
normalization, activations, reductions, indexing/reshape, embedding
lookup and a fused softmax cross-entropy.

All gradients are checked against central finite differences in
tests/test_tensor.py; the models run in float32 by default and float64
in exactness tests (dtype follows the inputs).
"""

from __future__ import annotations

import contextlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled():
    return _GRAD_ENABLED


class Tensor:
    """A numpy array plus an optional backward closure on the tape."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = parents
        self._backward = backward

    # -- basic protocol ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def detach(self):
        """Value-sharing tensor severed from the tape."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- autodiff ------------------------------------------------------

    def backward(self, grad=None):
        """Run reverse-mode accumulation from this tensor."""
        if grad is None:
            grad = np.ones_like(self.data)
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operators -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def _needs_tape(*tensors):
    return _GRAD_ENABLED and any(isinstance(t, Tensor) and t.requires_grad for t in tensors)


def _make(data, parents, backward):
    """Build an output tensor, taping only when a parent requires grad."""
    live = [p for p in parents if isinstance(p, Tensor)]
    if _needs_tape(*live):
        return Tensor(data, requires_grad=True, parents=tuple(live), backward=backward)
    return Tensor(data)


def _unbroadcast(grad, shape):
    """Reduce a broadcast gradient back to the original shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- arithmetic ---------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(out_data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(out_data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(out_data, (a, b), backward)


def square(x):
    return mul(x, x)


def sqrt(x):
    x = as_tensor(x)
    out_data = np.sqrt(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * (0.5 / out_data))

    return _make(out_data, (x,), backward)


def exp(x):
    x = as_tensor(x)
    out_data = np.exp(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * out_data)

    return _make(out_data, (x,), backward)


def log(x):
    x = as_tensor(x)
    out_data = np.log(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g / x.data)

    return _make(out_data, (x,), backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(out_data, (a, b), backward)


# -- activations --------------------------------------------------------


def relu(x):
    x = as_tensor(x)
    out_data = np.maximum(x.data, 0)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * (x.data > 0))

    return _make(out_data, (x,), backward)


def sigmoid(x):
    x = as_tensor(x)
    s = 1.0 / (1.0 + np.exp(-x.data))

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * s * (1.0 - s))

    return _make(s, (x,), backward)


def silu(x):
    x = as_tensor(x)
    s = 1.0 / (1.0 + np.exp(-x.data))
    out_data = x.data * s

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * s * (1.0 + x.data * (1.0 - s)))

    return _make(out_data, (x,), backward)


def tanh(x):
    x = as_tensor(x)
    t = np.tanh(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * (1.0 - t * t))

    return _make(t, (x,), backward)


# -- shape ops ----------------------------------------------------------


def reshape(x, shape):
    x = as_tensor(x)
    out_data = x.data.reshape(shape)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.reshape(x.shape))

    return _make(out_data, (x,), backward)


def transpose(x, axes):
    x = as_tensor(x)
    out_data = x.data.transpose(axes)
    inv = np.argsort(axes)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.transpose(inv))

    return _make(out_data, (x,), backward)


def getitem(x, idx):
    x = as_tensor(x)
    out_data = x.data[idx]

    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            np.add.at(full, idx, g)
            x._accumulate(full)

    return _make(out_data, (x,), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _make(out_data, tuple(tensors), backward)


def tsum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if x.requires_grad:
            if axis is None:
                x._accumulate(np.broadcast_to(g, x.shape).copy())
            else:
                if not keepdims:
                    g = np.expand_dims(g, axis)
                x._accumulate(np.broadcast_to(g, x.shape).copy())

    return _make(out_data, (x,), backward)


def tmean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out_data = x.data.mean(axis=axis, keepdims=keepdims)
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])

    def backward(g):
        if x.requires_grad:
            if axis is None:
                x._accumulate(np.broadcast_to(g / n, x.shape).astype(x.dtype, copy=True))
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                x._accumulate(np.broadcast_to(gg / n, x.shape).astype(x.dtype, copy=True))

    return _make(out_data, (x,), backward)


# -- convolution and friends ---------------------------------------------


def conv2d(x, w, b=None, stride=1, pad=0):
    """2-d cross-correlation, NCHW layout, square kernel.

    Forward lowers the padded input to im2col columns and runs one
    matmul; backward reuses the cached columns for the weight gradient
    and accumulates the input gradient with k*k strided slice-adds
    (cheap and exact for any stride/pad geometry).
    """
    x, w = as_tensor(x), as_tensor(w)
    B, C, H, W = x.shape
    O, Cw, kh, kw = w.shape
    if C != Cw:
        raise ValueError(f"conv2d channel mismatch: input {C} vs kernel {Cw}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    OH, OW = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * OH * OW, C * kh * kw)
    wmat = w.data.reshape(O, -1)
    out = cols @ wmat.T
    if b is not None:
        out += b.data
    out_data = out.reshape(B, OH, OW, O).transpose(0, 3, 1, 2)

    parents = (x, w) if b is None else (x, w, b)
    if not _needs_tape(*parents):
        return Tensor(out_data)

    cols_c = np.ascontiguousarray(cols)

    def backward(g):
        gc = g.transpose(0, 2, 3, 1).reshape(B * OH * OW, O)
        if w.requires_grad:
            w._accumulate((gc.T @ cols_c).reshape(w.shape))
        if b is not None and b.requires_grad:
            b._accumulate(gc.sum(axis=0))
        if x.requires_grad:
            dcols = gc @ wmat  # (B*OH*OW, C*kh*kw)
            dcols = dcols.reshape(B, OH, OW, C, kh, kw).transpose(0, 3, 4, 5, 1, 2)
            Hp, Wp = H + 2 * pad, W + 2 * pad
            dxp = np.zeros((B, C, Hp, Wp), dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + stride * OH : stride, j : j + stride * OW : stride] += dcols[:, :, i, j]
            dx = dxp[:, :, pad : pad + H, pad : pad + W] if pad else dxp
            x._accumulate(dx)

    return Tensor(out_data, requires_grad=True, parents=parents, backward=backward)


def upsample_nearest2x(x):
    x = as_tensor(x)
    B, C, H, W = x.shape
    out_data = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.reshape(B, C, H, 2, W, 2).sum(axis=(3, 5)))

    return _make(out_data, (x,), backward)


def group_norm(x, gamma, beta, groups, eps=1e-5):
    """Group normalization over (channels/groups, H, W) per sample."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    B, C, H, W = x.shape
    if C % groups:
        raise ValueError(f"channels {C} not divisible by groups {groups}")
    xg = x.data.reshape(B, groups, -1)
    mu = xg.mean(axis=-1, keepdims=True)
    var = xg.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat_g = (xg - mu) * inv_std
    xhat = xhat_g.reshape(B, C, H, W)
    out_data = xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=(0, 2, 3)))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxhat = (g * gamma.data[None, :, None, None]).reshape(B, groups, -1)
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat_g).mean(axis=-1, keepdims=True)
            dxg = inv_std * (dxhat - m1 - xhat_g * m2)
            x._accumulate(dxg.reshape(B, C, H, W))

    return _make(out_data, (x, gamma, beta), backward)


def embedding(table, ids):
    """Row lookup in a (V, D) table with integer ids of any shape."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    out_data = table.data[ids]

    def backward(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, ids.reshape(-1), g.reshape(-1, table.shape[-1]))

    return _make(out_data, (table,), backward)


def cross_entropy(logits, targets):
    """Mean softmax cross-entropy; targets are integer class ids."""
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    B = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    probs = ez / ez.sum(axis=1, keepdims=True)
    nll = -(z[np.arange(B), targets] - np.log(ez.sum(axis=1)))
    out_data = np.asarray(nll.mean(), dtype=logits.dtype)

    def backward(g):
        if logits.requires_grad:
            d = probs.copy()
            d[np.arange(B), targets] -= 1.0
            logits._accumulate(g * d / B)

    return _make(out_data, (logits,), backward)
