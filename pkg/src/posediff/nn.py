"""Layers, parameter containers and the AdamW optimizer.

Everything is built on posediff.tensor; modules register parameters by
attribute assignment and expose them through named_parameters() in a
deterministic (construction) order, which the checkpoint format and the
seeded initializers rely on.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Base class: tracks parameters and sub-modules in definition order."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        elif isinstance(value, ModuleList):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield (prefix + name, p)
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def freeze(self):
        for p in self.parameters():
            p.requires_grad = False
        return self

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def state_dict(self):
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state dict mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)

    def num_parameters(self):
        return int(sum(p.data.size for p in self.parameters()))


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items = []
        for m in modules:
            self.append(m)

    def append(self, m):
        self._modules[str(len(self._items))] = m
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def __len__(self):
        return len(self._items)


def param(data):
    return Tensor(np.asarray(data), requires_grad=True)


class Conv2d(Module):
    def __init__(self, cin, cout, k=3, stride=1, pad=1, rng=None, init="he", dtype=np.float32):
        super().__init__()
        self.cin, self.cout, self.k, self.stride, self.pad = cin, cout, k, stride, pad
        fan_in = cin * k * k
        if init == "zero":
            w = np.zeros((cout, cin, k, k))
        else:
            std = math.sqrt(2.0 / fan_in)
            w = rng.normal(0.0, std, size=(cout, cin, k, k))
        self.w = param(w.astype(dtype))
        self.b = param(np.zeros(cout, dtype=dtype))

    def __call__(self, x):
        return T.conv2d(x, self.w, self.b, stride=self.stride, pad=self.pad)


class Linear(Module):
    def __init__(self, cin, cout, rng=None, init="he", dtype=np.float32):
        super().__init__()
        if init == "zero":
            w = np.zeros((cin, cout))
        else:
            std = math.sqrt(2.0 / cin)
            w = rng.normal(0.0, std, size=(cin, cout))
        self.w = param(w.astype(dtype))
        self.b = param(np.zeros(cout, dtype=dtype))

    def __call__(self, x):
        return T.matmul(x, self.w) + self.b


class GroupNorm(Module):
    def __init__(self, channels, groups=8, eps=1e-5, dtype=np.float32):
        super().__init__()
        if channels % groups:
            groups = 1
        self.groups, self.eps = groups, eps
        self.g = param(np.ones(channels, dtype=dtype))
        self.b = param(np.zeros(channels, dtype=dtype))

    def __call__(self, x):
        return T.group_norm(x, self.g, self.b, self.groups, self.eps)


class Embedding(Module):
    def __init__(self, vocab, dim, rng=None, dtype=np.float32):
        super().__init__()
        self.table = param(rng.normal(0.0, 0.02, size=(vocab, dim)).astype(dtype))

    def __call__(self, ids):
        return T.embedding(self.table, ids)


class AdamW:
    """Adam with decoupled weight decay and optional cosine lr decay."""

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0,
                 total_steps=None, lr_min_ratio=0.1):
        self.params = [p for p in params if p.requires_grad]
        self.lr0 = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.wd = weight_decay
        self.total_steps = total_steps
        self.lr_min_ratio = lr_min_ratio
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def current_lr(self):
        if self.total_steps is None:
            return self.lr0
        frac = min(self.t / max(self.total_steps, 1), 1.0)
        lo = self.lr0 * self.lr_min_ratio
        return lo + 0.5 * (self.lr0 - lo) * (1.0 + math.cos(math.pi * frac))

    def step(self):
        lr = self.current_lr()
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.wd:
                update = update + self.wd * p.data
            p.data -= (lr * update).astype(p.data.dtype, copy=False)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
