"""Finite-difference checks for every autodiff op."""

import numpy as np
import pytest

from posediff import nn
from posediff import tensor as T


def numeric_grad(f, x, h=1e-6):
    """Central finite differences of a scalar function at x (float64)."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f()
        flat[i] = orig - h
        lo = f()
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * h)
    return g


def check(build, *shapes, seed=0, tol=1e-7):
    """Compare backprop against finite differences for each input."""
    rng = np.random.default_rng(seed)
    xs = [T.Tensor(rng.standard_normal(s), requires_grad=True) for s in shapes]
    out = build(*xs)
    proj = rng.standard_normal(out.shape)
    loss = (out * T.Tensor(proj)).sum()
    loss.backward()
    for x in xs:
        num = numeric_grad(lambda: float((build(*xs).data * proj).sum()), x.data)
        assert x.grad is not None
        np.testing.assert_allclose(x.grad, num, rtol=1e-5, atol=tol)


def test_add_broadcast():
    check(lambda a, b: a + b, (3, 4), (4,))
    check(lambda a, b: a + b, (2, 3, 4), (3, 1))


def test_sub_mul_div():
    check(lambda a, b: a - b, (3, 4), (3, 4))
    check(lambda a, b: a * b, (3, 4), (1, 4))
    rng = np.random.default_rng(1)
    a = T.Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = T.Tensor(rng.standard_normal((3, 4)) + 3.0, requires_grad=True)
    out = a / b
    proj = rng.standard_normal(out.shape)
    (out * T.Tensor(proj)).sum().backward()
    num_a = numeric_grad(lambda: float(((a.data / b.data) * proj).sum()), a.data)
    num_b = numeric_grad(lambda: float(((a.data / b.data) * proj).sum()), b.data)
    np.testing.assert_allclose(a.grad, num_a, rtol=1e-5, atol=1e-7)
    np.testing.assert_allclose(b.grad, num_b, rtol=1e-5, atol=1e-7)


def test_unary_ops():
    check(lambda x: T.exp(x), (3, 3))
    check(lambda x: T.tanh(x), (3, 3))
    check(lambda x: T.sigmoid(x), (3, 3))
    check(lambda x: T.silu(x), (3, 3))
    rng = np.random.default_rng(2)
    x = T.Tensor(rng.random((3, 3)) + 0.5, requires_grad=True)
    for fn, npfn in [(T.log, np.log), (T.sqrt, np.sqrt)]:
        x.grad = None
        out = fn(x)
        out.sum().backward()
        num = numeric_grad(lambda: float(npfn(x.data).sum()), x.data)
        np.testing.assert_allclose(x.grad, num, rtol=1e-5, atol=1e-7)


def test_relu_away_from_kink():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((4, 4))
    x[np.abs(x) < 0.1] += 0.2  # keep fd away from the nondifferentiable point
    xt = T.Tensor(x, requires_grad=True)
    T.relu(xt).sum().backward()
    num = numeric_grad(lambda: float(np.maximum(xt.data, 0).sum()), xt.data)
    np.testing.assert_allclose(xt.grad, num, rtol=1e-5, atol=1e-7)


def test_matmul():
    check(lambda a, b: a @ b, (3, 5), (5, 2))


def test_reductions():
    check(lambda x: x.sum(), (3, 4))
    check(lambda x: x.sum(axis=1), (3, 4))
    check(lambda x: x.mean(), (3, 4))
    check(lambda x: x.mean(axis=0, keepdims=True), (3, 4))
    check(lambda x: x.mean(axis=(1, 2)), (2, 3, 4))


def test_shape_ops():
    check(lambda x: x.reshape(6, 2), (3, 4))
    check(lambda x: x.transpose(1, 0, 2), (2, 3, 4))
    check(lambda x: x[1:, ::2], (3, 4))
    check(lambda a, b: T.concat([a, b], axis=1), (2, 3), (2, 2))


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0)])
def test_conv2d(stride, pad):
    check(
        lambda x, w, b: T.conv2d(x, w, b, stride=stride, pad=pad),
        (2, 3, 6, 6),
        (4, 3, 3, 3),
        (4,),
    )


def test_conv2d_odd_geometry():
    # stride 2 with a leftover column exercises the slice-accumulate backward
    check(lambda x, w: T.conv2d(x, w, stride=2, pad=1), (1, 2, 7, 7), (3, 2, 3, 3))


def test_upsample_nearest():
    check(lambda x: T.upsample_nearest2x(x), (2, 3, 4, 4))


def test_group_norm():
    check(
        lambda x, g, b: T.group_norm(x, g, b, groups=2),
        (2, 4, 3, 3),
        (4,),
        (4,),
        tol=1e-6,
    )


def test_embedding():
    rng = np.random.default_rng(4)
    table = T.Tensor(rng.standard_normal((7, 3)), requires_grad=True)
    ids = np.array([[0, 2, 2], [5, 1, 0]])
    out = T.embedding(table, ids)
    proj = rng.standard_normal(out.shape)
    (out * T.Tensor(proj)).sum().backward()
    num = numeric_grad(lambda: float((table.data[ids] * proj).sum()), table.data)
    np.testing.assert_allclose(table.grad, num, rtol=1e-5, atol=1e-7)


def test_cross_entropy():
    rng = np.random.default_rng(5)
    logits = T.Tensor(rng.standard_normal((4, 6)), requires_grad=True)
    targets = np.array([1, 0, 5, 2])
    T.cross_entropy(logits, targets).backward()

    def ref():
        z = logits.data - logits.data.max(axis=1, keepdims=True)
        return float(np.mean(np.log(np.exp(z).sum(axis=1)) - z[np.arange(4), targets]))

    num = numeric_grad(ref, logits.data)
    np.testing.assert_allclose(logits.grad, num, rtol=1e-5, atol=1e-7)


def test_detach_blocks_gradient():
    x = T.Tensor(np.ones((2, 2)), requires_grad=True)
    y = (x * 3.0).detach()
    z = (y * 2.0).sum()
    z.backward()
    assert x.grad is None


def test_no_grad_context():
    x = T.Tensor(np.ones(3), requires_grad=True)
    with T.no_grad():
        y = (x * 2.0).sum()
    assert y._backward is None
    y2 = (x * 2.0).sum()
    y2.backward()
    np.testing.assert_allclose(x.grad, 2.0 * np.ones(3))


def test_grad_accumulates_on_reuse():
    x = T.Tensor(np.array([2.0]), requires_grad=True)
    y = x * x + x  # dy/dx = 2x + 1 = 5
    y.sum().backward()
    np.testing.assert_allclose(x.grad, [5.0])


def test_adamw_decreases_quadratic():
    rng = np.random.default_rng(6)
    x = T.Tensor(rng.standard_normal(8), requires_grad=True)
    opt = nn.AdamW([x], lr=0.1)
    first = float((x.data ** 2).sum())
    for _ in range(200):
        opt.zero_grad()
        loss = (x * x).sum()
        loss.backward()
        opt.step()
    assert float((x.data ** 2).sum()) < 1e-3 * first


def test_frozen_param_untouched_by_optimizer():
    x = T.Tensor(np.ones(3), requires_grad=True)
    frozen = T.Tensor(np.ones(3), requires_grad=False)
    opt = nn.AdamW([x, frozen], lr=0.1)
    loss = ((x + frozen) * (x + frozen)).sum()
    loss.backward()
    opt.step()
    np.testing.assert_array_equal(frozen.data, np.ones(3))
    assert not np.array_equal(x.data, np.ones(3))
