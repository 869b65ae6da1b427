"""Finite-difference checks for every autodiff primitive."""

import numpy as np
import pytest

from rtnsurv.autodiff import Adam, Tensor, concat, conv1d, parameter, softmax, tensor


def numeric_grad(f, params, h=1e-6):
    """Central finite differences of scalar f() w.r.t. each parameter array."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = f()
            flat[i] = old - h
            down = f()
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def check(f_tensor, params, tol=1e-6):
    for p in params:
        p.grad = None
    out = f_tensor()
    out.backward()
    analytic = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    numeric = numeric_grad(lambda: float(f_tensor().data), params)
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(n), 1e-4)
        assert np.max(np.abs(a - n) / denom) < tol


def test_arithmetic_and_broadcasting():
    rng = np.random.default_rng(0)
    a = parameter(rng.normal(size=(3, 4)))
    b = parameter(rng.normal(size=(4,)))

    def f():
        return ((a * b + 2.0 * a - b / 3.0) * (a + 1.5)).sum()

    check(f, [a, b])


def test_matmul_and_transpose():
    rng = np.random.default_rng(1)
    a = parameter(rng.normal(size=(3, 5)))
    b = parameter(rng.normal(size=(5, 2)))

    def f():
        return ((a @ b).T @ (a @ b)).sum()

    check(f, [a, b])


def test_elementwise_ops():
    rng = np.random.default_rng(2)
    a = parameter(rng.uniform(0.5, 2.0, size=(6,)))

    def f():
        return (a.exp().log() + a.erf() + a.relu() + a.abs() + a.square()).sum()

    check(f, [a])


def test_clamp_and_getitem_gather():
    rng = np.random.default_rng(3)
    a = parameter(rng.normal(size=(4, 5)))
    rows = np.array([0, 1, 2, 3])
    cols = np.array([4, 0, 2, 2])

    def f():
        picked = a.gather(rows, cols)
        sliced = a[:, 1:3]
        taken = a.take_columns(np.array([0, 0, 3]))
        return (picked.square().sum() + sliced.sum() + taken.sum()
                + a.clamp_min(0.1).log().sum())

    check(f, [a])


def test_sum_mean_cumsum_reshape():
    rng = np.random.default_rng(4)
    a = parameter(rng.normal(size=(3, 4)))

    def f():
        return (a.cumsum(1).mean(axis=0).square().sum()
                + a.reshape(2, 6).sum(axis=1, keepdims=True).square().sum())

    check(f, [a])


def test_concat_and_softmax():
    rng = np.random.default_rng(5)
    a = parameter(rng.normal(size=(2, 3)))
    b = parameter(rng.normal(size=(2, 2)))

    def f():
        z = concat([a, b], axis=1)
        p = softmax(z, axis=1)
        return (p * p).sum() + p[:, 0].sum()

    check(f, [a, b])


def test_conv1d_gradients():
    rng = np.random.default_rng(6)
    x = parameter(rng.normal(size=(2, 3, 12)))
    w = parameter(rng.normal(size=(4, 3, 5)) * 0.3)
    b = parameter(rng.normal(size=(4,)))

    def f():
        return conv1d(x, w, b).relu().square().sum()

    check(f, [x, w, b])


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(7)
    z = tensor(rng.normal(size=(5, 9)) * 3)
    p = softmax(z, axis=1)
    np.testing.assert_allclose(p.data.sum(axis=1), 1.0, atol=1e-12)


def test_graph_reuse_accumulates_once():
    a = parameter(np.array([2.0]))
    y = a * a + a * 3.0  # a appears in two paths
    y.backward()
    assert a.grad[0] == pytest.approx(2 * 2.0 + 3.0)


def test_adam_reduces_quadratic():
    p = parameter(np.array([5.0, -3.0]))
    opt = Adam([p], lr=0.1)
    for _ in range(200):
        opt.zero_grad()
        loss = (p * p).sum()
        loss.backward()
        opt.step()
    assert np.abs(p.data).max() < 0.1
