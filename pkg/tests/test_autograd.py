import numpy as np
import pytest

import adists.autograd as ag
from oracles import box_sum_loops


def numeric_grad(f, x, h=1e-6):
    """Dense central-difference gradient of scalar f; smooth inputs only."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        xp = flat.copy(); xp[i] += h
        xm = flat.copy(); xm[i] -= h
        gf[i] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2 * h)
    return g


def tape_grad(build, x):
    tape = ag.Tape()
    node = tape.input(x)
    out = build(node)
    return float(out.value), tape.gradient(out, node)


def check_scalar_fn(build, x, tol=1e-6):
    _, got = tape_grad(build, x)
    want = numeric_grad(lambda v: float(ag.value_of(build_on_array(build, v))), x)
    assert got.shape == x.shape
    denom = max(1.0, float(np.abs(want).max()))
    assert np.max(np.abs(got - want)) / denom < tol


def build_on_array(build, v):
    tape = ag.Tape()
    return build(tape.input(v)).value


def test_unary_op_gradients():
    rng = np.random.default_rng(0)
    x = rng.random((2, 4, 4)) + 0.5  # positive, away from sqrt/relu corners
    check_scalar_fn(lambda n: ag.mean_all(ag.sqrt(n)), x)
    check_scalar_fn(lambda n: ag.mean_all(ag.expit(3.0 * n - 1.0)), x)
    check_scalar_fn(lambda n: ag.sum_all(n * n * n), x)
    check_scalar_fn(lambda n: ag.mean_all(ag.relu(n - 1.0) * n), x, tol=1e-5)


def test_arithmetic_and_broadcast_gradients():
    rng = np.random.default_rng(1)
    x = rng.random((3, 5, 5)) + 0.1
    c = rng.random((3, 1, 1))
    check_scalar_fn(lambda n: ag.mean_all((n - c) * (n - c)), x)
    check_scalar_fn(lambda n: ag.mean_all(n / (n + 1.0)), x)
    check_scalar_fn(lambda n: ag.mean_all(2.0 / (n + 2.0)), x)
    check_scalar_fn(lambda n: ag.mean_all((1.0 - n) + n * 0.25 - 3.0), x)


def test_reduction_gradients():
    rng = np.random.default_rng(2)
    x = rng.random((3, 4, 6))
    check_scalar_fn(lambda n: ag.sum_all(ag.mean_spatial(n) ** 2), x)
    check_scalar_fn(lambda n: ag.mean_all(ag.channel_mean(n * n)), x)
    check_scalar_fn(lambda n: ag.mean_all(ag.reshape(n, (6, 12)) ** 2), x)


def test_minimum_gradient_routes_to_smaller_side():
    a = np.array([1.0, 5.0, 2.0])
    b = np.array([3.0, 4.0, 2.0])
    tape = ag.Tape()
    na, nb = tape.input(a), tape.input(b)
    out = ag.sum_all(ag.minimum(na, nb))
    ga = tape.gradient(out, na)
    gb = tape.gradient(out, nb)
    assert np.array_equal(ga, [1.0, 0.0, 1.0])  # ties go to the first arg
    assert np.array_equal(gb, [0.0, 1.0, 0.0])


def test_box_sum_forward_matches_loops():
    rng = np.random.default_rng(3)
    for _ in range(20):
        c = int(rng.integers(1, 4))
        h = int(rng.integers(3, 10))
        w = int(rng.integers(3, 10))
        wh = int(rng.integers(1, h + 1))
        ww = int(rng.integers(1, w + 1))
        x = rng.normal(size=(c, h, w))
        got = ag.box_sum(x, wh, ww)
        assert np.max(np.abs(got - box_sum_loops(x, wh, ww))) < 1e-10


def test_box_sum_and_stride_gradients():
    rng = np.random.default_rng(4)
    x = rng.random((2, 7, 8))
    check_scalar_fn(lambda n: ag.mean_all(ag.box_sum(n, 3, 4) ** 2), x, tol=1e-5)
    check_scalar_fn(
        lambda n: ag.sum_all(ag.stride_slice(ag.box_sum(n, 2, 2), 2, 3) ** 2),
        x,
        tol=1e-5,
    )


def test_box_sum_window_too_large():
    with pytest.raises(ValueError):
        ag.box_sum(np.zeros((1, 3, 3)), 4, 2)


def test_conv2d_node_gradient():
    rng = np.random.default_rng(5)
    x = rng.random((2, 6, 6))
    f = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    for stride, padding in [(1, 1), (2, 1), (1, 0)]:
        check_scalar_fn(
            lambda n: ag.mean_all(ag.conv2d(n, f, b, stride=stride, padding=padding) ** 2),
            x,
            tol=1e-5,
        )


def test_l2_pool_node_gradient():
    rng = np.random.default_rng(6)
    x = rng.random((2, 6, 7)) + 0.2
    check_scalar_fn(lambda n: ag.sum_all(ag.l2_pool(n) ** 2), x, tol=1e-5)


def test_untraced_inputs_pass_through():
    x = np.ones((1, 4, 4))
    assert not ag.is_node(ag.conv2d(x, np.ones((1, 1, 3, 3)), padding=1))
    assert not ag.is_node(ag.l2_pool(x))
    assert not ag.is_node(ag.box_sum(x, 2, 2))
    assert np.array_equal(ag.stride_slice(x, 2, 2), x[..., ::2, ::2])


def test_gradient_of_untouched_leaf_is_zero():
    tape = ag.Tape()
    a = tape.input(np.ones(3))
    b = tape.input(np.full(3, 2.0))
    out = ag.sum_all(a * a)
    assert np.array_equal(tape.gradient(out, b), np.zeros(3))


def test_gradient_requires_scalar_output():
    tape = ag.Tape()
    a = tape.input(np.ones(3))
    with pytest.raises(ValueError):
        tape.gradient(a * 2.0, a)


def test_replay_reproduces_forward():
    rng = np.random.default_rng(7)
    x = rng.random((2, 5, 5))
    tape = ag.Tape()
    n = tape.input(x)
    out = ag.mean_all(ag.l2_pool(ag.relu(n - 0.3)) ** 2)
    values = tape.replay()
    assert np.allclose(values[out.idx], out.value)


def test_finite_diff_samples_smooth_function():
    # cubic in each coordinate: nonzero curvature, no kinks
    y = np.linspace(0.3, 0.9, 12)
    f = lambda v: float((v ** 3).sum())
    numeric, kink = ag.finite_diff_samples(f, y, list(range(12)), h=1e-3)
    assert not kink.any()
    assert np.max(np.abs(numeric - 3 * y ** 2) / (3 * y ** 2)) < 1e-5


def test_finite_diff_samples_flags_kink():
    # |v| has a branch flip inside the stencil around 0
    y = np.array([0.5, 1e-4, -0.7])
    f = lambda v: float(np.abs(v).sum())
    _, kink = ag.finite_diff_samples(f, y, [0, 1, 2], h=1e-3)
    assert not kink[0]
    assert kink[1]
    assert not kink[2]


def test_finite_diff_samples_flags_strong_curvature():
    # exp(20 v) at moderate h: halving the step moves the estimate
    y = np.array([0.2, 0.21])
    f = lambda v: float(np.exp(20.0 * v).sum())
    _, kink = ag.finite_diff_samples(f, y, [0, 1], h=5e-2)
    assert kink.all()
    _, kink_fine = ag.finite_diff_samples(f, y, [0, 1], h=1e-5)
    assert not kink_fine.any()


def test_grad_metric_mse():
    rng = np.random.default_rng(8)
    x = rng.random((3, 8, 8))
    y = rng.random((3, 8, 8))
    score, grad = ag.grad_metric("mse", x, y)
    assert abs(score - np.mean((x - y) ** 2)) < 1e-12
    assert np.max(np.abs(grad - 2.0 * (y - x) / y.size)) < 1e-12
    with pytest.raises(ValueError):
        ag.grad_metric("nope", x, y)
