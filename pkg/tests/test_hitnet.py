"""Hitting-time networks: head validity, gradients, loss, training loop."""

import math

import numpy as np
import pytest

from rtnsurv.distributions import dist_cdf, lognormal
from rtnsurv.errors import TrainingError
from rtnsurv.grid import TimeGrid
from rtnsurv.hitnet import (
    HEADS,
    HitNet,
    NetSpec,
    TrainData,
    composite_loss,
    random_search,
    sample_spec,
    train,
)

GRID = TimeGrid(0.0, 5, 100)    # 21 bins
STATIC_DIM = 4


def tiny_spec(mode="static", head="nonparametric", **kw):
    base = dict(
        mode=mode, head=head, conv_layers=1, filters_per_layer=3, kernel_size=3,
        dense_layers=1, neurons=8, learning_rate=1e-2, window=8, n_mixtures=2,
        eta_sigma=1.0, batch_size=16, seed=3,
    )
    base.update(kw)
    return NetSpec(**base)


def make_inputs(rng, n, spec):
    xs = rng.normal(size=(n, STATIC_DIM))
    if spec.mode == "sliding":
        xd = rng.normal(size=(n, 3, spec.window + 1))
    elif spec.mode == "raw":
        xd = rng.normal(size=(n, 6))
    else:
        xd = None
    return xs, xd


def assert_valid_pmf(pmf):
    assert np.all(pmf >= -1e-12)
    np.testing.assert_allclose(pmf.sum(axis=1), 1.0, atol=1e-6)
    cdf = np.cumsum(pmf, axis=1)
    assert np.all(np.diff(cdf, axis=1) >= -1e-12)


@pytest.mark.parametrize("head", HEADS)
def test_random_parameter_draws_emit_valid_curves(head):
    rng = np.random.default_rng(0)
    spec = tiny_spec(mode="sliding", head=head)
    net = HitNet(spec, STATIC_DIM, GRID)
    xs, xd = make_inputs(rng, 4, spec)
    for _ in range(334):
        for p in net.parameters():
            p.data[...] = rng.normal(0.0, 1.0, size=p.data.shape)
        pmf = net.forward_batch(xs, xd).data
        assert_valid_pmf(pmf)


def test_uniform_pmf_from_zero_preactivations():
    spec = tiny_spec(head="nonparametric")
    net = HitNet(spec, STATIC_DIM, GRID)
    net.out_weight.data[...] = 0.0
    net.out_bias.data[...] = 0.0
    xs, _ = make_inputs(np.random.default_rng(1), 3, spec)
    pmf = net.forward_batch(xs, None).data
    np.testing.assert_allclose(pmf, 1.0 / GRID.n_points, atol=1e-12)


def test_kernel_head_single_center_bump():
    spec = tiny_spec(head="kernel")
    net = HitNet(spec, STATIC_DIM, GRID)
    net.out_weight.data[...] = 0.0
    net.out_bias.data[...] = -1e3
    center = 10
    net.out_bias.data[center] = 1e3    # softmax weight ~1 on one grid point
    xs, _ = make_inputs(np.random.default_rng(2), 1, spec)
    pmf = net.forward_batch(xs, None).data[0]
    expected = net.kernel_matrix[center]
    expected = expected / expected.sum()
    np.testing.assert_allclose(pmf, expected, atol=1e-9)
    assert pmf.sum() == pytest.approx(1.0, abs=1e-12)


def test_mixture_single_component_matches_discretized_lognormal():
    spec = tiny_spec(head="mixture", n_mixtures=1)
    net = HitNet(spec, STATIC_DIM, GRID)
    mu, sigma = math.log(40.0), 0.6
    net.out_weight.data[...] = 0.0
    net.out_bias.data[...] = [0.0, mu, math.log(sigma)]
    xs, _ = make_inputs(np.random.default_rng(3), 1, spec)
    pmf = net.forward_batch(xs, None).data[0]

    dist = lognormal(mu, sigma)
    pts = GRID.offsets()
    cdf = np.concatenate([[0.0], dist_cdf(dist, pts[1:-1]), [1.0]])
    expected = np.diff(np.concatenate([[0.0], cdf[1:]]))
    expected[0] = cdf[1] - 0.0
    manual = np.empty(GRID.n_points)
    manual[0] = 0.0
    manual[1] = cdf[1]
    manual[2:-1] = np.diff(cdf[1:-1])
    manual[-1] = 1.0 - cdf[-2]
    np.testing.assert_allclose(pmf, manual, atol=1e-9)


def test_kernel_bandwidth_to_zero_matches_nonparametric():
    rng = np.random.default_rng(4)
    xs, _ = make_inputs(rng, 5, tiny_spec())
    np_net = HitNet(tiny_spec(head="nonparametric"), STATIC_DIM, GRID)
    k_net = HitNet(tiny_spec(head="kernel", kernel_bandwidth=1e-6), STATIC_DIM, GRID)
    for p, q in zip(np_net.parameters(), k_net.parameters()):
        q.data[...] = p.data
    a = np_net.forward_batch(xs, None).data
    b = k_net.forward_batch(xs, None).data
    assert 0.5 * np.abs(a - b).sum(axis=1).max() < 1e-3   # total variation


@pytest.mark.parametrize("mode", ["static", "sliding", "raw"])
@pytest.mark.parametrize("head", HEADS)
def test_composite_loss_gradient_check(mode, head):
    rng = np.random.default_rng(7)
    spec = tiny_spec(mode=mode, head=head)
    net = HitNet(spec, STATIC_DIM, GRID)
    n = 8
    xs, xd = make_inputs(rng, n, spec)
    times = rng.uniform(3.0, 90.0, n)
    events = rng.uniform(size=n) < 0.8
    events[:2] = True

    def loss_value():
        pmf = net.forward_batch(xs, xd)
        loss, _ = composite_loss(pmf, times, events, GRID, spec.eta_sigma, net=net)
        return loss

    for p in net.parameters():
        p.grad = None
    loss_value().backward()

    h = 1e-6
    for p in net.parameters():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.ravel()
        picks = rng.choice(flat.size, size=min(6, flat.size), replace=False)
        for i in picks:
            old = flat[i]
            flat[i] = old + h
            up = float(loss_value().data)
            flat[i] = old - h
            down = float(loss_value().data)
            flat[i] = old
            numeric = (up - down) / (2 * h)
            denom = max(abs(numeric), 1e-3)
            assert abs(analytic.ravel()[i] - numeric) / denom < 1e-4, (
                f"{mode}/{head} param mismatch"
            )


def test_loss_reference_values():
    # single record with all mass on its bin: likelihood term is zero
    spec = tiny_spec()
    pmf_data = np.zeros((1, GRID.n_points))
    target = 22.0
    b = GRID.bin_index(target)
    pmf_data[0, b] = 1.0
    from rtnsurv.autodiff import Tensor

    loss, clamped = composite_loss(Tensor(pmf_data), [target], [True], GRID, 1.0)
    assert float(loss.data) == pytest.approx(0.0, abs=1e-9)
    assert clamped == 0

    # pair with equal CDFs at the earlier time contributes exp(0) = 1
    pmf2 = np.tile(pmf_data, (2, 1))
    loss2, _ = composite_loss(Tensor(pmf2), [target, 60.0], [True, True], GRID, 1.0)
    # second record has f(60)=0 -> clamped log; isolate the ranking term
    f_clamp = math.log(1e-12)
    assert float(loss2.data) == pytest.approx(-f_clamp + 1.0, abs=1e-9)


def test_ranking_term_permutation_invariance():
    rng = np.random.default_rng(9)
    spec = tiny_spec(mode="raw", head="nonparametric")
    net = HitNet(spec, STATIC_DIM, GRID)
    n = 12
    xs, xd = make_inputs(rng, n, spec)
    times = rng.uniform(3.0, 90.0, n)
    events = np.ones(n, dtype=bool)

    def loss_for(order):
        pmf = net.forward_batch(xs[order], xd[order])
        loss, _ = composite_loss(pmf, times[order], events[order], GRID, 0.7)
        return float(loss.data)

    base = loss_for(np.arange(n))
    for _ in range(3):
        perm = rng.permutation(n)
        assert loss_for(perm) == pytest.approx(base, abs=1e-10)


def test_inference_is_deterministic_despite_dropout():
    rng = np.random.default_rng(10)
    spec = tiny_spec(mode="sliding", head="kernel", dropout=0.5)
    net = HitNet(spec, STATIC_DIM, GRID)
    xs, xd = make_inputs(rng, 4, spec)
    a = net.forward_batch(xs, xd, training=False).data
    b = net.forward_batch(xs, xd, training=False).data
    assert a.tobytes() == b.tobytes()


def toy_training_data(rng, n, spec):
    xs, xd = make_inputs(rng, n, spec)
    signal = xs[:, 0]
    times = np.exp(3.0 + 0.8 * signal + rng.normal(0, 0.3, n))
    times = np.clip(times, 3.0, 95.0)
    return TrainData(xs, xd, times, np.ones(n, dtype=bool))


def test_training_reduces_loss_and_returns_best():
    rng = np.random.default_rng(11)
    spec = tiny_spec(mode="static", head="nonparametric", learning_rate=1e-2)
    net = HitNet(spec, STATIC_DIM, GRID)
    data = toy_training_data(rng, 200, spec)
    holdout = toy_training_data(rng, 80, spec)
    history = train(net, data, holdout, max_epochs=12, seed=5)

    assert history.rows[0][1] < history.initial_train_loss
    recorded = [r[2] for r in history.rows]
    assert history.best_holdout_loss == pytest.approx(
        min(min(recorded), history.initial_holdout_loss)
    )
    # restored parameters reproduce the best holdout loss
    from rtnsurv.hitnet import _dataset_loss

    assert _dataset_loss(net, holdout, spec.eta_sigma) == pytest.approx(
        history.best_holdout_loss, abs=1e-9
    )


def test_training_same_seed_is_identical():
    rng = np.random.default_rng(12)
    spec = tiny_spec(mode="raw", head="nonparametric")
    data = toy_training_data(rng, 120, spec)
    holdout = toy_training_data(rng, 60, spec)
    finals = []
    for _ in range(2):
        net = HitNet(spec, STATIC_DIM, GRID)
        history = train(net, data, holdout, max_epochs=5, seed=9)
        finals.append(history.rows[-1])
    assert finals[0] == finals[1]


def test_non_finite_loss_raises_training_error():
    rng = np.random.default_rng(13)
    spec = tiny_spec(mode="static", head="mixture", learning_rate=1e-2)
    net = HitNet(spec, STATIC_DIM, GRID)
    net.out_weight.data[...] = np.nan
    data = toy_training_data(rng, 40, spec)
    with pytest.raises(TrainingError) as err:
        train(net, data, data, max_epochs=1, seed=1)
    assert err.value.batch_id is not None


def test_random_search_orders_and_dedups():
    calls = []

    def evaluate(spec):
        loss = float(spec.neurons)     # deterministic fake objective
        calls.append(spec)
        return loss, spec.neurons * 10, f"net-{spec.neurons}"

    best, board = random_search(evaluate, trials=8, mode="static",
                                head="nonparametric", seed=2)
    losses = [row[1] for row in board]
    assert losses == sorted(losses)
    assert best == board[0][3]

    # grid pinned to one point -> a single leaderboard row
    overrides = dict(conv_layers=1, filters_per_layer=4, kernel_size=5,
                     dense_layers=1, neurons=32, learning_rate=1e-4, window=30,
                     n_mixtures=1, eta_sigma=0.1)
    _, board = random_search(evaluate, trials=5, mode="static",
                             head="nonparametric", seed=3, overrides=overrides)
    assert len(board) == 1

    with pytest.raises(ValueError):
        random_search(evaluate, trials=0, mode="static", head="nonparametric")


def test_spec_validation_and_sampling():
    with pytest.raises(ValueError):
        NetSpec(mode="banana")
    with pytest.raises(ValueError):
        NetSpec(head="banana")
    rng = np.random.default_rng(0)
    from rtnsurv.hitnet import HYPERPARAMETER_GRID

    for _ in range(30):
        spec = sample_spec(rng, "sliding", "kernel")
        assert spec.conv_layers in HYPERPARAMETER_GRID["conv_layers"]
        assert spec.neurons in HYPERPARAMETER_GRID["neurons"]
        assert spec.window in HYPERPARAMETER_GRID["window"]
