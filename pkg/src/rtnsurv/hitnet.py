"""Neural hitting-time models over a discrete duration grid.

Three interchangeable modes share the dense trunk: `static` consumes the
time-invariant covariates once per incident; `sliding` runs 1-D convolutions
over a 3-channel residual window and concatenates the learned features with
the static ones; `raw` replaces the convolutional features with the hand
engineered residual levels and gradients. Each mode ends in one of three
heads: a softmax over duration bins, a log-normal mixture, or kernel-smoothed
softmax weights. Training minimises the survival likelihood plus a pairwise
ranking penalty, with elastic-net weight regularization, Adam, plateau decay,
and holdout early stopping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Adam, Tensor, concat, conv1d, parameter, softmax
from .errors import TrainingError
from .grid import SurvivalCurve, TimeGrid

__all__ = [
    "NetSpec",
    "HitNet",
    "TrainData",
    "composite_loss",
    "train",
    "random_search",
    "HYPERPARAMETER_GRID",
    "MODES",
    "HEADS",
]

MODES = ("static", "sliding", "raw")
HEADS = ("nonparametric", "mixture", "kernel")

# the random-search grid; dropout, elastic net, bandwidth and batch are fixed
HYPERPARAMETER_GRID = {
    "conv_layers": (1, 2, 3),
    "filters_per_layer": (4, 8, 16),
    "kernel_size": (5, 10),
    "dense_layers": (1, 2, 3),
    "neurons": (32, 64, 128, 256),
    "learning_rate": (1e-4, 1e-2),
    "window": (30, 60),
    "n_mixtures": (1, 2, 3),
    "eta_sigma": (0.1, 1.0),
}

PMF_FLOOR = 1e-12


@dataclass(frozen=True)
class NetSpec:
    mode: str = "static"
    head: str = "nonparametric"
    conv_layers: int = 2
    filters_per_layer: int = 8
    kernel_size: int = 5
    dense_layers: int = 2
    neurons: int = 64
    dropout: float = 0.5
    l1: float = 1e-4
    l2: float = 1e-4
    learning_rate: float = 1e-2
    window: int = 30
    n_mixtures: int = 1
    kernel_bandwidth: float = 3.0
    eta_sigma: float = 1.0
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}")


def _he(rng, fan_in, shape):
    return rng.normal(0.0, math.sqrt(2.0 / max(fan_in, 1)), size=shape)


class HitNet:
    """Feed-forward / temporal-convolution hitting network on a TimeGrid."""

    def __init__(self, spec: NetSpec, static_dim: int, grid: TimeGrid,
                 log_duration_mean: float = 3.5, log_duration_sd: float = 0.8):
        self.spec = spec
        self.static_dim = static_dim
        self.grid = grid
        self.log_duration_mean = log_duration_mean
        self.log_duration_sd = log_duration_sd
        self.clamp_warnings = 0
        rng = np.random.default_rng(spec.seed)

        self.conv_weights = []
        self.conv_biases = []
        trunk_in = static_dim
        if spec.mode == "sliding":
            length = spec.window + 1
            in_ch = 3
            for _ in range(spec.conv_layers):
                k = spec.kernel_size
                if length - k + 1 < 1:
                    raise ValueError("window too short for the convolution stack")
                w = parameter(_he(rng, in_ch * k, (spec.filters_per_layer, in_ch, k)))
                b = parameter(np.zeros(spec.filters_per_layer))
                self.conv_weights.append(w)
                self.conv_biases.append(b)
                length = length - k + 1
                in_ch = spec.filters_per_layer
            self.flat_dim = in_ch * length
            trunk_in += self.flat_dim
        elif spec.mode == "raw":
            self.flat_dim = 6
            trunk_in += 6
        else:
            self.flat_dim = 0

        if spec.head == "mixture":
            out_dim = 3 * spec.n_mixtures
        else:
            out_dim = grid.n_points

        self.dense_weights = []
        self.dense_biases = []
        dim = trunk_in
        for _ in range(spec.dense_layers):
            self.dense_weights.append(parameter(_he(rng, dim, (dim, spec.neurons))))
            self.dense_biases.append(parameter(np.zeros(spec.neurons)))
            dim = spec.neurons
        self.out_weight = parameter(rng.normal(0.0, 0.01, size=(dim, out_dim)))
        out_bias = np.zeros(out_dim)
        if spec.head == "mixture":
            nm = spec.n_mixtures
            # start the mixture on the training log-duration scale
            out_bias[nm:2 * nm] = log_duration_mean
            out_bias[2 * nm:] = math.log(max(log_duration_sd, 1e-3))
        self.out_bias = parameter(out_bias)

        if spec.head == "kernel":
            pts = grid.offsets()
            h = spec.kernel_bandwidth
            self.kernel_matrix = np.exp(-0.5 * ((pts[:, None] - pts[None, :]) / h) ** 2)
        else:
            self.kernel_matrix = None

        # interior grid offsets where mixture CDFs are evaluated
        self._log_interior = np.log(grid.offsets()[1:-1])

    # ---- parameters ----------------------------------------------------------

    def parameters(self):
        return (self.conv_weights + self.conv_biases + self.dense_weights
                + self.dense_biases + [self.out_weight, self.out_bias])

    def weight_tensors(self):
        """Weight matrices subject to the elastic-net penalty (biases exempt)."""
        return self.conv_weights + self.dense_weights + [self.out_weight]

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def state(self) -> dict:
        return {f"p{i}": p.data.copy() for i, p in enumerate(self.parameters())}

    def load_state(self, state: dict):
        for i, p in enumerate(self.parameters()):
            p.data[...] = state[f"p{i}"]

    # ---- forward --------------------------------------------------------------

    def forward_batch(self, x_static: np.ndarray, x_dynamic: np.ndarray | None,
                      training: bool = False,
                      dropout_rng: np.random.Generator | None = None) -> Tensor:
        """Probability masses over the grid, one row per input."""
        spec = self.spec
        parts = []
        if spec.mode == "sliding":
            if x_dynamic is None:
                raise ValueError("sliding mode needs a residual window")
            h = Tensor(np.asarray(x_dynamic, dtype=float))
            for w, b in zip(self.conv_weights, self.conv_biases):
                h = conv1d(h, w, b).relu()
            parts.append(h.reshape(h.shape[0], self.flat_dim))
        elif spec.mode == "raw":
            if x_dynamic is None:
                raise ValueError("raw mode needs snapshot levels and gradients")
            parts.append(Tensor(np.asarray(x_dynamic, dtype=float)))
        elif x_dynamic is not None:
            raise ValueError("static mode takes no dynamic input")
        parts.append(Tensor(np.asarray(x_static, dtype=float)))
        h = concat(parts, axis=1) if len(parts) > 1 else parts[0]

        for w, b in zip(self.dense_weights, self.dense_biases):
            h = (h @ w + b).relu()
            if training and spec.dropout > 0:
                if dropout_rng is None:
                    raise ValueError("training forward needs a dropout generator")
                mask = (dropout_rng.random(h.shape) >= spec.dropout) / (1.0 - spec.dropout)
                h = h * Tensor(mask)
        z = h @ self.out_weight + self.out_bias
        return self._head(z)

    def _head(self, z: Tensor) -> Tensor:
        spec = self.spec
        if spec.head == "nonparametric":
            return softmax(z, axis=1)
        if spec.head == "kernel":
            omega = softmax(z, axis=1)
            smoothed = omega @ Tensor(self.kernel_matrix)
            return smoothed / smoothed.sum(axis=1, keepdims=True)
        # mixture of log-normals discretized onto the grid
        nm = spec.n_mixtures
        B = z.shape[0]
        pi = softmax(z[:, :nm], axis=1).reshape(B, nm, 1)
        mu = z[:, nm:2 * nm].reshape(B, nm, 1)
        sigma = z[:, 2 * nm:].exp().clamp_min(1e-4).reshape(B, nm, 1)
        pts = Tensor(self._log_interior.reshape(1, 1, -1))
        zscore = (pts - mu) / sigma
        phi = (zscore / math.sqrt(2.0)).erf() * 0.5 + 0.5
        cdf = (pi * phi).sum(axis=1)            # (B, n_points - 2)
        first = cdf[:, :1]
        middle = cdf[:, 1:] - cdf[:, :-1]
        last = 1.0 - cdf[:, -1:]
        zeros = Tensor(np.zeros((B, 1)))
        return concat([zeros, first, middle, last], axis=1)

    def predict_curve(self, x_static: np.ndarray,
                      x_dynamic: np.ndarray | None = None) -> SurvivalCurve:
        xs = np.asarray(x_static, dtype=float).reshape(1, -1)
        xd = None
        if x_dynamic is not None:
            xd = np.asarray(x_dynamic, dtype=float)
            xd = xd.reshape((1,) + xd.shape) if xd.ndim in (1, 2) else xd
        pmf = self.forward_batch(xs, xd, training=False)
        return SurvivalCurve(self.grid, np.clip(pmf.data[0], 0.0, None))

    def predict_cdf_matrix(self, x_static: np.ndarray,
                           x_dynamic: np.ndarray | None = None,
                           chunk: int = 1024) -> np.ndarray:
        rows = []
        for lo in range(0, len(x_static), chunk):
            sl = slice(lo, lo + chunk)
            dyn = None if x_dynamic is None else x_dynamic[sl]
            pmf = self.forward_batch(x_static[sl], dyn, training=False)
            rows.append(np.cumsum(np.clip(pmf.data, 0.0, None), axis=1))
        return np.vstack(rows)


def composite_loss(pmf: Tensor, target_times, events, grid: TimeGrid,
                   eta_sigma: float, net: HitNet | None = None):
    """Likelihood + ranking loss; returns (loss Tensor, clamp count).

    The likelihood term uses the mass of the bin containing each target and
    the CDF at that bin; the ranking term penalises pairs whose cumulative
    failure probabilities at the earlier event time are mis-ordered. When a
    net is given, its elastic-net weight penalty is added and its clamp
    warning counter updated.
    """
    target_times = np.asarray(target_times, dtype=float)
    ev = np.asarray(events, dtype=bool)
    B = pmf.shape[0]
    bins = grid.bin_index(target_times - grid.origin)
    rows = np.arange(B)

    cdf = pmf.cumsum(1)
    f_tau = pmf.gather(rows, bins)
    big_f = cdf.gather(rows, bins)
    clamped = int((f_tau.data[ev] <= PMF_FLOOR).sum())
    clamped += int(((1.0 - big_f.data[~ev]) <= PMF_FLOOR).sum())

    delta = Tensor(ev.astype(float))
    loglik = (delta * f_tau.clamp_min(PMF_FLOOR).log()
              + (1.0 - delta) * (1.0 - big_f).clamp_min(PMF_FLOOR).log()).sum()
    loss = -loglik

    if B >= 2:
        pair_mask = (target_times[:, None] < target_times[None, :]).astype(float)
        if pair_mask.any():
            P = cdf.take_columns(bins)          # P[j, i] = F_j at tau_i's bin
            diff = f_tau.reshape(B, 1) - P.T    # diff[i, j] = F_i(t_i) - F_j(t_i)
            ranking = (Tensor(pair_mask) * ((-1.0 / eta_sigma) * diff).exp()).sum()
            loss = loss + ranking

    if net is not None:
        net.clamp_warnings += clamped
        spec = net.spec
        for w in net.weight_tensors():
            loss = loss + spec.l1 * w.abs().sum() + spec.l2 * w.square().sum()
    return loss, clamped


@dataclass(frozen=True)
class TrainData:
    x_static: np.ndarray
    x_dynamic: np.ndarray | None
    times: np.ndarray                   # absolute durations or remaining times
    events: np.ndarray

    def __len__(self):
        return len(self.times)

    def subset(self, idx):
        dyn = None if self.x_dynamic is None else self.x_dynamic[idx]
        return TrainData(self.x_static[idx], dyn, self.times[idx], self.events[idx])


def _dataset_loss(net: HitNet, data: TrainData, eta_sigma: float) -> float:
    pmf = net.forward_batch(data.x_static, data.x_dynamic, training=False)
    loss, _ = composite_loss(pmf, data.times, data.events, net.grid, eta_sigma)
    return float(loss.data) / max(len(data), 1)


@dataclass
class TrainHistory:
    rows: list = field(default_factory=list)    # (epoch, train, holdout, lr)
    initial_train_loss: float = 0.0
    initial_holdout_loss: float = 0.0
    best_holdout_loss: float = 0.0
    best_epoch: int = 0

    def to_records(self):
        return [
            {"epoch": e, "train_loss": tr, "holdout_loss": ho, "learning_rate": lr}
            for e, tr, ho, lr in self.rows
        ]


def train(net: HitNet, data: TrainData, holdout: TrainData,
          max_epochs: int = 200, plateau_patience: int = 5,
          stop_patience: int = 15, seed: int = 0) -> TrainHistory:
    """Minibatch Adam with plateau learning-rate halving and early stopping.

    Halves the learning rate when the holdout loss has not improved for
    `plateau_patience` epochs, stops after `stop_patience` non-improving
    epochs, and restores the parameters of the best holdout epoch.
    """
    spec = net.spec
    rng = np.random.default_rng(seed)
    opt = Adam(net.parameters(), lr=spec.learning_rate)
    history = TrainHistory()
    history.initial_train_loss = _dataset_loss(net, data, spec.eta_sigma)
    history.initial_holdout_loss = _dataset_loss(net, holdout, spec.eta_sigma)

    best = net.state()
    best_loss = history.initial_holdout_loss
    history.best_holdout_loss = best_loss
    since_best = 0
    since_decay = 0
    n = len(data)

    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, spec.batch_size):
            batch_ids = order[lo:lo + spec.batch_size]
            batch = data.subset(batch_ids)
            opt.zero_grad()
            pmf = net.forward_batch(batch.x_static, batch.x_dynamic,
                                    training=True, dropout_rng=rng)
            loss, _ = composite_loss(pmf, batch.times, batch.events, net.grid,
                                     spec.eta_sigma, net=net)
            if not np.isfinite(loss.data):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}", batch_id=lo // spec.batch_size
                )
            loss.backward()
            opt.step()
            total += float(loss.data)

        train_loss = total / n
        holdout_loss = _dataset_loss(net, holdout, spec.eta_sigma)
        history.rows.append((epoch, train_loss, holdout_loss, opt.lr))

        if holdout_loss < best_loss - 1e-12:
            best_loss = holdout_loss
            best = net.state()
            history.best_holdout_loss = best_loss
            history.best_epoch = epoch
            since_best = 0
            since_decay = 0
        else:
            since_best += 1
            since_decay += 1
            if since_decay >= plateau_patience:
                opt.lr *= 0.5
                since_decay = 0
            if since_best >= stop_patience:
                break

    net.load_state(best)
    return history


def sample_spec(rng: np.random.Generator, mode: str, head: str,
                overrides: dict | None = None) -> NetSpec:
    """One independent uniform draw from the hyper-parameter grid."""
    draw = {name: values[rng.integers(0, len(values))]
            for name, values in HYPERPARAMETER_GRID.items()}
    draw["window"] = int(draw["window"])
    spec = NetSpec(
        mode=mode, head=head,
        conv_layers=int(draw["conv_layers"]),
        filters_per_layer=int(draw["filters_per_layer"]),
        kernel_size=int(draw["kernel_size"]),
        dense_layers=int(draw["dense_layers"]),
        neurons=int(draw["neurons"]),
        learning_rate=float(draw["learning_rate"]),
        window=int(draw["window"]),
        n_mixtures=int(draw["n_mixtures"]),
        eta_sigma=float(draw["eta_sigma"]),
        seed=int(rng.integers(0, 2**31 - 1)),
    )
    if overrides:
        spec = replace(spec, **overrides)
    return spec


def random_search(evaluate, trials: int, mode: str, head: str, seed: int = 0,
                  overrides: dict | None = None):
    """Independent uniform draws from the grid, ranked by holdout loss.

    evaluate(spec) must return (holdout_loss, n_params, payload). Ties in
    loss break toward fewer parameters. Returns (best payload, leaderboard)
    where the leaderboard rows are (spec, loss, n_params, payload) after
    deduplicating identical specs.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    rng = np.random.default_rng(seed)
    rows = []
    seen = {}
    for _ in range(trials):
        spec = sample_spec(rng, mode, head, overrides)
        dedup_key = replace(spec, seed=0)
        if dedup_key in seen:
            continue
        loss, n_params, payload = evaluate(spec)
        seen[dedup_key] = True
        rows.append((spec, float(loss), int(n_params), payload))
    rows.sort(key=lambda r: (r[1], r[2]))
    return rows[0][3], rows
