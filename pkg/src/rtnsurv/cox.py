"""Cox proportional-hazards regression.

Partial likelihood maximised by Newton iterations with step halving;
tied event times are handled with the Efron correction. The baseline hazard
is the Breslow estimator carried at observed event times only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FitError
from .grid import SurvivalCurve, TimeGrid, curve_from_cdf

__all__ = ["CoxModel", "cox_fit", "cox_baseline", "cox_predict", "efron_loglik",
           "efron_gradient"]

MAX_ABS_BETA = 20.0
GRAD_TOL = 1e-8
RIDGE_JITTER = 1e-8


def _event_blocks(times: np.ndarray, events: np.ndarray):
    """Iterate distinct event times in decreasing order.

    Yields (time, risk_index_end, event_row_indices) where rows are positions
    in the time-descending sort order and the risk set is rows [0:risk_end).
    """
    order = np.argsort(-times, kind="stable")
    t_sorted = times[order]
    e_sorted = events[order]
    blocks = []
    i = 0
    n = len(times)
    while i < n:
        j = i
        while j < n and t_sorted[j] == t_sorted[i]:
            j += 1
        ev_rows = [r for r in range(i, j) if e_sorted[r]]
        if ev_rows:
            blocks.append((t_sorted[i], j, np.array(ev_rows)))
        i = j
    return order, blocks


def _efron_quantities(beta: np.ndarray, X: np.ndarray, times: np.ndarray,
                      events: np.ndarray, want_hessian: bool = True):
    """Log partial likelihood with gradient (and Hessian) under Efron ties."""
    n, p = X.shape
    order, blocks = _event_blocks(times, events)
    Xs = X[order]
    eta = Xs @ beta
    eta -= eta.max()  # common shift cancels in every ratio below
    w = np.exp(eta)
    xw = Xs * w[:, None]

    cum_w = np.cumsum(w)
    cum_xw = np.cumsum(xw, axis=0)
    if want_hessian:
        xxw = np.einsum("ni,nj->nij", Xs, Xs * w[:, None])
        cum_xxw = np.cumsum(xxw, axis=0)

    loglik = 0.0
    grad = np.zeros(p)
    hess = np.zeros((p, p)) if want_hessian else None

    for _, risk_end, ev_rows in blocks:
        d = len(ev_rows)
        phi = cum_w[risk_end - 1]
        sum_xw_risk = cum_xw[risk_end - 1]
        psi = w[ev_rows].sum()
        sum_xw_ev = xw[ev_rows].sum(axis=0)
        if want_hessian:
            sum_xxw_risk = cum_xxw[risk_end - 1]
            sum_xxw_ev = xxw[ev_rows].sum(axis=0)

        loglik += eta[ev_rows].sum()
        grad += Xs[ev_rows].sum(axis=0)
        for l in range(d):
            frac = l / d
            c = phi - frac * psi
            a = sum_xw_risk - frac * sum_xw_ev
            loglik -= np.log(c)
            grad -= a / c
            if want_hessian:
                B = sum_xxw_risk - frac * sum_xxw_ev
                hess -= B / c - np.outer(a, a) / (c * c)
    return loglik, grad, hess


def efron_loglik(beta, X, times, events) -> float:
    ll, _, _ = _efron_quantities(np.asarray(beta, float), np.asarray(X, float),
                                 np.asarray(times, float),
                                 np.asarray(events, bool), want_hessian=False)
    return float(ll)


def efron_gradient(beta, X, times, events) -> np.ndarray:
    _, g, _ = _efron_quantities(np.asarray(beta, float), np.asarray(X, float),
                                np.asarray(times, float),
                                np.asarray(events, bool), want_hessian=False)
    return g


@dataclass(frozen=True)
class CoxModel:
    beta: np.ndarray
    baseline_times: np.ndarray          # distinct event times, increasing
    baseline_increments: np.ndarray     # Breslow hazard jumps at those times
    loglik: float
    n_params: int
    n_iter: int
    feature_names: tuple = field(default=())

    def cumulative_baseline(self, t) -> np.ndarray:
        """Lambda_0 evaluated at arbitrary times (piecewise-constant steps)."""
        cum = np.cumsum(self.baseline_increments)
        idx = np.searchsorted(self.baseline_times, np.asarray(t, float), side="right")
        return np.where(idx > 0, cum[np.clip(idx - 1, 0, len(cum) - 1)], 0.0)

    def risk_score(self, x) -> np.ndarray:
        return np.exp(np.asarray(x, float) @ self.beta)


def cox_fit(X, times, events, max_iter: int = 60,
            feature_names=()) -> CoxModel:
    """Newton with step halving on the Efron-corrected log partial likelihood.

    Converges when the gradient max-norm drops below 1e-8; a coefficient
    escaping beyond |20| aborts with a separation diagnostic.
    """
    X = np.asarray(X, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    n, p = X.shape
    if events.sum() < 2:
        raise ValueError("need at least 2 observed events")

    beta = np.zeros(p)
    ll, g, H = _efron_quantities(beta, X, times, events)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # H is the loglik Hessian (negative semi-definite): solve (-H + jitter) s = g
        A = -H + RIDGE_JITTER * np.eye(p)
        try:
            step = np.linalg.solve(A, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(A, g, rcond=None)[0]
        # a monotone likelihood keeps proposing large steps even once the
        # gradient is flat, so convergence requires both to be small
        if np.max(np.abs(g)) < GRAD_TOL and np.max(np.abs(step)) < 1e-3:
            converged = True
            break
        scale = 1.0
        improved = False
        for _ in range(30):
            cand = beta + scale * step
            ll_new, g_new, H_new = _efron_quantities(cand, X, times, events)
            if ll_new >= ll - 1e-12:
                beta, ll, g, H = cand, ll_new, g_new, H_new
                improved = True
                break
            scale *= 0.5
        if np.max(np.abs(beta)) > MAX_ABS_BETA:
            j = int(np.argmax(np.abs(beta)))
            name = feature_names[j] if j < len(feature_names) else f"x{j}"
            raise FitError(
                f"monotone likelihood / separation: coefficient {name} diverged "
                f"(|beta| > {MAX_ABS_BETA})",
                best=beta,
            )
        if not improved:
            break
    if not converged and np.max(np.abs(g)) > 1e-4:
        raise FitError("cox fit did not converge", best=beta)

    bt, inc = _breslow(beta, X, times, events)
    return CoxModel(beta=beta, baseline_times=bt, baseline_increments=inc,
                    loglik=float(ll), n_params=p, n_iter=it,
                    feature_names=tuple(feature_names))


def _breslow(beta, X, times, events):
    order, blocks = _event_blocks(times, events)
    eta = X[order] @ beta
    w = np.exp(eta - 0.0)
    cum_w = np.cumsum(w)
    bt, inc = [], []
    for t, risk_end, ev_rows in blocks:
        bt.append(t)
        inc.append(len(ev_rows) / cum_w[risk_end - 1])
    bt = np.array(bt[::-1])
    inc = np.array(inc[::-1])
    return bt, inc


def cox_baseline(model: CoxModel, grid: TimeGrid):
    """Piecewise-constant baseline hazard resampled onto a grid."""
    from .grid import HazardCurve

    offs = grid.offsets()
    cum = model.cumulative_baseline(offs)
    jumps = np.diff(np.concatenate([[0.0], cum]))
    return HazardCurve(grid, jumps / grid.resolution, cumulative=cum)


def cox_predict(model: CoxModel, x, grid: TimeGrid) -> SurvivalCurve:
    """S(t) = exp(-Lambda_0(t) * exp(x'beta)) discretized onto the grid;
    the final bin absorbs residual mass."""
    risk = float(model.risk_score(np.asarray(x, float)))
    surv = np.exp(-model.cumulative_baseline(grid.offsets()) * risk)
    return curve_from_cdf(grid, 1.0 - surv)
