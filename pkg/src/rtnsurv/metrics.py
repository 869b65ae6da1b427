"""Evaluation harness: static/dynamic concordance, Brier score, MAPE, AUROC.

Dynamic metrics take, for every incident still active at prediction time t,
the predicted cumulative failure probability at the horizon t + dt. Undefined
metrics (no comparable pairs, single class) raise UndefinedMetric rather than
silently reporting a number; report assembly stores them as nulls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import UndefinedMetric
from .grid import SurvivalCurve, TimeGrid

__all__ = [
    "cindex_static",
    "cindex_dynamic",
    "brier",
    "auroc_dynamic",
    "mape_static",
    "mape_at_percentiles",
    "ape_per_minute",
    "EvaluationReport",
    "ReportEntry",
]

MAPE_MIN_DURATION = 60.0
DEFAULT_PERCENTILES = (30, 50, 70, 90)


def cindex_static(cdf_matrix: np.ndarray, grid: TimeGrid, durations) -> tuple:
    """Time-dependent concordance over ordered pairs tau_i < tau_j.

    cdf_matrix has one row per incident: the predicted CDF on `grid`. A pair
    counts as concordant when F_i(tau_i) > F_j(tau_i); exact ties add 0.5.
    Returns (value, n_pairs).
    """
    durations = np.asarray(durations, dtype=float)
    cdf_matrix = np.asarray(cdf_matrix, dtype=float)
    n = len(durations)
    offs = grid.offsets()
    idx = np.searchsorted(offs, durations - grid.origin, side="right") - 1
    total, n_pairs = 0.0, 0
    for i in range(n):
        later = durations > durations[i]
        m = int(later.sum())
        if m == 0 or idx[i] < 0:
            continue
        f_i = cdf_matrix[i, idx[i]]
        f_j = cdf_matrix[later, idx[i]]
        total += float((f_j < f_i).sum()) + 0.5 * float((f_j == f_i).sum())
        n_pairs += m
    if n_pairs == 0:
        raise UndefinedMetric("no comparable pairs")
    return total / n_pairs, n_pairs


def cindex_dynamic(scores, durations, t: float, dt: float) -> tuple:
    """Concordance at (t, dt): pairs where tau_i < tau_j and tau_i < t + dt,
    scored by the predicted failure probability at t + dt. Returns (value, pairs)."""
    scores = np.asarray(scores, dtype=float)
    durations = np.asarray(durations, dtype=float)
    horizon = t + dt
    total, n_pairs = 0.0, 0
    for i in range(len(durations)):
        if durations[i] >= horizon:
            continue
        admissible = durations > durations[i]
        m = int(admissible.sum())
        if m == 0:
            continue
        s_j = scores[admissible]
        total += float((s_j < scores[i]).sum()) + 0.5 * float((s_j == scores[i]).sum())
        n_pairs += m
    if n_pairs == 0:
        raise UndefinedMetric("no admissible pairs at this (t, dt)")
    return total / n_pairs, n_pairs


def brier(scores, durations, t: float, dt: float) -> tuple:
    """Mean squared error of the failure forecast against the ended-by-horizon
    label, over incidents active at t. Returns (value, n)."""
    scores = np.asarray(scores, dtype=float)
    durations = np.asarray(durations, dtype=float)
    if len(durations) == 0:
        raise UndefinedMetric("no active incidents")
    label = (durations < t + dt).astype(float)
    return float(np.mean((label - scores) ** 2)), len(durations)


def auroc_dynamic(scores, durations, t: float, dt: float) -> tuple:
    """Rank-based AUROC of the failure probability against the ended-by-horizon
    label, midranks on ties. Returns (value, n)."""
    scores = np.asarray(scores, dtype=float)
    durations = np.asarray(durations, dtype=float)
    pos = durations < t + dt          # ended within the horizon
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("single class at this (t, dt)")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    ranks_sorted = np.arange(1, len(scores) + 1, dtype=float)
    # midranks for tied scores
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks_sorted[i:j + 1] = 0.5 * (i + 1 + j + 1)
        i = j + 1
    ranks[order] = ranks_sorted
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg)), len(scores)


def mape_static(point_predictions, durations, min_duration: float = MAPE_MIN_DURATION) -> tuple:
    """MAPE (%) of point predictions for incidents at least `min_duration` long."""
    preds = np.asarray(point_predictions, dtype=float)
    durations = np.asarray(durations, dtype=float)
    keep = durations >= min_duration
    if not keep.any():
        raise UndefinedMetric("no incidents pass the duration filter")
    ape = np.abs(preds[keep] - durations[keep]) / durations[keep]
    return float(100.0 * ape.mean()), int(keep.sum())


def mape_at_percentiles(predict_fn, incidents, percentiles=DEFAULT_PERCENTILES,
                        min_duration: float = MAPE_MIN_DURATION) -> dict:
    """MAPE of dynamic point predictions issued part-way into each incident.

    predict_fn(incident, t) must return the remaining-time SurvivalCurve at
    absolute minute t past the flag; the point estimate is t plus the median
    of that curve. Only observed incidents >= min_duration enter. Returns
    {percentile: (mape, n)}.
    """
    rows = [inc for inc in incidents if inc.event == 1 and inc.duration >= min_duration]
    if not rows:
        raise UndefinedMetric("no incidents pass the duration filter")
    out = {}
    for pct in percentiles:
        apes = []
        for inc in rows:
            t = int(np.floor(pct * inc.duration / 100.0))
            curve = predict_fn(inc, t)
            pred = t + curve.median()
            apes.append(abs(pred - inc.duration) / inc.duration)
        out[pct] = (float(100.0 * np.mean(apes)), len(apes))
    return out


def ape_per_minute(predict_fn, incidents, start_minute: int = 30,
                   stop_minute: int | None = None,
                   min_duration: float = MAPE_MIN_DURATION) -> pd.DataFrame:
    """Mean and median APE (%) of point predictions at each absolute minute,
    over incidents still active then. Support shrinks as incidents end."""
    rows = [inc for inc in incidents if inc.event == 1 and inc.duration >= min_duration]
    if not rows:
        raise UndefinedMetric("no incidents pass the duration filter")
    horizon = stop_minute or int(max(inc.duration for inc in rows))
    records = []
    for m in range(start_minute, horizon + 1):
        active = [inc for inc in rows if inc.duration > m]
        if not active:
            break
        apes = []
        for inc in active:
            curve = predict_fn(inc, m)
            pred = m + curve.median()
            apes.append(100.0 * abs(pred - inc.duration) / inc.duration)
        apes = np.asarray(apes)
        records.append({"minute": m, "mean_ape": float(apes.mean()),
                        "median_ape": float(np.median(apes)), "support": len(apes)})
    return pd.DataFrame.from_records(records)


@dataclass(frozen=True)
class ReportEntry:
    model: str
    metric: str                 # cindex | brier | auroc | mape
    t: float | None
    horizon: float | None       # minutes, or percentile for mape
    value: float | None
    support: int
    note: str = ""


@dataclass
class EvaluationReport:
    entries: list = field(default_factory=list)

    def add(self, model: str, metric: str, t, horizon, value, support, note: str = ""):
        if value is not None:
            value = float(value)
        self.entries.append(ReportEntry(model, metric, t, horizon, value, int(support), note))

    def add_undefined(self, model: str, metric: str, t, horizon, reason: str):
        self.entries.append(ReportEntry(model, metric, t, horizon, None, 0, reason))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([e.__dict__ for e in self.entries])

    def value(self, model: str, metric: str, t=None, horizon=None):
        for e in self.entries:
            if (e.model, e.metric) == (model, metric) and e.t == t and e.horizon == horizon:
                return e.value
        raise KeyError((model, metric, t, horizon))

    def table(self, metric: str, model: str) -> pd.DataFrame:
        """Wide layout: rows = prediction time, columns = horizon, plus a mean
        column (the layout of the dynamic-results tables)."""
        df = self.to_frame()
        sel = df[(df.metric == metric) & (df.model == model) & df.value.notna()]
        if sel.empty:
            return pd.DataFrame()
        wide = sel.pivot_table(index="t", columns="horizon", values="value")
        wide["mean"] = wide.mean(axis=1)
        return wide


def curves_to_cdf_matrix(curves, grid: TimeGrid) -> np.ndarray:
    """Stack per-incident curves (all on `grid`) into a CDF matrix."""
    out = np.empty((len(curves), grid.n_points))
    for i, c in enumerate(curves):
        if c.grid.resolution != grid.resolution or c.grid.n_points != grid.n_points:
            raise ValueError("curves must share the evaluation grid")
        out[i] = c.cdf()
    return out


def horizon_scores(curves, dt: float) -> np.ndarray:
    """F(t + dt) for remaining-time curves predicted at t (origin rebased)."""
    return np.array([float(c.cdf_at(dt)) for c in curves])
