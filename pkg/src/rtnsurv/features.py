"""Covariate encoding and time-varying feature extraction.

Static covariates are encoded against an ordered schema fitted on the
training split (one-hot blocks for categoricals, standardization for
continuous fields). Time-varying features are residual levels plus
least-squares gradients over the previous 5 minutes, or a raw 3-channel
residual window for the convolutional models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import (
    CAPACITY_LEVELS,
    INCIDENT_TYPES,
    N_VEHICLE_LEVELS,
    SEASONS,
    SECTORS,
    VEHICLE_FLAGS,
)
from .errors import EncodingError

__all__ = [
    "SchemaField",
    "CovariateSchema",
    "DynamicSnapshot",
    "build_schema",
    "encode_static",
    "encode_design",
    "snapshot",
    "window",
    "WindowStats",
    "GRADIENT_LOOKBACK",
]

GRADIENT_LOOKBACK = 5       # gradient uses samples t-5..t inclusive
CHANNEL_ORDER = ("speed", "flow", "travel_time")

TIME_OF_DAY_LEVELS = ("morning_rush", "afternoon", "evening_rush", "night")

CATEGORICAL_LEVELS = {
    "time_of_day": TIME_OF_DAY_LEVELS,
    "capacity_reduction": CAPACITY_LEVELS,
    "incident_type": INCIDENT_TYPES,
    "n_vehicles": N_VEHICLE_LEVELS,
    "sector": SECTORS,
    "season": SEASONS,
}

BINARY_FIELDS = (
    "downstream_atypical",
    "upstream_atypical",
    "has_cascade",
    "has_roadworks",
    "weekend",
) + VEHICLE_FLAGS

CONTINUOUS_FIELDS = ("link_length_m",)


@dataclass(frozen=True)
class SchemaField:
    name: str
    kind: str                   # "one-hot" | "binary" | "continuous"
    levels: tuple = ()
    mean: float = 0.0
    sd: float = 1.0

    @property
    def width(self) -> int:
        return len(self.levels) if self.kind == "one-hot" else 1


@dataclass(frozen=True)
class CovariateSchema:
    fields: tuple

    @property
    def width(self) -> int:
        return sum(f.width for f in self.fields)

    def feature_names(self) -> list:
        names = []
        for f in self.fields:
            if f.kind == "one-hot":
                names.extend(f"{f.name}={lvl}" for lvl in f.levels)
            else:
                names.append(f.name)
        return names

    def one_hot_blocks(self) -> dict:
        """name -> (start, stop) column range of each one-hot group."""
        blocks, pos = {}, 0
        for f in self.fields:
            if f.kind == "one-hot":
                blocks[f.name] = (pos, pos + f.width)
            pos += f.width
        return blocks

    def to_dict(self) -> dict:
        return {
            "fields": [
                {"name": f.name, "kind": f.kind, "levels": list(f.levels),
                 "mean": f.mean, "sd": f.sd}
                for f in self.fields
            ]
        }

    @staticmethod
    def from_dict(payload: dict) -> "CovariateSchema":
        return CovariateSchema(tuple(
            SchemaField(d["name"], d["kind"], tuple(d["levels"]), d["mean"], d["sd"])
            for d in payload["fields"]
        ))


def build_schema(incidents) -> CovariateSchema:
    """Schema over the standard covariate set, standardizing continuous fields
    with training-split statistics."""
    fields = []
    for name, levels in CATEGORICAL_LEVELS.items():
        fields.append(SchemaField(name, "one-hot", tuple(levels)))
    for name in BINARY_FIELDS:
        fields.append(SchemaField(name, "binary"))
    for name in CONTINUOUS_FIELDS:
        values = np.array([float(inc.covariates[name]) for inc in incidents])
        sd = float(values.std())
        fields.append(SchemaField(name, "continuous", mean=float(values.mean()),
                                  sd=sd if sd > 0 else 1.0))
    return CovariateSchema(tuple(fields))


def encode_static(covariates: dict, schema: CovariateSchema) -> np.ndarray:
    """Deterministic fixed-order encoding of one incident's covariates."""
    out = np.zeros(schema.width)
    pos = 0
    for f in schema.fields:
        if f.kind == "one-hot":
            value = str(covariates.get(f.name))
            if value not in f.levels:
                raise EncodingError(f"unknown level {value!r} for field {f.name!r}")
            out[pos + f.levels.index(value)] = 1.0
            pos += f.width
        elif f.kind == "binary":
            if f.name not in covariates:
                raise EncodingError(f"missing binary field {f.name!r}")
            out[pos] = 1.0 if covariates[f.name] else 0.0
            pos += 1
        else:
            if f.name not in covariates:
                raise EncodingError(f"missing continuous field {f.name!r}")
            out[pos] = (float(covariates[f.name]) - f.mean) / f.sd
            pos += 1
    return out


def encode_matrix(incidents, schema: CovariateSchema) -> np.ndarray:
    return np.vstack([encode_static(inc.covariates, schema) for inc in incidents])


def encode_design(incidents, terms) -> np.ndarray:
    """Indicator design matrix for named effect terms ("feature=level", bare
    booleans, or "a*b" products); used for recovery checks against the
    generative model."""
    from .datagen import _term_indicator

    rows = np.zeros((len(incidents), len(terms)))
    for i, inc in enumerate(incidents):
        for j, term in enumerate(terms):
            rows[i, j] = _term_indicator(term, inc.covariates)
    return rows


@dataclass(frozen=True)
class DynamicSnapshot:
    """Residual levels and 5-minute gradients for the three channels at time t."""

    at: float
    levels: np.ndarray          # (3,) speed, flow, travel_time
    gradients: np.ndarray       # (3,) slope per minute

    def vector(self) -> np.ndarray:
        return np.concatenate([self.levels, self.gradients])


_OLS_K = np.arange(GRADIENT_LOOKBACK + 1, dtype=float)
_OLS_K_CENTERED = _OLS_K - _OLS_K.mean()
_OLS_DENOM = float((_OLS_K_CENTERED ** 2).sum())


def _ols_slope(y: np.ndarray) -> float:
    return float((_OLS_K_CENTERED * (y - y.mean())).sum() / _OLS_DENOM)


def snapshot(residuals_by_channel: dict, t: int) -> DynamicSnapshot:
    """Levels at t and OLS slopes over samples t-5..t for each channel.

    `residuals_by_channel` maps channel name to the full residual series of
    the link; t indexes absolute minutes.
    """
    if t < GRADIENT_LOOKBACK:
        raise ValueError("t must leave room for the 5-minute gradient window")
    levels = np.empty(3)
    grads = np.empty(3)
    for c, channel in enumerate(CHANNEL_ORDER):
        series = np.asarray(residuals_by_channel[channel], dtype=float)
        if t >= series.size:
            raise ValueError("t beyond the series")
        seg = series[t - GRADIENT_LOOKBACK:t + 1]
        levels[c] = series[t]
        grads[c] = _ols_slope(seg)
    return DynamicSnapshot(float(t), levels, grads)


@dataclass(frozen=True)
class WindowStats:
    """Per-channel residual standardization statistics from the training split."""

    mean: np.ndarray            # (3,)
    sd: np.ndarray              # (3,)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "WindowStats":
        return WindowStats(np.asarray(d["mean"], float), np.asarray(d["sd"], float))

    @staticmethod
    def identity() -> "WindowStats":
        return WindowStats(np.zeros(3), np.ones(3))


def window(residuals_by_channel: dict, t: int, w: int,
           stats: WindowStats | None = None) -> np.ndarray:
    """3 x (w+1) standardized residual window covering minutes t-w..t."""
    if t - w < 0:
        raise ValueError("insufficient history before t for the requested window")
    out = np.empty((3, w + 1))
    for c, channel in enumerate(CHANNEL_ORDER):
        series = np.asarray(residuals_by_channel[channel], dtype=float)
        if t >= series.size:
            raise ValueError("t beyond the series")
        out[c] = series[t - w:t + 1]
    if stats is not None:
        out = (out - stats.mean[:, None]) / stats.sd[:, None]
    return out


def fit_window_stats(samples: np.ndarray) -> WindowStats:
    """Stats over an array of shape (n, 3, w+1) of raw residual windows."""
    mean = samples.mean(axis=(0, 2))
    sd = samples.std(axis=(0, 2))
    sd = np.where(sd > 0, sd, 1.0)
    return WindowStats(mean, sd)
