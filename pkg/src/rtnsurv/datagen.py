"""Synthetic traffic corpus generator.

Stands in for proprietary link telemetry: per-link weekly-seasonal
speed/flow/travel-time series at 1-minute resolution, plus injected incidents
whose ground-truth durations follow a log-linear covariate model
(log D = tau0 + x'beta + eps) and whose speed depressions span exactly the
ground-truth duration. Randomness is counter-based (Philox) and keyed on
(seed, link, stream), so output is byte-identical regardless of iteration
or parallelisation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GenerationError

__all__ = [
    "SyntheticConfig",
    "RawSeries",
    "GroundTruthIncident",
    "Corpus",
    "generate_corpus",
    "sample_incidents",
    "covariate_marginals",
    "time_of_day_bin",
    "season_of_week",
    "is_weekend",
    "DEFAULT_EFFECTS",
    "NONLINEAR_EFFECTS",
]

MINUTES_PER_WEEK = 7 * 24 * 60
MINUTES_PER_DAY = 24 * 60

CHANNELS = ("speed", "flow", "travel_time")

TIME_OF_DAY_BINS = {
    "morning_rush": (360, 540),    # 6am-9am
    "afternoon": (540, 900),       # 9am-3pm
    "evening_rush": (900, 1080),   # 3pm-6pm
    "night": (1080, 1800),         # 6pm-6am (wraps)
}

CAPACITY_LEVELS = ("0-25%", "25-50%", "50-75%", "75-100%")
CAPACITY_PROBS = (0.40, 0.30, 0.20, 0.10)

INCIDENT_TYPES = ("accident", "vehicle_obstruction", "non_vehicle_obstruction", "abnormal_traffic")
INCIDENT_TYPE_PROBS = (0.25, 0.20, 0.10, 0.45)

N_VEHICLE_LEVELS = ("1", "2", "3", "4+")
N_VEHICLE_PROBS = (0.50, 0.30, 0.12, 0.08)

SECTORS = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")
SEASONS = ("winter", "spring", "summer", "autumn")

VEHICLE_FLAGS = ("car", "motorcycle", "lorry", "trailer", "articulated")
VEHICLE_FLAG_PROBS = (0.70, 0.05, 0.15, 0.05, 0.05)

BOOL_FLAG_PROBS = {
    "downstream_atypical": 0.15,
    "upstream_atypical": 0.15,
    "has_cascade": 0.08,
    "has_roadworks": 0.10,
}

SHAPES = ("vee", "cliff", "plateau")

# depression geometry: floor depth through the core, final recovery ramp length
MIN_CORE_DEPTH = 13.0
RECOVERY_TAIL = 2.0
MIN_DURATION = 5.0

# effect maps: term -> log-duration coefficient. Terms are "feature=level"
# indicators, bare boolean feature names, or "a*b" products of those.
DEFAULT_EFFECTS = {
    "incident_type=accident": 0.50,
    "incident_type=vehicle_obstruction": 0.20,
    "capacity_reduction=50-75%": 0.25,
    "capacity_reduction=75-100%": 0.45,
    "time_of_day=morning_rush": 0.30,
    "time_of_day=evening_rush": 0.25,
    "weekend": -0.20,
    "has_cascade": 0.30,
    "n_vehicles=4+": 0.35,
    "lorry": 0.20,
}

# nonlinear preset: a strong type-by-time interaction that main-effect linear
# models cannot represent
NONLINEAR_EFFECTS = dict(
    DEFAULT_EFFECTS,
    **{
        "incident_type=accident": 0.10,
        "time_of_day=morning_rush": 0.05,
        "incident_type=accident*time_of_day=morning_rush": 1.40,
        "incident_type=abnormal_traffic*time_of_day=night": 0.80,
    },
)


@dataclass(frozen=True)
class SyntheticConfig:
    n_links: int = 10
    weeks: int = 4
    seed: int = 0
    incident_rate: float = 2.0            # expected incidents per link-week
    tau0: float = math.log(40.0)          # baseline log-duration (minutes)
    effect_spec: dict = field(default_factory=lambda: dict(DEFAULT_EFFECTS))
    noise_sd: float = 0.50                # log-duration noise
    channel_noise_sd: dict = field(
        default_factory=lambda: {"speed": 2.0, "flow": 1.5, "travel_time": 5.0}
    )

    def __post_init__(self):
        if self.n_links < 1 or self.weeks < 1:
            raise ValueError("counts must be >= 1")
        if self.incident_rate < 0:
            raise ValueError("incident_rate must be >= 0")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")

    @property
    def n_minutes(self) -> int:
        return self.weeks * MINUTES_PER_WEEK


@dataclass(frozen=True)
class RawSeries:
    link_id: str
    channel: str
    values: np.ndarray


@dataclass(frozen=True)
class GroundTruthIncident:
    incident_id: str
    link_id: str
    start: int                 # absolute minute index of the operator flag
    duration: float            # ground-truth minutes until return to normal
    shape: str
    depth: float               # peak speed depression, km/h
    covariates: dict

    @property
    def flag_end(self) -> int:
        return self.start + int(math.ceil(self.duration))


@dataclass(frozen=True)
class Corpus:
    config: SyntheticConfig
    series: tuple                       # RawSeries, one per (link, channel)
    incidents: tuple                    # GroundTruthIncident, sorted by id

    def series_for(self, link_id: str, channel: str) -> RawSeries:
        for s in self.series:
            if s.link_id == link_id and s.channel == channel:
                return s
        raise KeyError((link_id, channel))

    @property
    def link_ids(self):
        seen = []
        for s in self.series:
            if s.link_id not in seen:
                seen.append(s.link_id)
        return seen


def _rng(seed: int, link_index: int, stream: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(((link_index + 1) << 8) | stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def time_of_day_bin(minute: int) -> str:
    m = minute % MINUTES_PER_DAY
    if 360 <= m < 540:
        return "morning_rush"
    if 540 <= m < 900:
        return "afternoon"
    if 900 <= m < 1080:
        return "evening_rush"
    return "night"


def is_weekend(minute: int) -> bool:
    # minute 0 is Monday 00:00
    return (minute % MINUTES_PER_WEEK) // MINUTES_PER_DAY >= 5


def season_of_week(minute: int) -> str:
    week = minute // MINUTES_PER_WEEK
    return SEASONS[(week // 13) % 4]


def _term_indicator(term: str, cov: dict) -> float:
    if "*" in term:
        val = 1.0
        for part in term.split("*"):
            val *= _term_indicator(part, cov)
        return val
    if "=" in term:
        feature, level = term.split("=", 1)
        return 1.0 if str(cov.get(feature)) == level else 0.0
    value = cov.get(term)
    if isinstance(value, bool):
        return 1.0 if value else 0.0
    if value is None:
        raise KeyError(f"unknown effect term {term!r}")
    return float(value)


def linear_predictor(cov: dict, effect_spec: dict) -> float:
    return sum(coef * _term_indicator(term, cov) for term, coef in effect_spec.items())


def _link_attributes(cfg: SyntheticConfig, link_index: int) -> dict:
    rng = _rng(cfg.seed, link_index, 3)
    return {
        "sector": SECTORS[int(rng.integers(0, len(SECTORS)))],
        "link_length_m": float(rng.uniform(500.0, 3000.0)),
        "has_roadworks": bool(rng.random() < BOOL_FLAG_PROBS["has_roadworks"]),
        "base_speed": float(rng.normal(108.0, 6.0)),
        "morning_dip": float(rng.uniform(18.0, 30.0)),
        "evening_dip": float(rng.uniform(15.0, 25.0)),
        "base_flow": float(rng.normal(28.0, 4.0)),
    }


def _seasonal_speed_week(attrs: dict) -> np.ndarray:
    """Smooth minute-of-week speed profile with weekday rush-hour dips."""
    m = np.arange(MINUTES_PER_WEEK)
    day = m // MINUTES_PER_DAY
    mod = m % MINUTES_PER_DAY
    weekend = day >= 5
    scale = np.where(weekend, 0.35, 1.0)
    dips = attrs["morning_dip"] * np.exp(-0.5 * ((mod - 480.0) / 72.0) ** 2)
    dips = dips + attrs["evening_dip"] * np.exp(-0.5 * ((mod - 1020.0) / 78.0) ** 2)
    return attrs["base_speed"] - scale * dips


def _seasonal_flow_week(attrs: dict) -> np.ndarray:
    m = np.arange(MINUTES_PER_WEEK)
    day = m // MINUTES_PER_DAY
    mod = m % MINUTES_PER_DAY
    weekend = day >= 5
    scale = np.where(weekend, 0.8, 1.0)
    bump = 18.0 * np.exp(-0.5 * ((mod - 780.0) / 240.0) ** 2)
    return np.maximum(attrs["base_flow"] + scale * bump, 2.0)


def depression_profile(shape: str, duration: float, depth: float) -> np.ndarray:
    """Speed drop (km/h) at whole minutes 0..ceil(duration)-1 after the flag.

    All shapes hold at least MIN_CORE_DEPTH until the final RECOVERY_TAIL
    minutes, then ramp steeply to zero at exactly `duration`, so the
    return-to-normal crossing lands within a minute or two of the truth.
    """
    n = int(math.ceil(duration))
    u = np.arange(n, dtype=float)
    core = max(duration - RECOVERY_TAIL, 1.0)
    a0 = MIN_CORE_DEPTH
    if shape == "vee":
        d = a0 + (depth - a0) * (1.0 - np.abs(2.0 * u / core - 1.0))
    elif shape == "cliff":
        d = depth - (depth - a0) * (u / core)
    elif shape == "plateau":
        knee = 0.8 * core
        d = np.where(u < knee, depth, depth + (a0 - depth) * (u - knee) / max(core - knee, 1.0))
    else:
        raise ValueError(f"unknown shape {shape!r}")
    tail = u >= core
    d = np.where(tail, a0 * np.maximum(duration - u, 0.0) / RECOVERY_TAIL, np.maximum(d, a0))
    return np.maximum(d, 0.0)


def _sample_incident_covariates(rng: np.random.Generator, attrs: dict, start: int) -> dict:
    cov = {
        "incident_type": INCIDENT_TYPES[rng.choice(len(INCIDENT_TYPES), p=INCIDENT_TYPE_PROBS)],
        "capacity_reduction": CAPACITY_LEVELS[rng.choice(len(CAPACITY_LEVELS), p=CAPACITY_PROBS)],
        "n_vehicles": N_VEHICLE_LEVELS[rng.choice(len(N_VEHICLE_LEVELS), p=N_VEHICLE_PROBS)],
        "downstream_atypical": bool(rng.random() < BOOL_FLAG_PROBS["downstream_atypical"]),
        "upstream_atypical": bool(rng.random() < BOOL_FLAG_PROBS["upstream_atypical"]),
        "has_cascade": bool(rng.random() < BOOL_FLAG_PROBS["has_cascade"]),
        "has_roadworks": attrs["has_roadworks"],
        "sector": attrs["sector"],
        "link_length_m": attrs["link_length_m"],
        "time_of_day": time_of_day_bin(start),
        "weekend": is_weekend(start),
        "season": season_of_week(start),
    }
    for flag, p in zip(VEHICLE_FLAGS, VEHICLE_FLAG_PROBS):
        cov[flag] = bool(rng.random() < p)
    return cov


# pre-incident minutes every window needs, plus slack for gradients
PRE_INCIDENT_BUFFER = 120
POST_INCIDENT_GAP = 30


def _sample_link_incidents(cfg: SyntheticConfig, link_index: int, link_id: str,
                           attrs: dict) -> list:
    rng = _rng(cfg.seed, link_index, 4)
    n_incidents = int(rng.poisson(cfg.incident_rate * cfg.weeks))
    total = cfg.n_minutes
    placed = []  # (start, end) occupied intervals
    out = []
    for j in range(n_incidents):
        for attempt in range(1000):
            start = int(rng.integers(PRE_INCIDENT_BUFFER, max(total - 10, PRE_INCIDENT_BUFFER + 1)))
            cov = _sample_incident_covariates(rng, attrs, start)
            eps = rng.normal(0.0, cfg.noise_sd) if cfg.noise_sd > 0 else 0.0
            duration = math.exp(cfg.tau0 + linear_predictor(cov, cfg.effect_spec) + eps)
            duration = max(duration, MIN_DURATION)
            end = start + int(math.ceil(duration))
            # keep every incident's pre-window clear of its neighbours
            hi = min(end, total) + PRE_INCIDENT_BUFFER
            if all(hi <= s or e + PRE_INCIDENT_BUFFER <= start for s, e in placed):
                placed.append((start, min(end, total)))
                shape = SHAPES[int(rng.integers(0, len(SHAPES)))]
                depth = float(rng.uniform(20.0, 45.0))
                out.append((start, duration, shape, depth, cov))
                break
        else:
            raise GenerationError(
                f"could not place incident {j} on {link_id} after 1000 attempts"
            )
    out.sort(key=lambda rec: rec[0])
    return out


def sample_incidents(cfg: SyntheticConfig) -> tuple:
    """Ground-truth incidents only (no series); cheap path for model tests."""
    incidents = []
    for li in range(cfg.n_links):
        link_id = f"L{li:03d}"
        attrs = _link_attributes(cfg, li)
        for start, duration, shape, depth, cov in _sample_link_incidents(cfg, li, link_id, attrs):
            incidents.append(
                GroundTruthIncident(
                    incident_id="",  # renumbered below
                    link_id=link_id,
                    start=start,
                    duration=duration,
                    shape=shape,
                    depth=depth,
                    covariates=cov,
                )
            )
    incidents.sort(key=lambda inc: (inc.link_id, inc.start))
    return tuple(
        GroundTruthIncident(
            incident_id=f"I{k:05d}",
            link_id=inc.link_id,
            start=inc.start,
            duration=inc.duration,
            shape=inc.shape,
            depth=inc.depth,
            covariates=inc.covariates,
        )
        for k, inc in enumerate(incidents)
    )


def generate_corpus(cfg: SyntheticConfig) -> Corpus:
    """Full corpus: three channels per link plus the ground-truth incident list."""
    incidents = sample_incidents(cfg)
    by_link = {}
    for inc in incidents:
        by_link.setdefault(inc.link_id, []).append(inc)

    all_series = []
    for li in range(cfg.n_links):
        link_id = f"L{li:03d}"
        attrs = _link_attributes(cfg, li)
        total = cfg.n_minutes
        speed_week = _seasonal_speed_week(attrs)
        flow_week = _seasonal_flow_week(attrs)
        speed_clean = np.tile(speed_week, cfg.weeks).astype(float)
        flow_clean = np.tile(flow_week, cfg.weeks).astype(float)

        for inc in by_link.get(link_id, []):
            prof = depression_profile(inc.shape, inc.duration, inc.depth)
            end = min(inc.start + len(prof), total)
            seg = slice(inc.start, end)
            drop = prof[: end - inc.start]
            speed_clean[seg] -= drop
            flow_clean[seg] *= 1.0 - 0.55 * drop / max(inc.depth, 1.0)

        speed_clean = np.maximum(speed_clean, 3.0)
        flow_clean = np.maximum(flow_clean, 0.5)
        tt_clean = 3.6 * attrs["link_length_m"] / np.maximum(speed_clean, 5.0)

        sd = cfg.channel_noise_sd
        speed = speed_clean + _rng(cfg.seed, li, 0).normal(0.0, sd["speed"], total)
        flow = flow_clean + _rng(cfg.seed, li, 1).normal(0.0, sd["flow"], total)
        tt = tt_clean + _rng(cfg.seed, li, 2).normal(0.0, sd["travel_time"], total)
        speed = np.maximum(speed, 1.0)
        flow = np.maximum(flow, 0.0)
        tt = np.maximum(tt, 1.0)

        all_series.append(RawSeries(link_id, "speed", speed))
        all_series.append(RawSeries(link_id, "flow", flow))
        all_series.append(RawSeries(link_id, "travel_time", tt))

    return Corpus(config=cfg, series=tuple(all_series), incidents=incidents)


def covariate_marginals(cfg: SyntheticConfig) -> dict:
    """Declared sampling distributions for every ground-truth covariate (audit)."""
    return {
        "time_of_day": {
            "kind": "derived-categorical",
            "bins": dict(TIME_OF_DAY_BINS),
        },
        "capacity_reduction": {
            "kind": "categorical",
            "levels": dict(zip(CAPACITY_LEVELS, CAPACITY_PROBS)),
        },
        "incident_type": {
            "kind": "categorical",
            "levels": dict(zip(INCIDENT_TYPES, INCIDENT_TYPE_PROBS)),
        },
        "n_vehicles": {
            "kind": "categorical",
            "levels": dict(zip(N_VEHICLE_LEVELS, N_VEHICLE_PROBS)),
        },
        "vehicle_flags": {
            "kind": "bernoulli",
            "levels": dict(zip(VEHICLE_FLAGS, VEHICLE_FLAG_PROBS)),
        },
        "binary_flags": {"kind": "bernoulli", "levels": dict(BOOL_FLAG_PROBS)},
        "sector": {"kind": "categorical-uniform", "levels": list(SECTORS)},
        "season": {"kind": "derived-categorical", "levels": list(SEASONS)},
        "weekend": {"kind": "derived-binary"},
        "link_length_m": {"kind": "uniform", "low": 500.0, "high": 3000.0},
    }
