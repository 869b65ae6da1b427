"""Per-link weekly baselines, residual series, and return-to-normal labeling.

The baseline is a robust minute-of-week profile (median over weeks, with
incident periods and high-residual periods masked out in a two-pass scheme).
An incident is labeled recovered at the first minute its speed sits above the
profile shifted down by 8 km/h for at least 3 consecutive minutes.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .datagen import MINUTES_PER_WEEK, RawSeries

__all__ = [
    "WeeklyProfile",
    "LabeledIncident",
    "build_profile",
    "compute_residuals",
    "detect_rtn",
    "prefilter_mask",
    "label_corpus",
    "SPEED_MARGIN_KMH",
    "PERSISTENCE_MINUTES",
]

log = logging.getLogger(__name__)

SPEED_MARGIN_KMH = 8.0
PERSISTENCE_MINUTES = 3
MAD_THRESHOLD = 4.0
MAD_SCALE = 1.4826  # normal-consistency factor


@dataclass(frozen=True)
class WeeklyProfile:
    """10080 minute-of-week slot values for one link/channel."""

    link_id: str
    channel: str
    slots: np.ndarray
    interpolated_slots: tuple = field(default=())

    def __post_init__(self):
        slots = np.asarray(self.slots, dtype=float)
        object.__setattr__(self, "slots", slots)
        if slots.shape != (MINUTES_PER_WEEK,):
            raise ValueError("profile must carry exactly 10080 slots")
        if not np.all(np.isfinite(slots)):
            raise ValueError("profile slots must all be finite")

    def tiled(self, n_minutes: int) -> np.ndarray:
        reps = int(np.ceil(n_minutes / MINUTES_PER_WEEK))
        return np.tile(self.slots, reps)[:n_minutes]


@dataclass(frozen=True)
class LabeledIncident:
    incident_id: str
    link_id: str
    start: int
    rtn: int
    censored: bool                      # True when no qualifying run before data end
    covariates: dict = field(default_factory=dict)

    @property
    def duration(self) -> int:
        return self.rtn - self.start

    @property
    def event(self) -> int:
        """delta: 1 if the return-to-normal time was observed."""
        return 0 if self.censored else 1


def _interpolate_empty_slots(slots: np.ndarray) -> tuple:
    """Fill NaN slots by linear interpolation with wrap-around; returns filled indices."""
    empty = np.where(np.isnan(slots))[0]
    if empty.size == 0:
        return ()
    if empty.size == slots.size:
        raise ValueError("every profile slot is masked; cannot interpolate")
    n = slots.size
    filled = np.where(~np.isnan(slots))[0]
    # unwrap via angle trick: interpolate on a doubled axis so the week wraps
    x = np.concatenate([filled, filled + n])
    y = np.concatenate([slots[filled], slots[filled]])
    slots[empty] = np.interp(empty + n, x, y)
    return tuple(int(i) for i in empty)


def build_profile(series: RawSeries, exclusion_mask: np.ndarray) -> WeeklyProfile:
    """Slot s = median of unmasked samples at minute-of-week s.

    Requires a whole number of weeks (>= 2). Slots left with no unmasked
    samples are filled by wrap-around linear interpolation and recorded.
    """
    values = np.asarray(series.values, dtype=float)
    n = values.size
    if n % MINUTES_PER_WEEK != 0 or n < 2 * MINUTES_PER_WEEK:
        raise ValueError("series must cover a whole number of weeks (>= 2)")
    mask = np.asarray(exclusion_mask, dtype=bool)
    if mask.shape != values.shape:
        raise ValueError("mask length must match the series")

    weeks = n // MINUTES_PER_WEEK
    grid = values.reshape(weeks, MINUTES_PER_WEEK).copy()
    grid[mask.reshape(weeks, MINUTES_PER_WEEK)] = np.nan
    with warnings.catch_warnings():
        # all-NaN slots are expected under heavy masking; they get interpolated
        warnings.simplefilter("ignore", RuntimeWarning)
        slots = np.nanmedian(grid, axis=0)
    interpolated = _interpolate_empty_slots(slots)
    if interpolated:
        log.info(
            "profile %s/%s: interpolated %d empty slots",
            series.link_id, series.channel, len(interpolated),
        )
    return WeeklyProfile(series.link_id, series.channel, slots, interpolated)


def compute_residuals(series: RawSeries, profile: WeeklyProfile) -> np.ndarray:
    """residual[t] = value[t] - profile slot at (t mod 10080)."""
    if profile.channel != series.channel:
        raise ValueError("profile channel does not match the series")
    values = np.asarray(series.values, dtype=float)
    return values - profile.tiled(values.size)


def prefilter_mask(series: RawSeries, profile_draft: WeeklyProfile,
                   incident_flags: np.ndarray,
                   threshold: float = MAD_THRESHOLD) -> np.ndarray:
    """Flagged minutes plus minutes whose standardized residual is extreme.

    Residuals against the draft profile are standardized by their MAD scale;
    magnitudes above `threshold` mark the minute for exclusion. The rebuilt
    profile then ignores both flagged periods and these unflagged anomalies.
    """
    flags = np.asarray(incident_flags, dtype=bool)
    residuals = compute_residuals(series, profile_draft)
    clean = residuals[~flags]
    mad = np.median(np.abs(clean - np.median(clean)))
    scale = max(mad * MAD_SCALE, 1e-9)
    return flags | (np.abs(residuals) / scale > threshold)


def detect_rtn(speed_series: RawSeries, profile: WeeklyProfile, flag_start: int,
               incident_id: str = "", covariates: dict | None = None) -> LabeledIncident:
    """First minute from flag_start+1 with speed above (profile - 8 km/h) for
    3 consecutive minutes; censored at data end when no such run exists."""
    values = np.asarray(speed_series.values, dtype=float)
    n = values.size
    if not 0 <= flag_start < n:
        raise ValueError("flag_start outside the series")
    threshold = profile.tiled(n) - SPEED_MARGIN_KMH
    above = values > threshold

    start_scan = flag_start + 1
    run = 0
    for t in range(start_scan, n):
        run = run + 1 if above[t] else 0
        if run == PERSISTENCE_MINUTES:
            rtn = t - PERSISTENCE_MINUTES + 1
            return LabeledIncident(incident_id, speed_series.link_id, flag_start,
                                   rtn, False, covariates or {})
    return LabeledIncident(incident_id, speed_series.link_id, flag_start, n, True,
                           covariates or {})


def _runs_mask(above: np.ndarray, start: int) -> int:
    """Start index of the first length-3 run of True at or after start; -1 if none."""
    n = above.size
    if start + PERSISTENCE_MINUTES > n:
        return -1
    window = above[start:]
    if window.size < PERSISTENCE_MINUTES:
        return -1
    runs = window[:-2] & window[1:-1] & window[2:]
    idx = np.argmax(runs)
    if not runs[idx]:
        return -1
    return start + int(idx)


def detect_rtn_fast(values: np.ndarray, threshold: np.ndarray, flag_start: int) -> tuple:
    """(rtn, censored) with the same semantics as detect_rtn, vectorized."""
    above = values > threshold
    hit = _runs_mask(above, flag_start + 1)
    if hit < 0:
        return values.size, True
    return hit, False


@dataclass(frozen=True)
class LabelingResult:
    incidents: tuple                    # LabeledIncident
    profiles: dict                      # (link_id, channel) -> WeeklyProfile
    residuals: dict                     # (link_id, channel) -> np.ndarray


def label_corpus(corpus, mask_margin: int = 30) -> LabelingResult:
    """Two-pass profile construction and labeling for a whole corpus.

    Pass 1 masks operator-flagged periods only; pass 2 additionally masks
    high-residual minutes (possible unflagged incidents), then profiles are
    rebuilt and every flag is labeled against the speed profile.
    """
    by_link = {}
    for inc in corpus.incidents:
        by_link.setdefault(inc.link_id, []).append(inc)

    profiles, residuals = {}, {}
    labeled = []
    for link_id in corpus.link_ids:
        speed = corpus.series_for(link_id, "speed")
        n = speed.values.size
        flags = np.zeros(n, dtype=bool)
        for inc in by_link.get(link_id, []):
            flags[inc.start:min(inc.flag_end + mask_margin, n)] = True

        for channel in ("speed", "flow", "travel_time"):
            series = corpus.series_for(link_id, channel)
            draft = build_profile(series, flags)
            mask = prefilter_mask(series, draft, flags)
            profile = build_profile(series, mask)
            profiles[(link_id, channel)] = profile
            residuals[(link_id, channel)] = compute_residuals(series, profile)

        speed_profile = profiles[(link_id, "speed")]
        threshold = speed_profile.tiled(n) - SPEED_MARGIN_KMH
        for inc in by_link.get(link_id, []):
            rtn, censored = detect_rtn_fast(speed.values, threshold, inc.start)
            labeled.append(
                LabeledIncident(inc.incident_id, link_id, inc.start, rtn, censored,
                                inc.covariates)
            )

    labeled.sort(key=lambda rec: rec.incident_id)
    return LabelingResult(tuple(labeled), profiles, residuals)
