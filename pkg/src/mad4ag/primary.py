"""Home and work inference via survey-weighted temporal scores.

Hourly weights are the ratio of survey participant-hours spent in the target
activity to participant-hours in any activity, per clock hour.  A location's
score sums its visit durations hour by hour, each fraction multiplied by the
hour's weight.  Home candidates additionally need three distinct nighttime
visit-days; the nighttime window itself is derived from the survey as the
hours where home participation exceeds a threshold share.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import ActivityLocation, DeviceActivityData
from .core import (
    ClockInterval,
    EmptySurvey,
    NoQualifyingHours,
    SECONDS_PER_DAY,
    SECONDS_PER_HOUR,
    hour_overlaps,
    local_day_index,
)
from .ingestion import SurveyDiary


@dataclass(frozen=True)
class HourlyWeights:
    kind: str  # "home" or "work"
    w: tuple[float, ...]  # 24 entries

    def __post_init__(self):
        if len(self.w) != 24:
            raise ValueError("need exactly 24 hourly weights")
        if min(self.w) < 0 or max(self.w) > 1.05:
            raise ValueError("weights must lie in [0, 1.05]")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.w)


@dataclass(frozen=True)
class PrimaryAssignment:
    device_id: str
    home_location_id: int
    home_score: float
    work_location_id: int | None
    work_score: float | None


@dataclass(frozen=True)
class PrimaryParams:
    home_score_min: float = 10.0
    work_score_min: float = 30.0
    night_visit_min: int = 3
    home_share_threshold: float = 0.8
    utc_offset_s: int = 0


def participation_by_hour(diaries: list[SurveyDiary]) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Participant-hours per activity type and in total, per clock hour."""
    if not diaries:
        raise EmptySurvey("cannot derive hourly participation from an empty survey")
    by_type = {"Home": np.zeros(24), "Work": np.zeros(24), "Other": np.zeros(24)}
    total = np.zeros(24)
    for diary in diaries:
        for act in diary.activities:
            ov = hour_overlaps(act.start_s, act.end_s)
            by_type[act.kind] += ov
            total += ov
    return by_type, total


def home_share_by_hour(diaries: list[SurveyDiary]) -> np.ndarray:
    by_type, total = participation_by_hour(diaries)
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(total > 0, by_type["Home"] / total, 0.0)
    return share


def nighttime_window(diaries: list[SurveyDiary], threshold: float = 0.8) -> ClockInterval:
    """Longest contiguous (wrapping) hour run with home share above threshold."""
    share = home_share_by_hour(diaries)
    ok = share > threshold
    if not ok.any():
        raise NoQualifyingHours(f"home participation never exceeds {threshold}")
    if ok.all():
        return ClockInterval(0, SECONDS_PER_DAY)
    best_start, best_len = None, 0
    for h in range(24):
        if ok[h] and not ok[(h - 1) % 24]:
            length = 0
            while ok[(h + length) % 24]:
                length += 1
            if length > best_len:
                best_start, best_len = h, length
    end_hour = (best_start + best_len) % 24
    return ClockInterval(best_start * SECONDS_PER_HOUR, end_hour * SECONDS_PER_HOUR)


def derive_weights(diaries: list[SurveyDiary], kind: str, night: ClockInterval | None = None) -> HourlyWeights:
    """Hourly participation-ratio weights for one primary activity type.

    Home weights are masked to the nighttime window; work weights span all 24
    hours to accommodate atypical schedules.
    """
    if kind not in ("home", "work"):
        raise ValueError(f"unknown weight kind: {kind}")
    by_type, total = participation_by_hour(diaries)
    target = by_type["Home"] if kind == "home" else by_type["Work"]
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(total > 0, target / total, 0.0)
    w = np.minimum(w, 1.05)
    if kind == "home":
        if night is None:
            night = nighttime_window(diaries)
        mask = np.zeros(24)
        for h in night.hours():
            mask[h] = 1.0
        w = w * mask
    return HourlyWeights(kind, tuple(float(x) for x in w))


def score_location(loc: ActivityLocation, weights: HourlyWeights, utc_offset_s: int = 0) -> float:
    """Sum of weighted fractional hours over all visits to the location."""
    w = weights.as_array()
    score = 0.0
    for s, e in loc.visits:
        score += float(np.dot(w, hour_overlaps(s, e, utc_offset_s)))
    return score


def night_visit_days(loc: ActivityLocation, night: ClockInterval, utc_offset_s: int = 0) -> int:
    """Distinct calendar days (of visit start) with a visit touching the window."""
    hours = set(night.hours())
    days = set()
    for s, e in loc.visits:
        ov = hour_overlaps(s, e, utc_offset_s)
        if any(ov[h] > 0 for h in hours):
            days.add(local_day_index(s, utc_offset_s))
    return len(days)


def _pick_best(cands: list[tuple[float, ActivityLocation]]) -> tuple[int, float] | None:
    if not cands:
        return None
    best = min(cands, key=lambda t: (-t[0], -t[1].n_visits, t[1].location_id))
    return best[1].location_id, best[0]


def infer_home(
    device: DeviceActivityData,
    w_home: HourlyWeights,
    night: ClockInterval,
    params: PrimaryParams,
) -> tuple[int, float] | None:
    """Highest-scoring location among those visited on enough nighttime days.

    Ties break on more visits, then the smaller location id.  Returns None
    when no candidate clears the score threshold; such devices are dropped
    downstream because everyone is assumed to have a home activity.
    """
    cands = []
    for loc in device.locations:
        if night_visit_days(loc, night, params.utc_offset_s) < params.night_visit_min:
            continue
        score = score_location(loc, w_home, params.utc_offset_s)
        if score > params.home_score_min:
            cands.append((score, loc))
    return _pick_best(cands)


def infer_work(
    device: DeviceActivityData,
    w_work: HourlyWeights,
    home_location_id: int,
    params: PrimaryParams,
) -> tuple[int, float] | None:
    """Highest-scoring non-home location with score at or above the work cutoff."""
    cands = []
    for loc in device.locations:
        if loc.location_id == home_location_id:
            continue
        score = score_location(loc, w_work, params.utc_offset_s)
        if score >= params.work_score_min:
            cands.append((score, loc))
    return _pick_best(cands)


def infer_primaries(
    device: DeviceActivityData,
    w_home: HourlyWeights,
    w_work: HourlyWeights,
    night: ClockInterval,
    params: PrimaryParams,
) -> PrimaryAssignment | None:
    home = infer_home(device, w_home, night, params)
    if home is None:
        return None
    work = infer_work(device, w_work, home[0], params)
    return PrimaryAssignment(
        device_id=device.device_id,
        home_location_id=home[0],
        home_score=home[1],
        work_location_id=work[0] if work else None,
        work_score=work[1] if work else None,
    )
