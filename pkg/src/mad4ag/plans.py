"""Assemble complete daily plans from twin diaries and observed locations.

The twin's activity types and times are copied verbatim.  Home and Work bind
to the device's inferred primaries; each Other slot takes a location sampled
by visit frequency damped by log-distance from home, placed nearest to the
most recently passed primary anchor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clustering import ActivityLocation, DeviceActivityData
from .core import GeoPoint, SECONDS_PER_HOUR, haversine_km
from .debias import PersonProfile
from .ingestion import SurveyDiary


@dataclass(frozen=True)
class SecondaryChoice:
    location_id: int
    f_o: int  # visit count
    d_oh_km: float  # distance from home
    p: float  # normalized selection probability


@dataclass(frozen=True)
class PlanEntry:
    activity_type: str
    start_s: int
    end_s: int
    location_id: int
    lat: float
    lon: float


@dataclass(frozen=True)
class DailyPlan:
    device_id: str
    sim_day: int
    entries: tuple[PlanEntry, ...]

    @property
    def sequence(self) -> str:
        return "-".join(e.activity_type[0] for e in self.entries)


def secondary_probabilities(
    device: DeviceActivityData,
    home_location_id: int,
    work_location_id: int | None,
    eps_km: float = 0.01,
) -> list[SecondaryChoice]:
    """Selection distribution over the device's Other locations.

    p ~ visit_count / ln(1 + distance-from-home), with the distance floored at
    a small epsilon so a location sharing the home building keeps a finite,
    dominant mass instead of dividing by ln(1) = 0.
    """
    home = device.location_by_id(home_location_id)
    cands = [
        loc
        for loc in device.locations
        if loc.location_id != home_location_id
        and (work_location_id is None or loc.location_id != work_location_id)
    ]
    if not cands:
        raise ValueError(f"device {device.device_id} has no secondary locations")
    raw = []
    for loc in cands:
        d = haversine_km(GeoPoint(home.lat, home.lon), GeoPoint(loc.lat, loc.lon))
        raw.append((loc.location_id, loc.n_visits, d, loc.n_visits / math.log(1.0 + max(d, eps_km))))
    total = sum(r[3] for r in raw)
    return [SecondaryChoice(lid, f, d, v / total) for lid, f, d, v in raw]


def sample_secondary(choices: list[SecondaryChoice], count: int, rng: np.random.Generator) -> list[int]:
    """Independent draws with replacement; one location may fill several slots."""
    if count == 0:
        return []
    probs = np.array([c.p for c in choices])
    idx = rng.choice(len(choices), size=count, replace=True, p=probs / probs.sum())
    return [choices[int(i)].location_id for i in idx]


def assemble_plan(
    device: DeviceActivityData,
    profile: PersonProfile,
    diary: SurveyDiary,
    sampled_secondary: list[int],
    sim_day: int,
) -> DailyPlan:
    """Copy the twin's schedule and bind locations to it.

    Other slots are filled chronologically; each consumes the not-yet-used
    sampled location nearest to the most recently placed primary before it
    (home when no primary precedes it).
    """
    home = device.location_by_id(profile.home_location_id)
    work = device.location_by_id(profile.work_location_id) if profile.work_location_id is not None else None
    n_other = sum(1 for a in diary.activities if a.kind == "Other")
    if n_other != len(sampled_secondary):
        raise ValueError("sampled secondary count does not match the diary's Other slots")
    if any(a.kind == "Work" for a in diary.activities) and work is None:
        raise AssertionError(
            f"device {device.device_id} was matched to a Work diary without an inferred workplace"
        )

    remaining = list(sampled_secondary)
    anchor = home
    entries: list[PlanEntry] = []
    for act in diary.activities:
        if act.kind == "Home":
            loc = home
            anchor = home
        elif act.kind == "Work":
            loc = work
            anchor = work
        else:
            best_i = min(
                range(len(remaining)),
                key=lambda i: (
                    haversine_km(
                        GeoPoint(anchor.lat, anchor.lon),
                        GeoPoint(
                            device.location_by_id(remaining[i]).lat,
                            device.location_by_id(remaining[i]).lon,
                        ),
                    ),
                    remaining[i],
                ),
            )
            loc = device.location_by_id(remaining.pop(best_i))
        entries.append(PlanEntry(act.kind, act.start_s, act.end_s, loc.location_id, loc.lat, loc.lon))
    return DailyPlan(device.device_id, sim_day, tuple(entries))


def plan_feasible(plan: DailyPlan, max_speed_kmh: float = 150.0) -> bool:
    """True when every leg's implied speed is attainable.

    Copied diary times are never corrected; this flag only marks plans whose
    geography cannot meet them.
    """
    for a, b in zip(plan.entries, plan.entries[1:]):
        d = haversine_km(GeoPoint(a.lat, a.lon), GeoPoint(b.lat, b.lon))
        if d <= 0.1:
            continue
        gap_h = (b.start_s - a.end_s) / SECONDS_PER_HOUR
        if gap_h <= 0 or d / gap_h > max_speed_kmh:
            return False
    return True
