"""Mobile-data-only baseline: visit-frequency primaries and hourly-mode schedules.

Uses no survey input anywhere.  Home is the location with the most distinct
visit-days touching nighttime hours, work the daytime analogue; the single
average day assigns each clock hour to the location most frequently observed
in it, carrying the previous location through unobserved hours.
"""

from __future__ import annotations

import numpy as np

from .clustering import DeviceActivityData
from .core import SECONDS_PER_HOUR, hour_overlaps, local_day_index
from .plans import DailyPlan, PlanEntry

NIGHT_HOURS = tuple(list(range(18, 24)) + list(range(0, 8)))  # 18:00-07:59
DAY_HOURS = tuple(range(8, 18))  # 08:00-17:59


def hourly_visit_table(device: DeviceActivityData, utc_offset_s: int = 0) -> dict[int, np.ndarray]:
    """Per location: distinct visit-days touching each clock hour."""
    table: dict[int, np.ndarray] = {}
    for loc in device.locations:
        seen: set[tuple[int, int]] = set()
        for s, e in loc.visits:
            t = s + utc_offset_s
            stop = e + utc_offset_s
            while t < stop:
                nxt = min(stop, (t // SECONDS_PER_HOUR + 1) * SECONDS_PER_HOUR)
                seen.add((t // 86400, (t // SECONDS_PER_HOUR) % 24))
                t = nxt
        counts = np.zeros(24, dtype=int)
        for _, hour in seen:
            counts[hour] += 1
        table[loc.location_id] = counts
    return table


def dummy_primaries(device: DeviceActivityData, table: dict[int, np.ndarray] | None = None,
                    utc_offset_s: int = 0) -> tuple[int, int | None]:
    """Most-visited location in nighttime hours is home; daytime (home
    excluded) is work, or None when nothing was seen in daytime hours.
    Ties go to the smaller location id."""
    if table is None:
        table = hourly_visit_table(device, utc_offset_s)
    loc_ids = sorted(table)
    night = {lid: int(table[lid][list(NIGHT_HOURS)].sum()) for lid in loc_ids}
    home_id = max(loc_ids, key=lambda lid: (night[lid], -lid))
    day = {lid: int(table[lid][list(DAY_HOURS)].sum()) for lid in loc_ids if lid != home_id}
    work_id = None
    if day:
        best = max(day, key=lambda lid: (day[lid], -lid))
        if day[best] > 0:
            work_id = best
    return home_id, work_id


def dummy_schedule(device: DeviceActivityData, utc_offset_s: int = 0) -> DailyPlan:
    """Single average day from hourly location modes.

    Hours with no observations anywhere inherit the previous hour's location
    (home seeds midnight), then consecutive equal-location hours merge into
    activities typed by the dummy primaries.
    """
    table = hourly_visit_table(device, utc_offset_s)
    home_id, work_id = dummy_primaries(device, table, utc_offset_s)
    loc_ids = sorted(table)
    counts = np.stack([table[lid] for lid in loc_ids])  # (n_locs, 24)

    assigned: list[int] = []
    current = home_id
    for hour in range(24):
        col = counts[:, hour]
        if col.max() > 0:
            current = loc_ids[int(np.argmax(col))]
        assigned.append(current)

    entries: list[PlanEntry] = []
    start = 0
    for hour in range(1, 25):
        if hour == 24 or assigned[hour] != assigned[start]:
            lid = assigned[start]
            loc = device.location_by_id(lid)
            kind = "Home" if lid == home_id else ("Work" if lid == work_id else "Other")
            entries.append(
                PlanEntry(kind, start * SECONDS_PER_HOUR, hour * SECONDS_PER_HOUR, lid, loc.lat, loc.lon)
            )
            start = hour
    return DailyPlan(device.device_id, 0, tuple(entries))
