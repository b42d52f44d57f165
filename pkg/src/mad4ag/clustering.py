"""Per-device activity clusters, building-level activity locations and data filters.

Stage 1 groups a device's stops into coarse activity spaces (DBSCAN with a
very large radius), separating e.g. everyday city life from a distant summer
place.  Stage 2 re-clusters each space at building scale and snaps the group
mean to the nearest building.  The filter pass then drops low-quality visits
and devices before any inference runs.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field, replace

import numpy as np

from .core import GeoPoint, SECONDS_PER_HOUR, Stop, haversine_km_vec, local_day_index
from .ingestion import BuildingIndex, point_in_polygon


@dataclass(frozen=True)
class DbscanParams:
    eps_m: float
    min_pts: int

    def __post_init__(self):
        if self.eps_m <= 0 or self.min_pts < 1:
            raise ValueError("eps must be positive and min_pts >= 1")


_DENSE_LIMIT = 2048  # full distance matrix below this size


def _dbscan_dense(lat: np.ndarray, lon: np.ndarray, params: DbscanParams) -> np.ndarray:
    n = len(lat)
    labels = np.full(n, -1, dtype=int)
    eps_km = params.eps_m / 1000.0
    dist = haversine_km_vec(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
    adj = dist <= eps_km  # self included
    core = adj.sum(axis=1) >= params.min_pts
    if not core.any():
        return labels

    # min-label propagation over the core-core adjacency graph: every core
    # point converges to the smallest core index in its component
    core_adj = adj & core[None, :] & core[:, None]
    sentinel = n
    comp = np.where(core, np.arange(n), sentinel)
    while True:
        spread = np.where(core_adj, comp[None, :], sentinel).min(axis=1)
        new = np.minimum(comp, spread)
        if np.array_equal(new, comp):
            break
        comp = new

    cluster_of_root: dict[int, int] = {}
    for i in np.flatnonzero(core):
        root = int(comp[i])
        if root not in cluster_of_root:
            cluster_of_root[root] = len(cluster_of_root)
        labels[i] = cluster_of_root[root]

    for i in np.flatnonzero(~core):
        cand = np.flatnonzero(adj[i] & core)
        if len(cand):
            labels[i] = labels[cand[int(np.argmin(dist[i, cand]))]]
    return labels


def _dbscan_sparse(lat: np.ndarray, lon: np.ndarray, params: DbscanParams, block: int = 512) -> np.ndarray:
    """Neighbor-list variant for inputs too large for a full distance matrix."""
    n = len(lat)
    eps_km = params.eps_m / 1000.0
    neigh: list[np.ndarray] = []
    for i0 in range(0, n, block):
        d = haversine_km_vec(lat[i0 : i0 + block, None], lon[i0 : i0 + block, None], lat[None, :], lon[None, :])
        for r in range(d.shape[0]):
            neigh.append(np.flatnonzero(d[r] <= eps_km))
    core = np.array([len(nb) >= params.min_pts for nb in neigh])
    labels = np.full(n, -1, dtype=int)
    cluster = 0
    visited = np.zeros(n, dtype=bool)
    for i in range(n):
        if not core[i] or visited[i]:
            continue
        queue = [i]
        visited[i] = True
        while queue:
            u = queue.pop()
            labels[u] = cluster
            for v in neigh[u]:
                if core[v] and not visited[v]:
                    visited[v] = True
                    queue.append(v)
        cluster += 1
    for i in np.flatnonzero(~core):
        cand = neigh[i][core[neigh[i]]]
        if len(cand):
            d = haversine_km_vec(lat[cand], lon[cand], lat[i], lon[i])
            labels[i] = labels[cand[int(np.argmin(d))]]
    return labels


def dbscan(points, params: DbscanParams) -> np.ndarray:
    """Density clustering with the haversine metric and deterministic labels.

    Clusters are connected components of core points under eps-reachability;
    ids are dense from 0 in order of each component's first core point by
    input index.  A border point joins the cluster of its nearest core
    neighbor (ties to the smaller index); everything else is noise (-1).
    """
    if isinstance(points, np.ndarray):
        lat, lon = points[:, 0].astype(float), points[:, 1].astype(float)
    else:
        lat = np.array([p.lat for p in points], dtype=float)
        lon = np.array([p.lon for p in points], dtype=float)
    n = len(lat)
    if n == 0:
        return np.full(0, -1, dtype=int)
    if n <= _DENSE_LIMIT:
        return _dbscan_dense(lat, lon, params)
    return _dbscan_sparse(lat, lon, params)


@dataclass(frozen=True)
class ActivityLocation:
    """A building-snapped place where one device's visits accumulate."""

    device_id: str
    cluster_id: int
    location_id: int
    building_id: str | None
    lat: float
    lon: float
    visits: tuple[tuple[int, int], ...]  # absolute (start, end), sorted, non-overlapping

    @property
    def n_visits(self) -> int:
        return len(self.visits)

    @property
    def total_hours(self) -> float:
        return sum(e - s for s, e in self.visits) / SECONDS_PER_HOUR


@dataclass(frozen=True)
class DeviceActivityData:
    device_id: str
    locations: tuple[ActivityLocation, ...]

    def active_days(self, utc_offset_s: int = 0) -> int:
        days = set()
        for loc in self.locations:
            for s, _ in loc.visits:
                days.add(local_day_index(s, utc_offset_s))
        return len(days)

    def location_by_id(self, location_id: int) -> ActivityLocation:
        for loc in self.locations:
            if loc.location_id == location_id:
                return loc
        raise KeyError(location_id)


def _merge_intervals(intervals: list[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    if not intervals:
        return ()
    intervals = sorted(intervals)
    merged = [list(intervals[0])]
    for s, e in intervals[1:]:
        if s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return tuple((s, e) for s, e in merged)


def build_activity_locations(
    device_id: str,
    stops: list[Stop],
    buildings: BuildingIndex,
    cluster_eps_km: float = 200.0,
    cluster_min_pts: int = 2,
    location_eps_m: float = 100.0,
    location_min_pts: int = 1,
    snap_max_m: float = 500.0,
) -> list[ActivityLocation]:
    """Two-stage clustering of one device's stops into activity locations.

    Stage-1 noise stops are discarded; stage-2 groups inside one activity
    space never mix with another space.  Group coordinates are the mean of
    member stop coordinates, replaced by the nearest building within the snap
    radius when one exists.
    """
    if not stops:
        return []
    lat = np.array([s.lat for s in stops])
    lon = np.array([s.lon for s in stops])
    space = dbscan(np.column_stack([lat, lon]), DbscanParams(cluster_eps_km * 1000.0, cluster_min_pts))
    out: list[ActivityLocation] = []
    next_location = 0
    for cid in range(space.max() + 1 if space.size else 0):
        members = np.flatnonzero(space == cid)
        sub = dbscan(np.column_stack([lat[members], lon[members]]), DbscanParams(location_eps_m, location_min_pts))
        for gid in range(sub.max() + 1):
            grp = members[sub == gid]
            glat = float(lat[grp].mean())
            glon = float(lon[grp].mean())
            building = buildings.nearest(glat, glon, snap_max_m)
            visits = _merge_intervals([(stops[i].start, stops[i].end) for i in grp])
            out.append(
                ActivityLocation(
                    device_id=device_id,
                    cluster_id=cid,
                    location_id=next_location,
                    building_id=building.building_id if building else None,
                    lat=building.lat if building else glat,
                    lon=building.lon if building else glon,
                    visits=visits,
                )
            )
            next_location += 1
    return out


@dataclass(frozen=True)
class FilterParams:
    max_visit_hours: float = 12.0
    min_active_days: int = 7
    min_unique_locations: int = 2
    holidays: frozenset[dt.date] = frozenset()
    study_polygon: tuple[tuple[float, float], ...] | None = None
    utc_offset_s: int = 0


@dataclass
class FilterReport:
    visits_over_max: int = 0
    visits_outside_bounds: int = 0
    visits_weekend_holiday: int = 0
    devices_few_active_days: int = 0
    devices_few_locations: int = 0
    devices_in: int = 0
    devices_out: int = 0
    removed_by: dict[str, int] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "visits_over_max": self.visits_over_max,
            "visits_outside_bounds": self.visits_outside_bounds,
            "visits_weekend_holiday": self.visits_weekend_holiday,
            "devices_few_active_days": self.devices_few_active_days,
            "devices_few_locations": self.devices_few_locations,
            "devices_in": self.devices_in,
            "devices_out": self.devices_out,
        }


def _local_date(ts: int, utc_offset_s: int) -> dt.date:
    return dt.datetime.fromtimestamp(ts + utc_offset_s, tz=dt.timezone.utc).date()


def apply_filters(devices: list[DeviceActivityData], params: FilterParams) -> tuple[list[DeviceActivityData], FilterReport]:
    """Drop low-quality visits, then devices that no longer qualify.

    Visit rules: duration above the cap, location outside the study polygon,
    start on a weekend or holiday.  Device rules: fewer active days or unique
    locations than the minima.
    """
    report = FilterReport(devices_in=len(devices))
    max_s = params.max_visit_hours * SECONDS_PER_HOUR
    kept: list[DeviceActivityData] = []
    for dev in devices:
        new_locs: list[ActivityLocation] = []
        for loc in dev.locations:
            if params.study_polygon is not None and not point_in_polygon(loc.lat, loc.lon, params.study_polygon):
                report.visits_outside_bounds += len(loc.visits)
                continue
            visits = []
            for s, e in loc.visits:
                if e - s > max_s:
                    report.visits_over_max += 1
                    continue
                day = _local_date(s, params.utc_offset_s)
                if day.weekday() >= 5 or day in params.holidays:
                    report.visits_weekend_holiday += 1
                    continue
                visits.append((s, e))
            if visits:
                new_locs.append(replace(loc, visits=tuple(visits)))
        candidate = DeviceActivityData(dev.device_id, tuple(new_locs))
        if candidate.active_days(params.utc_offset_s) < params.min_active_days:
            report.devices_few_active_days += 1
            continue
        if len(candidate.locations) < params.min_unique_locations:
            report.devices_few_locations += 1
            continue
        kept.append(candidate)
    report.devices_out = len(kept)
    return kept, report
