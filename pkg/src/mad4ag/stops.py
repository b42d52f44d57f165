"""Two-phase stop detection: stay runs per device, then spatial stop grouping.

Phase one scans each device's fix sequence greedily from the left, growing a
run while every member fix stays within ``r1`` of the run's medoid (the member
nearest the running centroid) and consecutive gaps stay below ``t_max``.  Runs
of at least ``t_min`` become stays.  Phase two links stays whose medoids lie
within ``r2``, which is exactly single-linkage clustering at that threshold;
labels are dense integers in order of first appearance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import EARTH_RADIUS_KM, RawFix, Stop, haversine_m_rad


@dataclass(frozen=True)
class StopParams:
    r1_m: float = 30.0  # roaming radius within one stay
    r2_m: float = 30.0  # stop-merge radius
    t_min_s: int = 900  # minimum stay duration
    t_max_s: int = 10800  # maximum gap between consecutive fixes in a stay

    def __post_init__(self):
        if min(self.r1_m, self.r2_m, self.t_min_s, self.t_max_s) <= 0:
            raise ValueError("all stop parameters must be positive")


@dataclass(frozen=True)
class Stay:
    """One provisional stay before spatial grouping."""

    medoid_lat: float
    medoid_lon: float
    mean_lat: float
    mean_lon: float
    start: int
    end: int
    n_fixes: int


_M_PER_RAD = 2000.0 * EARTH_RADIUS_KM


def _hav_m_scalar(lat1_r: float, lon1_r: float, lat2_r: float, lon2_r: float) -> float:
    h = (
        math.sin((lat2_r - lat1_r) / 2) ** 2
        + math.cos(lat1_r) * math.cos(lat2_r) * math.sin((lon2_r - lon1_r) / 2) ** 2
    )
    return _M_PER_RAD * math.asin(min(1.0, math.sqrt(h)))


def _hav_m_block(lat_r, lon_r, cos_lat, plat_r, plon_r, cos_p) -> np.ndarray:
    h = np.sin((plat_r - lat_r) * 0.5) ** 2 + cos_lat * cos_p * np.sin((plon_r - lon_r) * 0.5) ** 2
    return _M_PER_RAD * np.arcsin(np.sqrt(h))


def detect_stays_arrays(ts: np.ndarray, lat: np.ndarray, lon: np.ndarray, p: StopParams) -> list[Stay]:
    """Array-based stay scan for one device; fixes must be sorted by ts."""
    n = len(ts)
    if n < 2:
        return []
    lat_r = np.radians(lat)
    lon_r = np.radians(lon)
    cos_lat = np.cos(lat_r)
    stays: list[Stay] = []

    def medoid_of(i0: int, i1: int) -> int:
        """Member of fixes[i0:i1] nearest the centroid; first index wins ties."""
        sl = slice(i0, i1)
        clat = float(lat_r[sl].mean())
        clon = float(lon_r[sl].mean())
        d = _hav_m_block(lat_r[sl], lon_r[sl], cos_lat[sl], clat, clon, math.cos(clat))
        return i0 + int(np.argmin(d))

    def close(i0: int, i1: int) -> None:
        # run is fixes[i0:i1]
        if i1 - i0 < 2 or ts[i1 - 1] - ts[i0] < p.t_min_s:
            return
        m = medoid_of(i0, i1)
        sl = slice(i0, i1)
        stays.append(
            Stay(
                medoid_lat=float(lat[m]),
                medoid_lon=float(lon[m]),
                mean_lat=float(lat[sl].mean()),
                mean_lon=float(lon[sl].mean()),
                start=int(ts[i0]),
                end=int(ts[i1 - 1]),
                n_fixes=i1 - i0,
            )
        )

    # if a grown run could satisfy the radius rule, the new fix must lie within
    # 2*r1 of the current medoid (triangle inequality through the new medoid),
    # so anything farther is rejected without recomputation
    fast_reject_m = 2.0 * p.r1_m + 0.001

    start = 0
    medoid = 0  # medoid index of the accepted run [start, j)
    j = 1
    while j < n:
        if ts[j] - ts[j - 1] > p.t_max_s or (
            _hav_m_scalar(lat_r[j], lon_r[j], lat_r[medoid], lon_r[medoid]) > fast_reject_m
        ):
            close(start, j)
            start = j
            medoid = j
            j += 1
            continue
        m = medoid_of(start, j + 1)
        sl = slice(start, j + 1)
        d = _hav_m_block(lat_r[sl], lon_r[sl], cos_lat[sl], float(lat_r[m]), float(lon_r[m]), float(cos_lat[m]))
        if float(d.max()) <= p.r1_m:
            medoid = m
            j += 1
        else:
            close(start, j)
            start = j
            medoid = j
            j += 1
    close(start, n)
    return stays


def detect_stays(fixes: list[RawFix], p: StopParams) -> list[Stay]:
    """Stays for one device's chronologically sorted fixes."""
    ts = np.array([f.ts for f in fixes], dtype=np.int64)
    lat = np.array([f.lat for f in fixes])
    lon = np.array([f.lon for f in fixes])
    return detect_stays_arrays(ts, lat, lon, p)


def group_stops(device_id: str, stays: list[Stay], p: StopParams) -> list[Stop]:
    """Label stays by single-linkage components of medoids at threshold r2.

    Stop coordinates are the arithmetic mean of the member fixes; labels are
    dense from 0 in order of each component's first stay.
    """
    m = len(stays)
    if m == 0:
        return []
    lat_r = np.radians([s.medoid_lat for s in stays])
    lon_r = np.radians([s.medoid_lon for s in stays])

    parent = list(range(m))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for i in range(m - 1):
        d = haversine_m_rad(lat_r[i + 1 :], lon_r[i + 1 :], lat_r[i], lon_r[i])
        for off in np.flatnonzero(d <= p.r2_m):
            union(i, i + 1 + int(off))

    labels: dict[int, int] = {}
    out = []
    for i, s in enumerate(stays):
        root = find(i)
        if root not in labels:
            labels[root] = len(labels)
        out.append(
            Stop(
                device_id=device_id,
                lat=s.mean_lat,
                lon=s.mean_lon,
                start=s.start,
                end=s.end,
                label=labels[root],
            )
        )
    return out


def detect_stops_for_device(device_id: str, ts: np.ndarray, lat: np.ndarray, lon: np.ndarray, p: StopParams) -> list[Stop]:
    """Full per-device stop detection pipeline (stays + grouping)."""
    return group_stops(device_id, detect_stays_arrays(ts, lat, lon, p), p)
