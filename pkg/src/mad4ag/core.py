"""Shared domain types, geodesy, clock arithmetic and the deterministic seeding contract.

Every stochastic choice in the pipeline draws from a generator derived from
the master seed plus a stage name and an entity key (device id, group key,
simulation day).  Per-entity streams are independent, so the amount of worker
parallelism can never change results.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_KM = 6371.0088  # IUGG mean radius
SECONDS_PER_HOUR = 3600
SECONDS_PER_DAY = 86400


class PipelineError(Exception):
    """Base class for all pipeline failures."""


class ConfigError(PipelineError):
    """Bad configuration file, key or value (exit code 2)."""


class DataError(PipelineError):
    """Input data violates its schema or invariants (exit code 3)."""


class MissingFile(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class EmptySurvey(DataError):
    """No usable survey diaries; twin matching is impossible."""


class NoQualifyingHours(DataError):
    """No hour of day exceeds the home-participation threshold."""


class DegenerateRanks(DataError):
    """Rank correlation undefined because one vector is constant."""


class PrerequisiteError(PipelineError):
    """A stage was run before the stage that produces its input (exit code 4)."""


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude out of range: {self.lat}")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class RawFix:
    """One timestamped GPS observation of one device.

    ``ts`` is epoch seconds carrying the local civil time of the study region;
    a fixed UTC offset from configuration maps it to clock hours.
    """

    device_id: str
    lat: float
    lon: float
    ts: int

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude out of range: {self.lat}")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude out of range: {self.lon}")
        if self.ts <= 0:
            raise ValueError(f"timestamp must be positive: {self.ts}")


@dataclass(frozen=True)
class Stop:
    """A contiguous stay of >=15 minutes at one place, labelled by stop group."""

    device_id: str
    lat: float
    lon: float
    start: int
    end: int
    label: int

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError("stop must have positive duration")


@dataclass(frozen=True)
class ClockInterval:
    """Seconds-of-day interval; ``end_s < start_s`` means it wraps past midnight.

    ``ClockInterval(0, 86400)`` is the full day; equal endpoints are rejected
    as ambiguous.
    """

    start_s: int
    end_s: int

    def __post_init__(self):
        if self.start_s == self.end_s:
            raise ValueError("zero-length clock interval")
        if self.duration_s <= 0 or self.duration_s > SECONDS_PER_DAY:
            raise ValueError(f"invalid interval duration: {self.duration_s}")

    @property
    def duration_s(self) -> int:
        if self.end_s > self.start_s:
            return self.end_s - self.start_s
        return SECONDS_PER_DAY - self.start_s + self.end_s

    def hours(self) -> list[int]:
        """Whole hour indices covered, in clock order from the start hour."""
        first = self.start_s // SECONDS_PER_HOUR
        n = self.duration_s // SECONDS_PER_HOUR
        return [(first + k) % 24 for k in range(n)]

    def contains_hour(self, hour: int) -> bool:
        return hour in set(self.hours())


# RngSeed contract: any 64-bit unsigned value is a valid master seed.
RngSeed = int


def derive_seed(master: RngSeed, *parts: object) -> int:
    """Stable 64-bit seed for a (stage, entity) slot under the master seed."""
    token = "|".join([str(int(master))] + [str(p) for p in parts])
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(master: RngSeed, *parts: object) -> np.random.Generator:
    """Independent generator for one (stage, entity) slot."""
    return np.random.default_rng(derive_seed(master, *parts))


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in km on a sphere of mean Earth radius."""
    lat1, lon1, lat2, lon2 = map(math.radians, (a.lat, a.lon, b.lat, b.lon))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def haversine_km_vec(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorized haversine over degree arrays (broadcasting allowed)."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(x, dtype=float)) for x in (lat1, lon1, lat2, lon2))
    h = (
        np.sin((lat2 - lat1) / 2) ** 2
        + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    )
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def haversine_m_rad(lat1_r, lon1_r, lat2_r, lon2_r) -> np.ndarray:
    """Vectorized haversine in meters over radian arrays (hot path)."""
    h = (
        np.sin((lat2_r - lat1_r) / 2) ** 2
        + np.cos(lat1_r) * np.cos(lat2_r) * np.sin((lon2_r - lon1_r) / 2) ** 2
    )
    return 2000.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def hour_of(ts: int, utc_offset_s: int = 0) -> int:
    """Local clock hour (0..23) of an epoch timestamp under a fixed offset."""
    return ((ts + utc_offset_s) // SECONDS_PER_HOUR) % 24


def local_day_index(ts: int, utc_offset_s: int = 0) -> int:
    """Local calendar day as days-since-epoch under the fixed offset."""
    return (ts + utc_offset_s) // SECONDS_PER_DAY


def hour_overlaps(start: int, end: int, utc_offset_s: int = 0) -> np.ndarray:
    """Fractional hours of ``[start, end]`` falling in each clock-hour bucket.

    Values accumulate across days, so a bucket can exceed 1.0 for multi-day
    intervals; the 24 buckets always sum to the interval duration in hours.
    """
    if start >= end:
        raise ValueError("interval must have positive duration")
    acc = np.zeros(24)
    t = start + utc_offset_s
    stop = end + utc_offset_s
    while t < stop:
        nxt = min(stop, (t // SECONDS_PER_HOUR + 1) * SECONDS_PER_HOUR)
        acc[(t // SECONDS_PER_HOUR) % 24] += (nxt - t) / SECONDS_PER_HOUR
        t = nxt
    return acc


def overlap_hours(start: int, end: int, hour: int, utc_offset_s: int = 0) -> float:
    """Fractional hours of the interval spent in one clock-hour bucket."""
    return float(hour_overlaps(start, end, utc_offset_s)[hour])
