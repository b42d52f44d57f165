"""Representativeness weights: inverse probability weighting by zone
population, iterative proportional fitting to zone employee counts, and
weight trimming.

The trim threshold follows the printed form W0 = 3.5 * sqrt(1 + CV^2 * Med)
by default; the ``classic`` variant 3.5 * Med * sqrt(1 + CV^2), the standard
form in the weighting literature, is available as a config switch.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .clustering import DeviceActivityData
from .core import GeoPoint, haversine_km
from .primary import PrimaryAssignment
from .ingestion import Zone, ZoneIndex


@dataclass(frozen=True)
class PersonProfile:
    """One retained device's inferred anchors and matching attributes."""

    device_id: str
    zone_id: str
    region: str
    urban_density: str
    employed: bool
    home_location_id: int
    home_lat: float
    home_lon: float
    work_location_id: int | None
    work_lat: float | None
    work_lon: float | None
    avg_trip_km: float
    commute_km: float | None
    has_secondary: bool


def build_profiles(
    devices: list[DeviceActivityData],
    assignments: dict[str, PrimaryAssignment],
    zones: list[Zone],
) -> tuple[list[PersonProfile], list[str]]:
    """Join inferred primaries with home zones; devices outside coverage are
    excluded and reported.

    The average trip distance is the visit-count-weighted mean of home-to-
    location distances over all non-home locations.
    """
    index = ZoneIndex(zones)
    zone_by_id = {z.zone_id: z for z in zones}
    profiles: list[PersonProfile] = []
    outside: list[str] = []
    for dev in sorted(devices, key=lambda d: d.device_id):
        pa = assignments.get(dev.device_id)
        if pa is None:
            continue
        home = dev.location_by_id(pa.home_location_id)
        zone_id = index.zone_of(GeoPoint(home.lat, home.lon))
        if zone_id is None:
            outside.append(dev.device_id)
            continue
        zone = zone_by_id[zone_id]
        dists, counts = [], []
        work_loc = None
        for loc in dev.locations:
            if loc.location_id == pa.home_location_id:
                continue
            if pa.work_location_id is not None and loc.location_id == pa.work_location_id:
                work_loc = loc
            dists.append(haversine_km(GeoPoint(home.lat, home.lon), GeoPoint(loc.lat, loc.lon)))
            counts.append(loc.n_visits)
        avg_trip = float(np.average(dists, weights=counts)) if dists else 0.0
        commute = (
            haversine_km(GeoPoint(home.lat, home.lon), GeoPoint(work_loc.lat, work_loc.lon))
            if work_loc is not None
            else None
        )
        has_secondary = any(
            loc.location_id not in (pa.home_location_id, pa.work_location_id) for loc in dev.locations
        )
        profiles.append(
            PersonProfile(
                device_id=dev.device_id,
                zone_id=zone_id,
                region=zone.region,
                urban_density=zone.urban_density,
                employed=pa.work_location_id is not None,
                home_location_id=pa.home_location_id,
                home_lat=home.lat,
                home_lon=home.lon,
                work_location_id=pa.work_location_id,
                work_lat=work_loc.lat if work_loc else None,
                work_lon=work_loc.lon if work_loc else None,
                avg_trip_km=avg_trip,
                commute_km=commute,
                has_secondary=has_secondary,
            )
        )
    return profiles, outside


@dataclass(frozen=True)
class PersonWeight:
    device_id: str
    zone_id: str
    employed: bool
    w: float


def initial_weights(profiles: list[PersonProfile], zones: list[Zone]) -> tuple[list[PersonWeight], list[str]]:
    """Inverse probability weights: zone population over zone sample size.

    Zones without any sampled device contribute nothing and are reported.
    """
    by_zone: dict[str, list[PersonProfile]] = {}
    for p in profiles:
        by_zone.setdefault(p.zone_id, []).append(p)
    weights: list[PersonWeight] = []
    empty_zones: list[str] = []
    for zone in sorted(zones, key=lambda z: z.zone_id):
        members = by_zone.get(zone.zone_id)
        if not members:
            empty_zones.append(zone.zone_id)
            continue
        w = zone.population / len(members)
        for p in sorted(members, key=lambda m: m.device_id):
            weights.append(PersonWeight(p.device_id, p.zone_id, p.employed, w))
    return weights, empty_zones


def ipf_employment(
    weights: list[PersonWeight],
    zones: list[Zone],
    tol: float = 1e-6,
    max_iter: int = 100,
) -> tuple[list[PersonWeight], list[str]]:
    """Alternate per-zone scaling to the employee marginal and the population
    total until weights stabilize.

    Zones where the two marginals cannot both hold (no employed members with a
    positive employee count, no non-employed members with employees below
    population, or a zero employee target against employed members) keep their
    initial weights and are flagged.
    """
    zone_by_id = {z.zone_id: z for z in zones}
    by_zone: dict[str, list[int]] = {}
    for i, pw in enumerate(weights):
        by_zone.setdefault(pw.zone_id, []).append(i)
    out = list(weights)
    degenerate: list[str] = []
    for zone_id in sorted(by_zone):
        zone = zone_by_id[zone_id]
        idx = by_zone[zone_id]
        employed = np.array([weights[i].employed for i in idx])
        w = np.array([weights[i].w for i in idx], dtype=float)
        n_emp = int(employed.sum())
        infeasible = (
            (n_emp == 0 and zone.employees > 0)
            or (n_emp == len(idx) and zone.employees != zone.population)
            or (zone.employees == 0 and n_emp > 0)
        )
        if infeasible:
            degenerate.append(zone_id)
            continue
        for _ in range(max_iter):
            prev = w.copy()
            if n_emp:
                s_emp = w[employed].sum()
                w[employed] *= zone.employees / s_emp
            w *= zone.population / w.sum()
            if np.max(np.abs(w - prev) / prev) < tol:
                break
        for k, i in enumerate(idx):
            out[i] = replace(weights[i], w=float(w[k]))
    return out, degenerate


def trim_threshold(values: np.ndarray, variant: str = "literal") -> float:
    """Trim cap from the weight vector's dispersion.

    ``literal`` keeps the median inside the square root as printed;
    ``classic`` is the conventional 3.5 * Med * sqrt(1 + CV^2).
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot trim an empty weight vector")
    med = float(np.median(values))
    mean = float(values.mean())
    cv = float(values.std() / mean) if mean else 0.0
    if variant == "literal":
        return 3.5 * float(np.sqrt(1.0 + cv * cv * med))
    if variant == "classic":
        return 3.5 * med * float(np.sqrt(1.0 + cv * cv))
    raise ValueError(f"unknown trim variant: {variant}")


def trim_weights(
    weights: list[PersonWeight],
    variant: str = "literal",
    w0: float | None = None,
) -> tuple[list[PersonWeight], float]:
    """Cap every weight above the threshold at the threshold.

    The cap is computed from the incoming weights unless given explicitly;
    capping twice at the same threshold changes nothing.
    """
    values = np.array([pw.w for pw in weights], dtype=float)
    if w0 is None:
        w0 = trim_threshold(values, variant)
    trimmed = [replace(pw, w=min(pw.w, w0)) for pw in weights]
    return trimmed, w0
