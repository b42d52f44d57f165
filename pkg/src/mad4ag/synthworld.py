"""Synthetic study region with planted ground truth.

Generates rectangular census zones, a building stock on a jittered lattice,
a device population executing archetype day plans, a disjoint survey
population reporting diaries from the same archetypes, and sparse noisy GPS
traces.  Phone interaction pauses during a per-person sleep window, so
overnight home presence splits into an evening and a morning stay, as it does
when people leave their phones alone at night.

Ground truth lives in truth.csv, which the pipeline never reads.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .core import SECONDS_PER_DAY, rng_for
from .ingestion import FixTable, polygon_wkt

LAT0 = 58.4  # southern edge of the study box
LON0 = 16.8  # western edge
ZONE_DLAT = 0.09  # ~10 km
ZONE_DLON = 0.17  # ~9.9 km at this latitude
M_PER_DEG_LAT = 111_320.0

# (sequence, weight, activities as (kind, start_s, end_s))
EMPLOYED_WEEKDAY = (
    ("H-W-H", 0.64, (("Home", 0, 27900), ("Work", 29700, 63000), ("Home", 64800, 86400))),
    (
        "H-W-H-O-H",
        0.15,
        (
            ("Home", 0, 27900),
            ("Work", 29700, 59400),
            ("Home", 60300, 65700),
            ("Other", 67500, 72900),
            ("Home", 74700, 86400),
        ),
    ),
    (
        "H-W-O-H",
        0.12,
        (("Home", 0, 27900), ("Work", 29700, 61200), ("Other", 63000, 68400), ("Home", 70200, 86400)),
    ),
    ("H", 0.09, (("Home", 0, 86400),)),
)
UNEMPLOYED_WEEKDAY = (
    ("H-O-H", 0.50, (("Home", 0, 34200), ("Other", 36000, 43200), ("Home", 45000, 86400))),
    ("H", 0.33, (("Home", 0, 86400),)),
    (
        "H-O-H-O-H",
        0.17,
        (
            ("Home", 0, 34200),
            ("Other", 36000, 43200),
            ("Home", 45000, 54000),
            ("Other", 55800, 63000),
            ("Home", 64800, 86400),
        ),
    ),
)
WEEKEND = (
    ("H-O-H", 0.6, (("Home", 0, 36000), ("Other", 37800, 48600), ("Home", 50400, 86400))),
    ("H", 0.4, (("Home", 0, 86400),)),
)

SWEDEN_HOLIDAYS_2019 = (
    "2019-01-01",
    "2019-01-06",
    "2019-04-19",
    "2019-04-21",
    "2019-04-22",
    "2019-05-01",
    "2019-05-30",
    "2019-06-06",
    "2019-06-09",
    "2019-06-21",
    "2019-06-22",
    "2019-11-02",
    "2019-12-24",
    "2019-12-25",
    "2019-12-26",
    "2019-12-31",
)


@dataclass(frozen=True)
class WorldSpec:
    n_zones: int = 9
    n_persons: int = 500
    employment_rate: float = 0.45
    gps_noise_sigma_m: float = 20.0
    interaction_rate: float = 2.0  # fixes per hour while awake
    n_days: int = 60
    seed: int = 42
    n_survey: int = 600
    start_epoch: int = 1559520000  # 2019-06-03 00:00, a Monday

    def __post_init__(self):
        if min(self.n_zones, self.n_persons, self.n_days, self.n_survey) <= 0:
            raise ValueError("world dimensions must be positive")
        if not (0.0 <= self.employment_rate <= 1.0):
            raise ValueError("employment rate must lie in [0, 1]")
        if self.gps_noise_sigma_m < 0 or self.interaction_rate <= 0:
            raise ValueError("noise and interaction rate must be positive")


@dataclass(frozen=True)
class _ZoneDef:
    zone_id: str
    region: str
    urban_density: str
    population: int
    employees: int
    lat0: float
    lon0: float
    lat1: float
    lon1: float


@dataclass(frozen=True)
class _BuildingDef:
    building_id: str
    lat: float
    lon: float
    kind: str


@dataclass(frozen=True)
class _PersonDef:
    person_id: str
    zone_id: str
    employed: bool
    home: _BuildingDef
    work: _BuildingDef | None
    others: tuple[_BuildingDef, ...]
    archetype: str


def _m_per_deg_lon(lat: float) -> float:
    return M_PER_DEG_LAT * math.cos(math.radians(lat))


def _make_zones(spec: WorldSpec, rng: np.random.Generator) -> list[_ZoneDef]:
    g = int(math.ceil(math.sqrt(spec.n_zones)))
    zones = []
    for idx in range(spec.n_zones):
        row, col = divmod(idx, g)
        band = row * 3 // g
        region = ("Götaland", "Svealand", "Norrland")[band]
        density = "high" if (row + col) % 2 == 0 else "low"
        pop = int(rng.integers(700, 2701))
        emp = int(round(pop * spec.employment_rate * rng.uniform(0.85, 1.15)))
        emp = max(1, min(pop, emp))
        zones.append(
            _ZoneDef(
                zone_id=f"z{idx:03d}",
                region=region,
                urban_density=density,
                population=pop,
                employees=emp,
                lat0=LAT0 + row * ZONE_DLAT,
                lon0=LON0 + col * ZONE_DLON,
                lat1=LAT0 + (row + 1) * ZONE_DLAT,
                lon1=LON0 + (col + 1) * ZONE_DLON,
            )
        )
    return zones


def _make_buildings(zones: list[_ZoneDef], rng: np.random.Generator) -> dict[str, dict[str, list[_BuildingDef]]]:
    """Jittered-lattice building stock; lattice pitch keeps buildings apart so
    100 m location clustering cannot merge neighbours."""
    per_kind = {"residential": 14, "workplace": 8, "other": 10}
    out: dict[str, dict[str, list[_BuildingDef]]] = {}
    counter = 0
    for z in zones:
        lat_span = z.lat1 - z.lat0
        lon_span = z.lon1 - z.lon0
        cells = 7  # 7x7 lattice per zone, pitch ~4.5 km
        slots = [(r, c) for r in range(cells) for c in range(cells)]
        order = rng.permutation(len(slots))
        by_kind: dict[str, list[_BuildingDef]] = {k: [] for k in per_kind}
        take = 0
        for kind, count in per_kind.items():
            for _ in range(count):
                r, c = slots[order[take]]
                take += 1
                lat = z.lat0 + lat_span * (r + 0.5) / cells + rng.uniform(-80, 80) / M_PER_DEG_LAT
                lon = z.lon0 + lon_span * (c + 0.5) / cells + rng.uniform(-80, 80) / _m_per_deg_lon(z.lat0)
                by_kind[kind].append(_BuildingDef(f"b{counter:05d}", lat, lon, kind))
                counter += 1
        out[z.zone_id] = by_kind
    return out


def _distance_km(a: _BuildingDef, b: _BuildingDef) -> float:
    dlat = (a.lat - b.lat) * M_PER_DEG_LAT
    dlon = (a.lon - b.lon) * _m_per_deg_lon((a.lat + b.lat) / 2)
    return math.hypot(dlat, dlon) / 1000.0


def _pick_biased(home: _BuildingDef, candidates: list[_BuildingDef], scale_km: float, rng: np.random.Generator, size: int = 1) -> list[_BuildingDef]:
    w = np.array([math.exp(-_distance_km(home, b) / scale_km) for b in candidates])
    idx = rng.choice(len(candidates), size=size, replace=False, p=w / w.sum())
    return [candidates[int(i)] for i in idx]


def _make_person(
    pid: str,
    spec: WorldSpec,
    zones: list[_ZoneDef],
    zone_probs: np.ndarray,
    buildings: dict[str, dict[str, list[_BuildingDef]]],
    all_workplaces: list[_BuildingDef],
    all_others: list[_BuildingDef],
    rng: np.random.Generator,
) -> _PersonDef:
    zone = zones[int(rng.choice(len(zones), p=zone_probs))]
    home = buildings[zone.zone_id]["residential"][int(rng.integers(0, len(buildings[zone.zone_id]["residential"])))]
    employed = bool(rng.random() < spec.employment_rate)
    work = _pick_biased(home, all_workplaces, 5.0, rng)[0] if employed else None
    n_other = int(rng.integers(3, 7))
    others = tuple(_pick_biased(home, all_others, 1.6, rng, size=n_other))
    return _PersonDef(pid, zone.zone_id, employed, home, work, others, "employed" if employed else "unemployed")


def _pick_template(templates, rng: np.random.Generator):
    w = np.array([t[1] for t in templates])
    return templates[int(rng.choice(len(templates), p=w / w.sum()))]


def _jitter_day(activities, rng: np.random.Generator) -> list[tuple[str, int, int]]:
    """Shift internal boundaries by up to 15 minutes, keeping order and gaps."""
    out = []
    prev_end = 0
    n = len(activities)
    for i, (kind, start, end) in enumerate(activities):
        s = 0 if i == 0 else max(prev_end + 300, start + int(rng.integers(-900, 901)))
        e = SECONDS_PER_DAY if i == n - 1 else end + int(rng.integers(-900, 901))
        e = max(e, s + 600)
        out.append((kind, s, min(e, SECONDS_PER_DAY)))
        prev_end = out[-1][2]
    return out


def _weekday(spec: WorldSpec, day: int) -> int:
    return dt.datetime.fromtimestamp(spec.start_epoch + day * SECONDS_PER_DAY, tz=dt.timezone.utc).weekday()


def _day_plan(person: _PersonDef, spec: WorldSpec, day: int, rng: np.random.Generator):
    """(kind, start_s, end_s, building) entries for one day, already jittered."""
    if _weekday(spec, day) >= 5:
        templates = WEEKEND
    elif person.employed:
        templates = EMPLOYED_WEEKDAY
    else:
        templates = UNEMPLOYED_WEEKDAY
    _, _, activities = _pick_template(templates, rng)
    timed = _jitter_day(activities, rng)
    plan = []
    for kind, s, e in timed:
        if kind == "Home":
            b = person.home
        elif kind == "Work":
            b = person.work if person.work is not None else person.home
        else:
            b = person.others[int(rng.integers(0, len(person.others)))]
        plan.append((kind, s, e, b))
    return plan


def _emit_fixes(
    person: _PersonDef,
    spec: WorldSpec,
    rng: np.random.Generator,
) -> tuple[list[int], list[float], list[float]]:
    """Sparse noisy trace over the whole observation period.

    Positional error keeps the configured marginal sigma but splits it into a
    per-stay bias (0.8 sigma) and per-fix jitter (0.6 sigma), matching the
    strong within-stay autocorrelation of real receivers.
    """
    rate_s = spec.interaction_rate / 3600.0
    sigma_bias = 0.8 * spec.gps_noise_sigma_m
    sigma_jitter = 0.6 * spec.gps_noise_sigma_m
    sigma_deg_lat = spec.gps_noise_sigma_m / M_PER_DEG_LAT
    ts_out: list[int] = []
    lat_out: list[float] = []
    lon_out: list[float] = []

    for day in range(spec.n_days):
        day_start = spec.start_epoch + day * SECONDS_PER_DAY
        sleep_start = 82800 + int(rng.integers(0, 5400))  # 23:00-00:30
        wake = 21600 + int(rng.integers(0, 5400))  # 06:00-07:30

        def keep_awake(sod: np.ndarray) -> np.ndarray:
            asleep = (sod >= sleep_start) | (sod < wake)
            return ~asleep | (rng.random(len(sod)) < 0.04)

        plan = _day_plan(person, spec, day, rng)
        for i, (kind, s, e, b) in enumerate(plan):
            n = int(rng.poisson(rate_s * (e - s)))
            if n:
                times = np.sort(rng.integers(s, e, size=n))
                times = times[keep_awake(times)]
                k = len(times)
                if k:
                    m_lon = _m_per_deg_lon(b.lat)
                    bias_lat = rng.normal(0.0, sigma_bias) / M_PER_DEG_LAT
                    bias_lon = rng.normal(0.0, sigma_bias) / m_lon
                    ts_out.extend((day_start + times).tolist())
                    lat_out.extend((b.lat + bias_lat + rng.normal(0.0, sigma_jitter / M_PER_DEG_LAT, k)).tolist())
                    lon_out.extend((b.lon + bias_lon + rng.normal(0.0, sigma_jitter / m_lon, k)).tolist())
            if i + 1 < len(plan):
                gap_s, gap_e, nxt = e, plan[i + 1][1], plan[i + 1][3]
                n_travel = int(rng.poisson(rate_s * max(0, gap_e - gap_s) * 0.8))
                if n_travel and gap_e > gap_s:
                    times = np.sort(rng.integers(gap_s, gap_e, size=n_travel))
                    times = times[keep_awake(times)]
                    k = len(times)
                    if k:
                        frac = (times - gap_s) / max(1, gap_e - gap_s)
                        ts_out.extend((day_start + times).tolist())
                        lat_out.extend(
                            (b.lat + (nxt.lat - b.lat) * frac + rng.normal(0.0, sigma_deg_lat, k)).tolist()
                        )
                        lon_out.extend(
                            (
                                b.lon
                                + (nxt.lon - b.lon) * frac
                                + rng.normal(0.0, spec.gps_noise_sigma_m / _m_per_deg_lon(b.lat), k)
                            ).tolist()
                        )
    return ts_out, lat_out, lon_out


def _survey_rows(spec: WorldSpec, person: _PersonDef, pid: str, zones_by_id, rng: np.random.Generator):
    """One weekday diary with reported trip distances between its buildings."""
    templates = EMPLOYED_WEEKDAY if person.employed else UNEMPLOYED_WEEKDAY
    _, _, activities = _pick_template(templates, rng)
    timed = _jitter_day(activities, rng)
    rows = []
    prev_building = None
    zone = zones_by_id[person.zone_id]
    age = int(rng.integers(18, 85))
    for seq, (kind, s, e) in enumerate(timed):
        if kind == "Home":
            b = person.home
        elif kind == "Work":
            b = person.work if person.work is not None else person.home
        else:
            b = person.others[int(rng.integers(0, len(person.others)))]
        dist = "" if prev_building is None else f"{_distance_km(prev_building, b):.3f}"
        rows.append(
            {
                "participant_id": pid,
                "region": zone.region,
                "urban_density": zone.urban_density,
                "employed": int(person.employed),
                "seq": seq,
                "activity_type": kind,
                "start": (s // 60) * 60,
                "end": SECONDS_PER_DAY if e == SECONDS_PER_DAY else (e // 60) * 60,
                "distance_km": dist,
                "age": age,
            }
        )
        prev_building = b
    return rows


def generate_world(spec: WorldSpec, out_dir: str) -> dict[str, str]:
    """Write zones, buildings, survey, fixes and truth CSVs; returns the paths.

    The same seed always produces byte-identical files.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    world_rng = rng_for(spec.seed, "world")
    zones = _make_zones(spec, world_rng)
    buildings = _make_buildings(zones, world_rng)
    zones_by_id = {z.zone_id: z for z in zones}
    all_workplaces = [b for z in zones for b in buildings[z.zone_id]["workplace"]]
    all_others = [b for z in zones for b in buildings[z.zone_id]["other"]]
    pops = np.array([z.population for z in zones], dtype=float)
    zone_probs = pops / pops.sum()

    paths = {
        "zones": os.path.join(out_dir, "zones.csv"),
        "buildings": os.path.join(out_dir, "buildings.csv"),
        "survey": os.path.join(out_dir, "survey.csv"),
        "fixes": os.path.join(out_dir, "fixes.csv"),
        "truth": os.path.join(out_dir, "truth.csv"),
    }

    pd.DataFrame(
        [
            {
                "zone_id": z.zone_id,
                "region": z.region,
                "urban_density": z.urban_density,
                "population": z.population,
                "employees": z.employees,
                "wkt_polygon": polygon_wkt(
                    ((z.lat0, z.lon0), (z.lat0, z.lon1), (z.lat1, z.lon1), (z.lat1, z.lon0))
                ),
            }
            for z in zones
        ]
    ).to_csv(paths["zones"], index=False)

    pd.DataFrame(
        [
            {"building_id": b.building_id, "lat": b.lat, "lon": b.lon, "kind": b.kind}
            for z in zones
            for kind in ("residential", "workplace", "other")
            for b in buildings[z.zone_id][kind]
        ]
    ).to_csv(paths["buildings"], index=False)

    # device population with traces
    device_rows_ts: list[np.ndarray] = []
    device_rows_lat: list[np.ndarray] = []
    device_rows_lon: list[np.ndarray] = []
    device_rows_id: list[np.ndarray] = []
    truth_rows = []
    for i in range(spec.n_persons):
        pid = f"d{i:05d}"
        rng = rng_for(spec.seed, "device", pid)
        person = _make_person(pid, spec, zones, zone_probs, buildings, all_workplaces, all_others, rng)
        ts, lat, lon = _emit_fixes(person, spec, rng)
        order = np.argsort(np.array(ts, dtype=np.int64), kind="mergesort")
        device_rows_ts.append(np.array(ts, dtype=np.int64)[order])
        device_rows_lat.append(np.round(np.array(lat, dtype=float)[order], 7))
        device_rows_lon.append(np.round(np.array(lon, dtype=float)[order], 7))
        device_rows_id.append(np.full(len(ts), pid, dtype=object))
        truth_rows.append(
            {
                "device_id": pid,
                "home_building": person.home.building_id,
                "work_building": person.work.building_id if person.work else "",
                "zone_id": person.zone_id,
                "archetype": person.archetype,
            }
        )
    fixes = pd.DataFrame(
        {
            "device_id": np.concatenate(device_rows_id),
            "lat": np.concatenate(device_rows_lat),
            "lon": np.concatenate(device_rows_lon),
            "ts": np.concatenate(device_rows_ts),
        }
    )
    fixes = fixes.drop_duplicates(subset=["device_id", "ts"], keep="first")
    fixes.to_csv(paths["fixes"], index=False)
    pd.DataFrame(truth_rows).to_csv(paths["truth"], index=False)

    # disjoint survey population
    survey_rows = []
    for i in range(spec.n_survey):
        pid = f"p{i:05d}"
        rng = rng_for(spec.seed, "survey", pid)
        person = _make_person(pid, spec, zones, zone_probs, buildings, all_workplaces, all_others, rng)
        survey_rows.extend(_survey_rows(spec, person, pid, zones_by_id, rng))
    pd.DataFrame(survey_rows).to_csv(paths["survey"], index=False)
    return paths


def degrade(fixes: FixTable, sparsity_factor: float, seed: int) -> FixTable:
    """Independent thinning of the fix stream; factor 1 is the identity."""
    if not (0.0 < sparsity_factor <= 1.0):
        raise ValueError("sparsity factor must lie in (0, 1]")
    if sparsity_factor == 1.0:
        return fixes
    rng = rng_for(seed, "degrade")
    keep = rng.random(len(fixes)) < sparsity_factor
    return FixTable(fixes.device_id[keep], fixes.lat[keep], fixes.lon[keep], fixes.ts[keep])


def expected_sequence_mixture(employment_rate: float) -> dict[str, float]:
    """Weekday sequence distribution implied by the archetype weights."""
    out: dict[str, float] = {}
    for seq, w, _ in EMPLOYED_WEEKDAY:
        out[seq] = out.get(seq, 0.0) + employment_rate * w
    for seq, w, _ in UNEMPLOYED_WEEKDAY:
        out[seq] = out.get(seq, 0.0) + (1.0 - employment_rate) * w
    return out
