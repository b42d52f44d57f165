"""Readers for the four input datasets plus optional comparison plans.

All inputs are UTF-8 comma-separated files with a header row.  Loading is
strict: malformed rows are counted and the run aborts when more than 1% of a
file is bad, since silently dropping data would invalidate the debiasing
stage downstream.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .core import (
    DataError,
    EmptySurvey,
    GeoPoint,
    MissingFile,
    RawFix,
    SchemaMismatch,
    SECONDS_PER_DAY,
)

MAX_BAD_ROW_SHARE = 0.01

ACTIVITY_TYPES = ("Home", "Work", "Other")
_TYPE_ALIASES = {"h": "Home", "home": "Home", "w": "Work", "work": "Work", "o": "Other", "other": "Other"}
REGIONS = ("Svealand", "Götaland", "Norrland")
DENSITIES = ("high", "low")


@dataclass(frozen=True)
class SurveyActivity:
    kind: str  # Home / Work / Other
    start_s: int  # seconds of day
    end_s: int
    distance_km: float | None = None  # reported distance of the arriving trip


@dataclass(frozen=True)
class SurveyTrip:
    origin_idx: int
    dest_idx: int
    distance_km: float | None
    departure_s: int


@dataclass(frozen=True)
class SurveyDiary:
    """One participant's complete weekday activity-travel diary."""

    participant_id: str
    region: str
    urban_density: str
    employed: bool
    activities: tuple[SurveyActivity, ...]

    @property
    def trips(self) -> tuple[SurveyTrip, ...]:
        out = []
        for i in range(1, len(self.activities)):
            out.append(
                SurveyTrip(
                    origin_idx=i - 1,
                    dest_idx=i,
                    distance_km=self.activities[i].distance_km,
                    departure_s=self.activities[i - 1].end_s,
                )
            )
        return tuple(out)

    @property
    def sequence(self) -> str:
        return "-".join(a.kind[0] for a in self.activities)

    @property
    def has_other(self) -> bool:
        return any(a.kind == "Other" for a in self.activities)

    @property
    def has_work(self) -> bool:
        return any(a.kind == "Work" for a in self.activities)

    def avg_trip_km(self) -> float:
        dists = [t.distance_km for t in self.trips if t.distance_km is not None]
        return float(np.mean(dists)) if dists else 0.0

    def commute_km(self) -> float | None:
        dists = [
            t.distance_km
            for t in self.trips
            if t.distance_km is not None and self.activities[t.dest_idx].kind == "Work"
        ]
        return float(np.mean(dists)) if dists else None


@dataclass(frozen=True)
class Zone:
    zone_id: str
    region: str
    urban_density: str
    population: int
    employees: int
    polygon: tuple[tuple[float, float], ...]  # (lat, lon) ring, not closed

    def bbox(self) -> tuple[float, float, float, float]:
        lats = [p[0] for p in self.polygon]
        lons = [p[1] for p in self.polygon]
        return min(lats), min(lons), max(lats), max(lons)


@dataclass(frozen=True)
class Building:
    building_id: str
    lat: float
    lon: float
    kind: str  # residential / workplace / school / other


@dataclass
class LoadReport:
    path: str
    rows_read: int = 0
    rows_bad: int = 0
    rows_kept: int = 0
    notes: list[str] = field(default_factory=list)


class FixTable:
    """All fixes of a run, sorted by (device_id, ts) with duplicates dropped.

    Stored column-wise; per-device slices feed the stop detector without
    materializing per-row objects.
    """

    def __init__(self, device_id: np.ndarray, lat: np.ndarray, lon: np.ndarray, ts: np.ndarray):
        self.device_id = device_id
        self.lat = lat
        self.lon = lon
        self.ts = ts

    def __len__(self) -> int:
        return len(self.ts)

    def device_ids(self) -> list[str]:
        return sorted(set(self.device_id.tolist()))

    def per_device(self):
        """Yield (device_id, ts, lat, lon) arrays, one tuple per device."""
        if len(self.ts) == 0:
            return
        dev = self.device_id
        bounds = np.flatnonzero(dev[1:] != dev[:-1]) + 1
        starts = np.concatenate([[0], bounds])
        ends = np.concatenate([bounds, [len(dev)]])
        for s, e in zip(starts, ends):
            yield str(dev[s]), self.ts[s:e], self.lat[s:e], self.lon[s:e]

    def iter_fixes(self):
        for i in range(len(self.ts)):
            yield RawFix(str(self.device_id[i]), float(self.lat[i]), float(self.lon[i]), int(self.ts[i]))


def _require(path: str) -> None:
    if not os.path.exists(path):
        raise MissingFile(f"input file not found: {path}")


def _check_header(df: pd.DataFrame, required: list[str], path: str) -> None:
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise SchemaMismatch(f"{path}: missing columns {missing}; found {list(df.columns)}")


def _abort_if_lossy(report: LoadReport) -> None:
    if report.rows_read and report.rows_bad / report.rows_read > MAX_BAD_ROW_SHARE:
        raise DataError(
            f"{report.path}: {report.rows_bad}/{report.rows_read} malformed rows "
            f"exceeds the {MAX_BAD_ROW_SHARE:.0%} abort threshold"
        )


def load_fixes(path: str) -> tuple[FixTable, LoadReport]:
    """Load fixes.csv(device_id,lat,lon,ts) into a sorted, deduplicated table."""
    _require(path)
    report = LoadReport(path=path)
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    _check_header(df, ["device_id", "lat", "lon", "ts"], path)
    report.rows_read = len(df)
    if len(df) == 0:
        return FixTable(np.array([], dtype=object), np.array([]), np.array([]), np.array([], dtype=np.int64)), report

    lat = pd.to_numeric(df["lat"], errors="coerce")
    lon = pd.to_numeric(df["lon"], errors="coerce")
    ts = pd.to_numeric(df["ts"], errors="coerce")
    ok = (
        lat.notna()
        & lon.notna()
        & ts.notna()
        & (lat >= -90)
        & (lat <= 90)
        & (lon >= -180)
        & (lon <= 180)
        & (ts > 0)
        & (df["device_id"] != "")
    )
    report.rows_bad = int((~ok).sum())
    _abort_if_lossy(report)

    sub = pd.DataFrame(
        {
            "device_id": df.loc[ok, "device_id"],
            "lat": lat[ok].astype(float),
            "lon": lon[ok].astype(float),
            "ts": ts[ok].astype(np.int64),
        }
    )
    sub = sub.sort_values(["device_id", "ts"], kind="mergesort")
    sub = sub.drop_duplicates(subset=["device_id", "ts"], keep="first")
    report.rows_kept = len(sub)
    table = FixTable(
        sub["device_id"].to_numpy(),
        sub["lat"].to_numpy(),
        sub["lon"].to_numpy(),
        sub["ts"].to_numpy(),
    )
    return table, report


def _normalize_type(raw: str) -> str | None:
    return _TYPE_ALIASES.get(raw.strip().lower())


def load_survey(path: str) -> tuple[list[SurveyDiary], LoadReport]:
    """Load survey.csv into validated one-weekday diaries.

    Participants with overlapping or non-chronological activities, bad types,
    or incomplete day coverage are dropped.  An optional ``age`` column
    filters out minors; an optional ``distance_km`` column carries the
    reported distance of the trip arriving at each activity.
    """
    _require(path)
    report = LoadReport(path=path)
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    required = ["participant_id", "region", "urban_density", "employed", "seq", "activity_type", "start", "end"]
    _check_header(df, required, path)
    report.rows_read = len(df)
    has_age = "age" in df.columns
    has_dist = "distance_km" in df.columns

    diaries: list[SurveyDiary] = []
    dropped = 0
    for pid, grp in df.groupby("participant_id", sort=True):
        try:
            order = np.argsort(grp["seq"].astype(int).to_numpy(), kind="mergesort")
            kinds = grp["activity_type"].to_numpy()[order]
            starts = grp["start"].to_numpy()[order]
            ends = grp["end"].to_numpy()[order]
            dist_col = grp["distance_km"].to_numpy()[order] if has_dist else None
            region = grp["region"].iloc[0]
            density = grp["urban_density"].iloc[0]
            if region not in REGIONS or density not in DENSITIES:
                raise ValueError("bad region or density")
            employed = grp["employed"].iloc[0].strip().lower() in ("1", "true", "yes")
            if has_age:
                age = int(float(grp["age"].iloc[0]))
                if age < 18:
                    raise ValueError("minor")
            acts = []
            for i in range(len(order)):
                kind = _normalize_type(kinds[i])
                if kind is None:
                    raise ValueError("bad activity type")
                dist = None
                if dist_col is not None and dist_col[i].strip() != "":
                    dist = float(dist_col[i])
                acts.append(SurveyActivity(kind, int(float(starts[i])), int(float(ends[i])), dist))
            if not acts:
                raise ValueError("no activities")
            # snap boundaries within 15 min of midnight, then validate coverage
            first = acts[0]
            if 0 <= first.start_s <= 900:
                acts[0] = SurveyActivity(first.kind, 0, first.end_s, first.distance_km)
            if acts[0].start_s != 0:
                raise ValueError("day does not start at 00:00")
            last = acts[-1]
            if SECONDS_PER_DAY - 900 <= last.end_s <= SECONDS_PER_DAY:
                acts[-1] = SurveyActivity(last.kind, last.start_s, SECONDS_PER_DAY, last.distance_km)
            if acts[-1].end_s != SECONDS_PER_DAY:
                raise ValueError("day does not end at 24:00")
            prev_end = -1
            for a in acts:
                if a.start_s >= a.end_s or a.start_s < prev_end:
                    raise ValueError("activities overlap or are out of order")
                prev_end = a.end_s
            if acts[0].kind != "Home" or acts[-1].kind != "Home":
                raise ValueError("incomplete trip chain")
            diaries.append(SurveyDiary(str(pid), region, density, employed, tuple(acts)))
        except (ValueError, KeyError):
            dropped += 1
    report.rows_bad = dropped
    report.rows_kept = len(diaries)
    if not diaries:
        raise EmptySurvey(f"{path}: no valid weekday diaries; twin matching is impossible")
    return diaries, report


def parse_wkt_polygon(wkt: str) -> tuple[tuple[float, float], ...]:
    """Parse POLYGON((lon lat, ...)) into an open (lat, lon) ring."""
    body = wkt.strip()
    if not body.upper().startswith("POLYGON"):
        raise ValueError(f"not a WKT polygon: {wkt[:40]}")
    inner = body[body.index("((") + 2 : body.rindex("))")]
    ring = []
    for token in inner.split(","):
        xs = token.split()
        if len(xs) != 2:
            raise ValueError(f"bad WKT coordinate: {token!r}")
        lon, lat = float(xs[0]), float(xs[1])
        ring.append((lat, lon))
    if len(ring) >= 2 and ring[0] == ring[-1]:
        ring = ring[:-1]
    if len(ring) < 3:
        raise ValueError("polygon ring needs at least 3 distinct vertices")
    return tuple(ring)


def polygon_wkt(ring: tuple[tuple[float, float], ...]) -> str:
    pts = list(ring) + [ring[0]]
    return "POLYGON((" + ", ".join(f"{lon} {lat}" for lat, lon in pts) + "))"


def load_zones(path: str) -> tuple[list[Zone], LoadReport]:
    _require(path)
    report = LoadReport(path=path)
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    _check_header(df, ["zone_id", "region", "urban_density", "population", "employees", "wkt_polygon"], path)
    report.rows_read = len(df)
    zones = []
    for _, r in df.iterrows():
        try:
            pop = int(float(r["population"]))
            emp = int(float(r["employees"]))
            if not (700 <= pop <= 2700):
                raise ValueError("population outside census bounds")
            if emp < 0 or emp > pop:
                raise ValueError("employees exceed population")
            if r["region"] not in REGIONS or r["urban_density"] not in DENSITIES:
                raise ValueError("bad region or density")
            zones.append(
                Zone(str(r["zone_id"]), r["region"], r["urban_density"], pop, emp, parse_wkt_polygon(r["wkt_polygon"]))
            )
        except ValueError:
            report.rows_bad += 1
    _abort_if_lossy(report)
    report.rows_kept = len(zones)
    zones.sort(key=lambda z: z.zone_id)
    return zones, report


def load_buildings(path: str) -> tuple[list[Building], LoadReport]:
    _require(path)
    report = LoadReport(path=path)
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    _check_header(df, ["building_id", "lat", "lon", "kind"], path)
    report.rows_read = len(df)
    buildings = []
    seen = set()
    for _, r in df.iterrows():
        try:
            lat, lon = float(r["lat"]), float(r["lon"])
            if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                raise ValueError("bad coordinates")
            bid = str(r["building_id"])
            if bid in seen:
                raise ValueError("duplicate building id")
            kind = r["kind"]
            if kind not in ("residential", "workplace", "school", "other"):
                raise ValueError("bad building kind")
            seen.add(bid)
            buildings.append(Building(bid, lat, lon, kind))
        except ValueError:
            report.rows_bad += 1
    _abort_if_lossy(report)
    report.rows_kept = len(buildings)
    return buildings, report


def point_in_polygon(lat: float, lon: float, ring: tuple[tuple[float, float], ...]) -> bool:
    """Even-odd test; boundary points count as inside (needed by the tie rule)."""
    n = len(ring)
    eps = 1e-12
    inside = False
    for i in range(n):
        y1, x1 = ring[i]
        y2, x2 = ring[(i + 1) % n]
        # on-segment check
        cross = (x2 - x1) * (lat - y1) - (y2 - y1) * (lon - x1)
        if abs(cross) < eps and min(x1, x2) - eps <= lon <= max(x1, x2) + eps and min(y1, y2) - eps <= lat <= max(y1, y2) + eps:
            return True
        if (y1 > lat) != (y2 > lat):
            x_int = x1 + (lat - y1) * (x2 - x1) / (y2 - y1)
            if lon < x_int:
                inside = not inside
    return inside


class ZoneIndex:
    """Point-to-zone lookup with a deterministic tie rule on shared boundaries."""

    def __init__(self, zones: list[Zone]):
        self.zones = sorted(zones, key=lambda z: z.zone_id)
        self._bboxes = [z.bbox() for z in self.zones]

    def zone_of(self, point: GeoPoint) -> str | None:
        """Containing zone id, or None outside coverage.

        A point on a shared edge belongs to the zone with the
        lexicographically smallest id.
        """
        for z, (la0, lo0, la1, lo1) in zip(self.zones, self._bboxes):
            if not (la0 - 1e-12 <= point.lat <= la1 + 1e-12 and lo0 - 1e-12 <= point.lon <= lo1 + 1e-12):
                continue
            if point_in_polygon(point.lat, point.lon, z.polygon):
                return z.zone_id
        return None

    def bounds(self, margin_deg: float = 0.0) -> tuple[float, float, float, float]:
        la0 = min(b[0] for b in self._bboxes) - margin_deg
        lo0 = min(b[1] for b in self._bboxes) - margin_deg
        la1 = max(b[2] for b in self._bboxes) + margin_deg
        lo1 = max(b[3] for b in self._bboxes) + margin_deg
        return la0, lo0, la1, lo1


def zone_of(point: GeoPoint, zones: list[Zone]) -> str | None:
    return ZoneIndex(zones).zone_of(point)


class BuildingIndex:
    """Grid-bucketed nearest-building lookup for snap queries."""

    def __init__(self, buildings: list[Building], cell_m: float = 500.0):
        self.buildings = buildings
        self.cell_m = cell_m
        self._lat = np.array([b.lat for b in buildings])
        self._lon = np.array([b.lon for b in buildings])
        ref_lat = float(np.mean(self._lat)) if buildings else 0.0
        self._dlat = cell_m / 111_320.0
        self._dlon = cell_m / max(1e-9, 111_320.0 * math.cos(math.radians(ref_lat)))
        self._grid: dict[tuple[int, int], list[int]] = {}
        for i, b in enumerate(buildings):
            self._grid.setdefault(self._key(b.lat, b.lon), []).append(i)

    def _key(self, lat: float, lon: float) -> tuple[int, int]:
        return (int(math.floor(lat / self._dlat)), int(math.floor(lon / self._dlon)))

    def nearest(self, lat: float, lon: float, max_m: float) -> Building | None:
        """Nearest building within max_m, or None; ties go to the smaller index."""
        if not self.buildings:
            return None
        reach = int(math.ceil(max_m / self.cell_m)) + 1
        kr, kc = self._key(lat, lon)
        cand: list[int] = []
        for dr in range(-reach, reach + 1):
            for dc in range(-reach, reach + 1):
                cand.extend(self._grid.get((kr + dr, kc + dc), ()))
        if not cand:
            return None
        cand = sorted(cand)
        idx = np.array(cand)
        from .core import haversine_km_vec

        d_m = haversine_km_vec(self._lat[idx], self._lon[idx], lat, lon) * 1000.0
        best = int(np.argmin(d_m))
        if d_m[best] <= max_m:
            return self.buildings[cand[best]]
        return None


def load_comparison_plans(path: str) -> pd.DataFrame:
    """Load an external plan set sharing the plans.csv schema."""
    _require(path)
    df = pd.read_csv(path, dtype={"device_id": str, "activity_type": str})
    _check_header(
        df,
        ["device_id", "sim_day", "seq_idx", "activity_type", "start", "end", "location_id", "lat", "lon"],
        path,
    )
    df["activity_type"] = df["activity_type"].map(lambda s: _normalize_type(str(s)) or s)
    bad = ~df["activity_type"].isin(ACTIVITY_TYPES)
    if bad.any():
        raise SchemaMismatch(f"{path}: unknown activity types {sorted(df.loc[bad, 'activity_type'].unique())}")
    return df
