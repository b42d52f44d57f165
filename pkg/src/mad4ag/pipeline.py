"""Staged batch pipeline with restartable CSV dumps and a run manifest.

Each stage reads its upstream dumps from the output directory and writes its
own, so any stage can be re-run in isolation.  The manifest records the
effective config hash, the seed, and per-stage input/output digests and row
counts; identical config and seed give byte-identical artifacts regardless of
worker count.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import baseline as baseline_mod
from . import evaluation as eval_mod
from .clustering import (
    ActivityLocation,
    DeviceActivityData,
    FilterParams,
    apply_filters,
    build_activity_locations,
)
from .config import PipelineConfig
from .core import MissingFile, PrerequisiteError, rng_for
from .debias import (
    PersonProfile,
    PersonWeight,
    build_profiles,
    initial_weights,
    ipf_employment,
    trim_weights,
)
from .ingestion import (
    BuildingIndex,
    SurveyDiary,
    ZoneIndex,
    load_buildings,
    load_comparison_plans,
    load_fixes,
    load_survey,
    load_zones,
)
from .plans import DailyPlan, PlanEntry, assemble_plan, plan_feasible, sample_secondary, secondary_probabilities
from .primary import PrimaryAssignment, PrimaryParams, derive_weights, infer_primaries, nighttime_window
from .stops import StopParams, detect_stops_for_device
from .synthworld import WorldSpec, generate_world
from .twins import (
    MatchThresholds,
    TwinAssignment,
    assign_twins,
    categorize,
    group_marginals,
    matching_probabilities,
    survey_person,
)

log = logging.getLogger("mad4ag")

STAGE_ORDER = (
    "gen-world",
    "detect-stops",
    "cluster",
    "infer-primary",
    "debias",
    "match",
    "synthesize",
    "baseline",
    "evaluate",
)

_WORKER_STATE: dict = {}


def _init_worker(state: dict) -> None:
    _WORKER_STATE.update(state)


def _stops_task(item):
    device_id, ts, lat, lon = item
    p: StopParams = _WORKER_STATE["stop_params"]
    return device_id, detect_stops_for_device(device_id, ts, lat, lon, p)


def _cluster_task(item):
    device_id, stops = item
    cfg = _WORKER_STATE["cluster_cfg"]
    index: BuildingIndex = _WORKER_STATE["building_index"]
    locs = build_activity_locations(
        device_id,
        stops,
        index,
        cluster_eps_km=cfg["cluster_eps_km"],
        cluster_min_pts=cfg["cluster_min_pts"],
        location_eps_m=cfg["location_eps_m"],
        location_min_pts=cfg["location_min_pts"],
        snap_max_m=cfg["snap_max_m"],
    )
    return device_id, locs


def _parallel_map(task, items, workers: int, state: dict):
    """Order-preserving map over items, optionally in a process pool."""
    if workers <= 1:
        _init_worker(state)
        return [task(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(state,)) as pool:
        chunk = max(1, len(items) // (workers * 8) or 1)
        return list(pool.map(task, items, chunksize=chunk))


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class Paths:
    out_dir: str

    def artifact(self, name: str) -> str:
        return os.path.join(self.out_dir, name)


class Pipeline:
    def __init__(self, cfg: PipelineConfig, out_dir: str, workers: int = 1):
        cfg.validate()
        self.cfg = cfg
        self.out_dir = out_dir
        self.workers = max(1, workers)
        self.paths = Paths(out_dir)
        os.makedirs(out_dir, exist_ok=True)

    # ------------------------------------------------------------- paths
    def input_path(self, name: str) -> str:
        configured = getattr(self.cfg, f"{name}_path")
        if configured:
            if not os.path.exists(configured):
                raise MissingFile(f"configured {name} input not found: {configured}")
            return configured
        return self._require(self.paths.artifact(f"{name}.csv"), "gen-world")

    def _require(self, path: str, producer: str) -> str:
        if not os.path.exists(path):
            raise PrerequisiteError(f"missing {path}; run the '{producer}' stage first")
        return path

    # ---------------------------------------------------------- manifest
    def _manifest_path(self) -> str:
        return self.paths.artifact("manifest.json")

    def _load_manifest(self) -> dict:
        if os.path.exists(self._manifest_path()):
            with open(self._manifest_path(), encoding="utf-8") as fh:
                return json.load(fh)
        return {"config_hash": self.cfg.digest(), "seed": self.cfg.seed, "stages": {}}

    def _record_stage(self, stage: str, inputs: list[str], outputs: list[str], rows: dict[str, int]) -> None:
        manifest = self._load_manifest()
        manifest["config_hash"] = self.cfg.digest()
        manifest["seed"] = self.cfg.seed
        manifest["stages"][stage] = {
            "inputs": {os.path.basename(p): _sha256(p) for p in sorted(inputs)},
            "outputs": {os.path.basename(p): _sha256(p) for p in sorted(outputs)},
            "rows": rows,
        }
        with open(self._manifest_path(), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    # ------------------------------------------------------------ stages
    def run(self, stage: str) -> None:
        t0 = time.monotonic()
        runner = {
            "gen-world": self.stage_gen_world,
            "detect-stops": self.stage_detect_stops,
            "cluster": self.stage_cluster,
            "infer-primary": self.stage_infer_primary,
            "debias": self.stage_debias,
            "match": self.stage_match,
            "synthesize": self.stage_synthesize,
            "baseline": self.stage_baseline,
            "evaluate": self.stage_evaluate,
        }[stage]
        runner()
        log.info("stage %s finished in %.1fs", stage, time.monotonic() - t0)

    def run_all(self) -> None:
        stages = list(STAGE_ORDER)
        if not self.cfg.gen_world:
            stages.remove("gen-world")
        for stage in stages:
            self.run(stage)

    def stage_gen_world(self) -> None:
        spec = WorldSpec(
            n_zones=self.cfg.world_n_zones,
            n_persons=self.cfg.world_n_persons,
            employment_rate=self.cfg.world_employment_rate,
            gps_noise_sigma_m=self.cfg.world_gps_noise_sigma_m,
            interaction_rate=self.cfg.world_interaction_rate,
            n_days=self.cfg.world_n_days,
            seed=self.cfg.seed,
            n_survey=self.cfg.world_n_survey,
        )
        paths = generate_world(spec, self.out_dir)
        rows = {name: int(pd.read_csv(p, usecols=[0]).shape[0]) for name, p in paths.items()}
        self._record_stage("gen-world", [], sorted(paths.values()), rows)

    def stage_detect_stops(self) -> None:
        fixes_path = self.input_path("fixes")
        table, report = load_fixes(fixes_path)
        params = StopParams(self.cfg.stop_r1_m, self.cfg.stop_r2_m, self.cfg.stop_t_min_s, self.cfg.stop_t_max_s)
        items = list(table.per_device())
        results = _parallel_map(_stops_task, items, self.workers, {"stop_params": params})
        rows = []
        for device_id, stops in results:
            for s in stops:
                rows.append((s.device_id, s.label, s.lat, s.lon, s.start, s.end))
        df = pd.DataFrame(rows, columns=["device_id", "label", "lat", "lon", "start", "end"])
        out = self.paths.artifact("stops.csv")
        df.to_csv(out, index=False)
        self._record_stage(
            "detect-stops",
            [fixes_path],
            [out],
            {"fixes": report.rows_kept, "malformed": report.rows_bad, "stops": len(df)},
        )

    def _load_stops_by_device(self) -> dict[str, list]:
        from .core import Stop

        path = self._require(self.paths.artifact("stops.csv"), "detect-stops")
        df = pd.read_csv(path, dtype={"device_id": str})
        by_device: dict[str, list] = {}
        for r in df.itertuples(index=False):
            by_device.setdefault(r.device_id, []).append(
                Stop(r.device_id, float(r.lat), float(r.lon), int(r.start), int(r.end), int(r.label))
            )
        return by_device

    def stage_cluster(self) -> None:
        stops_path = self.paths.artifact("stops.csv")
        self._require(stops_path, "detect-stops")
        buildings_path = self.input_path("buildings")
        zones_path = self.input_path("zones")
        buildings, _ = load_buildings(buildings_path)
        zones, _ = load_zones(zones_path)
        index = BuildingIndex(buildings)
        by_device = self._load_stops_by_device()
        items = sorted(by_device.items())
        state = {
            "building_index": index,
            "cluster_cfg": {
                "cluster_eps_km": self.cfg.cluster_eps_km,
                "cluster_min_pts": self.cfg.cluster_min_pts,
                "location_eps_m": self.cfg.location_eps_m,
                "location_min_pts": self.cfg.location_min_pts,
                "snap_max_m": self.cfg.snap_max_m,
            },
        }
        results = _parallel_map(_cluster_task, items, self.workers, state)
        devices = [DeviceActivityData(device_id, tuple(locs)) for device_id, locs in results if locs]

        la0, lo0, la1, lo1 = ZoneIndex(zones).bounds(self.cfg.study_margin_deg)
        study_polygon = ((la0, lo0), (la0, lo1), (la1, lo1), (la1, lo0))
        fparams = FilterParams(
            max_visit_hours=self.cfg.max_visit_hours,
            min_active_days=self.cfg.min_active_days,
            min_unique_locations=self.cfg.min_unique_locations,
            holidays=self.cfg.holiday_dates(),
            study_polygon=study_polygon,
            utc_offset_s=self.cfg.utc_offset_s,
        )
        kept, report = apply_filters(devices, fparams)

        loc_rows, visit_rows = [], []
        for dev in kept:
            for loc in dev.locations:
                loc_rows.append(
                    (
                        dev.device_id,
                        loc.cluster_id,
                        loc.location_id,
                        loc.building_id or "",
                        loc.lat,
                        loc.lon,
                        loc.n_visits,
                        round(loc.total_hours, 6),
                    )
                )
                for s, e in loc.visits:
                    visit_rows.append((dev.device_id, loc.location_id, s, e))
        loc_df = pd.DataFrame(
            loc_rows,
            columns=["device_id", "cluster_id", "location_id", "building_id", "lat", "lon", "n_visits", "total_hours"],
        )
        visits_df = pd.DataFrame(visit_rows, columns=["device_id", "location_id", "start", "end"])
        out_locs = self.paths.artifact("activity_locations.csv")
        out_visits = self.paths.artifact("visits.csv")
        out_report = self.paths.artifact("filter_report.json")
        loc_df.to_csv(out_locs, index=False)
        visits_df.to_csv(out_visits, index=False)
        with open(out_report, "w", encoding="utf-8") as fh:
            json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        self._record_stage(
            "cluster",
            [stops_path, buildings_path, zones_path],
            [out_locs, out_visits, out_report],
            {"devices": len(kept), "locations": len(loc_df), "visits": len(visits_df)},
        )

    def _load_device_data(self) -> list[DeviceActivityData]:
        locs_path = self._require(self.paths.artifact("activity_locations.csv"), "cluster")
        visits_path = self._require(self.paths.artifact("visits.csv"), "cluster")
        locs = pd.read_csv(locs_path, dtype={"device_id": str, "building_id": str}, keep_default_na=False)
        visits = pd.read_csv(visits_path, dtype={"device_id": str})
        visit_map: dict[tuple[str, int], list[tuple[int, int]]] = {}
        for r in visits.itertuples(index=False):
            visit_map.setdefault((r.device_id, int(r.location_id)), []).append((int(r.start), int(r.end)))
        devices: dict[str, list[ActivityLocation]] = {}
        for r in locs.itertuples(index=False):
            key = (r.device_id, int(r.location_id))
            devices.setdefault(r.device_id, []).append(
                ActivityLocation(
                    device_id=r.device_id,
                    cluster_id=int(r.cluster_id),
                    location_id=int(r.location_id),
                    building_id=r.building_id or None,
                    lat=float(r.lat),
                    lon=float(r.lon),
                    visits=tuple(sorted(visit_map.get(key, []))),
                )
            )
        return [
            DeviceActivityData(device_id, tuple(sorted(locs_, key=lambda l: l.location_id)))
            for device_id, locs_ in sorted(devices.items())
        ]

    def _load_survey(self) -> list[SurveyDiary]:
        survey_path = self.input_path("survey")
        diaries, _ = load_survey(survey_path)
        return diaries

    def stage_infer_primary(self) -> None:
        devices = self._load_device_data()
        diaries = self._load_survey()
        params = PrimaryParams(
            home_score_min=self.cfg.home_score_min,
            work_score_min=self.cfg.work_score_min,
            night_visit_min=self.cfg.night_visit_min,
            home_share_threshold=self.cfg.home_share_threshold,
            utc_offset_s=self.cfg.utc_offset_s,
        )
        night = nighttime_window(diaries, params.home_share_threshold)
        w_home = derive_weights(diaries, "home", night)
        w_work = derive_weights(diaries, "work")
        rows = []
        for dev in devices:
            pa = infer_primaries(dev, w_home, w_work, night, params)
            if pa is None:
                continue
            rows.append(
                (
                    pa.device_id,
                    pa.home_location_id,
                    round(pa.home_score, 6),
                    "" if pa.work_location_id is None else pa.work_location_id,
                    "" if pa.work_score is None else round(pa.work_score, 6),
                )
            )
        df = pd.DataFrame(rows, columns=["device_id", "home_location_id", "home_score", "work_location_id", "work_score"])
        out = self.paths.artifact("primary.csv")
        df.to_csv(out, index=False)
        self._record_stage(
            "infer-primary",
            [self.paths.artifact("activity_locations.csv"), self.paths.artifact("visits.csv"), self.input_path("survey")],
            [out],
            {"devices_with_home": len(df), "night_start_h": night.start_s // 3600, "night_hours": len(night.hours())},
        )

    def _load_primary(self) -> dict[str, PrimaryAssignment]:
        path = self._require(self.paths.artifact("primary.csv"), "infer-primary")
        df = pd.read_csv(path, dtype={"device_id": str}, keep_default_na=False)
        out = {}
        for r in df.itertuples(index=False):
            work_id = None if r.work_location_id == "" else int(float(r.work_location_id))
            work_score = None if r.work_score == "" else float(r.work_score)
            out[r.device_id] = PrimaryAssignment(
                r.device_id, int(r.home_location_id), float(r.home_score), work_id, work_score
            )
        return out

    def _profiles(self) -> list[PersonProfile]:
        devices = self._load_device_data()
        assignments = self._load_primary()
        zones, _ = load_zones(self.input_path("zones"))
        profiles, outside = build_profiles(devices, assignments, zones)
        if outside:
            log.info("%d devices live outside zone coverage and were excluded", len(outside))
        return profiles

    def stage_debias(self) -> None:
        zones, _ = load_zones(self.input_path("zones"))
        profiles = self._profiles()
        weights, empty_zones = initial_weights(profiles, zones)
        weights, degenerate = ipf_employment(weights, zones, self.cfg.ipf_tol, self.cfg.ipf_max_iter)
        weights, w0 = trim_weights(weights, self.cfg.trim_variant)
        df = pd.DataFrame(
            [(w.device_id, w.zone_id, int(w.employed), repr(w.w)) for w in sorted(weights, key=lambda x: x.device_id)],
            columns=["device_id", "zone_id", "employed", "weight"],
        )
        out = self.paths.artifact("weights.csv")
        df.to_csv(out, index=False)
        self._record_stage(
            "debias",
            [self.paths.artifact("primary.csv"), self.input_path("zones")],
            [out],
            {
                "persons": len(df),
                "zones_without_sample": len(empty_zones),
                "degenerate_zones": len(degenerate),
                "trim_threshold_e6": int(round(w0 * 1e6)),
            },
        )

    def _load_weights(self) -> list[PersonWeight]:
        path = self._require(self.paths.artifact("weights.csv"), "debias")
        df = pd.read_csv(path, dtype={"device_id": str, "zone_id": str})
        return [
            PersonWeight(r.device_id, r.zone_id, bool(int(r.employed)), float(r.weight))
            for r in df.itertuples(index=False)
        ]

    def stage_match(self) -> None:
        self._require(self.paths.artifact("weights.csv"), "debias")
        diaries = self._load_survey()
        profiles = self._profiles()
        thresholds = MatchThresholds(self.cfg.trip_threshold_km, self.cfg.commute_threshold_km)
        result = categorize(
            profiles,
            diaries,
            min_group=self.cfg.min_group,
            thresholds=thresholds,
            threshold_mode=self.cfg.threshold_mode,
        )
        profile_by_id = {p.device_id: p for p in profiles}
        by_group: dict[tuple, list[str]] = {}
        for device_id, key in sorted(result.device_group.items()):
            by_group.setdefault(key, []).append(device_id)

        rows = []
        for day in range(self.cfg.n_sim_days):
            for key in sorted(by_group, key=str):
                group = result.groups[key]
                d_marg, s_marg = group_marginals(group, result.thresholds)
                table = matching_probabilities(
                    group,
                    d_marg,
                    s_marg,
                    result.thresholds,
                    tol=self.cfg.match_ipf_tol,
                    max_iter=self.cfg.match_ipf_max_iter,
                )
                group_devices = [profile_by_id[d] for d in by_group[key]]
                rng = rng_for(self.cfg.seed, "twins", day, group.name)
                for ta in assign_twins(group_devices, group, table, rng):
                    rows.append((ta.device_id, ta.participant_id, group.name, day))
        df = pd.DataFrame(rows, columns=["device_id", "participant_id", "category", "sim_day"])
        df = df.sort_values(["sim_day", "device_id"], kind="mergesort")
        out = self.paths.artifact("twins.csv")
        df.to_csv(out, index=False)
        self._record_stage(
            "match",
            [
                self.paths.artifact("weights.csv"),
                self.paths.artifact("primary.csv"),
                self.input_path("survey"),
            ],
            [out],
            {"assignments": len(df), "groups": len(by_group), "sim_days": self.cfg.n_sim_days},
        )

    def stage_synthesize(self) -> None:
        twins_path = self._require(self.paths.artifact("twins.csv"), "match")
        twins = pd.read_csv(twins_path, dtype={"device_id": str, "participant_id": str})
        diaries = {d.participant_id: d for d in self._load_survey()}
        devices = {d.device_id: d for d in self._load_device_data()}
        profiles = {p.device_id: p for p in self._profiles()}

        rows = []
        for r in twins.itertuples(index=False):
            device = devices.get(r.device_id)
            profile = profiles.get(r.device_id)
            diary = diaries.get(r.participant_id)
            if device is None or profile is None or diary is None:
                continue
            n_other = sum(1 for a in diary.activities if a.kind == "Other")
            sampled: list[int] = []
            if n_other:
                choices = secondary_probabilities(
                    device, profile.home_location_id, profile.work_location_id, self.cfg.secondary_eps_km
                )
                rng = rng_for(self.cfg.seed, "secondary", int(r.sim_day), r.device_id)
                sampled = sample_secondary(choices, n_other, rng)
            plan = assemble_plan(device, profile, diary, sampled, int(r.sim_day))
            feasible = int(plan_feasible(plan, self.cfg.max_leg_speed_kmh))
            for seq_idx, e in enumerate(plan.entries):
                rows.append(
                    (
                        plan.device_id,
                        plan.sim_day,
                        seq_idx,
                        e.activity_type,
                        e.start_s,
                        e.end_s,
                        e.location_id,
                        e.lat,
                        e.lon,
                        feasible,
                    )
                )
        df = pd.DataFrame(
            rows,
            columns=["device_id", "sim_day", "seq_idx", "activity_type", "start", "end", "location_id", "lat", "lon", "feasible"],
        )
        df = df.sort_values(["device_id", "sim_day", "seq_idx"], kind="mergesort")
        out = self.paths.artifact("plans.csv")
        df.to_csv(out, index=False)
        self._record_stage(
            "synthesize",
            [twins_path, self.paths.artifact("primary.csv"), self.input_path("survey")],
            [out],
            {"plan_rows": len(df), "plans": int(twins.shape[0])},
        )

    def stage_baseline(self) -> None:
        devices = self._load_device_data()
        rows = []
        for dev in devices:
            plan = baseline_mod.dummy_schedule(dev, self.cfg.utc_offset_s)
            for seq_idx, e in enumerate(plan.entries):
                rows.append(
                    (dev.device_id, 0, seq_idx, e.activity_type, e.start_s, e.end_s, e.location_id, e.lat, e.lon, 1)
                )
        df = pd.DataFrame(
            rows,
            columns=["device_id", "sim_day", "seq_idx", "activity_type", "start", "end", "location_id", "lat", "lon", "feasible"],
        )
        out = self.paths.artifact("dummy_plans.csv")
        df.to_csv(out, index=False)
        self._record_stage(
            "baseline",
            [self.paths.artifact("activity_locations.csv"), self.paths.artifact("visits.csv")],
            [out],
            {"plan_rows": len(df), "devices": len(devices)},
        )

    @staticmethod
    def load_plans(path: str) -> list[DailyPlan]:
        return Pipeline.plans_from_df(pd.read_csv(path, dtype={"device_id": str, "activity_type": str}))

    @staticmethod
    def plans_from_df(df: pd.DataFrame) -> list[DailyPlan]:
        plans: dict[tuple[str, int], list] = {}
        for r in df.itertuples(index=False):
            plans.setdefault((r.device_id, int(r.sim_day)), []).append(r)
        out = []
        for (device_id, sim_day), entries in sorted(plans.items()):
            entries.sort(key=lambda r: int(r.seq_idx))
            out.append(
                DailyPlan(
                    device_id,
                    sim_day,
                    tuple(
                        PlanEntry(r.activity_type, int(r.start), int(r.end), int(r.location_id), float(r.lat), float(r.lon))
                        for r in entries
                    ),
                )
            )
        return out

    def stage_evaluate(self) -> None:
        plans_path = self._require(self.paths.artifact("plans.csv"), "synthesize")
        dummy_path = self._require(self.paths.artifact("dummy_plans.csv"), "baseline")
        weights = {w.device_id: w.w for w in self._load_weights()}
        diaries = self._load_survey()
        zones, _ = load_zones(self.input_path("zones"))
        primary = self._load_primary()
        plans = self.load_plans(plans_path)
        dummy = self.load_plans(dummy_path)

        models: dict[str, dict] = {}
        models["generative"] = {
            "sequences": eval_mod.plan_sequences(plans),
            "weights": [weights.get(p.device_id, 0.0) for p in plans],
            "plan_weights": weights,
            "plans": plans,
        }
        models["dummy"] = {
            "sequences": eval_mod.plan_sequences(dummy),
            "weights": None,
            "plan_weights": None,
            "plans": dummy,
        }
        models["survey"] = {
            "sequences": [d.sequence for d in diaries],
            "weights": None,
        }
        if self.cfg.comparison_plans_path:
            comp_df = load_comparison_plans(self.cfg.comparison_plans_path)
            comp = self.plans_from_df(comp_df)
            models["comparison"] = {
                "sequences": eval_mod.plan_sequences(comp),
                "weights": None,
                "plan_weights": None,
                "plans": comp,
            }

        shares = {
            name: eval_mod.sequence_shares(m["sequences"], m["weights"]) for name, m in models.items()
        }
        js_matrix = {}
        names = sorted(models)
        for i, a in enumerate(names):
            for b in names[i + 1 :]:
                js_matrix[f"{a}|{b}"] = eval_mod.js_distance(shares[a], shares[b])

        participation = {}
        for name, m in models.items():
            if name == "survey":
                curves = _survey_participation(diaries)
            else:
                curves = eval_mod.hourly_participation(m["plans"], m.get("plan_weights"))
            participation[name] = {t: [round(float(v), 9) for v in curve] for t, curve in curves.items()}

        trip_stats = {}
        for name, m in models.items():
            if name == "survey":
                trip_stats[name] = _survey_trip_stats(diaries)
            else:
                trip_stats[name] = eval_mod.trip_stats(m["plans"], m.get("plan_weights"))

        zone_counts: dict[str, int] = {}
        zone_index = ZoneIndex(zones)
        devices = {d.device_id: d for d in self._load_device_data()}
        from .core import GeoPoint

        for device_id, pa in primary.items():
            dev = devices.get(device_id)
            if dev is None:
                continue
            home = dev.location_by_id(pa.home_location_id)
            z = zone_index.zone_of(GeoPoint(home.lat, home.lon))
            if z is not None:
                zone_counts[z] = zone_counts.get(z, 0) + 1
        counts = [zone_counts.get(z.zone_id, 0) for z in zones]
        pops = [z.population for z in zones]
        try:
            rho, pval = eval_mod.spearman(counts, pops)
            spearman_out = {"rho": rho, "p": pval}
        except Exception as exc:  # degenerate ranks on tiny fixtures
            spearman_out = {"error": str(exc)}

        report = {
            "sequence_shares": {
                name: shares[name].top(self.cfg.top_k).as_dict() for name in names
            },
            "js_matrix": {k: round(v, 9) for k, v in js_matrix.items()},
            "hourly_participation": participation,
            "trip_stats": trip_stats,
            "spearman_home_population": spearman_out,
        }
        out_json = self.paths.artifact("report.json")
        with open(out_json, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")

        flat_rows = []
        for name in names:
            for seq, share in sorted(shares[name].top(self.cfg.top_k).as_dict().items()):
                flat_rows.append(("sequence_share", name, seq, round(share, 9)))
        for key, val in sorted(js_matrix.items()):
            flat_rows.append(("js_distance", key, "", round(val, 9)))
        for name, stats in sorted(trip_stats.items()):
            for trip_type, vals in sorted(stats.items()):
                for stat, val in sorted(vals.items()):
                    flat_rows.append((f"trip_{stat}", name, trip_type, round(val, 9) if val == val else ""))
        if "rho" in spearman_out:
            flat_rows.append(("spearman_rho", "generative", "", round(spearman_out["rho"], 9)))
            flat_rows.append(("spearman_p", "generative", "", round(spearman_out["p"], 9)))
        flat = pd.DataFrame(flat_rows, columns=["metric", "model", "key", "value"])
        out_csv = self.paths.artifact("report.csv")
        flat.to_csv(out_csv, index=False)

        inputs = [plans_path, dummy_path, self.input_path("survey"), self.paths.artifact("weights.csv")]
        self._record_stage("evaluate", inputs, [out_json, out_csv], {"models": len(names)})


def _survey_participation(diaries: list[SurveyDiary]) -> dict[str, np.ndarray]:
    curves = {t: np.zeros(24) for t in eval_mod.ACTIVITY_TYPES}
    total = np.zeros(24)
    from .core import hour_overlaps

    for d in diaries:
        for a in d.activities:
            ov = hour_overlaps(a.start_s, a.end_s)
            curves[a.kind] += ov
            total += ov
    with np.errstate(invalid="ignore", divide="ignore"):
        return {t: np.where(total > 0, c / total, 0.0) for t, c in curves.items()}


def _survey_trip_stats(diaries: list[SurveyDiary]) -> dict[str, dict[str, float]]:
    import math

    dists, commute = [], []
    for d in diaries:
        for t in d.trips:
            if t.distance_km is None:
                continue
            dists.append(t.distance_km)
            kinds = {d.activities[t.origin_idx].kind, d.activities[t.dest_idx].kind}
            if kinds == {"Home", "Work"}:
                commute.append(t.distance_km)
    out = {}
    for name, vals in (("overall", dists), ("commuting", commute)):
        if vals:
            arr = np.array(vals)
            ones = np.ones(len(arr))
            out[name] = {
                "mean": float(arr.mean()),
                "median": eval_mod.weighted_quantile(arr, ones, 0.5),
                "p90": eval_mod.weighted_quantile(arr, ones, 0.9),
            }
        else:
            out[name] = {"mean": math.nan, "median": math.nan, "p90": math.nan}
    return out
