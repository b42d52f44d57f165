"""Flat key=value pipeline configuration with env-var and CLI overrides.

Precedence: defaults < config file < MAD4AG_* environment variables < --set
flags.  Unknown keys are rejected.  Defaults follow the study's published
parameter choices (stop radii and durations, clustering radii, score
thresholds, group minimum, distance class thresholds).
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import os
from dataclasses import dataclass, field

from .core import ConfigError
from .synthworld import SWEDEN_HOLIDAYS_2019

ENV_PREFIX = "MAD4AG_"


@dataclass
class PipelineConfig:
    # input paths; empty means "use the generated world's file in the out dir"
    fixes_path: str = ""
    survey_path: str = ""
    zones_path: str = ""
    buildings_path: str = ""
    comparison_plans_path: str = ""
    # synthetic world generation (gen-world stage)
    gen_world: bool = True
    world_n_zones: int = 9
    world_n_persons: int = 500
    world_employment_rate: float = 0.45
    world_gps_noise_sigma_m: float = 20.0
    world_interaction_rate: float = 2.0
    world_n_days: int = 60
    world_n_survey: int = 600
    # clock handling
    utc_offset_s: int = 0
    holidays: tuple[str, ...] = SWEDEN_HOLIDAYS_2019
    # stop detection
    stop_r1_m: float = 30.0
    stop_r2_m: float = 30.0
    stop_t_min_s: int = 900
    stop_t_max_s: int = 10800
    # activity clustering
    cluster_eps_km: float = 200.0
    cluster_min_pts: int = 2
    location_eps_m: float = 100.0
    location_min_pts: int = 1
    snap_max_m: float = 500.0
    # data filters
    max_visit_hours: float = 12.0
    min_active_days: int = 7
    min_unique_locations: int = 2
    study_margin_deg: float = 0.25
    # primary inference
    home_score_min: float = 10.0
    work_score_min: float = 30.0
    night_visit_min: int = 3
    home_share_threshold: float = 0.8
    # debiasing
    ipf_tol: float = 1e-6
    ipf_max_iter: int = 100
    trim_variant: str = "literal"
    # twin matching
    min_group: int = 50
    trip_threshold_km: float = 4.3
    commute_threshold_km: float = 7.9
    threshold_mode: str = "fixed"
    match_ipf_tol: float = 1e-9
    match_ipf_max_iter: int = 200
    # plan synthesis
    n_sim_days: int = 5
    secondary_eps_km: float = 0.01
    max_leg_speed_kmh: float = 150.0
    # evaluation
    top_k: int = 8
    # seeding
    seed: int = 42

    def validate(self) -> None:
        if self.trim_variant not in ("literal", "classic"):
            raise ConfigError(f"trim_variant must be literal or classic, not {self.trim_variant!r}")
        if self.threshold_mode not in ("fixed", "survey_median"):
            raise ConfigError(f"threshold_mode must be fixed or survey_median, not {self.threshold_mode!r}")
        for key in ("stop_r1_m", "stop_r2_m", "cluster_eps_km", "location_eps_m", "max_visit_hours"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive")
        if self.n_sim_days < 1:
            raise ConfigError("n_sim_days must be at least 1")
        for day in self.holidays:
            try:
                dt.date.fromisoformat(day)
            except ValueError as exc:
                raise ConfigError(f"bad holiday date {day!r}") from exc

    def holiday_dates(self) -> frozenset[dt.date]:
        return frozenset(dt.date.fromisoformat(d) for d in self.holidays)

    def as_items(self) -> list[tuple[str, str]]:
        out = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                out.append((f.name, ",".join(str(v) for v in value)))
            elif isinstance(value, bool):
                out.append((f.name, "true" if value else "false"))
            else:
                out.append((f.name, str(value)))
        return sorted(out)

    def digest(self) -> str:
        body = "\n".join(f"{k}={v}" for k, v in self.as_items())
        return hashlib.sha256(body.encode("utf-8")).hexdigest()


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}


def _coerce(key: str, raw: str) -> object:
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            lowered = raw.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind.startswith("tuple"):
            return tuple(s.strip() for s in raw.split(",") if s.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc


def parse_config_text(text: str, source: str = "<config>") -> dict[str, object]:
    """Parse key=value lines; blank lines and # comments are ignored."""
    out: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        out[key] = _coerce(key, raw)
    return out


def load_config(
    path: str | None = None,
    overrides: dict[str, str] | None = None,
    env: dict[str, str] | None = None,
) -> PipelineConfig:
    """Build the effective config from file, environment and explicit overrides."""
    values: dict[str, object] = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read(), source=path))
    env = dict(os.environ) if env is None else env
    for key in _FIELD_TYPES:
        env_key = ENV_PREFIX + key.upper()
        if env_key in env:
            values[key] = _coerce(key, env[env_key])
    for key, raw in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    cfg = PipelineConfig(**values)
    cfg.validate()
    return cfg


def write_config(cfg: PipelineConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in cfg.as_items():
            fh.write(f"{k}={v}\n")
