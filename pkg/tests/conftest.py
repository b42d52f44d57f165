import time
from types import SimpleNamespace

import pytest

from mad4ag.config import PipelineConfig
from mad4ag.ingestion import SurveyActivity, SurveyDiary, load_survey
from mad4ag.pipeline import STAGE_ORDER, Pipeline
from mad4ag.synthworld import WorldSpec, generate_world


def diary(pid, acts, region="Svealand", density="high", employed=False):
    """Build a SurveyDiary from (kind, start_s, end_s[, dist]) tuples."""
    activities = []
    for a in acts:
        dist = a[3] if len(a) > 3 else None
        activities.append(SurveyActivity(a[0], a[1], a[2], dist))
    return SurveyDiary(pid, region, density, employed, tuple(activities))


@pytest.fixture(scope="session")
def survey_fixture(tmp_path_factory):
    """A generated survey large enough to derive stable hourly weights."""
    out = str(tmp_path_factory.mktemp("survey_fixture"))
    spec = WorldSpec(n_persons=1, n_survey=600, n_days=1, seed=42)
    paths = generate_world(spec, out)
    diaries, _ = load_survey(paths["survey"])
    return diaries


@pytest.fixture(scope="session")
def small_world(tmp_path_factory):
    """An 80-person world run end to end once; cheap enough for module tests."""
    out = str(tmp_path_factory.mktemp("small_world"))
    cfg = PipelineConfig(world_n_persons=80, world_n_survey=250, world_n_days=24, n_sim_days=3)
    pipe = Pipeline(cfg, out, workers=1)
    pipe.run_all()
    return SimpleNamespace(out=out, cfg=cfg, pipe=pipe)


@pytest.fixture(scope="session")
def default_world(tmp_path_factory):
    """The full default world (500 persons, 60 days) with per-stage timings."""
    out = str(tmp_path_factory.mktemp("default_world"))
    cfg = PipelineConfig()
    pipe = Pipeline(cfg, out, workers=1)
    timings = {}
    for stage in STAGE_ORDER:
        t0 = time.perf_counter()
        pipe.run(stage)
        timings[stage] = time.perf_counter() - t0
    return SimpleNamespace(out=out, cfg=cfg, pipe=pipe, timings=timings)
