import datetime as dt
import math

import numpy as np
import pytest

import oracles
from mad4ag.clustering import (
    ActivityLocation,
    DbscanParams,
    DeviceActivityData,
    FilterParams,
    apply_filters,
    build_activity_locations,
    dbscan,
)
from mad4ag.core import Stop
from mad4ag.ingestion import Building, BuildingIndex

M_PER_DEG = 111_320.0
DAY = 86400
# 2019-06-03 (Monday) 00:00 as epoch
MON = 1559520000


def random_points(rng, n, spread_km):
    lat0, lon0 = 59.0, 18.0
    return np.column_stack(
        [
            lat0 + rng.uniform(0, spread_km * 1000, n) / M_PER_DEG,
            lon0 + rng.uniform(0, spread_km * 1000, n) / (M_PER_DEG * 0.515),
        ]
    )


class TestDbscan:
    def test_two_points_fifty_km_apart_one_cluster(self):
        pts = np.array([[59.0, 18.0], [59.0 + 50 / 111.32, 18.0]])
        labels = dbscan(pts, DbscanParams(200_000.0, 2))  # 200 km in meters
        assert labels.tolist() == [0, 0]

    def test_isolated_point_is_noise(self):
        pts = np.array([[59.0, 18.0]])
        labels = dbscan(pts, DbscanParams(200.0, 2))
        assert labels.tolist() == [-1]

    def test_empty_input(self):
        assert dbscan(np.zeros((0, 2)), DbscanParams(100.0, 1)).tolist() == []

    def test_min_pts_one_keeps_singletons(self):
        pts = np.array([[59.0, 18.0], [59.5, 18.0]])
        labels = dbscan(pts, DbscanParams(100.0, 1))
        assert labels.tolist() == [0, 1]

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(11)
        for trial in range(40):
            n = int(rng.integers(2, 50))
            spread = float(rng.choice([0.2, 1.0, 5.0]))
            pts = random_points(rng, n, spread)
            eps = float(rng.choice([60.0, 150.0, 400.0, 1500.0]))
            min_pts = int(rng.integers(1, 5))
            labels = dbscan(pts, DbscanParams(eps, min_pts))
            got = oracles.labels_to_partition(labels)
            want = oracles.dbscan_reference([tuple(p) for p in pts], eps, min_pts)
            assert set(got[0]) == set(want[0]), f"trial {trial}"
            assert got[1] == want[1], f"trial {trial}"

    def test_partition_invariant_under_permutation(self):
        rng = np.random.default_rng(23)
        pts = random_points(rng, 40, 1.0)
        params = DbscanParams(150.0, 2)
        base = dbscan(pts, params)
        perm = rng.permutation(40)
        shuffled = dbscan(pts[perm], params)
        # map the shuffled labels back onto original indexing and compare partitions
        back = np.empty(40, dtype=int)
        back[perm] = shuffled
        got = set(oracles.labels_to_partition(back)[0])
        want = set(oracles.labels_to_partition(base)[0])
        assert got == want
        assert oracles.labels_to_partition(back)[1] == oracles.labels_to_partition(base)[1]

    def test_labels_dense_in_first_core_order(self):
        pts = np.array([[59.0, 18.0], [59.5, 18.0], [59.0, 18.0005], [59.5, 18.0005]])
        labels = dbscan(pts, DbscanParams(100.0, 2))
        assert labels[0] == 0 and labels[1] == 1


def mkstop(lat, lon, start, end, label=0):
    return Stop("d", lat, lon, start, end, label)


def grid_buildings():
    out = []
    for i in range(3):
        for j in range(3):
            out.append(Building(f"b{i}{j}", 59.0 + i * 0.02, 18.0 + j * 0.02, "residential"))
    return BuildingIndex(out)


class TestBuildActivityLocations:
    def test_distant_activity_spaces_split(self):
        stops = [mkstop(59.0, 18.0, 1000 + i * 10000, 2000 + i * 10000) for i in range(4)]
        # a summer place about 300 km north
        far = 59.0 + 300 / 111.32
        stops += [mkstop(far, 18.0, 10**6 + i * 10000, 10**6 + 2000 + i * 10000) for i in range(3)]
        locs = build_activity_locations("d", stops, BuildingIndex([]))
        assert {l.cluster_id for l in locs} == {0, 1}

    def test_scatter_snaps_to_building(self):
        index = grid_buildings()
        rng = np.random.default_rng(3)
        stops = []
        for i in range(6):
            stops.append(
                mkstop(
                    59.0 + rng.uniform(-30, 30) / M_PER_DEG,
                    18.0 + rng.uniform(-30, 30) / (M_PER_DEG * 0.515),
                    1000 + i * 10000,
                    3000 + i * 10000,
                )
            )
        # anchor second point so the 200 km stage keeps one cluster with min_pts=2
        locs = build_activity_locations("d", stops, index)
        assert len(locs) == 1
        assert locs[0].building_id == "b00"
        assert locs[0].lat == pytest.approx(59.0)

    def test_unsnapped_keeps_mean(self):
        stops = [mkstop(59.5, 18.5, 1000, 3000), mkstop(59.5, 18.5, 11000, 13000)]
        locs = build_activity_locations("d", stops, grid_buildings())
        assert locs[0].building_id is None
        assert locs[0].lat == pytest.approx(59.5)

    def test_single_faraway_stop_dropped_as_noise(self):
        stops = [mkstop(59.0, 18.0, 1000, 3000), mkstop(59.0, 18.0, 11000, 13000)]
        far = 59.0 + 300 / 111.32
        stops.append(mkstop(far, 18.0, 50000, 52000))
        locs = build_activity_locations("d", stops, BuildingIndex([]))
        assert len(locs) == 1

    def test_stage2_never_merges_stage1_clusters(self):
        stops = [mkstop(59.0, 18.0, 1000, 3000), mkstop(59.0, 18.0, 11000, 13000)]
        far = 59.0 + 250 / 111.32
        stops += [mkstop(far, 18.0, 40000, 42000), mkstop(far, 18.0, 50000, 52000)]
        locs = build_activity_locations("d", stops, BuildingIndex([]))
        clusters = {l.location_id: l.cluster_id for l in locs}
        assert len(locs) == 2
        assert clusters[0] != clusters[1]

    def test_overlapping_visits_merged(self):
        stops = [mkstop(59.0, 18.0, 1000, 3000), mkstop(59.0, 18.0, 2000, 5000)]
        locs = build_activity_locations("d", stops, BuildingIndex([]))
        assert locs[0].visits == ((1000, 5000),)


def day_visit(day_idx, start_h, hours, base=MON):
    start = base + day_idx * DAY + int(start_h * 3600)
    return (start, start + int(hours * 3600))


def make_device(device_id, loc_specs):
    locs = []
    for i, (lat, lon, visits) in enumerate(loc_specs):
        locs.append(ActivityLocation(device_id, 0, i, None, lat, lon, tuple(sorted(visits))))
    return DeviceActivityData(device_id, tuple(locs))


def weekday_visits(n_days, start_h=9.0, hours=2.0):
    """Visits on consecutive weekdays starting from the Monday base."""
    out = []
    day = 0
    while len(out) < n_days:
        if dt.datetime.fromtimestamp(MON + day * DAY, tz=dt.timezone.utc).weekday() < 5:
            out.append(day_visit(day, start_h, hours))
        day += 1
    return out


STUDY = ((58.0, 17.0), (58.0, 20.0), (61.0, 20.0), (61.0, 17.0))


def fparams(**kw):
    defaults = dict(holidays=frozenset(), study_polygon=STUDY, utc_offset_s=0)
    defaults.update(kw)
    return FilterParams(**defaults)


class TestApplyFilters:
    def test_long_visit_removed_device_kept(self):
        dev = make_device(
            "d",
            [
                (59.0, 18.0, weekday_visits(8)),
                (59.1, 18.1, weekday_visits(8, start_h=13.0) + [day_visit(0, 18.0, 13.0)]),
            ],
        )
        kept, report = apply_filters([dev], fparams())
        assert report.visits_over_max == 1
        assert len(kept) == 1
        assert sum(len(l.visits) for l in kept[0].locations) == 16

    def test_six_active_days_removed(self):
        dev = make_device("d", [(59.0, 18.0, weekday_visits(6)), (59.1, 18.1, weekday_visits(6, start_h=13.0))])
        kept, report = apply_filters([dev], fparams())
        assert kept == []
        assert report.devices_few_active_days == 1

    def test_weekend_and_holiday_visits_removed(self):
        saturday = day_visit(5, 10.0, 2.0)
        midsummer = dt.date(2019, 6, 21)
        holiday = day_visit(18, 10.0, 2.0)  # 2019-06-21 is 18 days after the Monday base
        dev = make_device("d", [(59.0, 18.0, weekday_visits(8) + [saturday]), (59.1, 18.1, weekday_visits(8, 13.0) + [holiday])])
        kept, report = apply_filters([dev], fparams(holidays=frozenset({midsummer})))
        assert report.visits_weekend_holiday == 2
        assert len(kept) == 1

    def test_out_of_bounds_location_removed(self):
        dev = make_device("d", [(59.0, 18.0, weekday_visits(8)), (10.0, 10.0, weekday_visits(8, 13.0))])
        kept, report = apply_filters([dev], fparams())
        assert report.visits_outside_bounds == 8
        assert kept == []  # only one location left -> device dropped
        assert report.devices_few_locations == 1

    def test_exact_violator_set_removed(self):
        devices = []
        # 90 clean devices
        for i in range(90):
            devices.append(
                make_device(f"ok{i:02d}", [(59.0, 18.0, weekday_visits(8)), (59.1, 18.1, weekday_visits(8, 13.0))])
            )
        violators = []
        for i in range(2):  # all visits at second location too long
            violators.append(
                make_device(f"vA{i}", [(59.0, 18.0, weekday_visits(8)), (59.1, 18.1, [day_visit(d, 5.0, 13.0) for d in range(3)])])
            )
        for i in range(2):  # second location out of bounds
            violators.append(
                make_device(f"vB{i}", [(59.0, 18.0, weekday_visits(8)), (10.0, 10.0, weekday_visits(8, 13.0))])
            )
        for i in range(2):  # second location only visited on weekends
            weekend = [day_visit(5 + 7 * k, 10.0, 2.0) for k in range(3)]
            violators.append(make_device(f"vC{i}", [(59.0, 18.0, weekday_visits(8)), (59.1, 18.1, weekend)]))
        for i in range(2):  # too few active days
            violators.append(
                make_device(f"vD{i}", [(59.0, 18.0, weekday_visits(6)), (59.1, 18.1, weekday_visits(6, 13.0))])
            )
        for i in range(2):  # single unique location
            violators.append(make_device(f"vE{i}", [(59.0, 18.0, weekday_visits(8))]))
        devices.extend(violators)
        kept, report = apply_filters(devices, fparams())
        kept_ids = {d.device_id for d in kept}
        assert kept_ids == {f"ok{i:02d}" for i in range(90)}
        assert report.devices_out == 90

    def test_retained_devices_satisfy_all_predicates(self):
        devices = [
            make_device(f"d{i}", [(59.0, 18.0, weekday_visits(9)), (59.1, 18.1, weekday_visits(9, 13.0))])
            for i in range(5)
        ]
        params = fparams()
        kept, _ = apply_filters(devices, params)
        for dev in kept:
            assert dev.active_days(0) >= params.min_active_days
            assert len(dev.locations) >= params.min_unique_locations
            for loc in dev.locations:
                for s, e in loc.visits:
                    assert e - s <= params.max_visit_hours * 3600
                    day = dt.datetime.fromtimestamp(s, tz=dt.timezone.utc).date()
                    assert day.weekday() < 5 and day not in params.holidays
