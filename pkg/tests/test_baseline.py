import numpy as np
import pytest

from mad4ag.baseline import dummy_primaries, dummy_schedule, hourly_visit_table
from mad4ag.clustering import ActivityLocation, DeviceActivityData
from mad4ag.core import ClockInterval
from mad4ag.primary import HourlyWeights, PrimaryParams, infer_home, infer_work

DAY = 86400
H = 3600
MON = 1559520000


def loc(lid, visits, lat=59.0, lon=18.0):
    return ActivityLocation("d", 0, lid, None, lat, lon, tuple(sorted(visits)))


def visit(day, start_h, end_h):
    return (MON + day * DAY + int(start_h * H), MON + day * DAY + int(end_h * H))


class TestDummyPrimaries:
    def test_night_location_is_home_day_location_is_work(self):
        night = loc(0, [visit(d, 19, 23) for d in range(20)])
        day = loc(1, [visit(d, 9, 16) for d in range(20)], lat=59.1)
        home, work = dummy_primaries(DeviceActivityData("d", (night, day)))
        assert home == 0 and work == 1

    def test_work_none_when_daytime_unobserved(self):
        night = loc(0, [visit(d, 19, 23) for d in range(20)])
        evening = loc(1, [visit(d, 19.5, 21) for d in range(5)], lat=59.1)
        home, work = dummy_primaries(DeviceActivityData("d", (night, evening)))
        assert home == 0 and work is None

    def test_agrees_with_temporal_score_on_clean_device(self):
        home_loc = loc(0, [visit(d, 18, 23.9) for d in range(40)])
        work_loc = loc(1, [visit(d, 8.5, 17) for d in range(40)], lat=59.1)
        dev = DeviceActivityData("d", (home_loc, work_loc))
        d_home, d_work = dummy_primaries(dev)
        night = ClockInterval(18 * H, 8 * H)
        w_home = HourlyWeights("home", tuple(0.95 if h >= 18 or h < 8 else 0.0 for h in range(24)))
        w_work = HourlyWeights("work", tuple(0.45 if 8 <= h < 18 else 0.05 for h in range(24)))
        params = PrimaryParams()
        t_home = infer_home(dev, w_home, night, params)
        t_work = infer_work(dev, w_work, t_home[0], params)
        assert d_home == t_home[0]
        assert d_work == t_work[0]

    def test_frequency_vs_duration_disagreement(self):
        # visited every night for 20 minutes across two hour buckets vs a
        # long-stay true home on only 8 nights
        frequent = loc(0, [(MON + d * DAY + 22 * H + 50 * 60, MON + d * DAY + 23 * H + 10 * 60) for d in range(60)])
        true_home = loc(1, [visit(d, 18, 6 + 24) for d in range(0, 16, 2)], lat=59.1)
        dev = DeviceActivityData("d", (frequent, true_home))
        night = ClockInterval(18 * H, 8 * H)
        w_home = HourlyWeights("home", tuple(0.95 if h >= 18 or h < 8 else 0.0 for h in range(24)))
        d_home, _ = dummy_primaries(dev)
        t_home = infer_home(dev, w_home, night, PrimaryParams())
        assert d_home == 0  # the dummy follows visit frequency
        assert t_home[0] == 1  # the temporal score follows weighted duration


class TestDummySchedule:
    def test_all_home_is_single_24h_activity(self):
        home = loc(0, [visit(d, 19, 23) for d in range(10)])
        plan = dummy_schedule(DeviceActivityData("d", (home,)))
        assert len(plan.entries) == 1
        entry = plan.entries[0]
        assert entry.activity_type == "Home"
        assert entry.start_s == 0 and entry.end_s == DAY

    def test_nine_to_five_merges(self):
        home = loc(0, [visit(d, 18, 24) for d in range(20)] + [visit(d, 0, 8) for d in range(20)])
        work = loc(1, [visit(d, 8, 18) for d in range(20)], lat=59.1)
        plan = dummy_schedule(DeviceActivityData("d", (home, work)))
        assert plan.sequence == "H-W-H"
        assert [(e.start_s, e.end_s) for e in plan.entries] == [(0, 8 * H), (8 * H, 18 * H), (18 * H, DAY)]

    def test_unobserved_hours_carry_forward(self):
        home = loc(0, [visit(d, 18, 24) for d in range(20)] + [visit(d, 0, 6) for d in range(20)])
        work = loc(1, [visit(d, 9, 12) for d in range(20)], lat=59.1)
        # hours 6-8 and 12-17 unobserved: carry home through the morning gap
        # and work through the afternoon
        plan = dummy_schedule(DeviceActivityData("d", (home, work)))
        assert plan.sequence == "H-W-H"
        assert plan.entries[0].end_s == 9 * H
        assert plan.entries[1].end_s == 18 * H

    def test_plans_cover_day_without_gaps(self, small_world):
        plans = small_world.pipe.load_plans(f"{small_world.out}/dummy_plans.csv")
        assert plans
        devices = set()
        for plan in plans:
            assert plan.entries[0].start_s == 0
            assert plan.entries[-1].end_s == DAY
            for a, b in zip(plan.entries, plan.entries[1:]):
                assert a.end_s == b.start_s
            assert plan.sim_day == 0
            devices.add(plan.device_id)
        assert len(devices) == len(plans)  # one plan per device

    def test_types_follow_dummy_primaries(self):
        home = loc(0, [visit(d, 19, 23) for d in range(20)])
        work = loc(1, [visit(d, 9, 16) for d in range(20)], lat=59.1)
        cafe = loc(2, [visit(d, 17, 18) for d in range(20)], lat=59.2)
        plan = dummy_schedule(DeviceActivityData("d", (home, work, cafe)))
        kinds = {e.location_id: e.activity_type for e in plan.entries}
        assert kinds[0] == "Home" and kinds[1] == "Work" and kinds[2] == "Other"


class TestHourlyVisitTable:
    def test_distinct_days_per_hour(self):
        l = loc(0, [visit(0, 9, 11), visit(0, 15, 16), visit(1, 9, 10)])
        table = hourly_visit_table(DeviceActivityData("d", (l,)))
        assert table[0][9] == 2  # two distinct days touch hour 9
        assert table[0][10] == 1  # day 0 only (visit ends at 10:00 sharp... spans 9-11 so hour 10 too)
        assert table[0][15] == 1

    def test_wrapping_visit_counts_both_days(self):
        l = loc(0, [(MON + 23 * H, MON + DAY + 1 * H)])
        table = hourly_visit_table(DeviceActivityData("d", (l,)))
        assert table[0][23] == 1
        assert table[0][0] == 1
