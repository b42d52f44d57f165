import math

import numpy as np
import pytest

import oracles
from mad4ag.core import DegenerateRanks
from mad4ag.evaluation import (
    Distribution,
    hourly_participation,
    js_distance,
    kl_generalized,
    participation_distribution,
    sequence_shares,
    spearman,
    trip_stats,
    weighted_quantile,
)
from mad4ag.plans import DailyPlan, PlanEntry

H = 3600
DAY = 86400


class TestKlGeneralized:
    def test_identical_is_zero(self):
        p = np.array([0.2, 0.3, 0.5])
        assert kl_generalized(p, p) == pytest.approx(0.0, abs=1e-15)

    def test_disjoint_support_infinite(self):
        assert kl_generalized([1.0, 0.0], [0.0, 1.0]) == math.inf

    def test_half_mass_midpoint(self):
        assert kl_generalized([1.0, 0.0], [0.5, 0.5]) == pytest.approx(1.0)

    def test_correction_terms_cancel_when_normalized(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            p = rng.uniform(0.01, 1, 6)
            q = rng.uniform(0.01, 1, 6)
            p /= p.sum()
            q /= q.sum()
            standard = float(np.sum(p * np.log2(p / q)))
            assert kl_generalized(p, q) == pytest.approx(standard, abs=1e-12)


class TestJsDistance:
    def test_identical_zero(self):
        assert js_distance([0.25, 0.75], [0.25, 0.75]) == 0.0

    def test_disjoint_is_exactly_one(self):
        assert js_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0, abs=1e-15)

    def test_symmetry(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            p = rng.uniform(0, 1, 5)
            q = rng.uniform(0, 1, 5)
            p[rng.integers(0, 5)] = 0.0
            assert js_distance(p, q) == pytest.approx(js_distance(q, p), abs=1e-12)

    def test_range_and_triangle_inequality(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            p, q, r = (rng.uniform(0, 1, 4) for _ in range(3))
            d_pq, d_qr, d_pr = js_distance(p, q), js_distance(q, r), js_distance(p, r)
            for d in (d_pq, d_qr, d_pr):
                assert 0.0 <= d <= 1.0 + 1e-12
            assert d_pr <= d_pq + d_qr + 1e-9

    def test_distribution_alignment_over_label_union(self):
        p = Distribution(("a", "b"), (0.5, 0.5))
        q = Distribution(("b", "c"), (0.5, 0.5))
        assert js_distance(p, q) == pytest.approx(js_distance([0.5, 0.5, 0.0], [0.0, 0.5, 0.5]))


def plan(device, entries, sim_day=0):
    return DailyPlan(device, sim_day, tuple(PlanEntry(*e) for e in entries))


def home_entry(start_h=0, end_h=24, lat=59.0, lon=18.0):
    return ("Home", int(start_h * H), int(end_h * H), 0, lat, lon)


class TestSequenceShares:
    def test_uniform_single_sequence(self):
        shares = sequence_shares(["H-W-H", "H-W-H"])
        assert shares.as_dict() == {"H-W-H": 1.0}

    def test_weighted_counts(self):
        shares = sequence_shares(["H-W-H", "H-O-H"], [3.0, 1.0])
        assert shares.as_dict()["H-W-H"] == pytest.approx(0.75)
        assert shares.as_dict()["H-O-H"] == pytest.approx(0.25)

    def test_row_order_invariance(self):
        a = sequence_shares(["A", "B", "A"], [1.0, 2.0, 3.0])
        b = sequence_shares(["B", "A", "A"], [2.0, 3.0, 1.0])
        assert a.as_dict() == b.as_dict()

    def test_top_k(self):
        shares = sequence_shares(["A"] * 5 + ["B"] * 3 + ["C"] * 2)
        top = shares.top(2)
        assert top.labels == ("A", "B")


class TestHourlyParticipation:
    def test_all_home_curve(self):
        plans = [plan(f"d{i}", [home_entry()]) for i in range(3)]
        curves = hourly_participation(plans)
        assert np.allclose(curves["Home"], 1.0)
        assert np.allclose(curves["Work"], 0.0)

    def test_shares_sum_to_one(self):
        plans = [
            plan("d0", [home_entry(0, 9), ("Work", 9 * H, 17 * H, 1, 59.1, 18.0), home_entry(17, 24)]),
            plan("d1", [home_entry()]),
        ]
        curves = hourly_participation(plans, {"d0": 2.0, "d1": 1.0})
        total = curves["Home"] + curves["Work"] + curves["Other"]
        assert np.allclose(total, 1.0, atol=1e-9)

    def test_work_share_matches_weighting(self):
        plans = [
            plan("d0", [home_entry(0, 9), ("Work", 9 * H, 17 * H, 1, 59.1, 18.0), home_entry(17, 24)]),
            plan("d1", [home_entry()]),
        ]
        curves = hourly_participation(plans)
        assert curves["Work"][10] == pytest.approx(0.5)

    def test_participation_distribution_mass(self):
        plans = [plan("d0", [home_entry()])]
        dist = participation_distribution(hourly_participation(plans))
        assert sum(dist.masses) == pytest.approx(1.0, abs=1e-9)


def leg_plan(device, dists_km, kinds=None):
    """Build a plan whose consecutive entries are dists_km apart northward."""
    entries = []
    t = 0
    lat = 59.0
    kinds = kinds or ["Home"] + ["Other"] * (len(dists_km))
    entries.append((kinds[0], 0, 2 * H, 0, lat, 18.0))
    for i, d in enumerate(dists_km):
        lat += d / (6371.0088 * math.pi / 180.0)
        start = (3 + 2 * i) * H
        entries.append((kinds[i + 1], start, start + H, i + 1, lat, 18.0))
    return plan(device, entries)


class TestTripStats:
    def test_single_trip(self):
        p = leg_plan("d", [5.0])
        stats = trip_stats([p])
        assert stats["overall"]["mean"] == pytest.approx(5.0, abs=1e-6)
        assert stats["overall"]["median"] == pytest.approx(5.0, abs=1e-6)
        assert stats["overall"]["p90"] == pytest.approx(5.0, abs=1e-6)

    def test_linear_interpolation_percentiles(self):
        values = np.arange(1.0, 11.0)
        ones = np.ones(10)
        assert weighted_quantile(values, ones, 0.5) == pytest.approx(5.5, abs=1e-9)
        assert weighted_quantile(values, ones, 0.9) == pytest.approx(9.1, abs=1e-9)
        # equal weights reproduce numpy's linear interpolation everywhere
        for q in (0.0, 0.13, 0.25, 0.77, 1.0):
            assert weighted_quantile(values, ones, q) == pytest.approx(np.quantile(values, q), abs=1e-9)

    def test_commuting_legs_selected(self):
        p = leg_plan("d", [5.0, 2.0], kinds=["Home", "Work", "Other"])
        stats = trip_stats([p])
        assert stats["commuting"]["mean"] == pytest.approx(5.0, abs=1e-6)
        assert stats["overall"]["mean"] == pytest.approx(3.5, abs=1e-6)

    def test_weighted_mean(self):
        p1 = leg_plan("d1", [2.0])
        p2 = leg_plan("d2", [10.0])
        stats = trip_stats([p1, p2], {"d1": 3.0, "d2": 1.0})
        assert stats["overall"]["mean"] == pytest.approx(4.0, abs=1e-6)


class TestSpearman:
    def test_proportional_is_one(self):
        pops = [700, 900, 1500, 2400, 2000]
        counts = [7, 9, 15, 24, 20]
        rho, p = spearman(counts, pops)
        assert rho == pytest.approx(1.0)
        assert p == pytest.approx(0.0, abs=1e-9)

    def test_reversed_is_minus_one(self):
        rho, _ = spearman([1, 2, 3, 4], [8, 6, 4, 2])
        assert rho == pytest.approx(-1.0)

    def test_matches_d2_formula_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(30):
            n = int(rng.integers(4, 40))
            x = rng.permutation(n).astype(float)  # tie-free
            y = rng.permutation(n).astype(float)
            rho, _ = spearman(x, y)
            assert rho == pytest.approx(oracles.spearman_d2(x, y), abs=1e-12)

    def test_average_ranks_for_ties(self):
        rho, _ = spearman([1, 1, 2, 3], [1, 1, 2, 3])
        assert rho == pytest.approx(1.0)

    def test_constant_vector_degenerate(self):
        with pytest.raises(DegenerateRanks):
            spearman([1, 1, 1, 1], [1, 2, 3, 4])

    def test_p_value_magnitude(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=20)
        y = x + rng.normal(scale=0.1, size=20)  # strongly correlated
        rho, p = spearman(x, y)
        assert rho > 0.9 and p < 1e-6
        x2 = rng.normal(size=20)
        y2 = rng.normal(size=20)
        _, p2 = spearman(x2, y2)
        assert p2 > 0.001
