import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mad4ag.core import (
    ClockInterval,
    GeoPoint,
    RawFix,
    derive_seed,
    haversine_km,
    haversine_km_vec,
    hour_of,
    hour_overlaps,
    overlap_hours,
    rng_for,
)

latitudes = st.floats(min_value=-89.0, max_value=89.0)
longitudes = st.floats(min_value=-180.0, max_value=180.0)


class TestHaversine:
    def test_identity(self):
        p = GeoPoint(59.3293, 18.0686)
        assert haversine_km(p, p) == 0.0

    def test_one_degree_longitude_at_equator(self):
        d = haversine_km(GeoPoint(0, 0), GeoPoint(0, 1))
        assert abs(d - 111.1949) < 0.01

    def test_stockholm_gothenburg(self):
        d = haversine_km(GeoPoint(59.33, 18.06), GeoPoint(57.71, 11.97))
        assert abs(d - 397.0) < 2.0

    @given(latitudes, longitudes, latitudes, longitudes)
    @settings(max_examples=200)
    def test_symmetry(self, la1, lo1, la2, lo2):
        a, b = GeoPoint(la1, lo1), GeoPoint(la2, lo2)
        assert haversine_km(a, b) == pytest.approx(haversine_km(b, a), abs=1e-12)
        assert haversine_km(a, b) >= 0.0

    @given(latitudes, longitudes, latitudes, longitudes, latitudes, longitudes)
    @settings(max_examples=200)
    def test_triangle_inequality(self, la1, lo1, la2, lo2, la3, lo3):
        a, b, c = GeoPoint(la1, lo1), GeoPoint(la2, lo2), GeoPoint(la3, lo3)
        assert haversine_km(a, c) <= haversine_km(a, b) + haversine_km(b, c) + 1e-9

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(1)
        lat1, lat2 = rng.uniform(-80, 80, 50), rng.uniform(-80, 80, 50)
        lon1, lon2 = rng.uniform(-180, 180, 50), rng.uniform(-180, 180, 50)
        vec = haversine_km_vec(lat1, lon1, lat2, lon2)
        for i in range(50):
            scalar = haversine_km(GeoPoint(lat1[i], lon1[i]), GeoPoint(lat2[i], lon2[i]))
            assert vec[i] == pytest.approx(scalar, abs=1e-9)


class TestClock:
    def test_hour_of_epoch_zero(self):
        assert hour_of(1, 0) == 0

    def test_hour_of_plain(self):
        assert hour_of(3600, 0) == 1

    def test_hour_of_with_offset(self):
        assert hour_of(82800, 2 * 3600) == 1

    def test_full_containment(self):
        # 21:00 to 05:59 next day
        assert overlap_hours(75600, 75600 + 32340, 21) == pytest.approx(1.0)

    def test_partial_hours(self):
        start, end = 77400, 80100  # 21:30 to 22:15
        assert overlap_hours(start, end, 21) == pytest.approx(0.5)
        assert overlap_hours(start, end, 22) == pytest.approx(0.25)

    @given(st.integers(min_value=1, max_value=10**7), st.integers(min_value=60, max_value=12 * 3600))
    @settings(max_examples=200)
    def test_partition_identity(self, start, duration):
        buckets = hour_overlaps(start, start + duration)
        assert buckets.sum() == pytest.approx(duration / 3600, abs=1e-9)
        assert (buckets >= 0).all()

    def test_multi_day_accumulates(self):
        buckets = hour_overlaps(0 + 1, 2 * 86400 + 1)
        assert buckets.sum() == pytest.approx(48.0, abs=1e-9)
        assert buckets[5] == pytest.approx(2.0, abs=1e-3)


class TestClockInterval:
    def test_wrapping_window(self):
        night = ClockInterval(18 * 3600, 8 * 3600)
        assert night.duration_s == 14 * 3600
        assert night.hours() == list(range(18, 24)) + list(range(0, 8))
        assert night.contains_hour(3)
        assert not night.contains_hour(12)

    def test_full_day(self):
        assert len(ClockInterval(0, 86400).hours()) == 24

    def test_zero_duration_rejected(self):
        with pytest.raises(ValueError):
            ClockInterval(3600, 3600)


class TestTypes:
    def test_rawfix_bounds(self):
        with pytest.raises(ValueError):
            RawFix("d", 95.0, 0.0, 1)
        with pytest.raises(ValueError):
            RawFix("d", 0.0, 0.0, 0)

    def test_geopoint_bounds(self):
        with pytest.raises(ValueError):
            GeoPoint(0.0, 181.0)


class TestSeeding:
    def test_same_slot_same_stream(self):
        a = rng_for(42, "stage", "d001").random(5)
        b = rng_for(42, "stage", "d001").random(5)
        assert np.array_equal(a, b)

    def test_different_slots_differ(self):
        assert derive_seed(42, "stage", "d001") != derive_seed(42, "stage", "d002")
        assert derive_seed(42, "a") != derive_seed(43, "a")
