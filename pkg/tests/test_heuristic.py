import random
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tilesec.heuristic import (MpkiTrend, aggregate_mpki, allocate_from_points, combine_raw, compute_allocation,
                               exhaustive_optimal, find_point_a, find_point_b, normalize_trend, region_points,
                               segment_slopes, synthetic_three_region)
from tilesec.machine import ConfigurationError


def test_exact_branch():
    d = allocate_from_points(30, 34, 0.2, 0.3, 64)
    assert (d.cores_secure, d.cores_insecure, d.branch) == (30, 34, "Exact")


def test_surplus_branch():
    d = allocate_from_points(20, 30, 0.2, 0.3, 64)
    assert (d.anomaly, d.cores_secure, d.cores_insecure, d.branch) == (14, 27, 37, "Surplus")


def test_surplus_odd_remainder_goes_insecure():
    d = allocate_from_points(20, 31, 0.2, 0.3, 64)
    assert (d.cores_secure, d.cores_insecure) == (26, 38)


def test_deficit_branch():
    d = allocate_from_points(40, 36, 0.040, 0.010, 64)
    assert (d.r_desired, d.anomaly, d.sr, d.adjust_factor) == (76, 12, 0.25, 3)
    assert (d.cores_secure, d.cores_insecure, d.branch) == (37, 27, "Deficit")


def test_deficit_equal_slopes_one_side_takes_all():
    d = allocate_from_points(40, 36, 0.2, 0.2, 64)
    assert d.adjust_factor == 12 and (d.cores_secure, d.cores_insecure) == (28, 36)


def test_n_too_small():
    with pytest.raises(ConfigurationError):
        allocate_from_points(1, 1, 0.1, 0.1, 1)


def test_trend_validation_and_csv_roundtrip():
    t = normalize_trend([(4, 10.0), (8, 5.0), (16, 2.0)])
    assert t.values == [1.0, 0.5, 0.2]
    assert MpkiTrend.from_csv(t.to_csv()) == t
    with pytest.raises(ValueError):
        MpkiTrend(((8, 1.0), (4, 0.5)))
    with pytest.raises(ValueError):
        MpkiTrend.from_csv("x,y\n1,2\n")
    assert normalize_trend([(1, 0.0), (2, 0.0)]).degenerate


def test_interpolation():
    t = MpkiTrend(((4, 1.0), (8, 0.5)))
    assert t.at(6) == pytest.approx(0.75)
    assert t.at(1) == 1.0 and t.at(100) == 0.5


def test_combine_raw():
    assert combine_raw([[(1, 2.0), (2, 1.0)], [(1, 1.0), (2, 1.0)]]) == [(1, 3.0), (2, 2.0)]
    with pytest.raises(ValueError):
        combine_raw([[(1, 2.0)], [(2, 1.0)]])


def test_points_on_a_hand_built_curve():
    # steep to 8 cores, linear to 40, flat after
    vals = {4: 1.0, 8: 0.5, 16: 0.46, 24: 0.42, 32: 0.38, 40: 0.34, 48: 0.338, 56: 0.336, 64: 0.334}
    t = normalize_trend(vals.items())
    assert find_point_b(t, 64) == 40
    assert find_point_a(t, 64) == 8
    rp = region_points(t, 64)
    assert rp.linear_slope == pytest.approx(0.16 / (32 / 64))


def test_synthetic_trends_have_three_regions():
    rng = random.Random(1)
    for _ in range(50):
        t = synthetic_three_region(rng)
        s = segment_slopes(t, 64)
        assert s[0] > 0.5 and s[-1] < 0.1
        assert t.values[0] == 1.0


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 200), st.integers(1, 200), st.floats(0, 5), st.floats(0, 5), st.integers(2, 256))
def test_conservation_and_branch_totality(bs, bi, ss, si, n):
    d = allocate_from_points(bs, bi, ss, si, n)
    assert d.cores_secure + d.cores_insecure == n
    assert d.cores_secure >= 1 and d.cores_insecure >= 1
    expected = "Exact" if bs + bi == n else ("Surplus" if bs + bi < n else "Deficit")
    assert d.branch == expected


@settings(max_examples=200, deadline=None)
@given(st.integers(10, 60), st.integers(10, 60), st.floats(0.01, 1.0), st.floats(1.01, 5.0))
def test_larger_slope_loses_adjust_factor(bs, bi, slope, scale):
    n = 64
    if bs + bi <= n:
        return
    d = allocate_from_points(bs, bi, slope * scale, slope, n)
    if d.cores_secure > 1 and d.cores_insecure > 1:
        assert bs - d.cores_secure == d.adjust_factor
    d2 = allocate_from_points(bs, bi, slope, slope * scale, n)
    if d2.cores_secure > 1 and d2.cores_insecure > 1:
        assert bi - d2.cores_insecure == d2.adjust_factor


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_oracle_is_a_minimum(seed):
    rng = random.Random(seed)
    ts, ti = synthetic_three_region(rng), synthetic_three_region(rng)
    cs, ci = exhaustive_optimal(ts, ti, 64)
    best = aggregate_mpki(ts, ti, cs, 64)
    assert cs + ci == 64
    assert all(aggregate_mpki(ts, ti, c, 64) >= best - 1e-12 for c in range(1, 64))
    d = compute_allocation(ts, ti, 64)
    assert aggregate_mpki(ts, ti, d.cores_secure, 64) >= best - 1e-12


def test_heuristic_is_cheap():
    rng = random.Random(0)
    ts, ti = synthetic_three_region(rng), synthetic_three_region(rng)
    t0 = time.perf_counter()
    for _ in range(200):
        compute_allocation(ts, ti, 64)
    assert time.perf_counter() - t0 < 2.0
