import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from ldlab.dynamics import (DOUBLING, TENT, MapSpec, OrbitStream, expected_hits, hit_times,
                            iterate, orbit_point, orbit_values)
from ldlab.errors import DomainError, PrecisionError

D, Tn = MapSpec.doubling(), MapSpec.tent()


def test_doubling_period_two_orbit():
    assert iterate(D, 1 / 3) == pytest.approx(2 / 3, abs=1e-15)
    assert iterate(D, 2 / 3) == pytest.approx(1 / 3, abs=1e-15)


def test_tent_formula_values():
    assert iterate(Tn, 0.3) == pytest.approx(0.6)
    assert iterate(Tn, 0.6) == pytest.approx(0.8)
    assert iterate(Tn, 0.8) == pytest.approx(0.4)
    assert iterate(Tn, 0.0) == 0.0


def test_iterate_rejects_points_outside_unit_interval():
    with pytest.raises(DomainError):
        iterate(D, 1.5)
    with pytest.raises(DomainError):
        iterate(Tn, -0.1)


def test_fixed_point_and_derivative_bound_defaults():
    for m in (D, Tn):
        assert m.periodic_point == 0.0 and m.deriv_bound == 2.0
        assert iterate(m, m.periodic_point) == 0.0


def test_piecewise_linear_full_branches():
    m = MapSpec.piecewise_linear((1 / 3,), (3.0, -1.5), deriv_bound=3.0)
    assert iterate(m, 0.1) == pytest.approx(0.3)
    # decreasing branch maps [1/3, 1] onto [0, 1]
    assert iterate(m, 1 / 3 + 0.3) == pytest.approx(1.5 * (1.0 - (1 / 3 + 0.3)), abs=1e-12)
    assert iterate(m, 1.0) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        MapSpec.piecewise_linear((0.5,), (3.0, 2.0))


def test_alternating_tape_views():
    s = OrbitStream.from_bits(cycle=(1, 0))
    assert orbit_point(s, DOUBLING, 0) == pytest.approx(2 / 3, abs=2.0**-120)
    assert orbit_point(s, DOUBLING, 1) == pytest.approx(1 / 3, abs=2.0**-120)
    x0 = orbit_point(s, TENT, 0)
    assert x0 == pytest.approx(2 / 3, abs=1e-15)
    assert iterate(Tn, x0) == pytest.approx(orbit_point(s, TENT, 1), abs=1e-14)


@given(st.integers(0, 2**32), st.integers(0, 1000))
def test_semiconjugacy_on_random_tapes(seed, n):
    s = OrbitStream(seed=seed)
    y = orbit_point(s, TENT, n)
    y1 = orbit_point(s, TENT, n + 1)
    # one floating application of the tent formula costs at most a few ulps
    assert abs(iterate(Tn, y) - y1) <= 4 * 2.0**-52


@given(st.integers(0, 2**32), st.integers(0, 300))
def test_doubling_views_are_bit_shifts(seed, n):
    s = OrbitStream(seed=seed)
    assert np.array_equal(s.bit_slice(n + 1, 200), s.bit_slice(n, 201)[1:])
    x, x1 = orbit_point(s, DOUBLING, n), orbit_point(s, DOUBLING, n + 1)
    assert abs(iterate(D, x) - x1) <= 2.0**-50


def test_orbit_values_match_orbit_point():
    s = OrbitStream(seed=11, sample_index=4)
    for kind in (DOUBLING, TENT):
        v = orbit_values(s, kind, 0, 50)
        ref = [orbit_point(s, kind, n) for n in range(50)]
        assert np.allclose(v, ref, rtol=1e-15, atol=0)


def test_empirical_law_is_uniform():
    xs = np.array([orbit_point(OrbitStream(seed=5, sample_index=i), TENT, 17) for i in range(10_000)])
    ks = stats.kstest(xs, "uniform").statistic
    assert ks <= 1.63 / math.sqrt(10_000) * 2


def test_streams_are_order_independent():
    a = [orbit_point(OrbitStream(seed=9, sample_index=i), DOUBLING, 7) for i in range(20)]
    b = [orbit_point(OrbitStream(seed=9, sample_index=i), DOUBLING, 7) for i in reversed(range(20))]
    assert a == b[::-1]


def test_hits_of_the_one_third_orbit_stop_after_two_steps():
    # d(1/3, 0) and d(2/3, 0) exceed 1/n for every n >= 3, so only n = 1, 2 qualify
    s = OrbitStream.from_bits(cycle=(0, 1))
    assert list(hit_times(s, D, 1.0, 10**6)) == [1, 2]


def test_leading_zeros_give_an_early_hit():
    s = OrbitStream.from_bits(prefix=(0,) * 40, seed=3)
    assert 1 in hit_times(s, D, 1.0, 1000)


def test_hit_times_increasing_and_within_balls():
    s = OrbitStream(seed=21)
    hits = hit_times(s, Tn, 1.0, 10**5)
    assert np.all(np.diff(hits) > 0)
    for n in hits:
        assert orbit_point(s, TENT, int(n)) <= 1.0 / n


def test_hit_count_matches_ball_measure_sum():
    exact = expected_hits(10**6)
    counts = [len(hit_times(OrbitStream(seed=s), D, 1.0, 10**6)) for s in range(200)]
    assert abs(np.mean(counts) - exact) < 4 * math.sqrt(exact / 200)


def test_expected_hits_harmonic_sum():
    # ball of radius 1/n around 0 has Lebesgue measure 1/n (capped at 1 for n = 1)
    assert expected_hits(10**7) == pytest.approx(math.fsum(1.0 / np.arange(1, 10**7 + 1)), rel=1e-12)
    assert expected_hits(10**7) == pytest.approx(16.695, abs=1e-3)


def test_precision_guard():
    with pytest.raises(PrecisionError):
        hit_times(OrbitStream(), D, 2.0, 2**62)
