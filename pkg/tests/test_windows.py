import math

import numpy as np
import pytest

from ldlab import observables as O
from ldlab.dynamics import MapSpec, OrbitStream, orbit_values
from ldlab.errors import DomainError
from ldlab.estimators import windows

Tn, D = MapSpec.tent(), MapSpec.doubling()


def test_constant_observable_window_is_constant():
    const = O.polynomial((2.5,))
    w = windows.erdos_renyi_windows(windows.IIDChannel(1), const, 5000, 0.3)
    assert w.W == pytest.approx(2.5, abs=1e-12)


def test_window_max_against_numpy():
    s = OrbitStream(seed=4)
    obs = O.log_pow(1)
    w = windows.erdos_renyi_windows(s, obs, 20_000, 0.5, m=D)
    vals = O.vectorized(obs)(orbit_values(s, "doubling", 0, 20_000))
    sums = np.convolve(vals, np.ones(w.ell), "valid") / w.ell
    assert w.W == pytest.approx(sums.max(), rel=1e-12)
    assert w.argmax == int(np.argmax(sums))
    assert w.W >= sums[0]


def test_window_length_and_errors():
    assert windows.window_length(10**7, 0.0945) == int(math.log(1e7) / 0.0945)
    with pytest.raises(DomainError):
        windows.erdos_renyi_windows(windows.IIDChannel(), O.log_pow(1), 10, 5.0)
    with pytest.raises(DomainError):
        windows.erdos_renyi_windows(windows.IIDChannel(), O.log_pow(1), 10, 0.5, ell=11)


def test_iid_window_median_moves_toward_level():
    seeds = range(20)
    small = windows.erdos_renyi_ensemble(O.log_pow(1), 10**3, 0.0945, seeds)
    big = windows.erdos_renyi_ensemble(O.log_pow(1), 10**6, 0.0945, seeds)
    m_small = np.median([w.W for w in small])
    m_big = np.median([w.W for w in big])
    assert abs(m_big - 1.5) < abs(m_small - 1.5)


def test_ensembles_are_worker_invariant():
    a = windows.erdos_renyi_ensemble(O.log_pow(1), 10**4, 0.2, range(6), workers=1)
    b = windows.erdos_renyi_ensemble(O.log_pow(1), 10**4, 0.2, range(6), workers=4)
    assert [w.W for w in a] == [w.W for w in b]


def test_obstruction_on_tent_loglog():
    obs = O.log_log(0.0, centered=True)
    rep = windows.obstruction_check(Tn, obs, 1.0, 0.5, 2 * math.log(2), 10**6, OrbitStream(seed=5))
    assert rep.M > rep.M_min
    assert rep.rho == pytest.approx(O.raw_mean(obs))
    for e in rep.exceedances:
        assert e.n > rep.N0
        assert e.verified, e
        vals = O.vectorized(obs)(orbit_values(OrbitStream(seed=5), "tent", e.n, e.length))
        assert vals.mean() > 0.5


def test_obstruction_without_hits_is_inconclusive():
    s = OrbitStream.from_bits(cycle=(0, 1))
    rep = windows.obstruction_check(Tn, O.log_log(0.0, centered=True), 1.0, 0.5, 2 * math.log(2),
                                    10**5, s)
    assert rep.inconclusive and rep.hits_beyond == []


def test_degenerate_early_hit_skipped_by_threshold():
    s = OrbitStream.from_bits(prefix=(0,) * 60, seed=1)
    rep = windows.obstruction_check(D, O.log_pow(1), 1.0, 0.5, 2 * math.log(2), 10**4, s)
    assert 1 in rep.hits
    assert all(e.n > rep.N0 for e in rep.exceedances)
    assert 1 not in [e.n for e in rep.exceedances]


def test_threshold_index():
    obs = O.log_log(0.0, centered=True)
    M = 1.2
    N0 = windows.threshold_index(obs, M, 1.0)
    r = O.level_radius(obs.raw, M + obs.shift)
    # balls of radius n^-1/2 lie inside the level set exactly when n > N0
    assert (N0 + 1) ** -0.5 <= r < N0 ** -0.5


def test_small_level_rejected():
    with pytest.raises(DomainError):
        windows.obstruction_check(Tn, O.log_log(0.0, centered=True), 1.0, 0.5, 2 * math.log(2),
                                  1000, OrbitStream(), M=0.1)
