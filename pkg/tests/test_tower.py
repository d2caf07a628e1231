import math

import mpmath
import numpy as np
import pytest

from ldlab import tower as T
from ldlab.errors import BudgetError, DomainError


@pytest.fixture(scope="module")
def k2():
    return T.build(2)


@pytest.fixture(scope="module")
def k3():
    return T.build(3)


def test_k1_columns_and_constant():
    m = T.build(1)
    assert list(m.heights) == [1, 24]
    assert 1 / m.C == pytest.approx(math.exp(-0.25) + math.exp(-6), rel=1e-15)


def test_k2_normaliser(k2):
    p = [float(v) for v in k2.p]
    assert k2.Z == pytest.approx(1 * p[0] + 24 * p[1] + 288 * p[2], rel=1e-15)
    assert sum(p) == pytest.approx(1.0, abs=1e-15)
    assert float(np.sum(k2.nu)) == pytest.approx(1.0, abs=1e-14)


def test_tail_report_k3(k3):
    ref = mpmath.log10(2 * 12**4 * mpmath.exp(-mpmath.mpf(12**4) / 2))
    assert k3.log10_tail < -1000
    assert k3.log10_tail == pytest.approx(float(ref), abs=1e-9)


def test_k_range():
    with pytest.raises(DomainError):
        T.build(5)
    with pytest.raises(DomainError):
        T.build(0)


def test_observable_and_coboundary_values(k2):
    s = k2.state(1, 0)
    assert k2.f[s] == 1 and k2.psi[k2.state(1, 1)] - k2.psi[s] == 1
    top = k2.state(1, 23)
    assert k2.f[top] == -1 and k2.psi[top] == 1
    assert k2.psi[k2.bases].tolist() == [0, 0, 0]
    assert np.all(np.abs(k2.f) <= 1)
    n_of = np.array([T.column_n(k) for k in range(3)])[k2.col]
    assert np.all((0 <= k2.psi) & (k2.psi <= n_of))


def test_coboundary_sweep_k3(k3):
    rep = T.verify_coboundary(k3)
    assert rep.states == 3769
    assert rep.violations == 0
    assert rep.trajectory_mismatches == 0
    assert rep.trajectories == 1000 and rep.length == 1000


def test_stationarity(k2, k3):
    assert T.stationarity_residual(k2) <= 1e-12
    assert T.stationarity_residual(k3) <= 1e-12


def test_one_step_law(k2):
    d = T.sn_distribution(k2, 1)
    p = [float(v) for v in k2.p]
    up = (12 * p[1] + 144 * p[2]) / k2.Z
    assert d.prob(lambda v: v == 1) == pytest.approx(up, rel=1e-14)
    assert d.prob(lambda v: v == 0) == pytest.approx(p[0] / k2.Z, rel=1e-14)
    assert d.prob(lambda v: v == -1) == pytest.approx(1 - up - p[0] / k2.Z, rel=1e-12)


def test_distribution_range_mass_and_mean(k2):
    for n in (10, 150, 300):
        d = T.sn_distribution(k2, n)
        assert float(np.sum(d.mass)) == pytest.approx(1.0, abs=1e-12)
        assert d.prob(lambda v: np.abs(v) > 144) == 0.0
        assert abs(d.mean) <= 1e-10


def test_deviation_probabilities_decay(k2):
    ns = [40, 80, 160]
    logs = [math.log(T.sn_distribution(k2, n).prob(lambda v, n=n: np.abs(v) > 0.25 * n))
            for n in ns]
    slope = np.polyfit(ns, logs, 1)[0]
    assert slope <= -0.05
    # |S_n| > n/4 forces psi > n/8 at one end of the path
    for n, lg in zip(ns, logs):
        psi_tail = float(np.sum(k2.nu[k2.psi > n / 8]))
        assert math.exp(lg) <= 2 * psi_tail * (1 + 1e-9)


def test_distribution_budget(k3, k2):
    with pytest.raises(BudgetError):
        T.sn_distribution(k3, 10)
    with pytest.raises(BudgetError):
        T.sn_distribution(k2, 301)


def test_variance_bounded(k2):
    var = T.variance_curve(k2, 300)
    bound = 4 * T.psi_second_moment(k2)
    assert all(v <= bound for _, v, _ in var)
    v10, v200 = var[9][1], var[199][1]
    assert v200 / 200 <= 0.1 * v10 / 10


def _mgf_oracle(model, t, n):
    """E_nu exp(t S_n) by mpmath vector iteration over the weighted kernel."""
    mpmath.mp.dps = 40
    S = model.n_states
    nu = [mpmath.e ** mpmath.mpf(str(float(v))) for v in model.log_nu]
    p = [mpmath.e ** mpmath.mpf(str(float(v))) for v in model.log_p]
    cur = nu
    for _ in range(n):
        nxt = [mpmath.mpf(0)] * S
        for s in range(S):
            w = cur[s] * mpmath.e ** (t * int(model.f[s]))
            if model.nxt[s] >= 0:
                nxt[model.nxt[s]] += w
            else:
                for k, b in enumerate(model.bases):
                    nxt[b] += w * p[k]
        cur = nxt
    return mpmath.log(mpmath.fsum(cur)) / n


def test_mgf_against_mpmath_oracle():
    m = T.build(1)
    curve = T.log_mgf_curve(m, 1.0, 60)
    for n in (1, 12, 24, 37, 60):
        assert curve.value[n - 1] == pytest.approx(float(_mgf_oracle(m, 1, n)), abs=1e-12)


def test_mgf_lower_bound_at_first_column(k3):
    curve = T.log_mgf_curve(k3, 1.0, 12)
    assert curve.value[11] >= 0.25 + math.log(k3.C) / 12 - 0.25


def test_mgf_zero_at_t_zero(k2):
    curve = T.log_mgf_curve(k2, 0.0, 100)
    assert np.allclose(curve.value, 0.0, atol=1e-15)


def test_mgf_oscillates(k2, k3):
    c2 = T.log_mgf_curve(k2, 1.0, 2000)
    assert c2.value[:200].max() >= 0.2
    assert c2.value[200:].min() <= 0.05
    c3 = T.log_mgf_curve(k3, 1.0, 2000)
    window = c3.value[11:]
    assert window.max() - window.min() >= 0.15
    assert np.all(c3.limsup_proxy >= c3.value) and np.all(c3.liminf_proxy <= c3.value)


def test_mgf_budget(k2):
    with pytest.raises(BudgetError):
        T.log_mgf_curve(k2, 1.0, 10_001)
