import math

import pytest

from ldlab import observables as O
from ldlab.dynamics import MapSpec
from ldlab.errors import DomainError
from ldlab.estimators import bounds, tail

D = MapSpec.doubling()


def test_azuma_examples():
    assert bounds.azuma_bound(100 * 0.1, [1.0] * 100) == pytest.approx(math.exp(-0.5))
    n, eps, M = 50, 0.2, 3.0
    assert bounds.azuma_bound(n * eps, [M] * n) == pytest.approx(math.exp(-n * eps**2 / (2 * M**2)))
    assert bounds.azuma_bound(math.inf, [1.0]) == 0.0
    with pytest.raises(DomainError):
        bounds.azuma_bound(1.0, [0.0])


def test_schindler_examples():
    n = math.exp(math.e)
    mean = 0.9
    E = n * mean
    f = n**0.5
    xi = 1 / math.log(math.log(n))
    assert xi == pytest.approx(1.0)
    assert bounds.schindler_bound(E, f, xi) == pytest.approx(2 * math.exp(-n**0.5 * mean))
    assert bounds.schindler_bound(1.0, 1.0, 0.0) == 2.0


def test_truncated_sum_deviation_decays():
    # the concentration bound holds only beyond an unquantified n; at desk scale we check the
    # monotone decay of mu(|G_n - E_n| > 0.2 E_n) and that the bound itself decays with n
    probs, bnds = [], []
    for n in (50, 100, 200, 400):
        g = O.truncate(O.log_pow(1), O.TruncationSchedule.radius(0.5, n))
        E = n * O.mean(g.observable)
        est = tail.tail_mc(tail.TailQuery(D, g.observable, n, 0.2 * E / n, side="two-sided",
                                          N=10**5, seed=1))
        probs.append(est.p_hat)
        bnds.append(bounds.schindler_bound(E, g.sup_norm, 1 / math.log(math.log(n))))
    assert all(b < a for a, b in zip(probs, probs[1:]))
    assert all(b < a for a, b in zip(bnds, bnds[1:]))


def test_pressure_slope_example():
    rep = bounds.pressure_diagnostics(D, O.log_pow(1), 0.5, [10.0])
    assert rep.levels[0].slope == pytest.approx(5 - math.log(2))
    assert rep.levels[0].slope == pytest.approx(4.307, abs=1e-3)


def test_pressure_integrability_and_growth():
    rep = bounds.pressure_diagnostics(D, O.log_pow(1), 0.5, [5, 10, 20, 40])
    assert all(row.infinite for row in rep.integrability)
    assert rep.integrability[0].exponent == 1.0
    slopes = [row.slope for row in rep.levels]
    assert all(b > a for a, b in zip(slopes, slopes[1:]))
    # the finite-n bound includes log(r)/n with r = e^-M
    row = rep.levels[1]
    assert row.finite_n[10] == pytest.approx(row.slope - 10 / 10)


def test_partial_integral_diverges_only_when_nt_reaches_one():
    grow = [bounds.mgf_partial_integral(O.log_pow(1), 2, 0.5, d) for d in (20, 40, 80)]
    assert grow[2] - grow[1] > 0.8 * (grow[1] - grow[0]) > 5
    conv = [bounds.mgf_partial_integral(O.log_pow(1), 2, 0.25, d) for d in (20, 40, 80)]
    assert abs(conv[2] - conv[1]) < 1e-4


def test_pressure_rejects_wrong_observable():
    with pytest.raises(DomainError):
        bounds.pressure_diagnostics(D, O.log_pow(2), 0.5, [5])
