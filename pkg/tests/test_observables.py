import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from ldlab import observables as O
from ldlab.errors import DomainError, SingularityError


def test_formula_values():
    x = math.exp(-3)
    assert O.log_pow(1)(x) == pytest.approx(3.0)
    assert O.log_pow(2)(x) == pytest.approx(9.0)
    assert O.inv_pow(0.5)(0.25) == pytest.approx(2.0)
    assert O.log_log()(math.exp(-3)) == pytest.approx(math.log(4.0))


def test_singularity_and_domain_errors():
    with pytest.raises(SingularityError):
        O.log_pow(1)(0.0)
    with pytest.raises(DomainError):
        O.log_pow(1)(1.5)
    with pytest.raises(DomainError):
        O.inv_pow(1.0)


def test_mean_of_minus_log_is_one():
    assert O.mean(O.log_pow(1)) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, 3.5])
def test_logpow_mean_is_gamma(alpha):
    assert O.mean(O.log_pow(alpha)) == pytest.approx(math.gamma(1 + alpha), rel=1e-13)


@pytest.mark.parametrize("obs,value", [(O.log_pow(2), 2.0), (O.inv_pow(0.5), 2.0),
                                       (O.log_pow(1, 0.3), None), (O.log_log(), None),
                                       (O.log_log(0.5), None), (O.inv_pow(0.25), 4 / 3)])
def test_closed_form_agrees_with_quadrature(obs, value):
    # independent oracle: scipy quad after the substitution x = p +- e^-u
    # the formula in terms of u = -log d(x, p)
    in_u = {O.LOGPOW: lambda u: u ** obs.alpha, O.LOGLOG: lambda u: math.log1p(u),
            O.INVPOW: lambda u: math.exp(obs.alpha * u)}[obs.kind]

    def side(length, sign):
        if length <= 0:
            return 0.0
        # beyond u = 700 the weight e^-u underflows and the tail is negligible
        return integrate.quad(lambda u: in_u(u) * math.exp(-u), -math.log(length), 700.0,
                              limit=400, epsabs=1e-13)[0]
    ref = side(obs.center, -1) + side(1 - obs.center, 1)
    assert O.mean(obs) == pytest.approx(ref, abs=1e-9)
    assert O.quadrature_mean(obs) == pytest.approx(ref, abs=1e-9)
    if value is not None:
        assert O.mean(obs) == pytest.approx(value, rel=1e-12)


def test_centred_mean_zero_and_shift():
    c = O.log_pow(2, centered=True)
    assert O.mean(c) == 0.0
    assert c(math.exp(-3)) == pytest.approx(9.0 - 2.0)


def test_loglog_mean_value():
    # integral of log(1 - log x) = e E1(1)
    from scipy.special import exp1
    assert O.mean(O.log_log()) == pytest.approx(math.e * exp1(1.0), rel=1e-13)


def test_radius_cut_example():
    tr = O.truncate(O.log_pow(1), O.TruncationSchedule.radius(0.5, 100))
    g = tr.observable
    assert tr.sup_norm == pytest.approx(10.0)
    assert tr.bv_bound == pytest.approx(30.0)
    assert g(math.exp(-10) * 0.999) == 0.0
    assert g(math.exp(-10) * 1.001) == pytest.approx(10.0, abs=1e-2)
    gap = O.mean(O.log_pow(1)) - O.mean(g)
    assert gap == pytest.approx(11 * math.exp(-10), rel=1e-10)
    assert gap <= 1e-3


def test_level_cut_example():
    tr = O.truncate(O.log_pow(1), O.TruncationSchedule.level(5))
    h = tr.observable
    assert h(math.exp(-7)) == pytest.approx(5.0)
    assert h(math.exp(-3)) == pytest.approx(3.0)
    assert tr.sup_norm == 5.0


@given(st.floats(0.05, 3.0), st.floats(1e-12, 1.0))
def test_truncations_dominated(alpha, x):
    phi = O.log_pow(alpha)
    lvl = O.truncate(phi, O.TruncationSchedule.level(2.0)).observable
    rad = O.truncate(phi, O.TruncationSchedule.radius(0.5, 50)).observable
    v = phi(x)
    assert 0.0 <= lvl(x) <= v + 1e-12
    assert rad(x) <= v + 1e-12


def test_radius_cut_mean_converges():
    phi = O.log_pow(1.5)
    gaps = [O.mean(phi) - O.mean(O.truncate(phi, O.TruncationSchedule.radius(0.5, n)).observable)
            for n in (10, 40, 160, 640)]
    assert all(a > b > 0 for a, b in zip(gaps, gaps[1:]))


def test_compiled_evaluation_matches_python():
    rng = np.random.default_rng(0)
    xs = rng.random(200)
    for obs in (O.log_pow(1.3, 0.2, centered=True), O.inv_pow(0.4), O.log_log(0.7),
                O.polynomial((1.0, -2.0, 0.5)), O.cylinder_coded(rng.random(16)),
                O.truncate(O.log_pow(2), O.TruncationSchedule.level(3)).observable):
        ref = np.array([obs(x) for x in xs])
        assert np.allclose(O.vectorized(obs)(xs), ref, rtol=1e-14, atol=1e-14)


def test_cylinder_constant_on_cells():
    obs = O.cylinder_coded([1.0, 2.0, 3.0, 4.0])
    assert obs.depth == 2
    assert obs(0.0) == 1.0 and obs(0.2499) == 1.0 and obs(0.25) == 2.0 and obs(0.99) == 4.0


def test_to_cylinder_midpoints():
    c = O.to_cylinder(O.log_pow(1), 3)
    assert c.values[0] == pytest.approx(-math.log(1 / 16))
    assert O.mean(c) == pytest.approx(1.0, abs=0.05)


def test_parse():
    assert O.parse("logpow:2:0:c") == O.log_pow(2, 0, centered=True)
    assert O.parse("invpow:0.5") == O.inv_pow(0.5)
    assert O.parse("loglog:0") == O.log_log(0)
    with pytest.raises(DomainError):
        O.parse("nonsense:1")


def test_variance_of_minus_log_is_one():
    assert O.variance(O.log_pow(1)) == pytest.approx(1.0, abs=1e-10)
    assert O.variance(O.log_pow(2)) == pytest.approx(20.0, abs=1e-8)
