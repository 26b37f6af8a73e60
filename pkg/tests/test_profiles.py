import numpy as np
import pytest
from hypothesis import given, strategies as st

from bangcross import profiles as P
from bangcross.profiles import Integrability


def test_de_sitter_conformal_time():
    tm, om = P.conformal_time_hat(np.exp, 0.0, cut=20.0, da=np.exp)
    assert tm == pytest.approx(-1.0, abs=1e-12)
    assert float(om(-0.5)) == pytest.approx(2.0, rel=1e-12)
    for t in (-1e-3, -1e-6, -1e-9):
        assert float(om(t)) * (-t) == pytest.approx(1.0, abs=1e-6)


def test_unit_scale_factor_with_cut_is_affine():
    T = 3.0
    tm, om = P.conformal_time_hat(lambda t: 1.0 + 0 * t, 0.0, cut=T, tail="cut")
    assert tm == pytest.approx(-T)
    for t in (0.0, 1.0, 2.5):
        assert om.tau_of_t(t) == pytest.approx(t - T, abs=1e-12)
    assert float(om(-1.2)) == pytest.approx(1.0)


def test_divergent_hat_tail_rejected():
    with pytest.raises(P.ConformalTimeError):
        P.conformal_time_hat(lambda t: 1.0 + t, 0.0, cut=10.0, tail="power")


def test_check_power_law_gives_linear_factor():
    tp, om = P.conformal_time_check(lambda t: np.sqrt(2) * np.sqrt(t), 1.0)
    assert tp == pytest.approx(np.sqrt(2))
    for tau in (1e-3, 0.1, 1.0):
        assert float(om(tau)) == pytest.approx(tau, rel=1e-10)


def test_check_unit_scale_factor():
    tp, om = P.conformal_time_check(lambda t: 1.0 + 0 * t, 2.0)
    assert tp == pytest.approx(2.0)
    assert float(om(0.7)) == pytest.approx(1.0)


def test_check_non_integrable_rejected():
    with pytest.raises(P.ConformalTimeError):
        P.conformal_time_check(lambda t: t, 1.0)


@pytest.mark.parametrize("C,eta", [(np.sqrt(2), 0.5), (1.3, 0.25), (0.7, 2 / 3)])
def test_power_law_family_matches_conformal_time(C, eta):
    _, num = P.conformal_time_check(lambda t: C * t**eta, 1.0)
    exact = P.power_law_check(C, eta)
    for tau in (1e-3, 1e-2, 0.1):
        assert float(num(tau)) == pytest.approx(float(exact(tau)), rel=1e-8)


def test_inversion_residual():
    _, om = P.conformal_time_hat(lambda t: 2 * np.cosh(t), 0.0, cut=30.0, da=lambda t: 2 * np.sinh(t))
    for t in (0.0, 0.5, 3.0, 12.0):
        assert abs(om.t_of_tau(om.tau_of_t(t)) - t) <= 1e-10


def test_reciprocal_examples():
    oh = P.power_omega(P.HAT, 1.0, -1.0)           # 1/|tau|
    oc = P.power_omega(P.CHECK, 1.0, 1.0)          # tau
    # 1/|tau| on the hat side equals -1/tau; the reciprocal pairing needs the minus sign
    neg = P.ConformalFactor(P.HAT, lambda t: 1 / np.asarray(t, float), lambda t: -1 / np.asarray(t, float) ** 2)
    for tau in (1e-4, 0.1, 0.9):
        assert P.reciprocal_residual(neg, oc, tau) == pytest.approx(0.0, abs=1e-15)
        assert P.reciprocal_residual(oh, oc, tau) == pytest.approx(2.0)
    one_h, one_c = P.constant_omega(P.HAT), P.constant_omega(P.CHECK)
    assert P.reciprocal_residual(one_h, one_c, 0.3) == 2.0
    with pytest.raises(P.ProfileError):
        P.reciprocal_residual(one_h, one_c, 2.0, tau_minus=-1.0, tau_plus=1.0)


def test_reciprocal_desitter_powerlaw_limit():
    _, oh = P.conformal_time_hat(lambda t: np.exp(t), 0.0, cut=20.0, sign=-1, da=np.exp)
    oc = P.power_law_check(np.sqrt(2), 0.5)
    r = [P.reciprocal_residual(oh, oc, t) for t in (1e-2, 1e-4, 1e-6)]
    assert max(abs(x) for x in r) < 1e-8


@pytest.mark.parametrize("q,expected", [
    (lambda t: 2.0 + 0 * t, Integrability.L1),
    (lambda t: 1 / np.abs(t), Integrability.WEIGHTED_L1),
    (lambda t: 1 / t**2, Integrability.NEITHER),
    (lambda t: np.abs(t) ** -0.5, Integrability.L1),
    (lambda t: np.abs(t) ** -1.5, Integrability.WEIGHTED_L1),
])
@pytest.mark.parametrize("side", [P.HAT, P.CHECK])
def test_classification(q, expected, side):
    assert P.classify_integrability(q, side=side, extent=0.5) == expected


@given(st.floats(0.05, 0.95), st.floats(0.1, 5.0))
def test_classification_dominance(p, c):
    # c|tau|^-p is L1 for p < 1, so anything it dominates must be at least weighted
    big = P.classify_integrability(lambda t: c * np.abs(t) ** -p, side=P.CHECK, extent=0.5)
    small = P.classify_integrability(lambda t: 0.5 * c * np.abs(t) ** -p * np.abs(np.sin(1 / np.abs(t))) ** 2,
                                     side=P.CHECK, extent=0.5)
    assert big == Integrability.L1
    assert small.at_least_weighted()


def test_liouville_examples():
    oc = P.power_omega(P.CHECK, 1.0, 1.0)
    assert P.liouville_scale(3, oc, (1.0, 0.0), 0.5) == pytest.approx((0.5, 1.0))
    assert P.liouville_unscale(3, oc, (0.5, 1.0), 0.5) == pytest.approx((1.0, 0.0))
    ds = P.de_sitter_hat(1.0)
    assert P.liouville_scale(3, ds, (1.0, 0.0), -2.0) == pytest.approx((0.5, 0.25))
    assert np.allclose(P.liouville_matrix(1, ds, -0.3), np.eye(2))
    assert P.liouville_scale(1, oc, (0.3, -2.0), 0.4) == pytest.approx((0.3, -2.0))


def test_even_dimension_needs_positive_factor():
    with pytest.raises(P.SingularScalingError):
        P.liouville_scale(4, P.de_sitter_hat(1.0, sign=-1), (1.0, 0.0), -0.5)
    zero = P.ConformalFactor(P.CHECK, lambda t: 0.0 * t, lambda t: 0.0 * t)
    with pytest.raises(P.SingularScalingError):
        P.liouville_scale(3, zero, (1.0, 0.0), 0.5)


@given(st.integers(1, 7), st.floats(-0.99, -0.01), st.floats(-5, 5), st.floats(-5, 5))
def test_liouville_roundtrip_and_determinant(n, tau, u, du):
    om = P.de_sitter_hat(1.3)
    phi = P.liouville_scale(n, om, (u, du), tau)
    back = P.liouville_unscale(n, om, phi, tau)
    assert back == pytest.approx((u, du), rel=1e-9, abs=1e-9)
    M = P.liouville_matrix(n, om, tau)
    assert M[0, 1] == 0
    assert np.linalg.det(M) == pytest.approx(float(om(tau)) ** (n - 1), rel=1e-9)


def test_profile_validation():
    with pytest.raises(P.ProfileError):
        P.de_sitter_hat(-1.0)
    with pytest.raises(P.ProfileError):
        P.power_law_check(1.0, 1.5)
    with pytest.raises(P.ProfileError):
        P.tabulated_omega(P.CHECK, [0.1, 0.2, 0.3], [1.0, -1.0, 2.0])


def test_tabulated_omega_interpolates_monotone():
    taus = np.linspace(0.1, 1.0, 10)
    om = P.tabulated_omega(P.CHECK, taus, taus**2)
    x = np.linspace(0.1, 1.0, 101)
    y = om(x)
    assert np.all(np.diff(y) >= 0)
    assert np.allclose(om(taus), taus**2)
