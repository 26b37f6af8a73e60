import functools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bangcross import riccati as R
from bangcross.profiles import EffectiveMassSq, Integrability


def const_q(side, c, extent=1.0):
    return EffectiveMassSq(lambda t: c + 0.0 * np.asarray(t, float), side, Integrability.L1, extent=extent)


def fuchs_q(side, c2, extent=1.0):
    return EffectiveMassSq(lambda t: c2 / np.abs(t), side, Integrability.WEIGHTED_L1, extent=extent)


@functools.lru_cache(maxsize=None)
def fuchs_solution(side, c2):
    return R.picard_construct(fuchs_q(side, c2))


def sgn(side):
    return -1 if side == "hat" else 1


def test_zero_q_gives_zero_solution():
    A = R.picard_construct(const_q("check", 0.0))
    assert np.max(np.abs(A.values)) == 0.0
    assert float(R.residual(A, lambda t: 0.0 * t, 0.3)[0]) == pytest.approx(0.0, abs=1e-14)


def test_unit_q_tangent():
    A = R.picard_construct(const_q("check", 1.0), eps=1.0)
    assert A.tau_eps == pytest.approx(1 / np.sqrt(2), abs=1e-12)
    tt = np.linspace(1e-6, A.h, 200)
    assert np.max(np.abs(A.A(tt) - np.tan(tt - A.tau_eps))) <= 1e-8


def test_tangent_residual():
    tan = R.tabulate("check", 1.0, np.tan)
    assert abs(R.residual(tan, lambda t: 1.0 + 0 * t, 0.3)[0]) <= 1e-7


@pytest.mark.parametrize("side", ["hat", "check"])
@pytest.mark.parametrize("c2", [0.25, 1.0])
def test_fuchs_picard_invariants(side, c2):
    q = fuchs_q(side, c2)
    A = fuchs_solution(side, c2)
    s = sgn(side)
    # anchor: weighted mass c2 * |tau_eps| = 1/4
    assert A.tau_eps == pytest.approx(s / (4 * c2), rel=1e-10)
    taus = s * np.logspace(np.log10(A.h) - 0.01, -4, 30)
    assert np.max(np.abs(R.residual(A, q, taus))) <= 1e-6
    assert abs(R.residual(A, q, -1e-3 if side == "hat" else 1e-3)[0]) <= 1e-6
    assert R.picard_bounds(A, q, taus).min() >= -1e-8
    eps = A.eps
    assert A.l1_norm() <= eps / (1 + eps) + 1e-8


@pytest.mark.parametrize("c2", [0.25, 1.0])
def test_log_asymptotics_and_probe(c2):
    hat, check = fuchs_solution("hat", c2), fuchs_solution("check", c2)
    # A(tau) + eta c2 ln|tau| bounded near zero
    s = np.logspace(-6, -12, 7)
    assert np.ptp(hat.A(-s) - c2 * np.log(1 / s)) < 1e-3
    assert np.ptp(check.A(s) + c2 * np.log(1 / s)) < 1e-3
    ph, pc = R.divergence_probe(hat), R.divergence_probe(check)
    assert ph.coefficient == pytest.approx(c2, rel=1e-3) and ph.growth == "+inf"
    assert pc.coefficient == pytest.approx(-c2, rel=1e-3) and pc.growth == "-inf"


def test_l1_ivp_is_bounded():
    q = EffectiveMassSq(lambda t: 0.5 / np.sqrt(np.abs(t)) + 0.3, "check", extent=1.0)
    A = R.ivp_solve(q, 0.4)
    assert R.divergence_probe(A).growth == "bounded"
    assert float(A.A(1e-12)) == pytest.approx(0.4, abs=1e-5)


def test_ivp_examples():
    Z = R.ivp_solve(const_q("check", 0.0), 0.0)
    assert np.max(np.abs(Z.values)) == 0
    S = R.ivp_solve(const_q("check", 0.0), 1.0)
    tt = np.linspace(0, S.h, 50)
    assert S.h < 1 / 9
    assert np.max(np.abs(S.A(tt) - 1 / (1 - tt))) <= 1e-10
    T = R.ivp_solve(const_q("check", 1.0), 0.0)
    tt = np.linspace(0, T.h, 50)
    assert np.max(np.abs(T.A(tt) - np.tan(tt))) <= 1e-10
    H = R.ivp_solve(const_q("hat", 1.0), 0.0)
    tt = -np.linspace(0, H.h, 50)
    assert np.max(np.abs(H.A(tt) - np.tan(tt))) <= 1e-10


def test_refusals():
    with pytest.raises(R.RiccatiError):
        R.ivp_solve(fuchs_q("check", 1.0))
    sq = EffectiveMassSq(lambda t: 1 / t**2, "check", Integrability.NEITHER, extent=1.0)
    with pytest.raises(R.RiccatiError):
        R.picard_construct(sq)


def test_shift_examples():
    A = fuchs_solution("hat", 1.0)
    assert R.shift_to_alpha(A, 0.0) is A
    Z = R.zero_solution("check", 1.0)
    B = R.shift_to_alpha(Z, 1.0)
    tt = np.linspace(0, B.h, 50)
    assert B.h < 1
    assert np.max(np.abs(B.A(tt) - 1 / (1 - tt))) <= 1e-9


@pytest.mark.parametrize("side", ["hat", "check"])
@pytest.mark.parametrize("alpha", [-0.7, 0.3, 2.0])
def test_shift_limit_and_residual(side, alpha):
    A = fuchs_solution(side, 0.25)
    q = fuchs_q(side, 0.25)
    B = R.shift_to_alpha(A, alpha)
    assert R.limit_difference(B, A) == pytest.approx(alpha, abs=1e-8)
    assert R.limit_difference(B, A, "richardson") == pytest.approx(alpha, abs=1e-2)
    taus = sgn(side) * np.logspace(np.log10(B.h) - 0.05, -4, 12)
    assert np.max(np.abs(R.residual(B, q, taus))) <= 1e-6


def test_uniqueness_of_shifted_family():
    A = fuchs_solution("check", 1.0)
    B1 = R.shift_to_alpha(R.shift_to_alpha(A, 0.2), 0.3)
    B2 = R.shift_to_alpha(A, 0.5)
    h = min(B1.h, B2.h)
    tt = np.geomspace(1e-10, h, 60)
    assert np.max(np.abs(B1.A(tt) - B2.A(tt))) <= 1e-8


def test_uniqueness_across_epsilon():
    # two anchors give members of one family; the limit difference identifies them
    q = fuchs_q("hat", 1.0)
    A1 = R.picard_construct(q, eps=1.0)
    A2 = R.picard_construct(q, eps=0.3)
    d = R.limit_difference(A2, A1)
    B = R.shift_to_alpha(A1, d)
    tt = -np.geomspace(1e-10, min(B.h, A2.h), 40)
    assert np.max(np.abs(B.A(tt) - A2.A(tt))) <= 1e-7


def test_singular_member_behaves_like_reciprocal():
    A = fuchs_solution("check", 1.0)
    S = R.singular_member(A)
    tt = np.array([1e-6, 1e-8, 1e-10])
    assert np.allclose(tt * S(tt), -1.0, atol=1e-4)


def test_integrate_A_examples():
    assert R.integrate_A(lambda t: 0 * t, -1, 0) == 0
    c2, t = 0.7, 0.3
    got = R.integrate_A(lambda s: -c2 * np.log(np.abs(s)), 0.0, t)
    assert got == pytest.approx(-c2 * (t * np.log(t) - t), rel=1e-10)
    A = fuchs_solution("hat", 0.25)
    assert R.integrate_A(A, -0.1, 0.0) == pytest.approx(
        R.integrate_A(lambda s: A.A(s), -0.1, 0.0), rel=1e-9)


def test_mesh_refinement_of_integral():
    q = fuchs_q("check", 1.0)
    coarse = R.picard_construct(q, nodes=12)
    fine = R.picard_construct(q, nodes=16)
    assert abs(coarse.l1_norm() - fine.l1_norm()) <= 1e-9
    assert abs(float(coarse.intA0(0.2)) - float(fine.intA0(0.2))) <= 1e-9


def test_table_export():
    A = fuchs_solution("check", 0.25)
    T = A.table()
    assert T.shape[1] == 3
    assert np.allclose(T[:, 1], A.A(T[:, 0]))


@settings(max_examples=15)
@given(st.floats(0.05, 3.0), st.sampled_from(["hat", "check"]), st.floats(0.1, 4.0))
def test_picard_bounds_property(c, side, eps):
    q = const_q(side, c)
    A = R.picard_construct(q, eps=eps)
    taus = np.linspace(A.tau_eps, 0, 12)[1:-1]
    assert R.picard_bounds(A, q, taus).min() >= -1e-9
    assert A.l1_norm() <= eps / (1 + eps) + 1e-9
