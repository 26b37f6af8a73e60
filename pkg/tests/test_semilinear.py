import functools

import numpy as np
import pytest
from scipy.integrate import simpson, solve_ivp

from bangcross import profiles as Pf
from bangcross import riccati as R
from bangcross import transmission as T
from bangcross.mode_evolver import ModeProblem, damped_transfer, regular_transfer
from bangcross.semilinear import (
    CellLog, FieldState3, SemilinearError, SemilinearSpec, TorusGrid3, cross_semilinear, cubic,
    damped_evolve_semilinear, data_norm, energy_functional, evolve_semilinear, gronwall_envelope,
    h1_sq, l2_sq, lipschitz_probe, nonlinearity, state_from_physical, to_fourier, two_sided_mismatch,
)
from bangcross.spectrum import SpectrumSpec

G8 = TorusGrid3(8)


def fuchs_q(side, c2):
    return Pf.EffectiveMassSq(lambda t: c2 / np.abs(t), side, Pf.Integrability.WEIGHTED_L1, extent=1.0)


@functools.lru_cache(maxsize=None)
def pair():
    return R.picard_construct(fuchs_q("hat", 0.25)), R.picard_construct(fuchs_q("check", 1.0))


def spec(grid=G8, kappa=1.0):
    Ah, Ac = pair()
    return SemilinearSpec(grid, Pf.constant_omega("hat"), Pf.constant_omega("check"), fuchs_q("hat", 0.25),
                          fuchs_q("check", 1.0), -1.0, 1.0, kappa=kappa, A_hat=Ah, A_check=Ac)


def smooth_data(grid, amp=0.1, tau=-1.0):
    X = grid.x()
    phi = amp * (np.cos(X[0]) + 0.5 * np.sin(X[1] + X[2]) + 0.3)
    chi = amp * np.cos(X[2] - X[0])
    return state_from_physical(grid, tau, phi, chi)


def band_modes(grid, fh):
    return fh[grid.mask]


def test_grid_validation():
    with pytest.raises(ValueError):
        TorusGrid3(12)
    with pytest.raises(ValueError):
        TorusGrid3(4)
    g = TorusGrid3(16)
    assert g.volume == pytest.approx((2 * np.pi) ** 3)
    assert g.mask.sum() == 11**3
    assert g.sobolev_constant() > 0


def test_nonlinearity_examples():
    g = G8
    ones = to_fourier(g, np.ones((8,) * 3))
    assert np.all(nonlinearity(g, ones, 0.0) == 0)
    nl = nonlinearity(g, ones, 2.0)
    assert nl[0, 0, 0] / 8**3 == pytest.approx(-2.0)
    assert np.abs(nl).sum() - abs(nl[0, 0, 0]) < 1e-10


def test_dealiasing_is_exact_for_single_modes():
    g = G8
    nx, ny, nz = g.ints
    X = g.x()
    bad = 0
    for n in zip(*[a[g.mask] for a in (nx, ny, nz)]):
        k = np.array(n)
        u = np.cos(sum(ki * xi for ki, xi in zip(k, X)))
        c = cubic(g, to_fourier(g, u))
        support = {tuple(s) for s in (k, -k, 3 * k, -3 * k)}
        for idx in zip(*np.nonzero(np.abs(c) > 1e-9)):
            if (int(nx[idx]), int(ny[idx]), int(nz[idx])) not in support:
                bad += 1
    assert bad == 0


def test_cubic_matches_direct_product_when_band_allows():
    g = TorusGrid3(16)
    X = g.x()
    u = 0.3 * np.exp(1j * X[0]) + 0.2 * np.cos(X[1])
    direct = to_fourier(g, np.abs(u) ** 2 * u)
    assert np.allclose(cubic(g, to_fourier(g, u)), direct, atol=1e-10)


def test_energy_examples():
    g = G8
    zero = FieldState3(0.0, np.zeros((8,) * 3, complex), np.zeros((8,) * 3, complex))
    assert energy_functional(g, zero, 1.0) == 0
    one = FieldState3(0.0, to_fourier(g, np.ones((8,) * 3)), np.zeros((8,) * 3, complex))
    assert energy_functional(g, one, 2.0) == pytest.approx(2 * g.volume)


def test_linear_limit_of_regular_evolution():
    g = G8
    q = lambda t: 0.5 / abs(t)
    s0 = smooth_data(g)
    out = evolve_semilinear(g, q, 0.0, s0, (-1.0, -0.2))
    lams = g.k2[g.mask]
    Tm = regular_transfer(ModeProblem(lams, 0.0, q), -1.0, -0.2)
    u, du = Tm.apply(s0.phi[g.mask], s0.chi[g.mask])
    assert np.abs(u - out.phi[g.mask]).max() / 8**3 <= 1e-8
    assert np.abs(du - out.chi[g.mask]).max() / 8**3 <= 1e-8


def test_constant_data_matches_scalar_ode():
    g = TorusGrid3(16)
    c0 = 0.8 + 0.3j
    st = state_from_physical(g, -1.0, np.full((16,) * 3, c0), np.full((16,) * 3, 0.2))
    o = evolve_semilinear(g, lambda t: 0.5, 1.0, st, (-1.0, -0.2))
    ref = solve_ivp(lambda t, y: [y[1], -0.5 * y[0] - abs(y[0]) ** 2 * y[0]], (-1, -0.2), [c0, 0.2 + 0j],
                    method="DOP853", rtol=1e-13, atol=1e-15).y[:, -1]
    assert abs(o.phi[0, 0, 0] / 16**3 - ref[0]) <= 1e-7
    assert abs(o.chi[0, 0, 0] / 16**3 - ref[1]) <= 1e-7


def test_spectral_self_convergence():
    taus = np.linspace(-1.0, -0.2, 5)
    norms = []
    for N in (16, 32):
        g = TorusGrid3(N)
        states = evolve_semilinear(g, lambda t: 0.5, 1.0, smooth_data(g, amp=0.3), (-1.0, -0.2), t_eval=taus)
        norms.append(np.array([np.sqrt(h1_sq(g, s.phi)) for s in states]))
    assert np.max(np.abs(norms[0] - norms[1])) <= 1e-5


def test_regular_rejects_surface():
    with pytest.raises(SemilinearError):
        evolve_semilinear(G8, None, 1.0, smooth_data(G8), (-1.0, 0.5))


def test_linear_energy_identity():
    g = G8
    taus = np.linspace(0.1, 1.1, 801)
    states = evolve_semilinear(g, None, 0.0, smooth_data(g, tau=0.1), (0.1, 1.1), t_eval=taus)
    E = np.array([h1_sq(g, s.phi) + l2_sq(g, s.chi) for s in states])
    # dE/dtau = 2 Re <phi, chi> in the shifted (+1) bookkeeping with q = rho = 0
    rate = np.array([2 * g.volume / g.N**6 * np.real(np.sum(s.phi * np.conj(s.chi))) for s in states])
    assert abs(E[-1] - E[0] - simpson(rate, x=taus)) <= 1e-7


def test_gronwall_envelope():
    g = G8
    taus = np.linspace(0.2, 1.2, 40)
    q = lambda t: 0.4 / t
    states = evolve_semilinear(g, q, 1.0, smooth_data(g, amp=0.5, tau=0.2), (0.2, 1.2), t_eval=taus)
    assert gronwall_envelope(g, 1.0, q, states) >= 0


@pytest.mark.parametrize("side", ["hat", "check"])
def test_damped_linear_limit(side):
    g = G8
    Ah, Ac = pair()
    A = Ah if side == "hat" else Ac
    q = fuchs_q(side, 0.25 if side == "hat" else 1.0)
    t0 = -0.1 if side == "hat" else 0.1
    s = smooth_data(g)
    p, dp = damped_evolve_semilinear(g, q, 0.0, A, (s.phi, s.chi), (t0, 0.0))
    Tm = damped_transfer(ModeProblem(g.k2[g.mask], 0.0, q), A, t0, 0.0)
    u, du = Tm.apply(s.phi[g.mask], s.chi[g.mask])
    assert np.abs(u - p[g.mask]).max() / 8**3 <= 1e-7
    assert np.abs(du - dp[g.mask]).max() / 8**3 <= 1e-7


def test_damped_picard_contracts():
    g = G8
    Ah, _ = pair()
    s = smooth_data(g, amp=0.05)
    log = CellLog()
    damped_evolve_semilinear(g, fuchs_q("hat", 0.25), 1.0, Ah, (s.phi, s.chi), (-0.1, 0.0), log=log)
    assert log.windows and max(log.bounds) < 1
    assert max(log.ratios) < 1


@functools.lru_cache(maxsize=None)
def crossing(kappa, amp=0.1, record=False):
    return cross_semilinear(spec(kappa=kappa), smooth_data(G8, amp), record=record)


def test_kappa_zero_matches_linear_transmission():
    g = G8
    Ah, Ac = pair()
    res = crossing(0.0)
    ts = T.TransmissionSpec(3, SpectrumSpec.flat_torus([2 * np.pi] * 3),
                            T.SideProfile(Pf.constant_omega("hat"), fuchs_q("hat", 0.25)),
                            T.SideProfile(Pf.constant_omega("check"), fuchs_q("check", 1.0)),
                            80.0, -1.0, 1.0, A_hat=Ah, A_check=Ac)
    lams = g.k2[g.mask]
    ul, ind = np.unique(np.round(lams, 9), return_inverse=True)
    M = T.map_transfer(ts, ul).M[ind]
    d = smooth_data(g)
    p, c = d.phi[g.mask], d.chi[g.mask]
    u = M[:, 0, 0] * p + M[:, 0, 1] * c
    du = M[:, 1, 0] * p + M[:, 1, 1] * c
    assert np.abs(u - res.state.phi[g.mask]).max() / 8**3 <= 1e-6
    assert np.abs(du - res.state.chi[g.mask]).max() / 8**3 <= 1e-6


def test_small_amplitude_scaling():
    # nonlinear correction is cubic in the amplitude
    dev = []
    for amp in (0.1, 0.05):
        lin, non = crossing(0.0, amp), crossing(1.0, amp)
        dev.append(data_norm(G8, non.state.phi - lin.state.phi, non.state.chi - lin.state.chi))
    assert dev[0] / dev[1] == pytest.approx(8.0, rel=0.05)


def test_two_sided_extrapolation():
    res = crossing(1.0, 0.1, True)
    assert two_sided_mismatch(spec(), res) <= 1e-5
    with pytest.raises(ValueError):
        two_sided_mismatch(spec(), crossing(1.0))


def test_lipschitz_probe_linear_is_zeta_independent():
    r = lipschitz_probe(spec(kappa=0.0), smooth_data(G8))
    assert r.spread <= 1e-8


def test_lipschitz_probe_nonlinear_finite():
    r = lipschitz_probe(spec(), smooth_data(G8, amp=0.3))
    assert np.all(np.isfinite(r.ratios)) and r.spread < 5e-2
    z = FieldState3(-1.0, np.zeros((8,) * 3, complex), np.zeros((8,) * 3, complex))
    r0 = lipschitz_probe(spec(), z, zetas=(1e-2,))
    assert np.isfinite(r0.ratios[0])


def test_spec_validation():
    Ah, Ac = pair()
    with pytest.raises(ValueError):
        spec(kappa=-1.0)
    with pytest.raises(SemilinearError):
        SemilinearSpec(G8, Pf.constant_omega("hat"), Pf.constant_omega("check"), fuchs_q("hat", 1),
                       fuchs_q("check", 1), -1.0, 1.0, path="simple")
    with pytest.raises(SemilinearError):
        cross_semilinear(spec(), smooth_data(G8, tau=-0.5))
