"""Frobenius solutions for ``q = c**2/|tau| + F(tau)`` with polynomial ``F``.

With ``kappa = c**2 * sign(tau)`` the mode equation reads
``phi'' + (lam + kappa/tau + F) phi = 0``: a regular singular point with
exponents 0 and 1 and a logarithmic second branch

    phi_1 = tau h1(tau),   phi_2 = h2(tau) - kappa tau h1(tau) ln|tau|,

where ``kappa tau = c**2 |tau|``.  ``h1``/``h2`` are power series whose
coefficients follow from substitution.  The ``k`` series are the same with
``lam = 0``; they give closed-form Riccati solutions ``A = -alpha'/alpha``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from numpy.polynomial import polynomial as P

from .profiles import EffectiveMassSq, Integrability, eta, side_sign
from .riccati import Provenance, RiccatiSolution, tabulate


class SeriesRadiusError(ValueError):
    pass


class NonIntegrableError(ValueError):
    def __init__(self, msg, A=None):
        super().__init__(msg)
        self.A = A


@dataclass(frozen=True)
class FuchsProblem:
    lam: float
    c2: float
    side: str
    F: tuple = ()              # coefficients of F(tau) = sum F_k tau**k
    N: int = 20
    radius_guard: float = 0.5
    b1: float = 0.0            # free coefficient h2'(0)

    def __post_init__(self):
        if self.c2 <= 0:
            raise ValueError("c2 must be positive")
        if self.N < 2:
            raise ValueError("truncation N must be >= 2")
        side_sign(self.side)
        object.__setattr__(self, "F", tuple(float(f) for f in self.F))

    @property
    def kappa(self) -> float:
        return side_sign(self.side) * self.c2

    def massless(self) -> "FuchsProblem":
        return replace(self, lam=0.0)

    def q(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self.c2 / np.abs(tau) + P.polyval(tau, self.F) if self.F else self.c2 / np.abs(tau)

    def effective_mass(self, extent: float = 0.5) -> EffectiveMassSq:
        return EffectiveMassSq(self.q, self.side, Integrability.WEIGHTED_L1, extent=extent,
                               description=f"c2/|tau| (c2={self.c2})")


@dataclass(frozen=True)
class SeriesPair:
    a: np.ndarray              # h1 coefficients a_0..a_N
    b: np.ndarray              # h2 coefficients b_0..b_N
    kappa: float               # log coupling, c**2 times the side sign
    h2_prime0: float


def _conv(F, coeffs, j):
    """``sum_k F_k coeffs[j-k]`` over valid ``k``."""
    return sum(Fk * coeffs[j - k] for k, Fk in enumerate(F) if 0 <= j - k < len(coeffs))


def h1_series(problem: FuchsProblem) -> np.ndarray:
    N, kap, lam, F = problem.N, problem.kappa, problem.lam, problem.F
    a = np.zeros(N + 1)
    a[0] = 1.0
    for j in range(1, N + 1):
        rhs = -kap * a[j - 1]
        if j >= 2:
            rhs -= lam * a[j - 2] + _conv(F, a[: j - 1], j - 2)
        a[j] = rhs / (j * (j + 1))
    return a


def h2_series(problem: FuchsProblem, a: Optional[np.ndarray] = None) -> SeriesPair:
    """``b_0 = 1``, ``b_1 = problem.b1`` and for ``m >= 0``

    ``(m+2)(m+1) b_{m+2} = kappa (2m+3) a_{m+1} - kappa b_{m+1} - lam b_m - (F*b)_m``.
    """
    if a is None:
        a = h1_series(problem)
    N, kap, lam, F = problem.N, problem.kappa, problem.lam, problem.F
    b = np.zeros(N + 1)
    b[0], b[1] = 1.0, problem.b1
    for m in range(0, N - 1):
        rhs = kap * (2 * m + 3) * a[m + 1] - kap * b[m + 1] - lam * b[m] - _conv(F, b[: m + 1], m)
        b[m + 2] = rhs / ((m + 2) * (m + 1))
    return SeriesPair(a, b, kap, problem.b1)


def series(problem: FuchsProblem) -> SeriesPair:
    return h2_series(problem)


def _guard(problem, tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau == 0) or np.any(np.abs(tau) >= problem.radius_guard):
        raise SeriesRadiusError(f"|tau| must lie in (0, {problem.radius_guard})")
    if np.any(side_sign(problem.side) * tau < 0):
        raise SeriesRadiusError("tau on the wrong side")
    return tau


def basis(problem: FuchsProblem, tau, sp: Optional[SeriesPair] = None, second: bool = False):
    """Values of ``(phi_1, phi_1', phi_2, phi_2')`` (and second derivatives if asked)."""
    tau = _guard(problem, tau)
    sp = sp or series(problem)
    a, b, kap = sp.a, sp.b, sp.kappa
    da, dda = P.polyder(a), P.polyder(a, 2)
    db, ddb = P.polyder(b), P.polyder(b, 2)
    h1, h1p, h1pp = P.polyval(tau, a), P.polyval(tau, da), P.polyval(tau, dda)
    h2, h2p, h2pp = P.polyval(tau, b), P.polyval(tau, db), P.polyval(tau, ddb)
    L = np.log(np.abs(tau))
    u, up, upp = tau * h1, h1 + tau * h1p, 2 * h1p + tau * h1pp
    v = h2 - kap * u * L
    vp = h2p - kap * up * L - kap * h1
    out = (u, up, v, vp)
    if second:
        vpp = h2pp - kap * (upp * L + 2 * up / tau - u / tau**2)
        out = out + (upp, vpp)
    return out


def eval_solution(problem: FuchsProblem, C1, C2, tau, sp: Optional[SeriesPair] = None):
    u, up, v, vp = basis(problem, tau, sp)
    return C1 * u + C2 * v, C1 * up + C2 * vp


def series_residual(problem: FuchsProblem, C1, C2, tau, sp: Optional[SeriesPair] = None):
    """``phi'' + (lam + c2/|tau| + F) phi`` for the assembled truncated solution."""
    u, up, v, vp, upp, vpp = basis(problem, tau, sp, second=True)
    phi = C1 * u + C2 * v
    phipp = C1 * upp + C2 * vpp
    return phipp + (problem.lam + problem.q(tau)) * phi


def wronskian(problem: FuchsProblem, tau, sp: Optional[SeriesPair] = None):
    u, up, v, vp = basis(problem, tau, sp)
    return u * vp - up * v


def extract_constants(problem: FuchsProblem, taus, phi, dphi, sp: Optional[SeriesPair] = None,
                      holdout: bool = True):
    """Least-squares ``(C1, C2)`` on the exact basis from samples ``(phi, phi')``.

    With more than one sample the last one is held out and its
    reconstruction error is returned as the third element.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=complex))
    dphi = np.atleast_1d(np.asarray(dphi, dtype=complex))
    fit = slice(None, -1) if (holdout and len(taus) > 1) else slice(None)
    u, up, v, vp = basis(problem, taus, sp)
    M = np.concatenate([np.column_stack([u[fit], v[fit]]), np.column_stack([up[fit], vp[fit]])])
    y = np.concatenate([phi[fit], dphi[fit]])
    (C1, C2), *_ = np.linalg.lstsq(M.astype(complex), y, rcond=None)
    if not (np.isfinite(C1) and np.isfinite(C2)):
        raise ValueError("constant fit did not converge")
    err = 0.0
    if holdout and len(taus) > 1:
        p, dp = C1 * u[-1] + C2 * v[-1], C1 * up[-1] + C2 * vp[-1]
        err = float(max(abs(p - phi[-1]), abs(dp - dphi[-1])))
    return complex(C1), complex(C2), err


# --- Riccati closed form ------------------------------------------------------------

def closed_form_A(problem: FuchsProblem, D1: float, D2: float, sp: Optional[SeriesPair] = None):
    """``tau -> -alpha'/alpha`` with ``alpha = D1 tau k1 + D2 [k2 - kappa tau k1 ln|tau|]``."""
    kp = problem.massless()
    sp = sp or series(kp)

    def A(tau):
        u, up, v, vp = basis(kp, tau, sp)
        return -(D1 * up + D2 * vp) / (D1 * u + D2 * v)

    return A


def riccati_closed_form(problem: FuchsProblem, D1: float, D2: float, h: float = 0.1,
                        nodes: int = 20) -> RiccatiSolution:
    """Tabulated closed-form Riccati solution on the window ``|tau| <= h``."""
    A = closed_form_A(problem, D1, D2)
    if D2 == 0:
        raise NonIntegrableError("D2 = 0 gives the non-integrable branch A ~ -1/tau", A)
    if h >= problem.radius_guard:
        raise SeriesRadiusError("window exceeds the series radius guard")
    s = side_sign(problem.side)
    # alpha must not vanish on the window
    probe = s * np.geomspace(1e-12, h, 400)
    kp = problem.massless()
    u, _, v, _ = basis(kp, probe)
    alpha = D1 * u + D2 * v
    if np.any(np.sign(alpha) != np.sign(D2)):
        raise NonIntegrableError("alpha vanishes inside the window; shrink h", A)
    return tabulate(problem.side, h, A, provenance=Provenance.FAMILY, nodes=nodes)


def asymptotic_A(problem: FuchsProblem, D1: float, D2: float, tau):
    """Leading behaviour ``-eta c2 ln|tau| - D1/D2 - k2'(0) - eta c2``."""
    e = eta(problem.side)
    k2p = problem.b1
    return -e * problem.c2 * np.log(np.abs(tau)) - D1 / D2 - k2p - e * problem.c2


def D_ratio_from_A(problem: FuchsProblem, A_value: float, tau0: float) -> float:
    """``D1/D2`` of the closed-form member taking value ``A_value`` at ``tau0``."""
    u, up, v, vp = basis(problem.massless(), tau0)
    den = up + A_value * u
    if den == 0:
        raise NonIntegrableError("D2 = 0 member at this anchor")
    return float(-(vp + A_value * v) / den)


def D_ratio_of(problem: FuchsProblem, A: RiccatiSolution, tau0: Optional[float] = None) -> float:
    """Identify a tabulated Riccati solution with a closed-form member."""
    if tau0 is None:
        tau0 = A.sign * min(0.5 * A.h, 0.05)
    return D_ratio_from_A(problem, float(A.A(tau0)), tau0)


# --- transmission rule -----------------------------------------------------------------

def oracle_transmission(C1_hat, C2_hat, delta):
    return C1_hat + delta * C2_hat, C2_hat


def delta_from_series(hat: FuchsProblem, check: FuchsProblem, D_hat: tuple, D_check: tuple) -> float:
    """``h2'(0)`` and ``k2'(0)`` differences plus the ``D1/D2`` difference.

    ``D_hat``/``D_check`` are ``(D1, D2)`` pairs; ``D2`` must be nonzero.
    """
    if D_hat[1] == 0 or D_check[1] == 0:
        raise NonIntegrableError("D2 = 0 member has no finite delta")
    h2h = series(hat).h2_prime0
    h2c = series(check).h2_prime0
    k2h = series(hat.massless()).h2_prime0
    k2c = series(check.massless()).h2_prime0
    return float(h2h - h2c + k2c - k2h + D_check[0] / D_check[1] - D_hat[0] / D_hat[1])


def bang_pair_of(problem: FuchsProblem, C1, C2, D_ratio: float):
    """Predicted ``(lim phi, lim(phi' + A phi))`` for the member with ``D1/D2 = D_ratio``."""
    k2p = series(problem.massless()).h2_prime0
    return C2, C1 + C2 * (problem.b1 - k2p - D_ratio)
