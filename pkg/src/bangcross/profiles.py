"""Conformal factors, mass profiles and the Liouville scaling.

Time-dependent profiles live on one side of the bang surface:
``hat`` is ``tau in [tau_-, 0)`` and ``check`` is ``tau in (0, tau_+]``.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import PchipInterpolator

from .quadrature import GradedMesh

HAT, CHECK = "hat", "check"


def side_sign(side: str) -> int:
    if side == HAT:
        return -1
    if side == CHECK:
        return 1
    raise ValueError(f"side must be 'hat' or 'check', got {side!r}")


def eta(side: str) -> int:
    """+1 on the hat side, -1 on the check side."""
    return -side_sign(side)


class ProfileError(ValueError):
    pass


class ConformalTimeError(ProfileError):
    pass


class SingularScalingError(ProfileError):
    pass


class Asymptotics(str, enum.Enum):
    BOUNCE = "bounce"
    CCC_EXPANSION = "ccc_expansion"
    BIG_RIP = "big_rip"
    GENERIC = "generic"


class Integrability(str, enum.Enum):
    L1 = "L1"
    WEIGHTED_L1 = "weighted_L1"
    NEITHER = "neither"

    def at_least_weighted(self) -> bool:
        return self in (Integrability.L1, Integrability.WEIGHTED_L1)


@dataclass(frozen=True)
class ConformalFactor:
    side: str
    omega: Callable[[float], float]
    domega: Callable[[float], float]
    tag: Asymptotics = Asymptotics.GENERIC
    sign: int = 1
    description: str = ""

    def __call__(self, tau):
        return self.omega(tau)


@dataclass(frozen=True)
class MassProfile:
    m: Callable[[float], float]


@dataclass
class EffectiveMassSq:
    """``q = m**2 * Omega**2`` on one side; the class is computed lazily if not given."""

    q: Callable
    side: str
    integrability_class: Optional[Integrability] = None
    extent: float = 1.0
    description: str = ""
    _checked: bool = field(default=False, repr=False)

    def __call__(self, tau):
        return self.q(tau)

    @classmethod
    def from_mass(cls, mass: MassProfile, omega: ConformalFactor, extent: float = 1.0):
        return cls(lambda t: (mass.m(t) * omega.omega(t)) ** 2, omega.side, extent=extent)

    def classify(self, probe_floor: float = 1e-12) -> Integrability:
        if self.integrability_class is None:
            self.integrability_class = classify_integrability(self, probe_floor)
        return self.integrability_class


# --- closed-form families ---------------------------------------------------

def de_sitter_hat(H: float = 1.0, sign: int = 1) -> ConformalFactor:
    """Exact De Sitter ``a(t) = C exp(H t)``: ``Omega(tau) = -sign/(H tau)``."""
    if H <= 0:
        raise ProfileError("Hubble rate must be positive")
    return ConformalFactor(
        HAT,
        lambda t: -sign / (H * np.asarray(t, dtype=float)),
        lambda t: sign / (H * np.asarray(t, dtype=float) ** 2),
        Asymptotics.CCC_EXPANSION,
        sign,
        f"de_sitter(H={H}, sign={sign})",
    )


def power_law_check(C: float, eta_exp: float) -> ConformalFactor:
    """Exact ``a(t) = C t**eta`` big bang, ``0 < eta < 1``."""
    if not (0 < eta_exp < 1) or C <= 0:
        raise ProfileError("power-law big bang needs C > 0 and 0 < eta < 1")
    p = eta_exp / (1 - eta_exp)
    K = C ** (1 / (1 - eta_exp)) * (1 - eta_exp) ** p
    return ConformalFactor(
        CHECK,
        lambda t: K * np.asarray(t, dtype=float) ** p,
        lambda t: K * p * np.asarray(t, dtype=float) ** (p - 1),
        Asymptotics.BOUNCE,
        1,
        f"power_law(C={C}, eta={eta_exp})",
    )


def power_omega(side: str, coef: float, power: float, tag=Asymptotics.GENERIC) -> ConformalFactor:
    """``Omega = coef * |tau|**power`` (power may be negative)."""
    s = side_sign(side)
    return ConformalFactor(
        side,
        lambda t: coef * np.abs(np.asarray(t, dtype=float)) ** power,
        lambda t: coef * power * s * np.abs(np.asarray(t, dtype=float)) ** (power - 1),
        tag,
        int(np.sign(coef)) or 1,
        f"power(coef={coef}, power={power})",
    )


def constant_omega(side: str, value: float = 1.0) -> ConformalFactor:
    return ConformalFactor(
        side,
        lambda t: value + 0.0 * np.asarray(t, dtype=float),
        lambda t: 0.0 * np.asarray(t, dtype=float),
        Asymptotics.GENERIC,
        int(np.sign(value)) or 1,
        f"constant({value})",
    )


def tabulated_omega(side: str, taus, omegas, tag=Asymptotics.GENERIC) -> ConformalFactor:
    """Custom factor from samples, monotone-cubic (PCHIP) interpolation."""
    taus = np.asarray(taus, dtype=float)
    omegas = np.asarray(omegas, dtype=float)
    order = np.argsort(taus)
    taus, omegas = taus[order], omegas[order]
    if np.any(np.diff(taus) <= 0):
        raise ProfileError("tabulated tau samples must be distinct")
    if np.any(omegas == 0) or len(set(np.sign(omegas))) > 1:
        raise ProfileError("tabulated Omega must be nonvanishing with constant sign")
    if np.any(side_sign(side) * taus <= 0):
        raise ProfileError("tabulated samples must lie on the declared side")
    interp = PchipInterpolator(taus, omegas, extrapolate=False)
    deriv = interp.derivative()
    return ConformalFactor(side, interp, deriv, tag, int(np.sign(omegas[0])), "tabulated")


# --- conformal time -----------------------------------------------------------

def _tail_hat(a, da, T, tail):
    """Estimate ``int_T^inf ds/a(s)``."""
    if tail is None or tail == "cut":
        return 0.0
    aT = float(a(T))
    daT = float(da(T))
    if tail == "exponential":
        H = daT / aT
        if H <= 0:
            raise ConformalTimeError("conformal time undefined: scale factor not growing at the cut")
        return 1.0 / (H * aT)
    if tail == "power":
        p = T * daT / aT
    else:
        p = float(tail)
    if p <= 1:
        raise ConformalTimeError(f"conformal time undefined: 1/a decays like s^-{p:.3g}")
    return T / ((p - 1) * aT)


def _num_deriv(f):
    def d(t):
        h = 1e-6 * max(1.0, abs(t))
        return (f(t + h) - f(t - h)) / (2 * h)
    return d


class _ConformalClock:
    """Monotone map ``t -> tau`` with cached inversion."""

    def __init__(self, tau_of_t, t_lo, t_hi_guess, increasing=True):
        self.tau_of_t = tau_of_t
        self.t_lo = t_lo
        self.t_hi_guess = t_hi_guess

    def invert(self, tau):
        f = lambda t: self.tau_of_t(t) - tau
        lo = self.t_lo
        hi = self.t_hi_guess
        while f(hi) < 0:
            lo, hi = hi, hi + 2 * max(1.0, abs(hi - self.t_lo))
            if hi > 1e8:
                raise ConformalTimeError("cannot bracket t(tau)")
        return optimize.brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)


def conformal_time_hat(a: Callable, t_minus: float, cut: float, sign: int = 1,
                       tail="exponential", da: Optional[Callable] = None):
    """Previous-aeon conformal time ``tau(t) = -int_t^inf ds/a(s)``.

    ``cut`` is the finite upper integration limit ``T``; beyond it the tail
    is modelled per ``tail`` (``"exponential"``, ``"power"``, a float
    exponent, or ``"cut"``/``None`` to stop at ``T``).  Returns
    ``(tau_minus, ConformalFactor)``.
    """
    if cut <= t_minus:
        raise ProfileError("cut must exceed t_minus")
    da = da or _num_deriv(a)
    tail_val = _tail_hat(a, da, cut, tail)
    finite_cut = tail is None or tail == "cut"

    def tau_of_t(t):
        if t >= cut:
            if finite_cut:
                return 0.0
            # beyond the cut, the tail model itself
            return -_tail_hat(a, da, t, tail)
        val, _ = integrate.quad(lambda s: 1.0 / a(s), t, cut, epsabs=0, epsrel=1e-13, limit=400)
        return -(val + tail_val)

    tau_minus = tau_of_t(t_minus)
    if not np.isfinite(tau_minus):
        raise ConformalTimeError("conformal time undefined")
    clock = _ConformalClock(tau_of_t, t_minus, cut)

    def omega(tau):
        tau = np.asarray(tau, dtype=float)
        return sign * np.vectorize(lambda x: a(clock.invert(x)))(tau) + 0.0

    def domega(tau):
        def one(x):
            t = clock.invert(x)
            return da(t) * a(t)
        return sign * np.vectorize(one)(np.asarray(tau, dtype=float)) + 0.0

    cf = ConformalFactor(HAT, omega, domega, Asymptotics.CCC_EXPANSION, sign, "conformal_time_hat")
    cf_clock = clock
    object.__setattr__(cf, "description", f"conformal_time_hat(sign={sign}, tail={tail})")
    return tau_minus, _attach_clock(cf, cf_clock)


def conformal_time_check(a: Callable, t_plus: float, da: Optional[Callable] = None,
                         probe: float = 1e-10):
    """Present-aeon conformal time ``tau(t) = int_0^t ds/a(s)``; returns ``(tau_plus, Omega)``."""
    if t_plus <= 0:
        raise ProfileError("t_plus must be positive")
    da = da or _num_deriv(a)
    # local exponent of a near 0: a ~ t^p with p >= 1 is not integrable
    p_loc = np.log(a(probe * 100) / a(probe)) / np.log(100.0)
    if p_loc >= 1 - 1e-3:
        raise ConformalTimeError("conformal time undefined: 1/a not integrable at t=0")

    def tau_of_t(t):
        if t <= 0:
            return 0.0
        val, _ = integrate.quad(lambda s: 1.0 / a(s), 0.0, t, epsabs=0, epsrel=1e-13, limit=400)
        return val

    tau_plus = tau_of_t(t_plus)
    if not np.isfinite(tau_plus):
        raise ConformalTimeError("conformal time undefined")

    def invert(tau):
        f = lambda t: tau_of_t(t) - tau
        hi = t_plus
        while f(hi) < 0:
            hi *= 2
            if hi > 1e12:
                raise ConformalTimeError("cannot bracket t(tau)")
        return optimize.brentq(f, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=1000)

    def omega(tau):
        return np.vectorize(lambda x: a(invert(x)))(np.asarray(tau, dtype=float)) + 0.0

    def domega(tau):
        def one(x):
            t = invert(x)
            return da(t) * a(t)
        return np.vectorize(one)(np.asarray(tau, dtype=float)) + 0.0

    cf = ConformalFactor(CHECK, omega, domega, Asymptotics.BOUNCE, 1, "conformal_time_check")
    return tau_plus, _attach_clock(cf, _ConformalClock(tau_of_t, 0.0, t_plus), invert)


def _attach_clock(cf, clock, invert=None):
    # frozen dataclass: stash the time maps for diagnostics
    object.__setattr__(cf, "tau_of_t", clock.tau_of_t)
    object.__setattr__(cf, "t_of_tau", invert or clock.invert)
    return cf


def reciprocal_residual(omega_hat: ConformalFactor, omega_check: ConformalFactor, tau: float,
                        tau_minus: float = -np.inf, tau_plus: float = np.inf) -> float:
    """``Omega_hat(-tau) * Omega_check(tau) + 1``; zero under the reciprocal proposal."""
    if not (0 < tau <= tau_plus and -tau >= tau_minus):
        raise ProfileError("tau outside the reflected common domain")
    return float(omega_hat(-tau) * omega_check(tau) + 1.0)


# --- integrability ------------------------------------------------------------

def _tail_verdict(increments, ratio):
    """Decide convergence of a series of per-cell integrals shrinking toward 0."""
    inc = np.asarray(increments, dtype=float)
    if not np.all(np.isfinite(inc)):
        return None, np.inf
    tail = inc[-8:]
    if np.all(tail <= 1e-300):
        return True, 0.0
    if np.any(tail <= 0):
        # sign changes or exact zeros in the tail: take the bound from magnitudes
        tail = np.abs(tail) + 1e-300
    # inc_k ~ C * (ratio**k)**beta  =>  log inc linear in k
    k = np.arange(len(tail))
    slope = np.polyfit(k, np.log(tail), 1)[0]
    beta = slope / np.log(ratio)
    if beta > 0.02:
        r = ratio**beta
        return True, tail[-1] * r / (1 - r)
    return False, np.inf


def classify_integrability(q, probe_floor: float = 1e-12, extent: Optional[float] = None,
                           side: Optional[str] = None) -> Integrability:
    """Numerical L1 / |tau|-weighted-L1 verdict for ``q`` near 0.

    Integrates ``|q|`` and ``|q||tau|`` over graded cells from the side
    endpoint down to ``probe_floor`` and fits the decay of the per-cell
    contributions to decide whether the tail converges.
    """
    if isinstance(q, EffectiveMassSq):
        side = side or q.side
        extent = extent or q.extent
        fn = q.q
    else:
        fn = q
    if side is None:
        raise ValueError("side is required for a bare callable")
    extent = extent or 1.0
    mesh = GradedMesh(side_sign(side), extent, ratio=0.5, floor=probe_floor, nodes=12)
    taus = mesh.tau_nodes[1:]  # drop the innermost [0, floor] cell
    with np.errstate(all="ignore"):
        vals = np.abs(np.asarray(fn(taus), dtype=float))
    if not np.all(np.isfinite(vals)):
        warnings.warn("integrability probe hit non-finite values; verdict 'neither'")
        return Integrability.NEITHER
    w = (mesh.widths[1:, None] / 2) * mesh.rule.w[None, :]
    plain = np.sum(w * vals, axis=1)[::-1]          # ordered outer -> inner
    weighted = np.sum(w * vals * np.abs(taus), axis=1)[::-1]
    ok_plain, _ = _tail_verdict(plain, 0.5)
    ok_weighted, _ = _tail_verdict(weighted, 0.5)
    if ok_plain is None or ok_weighted is None:
        warnings.warn("integrability tail fit failed; verdict 'neither'")
        return Integrability.NEITHER
    if ok_plain:
        return Integrability.L1
    if ok_weighted:
        return Integrability.WEIGHTED_L1
    return Integrability.NEITHER


# --- Liouville scaling ----------------------------------------------------------

def _scaling(n: int, omega: ConformalFactor, tau: float):
    p = (n - 1) / 2
    Om = float(omega.omega(tau))
    dOm = float(omega.domega(tau))
    if Om == 0:
        raise SingularScalingError(f"Omega vanishes at tau={tau}")
    if n % 2 == 0 and Om < 0:
        raise SingularScalingError("even n needs a positive conformal factor")
    if p == 0:
        return 1.0, 0.0
    if float(p).is_integer():
        w = Om ** int(p)
        dw = p * Om ** (int(p) - 1) * dOm
    else:
        w = Om**p
        dw = p * Om ** (p - 1) * dOm
    return w, dw


def liouville_matrix(n: int, omega: ConformalFactor, tau: float) -> np.ndarray:
    w, dw = _scaling(n, omega, tau)
    return np.array([[w, 0.0], [dw, w]])


def liouville_scale(n: int, omega: ConformalFactor, u_pair, tau: float):
    """``(u, du) -> (phi, dphi)`` with ``phi = Omega**((n-1)/2) u``."""
    w, dw = _scaling(n, omega, tau)
    u, du = u_pair
    return w * u, dw * u + w * du


def liouville_unscale(n: int, omega: ConformalFactor, phi_pair, tau: float):
    w, dw = _scaling(n, omega, tau)
    phi, dphi = phi_pair
    u = phi / w
    return u, (dphi - dw * u) / w
