"""Integrable solutions of ``A' - A**2 = q`` near the bang surface.

A solution is stored as its values on the Gauss nodes of a graded mesh
covering the side interval between ``sign*h`` and 0, together with the
antiderivative ``intA0(tau) = int_0^tau A``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize
from scipy.differentiate import derivative

from .profiles import EffectiveMassSq, Integrability, eta, side_sign
from .quadrature import (GradedMesh, PiecewiseTable, integrate_between,
                         outer_integrals, zero_integrals)

DEFAULT_NODES = 20
DEFAULT_FLOOR = 1e-12


class RiccatiError(RuntimeError):
    pass


class Provenance(str, enum.Enum):
    PICARD = "picard"
    IVP = "ivp"
    FAMILY = "family"


@dataclass(frozen=True)
class RiccatiSolution:
    side: str
    h: float
    tau_eps: float
    mesh: GradedMesh = field(repr=False)
    values: np.ndarray = field(repr=False)       # A at mesh nodes
    int_values: np.ndarray = field(repr=False)   # int_0^tau A at mesh nodes
    provenance: Provenance = Provenance.PICARD
    eps: Optional[float] = None
    alpha: float = 0.0
    base: Optional["RiccatiSolution"] = field(default=None, repr=False)
    iterations: int = 0
    sup_change: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "_A", PiecewiseTable(self.mesh, self.values))
        object.__setattr__(self, "_I", PiecewiseTable(self.mesh, self.int_values))

    def A(self, tau):
        return self._A(tau)

    def intA0(self, tau):
        return self._I(tau)

    __call__ = A

    @property
    def sign(self) -> int:
        return side_sign(self.side)

    @property
    def taus(self) -> np.ndarray:
        return self.mesh.tau_nodes

    def l1_norm(self) -> float:
        return self.mesh.integrate(np.abs(self.values))

    def table(self) -> np.ndarray:
        """``(tau, A, intA0)`` rows ordered outward from 0."""
        return np.column_stack([self.taus.ravel(), self.values.ravel(), self.int_values.ravel()])


def _mesh(side, h, nodes, floor=DEFAULT_FLOOR):
    return GradedMesh(side_sign(side), float(h), ratio=0.5, floor=floor, nodes=nodes)


def _int_from_zero(mesh, values):
    F, _ = mesh.cumulative_from_zero(values)
    return mesh.sign * F


def tabulate(side: str, h: float, A: Callable, provenance=Provenance.IVP, nodes=DEFAULT_NODES,
             **kw) -> RiccatiSolution:
    """Wrap a closed-form ``A(tau)`` (test oracles, exact profiles)."""
    mesh = _mesh(side, h, nodes)
    vals = np.asarray(A(mesh.tau_nodes), dtype=float)
    return RiccatiSolution(side, float(h), kw.pop("tau_eps", side_sign(side) * h), mesh, vals,
                           _int_from_zero(mesh, vals), provenance, **kw)


def zero_solution(side: str, h: float) -> RiccatiSolution:
    return tabulate(side, h, lambda t: np.zeros_like(t))


def _q_fn(q, sign):
    fn = q.q if isinstance(q, EffectiveMassSq) else q
    return lambda s: np.asarray(fn(sign * np.asarray(s)), dtype=float) + 0.0 * np.asarray(s)


def _extent(q, extent):
    if extent is not None:
        return float(extent)
    return float(getattr(q, "extent", 1.0))


def weighted_mass(q, side, s, nodes=DEFAULT_NODES) -> float:
    """``int_0^s |q| |tau| dtau`` on the given side."""
    if s <= 0:
        return 0.0
    f = _q_fn(q, side_sign(side))
    mesh = _mesh(side, s, nodes)
    sv = mesh.s_nodes
    return mesh.integrate(np.abs(f(sv)) * sv)


def anchor_for(q, side, eps, extent=None, nodes=DEFAULT_NODES) -> float:
    """Side-signed ``tau_eps``: the largest ``|tau|`` (within the side) with
    weighted mass ``<= eps/(1+eps)**2``, found by bisection."""
    target = eps / (1 + eps) ** 2
    ext = _extent(q, extent)
    if weighted_mass(q, side, ext, nodes) <= target:
        return side_sign(side) * ext
    # bracket by decades from the outer end; avoids evaluating q at absurdly small |tau|
    hi = ext
    lo = ext / 10
    while weighted_mass(q, side, lo, nodes) > target:
        hi, lo = lo, lo / 10
        if lo < 1e-200:
            raise RiccatiError("weighted mass does not vanish toward the surface")
    s = optimize.brentq(lambda x: weighted_mass(q, side, x, nodes) - target, lo, hi,
                        xtol=1e-15 * hi, rtol=1e-14, maxiter=300)
    return side_sign(side) * s


def _require_class(q, side, allowed):
    if isinstance(q, EffectiveMassSq):
        cls = q.classify()
        if cls not in allowed:
            raise RiccatiError(f"effective mass classified {cls.value}; need one of "
                               f"{[a.value for a in allowed]}")


def picard_construct(q, side: Optional[str] = None, eps: float = 1.0, tol: float = 1e-10,
                     max_iter: int = 500, nodes: int = DEFAULT_NODES,
                     extent: Optional[float] = None) -> RiccatiSolution:
    """Integrable solution anchored at ``tau_eps`` by Picard iteration
    ``A <- int_{tau_eps}^tau (q + A**2)``."""
    side = side or q.side
    _require_class(q, side, (Integrability.L1, Integrability.WEIGHTED_L1))
    if eps <= 0:
        raise ValueError("eps must be positive")
    sign = side_sign(side)
    tau_eps = anchor_for(q, side, eps, extent, nodes)
    mesh = _mesh(side, abs(tau_eps), nodes)
    Q = outer_integrals(mesh, _q_fn(q, sign))
    A = np.zeros_like(Q)
    change = np.inf
    for it in range(1, max_iter + 1):
        G = mesh.cumulative_from_outer(A * A)
        A_new = -sign * (Q + G)
        change = float(np.max(np.abs(A_new - A)))
        A = A_new
        if change < tol:
            break
    else:
        raise RiccatiError(f"Picard iteration did not converge; last sup-change {change:.3e}")
    return RiccatiSolution(side, abs(tau_eps), tau_eps, mesh, A, _int_from_zero(mesh, A),
                           Provenance.PICARD, eps=eps, iterations=it, sup_change=change)


def ivp_solve(q, alpha: float = 0.0, tol: float = 1e-12, side: Optional[str] = None,
              h: Optional[float] = None, max_iter: int = 500,
              nodes: int = DEFAULT_NODES) -> RiccatiSolution:
    """Solution with ``A(0) = alpha`` for ``q`` in L1, on a contraction-sized window."""
    side = side or q.side
    _require_class(q, side, (Integrability.L1,))
    sign = side_sign(side)
    f = _q_fn(q, sign)
    hmax = 0.99 / (2 + abs(alpha)) ** 2
    if h is not None:
        hmax = min(hmax, h)
    hmax = min(hmax, _extent(q, None) if isinstance(q, EffectiveMassSq) else hmax)
    # shrink until int |q| <= 1 on the window
    while np.abs(zero_integrals(_mesh(side, hmax, nodes), lambda s: np.abs(f(s))))[-1, -1] > 1:
        hmax /= 2
    mesh = _mesh(side, hmax, nodes)
    Qz = sign * zero_integrals(mesh, f)
    A = np.full_like(Qz, alpha)
    change = np.inf
    for it in range(1, max_iter + 1):
        A_new = alpha + Qz + _int_from_zero(mesh, A * A)
        change = float(np.max(np.abs(A_new - A)))
        A = A_new
        if change < tol:
            break
    else:
        raise RiccatiError(f"IVP fixed point did not converge; last sup-change {change:.3e}")
    return RiccatiSolution(side, hmax, sign * hmax, mesh, A, _int_from_zero(mesh, A),
                           Provenance.IVP, alpha=alpha, iterations=it, sup_change=change)


def _shift_on(A_eps: RiccatiSolution, alpha: float, s_out: float):
    mesh = _mesh(A_eps.side, s_out, A_eps.mesh.nodes, A_eps.mesh.floor)
    taus = mesh.tau_nodes
    I = A_eps.intA0(taus)
    E = np.exp(2 * I)
    F0, F0_edges = mesh.cumulative_from_zero(E)
    # int_tau^0 e^{2I} = -sign * int_0^s e^{2I} ds
    D = 1 - alpha * mesh.sign * F0
    D_edges = 1 - alpha * mesh.sign * F0_edges
    return mesh, taus, I, E, D, D_edges


def shift_to_alpha(A_eps: RiccatiSolution, alpha: float) -> RiccatiSolution:
    """The integrable solution whose difference with ``A_eps`` tends to ``alpha`` at 0."""
    if alpha == 0:
        return A_eps
    s_out = A_eps.h
    for _ in range(60):
        mesh, taus, I, E, D, D_edges = _shift_on(A_eps, alpha, s_out)
        if np.all(D > 0) and np.all(D_edges > 0):
            break
        bad = np.concatenate([mesh.s_nodes[D <= 0], mesh.edges[D_edges <= 0]])
        s_out = 0.5 * float(np.min(bad))
    else:
        raise RiccatiError("no window keeps the shift denominator positive")
    vals = A_eps.A(taus) + alpha * E / D
    ints = I - np.log(D)
    base = A_eps.base if A_eps.provenance == Provenance.FAMILY else A_eps
    total_alpha = alpha + (A_eps.alpha if A_eps.provenance == Provenance.FAMILY else 0.0)
    return RiccatiSolution(A_eps.side, s_out, A_eps.tau_eps, mesh, vals, ints, Provenance.FAMILY,
                           eps=A_eps.eps, alpha=total_alpha, base=base)


def singular_member(A_eps: RiccatiSolution) -> Callable:
    """The non-integrable member ``A_eps + e^{2I} / int_tau^0 e^{2I}`` (behaves like ``-1/tau``)."""
    mesh, taus, I, E, _, _ = _shift_on(A_eps, 0.0, A_eps.h)
    F0, _ = mesh.cumulative_from_zero(E)
    vals = A_eps.values + E / (-mesh.sign * F0)
    table = PiecewiseTable(mesh, vals)
    return table


def residual(A: RiccatiSolution, q, tau) -> np.ndarray:
    """``A'(tau) - A(tau)**2 - q(tau)``.

    ``A'`` comes from centred 4th-order differences starting at step
    ``|tau|/16`` and refined by step halving until the estimate settles.
    """
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    fn = q.q if isinstance(q, EffectiveMassSq) else q
    out = np.empty_like(tau)
    for i, t in enumerate(tau):
        step = abs(t) / 16
        # keep the stencil inside the table
        step = min(step, (A.h - abs(t)) / 3) if abs(t) < A.h else step
        res = derivative(A.A, t, order=4, initial_step=step, step_factor=2.0, maxiter=8,
                         tolerances=dict(atol=1e-12, rtol=1e-13))
        out[i] = res.df - A.A(t) ** 2 - float(fn(t))
    return out


def integrate_A(A, tau1: float, tau2: float) -> float:
    """``int_{tau1}^{tau2} A`` for a tabulated solution or a plain callable."""
    if isinstance(A, RiccatiSolution):
        return float(A.intA0(tau2) - A.intA0(tau1))
    if tau1 != 0 and tau2 != 0 and np.sign(tau1) != np.sign(tau2):
        return integrate_between(A, tau1, 0.0) + integrate_between(A, 0.0, tau2)
    return integrate_between(A, tau1, tau2)


def integral_q(q, tau1: float, tau2: float) -> float:
    fn = q.q if isinstance(q, EffectiveMassSq) else q
    return integrate_between(lambda t: np.asarray(fn(t), dtype=float) + 0.0 * t, tau1, tau2)


def picard_bounds(A: RiccatiSolution, q, taus) -> np.ndarray:
    """Signed slack of the two-sided bound at each sample (``>= 0`` means satisfied)."""
    e = eta(A.side)
    slack = []
    for t in np.atleast_1d(taus):
        Iq = integral_q(q, A.tau_eps, float(t))
        a = float(A.A(t))
        slack.append(min(e * a - e * Iq, e * (1 + A.eps) * Iq - e * a))
    return np.array(slack)


@dataclass
class DivergenceReport:
    coefficient: float      # fitted c in A ~ c ln(1/|tau|) + b
    intercept: float
    growth: str             # "+inf", "-inf" or "bounded"
    taus: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)


def divergence_probe(A: RiccatiSolution, q=None, decades=(4, 11), bounded_tol=1e-3) -> DivergenceReport:
    """Fit ``A(tau) = c ln(1/|tau|) + b`` on a geometric sample toward 0."""
    s = np.logspace(-decades[0], -decades[1], 4 * (decades[1] - decades[0]) + 1)
    s = s[s <= A.h]
    taus = A.sign * s
    vals = A.A(taus)
    c, b = np.polyfit(np.log(1 / s), vals, 1)
    if abs(c) < bounded_tol * max(1.0, abs(b)):
        growth = "bounded"
    else:
        growth = "+inf" if c > 0 else "-inf"
    return DivergenceReport(float(c), float(b), growth, taus, vals)


def limit_difference(A: RiccatiSolution, B: RiccatiSolution, method: str = "invert",
                     levels: int = 8) -> float:
    """``lim_{tau->0} (A - B)`` for two integrable solutions on one side.

    ``"invert"`` solves the shift formula ``A = B + a e^{2I}/(1 + a J)``
    for ``a`` at a few sample points (exact up to quadrature) and returns
    their median.  ``"richardson"`` extrapolates ``A - B`` sampled at
    ``|tau| = s0 2**-k`` polynomially to 0.
    """
    if A.side != B.side:
        raise ValueError("solutions live on different sides")
    s0 = 0.25 * min(A.h, B.h)
    s = s0 * 0.5 ** np.arange(levels)
    taus = A.sign * s
    d = A.A(taus) - B.A(taus)
    if method == "richardson":
        T = list(d)
        for k in range(1, levels):
            T = [(s[i] * T[i + 1] - s[i + k] * T[i]) / (s[i] - s[i + k]) for i in range(len(T) - 1)]
        return float(T[0])
    if method != "invert":
        raise ValueError(f"unknown method {method!r}")
    E = np.exp(2 * B.intA0(taus))
    J = np.array([integrate_between(lambda t: np.exp(2 * B.intA0(t)), float(t), 0.0) for t in taus])
    alphas = d / (E - d * J)
    return float(np.median(alphas))
