"""Crossing the bang surface.

The full map takes physical mode data ``(u, du)`` at ``tau_-`` to data at
``tau_+``:

    Liouville scale -> regular solve to -h -> W_hat -> (identity on the
    bang pair) -> W_check^{-1} -> regular solve to +h... -> tau_+ -> unscale

Each stage is a per-mode 2x2 transfer plus an affine source column, so
the composed map is exactly linear in the data.  The inverse map is
assembled from an independent backward pipeline rather than by matrix
inversion.
"""
from __future__ import annotations

import concurrent.futures as cf
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .mode_evolver import (DampedOptions, EvolutionError, ModeProblem, Transfer, W_inverse_transfer,
                           W_transfer, regular_transfer)
from .profiles import ConformalFactor, EffectiveMassSq, Integrability, liouville_matrix
from .riccati import RiccatiSolution, limit_difference
from .spectrum import Mode, SpectrumSpec, curvature_potential, enumerate_modes

SIMPLE, RICCATI = "simple", "riccati"


class TransmissionError(ValueError):
    pass


@dataclass
class SideProfile:
    omega: ConformalFactor
    q: EffectiveMassSq
    source: Optional[Callable] = None   # (lams, tau array) -> (nm, k) mode source g

    @property
    def side(self) -> str:
        return self.q.side


@dataclass
class TransmissionSpec:
    n: int
    spectrum: SpectrumSpec
    hat: SideProfile
    check: SideProfile
    cutoff: float
    tau_minus: float
    tau_plus: float
    path: str = RICCATI
    A_hat: Optional[RiccatiSolution] = None
    A_check: Optional[RiccatiSolution] = None
    h: Optional[float] = None
    damped: DampedOptions = field(default_factory=DampedOptions)
    rtol: float = 1e-12
    atol: float = 1e-14

    def __post_init__(self):
        if not (self.tau_minus < 0 < self.tau_plus):
            raise TransmissionError("need tau_minus < 0 < tau_plus")
        if self.hat.side != "hat" or self.check.side != "check":
            raise TransmissionError("hat/check profiles on the wrong sides")
        if self.path == SIMPLE:
            for prof in (self.hat, self.check):
                if prof.q.classify() != Integrability.L1:
                    raise TransmissionError(f"simple path needs L1 effective masses; {prof.side} "
                                            f"side is {prof.q.classify().value}")
        elif self.path == RICCATI:
            for prof in (self.hat, self.check):
                if not prof.q.classify().at_least_weighted():
                    raise TransmissionError(f"{prof.side} effective mass is not weighted-L1")
            if self.A_hat is None or self.A_check is None:
                raise TransmissionError("riccati path needs both Riccati solutions")
            if self.A_hat.side != "hat" or self.A_check.side != "check":
                raise TransmissionError("Riccati solutions on the wrong sides")
        else:
            raise TransmissionError(f"unknown path {self.path!r}")

    @property
    def layer(self) -> float:
        if self.h is not None:
            return float(self.h)
        return min(0.1, abs(self.tau_minus) / 4, self.tau_plus / 4)

    def windows(self) -> tuple[float, float]:
        hh = hc = self.layer
        if self.path == RICCATI:
            hh, hc = min(hh, self.A_hat.h), min(hc, self.A_check.h)
        return -hh, hc

    @property
    def rho(self) -> float:
        return curvature_potential(self.spectrum)

    def modes(self) -> list[Mode]:
        return enumerate_modes(self.spectrum, self.cutoff)

    def with_pair(self, A_hat, A_check) -> "TransmissionSpec":
        from dataclasses import replace
        return replace(self, A_hat=A_hat, A_check=A_check, path=RICCATI)


@dataclass
class FieldData:
    tau: float
    lams: np.ndarray
    u: np.ndarray       # (nm,) or (nm, k) complex
    du: np.ndarray

    def norm(self) -> float:
        """``H1 x L2`` norm with weights ``lam + 1``."""
        w = (self.lams + 1.0).reshape((-1,) + (1,) * (np.ndim(self.u) - 1))
        return float(np.sqrt(np.sum(w * np.abs(self.u) ** 2 + np.abs(self.du) ** 2)))


def random_field(lams, tau, rng: np.random.Generator, complex_data: bool = True) -> FieldData:
    nm = len(lams)
    def draw():
        x = rng.standard_normal(nm)
        if complex_data:
            x = x + 1j * rng.standard_normal(nm)
        return x.astype(complex)
    return FieldData(tau, np.asarray(lams, float), draw(), draw())


def _problem(spec, prof: SideProfile, lams):
    g = None
    if prof.source is not None:
        g = lambda t, _l=lams: prof.source(_l, t)
    return ModeProblem(lams, spec.rho, prof.q.q, g)


def _A(spec, side):
    if spec.path == SIMPLE:
        return None
    return spec.A_hat if side == "hat" else spec.A_check


def _scale(spec, prof, tau, nm, inverse=False):
    L = liouville_matrix(spec.n, prof.omega, tau)
    if inverse:
        L = np.linalg.inv(L)
    return Transfer.scalar(nm, L)


def hat_to_bang(spec: TransmissionSpec, lams) -> Transfer:
    """Physical data at ``tau_-`` -> bang pair."""
    nm = len(lams)
    th, _ = spec.windows()
    prob = _problem(spec, spec.hat, lams)
    T = _scale(spec, spec.hat, spec.tau_minus, nm)
    T = T.then(regular_transfer(prob, spec.tau_minus, th, spec.rtol, spec.atol))
    return T.then(W_transfer(prob, _A(spec, "hat"), th, spec.damped))


def bang_to_check(spec: TransmissionSpec, lams) -> Transfer:
    """Bang pair -> physical data at ``tau_+``."""
    nm = len(lams)
    _, tc = spec.windows()
    prob = _problem(spec, spec.check, lams)
    T = W_inverse_transfer(prob, _A(spec, "check"), tc, spec.damped)
    T = T.then(regular_transfer(prob, tc, spec.tau_plus, spec.rtol, spec.atol))
    return T.then(_scale(spec, spec.check, spec.tau_plus, nm, inverse=True))


def check_to_bang(spec: TransmissionSpec, lams) -> Transfer:
    nm = len(lams)
    _, tc = spec.windows()
    prob = _problem(spec, spec.check, lams)
    T = _scale(spec, spec.check, spec.tau_plus, nm)
    T = T.then(regular_transfer(prob, spec.tau_plus, tc, spec.rtol, spec.atol))
    return T.then(W_transfer(prob, _A(spec, "check"), tc, spec.damped))


def bang_to_hat(spec: TransmissionSpec, lams) -> Transfer:
    nm = len(lams)
    th, _ = spec.windows()
    prob = _problem(spec, spec.hat, lams)
    T = W_inverse_transfer(prob, _A(spec, "hat"), th, spec.damped)
    T = T.then(regular_transfer(prob, th, spec.tau_minus, spec.rtol, spec.atol))
    return T.then(_scale(spec, spec.hat, spec.tau_minus, nm, inverse=True))


def cross_simple(spec: TransmissionSpec, psi0, psi1):
    if spec.path != SIMPLE:
        raise TransmissionError("cross_simple on a non-simple spec")
    return psi0, psi1


def cross_riccati(spec: TransmissionSpec, psi0, psi1):
    """The crossing is the identity on the pair ``(lim phi, lim(phi' + A phi))``."""
    if spec.path != RICCATI:
        raise TransmissionError("cross_riccati on a non-riccati spec")
    return psi0, psi1


def _chunks(n, threads):
    threads = max(1, min(int(threads or 1), n))
    edges = np.linspace(0, n, threads + 1).astype(int)
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _assemble(spec, lams, stages, threads):
    lams = np.asarray(lams, float)

    def run(ab):
        a, b = ab
        sub = lams[a:b]
        try:
            T = stages[0](spec, sub)
            for st in stages[1:]:
                T = T.then(st(spec, sub))
            return T
        except EvolutionError as exc:
            raise EvolutionError(f"modes {a}..{b - 1}: {exc}") from exc

    parts = _chunks(len(lams), threads)
    if len(parts) == 1:
        return run(parts[0])
    with cf.ThreadPoolExecutor(len(parts)) as ex:
        out = list(ex.map(run, parts))
    return Transfer(np.concatenate([t.M for t in out]), np.concatenate([t.c for t in out]))


def map_transfer(spec: TransmissionSpec, lams, threads: int = 1) -> Transfer:
    return _assemble(spec, lams, [hat_to_bang, bang_to_check], threads)


def inverse_transfer(spec: TransmissionSpec, lams, threads: int = 1) -> Transfer:
    return _assemble(spec, lams, [check_to_bang, bang_to_hat], threads)


def full_map_S(spec: TransmissionSpec, data: FieldData, threads: int = 1,
               transfer: Optional[Transfer] = None) -> FieldData:
    if not np.isclose(data.tau, spec.tau_minus):
        raise TransmissionError("data must be given at tau_minus")
    T = transfer or map_transfer(spec, data.lams, threads)
    u, du = T.apply(data.u, data.du)
    return FieldData(spec.tau_plus, data.lams, u.reshape(np.shape(data.u)), du.reshape(np.shape(data.du)))


def invert_full_map(spec: TransmissionSpec, data: FieldData, threads: int = 1,
                    transfer: Optional[Transfer] = None) -> FieldData:
    if not np.isclose(data.tau, spec.tau_plus):
        raise TransmissionError("data must be given at tau_plus")
    T = transfer or inverse_transfer(spec, data.lams, threads)
    u, du = T.apply(data.u, data.du)
    return FieldData(spec.tau_minus, data.lams, u.reshape(np.shape(data.u)), du.reshape(np.shape(data.du)))


# --- delta family --------------------------------------------------------------------

@dataclass
class DeltaReport:
    delta1: float
    delta2: float
    discrepancy: float
    predicted: float           # max |(delta2 - delta1) * outward(0, psi0)| rule
    rule_error: float          # max |actual difference - affine prediction|
    details: dict = field(default_factory=dict)


def delta_of(A_hat: RiccatiSolution, A_check: RiccatiSolution, anchor_hat: RiccatiSolution,
             anchor_check: RiccatiSolution, method: str = "invert") -> float:
    """``delta = alpha_hat - alpha_check`` relative to a shared anchor pair."""
    a_hat = 0.0 if A_hat is anchor_hat else limit_difference(A_hat, anchor_hat, method)
    a_check = 0.0 if A_check is anchor_check else limit_difference(A_check, anchor_check, method)
    return a_hat - a_check


def delta_family_check(spec: TransmissionSpec, pair1, pair2, data: FieldData, anchors=None,
                       method: str = "invert") -> DeltaReport:
    """Compare the maps built from two Riccati pairs on the same data.

    ``anchors`` is the shared ``(A_hat_eps, A_check_eps)``; defaults to ``pair1``.
    The prediction uses the anchor gauge: the check bang pair is
    ``(psi0, psi1_eps + delta psi0)``, so two maps differ by
    ``(delta2 - delta1)`` times the check outward map applied to ``(0, psi0)``.
    """
    anchors = anchors or pair1
    d1 = delta_of(*pair1, *anchors, method=method)
    d2 = delta_of(*pair2, *anchors, method=method)
    s1, s2 = spec.with_pair(*pair1), spec.with_pair(*pair2)
    out1 = full_map_S(s1, data)
    out2 = full_map_S(s2, data)
    diff_u, diff_du = out2.u - out1.u, out2.du - out1.du
    discrepancy = float(max(np.max(np.abs(diff_u)), np.max(np.abs(diff_du))))

    s0 = spec.with_pair(*anchors)
    psi0, _ = hat_to_bang(s0, data.lams).apply(data.u, data.du)
    outward = bang_to_check(s0, data.lams)
    pu, pdu = outward.apply(np.zeros_like(psi0), (d2 - d1) * psi0, affine=False)
    predicted = float(max(np.max(np.abs(pu)), np.max(np.abs(pdu))))
    rule_error = float(max(np.max(np.abs(diff_u - pu)), np.max(np.abs(diff_du - pdu))))
    return DeltaReport(d1, d2, discrepancy, predicted, rule_error)


def operator_norm_probe(spec: TransmissionSpec, lams, rng: np.random.Generator, probes: int = 8) -> float:
    """Largest ``|S X| / |X|`` over random probes (source-free part)."""
    T = map_transfer(spec, lams)
    worst = 0.0
    for _ in range(probes):
        X = random_field(lams, spec.tau_minus, rng)
        u, du = T.apply(X.u, X.du, affine=False)
        worst = max(worst, FieldData(spec.tau_plus, X.lams, u, du).norm() / X.norm())
    return worst
