"""Acceptance checks.

Each check measures a handful of quantities, compares them with named
tolerances and reports pass/fail; failures are report entries, never
exceptions.  Tolerances can be overridden by name (``"c3.rel"``) to probe
that a check really fails when it should.
"""
from __future__ import annotations

import time
import traceback
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import profiles as pf
from . import riccati as ric
from . import semilinear as sl
from . import transmission as tr
from .config import Scenario
from .harness import oracle_rows, semilinear_data
from .mode_evolver import (ModeProblem, ModeState, damped_evolve, dense_solution, energy_identity_residual,
                           evolve_regular, gronwall_damped, gronwall_regular, layer_trajectory,
                           regular_trajectory, to_psi)
from .spectrum import SpectrumSpec

TORUS = SpectrumSpec.flat_torus([2 * np.pi] * 3)

TOLERANCES = {
    "c1.err": 1e-8, "c1.seconds": 1.0,
    "c2.tan": 1e-8, "c2.residual": 1e-6, "c2.l1_slack": 1e-8, "c2.seconds": 5.0,
    "c3.rel": 1e-4, "c3.seconds": 30.0,
    "c4.same": 1e-6, "c4.rule": 1e-4,
    "c5.diff": 1e-6,
    "c6.linear": 1e-10, "c6.roundtrip": 1e-6,
    "c7.stable": 1e-2, "c7.probe": 2e-2, "c7.phi": 1e-6,
    "c8.identity": 1e-7, "c8.first_integral": 1e-8,
    "c9.linear": 1e-6, "c9.scalar": 1e-7, "c9.two_sided": 1e-5, "c9.lipschitz_spread": 5e-2,
    "c9.seconds": 120.0,
    "c10.desitter": 1e-6, "c10.reciprocal": 1e-4,
}


@dataclass
class CheckResult:
    id: int
    name: str
    tags: tuple
    passed: bool
    measured: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    seconds: float = 0.0
    error: Optional[str] = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        vals = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items())
        extra = f" failed: {', '.join(self.failures)}" if self.failures else ""
        if self.error:
            extra += f" error: {self.error}"
        return f"[{status}] criterion {self.id:>2} {self.name} ({self.seconds:.2f}s) {vals}{extra}"

    def as_row(self) -> dict:
        return {"id": self.id, "name": self.name, "passed": self.passed, "seconds": self.seconds,
                **{f"measured.{k}": v for k, v in self.measured.items()}}


def _short(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, float, np.floating)):
        return f"{float(v):.3g}"
    return str(v)


class _Probe:
    """Records measurements against tolerances inside a check."""

    def __init__(self, tol: dict):
        self.tol = tol
        self.measured: dict = {}
        self.failures: list = []

    def below(self, name, value, key):
        value = float(value)
        self.measured[name] = value
        if not (np.isfinite(value) and value <= self.tol[key]):
            self.failures.append(f"{name}>{self.tol[key]:g}")

    def at_least(self, name, value, bound=0.0):
        value = float(value)
        self.measured[name] = value
        if not (np.isfinite(value) and value >= bound):
            self.failures.append(f"{name}<{bound:g}")

    def true(self, name, cond):
        self.measured[name] = bool(cond)
        if not cond:
            self.failures.append(name)


@dataclass
class Check:
    id: int
    name: str
    tags: tuple
    fn: Callable


REGISTRY: list[Check] = []


def check(id, name, *tags):
    def deco(fn):
        REGISTRY.append(Check(id, name, tuple(tags), fn))
        return fn
    return deco


def _qc2(c2, side, extent=1.0):
    return pf.EffectiveMassSq(lambda t: c2 / np.abs(t), side, pf.Integrability.WEIGHTED_L1, extent=extent,
                              description=f"{c2}/|tau|")


def _spec(qh, qc, Ah, Ac, cutoff, path=tr.RICCATI, omegas=None):
    oh, oc = omegas or (pf.constant_omega(pf.HAT), pf.constant_omega(pf.CHECK))
    return tr.TransmissionSpec(3, TORUS, tr.SideProfile(oh, qh), tr.SideProfile(oc, qc), cutoff, -1.0, 1.0,
                               path, Ah, Ac)


def _lams(spec, k):
    lams = np.array([m.eigenvalue for m in spec.modes()])
    if len(lams) < k:
        raise ValueError(f"only {len(lams)} modes below the cutoff")
    return lams[:k]


# --- criteria ------------------------------------------------------------------------------

@check(1, "exact linear oracles", "linear", "fast")
def _c1(p: _Probe, rng):
    worst = 0.0
    for lam in (0.0, 1.0, 4.0, 9.0):
        for qval in (0.0, 0.5):
            w = np.sqrt(lam + qval)
            q = None if qval == 0 else (lambda t, v=qval: v + 0.0 * np.asarray(t, float))
            P = ModeProblem(lam, 0.0, q)
            for t0 in (-1.5, 0.25):
                s = ModeState(t0, np.cos(w * t0), -w * np.sin(w * t0))
                e = evolve_regular(P, s, (t0, t0 + 1.0))
                t1 = t0 + 1.0
                worst = max(worst, abs(e.phi - np.cos(w * t1)), abs(e.chi + w * np.sin(w * t1)))
    p.below("max_error", worst, "c1.err")


@check(2, "Riccati construction", "riccati", "fast")
def _c2(p: _Probe, rng):
    q1 = pf.EffectiveMassSq(lambda t: 1.0 + 0.0 * np.asarray(t, float), pf.CHECK, pf.Integrability.L1,
                            extent=1.0)
    A = ric.picard_construct(q1, eps=1.0)
    tt = np.linspace(0.0, A.h, 400)[1:]
    p.below("tan_error", np.max(np.abs(A.A(tt) - np.tan(tt - 1 / np.sqrt(2)))), "c2.tan")
    res, slack, l1 = 0.0, np.inf, 0.0
    for c2 in (0.25, 1.0):
        for side in (pf.HAT, pf.CHECK):
            q = _qc2(c2, side)
            A = ric.picard_construct(q, eps=1.0)
            taus = A.sign * np.geomspace(1e-4, 0.98 * A.h, 60)
            res = max(res, float(np.max(np.abs(ric.residual(A, q, taus)))))
            slack = min(slack, float(np.min(ric.picard_bounds(A, q, taus))))
            l1 = max(l1, A.l1_norm() - 0.5)
    p.below("max_residual", res, "c2.residual")
    p.at_least("min_bound_slack", slack)
    p.below("l1_excess", max(l1, 0.0), "c2.l1_slack")


@check(3, "Frobenius cross-validation", "frobenius", "transmission")
def _c3(p: _Probe, rng):
    worst, bang = 0.0, 0.0
    for c2h, c2c in ((0.25, 0.25), (1.0, 1.0), (0.25, 1.0), (1.0, 0.25)):
        sc = Scenario(name="c3", kind="frobenius")
        sc.frobenius.lams = [1.0, 4.0]
        sc.frobenius.c2_hat, sc.frobenius.c2_check = c2h, c2c
        sc.frobenius.N, sc.frobenius.h = 20, 0.1
        for r in oracle_rows(sc):
            worst = max(worst, r["rel_error"])
            bang = max(bang, r["bang_error"])
    p.below("max_rel_error", worst, "c3.rel")
    p.measured["max_bang_error"] = bang


def _c2_pair(c2h=0.25, c2c=1.0):
    qh, qc = _qc2(c2h, pf.HAT), _qc2(c2c, pf.CHECK)
    return qh, qc, ric.picard_construct(qh), ric.picard_construct(qc)


@check(4, "delta-family invariance", "transmission", "delta")
def _c4(p: _Probe, rng):
    qh, qc, Ah, Ac = _c2_pair()
    spec = _spec(qh, qc, Ah, Ac, 10.0)
    X = tr.random_field(_lams(spec, 10), -1.0, rng)
    p1 = (Ah, Ac)
    p2 = (ric.shift_to_alpha(Ah, 0.3), ric.shift_to_alpha(Ac, 0.3))
    p3 = (ric.shift_to_alpha(Ah, 0.5), ric.shift_to_alpha(Ac, -0.5))
    same = tr.delta_family_check(spec, p1, p2, X)
    diff = tr.delta_family_check(spec, p2, p3, X, anchors=p1)
    p.below("same_delta_discrepancy", same.discrepancy, "c4.same")
    p.below("affine_rule_error", diff.rule_error / max(diff.predicted, 1e-300), "c4.rule")
    p.measured["delta_gap"] = diff.delta2 - diff.delta1


@check(5, "L1 consistency", "transmission", "fast")
def _c5(p: _Probe, rng):
    def q(side):
        return pf.EffectiveMassSq(lambda t: 0.5 / np.sqrt(np.abs(t)) + 0.3, side, extent=1.0)
    qh, qc = q(pf.HAT), q(pf.CHECK)
    simple = _spec(qh, qc, None, None, 10.0, tr.SIMPLE)
    ricc = _spec(qh, qc, ric.ivp_solve(qh, 0.0), ric.ivp_solve(qc, 0.0), 10.0)
    X = tr.random_field(_lams(simple, 10), -1.0, rng)
    a, b = tr.full_map_S(simple, X), tr.full_map_S(ricc, X)
    p.below("path_difference", max(np.max(np.abs(a.u - b.u)), np.max(np.abs(a.du - b.du))), "c5.diff")


@check(6, "homeomorphism of the full map", "transmission")
def _c6(p: _Probe, rng):
    qh, qc, Ah, Ac = _c2_pair()
    spec = _spec(qh, qc, Ah, Ac, 22.0)
    lams = _lams(spec, 20)
    X, Y = tr.random_field(lams, -1.0, rng), tr.random_field(lams, -1.0, rng)
    M, Mi = tr.map_transfer(spec, lams), tr.inverse_transfer(spec, lams)
    a, b = 0.3 - 0.2j, 1.7
    SX, SY = tr.full_map_S(spec, X, transfer=M), tr.full_map_S(spec, Y, transfer=M)
    Z = tr.FieldData(-1.0, lams, a * X.u + b * Y.u, a * X.du + b * Y.du)
    SZ = tr.full_map_S(spec, Z, transfer=M)
    lin = max(np.max(np.abs(SZ.u - a * SX.u - b * SY.u)), np.max(np.abs(SZ.du - a * SX.du - b * SY.du)))
    back = tr.invert_full_map(spec, SX, transfer=Mi)
    rt = max(np.max(np.abs(back.u - X.u)), np.max(np.abs(back.du - X.du)))
    p.below("linearity", lin / max(SZ.norm(), 1.0), "c6.linear")
    p.below("roundtrip", rt, "c6.roundtrip")


@check(7, "blow-up signatures", "riccati", "fast")
def _c7(p: _Probe, rng):
    stab, probe, drift, pred = 0.0, 0.0, 0.0, 0.0
    for c2 in (0.25, 1.0):
        q = _qc2(c2, pf.HAT)
        A = ric.picard_construct(q)
        P = ModeProblem(1.0, 0.0, q.q)
        taus, phi, chi = layer_trajectory(P, A, ModeState(-0.1, 0.8, -0.3))
        s = np.abs(taus)
        slopes = []
        for lo, hi in ((1e-12, 10 ** -11.5), (10 ** -11.5, 1e-11)):
            sel = (s >= lo) & (s <= hi)
            B = np.column_stack([np.log(s[sel]), np.ones(sel.sum())])
            slopes.append(np.linalg.lstsq(B, chi[sel].real, rcond=None)[0][0])
        stab = max(stab, abs(slopes[1] - slopes[0]) / abs(slopes[0]))
        last = s <= 1e-11
        phi0 = phi[np.argmin(s)].real
        drift = max(drift, float(np.ptp(phi[last].real)) / abs(phi0))
        # chi ~ c2 phi(0) ln|tau| on the hat side
        pred = max(pred, abs(slopes[0] - c2 * phi0) / abs(c2 * phi0))
        probe = max(probe, abs(ric.divergence_probe(A).coefficient - c2) / c2)
    p.below("slope_stability", stab, "c7.stable")
    p.below("slope_vs_prediction", pred, "c7.stable")
    p.below("phi_drift", drift, "c7.phi")
    p.below("probe_rel_error", probe, "c7.probe")


@check(8, "energy identities", "energy", "fast")
def _c8(p: _Probe, rng):
    ident, first, margin = 0.0, 0.0, np.inf
    for lam in (1.0, 4.0):
        for c2 in (0.25, 1.0):
            q = _qc2(c2, pf.HAT)
            P = ModeProblem(lam, 0.0, q.q)
            s = ModeState(-1.0, 0.7 + 0.2j, -0.4 + 0.1j)
            f, c = dense_solution(P, s, -0.05)
            taus = np.linspace(-1.0, -0.05, 40)
            ident = max(ident, energy_identity_residual(P, taus, f, c))
            fine = np.linspace(-1.0, -0.05, 400)
            margin = min(margin, gronwall_regular(P, fine, f(fine), c(fine)))
            A = ric.picard_construct(q)
            st = ModeState(-0.05, f(-0.05), c(-0.05))
            _, ps, dps = to_psi(st, A)
            _, (tl, Pl, DPl) = damped_evolve(P, A, (ps, dps), (-0.05, 0.0), trajectory=True)
            margin = min(margin, gronwall_damped(P, A, tl, Pl[0] if np.ndim(Pl) > 1 else Pl,
                                                 DPl[0] if np.ndim(DPl) > 1 else DPl))
    for lam in (0.0, 1.0, 4.0, 9.0):
        qv = 0.7
        P = ModeProblem(lam, 0.0, lambda t, v=qv: v + 0.0 * np.asarray(t, float))
        s = ModeState(0.3, 1.0 - 0.5j, 0.25 + 1j)
        taus = np.linspace(0.3, 1.3, 11)
        ph, ch = regular_trajectory(P, s, taus)
        E = np.abs(ch) ** 2 + (lam + qv) * np.abs(ph) ** 2
        first = max(first, float(np.max(np.abs(E - E[0])) / E[0]))
    p.below("identity_residual", ident, "c8.identity")
    p.below("first_integral_drift", first, "c8.first_integral")
    p.at_least("gronwall_margin", margin)


@check(9, "semilinear crossing", "semilinear", "slow")
def _c9(p: _Probe, rng):
    g = sl.TorusGrid3(16)
    qh, qc, Ah, Ac = _c2_pair()
    data = semilinear_data(g, -1.0, 0.1, rng)
    om = (pf.constant_omega(pf.HAT), pf.constant_omega(pf.CHECK))
    # kappa = 0 against the per-mode linear stack
    spec0 = sl.SemilinearSpec(g, *om, qh, qc, -1.0, 1.0, kappa=0.0, A_hat=Ah, A_check=Ac)
    res0 = sl.cross_semilinear(spec0, data)
    m = g.mask
    lamv = g.k2[m]
    ul, ind = np.unique(np.round(lamv, 9), return_inverse=True)
    lin = _spec(qh, qc, Ah, Ac, float(ul.max()) + 1.0)
    M = tr.map_transfer(lin, ul).M[ind]
    u = M[:, 0, 0] * data.phi[m] + M[:, 0, 1] * data.chi[m]
    du = M[:, 1, 0] * data.phi[m] + M[:, 1, 1] * data.chi[m]
    scale = g.N**3
    p.below("kappa0_vs_linear", max(np.max(np.abs(u - res0.state.phi[m])),
                                    np.max(np.abs(du - res0.state.chi[m]))) / scale, "c9.linear")
    # spatially constant data against a scalar ODE
    qv = 0.5
    c0, d0 = 0.8 + 0.3j, 0.2 + 0.0j
    st = sl.state_from_physical(g, -1.0, np.full((16,) * 3, c0), np.full((16,) * 3, d0))
    o = sl.evolve_semilinear(g, lambda t: qv + 0.0 * t, 1.0, st, (-1.0, -0.2))

    def rhs(t, y):
        return [y[1], -qv * y[0] - abs(y[0]) ** 2 * y[0]]
    ref = solve_ivp(rhs, (-1.0, -0.2), [c0, d0], method="RK45", rtol=1e-13, atol=1e-15).y[:, -1]
    p.below("constant_vs_scalar", max(abs(o.phi[0, 0, 0] / scale - ref[0]), abs(o.chi[0, 0, 0] / scale - ref[1])),
            "c9.scalar")
    # kappa = 1: two-sided extrapolation and Lipschitz probe
    spec1 = sl.SemilinearSpec(g, *om, qh, qc, -1.0, 1.0, kappa=1.0, A_hat=Ah, A_check=Ac)
    res1 = sl.cross_semilinear(spec1, data, record=True)
    p.below("two_sided_mismatch", sl.two_sided_mismatch(spec1, res1), "c9.two_sided")
    lip = sl.lipschitz_probe(spec1, data, (1e-2, 1e-3, 1e-4), rng)
    p.true("lipschitz_finite", bool(np.all(np.isfinite(lip.ratios))))
    p.below("lipschitz_spread", lip.spread, "c9.lipschitz_spread")
    p.measured["lipschitz_max"] = float(max(lip.ratios))


@check(10, "profile identities", "profiles", "fast")
def _c10(p: _Probe, rng):
    H = 1.5
    _, om = pf.conformal_time_hat(lambda t: np.exp(H * t), 0.0, cut=20.0, da=lambda t: H * np.exp(H * t))
    ds = max(abs(float(om(t)) * (-H * t) - 1.0) for t in (-1e-3, -1e-6, -1e-9))
    p.below("desitter_error", ds, "c10.desitter")
    Hh = 1.0
    _, oh = pf.conformal_time_hat(lambda t: 2 * np.cosh(Hh * t), 0.0, cut=30.0, sign=-1,
                                  da=lambda t: 2 * Hh * np.sinh(Hh * t))
    C = np.sqrt(2 * Hh)
    _, oc = pf.conformal_time_check(lambda t: C * np.sqrt(t) * (1 + t), 1.0,
                                    da=lambda t: C * (0.5 / np.sqrt(t) * (1 + t) + np.sqrt(t)))
    taus = np.geomspace(1e-6, 1e-2, 12)
    r = np.array([pf.reciprocal_residual(oh, oc, t) for t in taus])
    B = np.column_stack([np.ones_like(taus), taus, taus**2])
    limit = np.linalg.lstsq(B, r, rcond=None)[0][0]
    p.below("reciprocal_limit", abs(limit), "c10.reciprocal")


# --- runner -------------------------------------------------------------------------------------

def verify(tags=None, ids=None, overrides: Optional[dict] = None, seed: int = 0,
           echo: Optional[Callable[[str], None]] = None) -> list[CheckResult]:
    tol = dict(TOLERANCES)
    for k, v in (overrides or {}).items():
        if k not in tol:
            raise KeyError(f"unknown tolerance {k!r}")
        tol[k] = float(v)
    out = []
    for c in sorted(REGISTRY, key=lambda c: c.id):
        if ids is not None and c.id not in ids:
            continue
        if tags and not set(tags) & set(c.tags):
            continue
        probe = _Probe(tol)
        rng = np.random.default_rng([seed, c.id])
        t0 = time.perf_counter()
        err = None
        try:
            c.fn(probe, rng)
        except Exception as exc:          # failures are report entries
            err = f"{type(exc).__name__}: {exc}"
            probe.failures.append("exception")
            if echo is not None:
                echo(traceback.format_exc())
        secs = time.perf_counter() - t0
        key = f"c{c.id}.seconds"
        if key in tol and secs > tol[key]:
            probe.failures.append(f"runtime>{tol[key]:g}s")
        res = CheckResult(c.id, c.name, c.tags, not probe.failures, probe.measured, probe.failures, secs, err)
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out


def all_tags() -> list[str]:
    return sorted({t for c in REGISTRY for t in c.tags})
