"""Scenario orchestration: build the numerical objects from a config, run
the configured pipeline and collect the output tables in memory.

Nothing is written until the whole run has succeeded, so a failing run
leaves the output directory untouched.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import frobenius as fr
from . import profiles as pf
from . import riccati as ric
from . import semilinear as sl
from . import transmission as tr
from .config import ConfigError, Scenario, set_dotted
from .io import OutputSet, metadata
from .mode_evolver import DampedOptions, EvolutionError
from .spectrum import SpectrumError, SpectrumSpec


class RunError(RuntimeError):
    """Numerical failure, tagged with the module it came from."""

    def __init__(self, module: str, msg: str):
        self.module = module
        super().__init__(f"[{module}] {msg}")


@dataclass
class RunResult:
    scenario: Scenario
    outputs: OutputSet
    summary: dict = field(default_factory=dict)
    written: list = field(default_factory=list)


# --- builders ----------------------------------------------------------------------

def build_spectrum(sc: Scenario) -> SpectrumSpec:
    s = sc.spectrum
    try:
        if s["kind"] == "flat_torus":
            return SpectrumSpec.flat_torus(s["periods"])
        if s["kind"] == "round_sphere":
            return SpectrumSpec.round_sphere(int(s["dimension"]), float(s.get("radius", 1.0)))
        return SpectrumSpec.explicit([tuple(e) for e in s["entries"]], int(s["dimension"]),
                                     float(s.get("scalar_curvature", 0.0)))
    except SpectrumError as exc:
        raise ConfigError(str(exc), "spectrum") from None


def build_omega(side: str, d: dict) -> pf.ConformalFactor:
    fam = d["family"]
    path = f"{side}.omega"
    try:
        if fam == "de_sitter":
            if side != pf.HAT:
                raise ConfigError("de_sitter describes an expanding end and lives on the hat side", path)
            return pf.de_sitter_hat(float(d.get("H", 1.0)), int(d.get("sign", 1)))
        if fam == "power_law":
            return pf.power_law_check(float(d["C"]), float(d["eta"]))
        if fam == "constant":
            return pf.constant_omega(side, float(d.get("value", 1.0)))
        if fam == "power":
            return pf.power_omega(side, float(d["coef"]), float(d["power"]))
        return pf.tabulated_omega(side, d["taus"], d["values"])
    except KeyError as exc:
        raise ConfigError(f"missing parameter {exc.args[0]!r}", path) from None
    except pf.ProfileError as exc:
        raise ConfigError(str(exc), path) from None


def build_q(side: str, cfg, omega: pf.ConformalFactor, extent: float) -> pf.EffectiveMassSq:
    if cfg.q is not None:
        d = cfg.q
        fam = d["family"]
        if fam == "c2_over_tau":
            c2 = float(d["c2"])
            return pf.EffectiveMassSq(lambda t: c2 / np.abs(t), side, extent=extent,
                                      description=f"{c2}/|tau|")
        if fam == "power":
            coef, p = float(d.get("coef", 1.0)), float(d["p"])
            return pf.EffectiveMassSq(lambda t: coef * np.abs(t) ** p, side, extent=extent,
                                      description=f"{coef}|tau|^{p}")
        val = float(d.get("value", 0.0))
        return pf.EffectiveMassSq(lambda t: val + 0.0 * np.asarray(t, float), side, extent=extent,
                                  description=f"constant {val}")
    d = cfg.mass
    fam = d["family"]
    if fam == "zero":
        return pf.EffectiveMassSq(lambda t: 0.0 * np.asarray(t, float), side, pf.Integrability.L1,
                                  extent=extent, description="massless")
    if fam == "constant":
        m = float(d.get("m", 1.0))
        mass = pf.MassProfile(lambda t: m + 0.0 * np.asarray(t, float))
    else:
        m0, p = float(d.get("m0", 1.0)), float(d["p"])
        mass = pf.MassProfile(lambda t: m0 * np.abs(np.asarray(t, float)) ** p)
    return pf.EffectiveMassSq.from_mass(mass, omega, extent=extent)


def build_source(side: str, cfg, n_modes: int):
    src = cfg.source
    if src.get("kind", "zero") == "zero":
        return None
    taus = np.asarray(src["taus"], float)
    vals = np.asarray(src["values"], float)
    if vals.shape[0] != n_modes:
        raise ConfigError(f"source table has {vals.shape[0]} rows but the cutoff retains {n_modes} modes",
                          f"{side}.source.values")
    if np.any(np.diff(taus) <= 0):
        raise ConfigError("source taus must increase", f"{side}.source.taus")

    def g(lams, t, _t=taus, _v=vals):
        t = np.atleast_1d(np.asarray(t, float))
        return np.stack([np.interp(t, _t, row, left=0.0, right=0.0) for row in _v])

    return g


def _damped(sc: Scenario) -> DampedOptions:
    s = sc.solver
    return DampedOptions(nodes=s.nodes, ratio=s.ratio, floor=s.floor)


def build_riccati(sc: Scenario, side: str, q: pf.EffectiveMassSq):
    """``(member, anchor)``: the configured Riccati solution and the ``alpha = 0`` anchor."""
    t = sc.transmission
    alpha = t.alpha_hat if side == pf.HAT else t.alpha_check
    try:
        if t.anchor == "ivp":
            base = ric.ivp_solve(q, 0.0, side=side, nodes=sc.solver.nodes)
            member = base if alpha == 0 else ric.ivp_solve(q, alpha, side=side, nodes=sc.solver.nodes)
        else:
            base = ric.picard_construct(q, side, eps=t.eps, nodes=sc.solver.nodes)
            member = base if alpha == 0 else ric.shift_to_alpha(base, alpha)
    except ric.RiccatiError as exc:
        raise RunError("riccati", f"{side} side: {exc}") from None
    return member, base


def _extent(sc, side, cfg):
    if cfg.extent is not None:
        return cfg.extent
    t = sc.transmission
    return abs(t.tau_minus) if side == pf.HAT else t.tau_plus


def build_transmission(sc: Scenario, threads: int = 1):
    spectrum = build_spectrum(sc)
    modes = tr.enumerate_modes(spectrum, sc.cutoff)
    if not modes:
        raise ConfigError("no modes below the cutoff", "spectrum.cutoff")
    sides, anchors = {}, {}
    for side, cfg in ((pf.HAT, sc.hat), (pf.CHECK, sc.check)):
        om = build_omega(side, cfg.omega)
        q = build_q(side, cfg, om, _extent(sc, side, cfg))
        sides[side] = tr.SideProfile(om, q, build_source(side, cfg, len(modes)))
    t = sc.transmission
    A = {pf.HAT: None, pf.CHECK: None}
    if t.path == tr.RICCATI:
        for side in (pf.HAT, pf.CHECK):
            if not sides[side].q.classify().at_least_weighted():
                raise ConfigError(f"{side} effective mass is {sides[side].q.classify().value}; "
                                  "the riccati path needs weighted-L1", "transmission.path")
            A[side], anchors[side] = build_riccati(sc, side, sides[side].q)
    else:
        for side in (pf.HAT, pf.CHECK):
            if sides[side].q.classify() != pf.Integrability.L1:
                raise ConfigError(f"{side} effective mass is {sides[side].q.classify().value}; "
                                  "the simple path needs L1", "transmission.path")
    try:
        spec = tr.TransmissionSpec(spectrum.dimension, spectrum, sides[pf.HAT], sides[pf.CHECK], sc.cutoff,
                                   t.tau_minus, t.tau_plus, t.path, A[pf.HAT], A[pf.CHECK], t.h,
                                   _damped(sc), sc.solver.rtol, sc.solver.atol)
    except tr.TransmissionError as exc:
        raise ConfigError(str(exc), "transmission") from None
    return spec, modes, anchors


def initial_data(sc: Scenario, lams, tau, rng) -> tr.FieldData:
    d = sc.data
    if d.kind == "mode":
        if not 0 <= d.mode < len(lams):
            raise ConfigError(f"mode index {d.mode} outside 0..{len(lams) - 1}", "data.mode")
        u = np.zeros(len(lams), complex)
        u[d.mode] = d.amplitude
        return tr.FieldData(tau, np.asarray(lams, float), u, np.zeros(len(lams), complex))
    X = tr.random_field(lams, tau, rng, d.complex)
    return tr.FieldData(tau, X.lams, d.amplitude * X.u, d.amplitude * X.du)


def free_wave_reference(spec: tr.TransmissionSpec, data: tr.FieldData) -> Optional[tuple]:
    """Closed-form output when both sides are massless with constant conformal factors."""
    for prof in (spec.hat, spec.check):
        if prof.source is not None or not prof.omega.description.startswith("constant("):
            return None
        probe = np.array([-0.5, -1e-3]) if prof.side == pf.HAT else np.array([1e-3, 0.5])
        if np.any(np.asarray(prof.q.q(probe)) != 0):
            return None
    k = (spec.n - 1) / 2
    scale = (float(spec.hat.omega(spec.tau_minus)) / float(spec.check.omega(spec.tau_plus))) ** k
    w = np.sqrt(data.lams + spec.rho).astype(complex)
    dt = spec.tau_plus - spec.tau_minus
    c, s = np.cos(w * dt), np.where(w == 0, dt, np.sin(w * dt) / np.where(w == 0, 1, w))
    u = c * data.u + s * data.du
    du = -w**2 * s * data.u + c * data.du
    return scale * u, scale * du


# --- pipelines -------------------------------------------------------------------------------

def _mode_rows(data: tr.FieldData):
    return [(i, lam, z.real, z.imag, d.real, d.imag)
            for i, (lam, z, d) in enumerate(zip(data.lams, data.u, data.du))]


FIELD_HEADER = ["mode", "lambda", "re_u", "im_u", "re_du", "im_du"]


def _run_linear(sc: Scenario, out: OutputSet, seed, threads) -> dict:
    spec, modes, anchors = build_transmission(sc, threads)
    lams = np.array([m.eigenvalue for m in modes])
    rng = np.random.default_rng(seed)
    data = initial_data(sc, lams, spec.tau_minus, rng)
    try:
        T = tr.map_transfer(spec, lams, threads)
        res = tr.full_map_S(spec, data, transfer=T)
        psi0, psi1 = tr.hat_to_bang(spec, lams).apply(data.u, data.du)
    except (EvolutionError, tr.TransmissionError) as exc:
        raise RunError("transmission", str(exc)) from None

    delta = None
    if spec.path == tr.RICCATI:
        delta = tr.delta_of(spec.A_hat, spec.A_check, anchors[pf.HAT], anchors[pf.CHECK])
    meta = metadata(sc, seed, {"path": spec.path, "delta": delta if delta is not None else "n/a",
                               "rtol": sc.solver.rtol, "atol": sc.solver.atol})

    out.add_csv("modes.csv", ["mode", "lambda", "multiplicity"],
                [(i, m.eigenvalue, m.multiplicity) for i, m in enumerate(modes)], meta)
    out.add_csv("data_in.csv", FIELD_HEADER, _mode_rows(data), dict(meta, tau=spec.tau_minus))
    out.add_csv("data_out.csv", FIELD_HEADER, _mode_rows(res), dict(meta, tau=spec.tau_plus))
    out.add_csv("bang.csv", ["mode", "lambda", "re_psi0", "im_psi0", "re_psi1", "im_psi1"],
                [(i, lam, a.real, a.imag, b.real, b.imag)
                 for i, (lam, a, b) in enumerate(zip(lams, psi0, psi1))], meta)
    w = lams + 1
    e_in = w * np.abs(data.u) ** 2 + np.abs(data.du) ** 2
    e_out = w * np.abs(res.u) ** 2 + np.abs(res.du) ** 2
    out.add_csv("energy.csv", ["mode", "lambda", "energy_in", "energy_out"],
                [(i, lam, a, b) for i, (lam, a, b) in enumerate(zip(lams, e_in, e_out))], meta)

    summary = {"kind": "linear", "modes": len(lams), "path": spec.path,
               "norm_in": data.norm(), "norm_out": res.norm()}
    if delta is not None:
        out.add_csv("delta.csv", ["quantity", "value"],
                    [("alpha_hat", sc.transmission.alpha_hat), ("alpha_check", sc.transmission.alpha_check),
                     ("delta", delta), ("tau_eps_hat", anchors[pf.HAT].tau_eps),
                     ("tau_eps_check", anchors[pf.CHECK].tau_eps)], meta)
        for side, A in ((pf.HAT, spec.A_hat), (pf.CHECK, spec.A_check)):
            out.add_csv(f"riccati_{side}.csv", ["tau", "A", "int_A"], A.table(),
                        dict(meta, side=side, provenance=A.provenance.value))
        summary["delta"] = delta
    ref = free_wave_reference(spec, data)
    if ref is not None:
        summary["reference_error"] = float(max(np.max(np.abs(res.u - ref[0])),
                                               np.max(np.abs(res.du - ref[1]))))
    summary["_vector"] = np.concatenate([res.u, res.du])
    return summary


def _run_frobenius(sc: Scenario, out: OutputSet, seed, threads) -> dict:
    rows = oracle_rows(sc, threads)
    meta = metadata(sc, seed, {"series_order": sc.frobenius.N, "h": sc.frobenius.h})
    header = ["lambda", "delta", "c1_hat", "c2_hat", "c1_check", "c2_check", "c1_expected",
              "c2_expected", "rel_error", "bang_error"]
    out.add_csv("oracle.csv", header, [[r[k] for k in header] for r in rows], meta)
    err = max(r["rel_error"] for r in rows)
    return {"kind": "frobenius", "max_rel_error": err, "max_bang_error": max(r["bang_error"] for r in rows),
            "delta": rows[0]["delta"], "_vector": np.array([r["c1_check"] for r in rows]),
            "error": err}


def oracle_rows(sc: Scenario, threads: int = 1) -> list:
    """Run the transmission pipeline on Frobenius data and compare with the oracle rule."""
    f = sc.frobenius
    t = sc.transmission
    lams = np.array(sorted(set(f.lams)))
    hp0 = fr.FuchsProblem(0.0, f.c2_hat, pf.HAT, tuple(f.F), f.N, b1=f.b1)
    cp0 = fr.FuchsProblem(0.0, f.c2_check, pf.CHECK, tuple(f.F), f.N, b1=f.b1)
    try:
        Ah0 = ric.picard_construct(hp0.effective_mass(1.0), pf.HAT, eps=t.eps, nodes=sc.solver.nodes)
        Ac0 = ric.picard_construct(cp0.effective_mass(1.0), pf.CHECK, eps=t.eps, nodes=sc.solver.nodes)
        Ah = Ah0 if t.alpha_hat == 0 else ric.shift_to_alpha(Ah0, t.alpha_hat)
        Ac = Ac0 if t.alpha_check == 0 else ric.shift_to_alpha(Ac0, t.alpha_check)
    except ric.RiccatiError as exc:
        raise RunError("riccati", str(exc)) from None
    rh, rc = fr.D_ratio_of(hp0, Ah), fr.D_ratio_of(cp0, Ac)
    delta = fr.delta_from_series(hp0, cp0, (rh, 1.0), (rc, 1.0))

    spectrum = SpectrumSpec.explicit([(lam, 1) for lam in lams], 3, 0.0)
    spec = tr.TransmissionSpec(3, spectrum, tr.SideProfile(pf.constant_omega(pf.HAT), hp0.effective_mass(1.0)),
                               tr.SideProfile(pf.constant_omega(pf.CHECK), cp0.effective_mass(1.0)),
                               float(lams.max()) + 1.0, -f.h, f.h, tr.RICCATI, Ah, Ac, None,
                               _damped(sc), sc.solver.rtol, sc.solver.atol)
    u = np.empty(len(lams), complex)
    du = np.empty(len(lams), complex)
    for i, lam in enumerate(lams):
        hp = fr.FuchsProblem(lam, f.c2_hat, pf.HAT, tuple(f.F), f.N, b1=f.b1)
        u[i], du[i] = fr.eval_solution(hp, f.C1, f.C2, -f.h)
    data = tr.FieldData(-f.h, lams, u, du)
    try:
        res = tr.full_map_S(spec, data, threads)
        psi0, psi1 = tr.hat_to_bang(spec, lams).apply(u, du)
    except (EvolutionError, tr.TransmissionError) as exc:
        raise RunError("transmission", str(exc)) from None
    rows = []
    for i, lam in enumerate(lams):
        hp = fr.FuchsProblem(lam, f.c2_hat, pf.HAT, tuple(f.F), f.N, b1=f.b1)
        cp = fr.FuchsProblem(lam, f.c2_check, pf.CHECK, tuple(f.F), f.N, b1=f.b1)
        c1, c2, _ = fr.extract_constants(cp, [f.h], [res.u[i]], [res.du[i]], holdout=False)
        e1, e2 = fr.oracle_transmission(f.C1, f.C2, delta)
        rel = max(abs(c1 - e1) / max(abs(e1), 1e-300), abs(c2 - e2) / max(abs(e2), 1e-300))
        b0, b1 = fr.bang_pair_of(hp, f.C1, f.C2, rh)
        berr = max(abs(psi0[i] - b0), abs(psi1[i] - b1))
        rows.append({"lambda": lam, "delta": delta, "c1_hat": f.C1, "c2_hat": f.C2,
                     "c1_check": c1.real, "c2_check": c2.real, "c1_expected": e1, "c2_expected": e2,
                     "rel_error": float(rel), "bang_error": float(berr)})
    return rows


def semilinear_data(grid: sl.TorusGrid3, tau, amplitude, rng, kmax: int = 2) -> sl.FieldState3:
    """Smooth random data: a few low Fourier modes with decaying weights."""
    nx, ny, nz = grid.ints
    low = (np.abs(nx) <= kmax) & (np.abs(ny) <= kmax) & (np.abs(nz) <= kmax)
    shape = (grid.N,) * 3
    weight = 1.0 / (1.0 + grid.k2)

    def draw():
        c = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * weight * low
        phys = np.fft.ifftn(c).real        # real field
        phys *= amplitude / max(np.max(np.abs(phys)), 1e-300)
        return phys

    return sl.state_from_physical(grid, tau, draw(), draw())


def build_semilinear(sc: Scenario) -> sl.SemilinearSpec:
    t = sc.transmission
    grid = sl.TorusGrid3(sc.semilinear.N)
    oms, qs, As = {}, {}, {}
    for side, cfg in ((pf.HAT, sc.hat), (pf.CHECK, sc.check)):
        oms[side] = build_omega(side, cfg.omega)
        qs[side] = build_q(side, cfg, oms[side], _extent(sc, side, cfg))
        if t.path == "riccati":
            As[side], _ = build_riccati(sc, side, qs[side])
    try:
        return sl.SemilinearSpec(grid, oms[pf.HAT], oms[pf.CHECK], qs[pf.HAT], qs[pf.CHECK], t.tau_minus,
                                 t.tau_plus, sc.semilinear.kappa, As.get(pf.HAT), As.get(pf.CHECK), t.path,
                                 t.h, sc.semilinear.R, sc.solver.rtol)
    except (sl.SemilinearError, ValueError) as exc:
        raise ConfigError(str(exc), "semilinear") from None


def _run_semilinear(sc: Scenario, out: OutputSet, seed, threads) -> dict:
    spec = build_semilinear(sc)
    g = spec.grid
    rng = np.random.default_rng(seed)
    data = semilinear_data(g, spec.tau_minus, sc.semilinear.amplitude, rng)
    try:
        res = sl.cross_semilinear(spec, data, record=True)
        mismatch = sl.two_sided_mismatch(spec, res)
    except (sl.SemilinearError, EvolutionError) as exc:
        raise RunError("semilinear", str(exc)) from None
    meta = metadata(sc, seed, {"N": g.N, "kappa": spec.kappa, "path": spec.path})
    fmeta = dict(meta, N=g.N, periods=",".join(format(L, ".17g") for L in g.periods))
    to_phys = lambda fh: sl.to_physical(g, fh)
    out.add_field("phi_in.bin", to_phys(data.phi), dict(fmeta, tau=spec.tau_minus))
    out.add_field("chi_in.bin", to_phys(data.chi), dict(fmeta, tau=spec.tau_minus))
    out.add_field("phi_out.bin", to_phys(res.state.phi), dict(fmeta, tau=spec.tau_plus))
    out.add_field("chi_out.bin", to_phys(res.state.chi), dict(fmeta, tau=spec.tau_plus))
    out.add_field("bang_psi0.bin", to_phys(res.bang[0]), dict(fmeta, tau=0.0))
    out.add_field("bang_psi1.bin", to_phys(res.bang[1]), dict(fmeta, tau=0.0))
    out.add_csv("energy.csv", ["stage", "energy"], list(res.energies.items()), meta)
    summary = {"kind": "semilinear", "N": g.N, "kappa": spec.kappa, "two_sided_mismatch": mismatch,
               "data_norm_in": sl.data_norm(g, data.phi, data.chi),
               "data_norm_out": sl.data_norm(g, res.state.phi, res.state.chi)}
    summary["_vector"] = np.concatenate([res.state.phi[g.mask], res.state.chi[g.mask]]) / g.N**3
    return summary


PIPELINES = {"linear": _run_linear, "frobenius": _run_frobenius, "semilinear": _run_semilinear}


def run_scenario(sc: Scenario, out_dir=None, seed: Optional[int] = None, threads: int = 1) -> RunResult:
    """Run the configured pipeline; write ``out_dir`` only once everything has succeeded."""
    seed = sc.seed if seed is None else seed
    out = OutputSet()
    try:
        summary = PIPELINES[sc.kind](sc, out, seed, threads)
    except (ConfigError, RunError):
        raise
    except (ric.RiccatiError, EvolutionError) as exc:
        raise RunError(type(exc).__module__.rsplit(".", 1)[-1], str(exc)) from None
    rows = [(k, v) for k, v in summary.items() if not k.startswith("_")]
    out.add_csv("summary.csv", ["key", "value"], rows, metadata(sc, seed))
    result = RunResult(sc, out, summary)
    if out_dir is not None:
        result.written = out.write(out_dir)
    return result


# --- convergence ------------------------------------------------------------------------------

def parse_ladder(text: str):
    key, sep, vals = text.partition("=")
    if not sep or not vals:
        raise ConfigError(f"ladder must look like key=v1,v2,...; got {text!r}")
    values = []
    for v in vals.split(","):
        v = v.strip()
        try:
            values.append(int(v) if v.lstrip("-").isdigit() else float(v))
        except ValueError:
            raise ConfigError(f"ladder value {v!r} is not a number", key.strip()) from None
    if len(values) < 2:
        raise ConfigError("a ladder needs at least two values", key.strip())
    return key.strip(), values


@dataclass
class ConvergenceRow:
    value: float
    error: float
    order: Optional[float]


def convergence_study(sc: Scenario, ladder, seed: Optional[int] = None, threads: int = 1):
    """Rerun ``sc`` over a one-parameter ladder.

    The error of each rung is the scenario's own error metric when it has
    one (Frobenius oracle error, free-wave reference error), otherwise the
    distance of the output to that of the last rung.  Observed orders assume
    ``error ~ value**(-p)``.
    """
    key, values = parse_ladder(ladder) if isinstance(ladder, str) else ladder
    results = []
    for v in values:
        s = copy.deepcopy(sc)
        cur = s
        for part in key.split(".")[:-1]:
            cur = getattr(cur, part, None)
        target = getattr(cur, key.split(".")[-1], None) if cur is not None else None
        set_dotted(s, key, [v] if isinstance(target, list) else v)
        results.append(run_scenario(s, seed=seed, threads=threads).summary)
    errs = []
    for r in results:
        if "error" in r:
            errs.append(float(r["error"]))
        elif "reference_error" in r:
            errs.append(float(r["reference_error"]))
        else:
            errs.append(float(np.max(np.abs(r["_vector"] - results[-1]["_vector"]))))
    rows = []
    for i, (v, e) in enumerate(zip(values, errs)):
        order = None
        if i + 1 < len(values) and e > 0 and errs[i + 1] > 0 and v != values[i + 1] and v > 0 and values[i + 1] > 0:
            order = float(np.log(e / errs[i + 1]) / np.log(values[i + 1] / v))
        rows.append(ConvergenceRow(float(v), e, order))
    return key, rows


def convergence_csv(sc: Scenario, key, rows, seed=None) -> str:
    from .io import csv_text
    return csv_text(["value", "error", "observed_order"],
                    [(r.value, r.error, "" if r.order is None else r.order) for r in rows],
                    metadata(sc, seed, {"ladder": key}))
