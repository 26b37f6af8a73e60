"""TOML scenario configs.

Schema (all sections optional unless noted)::

    name = "demo"                  # required
    kind = "linear"                # linear | semilinear | frobenius
    seed = 0

    [spectrum]                     # linear runs
    kind = "flat_torus"            # flat_torus | round_sphere | explicit
    periods = [6.283, 6.283, 6.283]
    # dimension / radius (round_sphere), entries = [[lam, mult], ...] (explicit)
    cutoff = 10.0

    [hat] / [check]
    omega = { family = "de_sitter", H = 1.0, sign = 1 }
        # de_sitter(H, sign) | power_law(C, eta) | constant(value)
        # | power(coef, power) | tabulated(taus, values)
    mass = { family = "power", m0 = 1.0, p = 0.5 }   # zero | constant(m) | power(m0, p)
    q = { family = "c2_over_tau", c2 = 0.25 }        # overrides mass: c2_over_tau | power | constant
    source = { kind = "tabulated", taus = [...], values = [[...], ...] }  # one row per mode

    [transmission]
    tau_minus = -1.0               # required for linear/semilinear
    tau_plus = 1.0
    path = "riccati"               # riccati | simple
    h = 0.1                        # layer width (optional)
    eps = 1.0                      # Picard anchor parameter
    anchor = "picard"              # picard | ivp
    alpha_hat = 0.0                # member of each Riccati family, or
    delta = 0.3                    # shorthand for alpha_hat = delta, alpha_check = 0

    [solver]   rtol, atol, nodes, ratio, floor
    [data]     kind = "random" | "mode", amplitude, complex, mode
    [semilinear] N, kappa, amplitude, R
    [frobenius]  lams, c2_hat, c2_check, N, h, C1, C2, b1, F

Errors are raised as :class:`ConfigError` carrying the dotted field path
and, when it can be found, the TOML line and column.
"""
from __future__ import annotations

import hashlib
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KINDS = ("linear", "semilinear", "frobenius")
OMEGA_FAMILIES = ("de_sitter", "power_law", "constant", "power", "tabulated")
MASS_FAMILIES = ("zero", "constant", "power")
Q_FAMILIES = ("c2_over_tau", "power", "constant")


class ConfigError(ValueError):
    def __init__(self, msg, path: str = "", line: Optional[int] = None, column: Optional[int] = None):
        self.path, self.line, self.column = path, line, column
        where = f" [{path}]" if path else ""
        if line is not None:
            where += f" (line {line}, column {column})"
        super().__init__(f"{msg}{where}")


def _locate(text: str, path: str):
    """Best-effort line/column of a dotted key in the TOML source."""
    if not text or not path:
        return None, None
    parts = path.split(".")
    lines = text.splitlines()
    start = 0
    if len(parts) > 1:
        hdr = re.compile(r"^\s*\[\s*" + re.escape(parts[0]) + r"\s*\]")
        for i, ln in enumerate(lines):
            if hdr.match(ln):
                start = i
                break
    key = re.compile(r"(^|[\s{,])(" + re.escape(parts[-1]) + r")\s*=")
    for i in range(start, len(lines)):
        m = key.search(lines[i])
        if m:
            return i + 1, m.start(2) + 1
    if len(parts) > 1:
        key = re.compile(r"(^|[\s{,])(" + re.escape(parts[1]) + r")\s*=")
        for i in range(start, len(lines)):
            m = key.search(lines[i])
            if m:
                return i + 1, m.start(2) + 1
    return None, None


@dataclass
class SolverConfig:
    rtol: float = 1e-12
    atol: float = 1e-14
    nodes: int = 20
    ratio: float = 0.5
    floor: float = 1e-12


@dataclass
class SideConfig:
    omega: dict = field(default_factory=lambda: {"family": "constant", "value": 1.0})
    mass: dict = field(default_factory=lambda: {"family": "zero"})
    q: Optional[dict] = None
    source: dict = field(default_factory=lambda: {"kind": "zero"})
    extent: Optional[float] = None


@dataclass
class TransmissionConfig:
    tau_minus: float = -1.0
    tau_plus: float = 1.0
    path: str = "riccati"
    h: Optional[float] = None
    eps: float = 1.0
    anchor: str = "picard"
    alpha_hat: float = 0.0
    alpha_check: float = 0.0


@dataclass
class DataConfig:
    kind: str = "random"
    amplitude: float = 1.0
    complex: bool = True
    mode: int = 0


@dataclass
class SemilinearConfig:
    N: int = 16
    kappa: float = 1.0
    amplitude: float = 0.1
    R: float = 0.0


@dataclass
class FrobeniusConfig:
    lams: list = field(default_factory=lambda: [1.0, 4.0])
    c2_hat: float = 0.25
    c2_check: float = 1.0
    N: int = 20
    h: float = 0.1
    C1: float = 0.7
    C2: float = -1.2
    b1: float = 0.0
    F: list = field(default_factory=list)


@dataclass
class Scenario:
    name: str
    kind: str = "linear"
    seed: int = 0
    spectrum: dict = field(default_factory=lambda: {"kind": "flat_torus",
                                                    "periods": [6.283185307179586] * 3})
    cutoff: float = 5.0
    hat: SideConfig = field(default_factory=SideConfig)
    check: SideConfig = field(default_factory=SideConfig)
    transmission: TransmissionConfig = field(default_factory=TransmissionConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    data: DataConfig = field(default_factory=DataConfig)
    semilinear: SemilinearConfig = field(default_factory=SemilinearConfig)
    frobenius: FrobeniusConfig = field(default_factory=FrobeniusConfig)
    source_text: str = field(default="", repr=False)
    origin: str = ""
    overrides: list = field(default_factory=list)

    @property
    def digest(self) -> str:
        blob = self.source_text + "".join(f"\n#override {k}={v!r}" for k, v in self.overrides)
        return hashlib.sha256(blob.encode()).hexdigest()


# --- parsing -------------------------------------------------------------------

class _Reader:
    def __init__(self, text):
        self.text = text

    def fail(self, msg, path):
        line, col = _locate(self.text, path)
        raise ConfigError(msg, path, line, col)

    def number(self, tbl, key, path, default=None, positive=False, integer=False):
        if key not in tbl:
            if default is None:
                self.fail("missing required field", path)
            return default
        v = tbl[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(f"expected a number, got {type(v).__name__}", path)
        if integer and not float(v).is_integer():
            self.fail("expected an integer", path)
        if positive and v <= 0:
            self.fail("must be positive", path)
        return int(v) if integer else float(v)

    def choice(self, tbl, key, path, options, default=None):
        v = tbl.get(key, default)
        if v is None:
            self.fail("missing required field", path)
        if v not in options:
            self.fail(f"expected one of {list(options)}, got {v!r}", path)
        return v

    def table(self, doc, key, path):
        v = doc.get(key, {})
        if not isinstance(v, dict):
            self.fail("expected a table", path)
        return v

    def unknown(self, tbl, allowed, prefix):
        for k in tbl:
            if k not in allowed:
                self.fail("unknown field", f"{prefix}.{k}" if prefix else k)


def _side(rd: _Reader, doc, name) -> SideConfig:
    tbl = rd.table(doc, name, name)
    rd.unknown(tbl, ("omega", "mass", "q", "source", "extent"), name)
    sc = SideConfig()
    if "omega" in tbl:
        om = tbl["omega"]
        if not isinstance(om, dict):
            rd.fail("expected an inline table", f"{name}.omega")
        fam = rd.choice(om, "family", f"{name}.omega.family", OMEGA_FAMILIES)
        if fam == "power_law" and name != "check":
            rd.fail("power_law describes a big bang and lives on the check side", f"{name}.omega.family")
        if fam == "tabulated":
            t, v = om.get("taus"), om.get("values")
            if not isinstance(t, list) or not isinstance(v, list) or len(t) != len(v) or len(t) < 4:
                rd.fail("tabulated omega needs equal-length taus/values (at least 4)", f"{name}.omega.taus")
        for k, val in om.items():
            if k not in ("family", "taus", "values") and (isinstance(val, bool) or not isinstance(val, (int, float))):
                rd.fail("expected a number", f"{name}.omega.{k}")
        sc.omega = dict(om)
    if "mass" in tbl:
        ms = tbl["mass"]
        if not isinstance(ms, dict):
            rd.fail("expected an inline table", f"{name}.mass")
        rd.choice(ms, "family", f"{name}.mass.family", MASS_FAMILIES)
        sc.mass = dict(ms)
    if "q" in tbl:
        q = tbl["q"]
        if not isinstance(q, dict):
            rd.fail("expected an inline table", f"{name}.q")
        fam = rd.choice(q, "family", f"{name}.q.family", Q_FAMILIES)
        if fam == "c2_over_tau":
            rd.number(q, "c2", f"{name}.q.c2", positive=True)
        sc.q = dict(q)
    if "source" in tbl:
        src = tbl["source"]
        if not isinstance(src, dict):
            rd.fail("expected an inline table", f"{name}.source")
        kind = rd.choice(src, "kind", f"{name}.source.kind", ("zero", "tabulated"))
        if kind == "tabulated":
            t, v = src.get("taus"), src.get("values")
            if not isinstance(t, list) or not isinstance(v, list) or not v:
                rd.fail("tabulated source needs taus and per-mode values", f"{name}.source.values")
            if any(not isinstance(row, list) or len(row) != len(t) for row in v):
                rd.fail("every source row must match taus in length", f"{name}.source.values")
        sc.source = dict(src)
    if "extent" in tbl:
        sc.extent = rd.number(tbl, "extent", f"{name}.extent", positive=True)
    return sc


def parse(text: str, origin: str = "<string>") -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ConfigError(f"TOML syntax error: {exc}", "", line, col) from None
    rd = _Reader(text)
    rd.unknown(doc, ("name", "kind", "seed", "spectrum", "hat", "check", "transmission", "solver",
                     "data", "semilinear", "frobenius"), "")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        rd.fail("missing required field", "name")
    sc = Scenario(name=name, source_text=text, origin=origin)
    sc.kind = rd.choice(doc, "kind", "kind", KINDS, "linear")
    sc.seed = rd.number(doc, "seed", "seed", 0, integer=True)
    if sc.seed < 0 or sc.seed >= 2**64:
        rd.fail("seed must fit an unsigned 64-bit integer", "seed")

    sp = rd.table(doc, "spectrum", "spectrum")
    if sp:
        rd.unknown(sp, ("kind", "periods", "dimension", "radius", "entries", "scalar_curvature", "cutoff"),
                   "spectrum")
        kind = rd.choice(sp, "kind", "spectrum.kind", ("flat_torus", "round_sphere", "explicit"))
        if kind == "flat_torus":
            per = sp.get("periods")
            if not isinstance(per, list) or not per or any(
                    isinstance(p, bool) or not isinstance(p, (int, float)) or p <= 0 for p in per):
                rd.fail("periods must be a non-empty list of positive numbers", "spectrum.periods")
        elif kind == "round_sphere":
            rd.number(sp, "dimension", "spectrum.dimension", integer=True, positive=True)
        else:
            ent = sp.get("entries")
            if not isinstance(ent, list) or not ent or any(not isinstance(e, list) or len(e) != 2 for e in ent):
                rd.fail("entries must be a list of [eigenvalue, multiplicity] pairs", "spectrum.entries")
            rd.number(sp, "dimension", "spectrum.dimension", integer=True, positive=True)
        sc.spectrum = {k: v for k, v in sp.items() if k != "cutoff"}
        sc.cutoff = rd.number(sp, "cutoff", "spectrum.cutoff", 5.0)
        if sc.cutoff < 0:
            rd.fail("cutoff must be non-negative", "spectrum.cutoff")

    sc.hat = _side(rd, doc, "hat")
    sc.check = _side(rd, doc, "check")

    tr = rd.table(doc, "transmission", "transmission")
    rd.unknown(tr, ("tau_minus", "tau_plus", "path", "h", "eps", "anchor", "alpha_hat", "alpha_check",
                    "delta"), "transmission")
    t = TransmissionConfig()
    t.tau_minus = rd.number(tr, "tau_minus", "transmission.tau_minus", -1.0)
    t.tau_plus = rd.number(tr, "tau_plus", "transmission.tau_plus", 1.0)
    if not t.tau_minus < 0:
        rd.fail("tau_minus must be negative", "transmission.tau_minus")
    if not t.tau_plus > 0:
        rd.fail("tau_plus must be positive", "transmission.tau_plus")
    t.path = rd.choice(tr, "path", "transmission.path", ("riccati", "simple"), "riccati")
    if "h" in tr:
        t.h = rd.number(tr, "h", "transmission.h", positive=True)
    t.eps = rd.number(tr, "eps", "transmission.eps", 1.0, positive=True)
    t.anchor = rd.choice(tr, "anchor", "transmission.anchor", ("picard", "ivp"), "picard")
    if "delta" in tr and ("alpha_hat" in tr or "alpha_check" in tr):
        rd.fail("give either delta or the alpha pair, not both", "transmission.delta")
    if "delta" in tr:
        t.alpha_hat = rd.number(tr, "delta", "transmission.delta")
    else:
        t.alpha_hat = rd.number(tr, "alpha_hat", "transmission.alpha_hat", 0.0)
        t.alpha_check = rd.number(tr, "alpha_check", "transmission.alpha_check", 0.0)
    if t.path == "simple" and (t.alpha_hat or t.alpha_check):
        rd.fail("Riccati anchors only apply to the riccati path", "transmission.path")
    sc.transmission = t

    so = rd.table(doc, "solver", "solver")
    rd.unknown(so, ("rtol", "atol", "nodes", "ratio", "floor"), "solver")
    d = SolverConfig()
    sc.solver = SolverConfig(
        rd.number(so, "rtol", "solver.rtol", d.rtol, positive=True),
        rd.number(so, "atol", "solver.atol", d.atol, positive=True),
        rd.number(so, "nodes", "solver.nodes", d.nodes, positive=True, integer=True),
        rd.number(so, "ratio", "solver.ratio", d.ratio, positive=True),
        rd.number(so, "floor", "solver.floor", d.floor, positive=True),
    )
    if not sc.solver.ratio < 1:
        rd.fail("ratio must lie in (0, 1)", "solver.ratio")

    da = rd.table(doc, "data", "data")
    rd.unknown(da, ("kind", "amplitude", "complex", "mode"), "data")
    sc.data = DataConfig(rd.choice(da, "kind", "data.kind", ("random", "mode"), "random"),
                         rd.number(da, "amplitude", "data.amplitude", 1.0),
                         bool(da.get("complex", True)),
                         rd.number(da, "mode", "data.mode", 0, integer=True))

    sl = rd.table(doc, "semilinear", "semilinear")
    rd.unknown(sl, ("N", "kappa", "amplitude", "R"), "semilinear")
    sc.semilinear = SemilinearConfig(rd.number(sl, "N", "semilinear.N", 16, integer=True, positive=True),
                                     rd.number(sl, "kappa", "semilinear.kappa", 1.0),
                                     rd.number(sl, "amplitude", "semilinear.amplitude", 0.1),
                                     rd.number(sl, "R", "semilinear.R", 0.0))
    N = sc.semilinear.N
    if N < 8 or N & (N - 1):
        rd.fail("N must be a power of two >= 8", "semilinear.N")
    if sc.semilinear.kappa < 0:
        rd.fail("kappa must be >= 0 (defocusing)", "semilinear.kappa")

    fr = rd.table(doc, "frobenius", "frobenius")
    rd.unknown(fr, ("lams", "c2_hat", "c2_check", "N", "h", "C1", "C2", "b1", "F"), "frobenius")
    f = FrobeniusConfig()
    lams = fr.get("lams", f.lams)
    if not isinstance(lams, list) or not lams or any(isinstance(x, bool) or not isinstance(x, (int, float))
                                                      for x in lams):
        rd.fail("lams must be a non-empty list of numbers", "frobenius.lams")
    sc.frobenius = FrobeniusConfig(
        [float(x) for x in lams],
        rd.number(fr, "c2_hat", "frobenius.c2_hat", f.c2_hat, positive=True),
        rd.number(fr, "c2_check", "frobenius.c2_check", f.c2_check, positive=True),
        rd.number(fr, "N", "frobenius.N", f.N, integer=True, positive=True),
        rd.number(fr, "h", "frobenius.h", f.h, positive=True),
        rd.number(fr, "C1", "frobenius.C1", f.C1),
        rd.number(fr, "C2", "frobenius.C2", f.C2),
        rd.number(fr, "b1", "frobenius.b1", f.b1),
        [float(x) for x in fr.get("F", [])],
    )
    if sc.frobenius.N < 2:
        rd.fail("series order must be >= 2", "frobenius.N")
    if sc.frobenius.h >= 0.5:
        rd.fail("window must stay inside the series radius guard 0.5", "frobenius.h")
    return sc


def load(path) -> Scenario:
    p = Path(path)
    if not p.exists():
        bundled = Path(__file__).with_name("scenarios") / f"{p.stem}.toml"
        if bundled.exists():
            p = bundled
        else:
            raise ConfigError(f"config file {path} not found")
    return parse(p.read_text(), str(p))


def bundled(name: str) -> Scenario:
    return load(Path(__file__).with_name("scenarios") / f"{name}.toml")


def set_dotted(sc: Scenario, key: str, value: Any) -> None:
    """Override a dotted field (``solver.rtol``, ``frobenius.N``, ``cutoff``) in place."""
    parts = key.split(".")
    obj = sc
    sc.overrides.append((key, value))
    for p in parts[:-1]:
        obj = obj[p] if isinstance(obj, dict) else getattr(obj, p, None)
        if obj is None:
            raise ConfigError("unknown field", key)
    last = parts[-1]
    if isinstance(obj, dict):
        obj[last] = value
        return
    if not hasattr(obj, last):
        raise ConfigError("unknown field", key)
    cur = getattr(obj, last)
    if isinstance(cur, bool):
        value = bool(value)
    elif isinstance(cur, int) and not isinstance(value, int):
        if not float(value).is_integer():
            raise ConfigError("expected an integer", key)
        value = int(value)
    elif isinstance(cur, float):
        value = float(value)
    setattr(obj, last, value)
