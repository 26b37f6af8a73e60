"""Cubic semilinear Klein-Gordon on the flat 3-torus.

In renormalized variables (``n = 3``, ``phi = Omega u``) the equation is

    phi'' - Lap phi + (R/6 + q) phi = -kappa |phi|^2 phi.

Fields are stored as Fourier coefficients (numpy FFT normalisation)
restricted to the two-thirds band.  The cubic term is evaluated on a
zero-padded grid with ``4K + 2`` points per axis (``K`` the largest retained
wavenumber) and truncated back to the band, so products of band-limited
fields carry no aliasing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import fft as sfft
from scipy.integrate import solve_ivp

from .profiles import ConformalFactor, EffectiveMassSq, Integrability
from .quadrature import gauss_rule, graded_breakpoints
from .riccati import RiccatiSolution


class SemilinearError(RuntimeError):
    pass


@dataclass(frozen=True)
class TorusGrid3:
    N: int = 16
    periods: tuple = (2 * np.pi, 2 * np.pi, 2 * np.pi)

    def __post_init__(self):
        if self.N < 8 or self.N & (self.N - 1):
            raise ValueError("N must be a power of two >= 8")
        if len(self.periods) != 3 or any(L <= 0 for L in self.periods):
            raise ValueError("three positive periods required")
        object.__setattr__(self, "periods", tuple(float(L) for L in self.periods))

    @property
    def volume(self) -> float:
        return float(np.prod(self.periods))

    def _k1(self, L, N=None):
        N = N or self.N
        return 2 * np.pi * np.fft.fftfreq(N, d=L / N)

    @property
    def ints(self):
        n = np.fft.fftfreq(self.N, d=1.0 / self.N)
        return np.meshgrid(n, n, n, indexing="ij")

    @property
    def k2(self) -> np.ndarray:
        kx, ky, kz = (self._k1(L) for L in self.periods)
        KX, KY, KZ = np.meshgrid(kx, ky, kz, indexing="ij")
        return KX**2 + KY**2 + KZ**2

    @property
    def mask(self) -> np.ndarray:
        """Two-thirds rule: keep integer wavenumbers with ``|n| < N/3`` on every axis."""
        cut = self.N / 3
        nx, ny, nz = self.ints
        return (np.abs(nx) < cut) & (np.abs(ny) < cut) & (np.abs(nz) < cut)

    @property
    def cell_volume(self) -> float:
        return self.volume / self.N**3

    def x(self):
        axes = [np.arange(self.N) * L / self.N for L in self.periods]
        return np.meshgrid(*axes, indexing="ij")

    def sobolev_constant(self) -> float:
        """Discrete ``K`` with ``|u|_{L6} <= K |u|_{H1}`` on the retained band.

        ``|u|_inf <= (sum (1+|k|^2)^-1 / V)^{1/2} |u|_{H1}`` by Cauchy-Schwarz on
        the Fourier series, and ``|u|_6 <= |u|_inf^{2/3} |u|_2^{1/3}``.
        """
        S = np.sum(1.0 / (1.0 + self.k2[self.mask]))
        c_inf = np.sqrt(S / self.volume)
        return float(c_inf ** (2.0 / 3.0))


@dataclass
class FieldState3:
    tau: float
    phi: np.ndarray      # Fourier coefficients (N, N, N)
    chi: np.ndarray


def to_fourier(grid: TorusGrid3, f) -> np.ndarray:
    return np.fft.fftn(np.asarray(f, dtype=complex)) * grid.mask


def to_physical(grid: TorusGrid3, fh) -> np.ndarray:
    return np.fft.ifftn(fh)


def state_from_physical(grid, tau, phi, chi) -> FieldState3:
    return FieldState3(tau, to_fourier(grid, phi), to_fourier(grid, chi))


# --- norms -------------------------------------------------------------------

def l2_sq(grid, fh) -> float:
    return float(grid.volume / grid.N**6 * np.sum(np.abs(fh) ** 2))


def h1_sq(grid, fh) -> float:
    return float(grid.volume / grid.N**6 * np.sum((1 + grid.k2) * np.abs(fh) ** 2))


def l4_4(grid, fh) -> float:
    u = to_physical(grid, fh)
    return float(grid.cell_volume * np.sum(np.abs(u) ** 4))


def energy_functional(grid: TorusGrid3, state: FieldState3, kappa: float) -> float:
    return h1_sq(grid, state.phi) + l2_sq(grid, state.chi) + 0.5 * kappa * l4_4(grid, state.phi)


def data_norm(grid, phi_h, chi_h) -> float:
    return float(np.sqrt(h1_sq(grid, phi_h) + l2_sq(grid, chi_h)))


# --- nonlinearity -------------------------------------------------------------

def _band(grid):
    K = int(np.ceil(grid.N / 3)) - 1          # largest retained |n|
    M = 4 * K + 2                              # products reach 3K; aliases land beyond K
    src = np.r_[0:K + 1, grid.N - K:grid.N]
    dst = np.r_[0:K + 1, M - K:M]
    return M, src, dst


def _pad(grid, fh):
    M, src, dst = _band(grid)
    out = np.zeros(fh.shape[:-3] + (M, M, M), complex)
    out[..., dst[:, None, None], dst[None, :, None], dst[None, None, :]] = \
        fh[..., src[:, None, None], src[None, :, None], src[None, None, :]]
    return out * (M / grid.N) ** 3


def _unpad(grid, Fh):
    M, src, dst = _band(grid)
    out = np.zeros(Fh.shape[:-3] + (grid.N,) * 3, complex)
    out[..., src[:, None, None], src[None, :, None], src[None, None, :]] = \
        Fh[..., dst[:, None, None], dst[None, :, None], dst[None, None, :]]
    return out * (grid.N / M) ** 3


def cubic(grid: TorusGrid3, fh, weight=1.0) -> np.ndarray:
    """Fourier coefficients of ``|u|^2 u`` (truncated to the band); batched on leading axes."""
    fh = fh * grid.mask
    u = sfft.ifftn(_pad(grid, fh), axes=(-3, -2, -1), workers=-1)
    c = np.abs(u) ** 2 * u
    return _unpad(grid, sfft.fftn(c, axes=(-3, -2, -1), workers=-1)) * grid.mask * weight


def nonlinearity(grid: TorusGrid3, state_or_phi, kappa: float) -> np.ndarray:
    """``-kappa |phi|^2 phi`` as Fourier coefficients."""
    phi = state_or_phi.phi if isinstance(state_or_phi, FieldState3) else state_or_phi
    if kappa == 0:
        return np.zeros_like(phi)
    return -kappa * cubic(grid, phi)


# --- regular evolution ----------------------------------------------------------------

def _q(q, tau):
    if q is None:
        return 0.0
    fn = q.q if isinstance(q, EffectiveMassSq) else q
    return float(fn(tau))


def evolve_semilinear(grid: TorusGrid3, q, kappa: float, state: FieldState3, interval,
                      rho: float = 0.0, rtol: float = 1e-11, atol: float = 1e-13,
                      t_eval=None):
    """Method of lines with DOP853 on the retained Fourier coefficients."""
    ta, tb = interval
    if ta == 0 or tb == 0 or np.sign(ta) != np.sign(tb):
        raise SemilinearError(f"interval [{ta}, {tb}] touches the bang surface")
    mask = grid.mask
    k2 = grid.k2[mask]
    nk = k2.size
    wmax = np.sqrt(k2.max() + abs(rho) + 1)
    scale = grid.N**3

    def unpack(y):
        full = np.zeros((2, grid.N, grid.N, grid.N), complex)
        full[0][mask] = y[:nk] * scale
        full[1][mask] = y[nk:] * scale
        return full

    def rhs(t, y):
        p, c = y[:nk], y[nk:]
        acc = -(k2 + rho + _q(q, t)) * p
        if kappa:
            full = np.zeros((grid.N,) * 3, complex)
            full[mask] = p * scale
            acc = acc - kappa * cubic(grid, full)[mask] / scale
        return np.concatenate([c, acc])

    y0 = np.concatenate([state.phi[mask], state.chi[mask]]) / scale
    # guard: a step never spans more than a fraction of the fastest period
    sol = solve_ivp(rhs, (ta, tb), y0, method="DOP853", rtol=rtol, atol=atol,
                    max_step=0.5 / wmax, t_eval=t_eval)
    if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
        raise SemilinearError(f"semilinear solve failed near tau={sol.t[-1]:.6g}: {sol.message}")
    if t_eval is not None:
        return [FieldState3(t, *unpack(sol.y[:, i])) for i, t in enumerate(sol.t)]
    full = unpack(sol.y[:, -1])
    return FieldState3(tb, full[0], full[1])


# --- damped layer -------------------------------------------------------------------------

@dataclass
class SemilinearDampedOptions:
    nodes: int = 16
    ratio: float = 0.5
    floor: float = 1e-12
    tol: float = 1e-13
    max_iter: int = 200
    max_phase: float = 6.0


@dataclass
class CellLog:
    windows: list = field(default_factory=list)
    bounds: list = field(default_factory=list)
    ratios: list = field(default_factory=list)


def _layer_coeffs(A, V_q, rho, sigma):
    if A is None:
        a = 1.0 - rho - np.array([_q(V_q, s) for s in sigma])
        b = np.zeros_like(sigma)
        I = np.zeros_like(sigma)
    else:
        a = (1.0 - rho) * np.ones_like(sigma)
        b = 2.0 * A.A(sigma)
        I = A.intA0(sigma)
    return a, b, I


def contraction_bound(grid, A, kappa, rho, R, a, b, data_rho):
    """``2M(1 + 6K^3 rho^2) eps + 4 int|A|`` for the window ``[a, b]``."""
    K = grid.sobolev_constant()
    eps = abs(b - a)
    if A is None:
        intA = 0.0
        l1 = 0.0
    else:
        rule = gauss_rule(16)
        s = a + (b - a) * (rule.x + 1) / 2
        intA = abs(b - a) / 2 * np.sum(rule.w * np.abs(A.A(s)))
        l1 = A.l1_norm()
    M = max(1 + abs(R) / 6, kappa * np.exp(2 * l1))
    return 2 * M * (1 + 6 * K**3 * data_rho**2) * eps + 4 * intA


def _cell(grid, A, V_q, kappa, rho, a, b, psi0, dpsi0, opt, log):
    mask = grid.mask
    k2 = grid.k2[mask]
    w = np.sqrt(k2 + 1.0)[:, None]
    rule = gauss_rule(opt.nodes)
    d = (b - a) / 2
    sig = a + (b - a) * (rule.x + 1) / 2
    ca, cb, I = _layer_coeffs(A, V_q, rho, sig)
    nlw = np.exp(-2 * I)
    D = sig[:, None] - sig[None, :]
    ph = w * (sig - a)[None, :]
    free_u = psi0[:, None] * np.cos(ph) + dpsi0[:, None] * np.sin(ph) / w
    free_v = -psi0[:, None] * w * np.sin(ph) + dpsi0[:, None] * np.cos(ph)
    sinD = np.sin(w[:, :, None] * D[None]) / w[:, :, None]
    cosD = np.cos(w[:, :, None] * D[None])
    Ks = d * rule.S[None] * sinD
    Kc = d * rule.S[None] * cosD
    N = grid.N
    scale = N**3

    def load(U, V):
        L = ca[None, :] * U + cb[None, :] * V
        if kappa:
            full = np.zeros((opt.nodes, N, N, N), complex)
            full[:, mask] = (U * scale).T
            nl = cubic(grid, full)[:, mask].T / scale
            L = L - kappa * nl * nlw[None, :]
        return L

    U, V = free_u.copy(), free_v.copy()
    prev = np.inf
    for it in range(1, opt.max_iter + 1):
        L = load(U, V)
        U_new = free_u + np.einsum("mij,mj->mi", Ks, L)
        V_new = free_v + np.einsum("mij,mj->mi", Kc, L)
        change = max(np.max(np.abs(U_new - U)), np.max(np.abs(V_new - V)))
        size = max(1.0, np.max(np.abs(U_new)), np.max(np.abs(V_new)))
        U, V = U_new, V_new
        if log is not None and np.isfinite(prev) and prev > 0 and change > 0:
            log.ratios.append(change / prev)
        prev = change
        if change <= opt.tol * size:
            break
    else:
        raise SemilinearError(f"Picard iteration failed on window [{a:.3e}, {b:.3e}]")
    L = load(U, V)
    phe = w[:, 0] * (b - a)
    de = (b - sig)[None, :]
    end_u = psi0 * np.cos(phe) + dpsi0 * np.sin(phe) / w[:, 0] + \
        d * np.sum(rule.w[None, :] * np.sin(w * de) / w * L, axis=1)
    end_v = -psi0 * w[:, 0] * np.sin(phe) + dpsi0 * np.cos(phe) + \
        d * np.sum(rule.w[None, :] * np.cos(w * de) * L, axis=1)
    return sig, U, V, end_u, end_v


def damped_evolve_semilinear(grid: TorusGrid3, q, kappa: float, A: Optional[RiccatiSolution],
                             psi_state, window, rho: float = 0.0, R: float = 0.0,
                             opt: Optional[SemilinearDampedOptions] = None,
                             log: Optional[CellLog] = None, trajectory: bool = False):
    """Duhamel-Picard for ``(psi, dpsi)`` (Fourier, band only) across ``window``.

    The load is ``(1 - rho) psi + 2 A psi' - kappa |psi|^2 psi e^{-2 int_0 A}``
    (or ``(1 - rho - q) psi - kappa |psi|^2 psi`` with ``A=None``).  Cells
    are split until the contraction bound drops below 1.
    """
    opt = opt or SemilinearDampedOptions()
    mask = grid.mask
    ta, tb = window
    psi, dpsi = (np.asarray(x)[mask] / grid.N**3 if np.ndim(x) == 3 else np.asarray(x) for x in psi_state)
    wmax = float(np.sqrt(grid.k2[mask].max() + 1))
    pts = list(graded_breakpoints(ta, tb, opt.ratio, opt.floor))
    stack = [(pts[i], pts[i + 1]) for i in range(len(pts) - 1)][::-1]
    traj = []
    while stack:
        a, b = stack.pop()
        full = np.zeros((grid.N,) * 3, complex)
        full[mask] = psi * grid.N**3
        fullv = np.zeros_like(full)
        fullv[mask] = dpsi * grid.N**3
        r = data_norm(grid, full, fullv)
        bound = contraction_bound(grid, A, kappa, rho, R, a, b, r)
        if kappa == 0:
            # linear load: the plain Duhamel contraction is enough
            sig = np.linspace(a, b, 9)
            ca, cb, _ = _layer_coeffs(A, q, rho, sig)
            bound = min(bound, abs(b - a) * float(np.max(np.abs(ca) + np.abs(cb))) * 2)
        if (bound >= 1 or wmax * abs(b - a) > opt.max_phase) and abs(b - a) > 1e-14:
            m = 0.5 * (a + b)
            if a == 0 or b == 0:
                m = (b if a == 0 else a) * 0.5
            stack.append((m, b))
            stack.append((a, m))
            continue
        if bound >= 1:
            raise SemilinearError(f"no contraction on window [{a:.3e}, {b:.3e}] (bound {bound:.3f})")
        if log is not None:
            log.windows.append((a, b))
            log.bounds.append(bound)
        sig, U, V, psi, dpsi = _cell(grid, A, q, kappa, rho, a, b, psi, dpsi, opt, log)
        if trajectory:
            traj.append((sig, U, V))

    def lift(x):
        full = np.zeros((grid.N,) * 3, complex)
        full[mask] = x * grid.N**3
        return full

    if trajectory:
        taus = np.concatenate([t[0] for t in traj])
        P = np.concatenate([t[1] for t in traj], axis=1) * grid.N**3
        DP = np.concatenate([t[2] for t in traj], axis=1) * grid.N**3
        return (lift(psi), lift(dpsi)), (taus, P, DP)
    return lift(psi), lift(dpsi)


# --- full crossing ---------------------------------------------------------------------------

@dataclass
class SemilinearSpec:
    grid: TorusGrid3
    omega_hat: ConformalFactor
    omega_check: ConformalFactor
    q_hat: EffectiveMassSq
    q_check: EffectiveMassSq
    tau_minus: float
    tau_plus: float
    kappa: float = 1.0
    A_hat: Optional[RiccatiSolution] = None
    A_check: Optional[RiccatiSolution] = None
    path: str = "riccati"
    h: Optional[float] = None
    R: float = 0.0
    rtol: float = 1e-11
    damped: SemilinearDampedOptions = field(default_factory=SemilinearDampedOptions)

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("focusing (kappa < 0) is out of scope")
        if self.path == "simple":
            for q in (self.q_hat, self.q_check):
                if q.classify() != Integrability.L1:
                    raise SemilinearError("simple path needs L1 effective masses")
        elif self.path == "riccati":
            if self.A_hat is None or self.A_check is None:
                raise SemilinearError("riccati path needs both Riccati solutions")
        else:
            raise SemilinearError(f"unknown path {self.path!r}")

    @property
    def rho(self) -> float:
        return self.R / 6

    def windows(self):
        h = self.h if self.h is not None else min(0.1, abs(self.tau_minus) / 4, self.tau_plus / 4)
        hh = hc = h
        if self.path == "riccati":
            hh, hc = min(h, self.A_hat.h), min(h, self.A_check.h)
        return -hh, hc

    def A(self, side):
        if self.path == "simple":
            return None
        return self.A_hat if side == "hat" else self.A_check


def _liouville(omega: ConformalFactor, tau, u, du, inverse=False):
    Om, dOm = float(omega.omega(tau)), float(omega.domega(tau))
    if Om == 0:
        raise SemilinearError("conformal factor vanishes at the data time")
    if not inverse:
        return Om * u, dOm * u + Om * du
    v = u / Om
    return v, (du - dOm * v) / Om


def _to_psi(A, tau, phi, chi):
    if A is None:
        return phi, chi
    w = float(np.exp(A.intA0(tau)))
    return phi * w, (chi + float(A.A(tau)) * phi) * w


def _from_psi(A, tau, psi, dpsi):
    if A is None:
        return psi, dpsi
    w = float(np.exp(A.intA0(tau)))
    phi = psi / w
    return phi, dpsi / w - float(A.A(tau)) * phi


@dataclass
class CrossingResult:
    state: FieldState3                 # physical (u, du) Fourier data at tau_plus
    bang: tuple                        # (psi0, psi1) at the surface
    hat_layer: tuple = None            # (taus, psi, dpsi) trajectories, if recorded
    check_layer: tuple = None
    energies: dict = field(default_factory=dict)


def cross_semilinear(spec: SemilinearSpec, data: FieldState3, record: bool = False) -> CrossingResult:
    g = spec.grid
    if not np.isclose(data.tau, spec.tau_minus):
        raise SemilinearError("data must be given at tau_minus")
    th, tc = spec.windows()
    phi, chi = _liouville(spec.omega_hat, spec.tau_minus, data.phi, data.chi)
    s = FieldState3(spec.tau_minus, phi, chi)
    energies = {"hat_start": energy_functional(g, s, spec.kappa)}
    if spec.tau_minus < th:
        s = evolve_semilinear(g, spec.q_hat, spec.kappa, s, (spec.tau_minus, th), spec.rho, spec.rtol)
    energies["hat_layer"] = energy_functional(g, s, spec.kappa)
    Ah, Ac = spec.A("hat"), spec.A("check")
    p, dp = _to_psi(Ah, th, s.phi, s.chi)
    out = damped_evolve_semilinear(g, spec.q_hat, spec.kappa, Ah, (p, dp), (th, 0.0), spec.rho, spec.R,
                                   spec.damped, trajectory=record)
    (b0, b1), hat_traj = out if record else (out, None)
    out = damped_evolve_semilinear(g, spec.q_check, spec.kappa, Ac, (b0, b1), (0.0, tc), spec.rho, spec.R,
                                   spec.damped, trajectory=record)
    (p, dp), check_traj = out if record else (out, None)
    phi, chi = _from_psi(Ac, tc, p, dp)
    s = FieldState3(tc, phi, chi)
    energies["check_layer"] = energy_functional(g, s, spec.kappa)
    if tc < spec.tau_plus:
        s = evolve_semilinear(g, spec.q_check, spec.kappa, s, (tc, spec.tau_plus), spec.rho, spec.rtol)
    energies["check_end"] = energy_functional(g, s, spec.kappa)
    u, du = _liouville(spec.omega_check, spec.tau_plus, s.phi, s.chi, inverse=True)
    return CrossingResult(FieldState3(spec.tau_plus, u, du), (b0, b1), hat_traj, check_traj, energies)


def two_sided_mismatch(spec: SemilinearSpec, res: CrossingResult, inner=(1e-10, 1e-6)) -> float:
    """Extrapolate ``psi`` and ``psi'`` to 0 from each side and compare.

    On each side ``psi = p0 + p1 tau + ...`` and ``psi' = d0 + c tau ln|tau| + d1 tau``;
    least squares on the node samples with ``inner[0] <= |tau| <= inner[1]``.
    """
    if res.hat_layer is None or res.check_layer is None:
        raise ValueError("crossing was run without record=True")

    def extrap(traj):
        taus, P, DP = traj
        sel = (np.abs(taus) >= inner[0]) & (np.abs(taus) <= inner[1])
        t = taus[sel]
        B0 = np.column_stack([np.ones_like(t), t, t**2])
        B1 = np.column_stack([np.ones_like(t), t * np.log(np.abs(t)), t])
        c0 = np.linalg.lstsq(B0, P[:, sel].T, rcond=None)[0][0]
        c1 = np.linalg.lstsq(B1, DP[:, sel].T, rcond=None)[0][0]
        return c0, c1

    h0, h1 = extrap(res.hat_layer)
    k0, k1 = extrap(res.check_layer)
    scale = spec.grid.N**3
    return float(max(np.max(np.abs(h0 - k0)), np.max(np.abs(h1 - k1))) / scale)


@dataclass
class LipschitzReport:
    zetas: list
    ratios: list

    @property
    def spread(self) -> float:
        r = np.asarray(self.ratios)
        return float((r.max() - r.min()) / max(r.max(), 1e-300))


def lipschitz_probe(spec: SemilinearSpec, data: FieldState3, zetas=(1e-2, 1e-3, 1e-4),
                    rng: Optional[np.random.Generator] = None) -> LipschitzReport:
    rng = rng or np.random.default_rng(0)
    g = spec.grid
    shape = (g.N,) * 3
    dphi = to_fourier(g, rng.standard_normal(shape))
    dchi = to_fourier(g, rng.standard_normal(shape))
    dn = data_norm(g, dphi, dchi)
    dphi, dchi = dphi / dn, dchi / dn
    base = cross_semilinear(spec, data).state
    ratios = []
    for z in zetas:
        pert = FieldState3(data.tau, data.phi + z * dphi, data.chi + z * dchi)
        out = cross_semilinear(spec, pert).state
        ratios.append(data_norm(g, out.phi - base.phi, out.chi - base.chi) / z)
    return LipschitzReport(list(zetas), ratios)


def gronwall_envelope(grid, kappa, q, states, rho=0.0, R=0.0) -> float:
    """Minimum of ``E(tau0) exp(int(1+|R|+|q|)) - E(tau)`` over a regular trajectory."""
    taus = np.array([s.tau for s in states])
    E = np.array([energy_functional(grid, s, kappa) for s in states])
    rate = 1 + abs(R) + abs(rho) + np.abs([_q(q, t) for t in taus])
    cum = np.concatenate([[0.0], np.cumsum(np.maximum(rate[1:], rate[:-1]) * np.abs(np.diff(taus)))])
    return float(np.min(E[0] * np.exp(cum) - E))
