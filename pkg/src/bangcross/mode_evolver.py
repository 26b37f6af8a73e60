"""Single-mode (and batched) evolution of the renormalized field.

Away from the bang surface a mode obeys
``phi'' + (lam + rho + q) phi = g``.  Near ``tau = 0`` we switch to the
damped variable ``psi = phi * exp(int_0^tau A)`` which satisfies
``psi'' - 2 A psi' + (lam + rho) psi = g exp(int_0^tau A)`` and is
integrated as a Duhamel fixed point against the free group with
frequency ``omega = sqrt(lam + 1)``.

Everything is linear, so maps are built as per-mode 2x2 transfer
matrices plus an affine source column.  ``lam`` may be a scalar or an
array of eigenvalues (one batch of modes sharing ``rho``, ``q``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .quadrature import gauss_rule, graded_breakpoints
from .riccati import RiccatiSolution


class EvolutionError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModeProblem:
    lam: object                      # float or array of eigenvalues >= 0
    rho: float = 0.0
    q: Optional[Callable] = None     # effective mass squared, None -> 0
    g: Optional[Callable] = None     # source, tau-array -> (nm, k) complex

    @property
    def lams(self) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.lam, dtype=float))

    @property
    def omega(self) -> np.ndarray:
        return np.sqrt(self.lams + 1.0)

    @property
    def batched(self) -> bool:
        return np.ndim(self.lam) > 0

    def qv(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        if self.q is None:
            return np.zeros_like(tau)
        return np.asarray(self.q(tau), dtype=float) + 0.0 * tau

    def gv(self, tau) -> Optional[np.ndarray]:
        if self.g is None:
            return None
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        out = np.asarray(self.g(tau), dtype=complex)
        return np.broadcast_to(out, (len(self.lams), len(tau)))


@dataclass
class ModeState:
    tau: float
    phi: complex
    chi: complex

    def energy(self, lam: float) -> float:
        return float((lam + 1) * abs(self.phi) ** 2 + abs(self.chi) ** 2)


@dataclass
class BangPair:
    psi0: complex
    psi1: complex


@dataclass
class Transfer:
    """``(x0, x1) -> M @ (x0, x1) + c`` for every mode of a batch."""

    M: np.ndarray          # (nm, 2, 2)
    c: np.ndarray          # (nm, 2)

    @classmethod
    def identity(cls, nm: int) -> "Transfer":
        return cls(np.broadcast_to(np.eye(2), (nm, 2, 2)).astype(complex), np.zeros((nm, 2), complex))

    def apply(self, x0, x1, affine: bool = True):
        """Map data of shape ``(nm, ...)`` (or scalars for a single mode)."""
        nm = self.M.shape[0]
        x0, x1 = np.broadcast_arrays(np.asarray(x0, complex), np.asarray(x1, complex))
        x0 = x0.reshape(nm, -1) if x0.size % nm == 0 and x0.size >= nm else np.broadcast_to(x0, (nm, 1))
        x1 = x1.reshape(x0.shape) if x1.size == x0.size else np.broadcast_to(x1, x0.shape)
        M = self.M
        y0 = M[:, 0, 0, None] * x0 + M[:, 0, 1, None] * x1
        y1 = M[:, 1, 0, None] * x0 + M[:, 1, 1, None] * x1
        if affine:
            y0 = y0 + self.c[:, 0, None]
            y1 = y1 + self.c[:, 1, None]
        if y0.shape[1] == 1:
            return y0[:, 0], y1[:, 0]
        return y0, y1

    def then(self, other: "Transfer") -> "Transfer":
        """``other`` applied after ``self``."""
        return Transfer(other.M @ self.M, np.einsum("mij,mj->mi", other.M, self.c) + other.c)

    @classmethod
    def scalar(cls, nm: int, mat) -> "Transfer":
        mat = np.asarray(mat, dtype=complex)
        return cls(np.broadcast_to(mat, (nm, 2, 2)).copy(), np.zeros((nm, 2), complex))


def _squeeze(problem, x):
    return x if problem.batched else x[0]


# --- free group ------------------------------------------------------------------

def free_propagate(lam, state: ModeState, dtau: float) -> ModeState:
    w = np.sqrt(lam + 1.0)
    c, s = np.cos(w * dtau), np.sin(w * dtau)
    return ModeState(state.tau + dtau, state.phi * c + state.chi * s / w, -state.phi * w * s + state.chi * c)


# --- regular region ----------------------------------------------------------------

def _check_regular(ta, tb):
    if ta == tb:
        return
    if ta == 0 or tb == 0 or np.sign(ta) != np.sign(tb):
        raise EvolutionError(f"regular interval [{ta}, {tb}] touches the bang surface")


def regular_transfer(problem: ModeProblem, ta: float, tb: float, rtol: float = 1e-12,
                     atol: float = 1e-14) -> Transfer:
    """Transfer matrix of ``phi'' + (lam+rho+q) phi = g`` from ``ta`` to ``tb``."""
    _check_regular(ta, tb)
    lams = problem.lams
    nm = len(lams)
    if ta == tb:
        return Transfer.identity(nm)
    ncol = 3 if problem.g is not None else 2
    Y0 = np.zeros((nm, 2, ncol), complex)
    Y0[:, 0, 0] = 1
    Y0[:, 1, 1] = 1
    col_src = np.zeros(ncol)
    if ncol == 3:
        col_src[2] = 1

    def rhs(t, y):
        Y = y.reshape(nm, 2, ncol)
        k = lams + problem.rho + float(problem.qv(t))
        d = np.empty_like(Y)
        d[:, 0] = Y[:, 1]
        d[:, 1] = -k[:, None] * Y[:, 0]
        if ncol == 3:
            d[:, 1] += problem.gv(t)[:, 0][:, None] * col_src[None, :]
        return d.ravel()

    sol = solve_ivp(rhs, (ta, tb), Y0.ravel(), method="DOP853", rtol=rtol, atol=atol)
    if sol.status != 0:
        raise EvolutionError(f"regular solve failed near tau={sol.t[-1]:.6g}: {sol.message}")
    Y = sol.y[:, -1].reshape(nm, 2, ncol)
    c = Y[:, :, 2] if ncol == 3 else np.zeros((nm, 2), complex)
    return Transfer(Y[:, :, :2].copy(), c.copy())


def evolve_regular(problem: ModeProblem, state: ModeState, interval, tol: float = 1e-12) -> ModeState:
    ta, tb = interval
    if not np.isclose(state.tau, ta):
        raise ValueError("state is not at the start of the interval")
    T = regular_transfer(problem, ta, tb, rtol=tol, atol=tol * 1e-2)
    phi, chi = T.apply(state.phi, state.chi)
    return ModeState(tb, _squeeze(problem, phi), _squeeze(problem, chi))


def regular_trajectory(problem: ModeProblem, state: ModeState, taus, rtol: float = 1e-12,
                       atol: float = 1e-14):
    """``(phi, chi)`` arrays sampled at ``taus`` (monotone, starting at ``state.tau``)."""
    taus = np.asarray(taus, dtype=float)
    _check_regular(state.tau, taus[-1])
    lams = problem.lams
    nm = len(lams)

    def rhs(t, y):
        Y = y.reshape(nm, 2)
        d = np.empty_like(Y)
        d[:, 0] = Y[:, 1]
        d[:, 1] = -(lams + problem.rho + float(problem.qv(t))) * Y[:, 0]
        if problem.g is not None:
            d[:, 1] += problem.gv(t)[:, 0]
        return d.ravel()

    y0 = np.zeros((nm, 2), complex)
    y0[:, 0], y0[:, 1] = state.phi, state.chi
    sol = solve_ivp(rhs, (state.tau, taus[-1]), y0.ravel(), method="DOP853", t_eval=taus,
                    rtol=rtol, atol=atol)
    if sol.status != 0:
        raise EvolutionError(f"regular solve failed near tau={sol.t[-1]:.6g}: {sol.message}")
    Y = sol.y.reshape(nm, 2, -1)
    return _squeeze(problem, Y[:, 0]), _squeeze(problem, Y[:, 1])


# --- psi variables -----------------------------------------------------------------

def _weight(A, tau, anchor):
    if A is None:
        return 1.0
    return np.exp(A.intA0(tau) - A.intA0(anchor))


def to_psi(state: ModeState, A: Optional[RiccatiSolution], anchor: float = 0.0):
    """``(tau, psi, dpsi)`` with weight ``exp(int_anchor^tau A)``."""
    if A is None:
        return state.tau, state.phi, state.chi
    w = _weight(A, state.tau, anchor)
    return state.tau, state.phi * w, (state.chi + A.A(state.tau) * state.phi) * w


def from_psi(tau: float, psi, dpsi, A: Optional[RiccatiSolution], anchor: float = 0.0) -> ModeState:
    if A is None:
        return ModeState(tau, psi, dpsi)
    w = _weight(A, tau, anchor)
    phi = psi / w
    return ModeState(tau, phi, dpsi / w - A.A(tau) * phi)


def psi_matrix(A: Optional[RiccatiSolution], tau: float) -> np.ndarray:
    """``(phi, chi) -> (psi, dpsi)`` in the int_0 gauge."""
    if A is None:
        return np.eye(2)
    w = float(np.exp(A.intA0(tau)))
    return np.array([[w, 0.0], [w * float(A.A(tau)), w]])


# --- damped layer ----------------------------------------------------------------------

@dataclass
class DampedOptions:
    nodes: int = 20
    ratio: float = 0.5
    floor: float = 1e-12
    tol: float = 1e-15
    max_iter: int = 300
    contraction: float = 0.5     # target bound for int(|1-rho-V| + 2|A|) per cell
    max_phase: float = 6.0       # omega * cell width


@dataclass
class DampedLog:
    cells: int = 0
    iterations: list = field(default_factory=list)
    ratios: list = field(default_factory=list)


def _coefficients(problem, A, sigma):
    """Load coefficients ``(1 - rho - V)``, ``2A`` and the source ``F`` at nodes."""
    if A is None:
        a = 1.0 - problem.rho - problem.qv(sigma)
        b = np.zeros_like(sigma)
        E = np.ones_like(sigma)
    else:
        a = (1.0 - problem.rho) * np.ones_like(sigma)
        b = 2.0 * A.A(sigma)
        E = np.exp(A.intA0(sigma))
    F = None
    if problem.g is not None:
        F = problem.gv(sigma) * E[None, :]
    return a, b, F


def _cells(problem, A, t_from, t_to, opt: DampedOptions):
    pts = list(graded_breakpoints(t_from, t_to, opt.ratio, opt.floor))
    rule = gauss_rule(opt.nodes)
    wmax = float(problem.omega.max())
    out = []
    stack = [(pts[i], pts[i + 1]) for i in range(len(pts) - 1)][::-1]
    while stack:
        a, b = stack.pop()
        sig = a + (b - a) * (rule.x + 1) / 2
        ca, cb, _ = _coefficients(problem, A, sig)
        mass = abs(b - a) / 2 * np.sum(rule.w * (np.abs(ca) + np.abs(cb)))
        if (mass >= opt.contraction or wmax * abs(b - a) > opt.max_phase) and abs(b - a) > 1e-14:
            m = 0.5 * (a + b)
            if a == 0 or b == 0:
                # keep the grading toward 0 geometric
                m = (b if a == 0 else a) * 0.5
            stack.append((m, b))
            stack.append((a, m))
            continue
        if mass >= 1:
            raise EvolutionError(f"cannot reach a contraction on [{a}, {b}]")
        out.append((a, b))
    return out


def _cell_solve(problem, A, a, b, opt: DampedOptions, log: Optional[DampedLog]):
    """Picard solve of the Duhamel form on one cell for the three columns
    (unit psi data, unit dpsi data, pure source).

    Returns node times, node values (nm, 3, p) of psi and dpsi, and the
    end values (nm, 2, 3).
    """
    rule = gauss_rule(opt.nodes)
    w_ = problem.omega[:, None, None]
    d = (b - a) / 2
    sig = a + (b - a) * (rule.x + 1) / 2
    ca, cb, F = _coefficients(problem, A, sig)
    D = sig[:, None] - sig[None, :]
    Ks = d * rule.S[None] * np.sin(w_ * D) / w_
    Kc = d * rule.S[None] * np.cos(w_ * D)
    de = (b - sig)[None, :]
    ws = d * rule.w[None, :] * np.sin(problem.omega[:, None] * de) / problem.omega[:, None]
    wc = d * rule.w[None, :] * np.cos(problem.omega[:, None] * de)

    wn = problem.omega[:, None]
    ph = wn * (sig - a)[None, :]
    nm, p = len(problem.omega), opt.nodes
    free_u = np.zeros((nm, 3, p), complex)
    free_v = np.zeros((nm, 3, p), complex)
    free_u[:, 0], free_v[:, 0] = np.cos(ph), -wn * np.sin(ph)
    free_u[:, 1], free_v[:, 1] = np.sin(ph) / wn, np.cos(ph)
    src = np.zeros((nm, 3, p), complex)
    if F is not None:
        src[:, 2] = F

    U, V = free_u.copy(), free_v.copy()
    prev = np.inf
    for it in range(1, opt.max_iter + 1):
        L = ca[None, None, :] * U + cb[None, None, :] * V + src
        U_new = free_u + np.einsum("mij,mcj->mci", Ks, L)
        V_new = free_v + np.einsum("mij,mcj->mci", Kc, L)
        change = max(np.max(np.abs(U_new - U)), np.max(np.abs(V_new - V)))
        scale = max(1.0, np.max(np.abs(U_new)), np.max(np.abs(V_new)))
        U, V = U_new, V_new
        if log is not None and np.isfinite(prev) and prev > 0 and change > 0:
            log.ratios.append(change / prev)
        prev = change
        if change <= opt.tol * scale:
            break
    else:
        raise EvolutionError(f"Picard iteration stalled on cell [{a:.3e}, {b:.3e}]: change {change:.3e}")
    if log is not None:
        log.iterations.append(it)
        log.cells += 1
    L = ca[None, None, :] * U + cb[None, None, :] * V + src
    phe = problem.omega * (b - a)
    end = np.zeros((nm, 2, 3), complex)
    end[:, 0, 0], end[:, 1, 0] = np.cos(phe), -problem.omega * np.sin(phe)
    end[:, 0, 1], end[:, 1, 1] = np.sin(phe) / problem.omega, np.cos(phe)
    end[:, 0] += np.einsum("mj,mcj->mc", ws, L)
    end[:, 1] += np.einsum("mj,mcj->mc", wc, L)
    return sig, U, V, end


def damped_transfer(problem: ModeProblem, A: Optional[RiccatiSolution], t_from: float, t_to: float,
                    opt: Optional[DampedOptions] = None, log: Optional[DampedLog] = None,
                    trajectory: bool = False):
    """Transfer of ``(psi, dpsi)`` (int_0 gauge) from ``t_from`` to ``t_to``.

    One endpoint may be 0.  ``A=None`` means the undamped path where the
    full ``q`` stays in the load.  With ``trajectory=True`` also returns the
    per-cell node data needed to reconstruct the solution inside.
    """
    opt = opt or DampedOptions()
    nm = len(problem.lams)
    T = Transfer.identity(nm)
    traj = []
    for a, b in _cells(problem, A, t_from, t_to, opt):
        sig, U, V, end = _cell_solve(problem, A, a, b, opt, log)
        if trajectory:
            traj.append((sig, U, V, T))
        T = T.then(Transfer(end[:, :, :2], end[:, :, 2]))
    if trajectory:
        return T, traj
    return T


def damped_evolve(problem: ModeProblem, A: Optional[RiccatiSolution], psi_state, interval,
                  opt: Optional[DampedOptions] = None, trajectory: bool = False):
    """Evolve ``(psi, dpsi)`` across ``interval``; optionally return node samples
    ``(tau, psi, dpsi)`` along the way (ordered in the direction of travel)."""
    ta, tb = interval
    psi, dpsi = psi_state
    res = damped_transfer(problem, A, ta, tb, opt, trajectory=trajectory)
    if not trajectory:
        T = res
        y0, y1 = T.apply(psi, dpsi)
        return _squeeze(problem, y0), _squeeze(problem, y1)
    T, traj = res
    y0, y1 = T.apply(psi, dpsi)
    taus, P, DP = [], [], []
    for sig, U, V, Tin in traj:
        x0, x1 = Tin.apply(psi, dpsi)
        P.append(U[:, 0] * x0[:, None] + U[:, 1] * x1[:, None] + U[:, 2])
        DP.append(V[:, 0] * x0[:, None] + V[:, 1] * x1[:, None] + V[:, 2])
        taus.append(sig)
    taus = np.concatenate(taus)
    P, DP = np.concatenate(P, axis=1), np.concatenate(DP, axis=1)
    return (_squeeze(problem, y0), _squeeze(problem, y1)), (taus, _squeeze(problem, P), _squeeze(problem, DP))


# --- W maps ----------------------------------------------------------------------------

def W_transfer(problem: ModeProblem, A: Optional[RiccatiSolution], tau_h: float,
               opt: Optional[DampedOptions] = None) -> Transfer:
    """``(phi, chi)`` at ``tau_h`` -> ``(lim phi, lim(chi + A phi))`` at 0."""
    nm = len(problem.lams)
    return Transfer.scalar(nm, psi_matrix(A, tau_h)).then(damped_transfer(problem, A, tau_h, 0.0, opt))


def W_inverse_transfer(problem: ModeProblem, A: Optional[RiccatiSolution], tau_h: float,
                       opt: Optional[DampedOptions] = None) -> Transfer:
    """Bang pair at 0 -> ``(phi, chi)`` at ``tau_h``, integrated outward from 0."""
    nm = len(problem.lams)
    back = np.linalg.inv(psi_matrix(A, tau_h))
    return damped_transfer(problem, A, 0.0, tau_h, opt).then(Transfer.scalar(nm, back))


def limit_W(problem: ModeProblem, A: Optional[RiccatiSolution], state: ModeState,
            opt: Optional[DampedOptions] = None) -> BangPair:
    if A is not None and abs(state.tau) > A.h * (1 + 1e-12):
        raise ValueError("anchor lies outside the Riccati window")
    T = W_transfer(problem, A, state.tau, opt)
    p0, p1 = T.apply(state.phi, state.chi)
    return BangPair(_squeeze(problem, p0), _squeeze(problem, p1))


def inverse_W(problem: ModeProblem, A: Optional[RiccatiSolution], bang: BangPair, tau_h: float,
              opt: Optional[DampedOptions] = None) -> ModeState:
    T = W_inverse_transfer(problem, A, tau_h, opt)
    phi, chi = T.apply(bang.psi0, bang.psi1)
    return ModeState(tau_h, _squeeze(problem, phi), _squeeze(problem, chi))


def layer_trajectory(problem: ModeProblem, A: Optional[RiccatiSolution], state: ModeState,
                     opt: Optional[DampedOptions] = None):
    """Raw ``(tau, phi, chi)`` inside the damped layer, from ``state.tau`` to 0."""
    _, p, dp = to_psi(state, A)
    (_, _), (taus, P, DP) = damped_evolve(problem, A, (p, dp), (state.tau, 0.0), opt, trajectory=True)
    if A is None:
        return taus, P, DP
    w = np.exp(-A.intA0(taus))
    phi = P * w
    chi = DP * w - A.A(taus) * phi
    return taus, phi, chi


# --- energy diagnostics ------------------------------------------------------------------

def energy_identity_residual(problem: ModeProblem, taus, phi, chi, p: int = 16) -> float:
    """Max over consecutive samples of
    ``|Delta[(lam+1)|phi|^2 + |chi|^2] - int 2 Re(F conj chi)|`` with
    ``F = (1 - rho - q) phi + g``.

    ``phi``/``chi`` may be callables (dense output) or arrays; with arrays the
    right side uses the trapezoid rule, so sample densely.
    """
    lam = float(np.atleast_1d(problem.lam)[0])
    if callable(phi):
        rule = gauss_rule(p)
        worst = 0.0
        for a, b in zip(taus[:-1], taus[1:]):
            x = a + (b - a) * (rule.x + 1) / 2
            f, c = phi(x), chi(x)
            F = (1 - problem.rho - problem.qv(x)) * f
            if problem.g is not None:
                F = F + problem.gv(x)[0]
            rhs = (b - a) / 2 * np.sum(rule.w * 2 * np.real(F * np.conj(c)))
            Ea = (lam + 1) * abs(phi(a)) ** 2 + abs(chi(a)) ** 2
            Eb = (lam + 1) * abs(phi(b)) ** 2 + abs(chi(b)) ** 2
            worst = max(worst, abs(Eb - Ea - rhs))
        return float(worst)
    taus, phi, chi = map(np.asarray, (taus, phi, chi))
    F = (1 - problem.rho - problem.qv(taus)) * phi
    if problem.g is not None:
        F = F + problem.gv(taus)[0]
    integrand = 2 * np.real(F * np.conj(chi))
    E = (lam + 1) * np.abs(phi) ** 2 + np.abs(chi) ** 2
    rhs = 0.5 * (integrand[1:] + integrand[:-1]) * np.diff(taus)
    return float(np.max(np.abs(np.diff(E) - rhs)))


def dense_solution(problem: ModeProblem, state: ModeState, tb: float, rtol=1e-12, atol=1e-14):
    """Scalar-mode dense output ``(phi(tau), chi(tau))`` callables for diagnostics."""
    _check_regular(state.tau, tb)
    lam = float(np.atleast_1d(problem.lam)[0])

    def rhs(t, y):
        g = problem.gv(t)[0, 0] if problem.g is not None else 0.0
        return [y[1], -(lam + problem.rho + float(problem.qv(t))) * y[0] + g]

    sol = solve_ivp(rhs, (state.tau, tb), [complex(state.phi), complex(state.chi)], method="DOP853",
                    dense_output=True, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise EvolutionError(f"regular solve failed near tau={sol.t[-1]:.6g}")
    return (lambda t: sol.sol(t)[0]), (lambda t: sol.sol(t)[1])


def gronwall_regular(problem: ModeProblem, taus, phi, chi) -> float:
    """Margin of ``N(tau) <= (N0 + int|g|) exp(int(1+|rho|+|q|))``; ``>= 0`` means respected."""
    lam = float(np.atleast_1d(problem.lam)[0])
    taus = np.asarray(taus, dtype=float)
    N = np.sqrt((lam + 1) * np.abs(phi) ** 2 + np.abs(chi) ** 2)
    rate = 1 + abs(problem.rho) + np.abs(problem.qv(taus))
    G = np.zeros_like(taus) if problem.g is None else np.abs(problem.gv(taus)[0])
    step = np.abs(np.diff(taus))
    cum_rate = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * step)])
    cum_g = np.concatenate([[0.0], np.cumsum(0.5 * (G[1:] + G[:-1]) * step)])
    bound = (N[0] + cum_g) * np.exp(cum_rate)
    return float(np.min(bound - N))


def gronwall_damped(problem: ModeProblem, A: RiccatiSolution, taus, psi, dpsi) -> float:
    """Margin of ``M(tau) <= (M0 + int|F|) exp(int(1+|rho|+2|A|))`` in the damped layer."""
    lam = float(np.atleast_1d(problem.lam)[0])
    taus = np.asarray(taus, dtype=float)
    M = np.sqrt((lam + 1) * np.abs(psi) ** 2 + np.abs(dpsi) ** 2)
    rate = 1 + abs(problem.rho) + 2 * np.abs(A.A(taus))
    _, _, F = _coefficients(problem, A, taus)
    G = np.zeros_like(taus) if F is None else np.abs(F[0])
    step = np.abs(np.diff(taus))
    cum_rate = np.concatenate([[0.0], np.cumsum(np.maximum(rate[1:], rate[:-1]) * step)])
    cum_g = np.concatenate([[0.0], np.cumsum(np.maximum(G[1:], G[:-1]) * step)])
    bound = (M[0] + cum_g) * np.exp(cum_rate)
    return float(np.min(bound - M))
