"""Geometrically graded meshes with Gauss-Legendre cells.

Every coefficient that blows up at the bang surface (``ln|tau|``,
``1/|tau|``) is smooth on a cell ``[a, a/r]`` once the cells are graded
toward 0, so a fixed Gauss-Legendre rule per cell converges exponentially.
Internally everything is parametrised by the distance ``s = |tau|``; the
signed time is ``tau = sign * s``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre


@dataclass(frozen=True)
class GaussRule:
    x: np.ndarray        # nodes on [-1, 1], ascending
    w: np.ndarray        # quadrature weights
    S: np.ndarray        # S[i, j] = int_{-1}^{x_i} l_j(x) dx
    bary: np.ndarray     # barycentric weights


@lru_cache(maxsize=None)
def gauss_rule(p: int) -> GaussRule:
    x, w = legendre.leggauss(p)
    V = legendre.legvander(x, p - 1)
    coef = np.linalg.inv(V)  # column j: Legendre coefficients of l_j
    S = np.empty((p, p))
    for j in range(p):
        S[:, j] = legendre.legval(x, legendre.legint(coef[:, j], lbnd=-1))
    bary = (-1.0) ** np.arange(p) * np.sqrt((1 - x**2) * w)
    for arr in (x, w, S, bary):
        arr.setflags(write=False)
    return GaussRule(x, w, S, bary)


@dataclass(frozen=True)
class GradedMesh:
    """Cells ``[outer*r**(j+1), outer*r**j]`` down to ``floor``, then ``[0, floor']``.

    ``edges`` holds the cell boundaries in ``s = |tau|``, ascending and
    starting at 0.
    """

    sign: int
    outer: float
    ratio: float = 0.5
    floor: float = 1e-12
    nodes: int = 16
    edges: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise ValueError("sign must be -1 (hat) or +1 (check)")
        if not (self.outer > 0 and 0 < self.ratio < 1 and self.floor > 0):
            raise ValueError("invalid graded mesh parameters")
        levels = [self.outer]
        while levels[-1] * self.ratio >= self.floor:
            levels.append(levels[-1] * self.ratio)
        edges = np.array([0.0] + levels[::-1])
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @property
    def rule(self) -> GaussRule:
        return gauss_rule(self.nodes)

    @property
    def ncells(self) -> int:
        return len(self.edges) - 1

    @property
    def s_nodes(self) -> np.ndarray:
        """Node distances, shape (ncells, p), cells ordered from 0 outward."""
        lo, hi = self.edges[:-1, None], self.edges[1:, None]
        return lo + (hi - lo) * (self.rule.x[None, :] + 1) / 2

    @property
    def tau_nodes(self) -> np.ndarray:
        return self.sign * self.s_nodes

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def integrate(self, values: np.ndarray) -> float:
        """``int |f| ds`` style plain integral over the whole mesh of node values."""
        return float(np.sum(self.widths[:, None] / 2 * self.rule.w[None, :] * values))

    def cumulative_from_zero(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``F(s) = int_0^s f`` at every node and at every edge (in ``s``)."""
        h = self.widths[:, None] / 2
        within = h * (values @ self.rule.S.T)
        per_cell = h[:, 0] * (values @ self.rule.w)
        at_edges = np.concatenate([[0.0], np.cumsum(per_cell)])
        return at_edges[:-1, None] + within, at_edges

    def cumulative_from_outer(self, values: np.ndarray) -> np.ndarray:
        """``G(s) = int_s^outer f`` at every node."""
        F_nodes, F_edges = self.cumulative_from_zero(values)
        return F_edges[-1] - F_nodes


class PiecewiseTable:
    """Piecewise-polynomial function tabulated at the Gauss nodes of a mesh.

    Evaluation is barycentric Lagrange interpolation inside the cell that
    contains ``|tau|``; it is spectrally accurate for the log-type
    singular functions used here.
    """

    def __init__(self, mesh: GradedMesh, values: np.ndarray):
        values = np.asarray(values)
        if values.shape != (mesh.ncells, mesh.nodes):
            raise ValueError("table shape does not match mesh")
        self.mesh = mesh
        self.values = values

    @property
    def s_max(self) -> float:
        return float(self.mesh.edges[-1])

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        scalar = tau.ndim == 0
        t = np.atleast_1d(tau).ravel()
        s = self.mesh.sign * t
        if np.any(s < 0) or np.any(s > self.s_max * (1 + 1e-12)):
            raise ValueError("evaluation point outside the tabulated side interval")
        edges = self.mesh.edges
        k = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, self.mesh.ncells - 1)
        lo, hi = edges[k], edges[k + 1]
        x = 2 * (s - lo) / (hi - lo) - 1
        rule = self.mesh.rule
        diff = x[:, None] - rule.x[None, :]
        exact = diff == 0
        diff[exact] = 1.0
        c = rule.bary[None, :] / diff
        vals = self.values[k]
        out = np.sum(c * vals, axis=1) / np.sum(c, axis=1)
        hit = exact.any(axis=1)
        if hit.any():
            out[hit] = vals[hit][exact[hit]]
        return out[0] if scalar else out.reshape(tau.shape)


def cell_nodes(a: float, b: float, p: int) -> np.ndarray:
    """Gauss nodes mapped to the oriented interval from ``a`` to ``b``."""
    rule = gauss_rule(p)
    return a + (b - a) * (rule.x + 1) / 2


def graded_breakpoints(start: float, stop: float, ratio: float = 0.5,
                       floor: float = 1e-12) -> np.ndarray:
    """Breakpoints from ``start`` to ``stop`` graded toward whichever end is 0.

    Exactly one of ``start``/``stop`` may be 0; the other endpoint's sign
    fixes the side.  Points are returned in the direction of travel.
    """
    if start == stop:
        return np.array([start, stop])
    if start != 0 and stop != 0:
        if np.sign(start) != np.sign(stop):
            raise ValueError("interval crosses 0; split it at the bang surface")
        inner, outer = sorted([start, stop], key=abs)
        sgn = np.sign(outer)
        pts = [abs(outer)]
        while pts[-1] * ratio > abs(inner) * (1 + 1e-12):
            pts.append(pts[-1] * ratio)
        pts.append(abs(inner))
        pts = sgn * np.array(pts)
        return pts if abs(start) > abs(stop) else pts[::-1]
    outer = start if stop == 0 else stop
    pts = [abs(outer)]
    while pts[-1] * ratio >= floor:
        pts.append(pts[-1] * ratio)
    pts.append(0.0)
    pts = np.sign(outer) * np.array(pts)
    return pts if stop == 0 else pts[::-1]


def _log_gauss(f, lo, hi, p):
    """``int_lo^hi f(s) ds`` with ``s = exp(u)``; exact for ``1/s`` integrands."""
    rule = gauss_rule(p)
    ulo, uhi = np.log(lo), np.log(hi)
    u = ulo + (uhi - ulo) * (rule.x + 1) / 2
    s = np.exp(u)
    return (uhi - ulo) / 2 * np.sum(rule.w * f(s) * s)


def outer_integrals(mesh: GradedMesh, f) -> np.ndarray:
    """``int_s^outer f(sigma) dsigma`` at every node, ``f`` given as a function of ``s``.

    Works for integrands that are not integrable at 0 (``1/s``): the
    innermost cell is handled in the log variable, node by node.
    """
    p = mesh.nodes
    s = mesh.s_nodes
    vals = np.asarray(f(s[1:]), dtype=float)
    h = mesh.widths[1:, None] / 2
    per_cell = h[:, 0] * (vals @ mesh.rule.w)
    within = h * (vals @ mesh.rule.S.T)
    above = np.concatenate([np.cumsum(per_cell[::-1])[::-1][1:], [0.0]])
    out = np.empty_like(s)
    out[1:] = above[:, None] + per_cell[:, None] - within
    top0 = per_cell.sum()
    e1 = mesh.edges[1]
    out[0] = [top0 + _log_gauss(f, si, e1, p) for si in s[0]]
    return out


def zero_integrals(mesh: GradedMesh, f) -> np.ndarray:
    """``int_0^s f`` at every node for ``f`` integrable at 0 (``|s|**-0.5`` is fine)."""
    from scipy import integrate

    s = mesh.s_nodes
    e1 = mesh.edges[1]
    inner, _ = integrate.quad(lambda x: float(f(np.array([x]))[0]), 0.0, e1,
                              epsabs=1e-300, epsrel=1e-13, limit=200)
    outer = outer_integrals(mesh, f)
    total = inner + outer[0, 0] - _log_gauss(f, s[0, 0], e1, mesh.nodes)
    return total - outer


def integrate_between(f, t1: float, t2: float, p: int = 20, ratio: float = 0.5,
                      floor: float = 1e-14) -> float:
    """``int_{t1}^{t2} f(tau) dtau`` on a mesh graded toward 0 (same side only)."""
    if t1 == t2:
        return 0.0
    pts = graded_breakpoints(t1, t2, ratio, floor)
    rule = gauss_rule(p)
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        # the innermost sliver next to 0 contributes O(floor) for integrable f
        x = a + (b - a) * (rule.x + 1) / 2
        total += (b - a) / 2 * np.sum(rule.w * f(x))
    return float(total)
