"""Spatial manifold reduced to its Laplace-Beltrami spectrum."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

DEDUP_RTOL = 1e-12


class SpectrumError(ValueError):
    pass


@dataclass(frozen=True)
class Mode:
    eigenvalue: float
    multiplicity: int
    index: int


@dataclass(frozen=True)
class SpectrumSpec:
    """One of ``flat_torus``, ``round_sphere`` or ``explicit``.

    Use the constructors :meth:`flat_torus`, :meth:`round_sphere`,
    :meth:`explicit`; they fill in the scalar curvature.
    """

    kind: str
    dimension: int
    scalar_curvature: float
    periods: tuple[float, ...] = ()
    radius: float = 1.0
    entries: tuple[tuple[float, int], ...] = ()

    @classmethod
    def flat_torus(cls, periods: Sequence[float]) -> "SpectrumSpec":
        periods = tuple(float(L) for L in periods)
        if not periods or any(L <= 0 for L in periods):
            raise SpectrumError("torus periods must be positive")
        return cls("flat_torus", len(periods), 0.0, periods=periods)

    @classmethod
    def round_sphere(cls, dimension: int, radius: float = 1.0) -> "SpectrumSpec":
        if dimension < 1 or radius <= 0:
            raise SpectrumError("sphere needs dimension >= 1 and radius > 0")
        R = dimension * (dimension - 1) / radius**2
        return cls("round_sphere", dimension, R, radius=float(radius))

    @classmethod
    def explicit(cls, entries: Sequence[tuple[float, int]], dimension: int,
                 scalar_curvature: float = 0.0) -> "SpectrumSpec":
        entries = tuple((float(lam), int(m)) for lam, m in entries)
        lams = [lam for lam, _ in entries]
        if any(lam < 0 for lam in lams):
            raise SpectrumError("explicit spectrum has a negative eigenvalue")
        if any(m < 1 for _, m in entries):
            raise SpectrumError("multiplicities must be >= 1")
        if lams != sorted(lams):
            raise SpectrumError("explicit spectrum must be sorted ascending")
        if dimension < 1:
            raise SpectrumError("dimension must be >= 1")
        return cls("explicit", int(dimension), float(scalar_curvature), entries=entries)


def _torus_pairs(periods, cutoff):
    kmax = [int(np.floor(np.sqrt(cutoff) * L / (2 * np.pi))) for L in periods]
    ranges = [range(-k, k + 1) for k in kmax]
    for ks in itertools.product(*ranges):
        lam = sum((2 * np.pi * k / L) ** 2 for k, L in zip(ks, periods))
        if lam <= cutoff * (1 + DEDUP_RTOL):
            yield lam, 1


def _sphere_pairs(n, r, cutoff):
    ell = 0
    while True:
        lam = ell * (ell + n - 1) / r**2
        if lam > cutoff * (1 + DEDUP_RTOL):
            return
        if n == 1:
            mult = 1 if ell == 0 else 2
        else:
            mult = comb(ell + n, n) - comb(ell + n - 2, n)
        yield lam, mult
        ell += 1


def enumerate_modes(spec: SpectrumSpec, cutoff: float) -> list[Mode]:
    """Eigenvalues ``<= cutoff`` with multiplicities, numerically equal ones merged."""
    if cutoff < 0:
        raise SpectrumError("cutoff must be >= 0")
    if spec.kind == "flat_torus":
        pairs = _torus_pairs(spec.periods, cutoff)
    elif spec.kind == "round_sphere":
        pairs = _sphere_pairs(spec.dimension, spec.radius, cutoff)
    elif spec.kind == "explicit":
        lams = [lam for lam, _ in spec.entries]
        if lams != sorted(lams) or any(lam < 0 for lam in lams):
            raise SpectrumError("explicit spectrum must be sorted and nonnegative")
        pairs = [(lam, m) for lam, m in spec.entries if lam <= cutoff]
    else:
        raise SpectrumError(f"unknown spectrum kind {spec.kind!r}")

    merged: list[list] = []
    for lam, m in sorted(pairs, key=lambda p: p[0]):
        if merged and abs(lam - merged[-1][0]) <= DEDUP_RTOL * max(1.0, abs(lam)):
            merged[-1][1] += m
        else:
            merged.append([lam, m])
    return [Mode(float(lam), int(m), i) for i, (lam, m) in enumerate(merged)]


def expand_eigenvalues(modes: Sequence[Mode]) -> list[float]:
    """Eigenvalues repeated by multiplicity (handy for small checks)."""
    return [m.eigenvalue for m in modes for _ in range(m.multiplicity)]


def sobolev_norm(coefficients, s: float) -> float:
    """``sqrt(sum mult * (lam + 1)**s * |a|**2)`` over ``(Mode, amplitude)`` pairs."""
    total = 0.0
    for mode, amp in coefficients:
        total += mode.multiplicity * (mode.eigenvalue + 1.0) ** s * abs(amp) ** 2
    return float(np.sqrt(total))


def curvature_potential(spec: SpectrumSpec) -> float:
    """The conformal-coupling potential ``(n-1)/(4n) R``."""
    n = spec.dimension
    return (n - 1) / (4 * n) * spec.scalar_curvature
