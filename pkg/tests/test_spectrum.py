import numpy as np
import pytest
from hypothesis import given, strategies as st

from bangcross.spectrum import (Mode, SpectrumError, SpectrumSpec, curvature_potential, enumerate_modes,
                                expand_eigenvalues, sobolev_norm)


def test_circle_modes():
    modes = enumerate_modes(SpectrumSpec.flat_torus([2 * np.pi]), 4.5)
    assert expand_eigenvalues(modes) == pytest.approx([0, 1, 1, 4, 4])


def test_unit_sphere_modes():
    modes = enumerate_modes(SpectrumSpec.round_sphere(2), 2.5)
    assert [(m.eigenvalue, m.multiplicity) for m in modes] == [(0.0, 1), (2.0, 3)]


def test_explicit_identity():
    modes = enumerate_modes(SpectrumSpec.explicit([(0, 1), (5, 2)], 3), 10)
    assert [(m.eigenvalue, m.multiplicity) for m in modes] == [(0.0, 1), (5.0, 2)]


@pytest.mark.parametrize("entries", [[(5, 1), (0, 1)], [(-1, 1)], [(0, 0)]])
def test_explicit_validation(entries):
    with pytest.raises(SpectrumError):
        SpectrumSpec.explicit(entries, 3)


def test_torus_multiplicities_count_lattice_points():
    # T^3 with unit periods 2 pi: number of integer vectors with |k|^2 <= 3 is 1 + 6 + 12 + 8
    modes = enumerate_modes(SpectrumSpec.flat_torus([2 * np.pi] * 3), 3)
    assert sum(m.multiplicity for m in modes) == 27
    assert [m.multiplicity for m in modes] == [1, 6, 12, 8]


def test_sphere_multiplicities_s3():
    # S^3: l(l+2), multiplicity (l+1)^2
    modes = enumerate_modes(SpectrumSpec.round_sphere(3), 15)
    assert [(m.eigenvalue, m.multiplicity) for m in modes] == [(0, 1), (3, 4), (8, 9), (15, 16)]


def test_sobolev_examples():
    assert sobolev_norm([(Mode(3.0, 1, 0), 1.0)], 1) == pytest.approx(2.0)
    coeffs = [(Mode(0.0, 1, 0), 2.0), (Mode(3.0, 1, 1), 1.0)]
    assert sobolev_norm(coeffs, -1) == pytest.approx(np.sqrt(4 + 0.25))
    assert sobolev_norm(coeffs, 0) == pytest.approx(np.sqrt(5.0))


def test_curvature_potential():
    assert curvature_potential(SpectrumSpec.flat_torus([1.0] * 3)) == 0
    assert curvature_potential(SpectrumSpec.round_sphere(3)) == pytest.approx(1.0)
    assert curvature_potential(SpectrumSpec.round_sphere(2)) == pytest.approx(0.25)


@given(st.floats(0, 30), st.floats(0, 30))
def test_mode_count_monotone(a, b):
    spec = SpectrumSpec.flat_torus([2 * np.pi, 3.0])
    lo, hi = sorted((a, b))
    assert len(enumerate_modes(spec, lo)) <= len(enumerate_modes(spec, hi))


coeff_lists = st.lists(st.tuples(st.floats(0, 50), st.integers(1, 4),
                                 st.complex_numbers(max_magnitude=10, allow_nan=False)), min_size=1, max_size=6)


def _coeffs(raw):
    return [(Mode(lam, m, i), a) for i, (lam, m, a) in enumerate(raw)]


@given(coeff_lists, st.floats(-2, 2), st.floats(-2, 2))
def test_sobolev_monotone_in_s(raw, s1, s2):
    c = _coeffs(raw)
    lo, hi = sorted((s1, s2))
    assert sobolev_norm(c, lo) <= sobolev_norm(c, hi) * (1 + 1e-12) + 1e-300


@given(coeff_lists, st.complex_numbers(max_magnitude=5, allow_nan=False), st.floats(-1, 2))
def test_sobolev_homogeneous(raw, k, s):
    c = _coeffs(raw)
    scaled = [(m, k * a) for m, a in c]
    assert sobolev_norm(scaled, s) == pytest.approx(abs(k) * sobolev_norm(c, s), rel=1e-9, abs=1e-12)


@given(coeff_lists, st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False), min_size=6, max_size=6))
def test_sobolev_triangle(raw, other):
    c = _coeffs(raw)
    d = [(m, other[i]) for i, (m, _) in enumerate(c)]
    s = [(m, a + b) for (m, a), (_, b) in zip(c, d)]
    assert sobolev_norm(s, 1) <= sobolev_norm(c, 1) + sobolev_norm(d, 1) + 1e-9
