import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cp2tori.errors import BadDegree, SupportViolation
from cp2tori.flow import clifford_seed, integrate_flow, random_admissible_seed
from cp2tori.grid import PlanarGrid
from cp2tori.loop_algebra import B, LoopElement, eval_loop, star
from cp2tori.spectral import (SpectralCoeffs, curve_eval, genus_data, laurent_det, nonsingularity_probe,
                              spectral_coeffs)


def sample_det(xi, n=64):
    """Laurent coefficients of det xi(nu) by FFT on the circle (independent oracle)."""
    nus = np.exp(2j * np.pi * np.arange(n) / n)
    vals = np.array([np.linalg.det(eval_loop(xi, v)) for v in nus])
    return np.fft.fft(vals) / n  # index k -> coefficient of nu^k (mod n)


def test_clifford_coefficients():
    c = spectral_coeffs(clifford_seed())
    # 1/2 tr(xi^2) has nu^0 term tr(B star B) = -tr(B B^dagger) = -3
    assert c.p == {0: -3}
    # det(nu B) = nu^3 det B = -i nu^3, and det(nu^-1 star B) = -i nu^-3
    assert abs(np.linalg.det(B) + 1j) < 1e-15
    assert c.q == {-1: -1j, 1: -1j}


def test_coefficients_match_fft_oracle():
    xi = random_admissible_seed(7, 4)
    c = spectral_coeffs(xi)
    f = sample_det(xi)
    for k, v in c.q.items():
        assert abs(f[(3 * k) % 64] - v) < 1e-10 * c.scale()


def test_homogeneity():
    xi = random_admissible_seed(7, 5)
    t = 1.7
    c1, ct = spectral_coeffs(xi), spectral_coeffs(LoopElement(7, t * xi.coeffs, True))
    for k in c1.p:
        assert abs(ct.p[k] - t**2 * c1.p[k]) < 1e-10 * abs(ct.p[k]) + 1e-12
    for k in c1.q:
        assert abs(ct.q[k] - t**3 * c1.q[k]) < 1e-10 * abs(ct.q[k]) + 1e-12


def test_isospectral_snapshots():
    fld = integrate_flow(random_admissible_seed(7, 6), PlanarGrid.over((0, 1), (0, 1), 9), tol=1e-10)
    a, b = spectral_coeffs(fld.at(0, 0)), spectral_coeffs(fld.at(8, 5))
    assert np.abs(a.as_vector() - b.as_vector()).max() < 1e-7 * a.scale()


def test_support_violation():
    xi = random_admissible_seed(7, 8)
    c = xi.coeffs.copy()
    c[7 + 1] = c[7 + 1] + 0.5j * np.diag([0, 1, -1])  # an M_0 pattern at degree 1
    with pytest.raises(SupportViolation):
        spectral_coeffs(LoopElement(7, c, False))


def test_curve_eval_examples():
    xi = clifford_seed()
    c = spectral_coeffs(xi)
    for mu in np.linalg.eigvals(eval_loop(xi, 1.0)):
        assert abs(curve_eval(c, 1.0, mu)) < 1e-12
    nu = np.exp(0.4j)
    assert abs(curve_eval(c, nu, 0) + np.linalg.det(eval_loop(xi, nu))) < 1e-13


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.floats(0, 2 * np.pi), st.floats(0.5, 2.0))
def test_curve_sigma_symmetry_and_roots(seed, t, r):
    xi = random_admissible_seed(7, seed)
    c = spectral_coeffs(xi)
    nu = r * np.exp(1j * t)
    mu = 0.3 + 0.8j
    assert abs(curve_eval(c, nu, mu) + curve_eval(c, -nu, -mu)) < 1e-9 * c.scale() ** 1.5
    for m in np.linalg.eigvals(eval_loop(xi, nu, off_circle=True)):
        assert abs(curve_eval(c, nu, m)) < 1e-9 * max(1, abs(m)) ** 3 * c.scale()


@settings(max_examples=30)
@given(st.integers(0, 2**31))
def test_conjugate_symmetry(seed):
    c = spectral_coeffs(random_admissible_seed(7, seed))
    for k in c.p:
        assert abs(c.p[-k] - np.conj(c.p[k])) < 1e-10 * c.scale()
    for k in c.q:
        assert abs(c.q[-k] + np.conj(c.q[k])) < 1e-10 * c.scale()
    assert set(c.p) == set(range(-2, 3)) and set(c.q) == set(range(-7, 8, 2))


def test_genus_data():
    g = genus_data(1)
    assert (g.g_circle, g.g_hat, g.g) == (4, 2, 1)
    g = genus_data(7)
    assert (g.g_circle, g.g_hat, g.g) == (40, 14, 7) and g.g_hat == 2 * g.g
    with pytest.raises(BadDegree):
        genus_data(3)


def test_probe_generic_seed():
    rep = nonsingularity_probe(spectral_coeffs(random_admissible_seed(7, 7)))
    assert not rep.flags and not rep.singular
    # Riemann-Hurwitz: 2 g_hat = 4 d simple branch points, closed under lambda -> 1/conj(lambda)
    assert len(rep.branch_lambda) == rep.expected_branch_count == 28
    assert rep.tau_pairing_residual < 1e-8


def test_probe_flags_double_eigenvalue():
    # xi(1) = B - B^dagger = i (P + P^T) has eigenvalues i(2, -1, -1)
    xi = clifford_seed()
    ev = np.sort(np.linalg.eigvals(eval_loop(xi, 1.0)).imag)
    assert abs(ev[0] - ev[1]) < 1e-12
    rep = nonsingularity_probe(spectral_coeffs(xi))
    assert any(abs(f - 1) < 1e-12 for f in rep.flags)
    assert len(rep.branch_lambda) == 4 * genus_data(1).d and rep.singular
    with pytest.raises(ValueError):
        nonsingularity_probe(spectral_coeffs(xi), n_samples=4)


def test_laurent_det_examples():
    # det of a constant matrix stack is the ordinary determinant
    m = np.array([[[1, 2, 0], [0, 1, 3], [4, 0, 1]]], dtype=complex)
    assert abs(laurent_det(m)[0] - np.linalg.det(m[0])) < 1e-12


def test_roundtrip():
    c = spectral_coeffs(random_admissible_seed(7, 1))
    back = SpectralCoeffs.from_dict(c.to_dict())
    assert back.p == c.p and back.q == c.q
    assert "coeff" in c.table()
