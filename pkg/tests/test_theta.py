import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cp2tori.errors import (ConvergenceFailure, NearZeroTheta, SingularSolution, UnitarityFailure,
                            ValidationError)
from cp2tori.grid import PlanarGrid
from cp2tori.surface import tzitzeica_residual
from cp2tori.theta import (PointData, PrymData, RiemannData, ThetaSolutionData, baker_akhiezer_psi,
                           conjugation_check, frame_from_ba, omega_from_theta, pairing_omega,
                           tail_bound, theta_eval, theta_log_derivatives, truncation, vacuum_fixture)

FIXTURE = Path(__file__).parent / "data" / "genus1_calibration.json"


def _riemann(g, seed=0):
    """Random symmetric B with -Re B positive definite."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(g, g))
    A = X @ X.T + g * np.eye(g)
    Y = rng.normal(size=(g, g))
    return RiemannData(-A + 1j * (Y + Y.T))


def _prym2():
    P0 = np.array([[-7.0, 1.2], [1.2, -5.0]])
    return PrymData(P0 + 1j * np.pi * (np.ones((2, 2)) - np.eye(2)))


@pytest.fixture(scope="module")
def fixture_data():
    return ThetaSolutionData.from_dict(json.loads(FIXTURE.read_text()))


def test_jacobi_value():
    val = theta_eval(RiemannData([[-2 * np.pi]]), [0.0], eps=1e-14)
    ref = sum(np.exp(-np.pi * n * n) for n in range(-40, 41))
    assert abs(val - 1.0864348112133080) < 1e-14
    assert abs(val - ref) < 1e-14


def test_against_direct_sum_genus2():
    data = _riemann(2, 3)
    z = np.array([0.4 - 0.2j, -0.3 + 1.1j])
    r = np.arange(-25, 26)
    N = np.stack(np.meshgrid(r, r, indexing="ij"), -1).reshape(-1, 2)
    ref = np.sum(np.exp(0.5 * np.einsum("ki,ij,kj->k", N, data.B, N) + N @ z))
    assert abs(theta_eval(data, z) - ref) < 1e-12 * abs(ref)


@pytest.mark.parametrize("g", [1, 2, 3])
def test_quasi_periodicity_and_evenness(g):
    data = _riemann(g, g)
    rng = np.random.default_rng(g)
    z = rng.normal(size=(5, g)) + 1j * rng.normal(size=(5, g))
    t = theta_eval(data, z)
    for k in range(g):
        e = np.zeros(g)
        e[k] = 1
        assert np.max(np.abs(theta_eval(data, z + 2j * np.pi * e) - t) / np.abs(t)) < 1e-11
    assert np.max(np.abs(theta_eval(data, -z) - t) / np.abs(t)) < 1e-11


def test_b_period_shift():
    # theta(z + B e_k) = exp(-B_kk / 2 - z_k) theta(z)
    data = _riemann(2, 5)
    z = np.array([0.3 + 0.2j, -0.5 + 0.7j])
    shifted = theta_eval(data, z + data.B[:, 0])
    expect = np.exp(-data.B[0, 0] / 2 - z[0]) * theta_eval(data, z)
    assert abs(shifted - expect) < 1e-11 * abs(expect)


def test_large_real_part_is_recentred():
    data = RiemannData([[-2 * np.pi]])
    z = np.array([40.0 + 0.3j])
    # shifting Re z by 2 pi... is a B-period: compare against direct sum
    n = np.arange(-60, 60)
    ref = np.sum(np.exp(-np.pi * n * n + n * z[0]))
    assert abs(theta_eval(data, z) - ref) < 1e-12 * abs(ref)


def test_log_derivatives_vs_fd():
    data = _riemann(2, 7)
    z = np.array([0.2 + 0.4j, -0.1 + 0.3j])
    d1 = np.array([1.0, 0.5j])
    d2 = np.array([0.3 - 0.2j, 1.0])
    first, second = theta_log_derivatives(data, z, d1, d2)
    f = lambda w: np.log(theta_eval(data, w))  # noqa: E731
    h = 1e-4
    fd1 = (f(z + h * d1) - f(z - h * d1)) / (2 * h)
    fd2 = (f(z + h * d1 + h * d2) - f(z + h * d1 - h * d2) - f(z - h * d1 + h * d2)
           + f(z - h * d1 - h * d2)) / (4 * h * h)
    assert abs(first - fd1) < 1e-6 * max(1, abs(fd1))
    assert abs(second - fd2) < 1e-6 * max(1, abs(fd2))


def test_log_derivative_odd_at_zero_and_linear():
    data = RiemannData([[-2 * np.pi]])
    first, second = theta_log_derivatives(data, [0.0], [1.0], [1.0])
    assert abs(first) < 1e-14
    h = 1e-4
    f = lambda t: np.log(theta_eval(data, [t]))  # noqa: E731
    fd = (f(h) - 2 * f(0) + f(-h)) / h**2
    assert abs(second - fd) < 1e-6 * abs(fd)
    d2 = _riemann(2, 1)
    z = np.array([0.1 + 0.2j, 0.3j])
    a, _ = theta_log_derivatives(d2, z, [1, 0])
    b, _ = theta_log_derivatives(d2, z, [0, 1])
    c, _ = theta_log_derivatives(d2, z, [1, 1])
    assert abs(a + b - c) < 1e-12 * max(1, abs(c))


def test_thread_count_bitwise():
    data = _riemann(2, 11)
    rng = np.random.default_rng(0)
    z = rng.normal(size=(300, 2)) + 1j * rng.normal(size=(300, 2))
    a = theta_eval(data, z, threads=1)
    b = theta_eval(data, z, threads=4)
    assert np.array_equal(a, b)
    s1 = theta_log_derivatives(data, z, [1, 0], [0, 1], threads=1)
    s4 = theta_log_derivatives(data, z, [1, 0], [0, 1], threads=3)
    assert np.array_equal(s1[0], s4[0]) and np.array_equal(s1[1], s4[1])


def test_truncation_certificate():
    data = _riemann(3, 2)
    val, tr = theta_eval(data, np.zeros(3), eps=1e-10, certificate=True)
    assert tr.tail < 1e-10
    assert tr.tail == max(tail_bound(tr.radius, 3, np.linalg.eigvalsh(-data.B.real)[0], p) for p in range(3))
    tight = truncation(data, 1e-14)
    assert tight.n_points >= tr.n_points


def test_eps_range_and_matrix_checks():
    with pytest.raises(ValidationError):
        theta_eval(RiemannData([[-1.0]]), [0.0], eps=1e-3)
    with pytest.raises(ConvergenceFailure):
        RiemannData([[1.0]])
    with pytest.raises(ValidationError):
        RiemannData([[-2.0, 1.0], [0.0, -2.0]])
    with pytest.raises(ValidationError):
        theta_eval(_riemann(2), np.zeros(3))


def test_near_zero_guard():
    # theta vanishes at pi i + B/2 for g = 1
    B = -2 * np.pi
    with pytest.raises(NearZeroTheta):
        theta_eval(RiemannData([[B]]), [np.pi * 1j + B / 2])


def test_conjugation_check():
    g1 = conjugation_check(PrymData(np.array([[-2 * np.pi]])))
    assert g1["reality_flag"] and g1["residual"] < 1e-12
    P = _prym2()
    assert P.reality_flag
    assert conjugation_check(P)["residual"] < 1e-10
    bad = PrymData(np.array([[-7.0, 1.2 + 0.9j], [1.2 + 0.9j, -5.0]]))
    res = conjugation_check(bad)
    assert not res["reality_flag"] and res["residual"] > 1e-2


@settings(max_examples=25)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_conjugation_property(a, b, c, d):
    P = _prym2()
    z = np.array([a + 1j * b, c + 1j * d])
    t = theta_eval(P, z)
    assert abs(np.conj(t) - theta_eval(P, np.conj(z))) < 1e-10 * abs(t)


def test_fixture_omega(fixture_data):
    assert fixture_data.prym.reality_flag and fixture_data.conjugate_periods
    g = PlanarGrid.over((0, 1), (0, 1), 129)
    om = omega_from_theta(fixture_data, g)
    assert not om.warnings and not om.flagged
    assert om.imaginary_leak < 1e-9
    assert tzitzeica_residual(om.omega, g) < 1e-5
    cert = fixture_data.provenance["certificate"]
    assert cert["ode_residual"] < 1e-6


def test_flow_argument_imaginary(fixture_data):
    z = np.array([0.3 + 0.7j, -1.2 + 0.1j])
    arg = 1j * z[:, None] * fixture_data.U + 1j * np.conj(z)[:, None] * fixture_data.V - fixture_data.e
    assert np.abs(arg.real).max() < 1e-14


def test_fixture_threads_bitwise(fixture_data):
    g = PlanarGrid.over((0, 1), (0, 1), 33)
    a = omega_from_theta(fixture_data, g, threads=1).omega
    b = omega_from_theta(fixture_data, g, threads=4).omega
    assert np.array_equal(a, b)


def test_vacuum_omega_constant():
    data = ThetaSolutionData(PrymData(np.array([[-2 * np.pi]])), [0], [0], [0], 1.0)
    g = PlanarGrid.over((0, 1), (0, 1), 9)
    om = omega_from_theta(data, g)
    assert np.array_equal(om.omega, np.zeros(g.shape))
    assert tzitzeica_residual(om.omega, g) == 0


def test_singular_solution():
    data = ThetaSolutionData(PrymData(np.array([[-2 * np.pi]])), [0], [0], [0], -1.0)
    with pytest.raises(SingularSolution):
        omega_from_theta(data, PlanarGrid.over((0, 1), (0, 1), 5))


def test_ba_normalisation_and_derivative(fixture_data):
    P = PointData([0.2 + 0.1j], 0.7 + 0.2j, 0.4 - 0.3j, np.exp(0.5j))
    psi1, psi2, _ = baker_akhiezer_psi(fixture_data, P, 0.0)
    assert abs(psi1 - 1 / P.lam) < 1e-13
    z = 0.3 + 0.2j
    h = 1e-5
    f = lambda w: baker_akhiezer_psi(fixture_data, P, w)[0]  # noqa: E731
    # d_z = (d_x - i d_y) / 2
    dz = ((f(z + h) - f(z - h)) - 1j * (f(z + 1j * h) - f(z - 1j * h))) / (4 * h)
    assert abs(baker_akhiezer_psi(fixture_data, P, z)[1] - (-1j * dz)) < 1e-6 * abs(dz)


def test_ba_monodromy_vacuum():
    data, pts, _ = vacuum_fixture()
    P = pts[1]
    Z = 2 * np.pi
    a = baker_akhiezer_psi(data, P, 0.4)[0]
    b = baker_akhiezer_psi(data, P, 0.4 + Z)[0]
    expect = np.exp(1j * Z * P.int_inf + 1j * np.conj(Z) * P.int_0)
    assert abs(b - a * expect) < 1e-12 * abs(b)


def test_pairing_vacuum_resonance_and_z_independence():
    data, pts, spts = vacuum_fixture()
    for z in (0.0, 0.3 + 0.1j, 1.7 - 0.4j):
        psis = [baker_akhiezer_psi(data, p, z) for p in pts]
        spsi = [baker_akhiezer_psi(data, p, z) for p in spts]
        for i in range(3):
            W = pairing_omega(psis[i], spsi[i], pts[i].lam)
            assert abs(W - 3) < 1e-12
            for j in range(3):
                if i != j:
                    assert abs(pairing_omega(psis[i], spsi[j], pts[i].lam)) < 1e-8
    assert pairing_omega((0, 0, 0), (0, 0, 0), 1.0) == 0


def test_vacuum_frame_unitary():
    data, pts, spts = vacuum_fixture()
    for z in (0.0, 0.5 + 0.2j):
        fr = frame_from_ba(data, pts, spts, z)
        assert fr.unitarity < 1e-12
        assert np.allclose(fr.W, 3)


def test_perturbed_frame_detected():
    data, pts, spts = vacuum_fixture()
    rng = np.random.default_rng(1)
    noisy = [PointData(p.UP, p.int_inf * (1 + 1e-3 * rng.normal()), p.int_0, p.lam) for p in pts]
    with pytest.raises(UnitarityFailure):
        frame_from_ba(data, noisy, None, 0.8 + 0.3j, W=[3, 3, 3])


def test_roundtrip_dicts(fixture_data):
    doc = json.loads(json.dumps(fixture_data.to_dict()))
    back = ThetaSolutionData.from_dict(doc)
    assert np.array_equal(back.U, fixture_data.U) and back.c == fixture_data.c
    P = PointData([0.1j], 1.0, 2.0, 1j, 0.5)
    assert PointData.from_dict(json.loads(json.dumps(P.to_dict()))).to_dict() == P.to_dict()
