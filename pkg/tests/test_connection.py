import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cp2tori.connection import (ConnectionField, FrameField, connection_from_killing, connection_from_omega,
                                extract_omega, flatness_residual, gauge_transform, integrate_frame,
                                plaquette_residual, project_su3, standard_from_killing, transport,
                                unitarity_defect)
from cp2tori.errors import AdmissibilityFailure, DegeneratePoint, GateFailure, InconsistentPair, SingularGauge
from cp2tori.flow import KillingField, clifford_seed, integrate_flow, random_admissible_seed
from cp2tori.grid import PlanarGrid
from cp2tori.loop_algebra import B, GRADE_MASK, star

NUS8 = np.exp(2j * np.pi * (np.arange(8) + 0.3) / 8)


def killing_conn(n, d=7, rng_seed=7):
    fld = integrate_flow(random_admissible_seed(d, rng_seed), PlanarGrid.over((0, 1), (0, 1), n), tol=1e-9)
    return connection_from_killing(fld)


@pytest.fixture(scope="module")
def conn65():
    return killing_conn(65)


def test_clifford_killing_connection():
    seed = clifford_seed()
    g = PlanarGrid.over((0, 1), (0, 1), 4)
    conn = connection_from_killing(integrate_flow(seed, g))
    assert np.abs(conn.U0).max() < 1e-12
    assert np.abs(conn.U1 - B).max() < 1e-12


def test_corrupted_top_coefficient():
    seed = random_admissible_seed(7, 1)
    g = PlanarGrid.over((0, 1), (0, 1), 3)
    vals = np.broadcast_to(seed.coeffs, (3, 3) + seed.coeffs.shape).copy()
    vals[1, 1, -1] *= 1.01
    with pytest.raises(AdmissibilityFailure):
        connection_from_killing(KillingField(g, vals, seed))


def test_d7_connection_patterns():
    conn = killing_conn(9)
    assert conn.check_admissible() < 1e-8
    assert np.abs(conn.U1[..., ~GRADE_MASK[1]]).max() == 0


def test_omega_zero_connection():
    g = PlanarGrid.over((0, 1), (0, 1), 6)
    conn = connection_from_omega(np.zeros(g.shape), g)
    U, V = conn.uv(1.0)
    assert np.abs(U - B).max() < 1e-15
    assert np.abs(V + np.conj(np.swapaxes(U, -1, -2))).max() == 0
    assert np.abs(U[0, 0] @ V[0, 0] - V[0, 0] @ U[0, 0]).max() < 1e-15
    assert flatness_residual(conn, NUS8) < 1e-14


def test_standard_reality_identity(rng):
    g = PlanarGrid.over((0, 1), (0, 1), 8)
    conn = connection_from_omega(0.1 * rng.normal(size=g.shape), g)
    for nu in NUS8:
        U, V = conn.uv(nu)
        assert np.abs(V + np.conj(np.swapaxes(U, -1, -2))).max() < 1e-12


def test_flatness_convergence_killing():
    r32 = flatness_residual(killing_conn(33), NUS8)
    r64 = flatness_residual(killing_conn(65), NUS8)
    assert r64 < 1e-2 and r32 / r64 >= 3.5


def test_flatness_non_solution():
    res = []
    for n in (17, 33, 65):
        g = PlanarGrid.over((0, 1), (0, 1), n)
        res.append(flatness_residual(connection_from_omega(g.u[:, None] ** 2 + 0 * g.v, g), [1.0]))
    assert min(res) > 0.1
    assert abs(res[-1] - res[-2]) < 0.1 * res[-1]


def test_extract_omega_examples():
    g = PlanarGrid.over((0, 1), (0, 1), 4)
    U1 = np.broadcast_to(B, g.shape + (3, 3)).copy()
    zero = np.zeros_like(U1)
    om, th, rep = extract_omega(ConnectionField(g, zero, U1))
    assert np.abs(om).max() < 1e-15 and np.abs(th).max() < 1e-15
    U1s = U1.copy()
    U1s[..., 0, 2] = U1s[..., 1, 0] = 1j * np.exp(0.5)
    U1s[..., 2, 1] = 1j * np.exp(-1.0)
    om, th, _ = extract_omega(ConnectionField(g, zero, U1s))
    assert np.allclose(om, 1.0, atol=1e-15) and np.abs(th).max() < 1e-15
    bad = U1s.copy()
    bad[..., 2, 1] *= 1.1
    with pytest.raises(InconsistentPair):
        extract_omega(ConnectionField(g, zero, bad))
    deg = U1.copy()
    deg[1, 1, 0, 2] = 0
    with pytest.raises(DegeneratePoint):
        extract_omega(ConnectionField(g, zero, deg))


def test_theta_constant_for_flow(conn65):
    _, _, rep = extract_omega(conn65)
    assert rep["theta_gradient"] < 1e-10 and rep["seam_mismatch"] < 1e-6


def test_frame_matches_closed_form():
    g = PlanarGrid.over((0, 1), (0, 1), 9)
    conn = connection_from_omega(np.zeros(g.shape), g)
    fr = integrate_frame(conn)
    ref = np.array([[closed(zz, B, star(B)) for zz in row] for row in g.z()])
    assert np.abs(fr.F - ref).max() < 1e-10
    assert np.abs(fr.F[0, 0] - np.eye(3)).max() == 0


def closed(z, U, V):
    # U and V commute, so exp(zU + zbar V) via eigendecomposition of the skew-hermitian generator
    gen = z * U + np.conj(z) * V
    w, q = np.linalg.eigh(1j * gen)
    return (q * np.exp(-1j * w)) @ q.conj().T


def test_d7_frame_quality(conn65):
    std = standard_from_killing(conn65)
    fr = integrate_frame(std)
    assert fr.report["unitarity_drift_per_length"] < 1e-6
    assert fr.report["plaquette"] < 1e-5
    assert fr.report["unitarity"] < 1e-9 and fr.report["det"] < 1e-9


def test_flatness_gate():
    g = PlanarGrid.over((0, 1), (0, 1), 17)
    conn = connection_from_omega(g.u[:, None] ** 2 + 0 * g.v, g)
    with pytest.raises(GateFailure):
        integrate_frame(conn)


def test_plaquette_order():
    r = [plaquette_residual(killing_conn(n), 1.0) for n in (9, 17)]
    assert r[0] / r[1] > 12


def test_gauge_examples(conn65):
    std = standard_from_killing(conn65)
    fr = integrate_frame(std, nu=np.exp(0.7j))
    same, _ = gauge_transform(fr, np.eye(3))
    assert np.array_equal(same.F, fr.F)
    nu = np.exp(0.7j)
    g2, _ = gauge_transform(fr, np.diag([nu**2, nu, 1]))
    assert unitarity_defect(g2.F).max() < 1e-9
    with pytest.raises(SingularGauge):
        gauge_transform(fr, np.zeros((3, 3)))


def test_e_lambda_gauge_matches_standard_shape(conn65):
    g = conn65.grid
    _, theta, _ = extract_omega(conn65)
    lam = np.zeros(g.shape + (3, 3), complex)
    lam[..., 0, 0] = 1
    lam[..., 1, 1] = np.exp(0.5j * theta)
    lam[..., 2, 2] = np.exp(-0.5j * theta)
    fr = integrate_frame(conn65, gate_order=4)
    _, (U, V) = gauge_transform(fr, lam, conn65, order=4)
    std = standard_from_killing(conn65)
    Us, Vs = std.uv(1.0)
    assert np.abs(U - Us).max() < 1e-8 and np.abs(V - Vs).max() < 1e-8


def test_project_su3():
    rng = np.random.default_rng(3)
    F = project_su3(rng.normal(size=(4, 3, 3)) + 1j * rng.normal(size=(4, 3, 3)))
    assert unitarity_defect(F).max() < 1e-14
    assert np.abs(np.linalg.det(F) - 1).max() < 1e-14
    assert np.abs(project_su3(F) - F).max() < 1e-14


def test_transport_exact_for_constant_connection():
    g = PlanarGrid.over((0, 1), (0, 1), 9)
    conn = connection_from_omega(np.zeros(g.shape), g)
    fr = integrate_frame(conn)
    z = np.array([0.31 + 0.77j, 0.05 + 0.9j])
    ref = np.array([closed(zz, B, star(B)) for zz in z])
    assert np.abs(transport(fr, conn, z) - ref).max() < 1e-12


def test_frame_roundtrip():
    g = PlanarGrid.over((0, 1), (0, 1), 5)
    fr = integrate_frame(connection_from_omega(np.zeros(g.shape), g), nu=np.exp(0.2j))
    back = FrameField.from_dict(fr.to_dict())
    assert np.array_equal(back.F, fr.F) and back.nu == fr.nu and back.gauge == fr.gauge


@settings(max_examples=20)
@given(st.floats(0, 2 * np.pi))
def test_nu_family_keeps_unitarity(t):
    g = PlanarGrid.over((0, 1), (0, 1), 9)
    fr = integrate_frame(connection_from_omega(np.zeros(g.shape), g), nu=np.exp(1j * t))
    assert fr.report["unitarity"] < 1e-9
