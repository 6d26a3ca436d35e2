"""Admissible connections U(nu) = U0 + nu U1, V(nu) = V0 + nu^-1 V1 and
their moving frames F_z = F U, F_zbar = F V.

Reality is built in: V0 = -U0^dagger and V1 = -U1^dagger, so on |nu| = 1
the connection is su(3)-valued.  Both the Killing-field connection and the
standard one built from a metric function omega share this storage.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import AdmissibilityFailure, DegeneratePoint, GateFailure, InconsistentPair, ProjectionFailure, SingularGauge
from .flow import KillingField
from .grid import PlanarGrid, d_z, d_zbar, diff, min_points
from .loop_algebra import GRADE_MASK, sigma, star


@dataclass
class ConnectionField:
    grid: PlanarGrid
    U0: np.ndarray  # (N_u, N_v, 3, 3)
    U1: np.ndarray

    gauge = "twisted_real"

    @property
    def V0(self) -> np.ndarray:
        return star(self.U0)

    @property
    def V1(self) -> np.ndarray:
        return star(self.U1)

    def uv(self, nu: complex) -> tuple[np.ndarray, np.ndarray]:
        return self.U0 + nu * self.U1, self.V0 + self.V1 / nu

    def top_trace(self) -> np.ndarray:
        u1 = self.U1
        return np.trace(u1 @ u1 @ u1, axis1=-2, axis2=-1)

    def check_admissible(self, tol: float = 1e-8) -> float:
        """Largest violation of the admissibility pattern and Tr U1^3 = -3i."""
        res = float(np.abs(self.top_trace() + 3j).max())
        if res > tol:
            raise AdmissibilityFailure(f"|Tr U1^3 + 3i| = {res:.3e}")
        off1 = np.abs(self.U1[..., ~GRADE_MASK[1]]).max()
        tw1 = np.abs(sigma(self.U1) + self.U1).max()
        off0 = np.abs(self.U0[..., ~GRADE_MASK[0]]).max()
        tw0 = np.abs(sigma(self.U0) - self.U0).max()
        pat = float(max(off1, tw1, off0, tw0))
        if pat > tol * max(1.0, float(np.abs(self.U1).max())):
            raise AdmissibilityFailure(f"connection leaves M_k cap N_k by {pat:.3e}")
        return max(res, pat)


@dataclass
class StandardConnection(ConnectionField):
    """Connection of a totally real minimal surface with metric 2 e^omega |dz|^2."""

    omega: np.ndarray = None
    psi: complex = -1.0

    gauge = "standard_su3"


def connection_from_killing(fld: KillingField, tol: float = 1e-8) -> ConnectionField:
    d = fld.d
    conn = ConnectionField(fld.grid, 0.5 * fld.values[..., 2 * d - 1, :, :], fld.values[..., 2 * d, :, :].copy())
    conn.check_admissible(tol)
    return conn


def connection_from_omega(omega: np.ndarray, grid: PlanarGrid, psi: complex = -1.0, order: int = 2) -> StandardConnection:
    omega = np.asarray(omega, dtype=float)
    if not np.all(np.isfinite(omega)):
        raise ValueError("omega must be finite")
    wz = d_z(omega, grid, order)
    U0 = np.zeros(grid.shape + (3, 3), dtype=complex)
    U0[..., 1, 1], U0[..., 2, 2] = wz / 2, -wz / 2
    U1 = np.zeros_like(U0)
    U1[..., 0, 2] = U1[..., 1, 0] = 1j * np.exp(omega / 2)
    U1[..., 2, 1] = -1j * psi * np.exp(-omega)
    return StandardConnection(grid, U0, U1, omega=omega, psi=psi)


def _commutator(a, b):
    return a @ b - b @ a


def flatness_residual(conn: ConnectionField, nus, order: int = 2) -> float:
    """sup over interior nodes and sampled nu of |U_zbar - V_z - [U, V]|_F,
    with derivatives by centred differences of the given order."""
    g = conn.grid
    m = min_points(order)
    if g.n_u < m or g.n_v < m:
        raise ValueError(f"flatness needs at least a {m}x{m} grid")
    k = order // 2
    worst = 0.0
    for nu in np.atleast_1d(nus):
        U, V = conn.uv(nu)
        r = d_zbar(U, g, order) - d_z(V, g, order) - _commutator(U, V)
        worst = max(worst, float(np.linalg.norm(r[k:-k, k:-k], axis=(-2, -1)).max()))
    return worst


def extract_omega(conn: ConnectionField, tol: float = 1e-8):
    """omega = 2 ln|b0| and theta = 2 arg(b0 / i) from U1's (1,3) entry.

    theta is unwrapped along the first column and then along each row.
    Returns (omega, theta, report) where the report carries the b1
    consistency residual, the largest |grad theta| and the seam mismatch
    between row-wise and column-wise unwrapping.
    """
    b0 = conn.U1[..., 0, 2]
    b1 = conn.U1[..., 2, 1]
    if np.abs(b0).min() < 1e-12:
        raise DegeneratePoint("b0 vanishes on the grid")
    omega = 2 * np.log(np.abs(b0))
    raw = 2 * np.angle(b0 / 1j)
    col = np.unwrap(raw[0, :])
    theta = np.unwrap(np.concatenate([col[None, :], raw[1:, :]], axis=0), axis=0)
    alt = np.unwrap(np.concatenate([np.unwrap(raw[:, 0])[:, None], raw[:, 1:]], axis=1), axis=1)
    seam = float(np.abs(theta - alt).max())
    pair = float(np.abs(b1 - 1j * np.exp(-omega - 1j * theta)).max())
    if pair > tol:
        raise InconsistentPair(f"b1 differs from i exp(-omega - i theta) by {pair:.3e}")
    g = conn.grid
    grad = 0.0
    if g.n_u >= 3 and g.n_v >= 3:
        grad = float(np.hypot(diff(theta, g.hu, 0), diff(theta, g.hv, 1)).max())
    return omega, theta, {"pair_residual": pair, "theta_gradient": grad, "seam_mismatch": seam}


# --- frames -----------------------------------------------------------------

_G1, _G2 = 0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6


def _cubic_weights(s: float) -> np.ndarray:
    """Lagrange weights at nodes -1, 0, 1, 2 for a point s in [0, 1]."""
    x = np.array([-1.0, 0.0, 1.0, 2.0])
    w = np.ones(4)
    for i in range(4):
        for j in range(4):
            if i != j:
                w[i] *= (s - x[j]) / (x[i] - x[j])
    return w


def _interp_segments(a: np.ndarray, s: float) -> np.ndarray:
    """Values at fraction s of every segment along axis 0 (cubic)."""
    n = a.shape[0]
    if n < 4:
        return (1 - s) * a[:-1] + s * a[1:]
    out = np.empty((n - 1,) + a.shape[1:], dtype=a.dtype)
    w = _cubic_weights(s)
    out[1:n - 2] = w[0] * a[0:n - 3] + w[1] * a[1:n - 2] + w[2] * a[2:n - 1] + w[3] * a[3:n]
    # boundary segments use shifted stencils
    w0 = _cubic_weights(s - 1)
    out[0] = w0[0] * a[0] + w0[1] * a[1] + w0[2] * a[2] + w0[3] * a[3]
    wl = _cubic_weights(s + 1)
    out[n - 2] = wl[0] * a[n - 4] + wl[1] * a[n - 3] + wl[2] * a[n - 2] + wl[3] * a[n - 1]
    return out


def _magnus(A1: np.ndarray, A2: np.ndarray, h: float) -> np.ndarray:
    """exp of the 4th-order Magnus exponent for F' = F A (right action)."""
    om = 0.5 * h * (A1 + A2) + (np.sqrt(3) / 12) * h**2 * _commutator(A1, A2)
    return expm(om)


def edge_propagators(conn: ConnectionField, nu: complex) -> tuple[np.ndarray, np.ndarray]:
    """Propagators along every u-edge (N_u-1, N_v) and v-edge (N_u, N_v-1)."""
    g = conn.grid
    U, V = conn.uv(nu)
    Au, Av = U + V, 1j * (U - V)
    Eu = _magnus(_interp_segments(Au, _G1), _interp_segments(Au, _G2), g.hu)
    Avt = np.swapaxes(Av, 0, 1)
    Ev = np.swapaxes(_magnus(_interp_segments(Avt, _G1), _interp_segments(Avt, _G2), g.hv), 0, 1)
    return Eu, Ev


def project_su3(F: np.ndarray) -> np.ndarray:
    """Nearest unitary (polar factor) with the determinant phase removed."""
    X, s, Yh = np.linalg.svd(F)
    if s.min() < 1e-12:
        raise ProjectionFailure("singular polar factor")
    W = X @ Yh
    ph = np.angle(np.linalg.det(W))
    return W * np.exp(-1j * ph / 3)[..., None, None]


def unitarity_defect(F: np.ndarray) -> np.ndarray:
    FhF = np.conj(np.swapaxes(F, -1, -2)) @ F
    return np.linalg.norm(FhF - np.eye(3), axis=(-2, -1))


@dataclass
class FrameField:
    grid: PlanarGrid
    F: np.ndarray  # (N_u, N_v, 3, 3)
    gauge: str
    nu: complex
    report: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"grid": self.grid.to_dict(), "gauge": self.gauge, "nu": [self.nu.real, self.nu.imag],
                "re": self.F.real.tolist(), "im": self.F.imag.tolist()}

    @classmethod
    def from_dict(cls, doc) -> "FrameField":
        F = np.array(doc["re"]) + 1j * np.array(doc["im"])
        return cls(PlanarGrid.from_dict(doc["grid"]), F, doc["gauge"], complex(*doc["nu"]))


def plaquette_residual(conn: ConnectionField, nu: complex, edges=None) -> float:
    Eu, Ev = edge_propagators(conn, nu) if edges is None else edges
    a = Eu[:, :-1] @ Ev[1:, :]
    b = Ev[:-1, :] @ Eu[:, 1:]
    return float(np.linalg.norm(a - b, axis=(-2, -1)).max())


def integrate_frame(conn: ConnectionField, F0: np.ndarray | None = None, nu: complex = 1.0,
                    gate: float = 1e-3, project: bool | None = None, gate_order: int = 4) -> FrameField:
    """Frame on the grid with F = F0 at the first node.

    Fill order: first column in v, then each row in u, one Magnus step per
    edge.  In the standard gauge every step is followed by projection onto
    SU(3).  The flatness gate uses a 4th-order stencil by default so that it
    measures the connection rather than the 2nd-order stencil error.  The
    report records the pre-projection unitarity drift per unit
    length and the plaquette path-independence residual.
    """
    nu = complex(nu)
    g = conn.grid
    if min(g.shape) >= min_points(gate_order):
        flat = flatness_residual(conn, [nu], order=gate_order)
        if flat > gate:
            raise GateFailure(f"flatness residual {flat:.3e} above gate {gate:.1e}")
    else:
        flat = float("nan")
    if project is None:
        project = conn.gauge == "standard_su3"
    F = np.empty(g.shape + (3, 3), dtype=complex)
    F[0, 0] = np.eye(3) if F0 is None else F0
    Eu, Ev = edge_propagators(conn, nu)
    drift = 0.0

    def step(Fa, E, h):
        nonlocal drift
        Fb = Fa @ E
        drift = max(drift, float(unitarity_defect(Fb).max() - unitarity_defect(Fa).max()) / h)
        return project_su3(Fb) if project else Fb

    for j in range(g.n_v - 1):
        F[0, j + 1] = step(F[0, j], Ev[0, j], g.hv)
    for i in range(g.n_u - 1):
        # all rows advance together: one batched step per column index
        F[i + 1] = step(F[i], Eu[i], g.hu)
    report = {
        "flatness": flat,
        "unitarity_drift_per_length": max(drift, 0.0),
        "unitarity": float(unitarity_defect(F).max()),
        "det": float(np.abs(np.linalg.det(F) - 1).max()),
        "plaquette": plaquette_residual(conn, nu, (Eu, Ev)) if g.n_u > 1 and g.n_v > 1 else 0.0,
    }
    return FrameField(g, F, conn.gauge, nu, report)


def gauge_transform(frame: FrameField, gmat: np.ndarray, conn: ConnectionField | None = None, order: int = 2):
    """F -> F g pointwise.  With ``conn`` also returns the transformed
    (U, V) = (g^-1 U g + g^-1 g_z, g^-1 V g + g^-1 g_zbar) at frame.nu."""
    gmat = np.broadcast_to(np.asarray(gmat, dtype=complex), frame.F.shape)
    if np.abs(np.linalg.det(gmat)).min() < 1e-12:
        raise SingularGauge("gauge is not invertible")
    new = FrameField(frame.grid, frame.F @ gmat, frame.gauge, frame.nu, dict(frame.report))
    if conn is None:
        return new, None
    ginv = np.linalg.inv(gmat)
    U, V = conn.uv(frame.nu)
    gz = d_z(gmat, frame.grid, order)
    gzb = d_zbar(gmat, frame.grid, order)
    return new, (ginv @ U @ gmat + ginv @ gz, ginv @ V @ gmat + ginv @ gzb)


def _bilinear(a: np.ndarray, grid: PlanarGrid, z: np.ndarray) -> np.ndarray:
    x = np.clip((z.real - grid.u0) / grid.hu, 0, grid.n_u - 1 - 1e-12)
    y = np.clip((z.imag - grid.v0) / grid.hv, 0, grid.n_v - 1 - 1e-12)
    i, j = np.floor(x).astype(int), np.floor(y).astype(int)
    i, j = np.minimum(i, grid.n_u - 2), np.minimum(j, grid.n_v - 2)
    s, t = (x - i)[..., None, None], (y - j)[..., None, None]
    return ((1 - s) * (1 - t) * a[i, j] + s * (1 - t) * a[i + 1, j]
            + (1 - s) * t * a[i, j + 1] + s * t * a[i + 1, j + 1])


def transport(frame: FrameField, conn: ConnectionField, z: np.ndarray) -> np.ndarray:
    """Frame at arbitrary points: F at the nearest node times the exponential
    of the connection (bilinear, at the segment midpoint) along the segment.
    Exact for constant connections."""
    g = frame.grid
    z = np.asarray(z, dtype=complex)
    i = np.clip(np.rint((z.real - g.u0) / g.hu).astype(int), 0, g.n_u - 1)
    j = np.clip(np.rint((z.imag - g.v0) / g.hv).astype(int), 0, g.n_v - 1)
    node = g.u0 + i * g.hu + 1j * (g.v0 + j * g.hv)
    dz = z - node
    U, V = conn.uv(frame.nu)
    mid = node + dz / 2
    Um, Vm = _bilinear(U, g, mid), _bilinear(V, g, mid)
    gen = dz[..., None, None] * Um + np.conj(dz)[..., None, None] * Vm
    return frame.F[i, j] @ _expm(gen)


def _expm(gen: np.ndarray) -> np.ndarray:
    """Batched exponential; skew-hermitian generators (|nu| = 1) go through
    eigh of i * gen, which is much faster than Pade for many 3x3 blocks."""
    if np.abs(gen + np.conj(np.swapaxes(gen, -1, -2))).max() <= 1e-14 * max(1.0, np.abs(gen).max()):
        w, q = np.linalg.eigh(1j * gen)
        return (q * np.exp(-1j * w)[..., None, :]) @ np.conj(np.swapaxes(q, -1, -2))
    return expm(gen)


def standard_from_killing(conn: ConnectionField, tol: float = 1e-8) -> StandardConnection:
    """Gauge the Killing connection by e^Lambda, Lambda = diag(0, i theta/2, -i theta/2).

    For constant theta this gives the standard connection with psi = -1 and omega read
    from |b0| exactly; U0 already carries omega_z / 2 on the diagonal.  A
    non-constant theta is applied pointwise and its gradient (the neglected
    g^-1 g_z term) is recorded in ``extra``.
    """
    omega, theta, rep = extract_omega(conn, tol)
    ph = np.exp(0.5j * theta)
    lam = np.stack([np.ones_like(ph), ph, 1 / ph], axis=-1)
    # (e^-L X e^L)_{jl} = X_{jl} e^{-L_j + L_l}
    fac = np.conj(lam)[..., :, None] * lam[..., None, :]
    std = StandardConnection(conn.grid, conn.U0 * fac, conn.U1 * fac, omega=omega, psi=-1.0)
    std.extra = rep
    return std
