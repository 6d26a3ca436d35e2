"""Surfaces in CP^2 from frames, and their local invariants.

For a lift y (unit 3-vectors on the grid) with rho = y_z . conj(y),

    xi  = y_z    - (y_z    . conj y) y,
    eta = y_zbar - (y_zbar . conj y) y,

e^omega = (|xi|^2 + |eta|^2) / 2, a = e^-omega |xi|^2, b = e^-omega |eta|^2,
Kaehler angle 2 arccos sqrt(a/2), phi = e^-omega xi_zbar . conj eta and
psi = xi_z . conj eta (the cubic Hopf differential).

Two routes feed the same invariant formulas: finite differences of a phase
aligned lift, or exact jets of y = F e1 read off the connection.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .connection import ConnectionField, FrameField, project_su3
from .errors import ConformalityFailure, LiftDiscontinuity, ValidationError
from .grid import PlanarGrid, d_z, d_zbar, laplacian_interior

OVERLAP_GATE = 0.9


def _dot(a, b):
    """Hermitian pairing a . conj(b) over the last axis."""
    return np.sum(a * np.conj(b), axis=-1)


@dataclass(frozen=True, eq=False)
class CP2Point:
    representative: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.representative, dtype=complex)
        n = np.linalg.norm(v)
        if v.shape != (3,) or n == 0:
            raise ValidationError("a CP2 point needs a non-zero complex 3-vector")
        object.__setattr__(self, "representative", v / n)

    def __eq__(self, other) -> bool:
        return isinstance(other, CP2Point) and fubini_distance(self, other) < 1e-12


def _rep(p):
    return p.representative if isinstance(p, CP2Point) else np.asarray(p, dtype=complex)


def fubini_distance(p, q) -> np.ndarray | float:
    """arccos |p . conj q| for unit representatives; broadcasts over leading axes."""
    p, q = _rep(p), _rep(q)
    p = p / np.linalg.norm(p, axis=-1, keepdims=True)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return np.arccos(np.clip(np.abs(_dot(p, q)), 0.0, 1.0))


def clifford_torus(z) -> np.ndarray:
    """Normalised representative of [e^{z - zbar}, e^{eps z - conj(eps z)}, ...]."""
    z = np.asarray(z, dtype=complex)
    u, v = z.real, z.imag
    s3 = np.sqrt(3.0)
    return np.stack([np.exp(2j * v), np.exp(1j * (s3 * u - v)), np.exp(-1j * (s3 * u + v))], axis=-1) / s3


def surface_from_frame(frame: FrameField) -> np.ndarray:
    """First column of F at each node, normalised; shape (N_u, N_v, 3)."""
    if frame.gauge != "standard_su3":
        raise ValidationError(f"surface_from_frame needs the standard_su3 gauge, got {frame.gauge}")
    y = frame.F[..., :, 0]
    return y / np.linalg.norm(y, axis=-1, keepdims=True)


def phase_align(y: np.ndarray, gate: float = OVERLAP_GATE) -> np.ndarray:
    """Multiply each lift vector by the unit scalar that brings it closest to
    its predecessor in fill order (first column in v, then rows in u)."""
    y = np.array(y, dtype=complex)

    def fix(prev, nxt):
        o = _dot(nxt, prev)
        if np.any(np.abs(o) < gate):
            raise LiftDiscontinuity(f"adjacent overlap {np.abs(o).min():.3f} below {gate}")
        return nxt * (np.conj(o) / np.abs(o))[..., None]

    for j in range(1, y.shape[1]):
        y[0, j] = fix(y[0, j - 1], y[0, j])
    for i in range(1, y.shape[0]):
        y[i] = fix(y[i - 1], y[i])
    return y


@dataclass
class LiftJets:
    """y and its first and mixed/pure second z-derivatives."""

    y: np.ndarray
    yz: np.ndarray
    yzb: np.ndarray
    yzz: np.ndarray
    yzzb: np.ndarray


def fd_jets(y: np.ndarray, grid: PlanarGrid, order: int = 2, align: bool = True) -> LiftJets:
    if align:
        y = phase_align(y)
    yz, yzb = d_z(y, grid, order), d_zbar(y, grid, order)
    return LiftJets(y, yz, yzb, d_z(yz, grid, order), d_zbar(yz, grid, order))


def frame_jets(frame: FrameField, conn: ConnectionField, order: int = 2) -> LiftJets:
    """Jets of y = F e1 from F_z = F U, F_zbar = F V; only U_z and U_zbar
    need differencing (they vanish for constant connections)."""
    U, V = conn.uv(frame.nu)
    F = frame.F
    Uz, Uzb = d_z(U, frame.grid, order), d_zbar(U, frame.grid, order)
    col = lambda M: (F @ M)[..., :, 0]  # noqa: E731
    return LiftJets(F[..., :, 0], col(U), col(V), col(U @ U + Uz), col(V @ U + Uzb))


def lift_derivatives(y: np.ndarray, grid: PlanarGrid, order: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """(xi, eta) from a phase-aligned lift by centred differences."""
    j = fd_jets(y, grid, order)
    return _project_out(j.yz, j.y), _project_out(j.yzb, j.y)


def _project_out(w, y):
    return w - _dot(w, y)[..., None] * y


@dataclass
class SurfaceInvariants:
    grid: PlanarGrid
    omega: np.ndarray
    a: np.ndarray
    b: np.ndarray
    kaehler_angle: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    rho: np.ndarray
    conformality: float
    psi_normalizer: complex = 1.0
    extra: dict = field(default_factory=dict)

    @property
    def psi_normalized(self) -> np.ndarray:
        """psi after the coordinate change w = c z with c^3 = -mean(psi)."""
        return self.psi / self.psi_normalizer**3

    def grids(self) -> dict[str, np.ndarray]:
        return {"omega": self.omega, "a": self.a, "b": self.b, "kaehler_angle": self.kaehler_angle,
                "phi_re": self.phi.real, "phi_im": self.phi.imag, "psi_re": self.psi.real,
                "psi_im": self.psi.imag, "rho_re": self.rho.real, "rho_im": self.rho.imag}


def invariants_from_jets(j: LiftJets, grid: PlanarGrid, conf_gate: float = 1e-3) -> SurfaceInvariants:
    y = j.y
    rho = _dot(j.yz, y)
    rho_b = _dot(j.yzb, y)
    xi = j.yz - rho[..., None] * y
    eta = j.yzb - rho_b[..., None] * y
    n_xi, n_eta = np.sum(np.abs(xi) ** 2, -1), np.sum(np.abs(eta) ** 2, -1)
    ew = 0.5 * (n_xi + n_eta)
    if np.any(ew <= 0):
        raise ConformalityFailure("degenerate lift: xi and eta vanish")
    conf = float((np.abs(_dot(xi, eta)) / ew).max())
    if conf > conf_gate:
        raise ConformalityFailure(f"|xi . conj eta| / e^omega = {conf:.3e}")
    a, b = n_xi / ew, n_eta / ew
    angle = 2 * np.arccos(np.sqrt(np.clip(a / 2, 0.0, 1.0)))
    # d_z conj(y) = conj(y_zbar), d_zbar conj(y) = conj(y_z)
    rho_z = _dot(j.yzz, y) + _dot(j.yz, j.yzb)
    rho_zb = _dot(j.yzzb, y) + _dot(j.yz, j.yz)
    xi_z = j.yzz - rho_z[..., None] * y - rho[..., None] * j.yz
    xi_zb = j.yzzb - rho_zb[..., None] * y - rho[..., None] * j.yzb
    phi = _dot(xi_zb, eta) / ew
    psi = _dot(xi_z, eta)
    mean_psi = complex(psi.mean())
    c = (-mean_psi) ** (1 / 3) if abs(mean_psi) > 0 else 1.0
    return SurfaceInvariants(grid, np.log(ew), a, b, angle, phi, psi, rho, conf, c)


def invariants(y: np.ndarray, grid: PlanarGrid, order: int = 2, conf_gate: float = 1e-3) -> SurfaceInvariants:
    """Invariants of a lift grid by finite differences (phase-aligned first)."""
    return invariants_from_jets(fd_jets(y, grid, order), grid, conf_gate)


def tzitzeica_residual(omega: np.ndarray, grid: PlanarGrid) -> float:
    """sup over interior nodes of |Laplacian(omega)/4 - e^{-2 omega} + e^omega|."""
    if grid.n_u < 3 or grid.n_v < 3:
        raise ValueError("need at least a 3x3 grid")
    w = omega[1:-1, 1:-1]
    return float(np.abs(0.25 * laplacian_interior(omega, grid) - np.exp(-2 * w) + np.exp(w)).max())


@dataclass
class GateResult:
    name: str
    value: float
    threshold: float
    passed: bool
    op: str = "<"

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:24s} {self.value:.3e}  ({self.op} {self.threshold:.1e})"


def surface_gates(inv: SurfaceInvariants, tol: dict | None = None, margin: int = 0) -> list[GateResult]:
    """Totally-real, minimality and superconformality gates.

    ``margin`` trims that many boundary nodes before taking sup-norms
    (useful for finite-difference invariants, whose one-sided boundary
    stencils are less accurate).
    """
    t = {"sum_ab": 1e-8, "a_minus_1": 1e-6, "angle": 1e-4, "phi": 1e-5, "psi_const": 1e-6, "psi_zbar": 1e-4}
    t.update(tol or {})
    s = (slice(margin, -margin or None),) * 2
    ew2 = np.exp(-inv.omega / 2)
    psi = inv.psi
    psi_zb = d_zbar(psi, inv.grid)
    scale = float(np.abs(psi[s]).max())
    vals = {
        "sum_ab": float(np.abs(inv.a + inv.b - 2)[s].max()),
        "a_minus_1": float(np.abs(inv.a - 1)[s].max()),
        "angle": float(np.abs(inv.kaehler_angle - np.pi / 2)[s].max()),
        "phi": float((np.abs(inv.phi) * ew2)[s].max()),
        "psi_const": float(np.abs(psi - psi[s].mean())[s].max()),
        "psi_zbar": float(np.abs(psi_zb)[s].max()) / max(scale, 1e-300),
    }
    out = [GateResult(k, vals[k], t[k], vals[k] < t[k]) for k in t]
    low = float(np.abs(psi[s]).min())
    out.append(GateResult("psi_min_abs", low, 0.0, low > 0, ">"))
    return out


# --- alignment of two surfaces up to an isometry of CP^2 -----------------

_GELL_MANN = None


def _su3_basis() -> np.ndarray:
    global _GELL_MANN
    if _GELL_MANN is None:
        m = []
        for j in range(3):
            for k in range(j + 1, 3):
                a = np.zeros((3, 3), complex); a[j, k] = a[k, j] = 1; m.append(a)
                b = np.zeros((3, 3), complex); b[j, k], b[k, j] = -1j, 1j; m.append(b)
        m.append(np.diag([1, -1, 0]).astype(complex))
        m.append(np.diag([1, 1, -2]).astype(complex) / np.sqrt(3))
        _GELL_MANN = np.array(m)
    return _GELL_MANN


def _unitary(x):
    from scipy.linalg import expm
    return expm(1j * np.tensordot(x, _su3_basis(), axes=1))


def align_su3(src: np.ndarray, dst: np.ndarray, n_starts: int = 8, rng_seed: int = 0) -> tuple[np.ndarray, float]:
    """Unitary W minimising sum_k dist(W src_k, dst_k)^2 over anchor pairs.

    Alternating phase/Procrustes sweeps from several random starts, then a
    least-squares polish over su(3) coordinates.  Returns (W, max distance
    over the anchors).
    """
    src, dst = np.asarray(src, complex), np.asarray(dst, complex)
    rng = np.random.default_rng(rng_seed)
    best, best_val = np.eye(3, dtype=complex), np.inf
    for s in range(n_starts):
        W = np.eye(3, dtype=complex) if s == 0 else _unitary(rng.standard_normal(8))
        for _ in range(200):
            o = _dot(dst, src @ W.T)  # <dst_k, W src_k>
            c = o / np.maximum(np.abs(o), 1e-300)
            M = np.einsum("k,ki,kj->ij", c, dst, np.conj(src))
            W = project_su3(M)
        val = float(fubini_distance(src @ W.T, dst).max())
        if val < best_val:
            best, best_val = W, val

    def res(x):
        Wx = _unitary(x) @ best
        return 1 - np.abs(_dot(src @ Wx.T, dst)) ** 2

    sol = least_squares(res, np.zeros(8), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    W = _unitary(sol.x) @ best
    val = float(fubini_distance(src @ W.T, dst).max())
    if val < best_val:
        best, best_val = W, val
    return best, best_val
