"""Riemann and Prym theta functions, the theta solution of the Tzitzeica
equation, Baker-Akhiezer vectors and the unitary frame built from them.

Convention: theta(z) = sum_N exp(N.B.N / 2 + z.N) with A = -Re B positive
definite.  With c = A^-1 Re z every term has modulus

    exp(-|N - c|_A^2 / 2) * exp(c.A.c / 2),

so sums are taken relative to exp(c.A.c / 2) over integer N in an
A-ellipsoid around round(c).  The offset set depends only on (B, eps), so
the summation order (shells by |N - N0|^2, then lexicographic) and the
result are independent of batching and thread count.

Log-derivatives of theta along directions are cumulants of N.d under the
complex weights term / theta; they are shift invariant, so they are
computed with N - c, whose tail is controlled by the same bound.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (ConvergenceFailure, NearZeroTheta, NonPositiveW, SingularSolution, ThetaDivisorHit,
                     TruncationOverflow, UnitarityFailure, ValidationError)
from .grid import PlanarGrid

MAX_POINTS = 10**8
NEAR_ZERO = 1e-8
# extra factor in the tail target: |theta| may be as small as NEAR_ZERO
# times the dominant term before the guard fires
_TAIL_MARGIN = NEAR_ZERO


# --- matrices -----------------------------------------------------------------


def _check_matrix(B) -> np.ndarray:
    B = np.atleast_2d(np.asarray(B, dtype=complex))
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValidationError("period matrix must be square")
    if np.abs(B - B.T).max() > 1e-12 * max(1.0, np.abs(B).max()):
        raise ValidationError("period matrix must be symmetric")
    try:
        np.linalg.cholesky(-B.real)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure("-Re B is not positive definite") from exc
    return B


@dataclass(frozen=True, eq=False)
class RiemannData:
    B: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "B", _check_matrix(self.B))

    @property
    def matrix(self) -> np.ndarray:
        return self.B

    @property
    def genus(self) -> int:
        return self.B.shape[0]


def prym_reality_residual(Pi: np.ndarray) -> float:
    """|conj(Pi) - Pi - 2 pi i (1 - I)|_max modulo the shifts that leave
    theta unchanged (2 pi i off the diagonal, 4 pi i on it)."""
    g = Pi.shape[0]
    D = (np.conj(Pi) - Pi - 2j * np.pi * (np.ones((g, g)) - np.eye(g))).imag
    period = np.where(np.eye(g, dtype=bool), 4 * np.pi, 2 * np.pi)
    red = D - period * np.rint(D / period)
    return float(max(np.abs(red).max(), np.abs(Pi.real - Pi.real.T).max()))


@dataclass(frozen=True, eq=False)
class PrymData:
    Pi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Pi", _check_matrix(self.Pi))

    @property
    def matrix(self) -> np.ndarray:
        return self.Pi

    @property
    def genus(self) -> int:
        return self.Pi.shape[0]

    @property
    def reality_flag(self) -> bool:
        return prym_reality_residual(self.Pi) < 1e-10

    def to_dict(self) -> dict:
        return {"re": self.Pi.real.tolist(), "im": self.Pi.imag.tolist()}

    @classmethod
    def from_dict(cls, doc) -> "PrymData":
        return cls(np.array(doc["re"]) + 1j * np.array(doc["im"]))


def _cvec(x) -> list:
    x = np.atleast_1d(np.asarray(x, dtype=complex))
    return [[float(v.real), float(v.imag)] for v in x]


def _uncvec(lst) -> np.ndarray:
    return np.array([complex(a, b) for a, b in lst])


@dataclass(eq=False)
class ThetaSolutionData:
    prym: PrymData
    U: np.ndarray
    V: np.ndarray
    e: np.ndarray
    c: complex
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        g = self.prym.genus
        self.U, self.V, self.e = (np.atleast_1d(np.asarray(a, dtype=complex)) for a in (self.U, self.V, self.e))
        if not (self.U.shape == self.V.shape == self.e.shape == (g,)):
            raise ValidationError(f"U, V, e must be complex {g}-vectors")
        self.c = complex(self.c)
        if not np.isfinite(self.c):
            raise ValidationError("c must be finite")

    @property
    def conjugate_periods(self) -> bool:
        return bool(np.abs(self.V - np.conj(self.U)).max() < 1e-8)

    def to_dict(self) -> dict:
        return {"Pi": self.prym.to_dict(), "U": _cvec(self.U), "V": _cvec(self.V), "e": _cvec(self.e),
                "c": [self.c.real, self.c.imag], "provenance": self.provenance}

    @classmethod
    def from_dict(cls, doc) -> "ThetaSolutionData":
        return cls(PrymData.from_dict(doc["Pi"]), _uncvec(doc["U"]), _uncvec(doc["V"]), _uncvec(doc["e"]),
                   complex(*doc["c"]), dict(doc.get("provenance", {})))


@dataclass(eq=False)
class PointData:
    """A point of the spectral curve: Prym-Abel value, Abelian integrals of
    Omega_inf and Omega_0 from the base point P_inf, and lambda."""

    UP: np.ndarray
    int_inf: complex
    int_0: complex
    lam: complex
    omega_at: float | None = None

    def __post_init__(self):
        self.UP = np.atleast_1d(np.asarray(self.UP, dtype=complex))
        for v in (self.int_inf, self.int_0, self.lam):
            if not np.isfinite(v):
                raise ValidationError("point data must be finite")
        if not np.all(np.isfinite(self.UP)):
            raise ValidationError("point data must be finite")

    def to_dict(self) -> dict:
        return {"UP": _cvec(self.UP), "int_inf": _cvec(self.int_inf)[0], "int_0": _cvec(self.int_0)[0],
                "lam": _cvec(self.lam)[0], "omega_at": self.omega_at}

    @classmethod
    def from_dict(cls, doc) -> "PointData":
        return cls(_uncvec(doc["UP"]), complex(*doc["int_inf"]), complex(*doc["int_0"]), complex(*doc["lam"]),
                   doc.get("omega_at"))


# --- truncation -------------------------------------------------------------


def tail_bound(R: float, n: int, lam_min: float, power: int = 0, terms: int = 200) -> float:
    """Bound on sum over |N - c|_A > R of |N - c|^power exp(-|N - c|_A^2 / 2).

    Lattice points with |N - c|_A in [R + j, R + j + 1) lie in a Euclidean
    ball of radius rho_j = (R + j + 1) / sqrt(lam_min), hence in a cube
    holding at most (2 rho_j + 1)^n integer points.
    """
    j = np.arange(terms)
    rho = (R + j + 1) / np.sqrt(lam_min)
    return float(np.sum((2 * rho + 1) ** n * rho**power * np.exp(-0.5 * (R + j) ** 2)))


@dataclass(frozen=True)
class Truncation:
    radius: float  # certified A-radius around the centre
    radius_eff: float  # enumeration radius around the rounded centre
    n_points: int
    tail: float  # bound relative to the dominant term
    max_power: int


def _enumerate(A: np.ndarray, r: float) -> np.ndarray:
    """All integer M with M.A.M <= r^2, by nested interval bounds on the
    Cholesky factor (last coordinate first)."""
    n = A.shape[0]
    R = np.linalg.cholesky(A).T  # A = R^T R, R upper triangular
    r2 = r * r
    # partial: rows of already chosen coordinates i+1..n-1 and used budget
    pts = np.zeros((1, 0), dtype=np.int64)
    used = np.zeros(1)
    for i in range(n - 1, -1, -1):
        # q_i = (R_ii M_i + sum_{j>i} R_ij M_j)^2
        shift = pts @ R[i, i + 1:] if pts.shape[1] else np.zeros(len(pts))
        room = np.sqrt(np.maximum(r2 - used, 0.0)) / R[i, i]
        centre = -shift / R[i, i]
        lo = np.ceil(centre - room - 1e-12).astype(np.int64)
        hi = np.floor(centre + room + 1e-12).astype(np.int64)
        counts = np.maximum(hi - lo + 1, 0)
        total = int(counts.sum())
        if total > MAX_POINTS:
            raise TruncationOverflow(f"truncation needs more than {MAX_POINTS} lattice points")
        rep = np.repeat(np.arange(len(pts)), counts)
        start = np.repeat(lo, counts)
        offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        m = start + offs
        val = (R[i, i] * m + shift[rep]) ** 2
        used = used[rep] + val
        pts = np.concatenate([m[:, None], pts[rep]], axis=1)
        keep = used <= r2 * (1 + 1e-12)
        pts, used = pts[keep], used[keep]
    return pts


@lru_cache(maxsize=64)
def _lattice(key: bytes, n: int, eps: float, max_power: int):
    A = np.frombuffer(key, dtype=float).reshape(n, n)
    ev = np.linalg.eigvalsh(A)
    lam_min, lam_max = float(ev[0]), float(ev[-1])
    target = eps * _TAIL_MARGIN
    R = 1.0
    while max(tail_bound(R, n, lam_min, p) for p in range(max_power + 1)) > target:
        R += 0.25
        if R > 1e3:
            raise TruncationOverflow("no finite truncation radius found")
    r_eff = R + 0.5 * np.sqrt(n * lam_max)
    M = _enumerate(A, r_eff)
    order = np.lexsort(tuple(M[:, k] for k in range(n - 1, -1, -1)) + (np.sum(M * M, axis=1),))
    M = M[order]
    M.setflags(write=False)
    tail = max(tail_bound(R, n, lam_min, p) for p in range(max_power + 1))
    return M, Truncation(R, r_eff, len(M), tail, max_power)


def _check_eps(eps: float) -> None:
    if not 1e-14 <= eps <= 1e-4:
        raise ValidationError("eps must lie in [1e-14, 1e-4]")


def truncation(data, eps: float = 1e-12, max_power: int = 2) -> Truncation:
    _check_eps(eps)
    A = np.ascontiguousarray(-data.matrix.real)
    return _lattice(A.tobytes(), A.shape[0], float(eps), max_power)[1]


def _sums(data, z: np.ndarray, eps: float, dirs: list, powers: list, threads: int = 1):
    """Scaled sums over the lattice.

    Returns (S0, [S_p for each (direction-tuple) in powers]) where each
    S_p = sum term * prod_k ((N - c).d_k) relative to exp(c.A.c / 2).
    ``powers`` is a list of tuples of indices into ``dirs``.
    """
    _check_eps(eps)
    B = data.matrix
    n = B.shape[0]
    A = np.ascontiguousarray(-B.real)
    max_power = max([len(p) for p in powers] + [0])
    M, _ = _lattice(A.tobytes(), n, float(eps), max(2, max_power))
    z = np.asarray(z, dtype=complex)
    if z.shape[-1] != n:
        raise ValidationError(f"z has dimension {z.shape[-1]}, genus is {n}")
    flat = z.reshape(-1, n)
    Ainv = np.linalg.inv(A)
    D = [np.asarray(d, dtype=complex).reshape(n) for d in dirs]

    def work(chunk):
        out0, outs = [], [[] for _ in powers]
        for zz in chunk:
            c = Ainv @ zz.real
            N0 = np.rint(c).astype(np.int64)
            N = M + N0
            X = N - c
            expo = -0.5 * np.einsum("ki,ij,kj->k", X, A, X)
            phase = 0.5 * np.einsum("ki,ij,kj->k", N, B.imag, N) + N @ zz.imag
            t = np.exp(expo + 1j * phase)
            out0.append(np.add.reduce(t))
            proj = [X @ d for d in D]
            for slot, p in enumerate(powers):
                f = t
                for k in p:
                    f = f * proj[k]
                outs[slot].append(np.add.reduce(f))
        return out0, outs

    chunks = [flat[i:i + 64] for i in range(0, len(flat), 64)] or [flat]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(threads) as ex:
            res = list(ex.map(work, chunks))
    else:
        res = [work(ch) for ch in chunks]
    S0 = np.concatenate([np.array(r[0], dtype=complex) for r in res]).reshape(z.shape[:-1])
    Sp = [np.concatenate([np.array(r[1][s], dtype=complex) for r in res]).reshape(z.shape[:-1])
          for s in range(len(powers))]
    if np.any(np.abs(S0) < NEAR_ZERO):
        raise NearZeroTheta("theta is within the near-divisor guard")
    centre = np.einsum("...i,ij->...j", z.real, Ainv)
    return S0, Sp, centre


def theta_eval(data, z, eps: float = 1e-12, threads: int = 1, certificate: bool = False):
    """theta(z) for z of shape (..., n); optionally with the Truncation."""
    z = np.asarray(z, dtype=complex)
    n = data.genus
    if z.ndim == 0 and n == 1:
        z = z[None]
    S0, _, centre = _sums(data, z, eps, [], [], threads)
    A = -data.matrix.real
    log_scale = 0.5 * np.einsum("...i,ij,...j->...", centre, A, centre)
    val = S0 * np.exp(log_scale)
    if certificate:
        return val, truncation(data, eps)
    return val


def _cumulants(m: list) -> list:
    """Cumulants k1..k4 from raw moments m1..m4 (complex weights)."""
    out = [m[0]]
    if len(m) > 1:
        out.append(m[1] - m[0] ** 2)
    if len(m) > 2:
        out.append(m[2] - 3 * m[1] * m[0] + 2 * m[0] ** 3)
    if len(m) > 3:
        out.append(m[3] - 4 * m[2] * m[0] - 3 * m[1] ** 2 + 12 * m[1] * m[0] ** 2 - 6 * m[0] ** 4)
    return out


def theta_log_derivatives(data, z, dir1, dir2=None, eps: float = 1e-12, threads: int = 1):
    """(d_dir1 ln theta, <dir1, Hess ln theta dir2>) at z; second entry is
    None when dir2 is not given."""
    z = np.asarray(z, dtype=complex)
    if z.ndim == 0:
        z = z[None]
    n = data.genus
    d1 = np.asarray(dir1, dtype=complex).reshape(n)
    if dir2 is None:
        S0, (S1,), c = _sums(data, z, eps, [d1], [(0,)], threads)
        return S1 / S0 + c @ d1, None
    d2 = np.asarray(dir2, dtype=complex).reshape(n)
    S0, (S1, S2, S12), c = _sums(data, z, eps, [d1, d2], [(0,), (1,), (0, 1)], threads)
    first = S1 / S0 + c @ d1
    second = S12 / S0 - (S1 / S0) * (S2 / S0)
    return first, second


def theta_directional_log(data, z, d, order: int = 4, eps: float = 1e-12):
    """Derivatives of t -> ln theta(z + t d) at t = 0, orders 1..order."""
    if not 1 <= order <= 4:
        raise ValidationError("order must be in 1..4")
    z = np.asarray(z, dtype=complex)
    if z.ndim == 0:
        z = z[None]
    n = data.genus
    d = np.asarray(d, dtype=complex).reshape(n)
    S0, Sp, c = _sums(data, z, eps, [d], [(0,) * k for k in range(1, order + 1)])
    k = _cumulants([s / S0 for s in Sp])
    k[0] = k[0] + c @ d
    return k


def conjugation_check(data: PrymData, n_samples: int = 16, rng_seed: int = 0, eps: float = 1e-12,
                      scale: float = 1.0) -> dict:
    """max |conj theta(z) - theta(conj z)| / |theta(z)| over random z."""
    rng = np.random.default_rng(rng_seed)
    g = data.genus
    z = scale * (rng.standard_normal((n_samples, g)) + 1j * rng.standard_normal((n_samples, g)))
    a = theta_eval(data, z, eps)
    b = theta_eval(data, np.conj(z), eps)
    res = float(np.max(np.abs(np.conj(a) - b) / np.abs(a)))
    return {"residual": res, "reality_flag": data.reality_flag, "n_samples": n_samples}


# --- theta solution ---------------------------------------------------------


def _flow_argument(data: ThetaSolutionData, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return (1j * z[..., None] * data.U + 1j * np.conj(z)[..., None] * data.V - data.e)


@dataclass
class OmegaResult:
    omega: np.ndarray
    exp_omega: np.ndarray  # complex e^omega before the log
    imaginary_leak: float
    flagged: list
    warnings: list


def omega_from_theta(data: ThetaSolutionData, grid: PlanarGrid | None = None, z=None, eps: float = 1e-12,
                     threads: int = 1) -> OmegaResult:
    """omega = ln(2 <iU, Hess ln eta(iUz + iV zbar - e) iV> + c) on a grid."""
    warnings = []
    if not data.prym.reality_flag or not data.conjugate_periods:
        warnings.append("reality data missing (Pi reality or V = conj U): result may be complex or singular")
    if z is None:
        z = grid.z()
    arg = _flow_argument(data, z)
    if np.allclose(data.U, 0) and np.allclose(data.V, 0):
        ew = np.full(np.shape(z), data.c, dtype=complex)
    else:
        _, hess = theta_log_derivatives(data.prym, arg, 1j * data.U, 1j * data.V, eps, threads)
        ew = 2 * hess + data.c
    leak = float(np.abs(ew.imag).max())
    bad = ew.real <= 0
    flagged = [tuple(map(int, ij)) for ij in np.argwhere(bad)]
    if bad.mean() > 0.01:
        raise SingularSolution(f"e^omega <= 0 at {bad.mean():.1%} of points")
    omega = np.full(ew.shape, np.nan)
    omega[~bad] = np.log(ew.real[~bad])
    return OmegaResult(omega, ew, leak, flagged, warnings)


def _omega_at(data: ThetaSolutionData, z: complex, P: PointData) -> float:
    if P.omega_at is not None:
        return float(P.omega_at)
    w = omega_from_theta(data, z=np.array([z]))
    return float(w.omega[0])


def baker_akhiezer_psi(data: ThetaSolutionData, P: PointData, z: complex, eps: float = 1e-12):
    """(psi1, psi2, psi3) at z with psi2 = -i d_z psi1 and
    psi3 = -i lambda e^-omega d_zbar psi1."""
    if P.lam == 0:
        raise ValidationError("lambda(P) must be non-zero")
    zc = complex(z)
    arg = _flow_argument(data, np.array(zc))
    top_arg = P.UP + arg
    bot_arg = P.UP - data.e
    try:
        top = theta_eval(data.prym, top_arg, eps)
        bot = theta_eval(data.prym, bot_arg, eps)
        lz, _ = theta_log_derivatives(data.prym, top_arg, 1j * data.U, eps=eps)
        lzb, _ = theta_log_derivatives(data.prym, top_arg, 1j * data.V, eps=eps)
    except NearZeroTheta as exc:
        raise ThetaDivisorHit(str(exc)) from exc
    psi1 = complex(top / bot) / P.lam * np.exp(1j * zc * P.int_inf + 1j * np.conj(zc) * P.int_0)
    dz = psi1 * (complex(lz) + 1j * P.int_inf)
    dzb = psi1 * (complex(lzb) + 1j * P.int_0)
    w = _omega_at(data, zc, P)
    return psi1, -1j * dz, -1j * P.lam * np.exp(-w) * dzb


def pairing_omega(psiP, psiSigmaQ, lamP: complex, omega: float = 0.0) -> complex:
    """Omega(P, Q) = psi3(P) psi2(sQ) lam - psi2(P) psi3(sQ) lam - psi1(P) psi1(sQ) lam^2.

    ``omega`` is accepted for call-site symmetry with the frame; the
    pairing itself does not involve it.
    """
    p1, p2, p3 = psiP
    q1, q2, q3 = psiSigmaQ
    return complex(p3 * q2 * lamP - p2 * q3 * lamP - p1 * q1 * lamP**2)


@dataclass
class BAFrame:
    F: np.ndarray
    W: np.ndarray
    unitarity: float


def frame_from_ba(data: ThetaSolutionData, points, sigma_points, z: complex, W=None, nu: complex | None = None,
                  tol: float = 1e-6, eps: float = 1e-12) -> BAFrame:
    """Rows (nu^2 psi1, nu e^-omega/2 psi2, e^omega/2 psi3) / sqrt(W) for the
    three points over one lambda on |lambda| = 1.  W defaults to the
    pairing at coincident points (needs ``sigma_points``)."""
    lams = np.array([p.lam for p in points])
    if len(points) != 3 or np.abs(lams - lams[0]).max() > 1e-10:
        raise ValidationError("need three points over the same lambda")
    if abs(abs(lams[0]) - 1) > 1e-10:
        raise ValidationError("|lambda| must be 1")
    nu = lams[0] ** (1 / 3) if nu is None else complex(nu)
    psis = [baker_akhiezer_psi(data, p, z, eps) for p in points]
    if W is None:
        if sigma_points is None:
            raise ValidationError("W or sigma_points must be supplied")
        W = [pairing_omega(psis[i], baker_akhiezer_psi(data, sigma_points[i], z, eps), points[i].lam)
             for i in range(3)]
    W = np.asarray(W, dtype=complex)
    if np.any(np.abs(W.imag) > 1e-8 * np.maximum(1, np.abs(W))) or np.any(W.real <= 0):
        raise NonPositiveW(f"W = {W}")
    w = _omega_at(data, complex(z), points[0])
    F = np.array([[nu**2 * s[0], nu * np.exp(-w / 2) * s[1], np.exp(w / 2) * s[2]] for s in psis])
    F = F / np.sqrt(W.real)[:, None]
    un = float(np.linalg.norm(F.conj().T @ F - np.eye(3)))
    if un > tol:
        raise UnitarityFailure(f"|F^dagger F - I| = {un:.3e}")
    return BAFrame(F, W.real, un)


def vacuum_fixture(nu: complex = np.exp(0.4j)):
    """Finite-gap vacuum: U = V = 0, c = 1 (omega = 0) with the three points
    kappa_j = nu eps^j over lambda = nu^3; intOmega_inf = kappa,
    intOmega_0 = 1/kappa.  Returns (data, points, sigma_points)."""
    eps3 = np.exp(2j * np.pi / 3)
    data = ThetaSolutionData(PrymData(np.array([[-2 * np.pi]])), [0], [0], [0], 1.0,
                             {"kind": "vacuum"})
    lam = complex(nu**3)
    pts, spts = [], []
    for j in range(3):
        k = complex(nu * eps3**j)
        pts.append(PointData([0.3], k, 1 / k, lam))
        spts.append(PointData([0.3], -k, -1 / k, -lam))
    return data, pts, spts

