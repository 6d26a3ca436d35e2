"""Closing conditions and numerical lattice search for surfaces in CP^2.

A translation Z is compared on the projective surface: the residual is the
sup over the overlap {z : z, z + Z in the grid rectangle} of the
Fubini-Study distance between x(z + Z) and x(z).  Off-grid values come from
a sampler: phase-aligned bilinear interpolation of the lift by default, or
any callable (the frame transport sampler is exact for constant
connections).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .connection import ConnectionField, FrameField, transport
from .errors import InsufficientOverlap, ValidationError
from .grid import PlanarGrid

Sampler = Callable[[np.ndarray], np.ndarray]


def _dist_pi(x: np.ndarray) -> np.ndarray:
    """Distance of each real number to the lattice pi Z."""
    return np.abs(x - np.pi * np.rint(x / np.pi))


def theta_closing_check(U, int_inf: complex, Z1: complex, Z2: complex, tol: float = 1e-8) -> dict:
    """Re(Z_k U) in pi Z^g and Re(Z_k intOmega_inf) in pi Z for k = 1, 2."""
    U = np.atleast_1d(np.asarray(U, dtype=complex))
    if U.size < 1:
        raise ValidationError("g must be at least 1")
    out = {"passed": True, "tol": tol}
    for k, Z in ((1, Z1), (2, Z2)):
        du = _dist_pi((Z * U).real)
        dw = float(_dist_pi(np.array([(Z * int_inf).real]))[0])
        out[f"Z{k}_U"] = du.tolist()
        out[f"Z{k}_int"] = dw
        out["passed"] &= bool(du.max() < tol and dw < tol)
    return out


@dataclass
class LatticeCandidate:
    Z1: complex
    Z2: complex
    residual: float
    source: str = "monodromy_search"

    def __post_init__(self):
        if self.source not in ("theta_conditions", "monodromy_search"):
            raise ValidationError(f"unknown source {self.source}")
        if self.Z2 == 0 or abs((self.Z1 / self.Z2).imag) <= 1e-6:
            raise ValidationError("degenerate lattice: Im(Z1/Z2) too small")

    def axis_periods(self, search: int = 8, rel: float = 1e-6) -> tuple[float | None, float | None]:
        """Shortest positive real (u) and imaginary (v) lattice vectors."""
        best_u = best_v = None
        for m in range(-search, search + 1):
            for n in range(-search, search + 1):
                w = m * self.Z1 + n * self.Z2
                if abs(w) < 1e-12:
                    continue
                if abs(w.imag) < rel * abs(w) and w.real > 0 and (best_u is None or w.real < best_u):
                    best_u = w.real
                if abs(w.real) < rel * abs(w) and w.imag > 0 and (best_v is None or w.imag < best_v):
                    best_v = w.imag
        return best_u, best_v

    def to_dict(self) -> dict:
        return {"Z1": [self.Z1.real, self.Z1.imag], "Z2": [self.Z2.real, self.Z2.imag],
                "residual": self.residual, "method": self.source}


# --- samplers -----------------------------------------------------------------


def _unit(y):
    return y / np.linalg.norm(y, axis=-1, keepdims=True)


def bilinear_sampler(surface: np.ndarray, grid: PlanarGrid) -> Sampler:
    """Phase-aligned bilinear interpolation of a lift grid."""
    y = np.asarray(surface, dtype=complex)

    def sample(z):
        z = np.asarray(z, dtype=complex)
        x = np.clip((z.real - grid.u0) / grid.hu, 0, grid.n_u - 1)
        t = np.clip((z.imag - grid.v0) / grid.hv, 0, grid.n_v - 1)
        i = np.minimum(np.floor(x).astype(int), grid.n_u - 2)
        j = np.minimum(np.floor(t).astype(int), grid.n_v - 2)
        s, r = (x - i)[..., None], (t - j)[..., None]
        y00 = y[i, j]

        def al(w):
            o = np.sum(w * np.conj(y00), axis=-1, keepdims=True)
            return w * np.conj(o) / np.maximum(np.abs(o), 1e-300)

        v = ((1 - s) * (1 - r) * y00 + s * (1 - r) * al(y[i + 1, j])
             + (1 - s) * r * al(y[i, j + 1]) + s * r * al(y[i + 1, j + 1]))
        return _unit(v)

    return sample


def frame_sampler(frame: FrameField, conn: ConnectionField) -> Sampler:
    """First frame column transported from the nearest node."""
    return lambda z: _unit(transport(frame, conn, z)[..., :, 0])


# --- residuals ---------------------------------------------------------------


def _overlap(grid: PlanarGrid, Z: complex, stride: int = 1):
    """Node indices whose translate by Z stays inside the grid rectangle."""
    u, v = grid.u, grid.v
    u1, v1 = u[-1], v[-1]
    zu, zv = Z.real, Z.imag
    iu = np.nonzero((u + zu >= grid.u0 - 1e-12) & (u + zu <= u1 + 1e-12))[0][::stride]
    iv = np.nonzero((v + zv >= grid.v0 - 1e-12) & (v + zv <= v1 + 1e-12))[0][::stride]
    return iu, iv


def _pair_values(surface, grid, Z, sampler, stride, min_overlap, snap):
    Z = complex(Z)
    iu, iv = _overlap(grid, Z)
    frac = len(iu) * len(iv) / (grid.n_u * grid.n_v)
    if frac < min_overlap:
        raise InsufficientOverlap(f"translation {Z} overlaps {frac:.1%} of the grid")
    iu, iv = iu[::stride], iv[::stride]
    a = surface[np.ix_(iu, iv)]
    ku, kv = Z.real / grid.hu, Z.imag / grid.hv
    if abs(ku - round(ku)) <= snap and abs(kv - round(kv)) <= snap:
        b = surface[np.ix_(iu + int(round(ku)), iv + int(round(kv)))]
    else:
        zz = grid.z()[np.ix_(iu, iv)] + Z
        b = (sampler or bilinear_sampler(surface, grid))(zz)
    return a, b


def _overlap_sq(a, b):
    """1 - |<a, b>|^2: smooth squared proxy of the Fubini-Study distance."""
    return 1 - np.abs(np.sum(a * np.conj(b), axis=-1)) ** 2


def monodromy_residual(surface: np.ndarray, Z: complex, grid: PlanarGrid, sampler: Sampler | None = None,
                       min_overlap: float = 0.25, snap: float = 1e-9, stride: int = 1) -> float:
    """sup over the overlap of dist(x(z + Z), x(z)).

    Z is treated as a grid translation when Z / h is within ``snap`` of an
    integer pair; otherwise ``sampler`` (default: phase-aligned bilinear)
    evaluates x(z + Z).
    """
    if Z == 0:
        return 0.0
    a, b = _pair_values(surface, grid, Z, sampler, stride, min_overlap, snap)
    return float(np.arccos(np.clip(np.abs(np.sum(a * np.conj(b), axis=-1)), 0, 1)).max())


def monodromy_rms_sq(surface, Z, grid, sampler=None, min_overlap=0.25, stride=1) -> float:
    """Mean of 1 - |<x(z + Z), x(z)>|^2 over the overlap (smooth in Z)."""
    a, b = _pair_values(surface, grid, Z, sampler, stride, min_overlap, 1e-9)
    return float(np.mean(_overlap_sq(a, b)))


def frame_monodromy(frame: FrameField, conn: ConnectionField, z0: complex, Z: complex) -> np.ndarray:
    """Eigenvalues of F(z0)^-1 F(z0 + Z) (conjugacy invariant)."""
    F0, F1 = transport(frame, conn, np.array([z0, z0 + Z]))
    return np.sort_complex(np.linalg.eigvals(np.linalg.solve(F0, F1)))


# --- search -----------------------------------------------------------------


@dataclass
class LatticeSearchResult:
    candidates: list  # LatticeCandidate pairs, best first
    periods: list  # (Z, sup residual) single translations below tol
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"candidates": [c.to_dict() for c in self.candidates],
                "periods": [{"Z": [z.real, z.imag], "residual": r} for z, r in self.periods],
                "diagnostics": self.diagnostics}


def _refine(f, z0: complex, du: float, dv: float, sweeps: int = 4) -> complex:
    """Alternating line searches (Brent, bracketed) in Re Z and Im Z."""
    x, y = z0.real, z0.imag
    for _ in range(sweeps):
        for axis in (0, 1):
            d = du if axis == 0 else dv
            g = (lambda t: f(complex(t, y))) if axis == 0 else (lambda t: f(complex(x, t)))
            c = x if axis == 0 else y
            try:
                r = minimize_scalar(g, bracket=(c - d, c, c + d), method="brent", tol=1e-9)
                t = r.x
            except ValueError:
                t = minimize_scalar(g, bounds=(c - d, c + d), method="bounded", options={"xatol": 1e-12}).x
            if g(t) <= g(c):
                if axis == 0:
                    x = t
                else:
                    y = t
        du, dv = du / 4, dv / 4
    return complex(x, y)


def _local_minima(vals: np.ndarray) -> list:
    n, m = vals.shape
    out = []
    for i in range(n):
        for j in range(m):
            v = vals[i, j]
            if not np.isfinite(v):
                continue
            nb = vals[max(i - 1, 0):i + 2, max(j - 1, 0):j + 2]
            if v <= np.nanmin(nb):
                out.append((v, i, j))
    return sorted(out)


def _reduce_basis(z1: complex, z2: complex):
    """Lagrange-Gauss reduction of a 2D lattice basis."""
    for _ in range(100):
        if abs(z2) < abs(z1):
            z1, z2 = z2, z1
        mu = round(((z2 * np.conj(z1)).real) / abs(z1) ** 2)
        if mu == 0:
            break
        z2 = z2 - mu * z1
    # canonical signs: upper half plane (positive real axis on ties)
    z1, z2 = (-z if (z.imag < 0 or (z.imag == 0 and z.real < 0)) else z for z in (z1, z2))
    return tuple(sorted((z1, z2), key=lambda z: (round(abs(z), 9), -z.real)))


def lattice_search(surface: np.ndarray, grid: PlanarGrid, search_box=None, coarse_n: int = 31, tol: float = 1e-5,
                   sampler: Sampler | None = None, max_refine: int = 12, max_periods: int = 4,
                   min_length: float | None = None, coarse_points: int = 400, refine_points: int = 1200,
                   promising: float = 0.25) -> LatticeSearchResult:
    """Scan |x(z + Z) - x(z)| over Z in a box, refine minima, assemble a lattice.

    The coarse scan uses bilinear interpolation on a strided overlap.  Each
    coarse minimum below ``promising`` times the median coarse value is
    refined (shortest first) by alternating line searches, first with bilinear values and then
    with ``sampler`` on a strided overlap of about ``refine_points`` nodes;
    the reported sup residual uses ``sampler`` on the full overlap.  The
    search stops after ``max_periods`` periods once two are independent.
    The default box is [-L_u/3, L_u/3] x [0, L_v/3] (Z and -Z are both
    periods, so a half plane suffices).
    """
    Lu, Lv = grid.hu * (grid.n_u - 1), grid.hv * (grid.n_v - 1)
    if search_box is None:
        search_box = ((-Lu / 3, Lu / 3), (0.0, Lv / 3))
    (ua, ub), (va, vb) = search_box
    if min_length is None:
        min_length = 3 * max(grid.hu, grid.hv)
    cstride = max(1, int(np.sqrt(grid.n_u * grid.n_v / coarse_points)))
    rstride = max(1, int(np.sqrt(grid.n_u * grid.n_v / refine_points)))
    us, vs = np.linspace(ua, ub, coarse_n), np.linspace(va, vb, coarse_n)
    coarse = np.full((coarse_n, coarse_n), np.nan)
    bil = bilinear_sampler(surface, grid)
    for i, zu in enumerate(us):
        for j, zv in enumerate(vs):
            Z = complex(zu, zv)
            if abs(Z) < min_length:
                continue
            try:
                coarse[i, j] = monodromy_rms_sq(surface, Z, grid, bil, stride=cstride)
            except InsufficientOverlap:
                pass
    med = float(np.nanmedian(coarse)) if np.isfinite(coarse).any() else 0.0
    minima = [m for m in _local_minima(coarse) if m[0] < promising * med]
    # shortest translations first: they are the likely lattice generators
    minima = sorted(minima, key=lambda m: (abs(complex(us[m[1]], vs[m[2]])), m[0]))[:max_refine]
    du = (ub - ua) / max(coarse_n - 1, 1)
    dv = (vb - va) / max(coarse_n - 1, 1)
    f_bil = lambda Z: monodromy_rms_sq(surface, Z, grid, bil, stride=cstride)  # noqa: E731
    f_fine = lambda Z: monodromy_rms_sq(surface, Z, grid, sampler, stride=rstride)  # noqa: E731
    periods, refined = [], 0
    for _, i, j in minima:
        try:
            Z = _refine(f_bil, complex(us[i], vs[j]), du, dv, sweeps=2)
            Z = _refine(f_fine, Z, du / 16, dv / 16, sweeps=2)
            r = monodromy_residual(surface, Z, grid, sampler)
        except InsufficientOverlap:
            continue
        refined += 1
        dup = any(abs(Z - p) < 1e-6 or abs(Z + p) < 1e-6 for p, _ in periods)
        if r < tol and abs(Z) >= min_length and not dup:
            periods.append((Z, r))
        if len(periods) >= max_periods and _independent_pair(periods) is not None:
            break
    periods.sort(key=lambda p: (p[1], p[0].real, p[0].imag))
    cands = []
    pair = _independent_pair(periods)
    if pair is not None:
        z1, z2 = _reduce_basis(*pair)
        try:
            res = max(monodromy_residual(surface, z, grid, sampler) for z in (z1, z2))
        except InsufficientOverlap:
            res = max(r for _, r in periods)
        cands.append(LatticeCandidate(z1, z2, res))
    diag = {"coarse_min": float(np.nanmin(coarse)) if np.isfinite(coarse).any() else None,
            "n_minima": len(minima), "refined": refined,
            "search_box": [list(search_box[0]), list(search_box[1])], "found": len(periods)}
    if not periods:
        diag["status"] = "NoCandidates"
    return LatticeSearchResult(cands, periods, diag)


def _independent_pair(periods):
    """Shortest period and the shortest one not parallel to it."""
    by_len = sorted((p for p, _ in periods), key=lambda z: (abs(z), z.real, z.imag))
    for a in range(len(by_len)):
        for b in range(a + 1, len(by_len)):
            z1, z2 = by_len[a], by_len[b]
            if abs((z1 * np.conj(z2)).imag) > 1e-3 * abs(z1) * abs(z2):
                return z1, z2
    return None


def omega_periods(omega: np.ndarray, grid: PlanarGrid, tol: float = 1e-4, keep: int = 8) -> list:
    """Grid-translation periods of a scalar grid, shortest first (diagnostic:
    omega may be doubly periodic while the surface does not close)."""
    out = []
    for a in range(0, grid.n_u // 2):
        for b in range(0, grid.n_v // 2):
            if a == 0 and b == 0:
                continue
            d = np.abs(omega[a:, b:] - omega[:grid.n_u - a, :grid.n_v - b]).max()
            if d < tol:
                out.append((complex(a * grid.hu, b * grid.hv), float(d)))
    out.sort(key=lambda p: (abs(p[0]), p[1]))
    return out[:keep]
