"""Spectral curve det(xi(nu) - mu) = 0 of a polynomial Killing field.

For traceless xi the curve reads mu^3 = S(nu) mu + D(nu) with
S = tr(xi^2)/2 = sum p_k nu^{6k} and D = det xi = sum_{k odd} q_k nu^{3k}.
Both Laurent polynomials are computed exactly by coefficient convolution,
so support and symmetry tests are meaningful at round-off level.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .errors import BadDegree, SupportViolation
from .loop_algebra import LoopElement


def _poly_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched polynomial product along the last axis."""
    n, m = a.shape[-1], b.shape[-1]
    out = np.zeros(np.broadcast_shapes(a.shape[:-1], b.shape[:-1]) + (n + m - 1,), dtype=complex)
    for i in range(n):
        out[..., i:i + m] += a[..., i:i + 1] * b
    return out


def _perm_sign(p) -> int:
    s, p = 1, list(p)
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            s = -s
    return s


def half_trace_square(c: np.ndarray) -> np.ndarray:
    """Coefficients (degrees -2d..2d) of tr(xi(nu)^2)/2 from stacked
    coefficients ``c[..., 2d+1, 3, 3]``."""
    # tr(X_j X_k) = sum_ab X_j[a,b] X_k[b,a]
    ent = np.moveaxis(c.reshape(c.shape[:-2] + (9,)), -2, -1)  # (..., 9, 2d+1)
    entT = np.moveaxis(np.swapaxes(c, -1, -2).reshape(c.shape[:-2] + (9,)), -2, -1)
    return 0.5 * _poly_mul(ent, entT).sum(axis=-2)


def laurent_det(c: np.ndarray) -> np.ndarray:
    """Coefficients (degrees -3d..3d) of det xi(nu), by Leibniz expansion
    with every entry a Laurent polynomial."""
    ent = np.moveaxis(c, -3, -1)  # (..., 3, 3, 2d+1)
    total = None
    for p in permutations(range(3)):
        term = _poly_mul(_poly_mul(ent[..., 0, p[0], :], ent[..., 1, p[1], :]), ent[..., 2, p[2], :])
        term = _perm_sign(p) * term
        total = term if total is None else total + term
    return total


@dataclass
class SpectralCoeffs:
    """p[k] for k in [-K, K], K = (d-1)/3, and q[k] for odd k in [-d, d]."""

    d: int
    p: dict[int, complex]
    q: dict[int, complex]
    residual_support: float = 0.0

    def half_trace(self, nu):
        return sum(c * nu ** (6 * k) for k, c in self.p.items())

    def det(self, nu):
        return sum(c * nu ** (3 * k) for k, c in self.q.items())

    def scale(self) -> float:
        vals = [abs(v) for v in self.p.values()] + [abs(v) for v in self.q.values()]
        return max([1.0] + vals)

    def as_vector(self) -> np.ndarray:
        return np.array([self.p[k] for k in sorted(self.p)] + [self.q[k] for k in sorted(self.q)])

    def to_dict(self) -> dict:
        enc = lambda m: [{"k": k, "re": v.real, "im": v.imag} for k, v in sorted(m.items())]  # noqa: E731
        return {"d": self.d, "p": enc(self.p), "q": enc(self.q)}

    @classmethod
    def from_dict(cls, doc) -> "SpectralCoeffs":
        dec = lambda lst: {int(e["k"]): complex(e["re"], e["im"]) for e in lst}  # noqa: E731
        return cls(int(doc["d"]), dec(doc["p"]), dec(doc["q"]))

    def table(self) -> str:
        rows = ["coeff    k         re                 im"]
        for name, m in (("p", self.p), ("q", self.q)):
            for k, v in sorted(m.items()):
                rows.append(f"{name:5s} {k:4d}  {v.real: .15e}  {v.imag: .15e}")
        return "\n".join(rows)


def coefficient_arrays(c: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Batched extraction.  Returns (p, q, support_residual) with p of
    length 2K+1 and q of length d+1 (odd k ascending)."""
    s = half_trace_square(c)
    dt = laurent_det(c)
    K = (d - 1) // 3
    p_idx = np.array([6 * k + 2 * d for k in range(-K, K + 1)])
    q_idx = np.array([3 * k + 3 * d for k in range(-d, d + 1) if k % 2])
    s_off = np.delete(s, p_idx, axis=-1)
    d_off = np.delete(dt, q_idx, axis=-1)
    res = 0.0
    if s_off.size:
        res = max(res, float(np.abs(s_off).max()))
    if d_off.size:
        res = max(res, float(np.abs(d_off).max()))
    return s[..., p_idx], dt[..., q_idx], res


def spectral_coeffs(xi: LoopElement, tol: float = 1e-10) -> SpectralCoeffs:
    if xi.d % 6 != 1:
        raise BadDegree(f"d = {xi.d} is not 1 mod 6")
    d = xi.d
    p, q, res = coefficient_arrays(xi.coeffs, d)
    scale = xi.scale() ** 3
    if res > tol * scale:
        raise SupportViolation(f"Laurent coefficient off the nu^6k / odd nu^3k grid: {res:.3e}")
    K = (d - 1) // 3
    pk = {k: complex(p[k + K]) for k in range(-K, K + 1)}
    odd = [k for k in range(-d, d + 1) if k % 2]
    qk = {k: complex(q[i]) for i, k in enumerate(odd)}
    if xi.real:
        sym = max(
            max(abs(pk[-k] - np.conj(pk[k])) for k in pk),
            max(abs(qk[-k] + np.conj(qk[k])) for k in qk),
        )
        if sym > tol * scale:
            raise SupportViolation(f"p_-k = conj p_k / q_-k = -conj q_k broken: {sym:.3e}")
    return SpectralCoeffs(d, pk, qk, res)


def curve_eval(coeffs: SpectralCoeffs, nu: complex, mu: complex) -> complex:
    if nu == 0:
        raise ValueError("nu must be non-zero")
    return mu**3 - mu * coeffs.half_trace(nu) - coeffs.det(nu)


@dataclass(frozen=True)
class GenusData:
    d: int
    g_circle: int
    g_hat: int
    g: int


def genus_data(d: int) -> GenusData:
    if d < 1 or d % 6 != 1:
        raise BadDegree(f"d = {d} is not 1 mod 6")
    return GenusData(d, 6 * d - 2, 2 * d, d)


def discriminant_in_x(coeffs: SpectralCoeffs) -> np.ndarray:
    """Coefficients of 4 S^3 - 27 D^2 as a Laurent polynomial in
    x = nu^6 = lambda^2, degrees -d..d (ascending)."""
    d = coeffs.d
    K = (d - 1) // 3
    # S in x: p_k -> x^k ; D in lambda = nu^3: q_k lambda^k, k odd
    s = np.array([coeffs.p[k] for k in range(-K, K + 1)])
    dl = np.zeros(2 * d + 1, dtype=complex)
    for k, v in coeffs.q.items():
        dl[k + d] = v
    s3 = _poly_mul(_poly_mul(s, s), s)  # x-degrees -3K..3K
    d2 = _poly_mul(dl, dl)  # lambda-degrees -2d..2d, odd*odd -> even only
    d2x = d2[::2]  # x-degrees -d..d
    out = -27 * d2x
    off = d - 3 * K  # 3K = d - 1 so off = 1
    out[off:off + s3.size] += 4 * s3
    return out


@dataclass
class ProbeReport:
    min_abs_disc: float
    flags: list = field(default_factory=list)
    branch_lambda: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    expected_branch_count: int = 0
    min_root_separation: float = float("inf")
    tau_pairing_residual: float = float("nan")

    @property
    def singular(self) -> bool:
        return bool(self.flags) or self.min_root_separation < 1e-6


def nonsingularity_probe(coeffs: SpectralCoeffs, n_samples: int = 32, rel_tol: float = 1e-8) -> ProbeReport:
    """Sample the discriminant on and off |nu| = 1 and locate its zeros.

    Branch points are the roots lambda = +-sqrt(x) of x^d * disc(x); the
    covering is totally ramified over 0 and infinity, so Riemann-Hurwitz
    predicts 2 * g_hat = 4 d simple branch points.
    """
    if n_samples < 8:
        raise ValueError("n_samples must be >= 8")
    d = coeffs.d
    dx = discriminant_in_x(coeffs)
    scale = max(1.0, float(np.abs(dx).max()))
    flags = []
    radii = (1.0, 0.8, 1.25)
    angles = 2 * np.pi * np.arange(n_samples) / n_samples
    vals = []
    for r in radii:
        for a in angles:
            nu = r * np.exp(1j * a)
            x = nu**6
            v = np.polyval(dx[::-1], x) / x**d
            vals.append(abs(v))
            if abs(v) < rel_tol * scale:
                flags.append(complex(nu))
    roots_x = np.roots(dx[::-1]) if np.abs(dx).max() > 0 else np.zeros(0)
    lam = np.concatenate([np.sqrt(roots_x.astype(complex)), -np.sqrt(roots_x.astype(complex))])
    sep = float("inf")
    if roots_x.size > 1:
        diffs = np.where(np.eye(roots_x.size, dtype=bool), np.inf, np.abs(roots_x[:, None] - roots_x[None, :]))
        sep = float(diffs.min())
    pair = float("nan")
    if lam.size:
        refl = 1 / np.conj(lam)
        pair = float(np.max(np.min(np.abs(refl[:, None] - lam[None, :]), axis=1)))
    return ProbeReport(float(min(vals)) / scale, flags, lam, 4 * d, sep, pair)
