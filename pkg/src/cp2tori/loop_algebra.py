"""Twisted loop algebra of sl(3, C) with an order-3 and an order-2 twist.

A loop is stored as a dense stack of Laurent coefficients ``coeffs[k + d]``
for ``k = -d..d``.  The twists are

* ``gamma(X) = Q X Q^-1`` with eigenspaces M_0, M_1, M_2 (cyclic patterns),
* ``sigma(X) = -T X^t T`` with eigenspaces N_0 (+1) and N_1 (-1),

and a loop xi(nu) = sum nu^k xi_k lies in the twisted algebra iff every
xi_k is in M_{k mod 3} and N_{k mod 2}.  The real form uses the compact
conjugation ``X -> -X^dagger`` so that xi(nu) is su(3)-valued on |nu| = 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import GradingViolation, RealityViolation, TraceViolation, TwistingViolation

EPS = np.exp(2j * np.pi / 3)
Q = np.diag([1.0, EPS, EPS**2]).astype(complex)
Q_INV = np.diag([1.0, EPS**-1, EPS**-2]).astype(complex)
T = np.array([[1, 0, 0], [0, 0, 1], [0, 1, 0]], dtype=complex)
B = np.array([[0, 0, 1j], [1j, 0, 0], [0, 1j, 0]], dtype=complex)

DEFAULT_TOL = 1e-12

_J, _L = np.indices((3, 3))
# entry (j, l) of an M_m element is nonzero only when j - l = m (mod 3)
GRADE_MASK = [((_J - _L) % 3) == m for m in range(3)]


def gamma(m: np.ndarray) -> np.ndarray:
    return Q @ m @ Q_INV


def sigma(m: np.ndarray) -> np.ndarray:
    return -T @ np.swapaxes(m, -1, -2) @ T


def star(m: np.ndarray) -> np.ndarray:
    """Compact conjugation X -> -X^dagger on (stacks of) matrices."""
    return -np.conj(np.swapaxes(m, -1, -2))


def eigenspace_project(m: np.ndarray, mode: str, k: int) -> np.ndarray:
    """Project onto an eigenspace of gamma (``mode='gamma'``, k in 0..2)
    or of sigma (``mode='sigma'``, parity k in 0..1)."""
    m = np.asarray(m, dtype=complex)
    if mode == "gamma":
        out = np.zeros_like(m)
        g = m
        for j in range(3):
            out = out + EPS ** (-k * j) * g
            g = gamma(g)
        return out / 3
    if mode == "sigma":
        return 0.5 * (m + (-1) ** k * sigma(m))
    raise ValueError(f"unknown projection mode {mode!r}")


def graded_project(m: np.ndarray, k: int) -> np.ndarray:
    """Projection onto M_{k mod 3} cap N_{k mod 2}."""
    return eigenspace_project(eigenspace_project(m, "gamma", k % 3), "sigma", k % 2)


def graded_basis(k: int) -> list[np.ndarray]:
    """A basis of M_{k mod 3} cap N_{k mod 2}, normalised so that each
    element has entries of modulus 1 (or 2 on the N_1 diagonal)."""
    r = k % 6
    z = lambda: np.zeros((3, 3), dtype=complex)  # noqa: E731
    out = []
    if r == 0:
        a = z(); a[1, 1], a[2, 2] = 1, -1; out.append(a)
    elif r == 1:
        a = z(); a[0, 2] = a[1, 0] = 1; out.append(a)
        b = z(); b[2, 1] = 1; out.append(b)
    elif r == 2:
        a = z(); a[0, 1], a[2, 0] = 1, -1; out.append(a)
    elif r == 3:
        a = z(); a[0, 0], a[1, 1], a[2, 2] = 2, -1, -1; out.append(a)
    elif r == 4:
        a = z(); a[0, 2], a[1, 0] = 1, -1; out.append(a)
    else:
        a = z(); a[0, 1] = a[2, 0] = 1; out.append(a)
        b = z(); b[1, 2] = 1; out.append(b)
    return out


@dataclass(frozen=True, eq=False)
class LoopElement:
    """Laurent polynomial sum_{|k|<=d} nu^k xi_k with 3x3 coefficients."""

    d: int
    coeffs: np.ndarray
    real: bool = False

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != (2 * self.d + 1, 3, 3):
            raise ValueError(f"coeffs shape {c.shape} does not match d={self.d}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __getitem__(self, k: int) -> np.ndarray:
        if abs(k) > self.d:
            return np.zeros((3, 3), dtype=complex)
        return self.coeffs[k + self.d]

    def __call__(self, nu: complex) -> np.ndarray:
        return eval_loop(self, nu, off_circle=True)

    @property
    def degrees(self) -> range:
        return range(-self.d, self.d + 1)

    def scale(self) -> float:
        return float(max(1.0, np.abs(self.coeffs).max()))

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "real": self.real,
            "coeffs": [
                {"k": k, "re": self[k].real.tolist(), "im": self[k].imag.tolist()}
                for k in self.degrees
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping, validate: bool = True) -> "LoopElement":
        d = int(doc["d"])
        c = np.zeros((2 * d + 1, 3, 3), dtype=complex)
        for entry in doc["coeffs"]:
            c[int(entry["k"]) + d] = np.array(entry["re"]) + 1j * np.array(entry["im"])
        el = cls(d, c, bool(doc.get("real", False)))
        if validate:
            validate_loop(el)
        return el


def validate_loop(xi: LoopElement, tol: float = DEFAULT_TOL) -> None:
    """Raise on the first structural violation (absolute tol, scaled by
    the largest coefficient when that exceeds 1)."""
    atol = tol * xi.scale()
    for k in xi.degrees:
        x = xi[k]
        if abs(np.trace(x)) > atol:
            raise TraceViolation(f"coefficient {k} has trace {np.trace(x):.3e}")
        off = np.abs(x[~GRADE_MASK[k % 3]])
        if off.size and off.max() > atol:
            raise GradingViolation(f"coefficient {k} leaves M_{k % 3} (|entry|={off.max():.3e})")
        tw = np.abs(sigma(x) - (-1) ** k * x).max()
        if tw > atol:
            raise TwistingViolation(f"coefficient {k} leaves N_{k % 2} (residual {tw:.3e})")
    if xi.real:
        res = np.abs(xi.coeffs[::-1] - star(xi.coeffs)).max()
        if res > atol:
            raise RealityViolation(f"xi_-k != -xi_k^dagger (residual {res:.3e})")


def make_loop_element(
    coeffs: Mapping[int, np.ndarray] | np.ndarray,
    d: int,
    real_flag: bool = False,
    tol: float = DEFAULT_TOL,
) -> LoopElement:
    """Build and validate a loop; missing degrees are zero."""
    if d < 0:
        raise ValueError("degree bound must be non-negative")
    if isinstance(coeffs, np.ndarray):
        arr = coeffs
    else:
        arr = np.zeros((2 * d + 1, 3, 3), dtype=complex)
        for k, m in coeffs.items():
            if abs(k) > d:
                raise ValueError(f"degree {k} outside [-{d}, {d}]")
            arr[k + d] = np.asarray(m, dtype=complex)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite coefficient")
    xi = LoopElement(d, arr, real_flag)
    validate_loop(xi, tol)
    return xi


def eval_loop(xi: LoopElement, nu: complex, off_circle: bool = False) -> np.ndarray:
    if not off_circle and abs(abs(nu) - 1.0) > 1e-12:
        raise ValueError(f"|nu| = {abs(nu)} is not 1; pass off_circle=True")
    powers = nu ** np.arange(-xi.d, xi.d + 1, dtype=float)
    return np.tensordot(powers, xi.coeffs, axes=1)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def bracket(xi: LoopElement, eta: LoopElement) -> LoopElement:
    """Degreewise convolution of commutators; degree bound d1 + d2."""
    d = xi.d + eta.d
    out = np.zeros((2 * d + 1, 3, 3), dtype=complex)
    for j in xi.degrees:
        xj = xi[j]
        for k in eta.degrees:
            out[j + k + d] += xj @ eta[k] - eta[k] @ xj
    return LoopElement(d, out, xi.real and eta.real)


def r_matrix(xi: LoopElement) -> LoopElement:
    """nu^k xi_k -> sign(k)/2 nu^k xi_k."""
    s = 0.5 * np.sign(np.arange(-xi.d, xi.d + 1))
    return LoopElement(xi.d, s[:, None, None] * xi.coeffs, False)


def conjugate_loop(xi: LoopElement) -> LoopElement:
    """xi_bar(nu) = -xi(1/conj(nu))^dagger; degree k takes -xi_{-k}^dagger."""
    return LoopElement(xi.d, star(xi.coeffs[::-1]), xi.real)


def loop_inner_product(xi: LoopElement, eta: LoopElement) -> complex:
    """Circle average of tr(xi(nu) eta(nu)), i.e. sum_k tr(xi_k eta_{-k})."""
    d = min(xi.d, eta.d)
    return complex(sum(np.trace(xi[k] @ eta[-k]) for k in range(-d, d + 1)))


def hermitian_norm_sq(xi: LoopElement) -> float:
    """-<xi, conj xi> = sum_k tr(xi_k xi_k^dagger) >= 0."""
    return float(np.sum(np.abs(xi.coeffs) ** 2))


def loops_close(a: LoopElement, b: LoopElement, atol: float) -> bool:
    d = max(a.d, b.d)
    return all(np.abs(a[k] - b[k]).max() <= atol for k in range(-d, d + 1))
