"""Commuting Hamiltonian flows on Lambda_d and polynomial Killing fields.

The flow is d xi/dz = Z(xi) = [xi, xi_{d-1}/2 + nu xi_d] together with its
conjugate; in real coordinates d_u = Z + Zbar and d_v = i (Z - Zbar).
The grid is filled along the first column (v direction) and then row by
row in u; rows are independent once the column is known.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BadDegree, DegenerateDraw, DegreeOverflow, TangencyFailure, ToleranceFailure
from .grid import PlanarGrid
from .loop_algebra import B, LoopElement, graded_basis, make_loop_element, star, validate_loop
from .spectral import coefficient_arrays

OVERFLOW_TOL = 1e-10


def clifford_seed() -> LoopElement:
    """xi = nu B - nu^-1 B^dagger: the d = 1 seed of the Clifford torus."""
    return make_loop_element({1: B, -1: star(B)}, 1, True)


def random_admissible_seed(d: int, rng_seed: int, scale: float = 1.0, max_attempts: int = 100) -> LoopElement:
    """Random real element of Lambda_d with Tr xi_d^3 = -3i.

    Free parameters of each M_k cap N_k get independent standard complex
    normal coefficients (times ``scale``); xi_0 is skew-hermitian and
    xi_{-k} = -xi_k^dagger.  The top coefficient is then multiplied by the
    principal cube root that fixes its cubic trace.
    """
    if d < 1 or d % 6 != 1:
        raise BadDegree(f"d = {d} is not 1 mod 6")
    rng = np.random.default_rng(rng_seed)
    for _ in range(max_attempts):
        c = np.zeros((2 * d + 1, 3, 3), dtype=complex)
        (h,) = graded_basis(0)
        c[d] = 1j * scale * rng.standard_normal() * h
        for k in range(1, d + 1):
            for basis in graded_basis(k):
                w = complex(rng.standard_normal(), rng.standard_normal()) / np.sqrt(2)
                c[d + k] += scale * w * basis
            c[d - k] = star(c[d + k])
        b0, b1 = c[2 * d, 0, 2], c[2 * d, 2, 1]
        if abs(b0) < 1e-8 or abs(b1) < 1e-8:
            continue
        t = (-1j / (b0**2 * b1)) ** (1 / 3)
        c[2 * d] *= t
        c[0] = star(c[2 * d])
        return make_loop_element(c, d, True)
    raise DegenerateDraw(f"b0 = 0 in {max_attempts} draws")


def _z_coeffs(c: np.ndarray, d: int):
    """Degree -d..d coefficients of Z and Zbar, from stacked coefficients."""
    m0, m1 = 0.5 * c[2 * d - 1], c[2 * d]
    n0, n1 = 0.5 * c[1], c[0]
    z = c @ m0 - m0 @ c
    z[1:] += c[:-1] @ m1 - m1 @ c[:-1]
    zb = c @ n0 - n0 @ c
    zb[:-1] += c[1:] @ n1 - n1 @ c[1:]
    return z, zb, (c[-1] @ m1 - m1 @ c[-1]), (c[0] @ n1 - n1 @ c[0])


def hamiltonian_velocity(xi: LoopElement) -> tuple[LoopElement, LoopElement]:
    z, zb, top, bottom = _z_coeffs(xi.coeffs, xi.d)
    leak = max(np.abs(top).max(), np.abs(bottom).max())
    if leak > OVERFLOW_TOL * xi.scale() ** 2:
        raise DegreeOverflow(f"velocity leaves Lambda_{xi.d} by {leak:.3e}")
    return LoopElement(xi.d, z), LoopElement(xi.d, zb)


def _rhs(direction: str, d: int):
    shape = (2 * d + 1, 3, 3)

    def f(_t, y):
        c = y.reshape(shape)
        z, zb, top, bottom = _z_coeffs(c, d)
        if max(np.abs(top).max(), np.abs(bottom).max()) > OVERFLOW_TOL * max(1.0, np.abs(c).max()) ** 2:
            raise DegreeOverflow("tangency lost during integration")
        out = z + zb if direction == "u" else 1j * (z - zb)
        return out.ravel()

    return f


def _line(y0: np.ndarray, t: np.ndarray, direction: str, d: int, tol: float) -> np.ndarray:
    """Integrate from t[0] and return states at every t (adaptive 5(4))."""
    out = np.empty((t.size, y0.size), dtype=complex)
    out[0] = y0
    if t.size == 1:
        return out
    try:
        sol = solve_ivp(_rhs(direction, d), (t[0], t[-1]), y0, method="RK45", t_eval=t,
                        rtol=tol, atol=tol * 1e-2)
    except DegreeOverflow as exc:
        raise TangencyFailure(str(exc)) from exc
    if sol.status != 0:
        raise ToleranceFailure(sol.message)
    return sol.y.T


def _line_rk4(y0, t, direction, d, substeps):
    f = _rhs(direction, d)
    out = np.empty((t.size, y0.size), dtype=complex)
    out[0] = y = y0
    for i in range(1, t.size):
        h = (t[i] - t[i - 1]) / substeps
        for _ in range(substeps):
            k1 = f(0, y)
            k2 = f(0, y + 0.5 * h * k1)
            k3 = f(0, y + 0.5 * h * k2)
            k4 = f(0, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i] = y
    return out


@dataclass
class KillingField:
    grid: PlanarGrid
    values: np.ndarray  # (N_u, N_v, 2d+1, 3, 3)
    seed: LoopElement
    report: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.seed.d

    def at(self, i: int, j: int) -> LoopElement:
        return LoopElement(self.d, self.values[i, j], True)

    def validate(self, tol: float = 1e-8) -> None:
        for i in range(self.grid.n_u):
            for j in range(self.grid.n_v):
                validate_loop(self.at(i, j), tol)

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "seed": self.seed.to_dict(),
            "points": [[self.at(i, j).to_dict() for j in range(self.grid.n_v)] for i in range(self.grid.n_u)],
        }

    @classmethod
    def from_dict(cls, doc) -> "KillingField":
        grid = PlanarGrid.from_dict(doc["grid"])
        seed = LoopElement.from_dict(doc["seed"])
        vals = np.array([[LoopElement.from_dict(p, validate=False).coeffs for p in row] for row in doc["points"]])
        return cls(grid, vals, seed)


def _fill(seed: LoopElement, grid: PlanarGrid, line, threads: int) -> np.ndarray:
    d = seed.d
    col = line(seed.coeffs.ravel(), grid.v, "v")
    rows = [None] * grid.n_v

    def work(j):
        rows[j] = line(col[j], grid.u, "u")

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            list(ex.map(work, range(grid.n_v)))
    else:
        for j in range(grid.n_v):
            work(j)
    vals = np.stack(rows, axis=1)  # (N_u, N_v, n)
    return vals.reshape(grid.shape + (2 * d + 1, 3, 3))


def integrate_flow(seed: LoopElement, grid: PlanarGrid, tol: float = 1e-9, threads: int = 1,
                   n_cross: int = 5, rng_seed: int = 0) -> KillingField:
    """Killing field on ``grid`` with ``seed`` at the first node.

    After the fill, ``n_cross`` random interior points are recomputed by
    integrating row-first (u then v); the largest coefficient discrepancy
    is stored in ``report['commutativity']``.
    """
    if not 1e-12 <= tol <= 1e-4:
        raise ValueError("tol must lie in [1e-12, 1e-4]")
    validate_loop(seed)
    d = seed.d
    line = lambda y0, t, direction: _line(y0, t, direction, d, tol)  # noqa: E731
    vals = _fill(seed, grid, line, threads)
    disc = 0.0
    if n_cross and grid.n_u > 2 and grid.n_v > 2:
        rng = np.random.default_rng(rng_seed)
        row0 = line(seed.coeffs.ravel(), grid.u, "u")
        for _ in range(n_cross):
            i = int(rng.integers(1, grid.n_u - 1))
            j = int(rng.integers(1, grid.n_v - 1))
            y = line(row0[i], grid.v[: j + 1], "v")[-1]
            disc = max(disc, float(np.abs(y.reshape(2 * d + 1, 3, 3) - vals[i, j]).max()))
    return KillingField(grid, vals, seed, {"commutativity": disc, "tol": tol})


def integrate_flow_fixed(seed: LoopElement, grid: PlanarGrid, substeps: int = 1) -> KillingField:
    """Same fill with classical fixed-step RK4 (``substeps`` per cell)."""
    d = seed.d
    line = lambda y0, t, direction: _line_rk4(y0, t, direction, d, substeps)  # noqa: E731
    return KillingField(grid, _fill(seed, grid, line, 1), seed, {"rk4_substeps": substeps})


@dataclass
class DriftReport:
    top_trace_max: float  # max |Tr xi_d^3 + 3i|
    p_drift: np.ndarray  # per k, max relative drift over the grid
    q_drift: np.ndarray
    worst: float
    flagged: list = field(default_factory=list)  # grid points above threshold

    def table(self) -> str:
        lines = [f"max |Tr xi_d^3 + 3i| = {self.top_trace_max:.3e}", "family  index  rel_drift"]
        lines += [f"p       {i:5d}  {v:.3e}" for i, v in enumerate(self.p_drift)]
        lines += [f"q       {i:5d}  {v:.3e}" for i, v in enumerate(self.q_drift)]
        lines.append(f"worst = {self.worst:.3e}; flagged points: {self.flagged}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"top_trace_max": self.top_trace_max, "p_drift": self.p_drift.tolist(),
                "q_drift": self.q_drift.tolist(), "worst": self.worst,
                "flagged": [list(p) for p in self.flagged]}


def conserved_drift(fld: KillingField, threshold: float = 1e-4, floor: float = 1e-3) -> DriftReport:
    """Drift of conserved quantities relative to the seed.

    A coefficient's drift is |c(z) - c(seed)| / max(|c(seed)|, floor * M)
    where M is the largest seed coefficient of the same family, so tiny
    coefficients do not produce meaningless ratios.
    """
    d = fld.d
    p, q, _ = coefficient_arrays(fld.values, d)
    p0, q0, _ = coefficient_arrays(fld.seed.coeffs, d)

    def rel(a, a0):
        den = np.maximum(np.abs(a0), floor * np.abs(a0).max())
        return np.abs(a - a0) / den

    rp, rq = rel(p, p0), rel(q, q0)
    top = fld.values[..., -1, :, :]
    tr3 = np.trace(top @ top @ top, axis1=-2, axis2=-1)
    tr_dev = np.abs(tr3 + 3j)
    per_point = np.maximum(np.maximum(rp.max(axis=-1), rq.max(axis=-1)), tr_dev / 3)
    flagged = [tuple(map(int, ij)) for ij in np.argwhere(per_point > threshold)]
    return DriftReport(float(tr_dev.max()), rp.max(axis=(0, 1)), rq.max(axis=(0, 1)),
                       float(per_point.max()), flagged)
