"""Rectangular (u, v) grids with z = u + i v, and finite differences.

Arrays defined on a grid have leading axes ``(N_u, N_v)``; trailing axes
(matrix or vector components) are carried along untouched.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# first-derivative stencils: (offsets, weights) before division by h
_CENTRAL = {2: ([-1, 1], [-0.5, 0.5]), 4: ([-2, -1, 1, 2], [1 / 12, -2 / 3, 2 / 3, -1 / 12])}
_FORWARD = {2: ([0, 1, 2], [-1.5, 2.0, -0.5]), 4: ([0, 1, 2, 3, 4], [-25 / 12, 4, -3, 4 / 3, -1 / 4])}


@dataclass(frozen=True)
class PlanarGrid:
    u0: float = 0.0
    v0: float = 0.0
    hu: float = 1.0
    hv: float = 1.0
    n_u: int = 2
    n_v: int = 2

    def __post_init__(self):
        if not (self.hu > 0 and self.hv > 0):
            raise ValueError("grid spacings must be positive")
        if self.n_u < 1 or self.n_v < 1:
            raise ValueError("grid counts must be positive")

    @classmethod
    def over(cls, u_range, v_range, n_u: int, n_v: int | None = None) -> "PlanarGrid":
        """Grid with ``n_u x n_v`` nodes spanning the closed rectangle."""
        n_v = n_u if n_v is None else n_v
        hu = (u_range[1] - u_range[0]) / max(n_u - 1, 1)
        hv = (v_range[1] - v_range[0]) / max(n_v - 1, 1)
        return cls(float(u_range[0]), float(v_range[0]), hu or 1.0, hv or 1.0, n_u, n_v)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_u, self.n_v)

    @property
    def u(self) -> np.ndarray:
        return self.u0 + self.hu * np.arange(self.n_u)

    @property
    def v(self) -> np.ndarray:
        return self.v0 + self.hv * np.arange(self.n_v)

    def z(self) -> np.ndarray:
        uu, vv = np.meshgrid(self.u, self.v, indexing="ij")
        return uu + 1j * vv

    def refined(self) -> "PlanarGrid":
        return PlanarGrid(self.u0, self.v0, self.hu / 2, self.hv / 2, 2 * self.n_u - 1, 2 * self.n_v - 1)

    def to_dict(self) -> dict:
        return {"u0": self.u0, "v0": self.v0, "hu": self.hu, "hv": self.hv, "nu": self.n_u, "nv": self.n_v}

    @classmethod
    def from_dict(cls, doc) -> "PlanarGrid":
        return cls(doc["u0"], doc["v0"], doc["hu"], doc["hv"], int(doc["nu"]), int(doc["nv"]))


def min_points(order: int) -> int:
    """Smallest axis length the order-``order`` stencils can handle."""
    half = max(_CENTRAL[order][0])
    return max(2 * half + 1, half + max(_FORWARD[order][0]))


def diff(f: np.ndarray, h: float, axis: int, order: int = 2) -> np.ndarray:
    """First derivative along ``axis``: centred inside, one-sided of the
    same order at the boundary."""
    f = np.moveaxis(np.asarray(f), axis, 0)
    n = f.shape[0]
    offs, w = _CENTRAL[order]
    half = max(offs)
    if n < min_points(order):
        raise ValueError(f"need at least {min_points(order)} points for order {order}")
    out = np.zeros_like(f, dtype=np.result_type(f, float))
    for o, c in zip(offs, w):
        out[half:n - half] += c * f[half + o:n - half + o]
    fo, fw = _FORWARD[order]
    for i in range(half):
        out[i] = sum(c * f[i + o] for o, c in zip(fo, fw))
        out[n - 1 - i] = -sum(c * f[n - 1 - i - o] for o, c in zip(fo, fw))
    return np.moveaxis(out / h, 0, axis)


def d_z(f: np.ndarray, grid: PlanarGrid, order: int = 2) -> np.ndarray:
    """d/dz = (d_u - i d_v) / 2."""
    return 0.5 * (diff(f, grid.hu, 0, order) - 1j * diff(f, grid.hv, 1, order))


def d_zbar(f: np.ndarray, grid: PlanarGrid, order: int = 2) -> np.ndarray:
    return 0.5 * (diff(f, grid.hu, 0, order) + 1j * diff(f, grid.hv, 1, order))


def laplacian_interior(f: np.ndarray, grid: PlanarGrid) -> np.ndarray:
    """Five-point Laplacian on interior nodes, shape (N_u - 2, N_v - 2)."""
    fuu = (f[2:, 1:-1] - 2 * f[1:-1, 1:-1] + f[:-2, 1:-1]) / grid.hu**2
    fvv = (f[1:-1, 2:] - 2 * f[1:-1, 1:-1] + f[1:-1, :-2]) / grid.hv**2
    return fuu + fvv
