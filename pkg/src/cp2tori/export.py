"""File formats: CSV grids, OBJ meshes of an affine chart, JSON documents.

JSON floats are written with ``repr`` precision, so structured documents
(frames, Killing fields, spectral data) round-trip bitwise.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import IOFailure, ValidationError
from .grid import PlanarGrid


def _open(path, mode="w"):
    try:
        p = Path(path)
        if "w" in mode:
            p.parent.mkdir(parents=True, exist_ok=True)
        return open(p, mode, newline="" if "w" in mode else None)
    except OSError as exc:
        raise IOFailure(f"cannot open {path}: {exc}") from exc


def _clean(obj):
    """Make a JSON-ready copy: numpy scalars to Python, non-finite floats to
    strings (strict JSON has no NaN / inf)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    return obj


def write_json(path, doc) -> None:
    with _open(path) as fh:
        json.dump(_clean(doc), fh, indent=1)


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IOFailure(f"{path} is not valid JSON: {exc}") from exc


def write_omega_csv(path, grid: PlanarGrid, omega: np.ndarray) -> None:
    """One row per node, header ``u,v,omega``; u varies slowest."""
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["u", "v", "omega"])
        for i, u in enumerate(grid.u):
            for j, v in enumerate(grid.v):
                w.writerow([repr(float(u)), repr(float(v)), repr(float(omega[i, j]))])


def write_grid_csv(path, grid: PlanarGrid, columns: dict, notes: dict | None = None) -> None:
    """Several real grids side by side; '#' lines document each column."""
    names = list(columns)
    with _open(path) as fh:
        fh.write(f"# grid {json.dumps(grid.to_dict())}\n")
        for n in names:
            fh.write(f"# {n}: {(notes or {}).get(n, n)}\n")
        w = csv.writer(fh)
        w.writerow(["u", "v"] + names)
        for i, u in enumerate(grid.u):
            for j, v in enumerate(grid.v):
                w.writerow([repr(float(u)), repr(float(v))] + [repr(float(columns[n][i, j])) for n in names])


def read_grid_csv(path) -> tuple[PlanarGrid | None, dict]:
    """Inverse of write_grid_csv / write_omega_csv."""
    grid = None
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc
    body = []
    for ln in lines:
        if ln.startswith("# grid "):
            grid = PlanarGrid.from_dict(json.loads(ln[7:]))
        elif not ln.startswith("#"):
            body.append(ln)
    rows = list(csv.reader(body))
    if not rows:
        raise IOFailure(f"{path} is empty")
    head, data = rows[0], np.array([[float(x) for x in r] for r in rows[1:]])
    if grid is None:
        u, v = np.unique(data[:, 0]), np.unique(data[:, 1])
        grid = PlanarGrid(float(u[0]), float(v[0]), float(u[1] - u[0]) if len(u) > 1 else 1.0,
                          float(v[1] - v[0]) if len(v) > 1 else 1.0, len(u), len(v))
    cols = {h: data[:, k].reshape(grid.shape) for k, h in enumerate(head) if h not in ("u", "v")}
    return grid, cols


CHART_NOTES = "affine chart w_k = y_k / y_chart for the two other indices; coordinates (Re w1, Im w1, Re w2, Im w2)"


def chart_coordinates(y: np.ndarray, chart: int = 0) -> np.ndarray:
    """Real 4-vectors of the affine chart y_chart != 0."""
    if chart not in (0, 1, 2):
        raise ValidationError("chart must be 0, 1 or 2")
    den = y[..., chart]
    if np.abs(den).min() < 1e-12:
        raise ValidationError(f"surface leaves the affine chart {chart}")
    others = [k for k in range(3) if k != chart]
    w = y[..., others] / den[..., None]
    return np.concatenate([np.stack([w[..., 0].real, w[..., 0].imag], -1),
                           np.stack([w[..., 1].real, w[..., 1].imag], -1)], -1)


def write_obj(path, y: np.ndarray, chart: int = 0, projection=(0, 1, 2)) -> tuple[int, int]:
    """Triangulated grid mesh; returns (vertex count, triangle count)."""
    pts = chart_coordinates(y, chart)[..., list(projection)]
    n_u, n_v = pts.shape[:2]
    idx = np.arange(n_u * n_v).reshape(n_u, n_v) + 1
    with _open(path) as fh:
        fh.write(f"# {CHART_NOTES}; chart {chart}; projection {list(projection)}\n")
        for p in pts.reshape(-1, 3).tolist():
            fh.write(f"v {p[0]!r} {p[1]!r} {p[2]!r}\n")
        n_tri = 0
        for i in range(n_u - 1):
            for j in range(n_v - 1):
                a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
                fh.write(f"f {a} {b} {c}\nf {a} {c} {d}\n")
                n_tri += 2
    return n_u * n_v, n_tri
