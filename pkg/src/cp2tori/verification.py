"""Re-run gates on stored artifacts (a pipeline output directory or files)."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .connection import FrameField, unitarity_defect
from .errors import IOFailure, ValidationError
from .export import read_grid_csv, read_json
from .flow import KillingField, conserved_drift
from .pipeline import ARTIFACTS, DEFAULT_GATES
from .surface import SurfaceInvariants, surface_gates, tzitzeica_residual

KNOWN = {v[0]: k for k, v in ARTIFACTS.items()}


def _nan_sites(name: str, arr: np.ndarray, limit: int = 5) -> list:
    bad = np.argwhere(~np.isfinite(arr))
    return [{"file": name, "index": [int(i) for i in ij]} for ij in bad[:limit]]


class _Summary:
    def __init__(self):
        self.checks, self.nan = [], []

    def check(self, file, gate, value, threshold, op="<"):
        value = float(value)
        ok = bool(value < threshold) if op == "<" else bool(value > threshold)
        self.checks.append({"file": file, "gate": gate, "value": value, "threshold": float(threshold),
                            "op": op, "passed": ok})

    def scan(self, file, arr, grid=None):
        sites = _nan_sites(file, np.asarray(arr))
        if grid is not None:
            for s in sites:
                i, j = s["index"][:2]
                s["u"], s["v"] = float(grid.u[i]), float(grid.v[j])
        self.nan += sites

    def to_dict(self) -> dict:
        return {"passed": not self.nan and all(c["passed"] for c in self.checks),
                "checks": self.checks, "nan": self.nan}


def _gates_from(report: dict | None) -> dict:
    g = dict(DEFAULT_GATES)
    if report:
        g.update(report.get("config", {}).get("gates", {}))
    return g


def _invariants(grid, cols) -> SurfaceInvariants:
    need = ("omega", "a", "b", "kaehler_angle", "phi_re", "phi_im", "psi_re", "psi_im", "rho_re", "rho_im")
    missing = [c for c in need if c not in cols]
    if missing:
        raise ValidationError(f"invariants file lacks columns {missing}")
    c = lambda n: cols[n + "_re"] + 1j * cols[n + "_im"]  # noqa: E731
    return SurfaceInvariants(grid, cols["omega"], cols["a"], cols["b"], cols["kaehler_angle"], c("phi"), c("psi"),
                             c("rho"), 0.0)


def _verify_file(path: Path, kind: str, gates: dict, out: _Summary) -> None:
    name = path.name
    if kind == "report":
        doc = read_json(path)
        for g in doc.get("gates", []):
            v = g["value"]
            v = float(v) if not isinstance(v, str) else float("nan")
            if not np.isfinite(v):
                out.nan.append({"file": name, "gate": g["name"]})
            out.check(name, f"{g['stage']}/{g['name']}", v, g["threshold"], g.get("op", "<"))
        if doc.get("status") != "complete":
            out.check(name, "status_complete", 0.0, 0.0, ">")
    elif kind == "frame":
        fr = FrameField.from_dict(read_json(path))
        out.scan(name, np.abs(fr.F).max(axis=(-2, -1)), fr.grid)
        out.check(name, "unitarity", unitarity_defect(fr.F).max(), gates["unitarity"])
        out.check(name, "det", np.abs(np.linalg.det(fr.F) - 1).max(), 1e-9)
    elif kind == "killing_field":
        fld = KillingField.from_dict(read_json(path))
        out.scan(name, np.abs(fld.values).max(axis=(-3, -2, -1)), fld.grid)
        out.check(name, "drift", conserved_drift(fld, gates["drift"]).worst, gates["drift"])
    elif kind == "invariants":
        grid, cols = read_grid_csv(path)
        for k, a in cols.items():
            out.scan(f"{name}:{k}", a, grid)
        inv = _invariants(grid, cols)
        tol = {"angle": gates["angle"], "phi": gates["minimality"], "psi_zbar": gates["hopf"],
               "a_minus_1": gates["a_minus_1"], "sum_ab": gates["sum_ab"], "psi_const": gates["psi_const"]}
        for g in surface_gates(inv, tol):
            out.check(name, g.name, g.value, g.threshold, g.op)
        out.check(name, "tzitzeica", tzitzeica_residual(inv.omega, grid), gates["tzitzeica"])
    elif kind == "omega_grid":
        grid, cols = read_grid_csv(path)
        out.scan(name, cols["omega"], grid)
        out.check(name, "tzitzeica", tzitzeica_residual(cols["omega"], grid), gates["tzitzeica"])
    elif kind == "surface_mesh":
        try:
            rows = [ln.split()[1:] for ln in path.read_text().splitlines() if ln.startswith("v ")]
        except OSError as exc:
            raise IOFailure(f"cannot read {path}: {exc}") from exc
        out.scan(name, np.array(rows, dtype=float))
    elif kind == "spectral":
        doc = read_json(path)
        vals = [complex(e["re"], e["im"]) for fam in ("p", "q") for e in doc["coefficients"][fam]]
        out.scan(name, np.abs(np.array(vals)))


def verify_artifacts(paths) -> dict:
    """Summary dict ``{passed, checks, nan}``; raises IOFailure for missing files.

    A directory is expanded to the known artifact files it contains and must
    hold a ``report.json``; its configured gate thresholds are used.
    """
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            rep = p / ARTIFACTS["report"][0]
            if not rep.exists():
                raise IOFailure(f"{p} has no {rep.name}")
            files += sorted(q for q in p.iterdir() if q.name in KNOWN)
        elif p.exists():
            files.append(p)
        else:
            raise IOFailure(f"missing artifact {p}")
    report = next((read_json(f) for f in files if KNOWN.get(f.name) == "report"), None)
    gates = _gates_from(report)
    out = _Summary()
    for f in files:
        kind = KNOWN.get(f.name) or {".obj": "surface_mesh", ".csv": "invariants"}.get(f.suffix)
        if kind is None:
            raise ValidationError(f"cannot tell the artifact type of {f}")
        if kind == "invariants":
            with open(f) as fh:
                head = [ln for ln in fh.read(4096).splitlines() if not ln.startswith("#")][:1]
            if head and head[0].split(",") == ["u", "v", "omega"]:
                kind = "omega_grid"
        _verify_file(f, kind, gates, out)
    return out.to_dict()
