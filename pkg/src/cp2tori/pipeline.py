"""Batch pipeline: seed -> flow -> connection -> omega -> frame -> surface -> gates.

A run is described by a :class:`PipelineConfig` (one JSON document, unknown
keys rejected) and produces a :class:`VerificationReport` holding every gate
value, the stage timings and provenance.  Gate values come from the module
operations; nothing is recomputed here.
"""
from __future__ import annotations

import hashlib
import json
import platform
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .connection import (connection_from_killing, connection_from_omega, flatness_residual, integrate_frame,
                         standard_from_killing)
from .errors import BadDegree, Cp2ToriError, ValidationError
from .export import read_json, write_grid_csv, write_json, write_obj, write_omega_csv
from .flow import clifford_seed, conserved_drift, integrate_flow, random_admissible_seed
from .grid import PlanarGrid
from .periodicity import frame_sampler, lattice_search
from .spectral import genus_data, nonsingularity_probe, spectral_coeffs
from .surface import GateResult, frame_jets, invariants_from_jets, surface_from_frame, surface_gates, tzitzeica_residual
from .theta import ThetaSolutionData, omega_from_theta

STAGES = ("validation", "seed", "spectral", "flow", "connection", "omega", "frame", "surface", "periodicity", "export")
SOURCES = ("killing", "omega_zero", "theta")
ARTIFACTS = {  # name -> (default file, allowed formats)
    "omega_grid": ("omega.csv", ("csv", "structured")),
    "invariants": ("invariants.csv", ("csv", "structured")),
    "frame": ("frame.json", ("structured",)),
    "surface_mesh": ("surface.obj", ("obj",)),
    "spectral": ("spectral.json", ("structured",)),
    "killing_field": ("killing.json", ("structured",)),
    "report": ("report.json", ("structured",)),
}
DEFAULT_GATES = {
    "flatness": 1e-3,  # 4th-order flatness residual, checked before each frame integration
    "unitarity": 1e-9,  # sup |F^H F - I| after projection
    "angle": 1e-4,  # sup |Kaehler angle - pi/2|
    "minimality": 1e-5,  # sup |phi| e^{-omega/2}
    "hopf": 1e-4,  # sup |psi_zbar| / sup |psi|
    "tzitzeica": 1e-5,
    "a_minus_1": 1e-6,
    "sum_ab": 1e-8,
    "psi_const": 1e-6,
    "drift": 1e-7,  # conserved-quantity drift of the flow
    "nu_family": 1e-6,  # omega and angle spread over the nu list
    "monodromy": 1e-5,
}
INVARIANT_NOTES = {
    "omega": "log of the conformal factor, |xi|^2 + |eta|^2 = 2 e^omega",
    "a": "|xi|^2 / e^omega", "b": "|eta|^2 / e^omega",
    "kaehler_angle": "2 arccos sqrt(a / 2)",
    "phi_re": "Re phi (minimality: phi = 0)", "phi_im": "Im phi",
    "psi_re": "Re psi (cubic differential coefficient)", "psi_im": "Im psi",
    "rho_re": "Re <y_z, y>", "rho_im": "Im <y_z, y>",
}


@dataclass
class GridSpec:
    u_range: tuple = (0.0, 1.0)
    v_range: tuple = (0.0, 1.0)
    n_u: int = 33
    n_v: int | None = None

    def build(self) -> PlanarGrid:
        return PlanarGrid.over(tuple(self.u_range), tuple(self.v_range), self.n_u, self.n_v or self.n_u)


def _strict(cls, doc: dict, where: str):
    names = {f.name for f in fields(cls)}
    extra = sorted(set(doc) - names)
    if extra:
        raise ValidationError(f"unknown {where} keys: {', '.join(extra)}")


@dataclass
class PipelineConfig:
    d: int = 1
    rng_seed: int = 0
    clifford_seed: bool = False
    seed_scale: float = 1.0
    source: str = "killing"
    grid: GridSpec = field(default_factory=GridSpec)
    tol: float = 1e-9
    nu: list = field(default_factory=lambda: [1.0])
    gates: dict = field(default_factory=dict)
    exports: list = field(default_factory=list)
    theta_data: str | None = None
    lattice_box: object = None  # None (skip), "auto", or [u_min, u_max, v_min, v_max]
    lattice_coarse_n: int = 31
    threads: int = 1
    chart: int = 0
    projection: tuple = (0, 1, 2)

    def __post_init__(self):
        if isinstance(self.grid, dict):
            _strict(GridSpec, self.grid, "grid")
            self.grid = GridSpec(**self.grid)
        self.nu = [complex(*v) if isinstance(v, (list, tuple)) else complex(v) for v in self.nu]

    @property
    def gate_values(self) -> dict:
        g = dict(DEFAULT_GATES)
        g.update(self.gates)
        return g

    def validate(self) -> None:
        if self.d % 6 != 1:
            raise BadDegree(f"d = {self.d} is not 1 mod 6")
        if self.source not in SOURCES:
            raise ValidationError(f"source must be one of {SOURCES}")
        if self.source == "theta" and not self.theta_data:
            raise ValidationError("source 'theta' needs theta_data")
        bad = sorted(set(self.gates) - set(DEFAULT_GATES))
        if bad:
            raise ValidationError(f"unknown gates: {', '.join(bad)}")
        tols = {"tol": self.tol, "seed_scale": self.seed_scale, **self.gate_values}
        for k, v in tols.items():
            if not (isinstance(v, (int, float)) and v > 0 and np.isfinite(v)):
                raise ValidationError(f"{k} must be a positive number, got {v!r}")
        for a in self.exports:
            if a not in ARTIFACTS:
                raise ValidationError(f"unknown export {a!r}")
            if a in ("spectral", "killing_field") and self.source != "killing":
                raise ValidationError(f"export {a!r} needs source 'killing'")
        if not self.nu:
            raise ValidationError("nu list is empty")
        for v in self.nu:
            if abs(abs(v) - 1) > 1e-12:
                raise ValidationError(f"nu = {v} is not on the unit circle")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")
        if self.grid.n_u < 5 or (self.grid.n_v or self.grid.n_u) < 5:
            raise ValidationError("grid needs at least 5 nodes per axis")
        if self.lattice_box not in (None, "auto") and len(self.lattice_box) != 4:
            raise ValidationError("lattice_box must be null, 'auto' or [u_min, u_max, v_min, v_max]")
        if self.chart not in (0, 1, 2) or sorted(set(self.projection)) != sorted(self.projection) \
                or not set(self.projection) <= {0, 1, 2, 3} or len(self.projection) != 3:
            raise ValidationError("chart must be 0..2 and projection three distinct indices in 0..3")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["nu"] = [[v.real, v.imag] for v in self.nu]
        doc["projection"] = list(self.projection)
        doc["grid"]["u_range"] = list(self.grid.u_range)
        doc["grid"]["v_range"] = list(self.grid.v_range)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        if not isinstance(doc, dict):
            raise ValidationError("config must be a JSON object")
        _strict(cls, doc, "config")
        try:
            return cls(**doc)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"bad config: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        return cls.from_dict(read_json(path))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class VerificationReport:
    config: PipelineConfig
    gates: list = field(default_factory=list)  # (stage, GateResult)
    values: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    status: str = "running"
    failed_stage: str | None = None
    error: str | None = None
    artifacts: dict = field(default_factory=dict, repr=False)  # in-memory objects, not serialised

    @property
    def passed(self) -> bool:
        return self.status == "complete" and all(g.passed for _, g in self.gates)

    def gate(self, name: str) -> GateResult:
        for _, g in self.gates:
            if g.name == name:
                return g
        raise KeyError(name)

    def summary(self) -> str:
        lines = [f"{s:12s} {g.line()}" for s, g in self.gates]
        lines.append(f"status: {self.status}" + (f" at {self.failed_stage}: {self.error}" if self.error else ""))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"status": self.status, "passed": self.passed, "failed_stage": self.failed_stage, "error": self.error,
                "gates": [{"stage": s, **asdict(g)} for s, g in self.gates],
                "values": self.values, "timings": self.timings, "provenance": self.provenance,
                "files": self.files, "config": self.config.to_dict()}


class _Runner:
    def __init__(self, report: VerificationReport):
        self.report = report

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        except Cp2ToriError as exc:
            self.report.failed_stage = name
            tagged = type(exc)(f"[{name}] {exc}")
            raise tagged from exc
        except BaseException:
            self.report.failed_stage = name
            raise
        finally:
            self.report.timings[name] = time.perf_counter() - t0

    def gate(self, stage: str, name: str, value: float, threshold: float, op: str = "<"):
        ok = value < threshold if op == "<" else value > threshold
        self.report.gates.append((stage, GateResult(name, float(value), float(threshold), bool(ok), op)))


def export_artifact(report: VerificationReport, artifact: str, path, fmt: str | None = None) -> Path:
    """Write one computed artifact; the format defaults to the first allowed one."""
    if artifact not in ARTIFACTS:
        raise ValidationError(f"unknown artifact {artifact!r}")
    allowed = ARTIFACTS[artifact][1]
    fmt = fmt or allowed[0]
    if fmt not in allowed:
        raise ValidationError(f"{artifact} cannot be written as {fmt}; allowed: {allowed}")
    art = report.artifacts
    need = {"omega_grid": "omega", "invariants": "invariants", "frame": "frame", "surface_mesh": "surface",
            "spectral": "spectral", "killing_field": "killing"}.get(artifact)
    if need is not None and need not in art:
        raise ValidationError(f"artifact {artifact!r} was not computed in this run")
    path = Path(path)
    cfg = report.config
    if artifact == "omega_grid":
        grid, om = art["omega_grid"], art["omega"]
        if fmt == "csv":
            write_omega_csv(path, grid, om)
        else:
            write_json(path, {"grid": grid.to_dict(), "omega": om})
    elif artifact == "invariants":
        inv = art["invariants"]
        if fmt == "csv":
            write_grid_csv(path, inv.grid, inv.grids(), INVARIANT_NOTES)
        else:
            write_json(path, {"grid": inv.grid.to_dict(), **inv.grids()})
    elif artifact == "frame":
        write_json(path, art["frame"].to_dict())
    elif artifact == "surface_mesh":
        write_obj(path, art["surface"], cfg.chart, cfg.projection)
    elif artifact == "spectral":
        write_json(path, art["spectral"])
    elif artifact == "killing_field":
        write_json(path, art["killing"].to_dict())
    else:
        write_json(path, report.to_dict())
    report.files[artifact] = str(path)
    return path


def _provenance(cfg: PipelineConfig) -> dict:
    return {"config_hash": cfg.digest(), "package": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__, "python": platform.python_version()}


def run_pipeline(config: PipelineConfig, out=None, stop_after: str | None = None) -> VerificationReport:
    """Run the stages in order, up to and including ``stop_after``.

    With ``out`` every selected export (plus the report) is written there.
    A module error propagates with the stage name prefixed to its message;
    the partial report and a FAILED marker are left in ``out``.
    """
    if stop_after is not None and stop_after not in STAGES:
        raise ValidationError(f"unknown stage {stop_after!r}")
    rep = VerificationReport(config)
    run = _Runner(rep)
    out = Path(out) if out is not None else None
    try:
        _stages(config, rep, run, stop_after)
        rep.status = "complete"
    except BaseException as exc:
        rep.status = "failed"
        rep.error = str(exc) or type(exc).__name__
        if out is not None:
            _write_outputs(rep, out, failed=True)
        raise
    if out is not None:
        with run.stage("export"):
            _write_outputs(rep, out, partial=stop_after is not None)
    return rep


def _write_outputs(rep: VerificationReport, out: Path, failed: bool = False, partial: bool = False) -> None:
    """Selected exports plus the report.  Failed or partial runs (stopped
    before the last stage) skip artifacts that were not computed and list
    them under ``values["skipped_exports"]``."""
    skipped = []
    for name in rep.config.exports:
        try:
            export_artifact(rep, name, out / ARTIFACTS[name][0])
        except ValidationError:
            if not (failed or partial):
                raise
            skipped.append(name)
    if skipped:
        rep.values["skipped_exports"] = skipped
    export_artifact(rep, "report", out / ARTIFACTS["report"][0])
    marker = out / "FAILED"
    if failed:
        marker.write_text(f"stage: {rep.failed_stage}\nerror: {rep.error}\n")
    elif marker.exists():
        marker.unlink()


def _stages(cfg: PipelineConfig, rep: VerificationReport, run: _Runner, stop_after: str | None) -> None:
    gates, vals, art = cfg.gate_values, rep.values, rep.artifacts
    done = lambda name: stop_after == name  # noqa: E731
    with run.stage("validation"):
        cfg.validate()
        grid = cfg.grid.build()
        rep.provenance = _provenance(cfg)
    vals["grid"] = grid.to_dict()
    if done("validation"):
        return
    killing = cfg.source == "killing"
    if killing:
        with run.stage("seed"):
            seed = clifford_seed() if cfg.clifford_seed else random_admissible_seed(cfg.d, cfg.rng_seed, cfg.seed_scale)
            art["seed"] = seed
        if done("seed"):
            return
        with run.stage("spectral"):
            coeffs = spectral_coeffs(seed)
            gd = genus_data(cfg.d)
            probe = nonsingularity_probe(coeffs)
            art["spectral"] = {"coefficients": coeffs.to_dict(), "genus": asdict(gd),
                               "probe": {"min_abs_disc": probe.min_abs_disc, "flags": probe.flags,
                                         "min_root_separation": probe.min_root_separation,
                                         "tau_pairing_residual": probe.tau_pairing_residual,
                                         "expected_branch_count": probe.expected_branch_count,
                                         "singular": probe.singular}}
            vals["genus"] = asdict(gd)
            vals["spectral_probe_singular"] = probe.singular
        if done("spectral"):
            return
        with run.stage("flow"):
            fld = integrate_flow(seed, grid, cfg.tol, cfg.threads)
            drift = conserved_drift(fld, threshold=gates["drift"])
            art["killing"] = fld
            vals["flow"] = {**fld.report, "drift": drift.to_dict()}
            run.gate("flow", "drift", drift.worst, gates["drift"])
        if done("flow"):
            return
        with run.stage("connection"):
            # Tr U1^3 = -3i holds to the conserved-quantity drift of the flow
            conn = connection_from_killing(fld, tol=3 * gates["drift"])
            vals["flatness_order2"] = flatness_residual(conn, cfg.nu, order=2)
            vals["flatness_order4"] = flatness_residual(conn, cfg.nu, order=4)
        if done("connection"):
            return
        with run.stage("omega"):
            std = standard_from_killing(conn)
            vals["omega_extraction"] = dict(std.extra)
            art["omega"], art["omega_grid"] = std.omega, grid
    else:
        if stop_after in ("seed", "spectral", "flow", "connection"):
            return
        with run.stage("omega"):
            if cfg.source == "omega_zero":
                omega = np.zeros(grid.shape)
            else:
                data = ThetaSolutionData.from_dict(read_json(cfg.theta_data))
                res = omega_from_theta(data, grid, threads=cfg.threads)
                omega = res.omega
                vals["theta"] = {"imaginary_leak": res.imaginary_leak, "flagged": len(res.flagged),
                                 "warnings": list(res.warnings)}
            std = connection_from_omega(omega, grid, order=4)
            art["omega"], art["omega_grid"] = omega, grid
            run.gate("omega", "tzitzeica_input", tzitzeica_residual(omega, grid), gates["tzitzeica"])
    art["connection"] = std
    if done("omega"):
        return
    with run.stage("frame"):
        frames = [integrate_frame(std, nu=nu, gate=gates["flatness"]) for nu in cfg.nu]
        art["frames"], art["frame"] = frames, frames[0]
        vals["frame"] = [{"nu": [fr.nu.real, fr.nu.imag], **fr.report} for fr in frames]
        run.gate("frame", "flatness", max(fr.report["flatness"] for fr in frames), gates["flatness"])
        run.gate("frame", "unitarity", max(fr.report["unitarity"] for fr in frames), gates["unitarity"])
    if done("frame"):
        return
    with run.stage("surface"):
        invs = [invariants_from_jets(frame_jets(fr, std, order=4), grid) for fr in frames]
        inv = invs[0]
        art["invariants"], art["surface"] = inv, surface_from_frame(frames[0])
        tol = {"angle": gates["angle"], "phi": gates["minimality"], "psi_zbar": gates["hopf"],
               "a_minus_1": gates["a_minus_1"], "sum_ab": gates["sum_ab"], "psi_const": gates["psi_const"]}
        for g in surface_gates(inv, tol):
            rep.gates.append(("surface", g))
        run.gate("surface", "tzitzeica", tzitzeica_residual(inv.omega, grid), gates["tzitzeica"])
        spread = max([0.0] + [float(max(np.abs(x.omega - inv.omega).max(),
                                        np.abs(x.kaehler_angle - inv.kaehler_angle).max())) for x in invs[1:]])
        run.gate("surface", "nu_family", spread, gates["nu_family"])
        vals["conformality"] = inv.conformality
        vals["psi_mean"] = [float(inv.psi.mean().real), float(inv.psi.mean().imag)]
    if done("surface"):
        return
    if cfg.lattice_box is not None:
        with run.stage("periodicity"):
            box = None if cfg.lattice_box == "auto" else (tuple(cfg.lattice_box[:2]), tuple(cfg.lattice_box[2:]))
            res = lattice_search(art["surface"], grid, box, coarse_n=cfg.lattice_coarse_n, tol=gates["monodromy"],
                                 sampler=frame_sampler(frames[0], std))
            art["lattice"] = res
            vals["lattice"] = res.to_dict()
            if res.candidates:
                c = res.candidates[0]
                vals["lattice"]["axis_periods"] = list(c.axis_periods())
                run.gate("periodicity", "monodromy", c.residual, gates["monodromy"])
