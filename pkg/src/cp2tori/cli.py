"""Command line driver.

    cp2tori SUBCOMMAND [--config PATH] [--out DIR] [--threads N] [--tol X] [--nu "a+bi,..."]

The output directory defaults to ``$CP2TORI_OUT`` (or ``./cp2tori_out``).
Exit codes: 0 success, 2 gate failure, 3 validation error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .errors import Cp2ToriError, GateFailure, ValidationError
from .export import _clean
from .pipeline import ARTIFACTS, PipelineConfig, export_artifact, run_pipeline
from .verification import verify_artifacts

OUT_ENV = "CP2TORI_OUT"

# subcommand -> (last stage, default exports)
PLANS = {
    "flow": ("flow", ["killing_field"]),
    "spectral": ("spectral", ["spectral"]),
    "frame": ("frame", ["frame", "omega_grid"]),
    "surface": ("surface", ["invariants", "surface_mesh", "omega_grid"]),
    "theta": ("omega", ["omega_grid"]),
    "periodicity": (None, []),
    "pipeline": (None, []),
}


def parse_nu(text: str) -> list[complex]:
    """``"1, 0.6+0.8i, -i"`` -> complex list."""
    out = []
    for tok in text.split(","):
        tok = tok.strip().replace(" ", "").replace("i", "j")
        if not tok:
            continue
        try:
            out.append(complex(tok))
        except ValueError as exc:
            raise ValidationError(f"cannot parse nu value {tok!r}") from exc
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON pipeline configuration")
    p.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV})")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--tol", type=float, default=None, help="flow tolerance override")
    p.add_argument("--nu", type=str, default=None, help='spectral parameters, e.g. "1,0.6+0.8i"')


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cp2tori", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in PLANS:
        p = sub.add_parser(name)
        _common(p)
        if name == "theta":
            p.add_argument("--theta-data", type=Path, default=None)
    p = sub.add_parser("export")
    _common(p)
    p.add_argument("--artifact", required=True, choices=sorted(ARTIFACTS))
    p.add_argument("--format", choices=["csv", "obj", "structured"], default=None)
    p.add_argument("--path", type=Path, default=None, help="target file (default: OUT/<artifact file>)")
    p = sub.add_parser("verify")
    p.add_argument("paths", nargs="+", type=Path)
    return ap


def load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    over = {}
    if args.threads is not None:
        over["threads"] = args.threads
    if args.tol is not None:
        over["tol"] = args.tol
    if args.nu is not None:
        over["nu"] = parse_nu(args.nu)
    if getattr(args, "theta_data", None) is not None:
        over["theta_data"] = str(args.theta_data)
    if args.command == "theta":
        over["source"] = "theta"
    if args.command == "periodicity" and cfg.lattice_box is None:
        over["lattice_box"] = "auto"
    return replace(cfg, **over) if over else cfg


def out_dir(args) -> Path:
    return args.out or Path(os.environ.get(OUT_ENV, "cp2tori_out"))


def _run(args) -> int:
    if args.command == "verify":
        summary = verify_artifacts(args.paths)
        for site in summary["nan"]:
            print(f"NaN: {json.dumps(site)}", file=sys.stderr)
        print(json.dumps(_clean(summary)))
        return 0 if summary["passed"] else GateFailure.exit_code
    cfg = load_config(args)
    out = out_dir(args)
    if args.command == "export":
        rep = run_pipeline(cfg)
        path = export_artifact(rep, args.artifact, args.path or out / ARTIFACTS[args.artifact][0], args.format)
        print(f"wrote {path}")
        return 0
    stop, defaults = PLANS[args.command]
    cfg = replace(cfg, exports=list(dict.fromkeys(cfg.exports + defaults)))
    rep = run_pipeline(cfg, out=out, stop_after=stop)
    print(rep.summary())
    print(f"artifacts in {out}")
    return 0 if rep.passed else GateFailure.exit_code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except Cp2ToriError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        print("interrupted; partial artifacts kept", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
