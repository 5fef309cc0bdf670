"""Command-line front end: scenario-driven batch runs.

Verbs mirror the scenario ``run`` kinds; each takes ``--scenario``,
``--out``, ``--seed`` and ``--jobs``.  Exit codes: 0 ok, 2 parse,
3 validation, 4 numerical, 5 resource cap.  Failures leave a
machine-readable ``error.json`` in the output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import ToolkitError, ValidationError, exit_code_for
from .runner import run_scenario
from .scenario import RUN_KINDS, parse_scenario

OUTPUT_DIR_ENV = "IONXY_OUTPUT_DIR"

_ERROR_MODULE = {
    "NoConvergence": "chain",
    "ZigZagUnstable": "chain",
    "ResonantTone": "coupling",
    "DegenerateTones": "coupling",
    "ZeroCoupling": "coupling",
    "TargetUnreachable": "coupling",
    "ZeroMatrix": "coupling",
    "DimensionMismatch": "dynamics",
    "DimensionCap": "dynamics",
    "StepFailure": "dynamics",
    "LeakageExceeded": "dynamics",
    "MissingStates": "dynamics",
    "UnsupportedDrive": "dynamics",
    "FitDiverged": "dynamics",
    "InvalidEdgeFraction": "floquet",
    "ParseError": "scenario",
    "ValidationError": "scenario",
    "UnknownKey": "scenario",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ionxy",
        description="Coupling engineering and spin-phonon simulation for "
                    "dual spin-dependent-force trapped-ion experiments.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in RUN_KINDS:
        p = sub.add_parser(verb, help=f"run a '{verb}' scenario")
        p.add_argument("--scenario", required=True, help="scenario TOML file")
        p.add_argument("--out", default=None,
                       help=f"output directory (default: scenario [output].dir, "
                            f"then ${OUTPUT_DIR_ENV}, then ./out)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel workers for scan-type runs")
    return parser


def _resolve_out_dir(args, scenario_out) -> Path:
    if args.out:
        return Path(args.out)
    if scenario_out:
        return Path(scenario_out)
    env = os.environ.get(OUTPUT_DIR_ENV)
    if env:
        return Path(env)
    return Path("out")


def _emit_error(out_dir: Path | None, verb: str, exc: BaseException) -> None:
    payload = {
        "error": type(exc).__name__,
        "module": _ERROR_MODULE.get(type(exc).__name__, "runner"),
        "operation": verb,
        "message": str(exc),
        "parameter": getattr(exc, "parameter", None),
    }
    sys.stderr.write(f"ionxy: {payload['error']}: {payload['message']}\n")
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(json.dumps(payload, indent=2) + "\n")
        except OSError:
            pass


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    out_dir = None
    try:
        scenario = parse_scenario(args.scenario)
        if scenario.run != args.verb:
            raise ValidationError(
                f"scenario declares run = {scenario.run!r} but the "
                f"'{args.verb}' verb was invoked", parameter="run")
        out_dir = _resolve_out_dir(args, scenario.output_dir)
        manifest = run_scenario(scenario, out_dir, seed=args.seed, jobs=args.jobs)
        sys.stdout.write(
            f"ionxy: {args.verb} ok, {len(manifest.outputs)} files in {out_dir}\n")
        return 0
    except ToolkitError as exc:
        if out_dir is None:
            out_dir = _resolve_out_dir(args, None)
        _emit_error(out_dir, args.verb, exc)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
