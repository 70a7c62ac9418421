"""Command-line interface: ``nrules simulate | validate | canonicalize``.

Exit codes: 0 success, 1 scenario diagnostics, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import sys

from . import dsl
from .ensemble import FORMATS, emit_report, emit_trial, emit_trial_log, simulate_ensemble
from .records import dumps

EXIT_OK, EXIT_DIAGNOSTICS, EXIT_IO = 0, 1, 2


def _read(path: str) -> tuple[dsl.ScenarioSpec | None, list[dsl.ParseDiagnostic]]:
    with open(path, "rb") as fh:
        return dsl.parse_bytes(fh.read())


def _report_diagnostics(path: str, diags) -> None:
    for d in diags:
        print(f"{path}:{d}", file=sys.stderr)


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nrules", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one trial or an ensemble")
    sim.add_argument("scenario", help="scenario file (.scn)")
    sim.add_argument("--trials", type=_positive, default=1, help="number of trials (default 1)")
    sim.add_argument("--seed", type=int, default=None, help="master seed (default: the scenario's run seed)")
    sim.add_argument("--out", default=None, help="output directory (default: report on stdout)")
    sim.add_argument("--compare-srules", action="store_true", help="add the sRules comparison block to the report")
    sim.add_argument("--sample-every", type=_positive, default=None, help="log the time series every K steps")
    sim.add_argument("--format", choices=FORMATS, default="json", help="output format (default json)")
    sim.add_argument("--workers", type=_positive, default=1, help="worker processes; output does not depend on it")

    val = sub.add_parser("validate", help="parse and validate; print diagnostics")
    val.add_argument("scenario")

    can = sub.add_parser("canonicalize", help="print the canonical form of a scenario")
    can.add_argument("scenario")
    return parser


def _simulate(args, spec: dsl.ScenarioSpec) -> int:
    seed = spec.run.seed if args.seed is None else args.seed
    every = args.sample_every
    if every is None and args.trials == 1:
        every = 1
    result = simulate_ensemble(spec, args.trials, seed, args.compare_srules, args.workers, every)
    if args.out is None:
        text = dumps(result.report.to_dict()) if args.format == "json" else result.report.to_csv()
        sys.stdout.write(text)
        return EXIT_OK
    emit_report(result.report, args.out, args.format)
    if args.trials == 1:
        emit_trial(result.trials[0], args.out, args.format)
    emit_trial_log(result.trials, args.out)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec, diags = _read(args.scenario)
    except OSError as exc:
        print(f"nrules: cannot read {args.scenario}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    _report_diagnostics(args.scenario, diags)
    if spec is None:
        return EXIT_DIAGNOSTICS
    try:
        if args.command == "validate":
            print(f"{args.scenario}: ok ({len(spec.basis)} states, {len(spec.components)} components)")
            return EXIT_OK
        if args.command == "canonicalize":
            sys.stdout.write(dsl.serialize(spec))
            return EXIT_OK
        return _simulate(args, spec)
    except dsl.ScenarioError as exc:
        _report_diagnostics(args.scenario, exc.diagnostics)
        return EXIT_DIAGNOSTICS
    except OSError as exc:
        print(f"nrules: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
