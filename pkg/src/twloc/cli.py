"""Command line interface.

Exit codes: 0 success, 1 method error (ambiguous side, quorum), 2 usage or
configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, MethodError, ParameterError, TwlocError
from .harness import config as hconfig
from .harness import io as hio
from .harness.matrix import ExperimentMatrix, format_summary, read_results_csv, run_matrix
from .harness.plots import emit_plots
from .locator import AnalysisConfig, baseline_from_features, measure_features, run_localization
from .simkit import synthesize_measurements

EXIT_OK, EXIT_METHOD, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _analysis_args(p: argparse.ArgumentParser) -> None:
    d = AnalysisConfig()
    p.add_argument("inputs", nargs="+", help="measurement directory or three waveform files (M1 M2 M3)")
    p.add_argument("--omega0", type=float, default=d.omega0)
    p.add_argument("--fmin", type=float, default=d.f_min)
    p.add_argument("--fmax", type=float, default=d.f_max)
    p.add_argument("--voices", type=int, default=d.voices)
    p.add_argument("--quorum", type=int, default=d.quorum)
    p.add_argument("--a-over-l", type=float, help="relative position of M2 (required for bare files)")
    p.add_argument("--length", type=float, help="line length in metres (for reporting)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twloc", description="Three-terminal traveling-wave event locator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize M1/M2/M3 records from a scenario config")
    p.add_argument("config")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--format", choices=("bin", "csv"), default="bin")

    p = sub.add_parser("locate", help="locate the event and write a report")
    _analysis_args(p)
    p.add_argument("-o", "--out", help="report CSV path")

    p = sub.add_parser("characterize", help="print alpha*l, beta*l and beta'*l per frequency")
    _analysis_args(p)
    p.add_argument("-o", "--out", help="report CSV path")

    p = sub.add_parser("baseline", help="classical double-terminal estimate")
    _analysis_args(p)
    p.add_argument("--velocity", type=float, required=True, help="propagation velocity setting [m/s]")

    p = sub.add_parser("experiment", help="run an experiment matrix")
    p.add_argument("config", nargs="?", help="matrix config (default matrix when omitted)")
    p.add_argument("-o", "--out", required=True, help="results CSV path")
    p.add_argument("--workers", type=int, help="parallel scenarios (env TWLOC_WORKERS)")

    p = sub.add_parser("plot", help="plot a measurement directory or a results CSV")
    p.add_argument("results")
    p.add_argument("-o", "--out", required=True, help="output directory")
    return parser


def _load_inputs(args):
    if len(args.inputs) not in (1, 3):
        raise UsageError("give a measurement directory or exactly three waveform files (M1 M2 M3)")
    if len(args.inputs) == 1 and not Path(args.inputs[0]).is_dir():
        if not Path(args.inputs[0]).exists():
            raise FileNotFoundError(args.inputs[0])
        raise UsageError("a single waveform is not enough: give a measurement directory or three files")
    if len(args.inputs) == 3 and args.a_over_l is None:
        raise UsageError("--a-over-l is required with bare waveform files")
    return hio.read_measurement_set(args.inputs, args.a_over_l, args.length)


def _analysis(args) -> AnalysisConfig:
    return AnalysisConfig(f_min=args.fmin, f_max=args.fmax, voices=args.voices,
                          omega0=args.omega0, quorum=args.quorum)


def cmd_simulate(args) -> int:
    cfg, _ = hconfig.load_scenario(args.config)
    ms = synthesize_measurements(cfg)
    manifest = hio.write_measurement_set(ms, args.out, args.format)
    print(f"wrote {manifest.parent} (x/l = {cfg.geometry.x_over_l}, a/l = {cfg.geometry.a_over_l})")
    return EXIT_OK


def cmd_locate(args) -> int:
    ms = _load_inputs(args)
    report = run_localization(ms, _analysis(args))
    print(report.summary())
    if args.out:
        hio.write_report_csv(report, args.out)
    return EXIT_OK


def cmd_characterize(args) -> int:
    ms = _load_inputs(args)
    report = run_localization(ms, _analysis(args))
    ch = report.characteristic
    print(f"{'f [Hz]':>12} {'alpha*l [Np]':>14} {'beta*l [rad]':>14} {'beta_prime*l':>14}")
    for k in np.flatnonzero(ch.valid):
        print(f"{ch.frequencies[k]:12.1f} {ch.alpha_l[k]:14.6g} {ch.beta_l[k]:14.6g} {ch.beta_prime_l[k]:14.6g}")
    print(report.summary())
    if args.out:
        hio.write_report_csv(report, args.out)
    return EXIT_OK


def cmd_baseline(args) -> int:
    ms = _load_inputs(args)
    if ms.line_length is None:
        raise UsageError("--length is required when the measurement has no line length")
    feats, _ = measure_features(ms, _analysis(args))
    res = baseline_from_features(feats[0], feats[2], args.velocity, ms.line_length)
    flag = " (extrapolated)" if res.extrapolated else ""
    print(f"baseline x = {res.x:.1f} m, x/l = {res.x / ms.line_length:.4f} "
          f"at {res.frequency:.0f} Hz, v = {args.velocity:.6g} m/s{flag}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    matrix = hconfig.load_matrix(args.config) if args.config else ExperimentMatrix()
    rows, summary = run_matrix(matrix, args.out, args.workers)
    print(format_summary(summary))
    failed = sum(r.status != "ok" for r in rows)
    print(f"{len(rows)} scenarios, {failed} failed; results in {args.out}")
    return EXIT_OK


def cmd_plot(args) -> int:
    src = Path(args.results)
    if src.is_dir():
        ms = hio.read_measurement_set(src)
        report = run_localization(ms, AnalysisConfig(), keep_scalograms=True)
        paths = emit_plots(report, args.out, ms=ms)
    else:
        rows = read_results_csv(src)
        paths = emit_plots(rows, args.out)
    if not paths:
        print("no results to plot", file=sys.stderr)
        return EXIT_METHOD
    for path in paths:
        print(path)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate, "locate": cmd_locate, "characterize": cmd_characterize,
    "baseline": cmd_baseline, "experiment": cmd_experiment, "plot": cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"twloc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MethodError as exc:
        print(f"method error: {exc}", file=sys.stderr)
        return EXIT_METHOD
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TwlocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_METHOD


if __name__ == "__main__":
    raise SystemExit(main())
