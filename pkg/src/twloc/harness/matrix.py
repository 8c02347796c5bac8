"""Experiment matrix: scenario grid, per-scenario scoring and summaries."""

from __future__ import annotations

import csv
import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import AmbiguousSideError, ConfigError, InsufficientDataError, TwlocError, WindowError
from ..locator import AnalysisConfig, baseline_from_features, run_localization
from ..model import LineGeometry, SourceKind, SourceParams, preset
from ..simkit import ScenarioConfig, synthesize_measurements

WORKERS_ENV = "TWLOC_WORKERS"


def relative_error(x_measured: float, x_true: float, l: float) -> float:
    """|x_measured - x_true| / l."""
    if not l > 0:
        raise ValueError(f"line length must be > 0, got {l}")
    return abs(x_measured - x_true) / l


@dataclass(frozen=True)
class LinePreset:
    name: str
    l: float
    a_over_l: float = 0.5
    duration: float = 1e-3


# observed line lengths a), b), c); the longest needs a 2 ms window so the
# far-end arrival on cable still fits after the duration/4 launch offset
DEFAULT_LINES = (
    LinePreset("a", 184.4e3, 0.5, 2e-3),
    LinePreset("b", 65.4e3, 0.5, 1e-3),
    LinePreset("c", 35.4e3, 0.5, 1e-3),
)
DEFAULT_CASES = (("cable", "pd"), ("overhead", "lightning"))


def default_source(kind: str) -> SourceParams:
    return SourceParams.pd() if SourceKind(kind) is SourceKind.PD else SourceParams.lightning()


@dataclass(frozen=True)
class ExperimentMatrix:
    lines: tuple[LinePreset, ...] = DEFAULT_LINES
    cases: tuple[tuple[str, str], ...] = DEFAULT_CASES
    location_factors: tuple[float, ...] = tuple(n / 10 for n in range(1, 10))
    x_over_l: tuple[float, ...] | None = None
    noise_levels: tuple[float | None, ...] = (None,)
    seeds: tuple[int, ...] = tuple(range(10))
    desync_cases: tuple[tuple[float, float, float], ...] = ((0.0, 0.0, 0.0),)
    baseline_velocity_errors: tuple[float, ...] = (-0.02, 0.02)
    sample_rate: float = 100e6
    sources: dict = field(default_factory=dict)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    def __post_init__(self):
        bad = []
        for name in ("lines", "cases", "noise_levels", "desync_cases"):
            if not getattr(self, name):
                bad.append(name)
        if any(lvl is not None for lvl in self.noise_levels) and not self.seeds:
            bad.append("seeds")
        if self.x_over_l is not None:
            if not self.x_over_l or any(not 0 < x < 1 for x in self.x_over_l):
                bad.append("x_over_l")
        elif not self.location_factors or any(not 0 < f < 1 for f in self.location_factors):
            bad.append("location_factors")
        for medium, kind in self.cases:
            try:
                preset(medium)
                SourceKind(kind)
            except (TwlocError, ValueError):
                bad.append("cases")
        if any(len(d) != 3 for d in self.desync_cases):
            bad.append("desync_cases")
        if bad:
            raise ConfigError("invalid experiment matrix", sorted(set(bad)))

    def locations(self, line: LinePreset) -> tuple[float, ...]:
        if self.x_over_l is not None:
            return tuple(self.x_over_l)
        return tuple(f * line.a_over_l for f in self.location_factors)

    def source(self, kind: str) -> SourceParams:
        return self.sources.get(kind) or default_source(kind)

    def scenarios(self):
        """Yield ``(scenario_id, meta, ScenarioConfig)`` in a stable order."""
        for line, (medium, kind) in itertools.product(self.lines, self.cases):
            model = preset(medium)
            for ix, x in enumerate(self.locations(line)):
                for d_ix, desync in enumerate(self.desync_cases):
                    for snr in self.noise_levels:
                        for seed in ([None] if snr is None else self.seeds):
                            snr_tag = "inf" if snr is None else f"{snr:g}"
                            sid = f"{line.name}-{medium}-{kind}-x{ix + 1}-d{d_ix}-snr{snr_tag}"
                            if seed is not None:
                                sid += f"-s{seed}"
                            meta = {"scenario_id": sid, "line": line.name, "l_m": line.l,
                                    "a_over_l": line.a_over_l, "medium": medium, "source": kind,
                                    "x_true": x, "snr_db": snr, "seed": seed, "desync_s": desync}
                            cfg = ScenarioConfig(
                                LineGeometry(line.l, line.a_over_l, x), model, self.source(kind),
                                sample_rate=self.sample_rate, duration=line.duration,
                                snr_db=snr, noise_seed=0 if seed is None else seed,
                                desync_offsets=desync,
                                analysis_f_max=self.analysis.f_max,
                            )
                            yield sid, meta, cfg

    def __len__(self) -> int:
        return sum(1 for _ in self.scenarios())


@dataclass
class ResultRow:
    scenario_id: str
    line: str
    l_m: float
    a_over_l: float
    medium: str
    source: str
    x_true: float
    snr_db: float | None
    seed: int | None
    desync_s: tuple
    x_hat: float = math.nan
    x_error: float = math.nan
    sigma: float = math.nan
    n_valid: int = 0
    n_outliers: int = 0
    side: str = ""
    baseline_errors: tuple = ()
    status: str = "ok"
    runtime_ms: float = 0.0


RESULT_COLUMNS = (
    "scenario_id", "line", "l_m", "a_over_l", "medium", "source", "x_true", "snr_db", "seed",
    "desync_m1_s", "desync_m2_s", "desync_m3_s", "x_hat", "x_error", "sigma", "n_valid",
    "n_outliers", "side", "status",
)


def _error_status(exc: Exception) -> str:
    for cls, code in ((InsufficientDataError, "insufficient_data"), (AmbiguousSideError, "ambiguous_side"),
                      (WindowError, "window"), (TwlocError, "method_error")):
        if isinstance(exc, cls):
            return code
    return "error"


def baseline_velocity(model, frequency: float) -> float:
    """Group velocity at ``frequency``, the velocity a two-ended locator would be set to."""
    return 2 * math.pi / float(model.beta_prime(frequency))


def evaluate_scenario(item, analysis: AnalysisConfig, velocity_errors=(-0.02, 0.02)) -> ResultRow:
    sid, meta, cfg = item
    row = ResultRow(**meta)
    start = time.perf_counter()
    try:
        ms = synthesize_measurements(cfg)
        report = run_localization(ms, analysis)
        l = cfg.geometry.l
        row.x_hat = report.x_over_l
        row.x_error = relative_error(report.x_over_l * l, cfg.geometry.x, l)
        row.sigma = report.sigma
        row.n_valid = report.n_valid
        row.n_outliers = report.n_outliers
        row.side = report.side.value
        f1, _, f3 = report.features
        errs = []
        for rel in velocity_errors:
            probe = baseline_from_features(f1, f3, 1.0, l)
            v = baseline_velocity(cfg.model, probe.frequency) * (1 + rel)
            base = baseline_from_features(f1, f3, v, l)
            errs.append(relative_error(base.x, cfg.geometry.x, l))
        row.baseline_errors = tuple(errs)
    except Exception as exc:  # recorded as a row, never aborts the batch
        row.status = _error_status(exc)
    row.runtime_ms = (time.perf_counter() - start) * 1e3
    return row


def _worker_count(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, workers)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def result_columns(velocity_errors) -> tuple[str, ...]:
    return RESULT_COLUMNS + tuple(f"baseline_error_{rel:+g}" for rel in velocity_errors)


def row_values(row: ResultRow, velocity_errors) -> list[str]:
    values = [row.scenario_id, row.line, row.l_m, row.a_over_l, row.medium, row.source, row.x_true,
              row.snr_db, row.seed, *row.desync_s, row.x_hat, row.x_error, row.sigma, row.n_valid,
              row.n_outliers, row.side, row.status]
    base = list(row.baseline_errors) + [math.nan] * (len(velocity_errors) - len(row.baseline_errors))
    return [_fmt(v) for v in values + base]


def write_results_csv(rows, path, velocity_errors=(-0.02, 0.02)) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(result_columns(velocity_errors))
        for row in rows:
            writer.writerow(row_values(row, velocity_errors))
    return path


def read_results_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summarize(rows) -> list[dict]:
    """Mean, worst and standard deviation of x_error per (line, medium, source, noise)."""
    groups: dict[tuple, list] = {}
    for row in rows:
        key = (row.line, row.l_m, row.medium, row.source, row.snr_db)
        groups.setdefault(key, []).append(row)
    out = []
    for (line, l_m, medium, source, snr), members in groups.items():
        errs = np.array([r.x_error for r in members if r.status == "ok"])
        out.append({
            "line": line, "l_km": l_m / 1e3, "medium": medium, "source": source,
            "snr_db": snr, "n": len(members), "n_ok": int(errs.size),
            "mean_pct": float(errs.mean() * 100) if errs.size else math.nan,
            "worst_pct": float(errs.max() * 100) if errs.size else math.nan,
            "std_pct": float(errs.std() * 100) if errs.size else math.nan,
        })
    return out


SUMMARY_HEADER = ("Errors are relative to the synthetic simulator's ground truth "
                  "(parametric gamma(f) line), not to EMTP results.")


def format_summary(summary) -> str:
    lines = [SUMMARY_HEADER,
             f"{'line':<5}{'km':>8} {'medium':<9}{'source':<10}{'snr':>6}{'n':>5}{'ok':>5}"
             f"{'avg %':>10}{'worst %':>10}{'std %':>10}"]
    for s in summary:
        snr = "-" if s["snr_db"] is None else f"{s['snr_db']:g}"
        lines.append(f"{s['line']:<5}{s['l_km']:>8.1f} {s['medium']:<9}{s['source']:<10}{snr:>6}"
                     f"{s['n']:>5}{s['n_ok']:>5}{s['mean_pct']:>10.4f}{s['worst_pct']:>10.4f}{s['std_pct']:>10.4f}")
    return "\n".join(lines)


def _check_writable(path: Path) -> None:
    parent = path.parent if str(path.parent) else Path(".")
    if not parent.is_dir():
        raise OSError(f"output directory {parent} does not exist")
    if not os.access(parent, os.W_OK) or (path.exists() and not os.access(path, os.W_OK)):
        raise OSError(f"cannot write {path}")


def run_matrix(matrix: ExperimentMatrix, out_path=None, workers: int | None = None):
    """Run every scenario; returns ``(rows, summary)``.

    Rows are ordered by scenario id position in the grid regardless of worker
    count. When ``out_path`` is given the results CSV is written there, with
    per-scenario runtimes in a ``.timing.csv`` sidecar so the results file
    itself is reproducible byte for byte.
    """
    if out_path is not None:
        out_path = Path(out_path)
        _check_writable(out_path)
    items = list(matrix.scenarios())
    n_workers = _worker_count(workers)
    args = (matrix.analysis, matrix.baseline_velocity_errors)
    if n_workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            rows = list(pool.map(evaluate_scenario, items, *[itertools.repeat(a) for a in args]))
    else:
        rows = [evaluate_scenario(item, *args) for item in items]
    summary = summarize(rows)
    if out_path is not None:
        write_results_csv(rows, out_path, matrix.baseline_velocity_errors)
        timing = out_path.with_suffix(".timing.csv")
        with open(timing, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("scenario_id", "runtime_ms"))
            for row in rows:
                writer.writerow((row.scenario_id, f"{row.runtime_ms:.1f}"))
        summary_path = out_path.with_name(out_path.stem + "_summary.csv")
        with open(summary_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(summary[0]) if summary else ["line"],
                                    lineterminator="\n")
            writer.writeheader()
            for s in summary:
                writer.writerow({k: _fmt(v) for k, v in s.items()})
    return rows, summary
