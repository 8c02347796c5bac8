"""Static SVG figures for single scenarios and matrix results."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

MAX_COLUMNS = 1500


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def waveform_panels(ms, out_dir: Path) -> list[Path]:
    paths = []
    for dev, w in zip(ms.device_ids, ms.waveforms):
        fig, ax = plt.subplots(figsize=(7, 2.5))
        ax.plot(w.times * 1e6, w.samples, lw=0.6)
        ax.set_xlabel("time [µs]")
        ax.set_ylabel("mode 0")
        ax.set_title(dev)
        fig.tight_layout()
        paths.append(_save(fig, out_dir / f"waveform_{dev}.svg"))
    return paths


def _crop(sg, feat):
    """Column range around the detected arrivals, decimated for plotting."""
    idx = feat.index[feat.valid]
    n = sg.n_samples
    if idx.size:
        pad = int(sg.edge_samples()[0])
        lo, hi = max(0, idx.min() - pad), min(n, idx.max() + pad)
    else:
        lo, hi = 0, n
    step = max(1, (hi - lo) // MAX_COLUMNS)
    return slice(lo, hi, step)


def scalogram_panels(report, device_ids, out_dir: Path) -> list[Path]:
    """Heat maps of |W| with the per-scale maxima marked.

    Marker coordinates are also written to ``scalogram_<dev>_markers.csv``.
    """
    paths = []
    for dev, sg, feat in zip(device_ids, report.scalograms, report.features):
        cols = _crop(sg, feat)
        t = sg.times[cols]
        mag = np.abs(sg.coefficients[:, cols])
        fig, ax = plt.subplots(figsize=(7, 3.2))
        mesh = ax.pcolormesh(t * 1e6, sg.grid.f / 1e3, mag, shading="nearest", rasterized=True)
        ax.plot(feat.t_max[feat.valid] * 1e6, feat.frequencies[feat.valid] / 1e3, "w.", ms=3)
        ax.set_yscale("log")
        ax.set_xlabel("time [µs]")
        ax.set_ylabel("central frequency [kHz]")
        ax.set_title(f"{dev} |W|")
        fig.colorbar(mesh, ax=ax)
        fig.tight_layout()
        paths.append(_save(fig, out_dir / f"scalogram_{dev}.svg"))
        with open(out_dir / f"scalogram_{dev}_markers.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("f_hz", "t_max_s"))
            for f, tm in zip(feat.frequencies[feat.valid], feat.t_max[feat.valid]):
                writer.writerow((repr(float(f)), repr(float(tm))))
    return paths


def location_plot(report, out_dir: Path, x_true: float | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3))
    f = report.frequencies / 1e3
    keep = report.valid & ~report.outliers
    ax.semilogx(f[keep], report.x_over_l_raw[keep], "o", ms=3, label="x(f)/l")
    if report.outliers.any():
        ax.semilogx(f[report.outliers], report.x_over_l_raw[report.outliers], "x", color="C3", label="outlier")
    ax.axhline(report.x_over_l, color="C1", lw=1, label=f"mean {report.x_over_l:.5f}")
    if x_true is not None:
        ax.axhline(x_true, color="k", ls="--", lw=0.8, label="true")
    ax.set_xlabel("central frequency [kHz]")
    ax.set_ylabel("x/l")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, out_dir / "location.svg")


def error_distribution(rows: list[dict], out_dir: Path) -> list[Path]:
    """Box plots of the relative error per line/medium/noise group."""
    groups: dict[str, list[float]] = {}
    for row in rows:
        if row.get("status") != "ok" or not row.get("x_error"):
            continue
        snr = row.get("snr_db") or "inf"
        key = f"{row['line']} {row['medium']}\nSNR {snr}"
        groups.setdefault(key, []).append(float(row["x_error"]) * 100)
    if not groups:
        return []
    labels = list(groups)
    fig, ax = plt.subplots(figsize=(max(5, 1.1 * len(labels)), 3.5))
    ax.boxplot([groups[k] for k in labels])
    ax.set_xticks(range(1, len(labels) + 1), labels, fontsize=7)
    ax.set_yscale("log")
    ax.set_ylabel("relative error [%]")
    fig.tight_layout()
    paths = [_save(fig, out_dir / "error_distribution.svg")]

    fig, ax = plt.subplots(figsize=(6, 3.5))
    for key in labels:
        xs = [float(r["x_true"]) for r in rows if r.get("status") == "ok" and r.get("x_error")
              and f"{r['line']} {r['medium']}\nSNR {r.get('snr_db') or 'inf'}" == key]
        ax.semilogy(xs, [max(v, 1e-9) for v in groups[key]], ".", label=key.replace("\n", ", "))
    ax.set_xlabel("true x/l")
    ax.set_ylabel("relative error [%]")
    ax.legend(fontsize=6)
    fig.tight_layout()
    paths.append(_save(fig, out_dir / "error_vs_location.svg"))
    return paths


def emit_plots(results, out_dir, ms=None) -> list[Path]:
    """Write SVG figures for a single-scenario report (with ``ms``) or matrix rows.

    A report needs scalograms (``run_localization(..., keep_scalograms=True)``).
    Returns the list of written figure paths; empty results write nothing.
    """
    out_dir = Path(out_dir)
    if results is None or (isinstance(results, list) and not results):
        return []
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(results, list):
        return error_distribution(results, out_dir)
    paths = []
    if ms is not None:
        paths += waveform_panels(ms, out_dir)
    if results.scalograms is not None:
        ids = ms.device_ids if ms is not None else ("M1", "M2", "M3")
        paths += scalogram_panels(results, ids, out_dir)
    x_true = ms.truth.x_over_l if ms is not None and ms.truth is not None else None
    if x_true is not None and math.isnan(x_true):
        x_true = None
    paths.append(location_plot(results, out_dir, x_true))
    return paths
