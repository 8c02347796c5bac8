"""Waveform, measurement-set and report files.

Waveform files come in two flavours:

* binary (``.bin``): one ASCII header line
  ``TWLOC-WAVEFORM 1 sample_rate=<Hz> t0=<s> device=<id> n=<count>``
  followed by ``n`` little-endian float64 samples;
* CSV (``.csv``): a ``# sample_rate=<Hz> t0=<s> device=<id>`` header row
  and one ``time_s,value`` row per sample.

Floats are written with ``repr`` so both formats round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from ..errors import ParameterError
from ..locator import LocalizationReport
from ..model import PropagationModel, Waveform
from ..simkit import DEVICE_IDS, MeasurementSet, Truth

BINARY_MAGIC = "TWLOC-WAVEFORM"
MANIFEST = "measurement.json"

REPORT_COLUMNS = (
    "row", "f_hz", "x_over_l", "x_over_l_raw", "valid", "outlier",
    "t1_s", "t2_s", "t3_s", "alpha_l", "beta_l", "beta_prime_l",
    "x_over_l_amplitude", "x_over_l_phase", "sigma", "side", "n_valid", "n_outliers",
)


def _parse_header(text: str) -> dict[str, str]:
    fields = {}
    for token in text.split():
        if "=" in token:
            key, value = token.split("=", 1)
            fields[key] = value
    return fields


def write_waveform(w: Waveform, path, device: str = "M?") -> Path:
    path = Path(path)
    if path.suffix == ".csv":
        times = w.times
        with open(path, "w", newline="") as fh:
            fh.write(f"# sample_rate={w.sample_rate!r} t0={w.t0!r} device={device}\n")
            fh.write("time_s,value\n")
            for t, v in zip(times, w.samples):
                fh.write(f"{float(t)!r},{float(v)!r}\n")
    else:
        header = f"{BINARY_MAGIC} 1 sample_rate={w.sample_rate!r} t0={w.t0!r} device={device} n={len(w)}\n"
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(np.asarray(w.samples, dtype="<f8").tobytes())
    return path


def read_waveform(path) -> tuple[Waveform, str]:
    """Return ``(waveform, device_id)``."""
    path = Path(path)
    with open(path, "rb") as fh:
        first = fh.readline()
        if first.startswith(BINARY_MAGIC.encode()):
            meta = _parse_header(first.decode("ascii"))
            n = int(meta["n"])
            samples = np.frombuffer(fh.read(8 * n), dtype="<f8")
            if samples.size != n:
                raise ParameterError(f"{path}: expected {n} samples, found {samples.size}")
            return Waveform(samples, float(meta["sample_rate"]), float(meta["t0"])), meta.get("device", "")
    with open(path, newline="") as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ParameterError(f"{path}: missing '# sample_rate=... t0=...' header row")
        meta = _parse_header(header.lstrip("# "))
        values = []
        for row in csv.reader(fh):
            if not row or row[0] == "time_s":
                continue
            values.append(float(row[1]))
    if "sample_rate" not in meta:
        raise ParameterError(f"{path}: header lacks sample_rate")
    return Waveform(values, float(meta["sample_rate"]), float(meta.get("t0", 0.0))), meta.get("device", "")


def _model_to_dict(model: PropagationModel) -> dict:
    return {"name": model.name, "v_inf": model.v_inf, "k_alpha_sqrt": model.k_alpha_sqrt,
            "k_alpha_lin": model.k_alpha_lin, "k_disp": model.k_disp}


def write_measurement_set(ms: MeasurementSet, out_dir, fmt: str = "bin") -> Path:
    """Write one file per device plus a JSON manifest; returns the manifest path."""
    if fmt not in ("bin", "csv"):
        raise ParameterError(f"format must be 'bin' or 'csv', got {fmt!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    devices = []
    for dev, w in zip(ms.device_ids, ms.waveforms):
        name = f"{dev}.{fmt}"
        write_waveform(w, out_dir / name, dev)
        devices.append({"id": dev, "file": name})
    manifest = {"a_over_l": ms.a_over_l, "line_length": ms.line_length, "devices": devices}
    if ms.truth is not None:
        manifest["truth"] = {"x_over_l": ms.truth.x_over_l, "l": ms.truth.l,
                             "model": _model_to_dict(ms.truth.model)}
    path = out_dir / MANIFEST
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def read_measurement_set(source, a_over_l: float | None = None,
                         line_length: float | None = None) -> MeasurementSet:
    """Load a directory written by :func:`write_measurement_set` or three waveform files.

    ``a_over_l`` and ``line_length`` override the manifest; with bare files
    ``a_over_l`` is required.
    """
    if isinstance(source, (str, Path)):
        source = [source]
    source = [Path(s) for s in source]
    truth = None
    if len(source) == 1 and source[0].is_dir():
        manifest = json.loads((source[0] / MANIFEST).read_text())
        files = [source[0] / d["file"] for d in manifest["devices"]]
        a_over_l = manifest["a_over_l"] if a_over_l is None else a_over_l
        line_length = manifest.get("line_length") if line_length is None else line_length
        if "truth" in manifest:
            t = manifest["truth"]
            truth = Truth(t["x_over_l"], PropagationModel(**t["model"]), t["l"])
    else:
        files = source
    if len(files) != 3:
        raise ParameterError(f"need exactly 3 waveforms (M1, M2, M3), got {len(files)}")
    if a_over_l is None:
        raise ParameterError("a_over_l is required when loading bare waveform files")
    loaded = [read_waveform(f) for f in files]
    ids = tuple(dev or default for (_, dev), default in zip(loaded, DEVICE_IDS))
    return MeasurementSet(tuple(w for w, _ in loaded), float(a_over_l), line_length,
                          device_ids=ids, truth=truth)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "" if math.isnan(value) else repr(value)
    return str(value)


def report_rows(report: LocalizationReport):
    ch = report.characteristic
    times = [f.t_max for f in report.features] if report.features else [np.full(report.frequencies.size, np.nan)] * 3
    for k, f in enumerate(report.frequencies):
        yield {
            "row": "freq", "f_hz": f,
            "x_over_l": report.x_over_l_per_freq[k], "x_over_l_raw": report.x_over_l_raw[k],
            "valid": bool(report.valid[k]), "outlier": bool(report.outliers[k]),
            "t1_s": times[0][k], "t2_s": times[1][k], "t3_s": times[2][k],
            "alpha_l": ch.alpha_l[k], "beta_l": ch.beta_l[k], "beta_prime_l": ch.beta_prime_l[k],
            "x_over_l_amplitude": report.x_over_l_amplitude[k] if report.x_over_l_amplitude is not None else np.nan,
            "x_over_l_phase": report.x_over_l_phase[k] if report.x_over_l_phase is not None else np.nan,
            "sigma": "", "side": "", "n_valid": "", "n_outliers": "",
        }
    yield {
        "row": "aggregate", "f_hz": "", "x_over_l": report.x_over_l, "x_over_l_raw": "",
        "valid": True, "outlier": "", "t1_s": "", "t2_s": "", "t3_s": "",
        "alpha_l": "", "beta_l": "", "beta_prime_l": "", "x_over_l_amplitude": "", "x_over_l_phase": "",
        "sigma": report.sigma, "side": report.side.value,
        "n_valid": report.n_valid, "n_outliers": report.n_outliers,
    }


def write_report_csv(report: LocalizationReport, path) -> Path:
    """One row per central frequency followed by one aggregate row."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in report_rows(report):
            writer.writerow([_fmt(row[c]) for c in REPORT_COLUMNS])
    return path
