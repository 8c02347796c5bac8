"""INI configuration for single scenarios and experiment matrices.

See ``docs/config.md`` for the key reference. Every invalid value is reported
through :class:`~twloc.errors.ConfigError` naming ``section.key``.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import replace
from pathlib import Path

from ..errors import ConfigError, TwlocError
from ..locator import AnalysisConfig
from ..model import LineGeometry, PropagationModel, SourceParams, preset
from ..simkit import Reflections, ScenarioConfig
from .matrix import DEFAULT_LINES, ExperimentMatrix, LinePreset, default_source

_OFF = {"off", "none", "inf", ""}


class _Reader:
    """Typed getters that collect errors instead of raising on the first one."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser
        self.errors: list[str] = []

    def has(self, section: str, key: str) -> bool:
        return self.parser.has_option(section, key)

    def raw(self, section: str, key: str, default=None):
        return self.parser.get(section, key, fallback=default)

    def number(self, section, key, default=None, cast=float, check=None):
        text = self.raw(section, key)
        if text is None:
            return default
        try:
            value = cast(text.strip())
        except ValueError:
            self.errors.append(f"{section}.{key}")
            return default
        if check is not None and not check(value):
            self.errors.append(f"{section}.{key}")
            return default
        return value

    def optional_db(self, section, key, default=None):
        text = self.raw(section, key)
        if text is None:
            return default
        if text.strip().lower() in _OFF:
            return None
        return self.number(section, key, default, check=math.isfinite)

    def flag(self, section, key, default=False):
        if not self.has(section, key):
            return default
        try:
            return self.parser.getboolean(section, key)
        except ValueError:
            self.errors.append(f"{section}.{key}")
            return default

    def number_list(self, section, key, default=None, cast=float):
        text = self.raw(section, key)
        if text is None:
            return default
        try:
            return tuple(cast(t.strip()) for t in text.split(",") if t.strip())
        except ValueError:
            self.errors.append(f"{section}.{key}")
            return default

    def fail_if_errors(self, what: str):
        if self.errors:
            raise ConfigError(f"invalid {what} configuration", sorted(set(self.errors)))


def _load(path_or_text) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    path = Path(path_or_text) if not str(path_or_text).lstrip().startswith("[") else None
    if path is not None:
        with open(path) as fh:  # OSError propagates to the CLI (exit 3)
            parser.read_file(fh)
    else:
        parser.read_string(str(path_or_text))
    return parser


def _model(r: _Reader, section: str, name: str | None = None) -> PropagationModel | None:
    name = r.raw(section, "model", name or "cable").strip()
    try:
        base = preset(name)
    except TwlocError:
        r.errors.append(f"{section}.model")
        return None
    overrides = {}
    for key in ("v_inf", "k_alpha_sqrt", "k_alpha_lin", "k_disp"):
        value = r.number(section, key, check=lambda v: math.isfinite(v) and v >= 0)
        if value is not None:
            overrides[key] = value
    try:
        return replace(base, **overrides) if overrides else base
    except TwlocError:
        r.errors.extend(f"{section}.{k}" for k in overrides)
        return None


def _source(r: _Reader, section: str, kind: str | None = None) -> SourceParams | None:
    kind = (r.raw(section, "kind", kind or "pd") or "pd").strip().lower()
    if kind not in ("pd", "lightning"):
        r.errors.append(f"{section}.kind")
        return None
    base = default_source(kind)
    values = {
        "amplitude": r.number(section, "amplitude", base.amplitude),
        "tau1": r.number(section, "tau1", base.tau1),
        "tau2": r.number(section, "tau2", base.tau2),
        "n": r.number(section, "n", base.n),
    }
    bad = [k for k in ("amplitude", "tau1", "tau2") if not values[k] > 0]
    if kind == "pd" and not bad and not values["tau1"] < values["tau2"]:
        bad = ["tau2"]
    if kind == "lightning" and not values["n"] >= 1:
        bad.append("n")
    if bad:
        r.errors.extend(f"{section}.{k}" for k in bad)
        return None
    return SourceParams(kind, **values)


def _analysis(r: _Reader) -> AnalysisConfig:
    s = "analysis"
    base = AnalysisConfig()
    pos = lambda v: v > 0  # noqa: E731
    values = dict(
        f_min=r.number(s, "f_min", base.f_min, check=pos),
        f_max=r.number(s, "f_max", base.f_max, check=pos),
        voices=r.number(s, "voices", base.voices, cast=int, check=pos),
        omega0=r.number(s, "omega0", base.omega0, check=lambda v: v >= 5),
        threshold_rel=r.number(s, "threshold_rel", base.threshold_rel, check=lambda v: 0 < v < 1),
        min_peak_ratio=r.number(s, "min_peak_ratio", base.min_peak_ratio, check=pos),
        quorum=r.number(s, "quorum", base.quorum, cast=int, check=pos),
        mad_k=r.number(s, "mad_k", base.mad_k, check=pos),
    )
    if values["f_min"] >= values["f_max"]:
        r.errors.append(f"{s}.f_max")
        values["f_max"] = base.f_max
        values["f_min"] = base.f_min
    return AnalysisConfig(**values)


def load_scenario(path_or_text) -> tuple[ScenarioConfig, AnalysisConfig]:
    """Parse a single-scenario file into simulator and analysis settings."""
    r = _Reader(_load(path_or_text))
    unit = lambda v: 0 < v < 1  # noqa: E731
    l = r.number("line", "length_m", 65.4e3, check=lambda v: v > 0)
    a = r.number("line", "a_over_l", 0.5, check=unit)
    x = r.number("line", "x_over_l", None, check=unit)
    if x is None and "line.x_over_l" not in r.errors:
        r.errors.append("line.x_over_l")
    model = _model(r, "line")
    source = _source(r, "source")
    fs = r.number("sampling", "sample_rate", 100e6, check=lambda v: v > 0)
    duration = r.number("sampling", "duration", 1e-3, check=lambda v: v > 0)
    snr = r.optional_db("noise", "snr_db")
    seed = r.number("noise", "seed", 0, cast=int)
    offsets = r.number_list("desync", "offsets", (0.0, 0.0, 0.0))
    if offsets is not None and len(offsets) != 3:
        r.errors.append("desync.offsets")
        offsets = (0.0, 0.0, 0.0)
    reflections = None
    if r.flag("reflections", "enabled"):
        try:
            reflections = Reflections(
                r.number("reflections", "rho_left", 0.0),
                r.number("reflections", "rho_right", 0.0),
                r.number("reflections", "max_bounces", 1, cast=int),
            )
        except ConfigError as exc:
            r.errors.extend(f"reflections.{f}" for f in exc.fields)
    analysis = _analysis(r)
    r.fail_if_errors("scenario")
    try:
        geometry = LineGeometry(l, a, x)
        cfg = ScenarioConfig(geometry, model, source, sample_rate=fs, duration=duration,
                             snr_db=snr, noise_seed=seed, desync_offsets=offsets,
                             reflections=reflections, analysis_f_max=analysis.f_max)
    except ConfigError as exc:
        names = {"geometry.x_over_l": "line.x_over_l", "sample_rate": "sampling.sample_rate",
                 "duration": "sampling.duration", "snr_db": "noise.snr_db",
                 "desync_offsets": "desync.offsets"}
        raise ConfigError("invalid scenario configuration",
                          [names.get(f, f) for f in exc.fields]) from None
    return cfg, analysis


def _seeds(r: _Reader, default):
    text = r.raw("matrix", "seeds")
    if text is None:
        return default
    text = text.strip()
    try:
        if "-" in text and "," not in text:
            lo, hi = (int(t) for t in text.split("-"))
            return tuple(range(lo, hi + 1))
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        r.errors.append("matrix.seeds")
        return default


def load_matrix(path_or_text) -> ExperimentMatrix:
    """Parse an experiment-matrix file.

    Keys live in ``[matrix]``; ``[line.<name>]`` sections define or override
    observed lines, ``[source.<kind>]`` override source parameters.
    """
    parser = _load(path_or_text)
    r = _Reader(parser)
    base = ExperimentMatrix()
    m = "matrix"

    known = {ln.name: ln for ln in DEFAULT_LINES}
    for section in parser.sections():
        if section.startswith("line."):
            name = section.split(".", 1)[1]
            default = known.get(name, LinePreset(name, 0.0))
            known[name] = LinePreset(
                name,
                r.number(section, "length_m", default.l, check=lambda v: v > 0),
                r.number(section, "a_over_l", default.a_over_l, check=lambda v: 0 < v < 1),
                r.number(section, "duration", default.duration, check=lambda v: v > 0),
            )
    names = [t.strip() for t in r.raw(m, "lines", ",".join(ln.name for ln in DEFAULT_LINES)).split(",") if t.strip()]
    lines = []
    for name in names:
        if name not in known or not known[name].l > 0:
            r.errors.append(f"line.{name}")
        else:
            lines.append(known[name])

    cases = base.cases
    if r.has(m, "cases"):
        cases = []
        for token in r.raw(m, "cases").split(","):
            if ":" not in token:
                r.errors.append("matrix.cases")
                continue
            medium, kind = (t.strip() for t in token.split(":", 1))
            cases.append((medium, kind.lower()))
        cases = tuple(cases)

    sources = {}
    for section in parser.sections():
        if section.startswith("source."):
            kind = section.split(".", 1)[1].lower()
            src = _source(r, section, kind)
            if src is not None:
                sources[kind] = src

    noise = base.noise_levels
    if r.has(m, "noise_levels"):
        noise = []
        for token in r.raw(m, "noise_levels").split(","):
            token = token.strip().lower()
            if token in _OFF:
                noise.append(None)
                continue
            try:
                noise.append(float(token))
            except ValueError:
                r.errors.append("matrix.noise_levels")
        noise = tuple(noise)

    desync = base.desync_cases
    if r.has(m, "desync"):
        desync = []
        for token in r.raw(m, "desync").split(";"):
            try:
                triple = tuple(float(t) for t in token.split(":"))
            except ValueError:
                triple = ()
            if len(triple) != 3:
                r.errors.append("matrix.desync")
                continue
            desync.append(triple)
        desync = tuple(desync)

    analysis = _analysis(r)
    values = dict(
        lines=tuple(lines), cases=cases,
        location_factors=r.number_list(m, "location_factors", base.location_factors),
        x_over_l=r.number_list(m, "x_over_l", None),
        noise_levels=noise, seeds=_seeds(r, base.seeds), desync_cases=desync,
        baseline_velocity_errors=r.number_list(m, "baseline_velocity_errors", base.baseline_velocity_errors),
        sample_rate=r.number("sampling", "sample_rate", base.sample_rate, check=lambda v: v > 0),
        sources=sources, analysis=analysis,
    )
    r.fail_if_errors("matrix")
    try:
        return ExperimentMatrix(**values)
    except ConfigError as exc:
        raise ConfigError("invalid matrix configuration", [f"matrix.{f}" for f in exc.fields]) from None
