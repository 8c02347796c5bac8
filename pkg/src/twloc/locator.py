"""Three-terminal localization and online line characterization.

Pipeline: modal waveforms -> Morlet CWT -> first-arrival maxima per scale ->
side of M2 -> time differences -> x(f)/l and alpha*l, beta*l, beta'*l ->
MAD-filtered average.

Errors carry the label of the pipeline stage that raised them: I source
records, II modal transform, III CWT, IV maxima, V side detection,
VI estimation and aggregation.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .cwt import (
    DEFAULT_OMEGA0,
    ArrivalFeature,
    Scalogram,
    arrival_features,
    central_frequencies,
)
from .errors import (
    AmbiguousSideError,
    InsufficientDataError,
    ParameterError,
    TwlocError,
)
from .simkit import MeasurementSet

MAD_SCALE = 1.4826


class Side(str, Enum):
    LEFT_OF_M2 = "LeftOfM2"
    RIGHT_OF_M2 = "RightOfM2"


@dataclass(frozen=True)
class AnalysisConfig:
    f_min: float = 100e3
    f_max: float = 1e6
    voices: int = 10
    omega0: float = DEFAULT_OMEGA0
    threshold_rel: float = 0.3
    min_peak_ratio: float = 10.0
    quorum: int = 5
    mad_k: float = 3.0
    side_margin: float = 0.55

    def __post_init__(self):
        if self.quorum < 1:
            raise ParameterError("quorum must be >= 1")
        if not 0.5 < self.side_margin <= 1.0:
            raise ParameterError("side_margin must be in (0.5, 1]")


@dataclass(frozen=True, eq=False)
class DeltaTimes:
    """t3(f) - t1(f) and t3(f) - t2(f) in the (possibly mirrored) frame."""

    frequencies: np.ndarray
    dt31: np.ndarray
    dt32: np.ndarray
    valid: np.ndarray
    sample_rate: float = math.inf


@dataclass(frozen=True, eq=False)
class CharacteristicEstimate:
    """Propagation characteristic scaled by the line length.

    ``beta_l`` is only known up to a constant 2*pi*k/(1 - a/l) offset; the
    residual phase is wrapped and unwrapped from the lowest frequency upwards.
    """

    frequencies: np.ndarray
    alpha_l: np.ndarray
    beta_l: np.ndarray
    beta_prime_l: np.ndarray
    valid: np.ndarray


@dataclass(eq=False)
class LocalizationReport:
    frequencies: np.ndarray
    x_over_l_per_freq: np.ndarray
    x_over_l_raw: np.ndarray
    valid: np.ndarray
    outliers: np.ndarray
    x_over_l: float
    sigma: float
    side: Side
    characteristic: CharacteristicEstimate
    n_valid: int
    n_outliers: int
    a_over_l: float
    line_length: float | None = None
    features: tuple[ArrivalFeature, ...] = ()
    x_over_l_amplitude: np.ndarray | None = None
    x_over_l_phase: np.ndarray | None = None
    scalograms: tuple[Scalogram, ...] | None = field(default=None, repr=False)

    @property
    def x_meters(self) -> float | None:
        return None if self.line_length is None else self.x_over_l * self.line_length

    def summary(self) -> str:
        line = f"x/l = {self.x_over_l:.4f} ± {self.sigma:.4f}"
        if self.line_length is not None:
            line += f" (x = {self.x_meters:.1f} m of {self.line_length:.1f} m)"
        return f"{line}; side={self.side.value}; valid={self.n_valid}; outliers={self.n_outliers}"


@contextmanager
def _step(label: str):
    try:
        yield
    except TwlocError as exc:
        if getattr(exc, "step", None) is None:
            exc.step = label
            exc.args = (f"step {label}: {exc.args[0] if exc.args else exc}",)
        raise


def _common_valid(features) -> np.ndarray:
    valid = np.ones(len(features[0]), dtype=bool)
    for feat in features:
        valid &= feat.valid
    return valid


def side_detect(features, a_over_l: float, quorum: int = 5, side_margin: float = 0.55,
                tolerance: float | None = None) -> Side:
    """Decide on which side of M2 the event happened.

    Per frequency, the event is left of M2 when
    ``(t3 - t2) * a/l >= (t1 - t2) * (1 - a/l)``; the frequencies then vote.
    Margins within ``tolerance`` (default one sample period) abstain.
    """
    f1, f2, f3 = features
    valid = _common_valid(features)
    if valid.sum() < quorum:
        raise InsufficientDataError(
            f"only {int(valid.sum())} frequencies valid on all devices (quorum {quorum})", step="V")
    if tolerance is None:
        tolerance = 1.0 / f1.sample_rate
    d_left = (f1.t_max - f2.t_max)[valid]
    d_right = (f3.t_max - f2.t_max)[valid]
    margin = d_right * a_over_l - d_left * (1.0 - a_over_l)
    left = int(np.sum(margin > tolerance))
    right = int(np.sum(margin < -tolerance))
    votes = left + right
    if votes == 0:
        raise AmbiguousSideError("event is at M2: no frequency separates the sections", step="V")
    share = left / votes
    if share >= side_margin:
        return Side.LEFT_OF_M2
    if share <= 1.0 - side_margin:
        return Side.RIGHT_OF_M2
    raise AmbiguousSideError(f"side vote split {left}:{right}", step="V")


def frame_features(features, side: Side, a_over_l: float):
    """Features and a/l in the frame where the event lies between M1 and M2."""
    if side is Side.RIGHT_OF_M2:
        return tuple(features[::-1]), 1.0 - a_over_l
    return tuple(features), a_over_l


def delta_times(features, side: Side = Side.LEFT_OF_M2) -> DeltaTimes:
    """t3 - t1 and t3 - t2 per frequency after mirroring for ``side``."""
    f1, f2, f3 = frame_features(features, side, 0.5)[0]
    valid = _common_valid((f1, f2, f3))
    dt31 = np.where(valid, f3.t_max - f1.t_max, np.nan)
    dt32 = np.where(valid, f3.t_max - f2.t_max, np.nan)
    return DeltaTimes(f1.frequencies.copy(), dt31, dt32, valid, f1.sample_rate)


def localize(dt: DeltaTimes, a_over_l: float):
    """Per-frequency relative location in the frame of ``dt``.

    Returns ``(x_clamped, x_raw, valid)``; frequencies with |dt32| below one
    sample period are invalid.
    """
    if not 0.0 < a_over_l < 1.0:
        raise ParameterError(f"a_over_l must be in (0, 1), got {a_over_l}")
    valid = dt.valid & np.isfinite(dt.dt32) & (np.abs(np.nan_to_num(dt.dt32)) >= 1.0 / dt.sample_rate)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = 0.5 - 0.5 * (1.0 - a_over_l) * dt.dt31 / dt.dt32
    raw = np.where(valid, raw, np.nan)
    return np.clip(raw, 0.0, 1.0), raw, valid


def localize_by_amplitude(features, a_over_l: float) -> np.ndarray:
    """Diagnostic x/l from log-amplitude ratios instead of delays (needs a lossy line)."""
    f1, f2, f3 = features
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.log(f1.amplitude / f3.amplitude) / np.log(f2.amplitude / f3.amplitude)
    x = 0.5 - 0.5 * (1.0 - a_over_l) * ratio
    return np.where(_common_valid(features) & np.isfinite(x), x, np.nan)


def _phase_row(fa: ArrivalFeature, fb: ArrivalFeature, dt: np.ndarray) -> np.ndarray:
    """Unwrapped d*beta(f) between two devices from phases at their peak samples."""
    f = fa.frequencies
    # phases were read at whole samples, so undo the sub-sample part of dt
    residual = fa.phase - fb.phase + 2 * np.pi * f * ((fb.t_sample - fa.t_sample) - dt)
    residual = np.angle(np.exp(1j * residual))
    ok = np.isfinite(residual)
    if ok.any():
        residual[ok] = np.unwrap(residual[ok])
    return 2 * np.pi * f * dt + residual


def localize_by_phase(features, a_over_l: float) -> np.ndarray:
    """Diagnostic x/l from the phase rows of the M1-M3 and M2-M3 transfers."""
    f1, f2, f3 = features
    valid = _common_valid(features)
    b31 = _phase_row(f1, f3, f3.t_max - f1.t_max)
    b32 = _phase_row(f2, f3, f3.t_max - f2.t_max)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = 0.5 - 0.5 * (1.0 - a_over_l) * b31 / b32
    return np.where(valid & np.isfinite(x), x, np.nan)


def characterize(f2: ArrivalFeature, f3: ArrivalFeature, a_over_l: float) -> CharacteristicEstimate:
    """alpha*l, beta*l and beta'*l from the event-free M2-M3 section.

    ``a_over_l`` and the features must already be in the frame where M2-M3
    is the clean section.
    """
    b = 1.0 - a_over_l
    valid = f2.valid & f3.valid & (f2.amplitude > 0) & (f3.amplitude > 0)
    dt32 = np.where(valid, f3.t_max - f2.t_max, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha_l = np.log(f2.amplitude / f3.amplitude) / b
    beta_prime_l = 2 * np.pi * dt32 / b
    beta_l = _phase_row(f2, f3, dt32) / b
    nan = np.nan
    return CharacteristicEstimate(
        f2.frequencies.copy(),
        np.where(valid, alpha_l, nan),
        np.where(valid, beta_l, nan),
        np.where(valid, beta_prime_l, nan),
        valid,
    )


def aggregate(x_per_freq, valid, quorum: int = 5, k: float = 3.0):
    """MAD outlier rejection followed by mean and standard deviation.

    Returns ``(x_hat, sigma, n_outliers, outlier_mask)``.
    """
    x = np.asarray(x_per_freq, dtype=float)
    valid = np.asarray(valid, dtype=bool) & np.isfinite(x)
    if valid.sum() < quorum:
        raise InsufficientDataError(f"{int(valid.sum())} valid estimates, quorum is {quorum}", step="VI")
    vals = x[valid]
    med = np.median(vals)
    mad = np.median(np.abs(vals - med))
    outliers = np.zeros(x.shape, dtype=bool)
    outliers[valid] = np.abs(vals - med) > k * MAD_SCALE * mad
    keep = valid & ~outliers
    if keep.sum() < quorum:
        raise InsufficientDataError(
            f"{int(keep.sum())} estimates left after outlier rejection, quorum is {quorum}", step="VI")
    return float(np.mean(x[keep])), float(np.std(x[keep])), int(outliers.sum()), outliers


@dataclass(frozen=True)
class BaselineResult:
    x: float
    extrapolated: bool
    frequency: float = math.nan

    def x_over_l(self, l: float) -> float:
        return self.x / l


def baseline_double_terminal(t1_arrival: float, t3_arrival: float, velocity_setting: float,
                             l: float) -> BaselineResult:
    """Classical two-ended estimate x = (l - v*(t3 - t1))/2, measured from M1."""
    if not velocity_setting > 0:
        raise ParameterError(f"velocity_setting must be > 0, got {velocity_setting}")
    x = 0.5 * (l - velocity_setting * (t3_arrival - t1_arrival))
    return BaselineResult(x, not 0.0 <= x <= l)


def baseline_from_features(f1: ArrivalFeature, f3: ArrivalFeature, velocity_setting: float,
                           l: float) -> BaselineResult:
    """Baseline using one timestamp per device at the highest common valid frequency."""
    valid = np.flatnonzero(f1.valid & f3.valid)
    if valid.size == 0:
        raise InsufficientDataError("no frequency valid on both M1 and M3")
    k = valid[-1]
    res = baseline_double_terminal(f1.t_max[k], f3.t_max[k], velocity_setting, l)
    return BaselineResult(res.x, res.extrapolated, float(f1.frequencies[k]))


def measure_features(ms: MeasurementSet, cfg: AnalysisConfig, keep_scalograms: bool = False):
    """CWT and arrival maxima for every device; returns ``(features, scalograms or None)``."""
    with _step("III"):
        grid = central_frequencies(cfg.f_min, cfg.f_max, cfg.voices, ms.sample_rate)
    feats, sgs = [], []
    for w in ms.waveforms:
        with _step("III"):
            feat, sg = arrival_features(w, grid, cfg.omega0, cfg.threshold_rel, cfg.min_peak_ratio)
        feats.append(feat)
        if keep_scalograms:
            sgs.append(sg)
    return tuple(feats), (tuple(sgs) if keep_scalograms else None)


def run_localization(ms: MeasurementSet, cfg: AnalysisConfig | None = None,
                     keep_scalograms: bool = False) -> LocalizationReport:
    """Locate the event and characterize the line from three device records."""
    cfg = cfg or AnalysisConfig()
    features, sgs = measure_features(ms, cfg, keep_scalograms)

    with _step("V"):
        side = side_detect(features, ms.a_over_l, cfg.quorum, cfg.side_margin)
    framed, a_frame = frame_features(features, side, ms.a_over_l)
    mirrored = side is Side.RIGHT_OF_M2

    with _step("VI"):
        dt = delta_times(framed)
        x_clamped, x_raw, valid = localize(dt, a_frame)
        characteristic = characterize(framed[1], framed[2], a_frame)
        x_amp = localize_by_amplitude(framed, a_frame)
        x_phase = localize_by_phase(framed, a_frame)
        if mirrored:
            x_clamped, x_raw = 1.0 - x_clamped, 1.0 - x_raw
            x_amp, x_phase = 1.0 - x_amp, 1.0 - x_phase
        x_hat, sigma, n_out, outliers = aggregate(x_raw, valid, cfg.quorum, cfg.mad_k)

    return LocalizationReport(
        frequencies=dt.frequencies,
        x_over_l_per_freq=x_clamped,
        x_over_l_raw=x_raw,
        valid=valid,
        outliers=outliers,
        x_over_l=float(np.clip(x_hat, 0.0, 1.0)),
        sigma=sigma,
        side=side,
        characteristic=characteristic,
        n_valid=int(valid.sum()),
        n_outliers=n_out,
        a_over_l=ms.a_over_l,
        line_length=ms.line_length,
        features=features,
        x_over_l_amplitude=x_amp,
        x_over_l_phase=x_phase,
        scalograms=sgs,
    )
