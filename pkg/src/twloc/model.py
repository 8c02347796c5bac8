"""Domain types: waveforms, line geometry, propagation models, event sources
and the Clarke modal transform."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DomainError, ParameterError

C0 = 299_792_458.0  # m/s


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled real time series starting at absolute time ``t0``."""

    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0

    def __post_init__(self):
        samples = _frozen_array(self.samples)
        if samples.ndim != 1 or samples.size == 0:
            raise ParameterError("waveform samples must be a non-empty 1-D array")
        if not np.all(np.isfinite(samples)):
            raise ParameterError("waveform samples must be finite")
        if not (self.sample_rate > 0 and math.isfinite(self.sample_rate)):
            raise ParameterError(f"sample_rate must be > 0, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))
        object.__setattr__(self, "t0", float(self.t0))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.sample_rate

    def with_samples(self, samples) -> "Waveform":
        return Waveform(samples, self.sample_rate, self.t0)

    def scaled(self, factor: float) -> "Waveform":
        return self.with_samples(self.samples * factor)


@dataclass(frozen=True)
class LineGeometry:
    """Observed line of length ``l`` with M1 at 0, M2 at ``a`` and M3 at ``l``.

    The locator only ever sees ``a_over_l``; ``l`` is used to report metres
    and ``x_over_l`` exists on the simulator side only.
    """

    l: float
    a_over_l: float
    x_over_l: float | None = None

    def __post_init__(self):
        if not self.l > 0:
            raise ParameterError(f"line length must be > 0, got {self.l}")
        if not 0.0 < self.a_over_l < 1.0:
            raise ParameterError(f"a_over_l must be in (0, 1), got {self.a_over_l}")
        if self.x_over_l is not None and not 0.0 < self.x_over_l < 1.0:
            raise ParameterError(f"x_over_l must be in (0, 1), got {self.x_over_l}")

    @property
    def a(self) -> float:
        return self.a_over_l * self.l

    @property
    def x(self) -> float:
        if self.x_over_l is None:
            raise ParameterError("geometry carries no event location")
        return self.x_over_l * self.l

    def mirrored(self) -> "LineGeometry":
        x = None if self.x_over_l is None else 1.0 - self.x_over_l
        return LineGeometry(self.l, 1.0 - self.a_over_l, x)


@dataclass(frozen=True)
class PropagationModel:
    """Parametric propagation constant gamma(f) = alpha(f) + i beta(f).

    alpha(f) = k_alpha_sqrt*sqrt(f) + k_alpha_lin*f             [Np/m]
    beta(f)  = 2*pi*f/v_inf + k_disp*sqrt(f)                     [rad/m]
    """

    v_inf: float
    k_alpha_sqrt: float = 0.0
    k_alpha_lin: float = 0.0
    k_disp: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        if not self.v_inf > 0:
            raise ParameterError(f"v_inf must be > 0, got {self.v_inf}")
        for attr in ("k_alpha_sqrt", "k_alpha_lin", "k_disp"):
            value = getattr(self, attr)
            if value < 0 or not math.isfinite(value):
                raise ParameterError(f"{attr} must be finite and >= 0, got {value}")

    @property
    def is_dispersive(self) -> bool:
        return self.k_disp > 0

    def alpha(self, f):
        f = _check_freq(f, strict=False)
        return self.k_alpha_sqrt * np.sqrt(f) + self.k_alpha_lin * f

    def beta(self, f):
        f = _check_freq(f, strict=False)
        return 2 * np.pi * f / self.v_inf + self.k_disp * np.sqrt(f)

    def beta_prime(self, f):
        """d beta / d f in rad*s/m."""
        f = _check_freq(f, strict=True)
        return 2 * np.pi / self.v_inf + self.k_disp / (2 * np.sqrt(f))

    def gamma(self, f):
        """Complex propagation constant; accepts negative f (conjugate symmetric)."""
        f = np.asarray(f, dtype=float)
        af = np.abs(f)
        alpha = self.k_alpha_sqrt * np.sqrt(af) + self.k_alpha_lin * af
        beta = 2 * np.pi * af / self.v_inf + self.k_disp * np.sqrt(af)
        return alpha + 1j * np.sign(f) * beta


def _check_freq(f, strict: bool):
    arr = np.asarray(f, dtype=float)
    bad = arr <= 0 if strict else arr < 0
    if np.any(bad) or not np.all(np.isfinite(arr)):
        bound = "> 0" if strict else ">= 0"
        raise DomainError(f"frequency must be finite and {bound}")
    return arr


def gamma_eval(model: PropagationModel, f):
    """Return ``(alpha [Np/m], beta [rad/m])`` at frequency ``f`` >= 0."""
    return model.alpha(f), model.beta(f)


def group_delay_per_meter(model: PropagationModel, f):
    """Group delay per metre, beta'(f)/(2 pi), in s/m."""
    return model.beta_prime(f) / (2 * np.pi)


# k_disp values are per metre; at 1e-6 rad/(m*sqrt(Hz)) the cable group delay
# is ~5 % above 1/v_inf at 100 kHz and ~1.6 % at 1 MHz.
PRESETS: dict[str, PropagationModel] = {
    "overhead": PropagationModel(v_inf=2.95e8, k_alpha_sqrt=3e-9, k_disp=2e-7, name="overhead"),
    "cable": PropagationModel(v_inf=C0 / math.sqrt(2.3), k_alpha_sqrt=2e-8, k_disp=1e-6, name="cable"),
    "lossless": PropagationModel(v_inf=2e8, name="lossless"),
}


def preset(name: str) -> PropagationModel:
    try:
        return PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown model preset {name!r}; choose from {sorted(PRESETS)}") from None


class SourceKind(str, Enum):
    PD = "pd"
    LIGHTNING = "lightning"


@dataclass(frozen=True)
class SourceParams:
    kind: SourceKind
    amplitude: float = 1.0
    tau1: float = 50e-9
    tau2: float = 200e-9
    n: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SourceKind(self.kind))
        if not self.amplitude > 0:
            raise ParameterError(f"amplitude must be > 0, got {self.amplitude}")
        if not (self.tau1 > 0 and self.tau2 > 0):
            raise ParameterError("tau1 and tau2 must be > 0")
        if self.kind is SourceKind.PD and not self.tau1 < self.tau2:
            raise ParameterError(f"PD source needs tau1 < tau2, got {self.tau1} >= {self.tau2}")
        if self.kind is SourceKind.LIGHTNING and not self.n >= 1:
            raise ParameterError(f"Heidler steepness n must be >= 1, got {self.n}")

    @classmethod
    def pd(cls, amplitude: float = 1.0, tau1: float = 50e-9, tau2: float = 200e-9) -> "SourceParams":
        return cls(SourceKind.PD, amplitude, tau1, tau2)

    @classmethod
    def lightning(cls, amplitude: float = 1.0, tau1: float = 1.8e-6, tau2: float = 95e-6,
                  n: float = 10.0) -> "SourceParams":
        return cls(SourceKind.LIGHTNING, amplitude, tau1, tau2, n)

    @property
    def eta(self) -> float:
        """Heidler peak-correction factor."""
        return math.exp(-(self.tau1 / self.tau2) * (self.n * self.tau2 / self.tau1) ** (1.0 / self.n))


def _time_axis(sample_rate: float, duration: float, delay: float) -> np.ndarray:
    n = int(round(duration * sample_rate))
    if n < 2:
        raise ParameterError("duration*sample_rate must be >= 2")
    if not 0 <= delay < duration:
        raise ParameterError(f"launch delay {delay} outside [0, duration)")
    return np.arange(n) / sample_rate - delay


def pd_waveform(params: SourceParams, sample_rate: float, duration: float,
                delay: float = 0.0) -> Waveform:
    """Double-exponential partial-discharge pulse, normalised to peak ``amplitude``.

    ``delay`` shifts the pulse onset; samples before it are zero.
    """
    if params.kind is not SourceKind.PD:
        raise ParameterError("pd_waveform needs a PD source")
    t1, t2 = params.tau1, params.tau2
    t_peak = t1 * t2 / (t2 - t1) * math.log(t2 / t1)
    norm = math.exp(-t_peak / t2) - math.exp(-t_peak / t1)
    t = _time_axis(sample_rate, duration, delay)
    tp = np.clip(t, 0.0, None)
    y = np.where(t >= 0, np.exp(-tp / t2) - np.exp(-tp / t1), 0.0)
    return Waveform(params.amplitude / norm * y, sample_rate, 0.0)


def heidler_waveform(params: SourceParams, sample_rate: float, duration: float,
                     delay: float = 0.0) -> Waveform:
    """Heidler lightning current (A/eta) * (t/tau1)^n / (1 + (t/tau1)^n) * exp(-t/tau2)."""
    if params.kind is not SourceKind.LIGHTNING:
        raise ParameterError("heidler_waveform needs a lightning source")
    t = _time_axis(sample_rate, duration, delay)
    tp = np.clip(t, 0.0, None)
    r = (tp / params.tau1) ** params.n
    y = np.where(t >= 0, r / (1.0 + r) * np.exp(-tp / params.tau2), 0.0)
    return Waveform(params.amplitude / params.eta * y, sample_rate, 0.0)


def source_waveform(params: SourceParams, sample_rate: float, duration: float,
                    delay: float = 0.0) -> Waveform:
    if params.kind is SourceKind.PD:
        return pd_waveform(params, sample_rate, duration, delay)
    return heidler_waveform(params, sample_rate, duration, delay)


# power-invariant (orthonormal) Clarke matrix: rows are mode 0, alpha, beta
_S2, _S3, _S6 = math.sqrt(2.0), math.sqrt(3.0), math.sqrt(6.0)
CLARKE = np.array([
    [1 / _S3, 1 / _S3, 1 / _S3],
    [2 / _S6, -1 / _S6, -1 / _S6],
    [0.0, 1 / _S2, -1 / _S2],
])


@dataclass(frozen=True, eq=False)
class ThreePhaseFrame:
    phase_a: np.ndarray
    phase_b: np.ndarray
    phase_c: np.ndarray

    def __post_init__(self):
        arrays = [np.atleast_1d(_frozen_array(getattr(self, k))) for k in ("phase_a", "phase_b", "phase_c")]
        if len({a.shape for a in arrays}) != 1:
            raise ParameterError("phase arrays must share a shape")
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ParameterError("phase values must be finite")
        for key, arr in zip(("phase_a", "phase_b", "phase_c"), arrays):
            object.__setattr__(self, key, arr)

    def stacked(self) -> np.ndarray:
        return np.vstack([self.phase_a, self.phase_b, self.phase_c])


def clarke_transform(frame: ThreePhaseFrame):
    """Return ``(mode0, mode_alpha, mode_beta)`` arrays."""
    m0, ma, mb = CLARKE @ frame.stacked()
    return m0, ma, mb


def clarke_inverse(mode0, mode_alpha, mode_beta) -> ThreePhaseFrame:
    modes = np.vstack([np.atleast_1d(np.asarray(m, dtype=float)) for m in (mode0, mode_alpha, mode_beta)])
    a, b, c = CLARKE.T @ modes
    return ThreePhaseFrame(a, b, c)


def modal_waveform(frame: ThreePhaseFrame, sample_rate: float, t0: float = 0.0,
                   mode: str = "0") -> Waveform:
    """Clarke-transform a sampled three-phase record and keep one modal channel."""
    index = {"0": 0, "alpha": 1, "beta": 2}
    if mode not in index:
        raise ParameterError(f"mode must be one of {sorted(index)}, got {mode!r}")
    return Waveform(clarke_transform(frame)[index[mode]], sample_rate, t0)
