"""Complex Morlet CWT and per-scale arrival features."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import ParameterError, WindowError
from .model import Waveform

DEFAULT_OMEGA0 = 10.0
SUPPORT_SIGMAS = 8.0


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    central_frequencies: np.ndarray
    voices_per_octave: int

    def __post_init__(self):
        f = np.array(self.central_frequencies, dtype=float)
        if f.ndim != 1 or f.size == 0 or np.any(f <= 0) or np.any(np.diff(f) <= 0):
            raise ParameterError("central frequencies must be positive and strictly increasing")
        f.setflags(write=False)
        object.__setattr__(self, "central_frequencies", f)

    def __len__(self) -> int:
        return self.central_frequencies.size

    @property
    def f(self) -> np.ndarray:
        return self.central_frequencies


def central_frequencies(f_min: float, f_max: float, voices: int,
                        sample_rate: float | None = None) -> FrequencyGrid:
    """Log2-spaced grid with ``voices`` points per octave, endpoints included.

    The point count is ``round(octaves * voices) + 1``; the ratio between
    neighbours is exactly 2**(1/voices) when the band spans a whole number of
    octaves and is stretched slightly otherwise.
    """
    if voices < 1 or int(voices) != voices:
        raise ParameterError(f"voices must be a positive integer, got {voices}")
    if not 0 < f_min < f_max:
        raise ParameterError(f"need 0 < f_min < f_max, got ({f_min}, {f_max})")
    if sample_rate is not None and not f_max < sample_rate / 2:
        raise ParameterError(f"f_max {f_max} must be below Nyquist {sample_rate / 2}")
    n = int(round(math.log2(f_max / f_min) * voices)) + 1
    n = max(n, 2)
    f = f_min * (f_max / f_min) ** (np.arange(n) / (n - 1))
    f[0], f[-1] = f_min, f_max
    return FrequencyGrid(f, int(voices))


def morlet_scale(f, omega0: float = DEFAULT_OMEGA0):
    """Wavelet scale in seconds whose centre frequency is ``f``."""
    return omega0 / (2 * np.pi * np.asarray(f, dtype=float))


def wavelet_support(f, omega0: float = DEFAULT_OMEGA0):
    """Support (``SUPPORT_SIGMAS`` envelope standard deviations) in seconds."""
    return SUPPORT_SIGMAS * morlet_scale(f, omega0)


@dataclass(frozen=True, eq=False)
class Scalogram:
    """Complex CWT coefficients, shape ``(n_freqs, n_samples)``."""

    coefficients: np.ndarray
    grid: FrequencyGrid
    sample_rate: float
    t0: float = 0.0
    omega0: float = DEFAULT_OMEGA0

    def __post_init__(self):
        if self.coefficients.shape[0] != len(self.grid):
            raise ParameterError("coefficient rows must match the frequency grid")

    @property
    def n_samples(self) -> int:
        return self.coefficients.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_samples) / self.sample_rate

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.coefficients)

    def edge_samples(self) -> np.ndarray:
        """Untrusted samples at each end, one wavelet support per scale."""
        return np.ceil(wavelet_support(self.grid.f, self.omega0) * self.sample_rate).astype(int)


def cwt_morlet(w: Waveform, grid: FrequencyGrid, omega0: float = DEFAULT_OMEGA0) -> Scalogram:
    """Continuous wavelet transform with an L2-normalised complex Morlet.

    W(t, s) = integral x(u) s**-0.5 conj(g((u - t)/s)) du with
    g(u) = pi**-0.25 exp(i omega0 u) exp(-u**2/2) and s = omega0/(2 pi f).
    Each scale is one FFT product, so rows are independent of each other.
    """
    if omega0 < 5:
        raise ParameterError(f"omega0 must be >= 5, got {omega0}")
    if grid.f[-1] >= w.sample_rate / 2:
        raise ParameterError("grid extends beyond the Nyquist frequency")
    support = float(wavelet_support(grid.f[0], omega0))
    if w.duration < 2 * support:
        raise WindowError(
            f"{w.duration:.3e} s window is shorter than twice the wavelet support "
            f"{support:.3e} s at {grid.f[0]:.4g} Hz"
        )
    n = len(w)
    nfft = sfft.next_fast_len(n + int(math.ceil(support * w.sample_rate)))
    spectrum = sfft.fft(w.samples, nfft)
    omega = 2 * np.pi * sfft.fftfreq(nfft, w.dt)
    coef = np.empty((len(grid), n), dtype=complex)
    norm = math.pi ** -0.25 * math.sqrt(2 * math.pi)
    for k, s in enumerate(morlet_scale(grid.f, omega0)):
        kernel = norm * math.sqrt(s) * np.exp(-0.5 * (s * omega - omega0) ** 2)
        coef[k] = sfft.ifft(spectrum * kernel)[:n]
    return Scalogram(coef, grid, w.sample_rate, w.t0, omega0)


@dataclass(frozen=True, eq=False)
class ArrivalWindows:
    """Per-frequency half-open index ranges ``[start, stop)`` around the first arrival."""

    start: np.ndarray
    stop: np.ndarray
    valid: np.ndarray


def detect_first_arrival(sg: Scalogram, threshold_rel: float = 0.3) -> ArrivalWindows:
    """Bracket the first wave arrival at each scale.

    The crossing is the earliest trusted sample where |W| exceeds
    ``threshold_rel`` times the trusted maximum at that scale; the window runs
    from half a wavelet support before it to one support after it, so later
    reflections are excluded.
    """
    if not 0 < threshold_rel < 1:
        raise ParameterError(f"threshold_rel must be in (0, 1), got {threshold_rel}")
    nf, n = sg.coefficients.shape
    edges = sg.edge_samples()
    start = np.zeros(nf, dtype=int)
    stop = np.zeros(nf, dtype=int)
    valid = np.zeros(nf, dtype=bool)
    for k in range(nf):
        lo, hi = edges[k], n - edges[k]
        if hi - lo < 3:
            continue
        mag = np.abs(sg.coefficients[k, lo:hi])
        peak = mag.max()
        if not peak > 0:
            continue
        cross = lo + int(np.argmax(mag > threshold_rel * peak))
        support = edges[k]
        start[k] = max(lo, cross - support // 2)
        stop[k] = min(hi, cross + support + 1)
        valid[k] = stop[k] - start[k] >= 3
    return ArrivalWindows(start, stop, valid)


@dataclass(frozen=True, eq=False)
class ArrivalFeature:
    """Per-frequency maximum of |W| inside the arrival window."""

    frequencies: np.ndarray
    t_max: np.ndarray
    amplitude: np.ndarray
    phase: np.ndarray
    index: np.ndarray
    valid: np.ndarray
    sample_rate: float
    t0: float = 0.0

    def __len__(self) -> int:
        return self.frequencies.size

    @property
    def t_sample(self) -> np.ndarray:
        """Absolute time of the whole sample at which ``phase`` was read."""
        return np.where(self.valid, self.t0 + self.index / self.sample_rate, np.nan)


def parabolic_peak(y_m: float, y_0: float, y_p: float) -> tuple[float, float]:
    """Vertex offset (in samples) and height of the parabola through three points."""
    denom = y_m - 2.0 * y_0 + y_p
    if denom >= 0:
        return 0.0, y_0
    delta = 0.5 * (y_m - y_p) / denom
    return delta, y_0 - 0.25 * (y_m - y_p) * delta


def scale_maxima(sg: Scalogram, windows: ArrivalWindows, min_peak_ratio: float = 10.0,
                 interpolate: bool = True) -> ArrivalFeature:
    """Time, amplitude and phase of the |W| maximum inside each window.

    A scale is marked invalid when the peak is on the window boundary (no local
    maximum) or when it is not at least ``min_peak_ratio`` times the median
    |W| of the trusted region, which rejects noise-only scales.
    """
    nf, n = sg.coefficients.shape
    edges = sg.edge_samples()
    t_max = np.full(nf, np.nan)
    amp = np.full(nf, np.nan)
    phase = np.full(nf, np.nan)
    index = np.full(nf, -1, dtype=int)
    valid = np.zeros(nf, dtype=bool)
    for k in range(nf):
        if not windows.valid[k]:
            continue
        row = sg.coefficients[k]
        mag = np.abs(row[windows.start[k]:windows.stop[k]])
        i = int(np.argmax(mag))
        if i == 0 or i == mag.size - 1:
            continue
        floor = np.median(np.abs(row[edges[k]:n - edges[k]]))
        if not mag[i] >= min_peak_ratio * floor:
            continue
        delta, peak = parabolic_peak(mag[i - 1], mag[i], mag[i + 1]) if interpolate else (0.0, mag[i])
        idx = windows.start[k] + i
        t_max[k] = sg.t0 + (idx + delta) / sg.sample_rate
        amp[k] = peak
        phase[k] = float(np.angle(row[idx]))
        index[k] = idx
        valid[k] = True
    return ArrivalFeature(sg.grid.f.copy(), t_max, amp, phase, index, valid, sg.sample_rate, sg.t0)


def arrival_features(w: Waveform, grid: FrequencyGrid, omega0: float = DEFAULT_OMEGA0,
                     threshold_rel: float = 0.3, min_peak_ratio: float = 10.0):
    """CWT -> first-arrival windows -> maxima for one waveform.

    Returns ``(features, scalogram)``.
    """
    sg = cwt_morlet(w, grid, omega0)
    windows = detect_first_arrival(sg, threshold_rel)
    return scale_maxima(sg, windows, min_peak_ratio), sg


def write_scalogram_csv(sg: Scalogram, path, step: int = 1) -> None:
    """Dump |W| with a header row of central frequencies and one row per time sample."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s"] + [repr(float(f)) for f in sg.grid.f])
        mag = sg.magnitude
        for j in range(0, sg.n_samples, step):
            writer.writerow([repr(float(sg.times[j]))] + [repr(float(v)) for v in mag[:, j]])
