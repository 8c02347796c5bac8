"""Synthetic three-device traveling-wave measurements.

The event signal is propagated to each device in the Fourier domain with
``S(f) = exp(-d * gamma(f)) * S0(f)``, then optionally degraded with terminal
reflections, white noise and clock offsets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft as sfft

from .errors import ConfigError, ParameterError, WindowError
from .model import (
    LineGeometry,
    PropagationModel,
    SourceParams,
    Waveform,
    source_waveform,
)

DEVICE_IDS = ("M1", "M2", "M3")


@dataclass(frozen=True)
class Reflections:
    rho_left: float = 0.0
    rho_right: float = 0.0
    max_bounces: int = 1

    def __post_init__(self):
        bad = [k for k in ("rho_left", "rho_right") if not -1.0 <= getattr(self, k) <= 1.0]
        if self.max_bounces < 0:
            bad.append("max_bounces")
        if bad:
            raise ConfigError("invalid reflection settings", bad)


@dataclass(frozen=True)
class ScenarioConfig:
    geometry: LineGeometry
    model: PropagationModel
    source: SourceParams
    sample_rate: float = 100e6
    duration: float = 1e-3
    snr_db: float | None = None
    noise_seed: int = 0
    desync_offsets: tuple[float, float, float] = (0.0, 0.0, 0.0)
    reflections: Reflections | None = None
    analysis_f_max: float = 1e6

    def __post_init__(self):
        object.__setattr__(self, "desync_offsets", tuple(float(o) for o in self.desync_offsets))
        self.validate()

    def validate(self) -> None:
        bad = []
        if self.geometry.x_over_l is None:
            bad.append("geometry.x_over_l")
        if not self.sample_rate >= 2 * self.analysis_f_max:
            bad.append("sample_rate")
        bounces = self.reflections.max_bounces if self.reflections else 0
        if not self.duration >= self.geometry.l / self.model.v_inf * (1 + bounces):
            bad.append("duration")
        if self.snr_db is not None and not math.isfinite(self.snr_db):
            if self.snr_db != math.inf:
                bad.append("snr_db")
        if len(self.desync_offsets) != 3 or any(abs(o) >= self.duration / 10 for o in self.desync_offsets):
            bad.append("desync_offsets")
        if bad:
            raise ConfigError("invalid scenario", bad)

    @property
    def launch_time(self) -> float:
        return self.duration / 4


@dataclass(frozen=True)
class Truth:
    x_over_l: float
    model: PropagationModel
    l: float


@dataclass(frozen=True)
class MeasurementSet:
    """Waveforms recorded at M1 (position 0), M2 (position a) and M3 (position l)."""

    waveforms: tuple[Waveform, Waveform, Waveform]
    a_over_l: float
    line_length: float | None = None
    device_ids: tuple[str, str, str] = DEVICE_IDS
    truth: Truth | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.waveforms) != 3:
            raise ParameterError(f"a measurement set needs 3 waveforms, got {len(self.waveforms)}")
        object.__setattr__(self, "waveforms", tuple(self.waveforms))
        rates = {w.sample_rate for w in self.waveforms}
        if len(rates) != 1:
            raise ParameterError("all waveforms must share a sample rate")
        if len({len(w) for w in self.waveforms}) != 1:
            raise ParameterError("all waveforms must share a length")
        if not 0.0 < self.a_over_l < 1.0:
            raise ParameterError(f"a_over_l must be in (0, 1), got {self.a_over_l}")

    @property
    def sample_rate(self) -> float:
        return self.waveforms[0].sample_rate

    def scaled(self, factor: float) -> "MeasurementSet":
        return replace(self, waveforms=tuple(w.scaled(factor) for w in self.waveforms))

    def mirrored(self) -> "MeasurementSet":
        """Swap M1 and M3 and reflect the geometry about the line midpoint."""
        w1, w2, w3 = self.waveforms
        truth = self.truth
        if truth is not None:
            truth = replace(truth, x_over_l=1.0 - truth.x_over_l)
        return replace(self, waveforms=(w3, w2, w1), a_over_l=1.0 - self.a_over_l,
                       device_ids=self.device_ids[::-1], truth=truth)


def pulse_support(w: Waveform, level: float = 0.5) -> float:
    """Time from the window start until the pulse tail decays below ``level`` of its peak."""
    mag = np.abs(w.samples)
    peak_idx = int(np.argmax(mag))
    below = np.flatnonzero(mag[peak_idx:] < level * mag[peak_idx])
    end = peak_idx + (below[0] if below.size else mag.size - peak_idx)
    return end / w.sample_rate


def _transfer(model: PropagationModel, freqs: np.ndarray, paths) -> np.ndarray:
    gamma = model.gamma(freqs)
    h = np.zeros(freqs.shape, dtype=complex)
    for distance, gain in paths:
        h += gain * np.exp(-distance * gamma)
    return h


def _propagate_paths(source: Waveform, model: PropagationModel, paths) -> Waveform:
    n = len(source)
    nfft = sfft.next_fast_len(2 * n, real=True)
    spectrum = sfft.rfft(source.samples, nfft)
    freqs = sfft.rfftfreq(nfft, source.dt)
    out = sfft.irfft(spectrum * _transfer(model, freqs, paths), nfft)[:n]
    return source.with_samples(out)


def propagate(source: Waveform, model: PropagationModel, distance: float) -> Waveform:
    """Propagate ``source`` over ``distance`` metres of line.

    Negative frequencies use conj(gamma(|f|)) implicitly through the real FFT,
    so the output is real. Raises :class:`WindowError` when the delayed pulse
    no longer fits in the window.
    """
    if distance < 0:
        raise ParameterError(f"distance must be >= 0, got {distance}")
    if distance == 0:
        return source
    _check_window(source, model, distance)
    return _propagate_paths(source, model, [(distance, 1.0)])


def _check_window(source: Waveform, model: PropagationModel, max_distance: float) -> None:
    delay = max_distance / model.v_inf
    if delay > source.duration - pulse_support(source):
        raise WindowError(
            f"pulse delayed by {delay:.3e} s leaves the {source.duration:.3e} s window"
        )


def reflection_paths(position: float, x: float, l: float, refl: Reflections | None):
    """Path lengths and gains from an event at ``x`` to a device at ``position``.

    Terminations sit at 0 and ``l``. A reflection is recorded only after it has
    travelled back along the line, so a device at a terminal does not see its own
    coincident reflection.
    """
    paths = [(abs(position - x), 1.0)]
    if refl is None or refl.max_bounces == 0:
        return paths
    rho = {0.0: refl.rho_left, l: refl.rho_right}
    # each entry: (end just reached, accumulated distance, gain)
    fronts = [(0.0, x, 1.0), (l, l - x, 1.0)]
    for _ in range(refl.max_bounces):
        nxt = []
        for end, dist, gain in fronts:
            gain = gain * rho[end]
            if gain == 0.0:
                continue
            extra = abs(position - end)
            if extra > 0:
                paths.append((dist + extra, gain))
            other = l if end == 0.0 else 0.0
            nxt.append((other, dist + l, gain))
        fronts = nxt
    return paths


def add_awgn(w: Waveform, snr_db: float | None, peak_ref: float, seed) -> Waveform:
    """Add white Gaussian noise with sigma = peak_ref * 10**(-snr_db/20).

    The noise floor is referenced to ``peak_ref`` (the pristine source peak), so
    every device sees the same absolute noise level.
    """
    if snr_db is None or snr_db == math.inf:
        return w
    if not math.isfinite(snr_db):
        raise ParameterError(f"snr_db must be finite or +inf, got {snr_db}")
    if not peak_ref > 0:
        raise ParameterError(f"peak_ref must be > 0, got {peak_ref}")
    sigma = peak_ref * 10.0 ** (-snr_db / 20.0)
    rng = np.random.default_rng(seed)
    return w.with_samples(w.samples + rng.normal(0.0, sigma, size=len(w)))


def shift_samples(w: Waveform, n: int) -> Waveform:
    """Delay the content of ``w`` by ``n`` whole samples, zero-filling the gap."""
    if n == 0:
        return w
    out = np.zeros(len(w))
    if n > 0:
        out[n:] = w.samples[:-n]
    else:
        out[:n] = w.samples[-n:]
    return w.with_samples(out)


def apply_desync(ms: MeasurementSet, offsets) -> MeasurementSet:
    """Shift each device's record by ``round(offset * sample_rate)`` samples.

    A positive offset makes that device report the wave later.
    """
    offsets = tuple(float(o) for o in offsets)
    if len(offsets) != 3:
        raise ParameterError("need one offset per device")
    duration = ms.waveforms[0].duration
    if any(abs(o) >= duration / 10 for o in offsets):
        raise ParameterError(f"desync offsets must be smaller than duration/10 = {duration / 10:.3e} s")
    shifted = tuple(
        shift_samples(w, int(round(o * w.sample_rate))) for w, o in zip(ms.waveforms, offsets)
    )
    return replace(ms, waveforms=shifted)


def synthesize_measurements(cfg: ScenarioConfig) -> MeasurementSet:
    """Simulate the three device records for one scenario."""
    geom = cfg.geometry
    l, a, x = geom.l, geom.a, geom.x
    src = source_waveform(cfg.source, cfg.sample_rate, cfg.duration, delay=cfg.launch_time)

    waves = []
    for position in (0.0, a, l):
        paths = reflection_paths(position, x, l, cfg.reflections)
        _check_window(src, cfg.model, max(d for d, _ in paths))
        waves.append(_propagate_paths(src, cfg.model, paths))

    ms = MeasurementSet(
        tuple(waves), geom.a_over_l, line_length=l,
        truth=Truth(geom.x_over_l, cfg.model, l),
    )
    if any(cfg.desync_offsets):
        ms = apply_desync(ms, cfg.desync_offsets)
    if cfg.snr_db is not None:
        noisy = tuple(
            add_awgn(w, cfg.snr_db, cfg.source.amplitude, (cfg.noise_seed, i))
            for i, w in enumerate(ms.waveforms)
        )
        ms = replace(ms, waveforms=noisy)
    return ms
