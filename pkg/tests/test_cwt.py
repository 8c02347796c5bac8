import math

import numpy as np
import pytest

from twloc.cwt import (
    arrival_features,
    central_frequencies,
    cwt_morlet,
    detect_first_arrival,
    morlet_scale,
    parabolic_peak,
    scale_maxima,
    wavelet_support,
)
from twloc.errors import ParameterError, WindowError
from twloc.model import PropagationModel, SourceParams, Waveform, pd_waveform, preset
from twloc.simkit import propagate, shift_samples

FS = 100e6
GRID = central_frequencies(100e3, 1e6, 10)


def pd_pulse(n=50_000, delay=200e-6):
    # the pulse must sit beyond one wavelet support (127 us at 100 kHz) from the edges
    return pd_waveform(SourceParams.pd(), FS, n / FS, delay=delay)


class TestGrid:
    def test_endpoints_and_count(self):
        g = central_frequencies(100e3, 1e6, 10)
        assert g.f[0] == 100e3 and g.f[-1] == 1e6
        assert len(g) == round(math.log2(10) * 10) + 1

    def test_whole_octaves_have_exact_ratio(self):
        g = central_frequencies(100e3, 800e3, 4)
        assert len(g) == 13
        np.testing.assert_allclose(g.f[1:] / g.f[:-1], 2 ** 0.25, rtol=1e-12)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ParameterError):
            central_frequencies(1e6, 1e5, 10)
        with pytest.raises(ParameterError):
            central_frequencies(1e5, 1e6, 0)
        with pytest.raises(ParameterError):
            central_frequencies(1e5, 1e6, 10, sample_rate=1e6)

    def test_scale_and_support(self):
        assert morlet_scale(1e6, 10.0) == pytest.approx(10.0 / (2 * math.pi * 1e6))
        assert wavelet_support(1e6, 10.0) == pytest.approx(8 * 10.0 / (2 * math.pi * 1e6))


class TestTransform:
    def test_tone_magnitude(self):
        # a unit cosine gives |W| = 0.5 * pi**-0.25 * sqrt(2 pi) * sqrt(s) at the matching scale
        f0 = 500e3
        n = 20_000
        t = np.arange(n) / FS
        w = Waveform(np.cos(2 * np.pi * f0 * t), FS)
        grid = central_frequencies(250e3, 1e6, 4)
        sg = cwt_morlet(w, grid, 10.0)
        k = int(np.argmin(np.abs(grid.f - f0)))
        edge = sg.edge_samples()[k]
        mag = sg.magnitude[k, edge:n - edge]
        s = morlet_scale(f0, 10.0)
        expected = 0.5 * math.pi ** -0.25 * math.sqrt(2 * math.pi) * math.sqrt(s)
        np.testing.assert_allclose(mag, expected, rtol=1e-3)

    def test_tone_phase_advances(self):
        f0 = 500e3
        t = np.arange(20_000) / FS
        sg = cwt_morlet(Waveform(np.cos(2 * np.pi * f0 * t), FS), central_frequencies(250e3, 1e6, 4), 10.0)
        row = sg.coefficients[4, 5000:5100]
        dphi = np.angle(row[1:] / row[:-1])
        np.testing.assert_allclose(dphi, 2 * np.pi * f0 / FS, rtol=1e-3)

    def test_linearity(self):
        rng = np.random.default_rng(1)
        x, y = rng.normal(size=8000), rng.normal(size=8000)
        grid = central_frequencies(1e6, 5e6, 4)
        wx = cwt_morlet(Waveform(x, FS), grid).coefficients
        wy = cwt_morlet(Waveform(y, FS), grid).coefficients
        wz = cwt_morlet(Waveform(2 * x - 3 * y, FS), grid).coefficients
        np.testing.assert_allclose(wz, 2 * wx - 3 * wy, atol=1e-9)

    def test_shift_covariance(self):
        w = pd_pulse()
        sg0 = cwt_morlet(w, GRID)
        sg1 = cwt_morlet(shift_samples(w, 250), GRID)
        edge = sg0.edge_samples().max()
        a = sg0.coefficients[:, edge:-edge - 250]
        b = sg1.coefficients[:, edge + 250:-edge]
        np.testing.assert_allclose(b, a, atol=1e-9 * np.abs(a).max())

    def test_white_noise_energy_is_scale_invariant(self):
        rng = np.random.default_rng(2)
        w = Waveform(rng.normal(size=400_000), FS)
        sg = cwt_morlet(w, GRID)
        edge = sg.edge_samples()
        energy = np.array([np.mean(sg.magnitude[k, edge[k]:-edge[k]] ** 2) for k in range(len(GRID))])
        # unit-variance white noise: E|W|**2 = dt at every scale
        np.testing.assert_allclose(energy, 1 / FS, rtol=0.25)
        assert energy.mean() == pytest.approx(1 / FS, rel=0.05)

    def test_preconditions(self):
        with pytest.raises(ParameterError):
            cwt_morlet(pd_pulse(), GRID, omega0=4.0)
        with pytest.raises(WindowError):
            cwt_morlet(Waveform(np.zeros(1000), FS), GRID)
        with pytest.raises(ParameterError):
            cwt_morlet(Waveform(np.zeros(1000), 1e6), central_frequencies(1e5, 6e5, 2))


class TestFeatures:
    def test_all_scales_valid_for_clean_pulse(self):
        feats, _ = arrival_features(pd_pulse(), GRID)
        assert feats.valid.all()

    def test_delayed_copy(self):
        w = pd_pulse()
        f0, _ = arrival_features(w, GRID)
        f1, _ = arrival_features(shift_samples(w, 321), GRID)
        np.testing.assert_allclose(f1.t_max - f0.t_max, 321 / FS, atol=1e-12)
        np.testing.assert_allclose(f1.amplitude, f0.amplitude, rtol=1e-9)
        np.testing.assert_array_equal(f1.index - f0.index, 321)

    def test_scaled_copy(self):
        w = pd_pulse()
        f0, _ = arrival_features(w, GRID)
        f1, _ = arrival_features(w.scaled(-2.5), GRID)
        np.testing.assert_allclose(f1.t_max, f0.t_max, atol=1e-15)
        np.testing.assert_allclose(f1.amplitude, 2.5 * f0.amplitude, rtol=1e-12)
        # a sign flip rotates the phase by pi
        dphi = np.angle(np.exp(1j * (f1.phase - f0.phase)))
        np.testing.assert_allclose(np.abs(dphi), np.pi, atol=1e-9)

    @pytest.mark.parametrize("name", ["cable", "overhead"])
    def test_delay_tracks_group_delay(self, name):
        m = preset(name)
        d = 20e3
        src = pd_waveform(SourceParams.pd(), FS, 500e-6, delay=150e-6)
        f_src, _ = arrival_features(src, GRID)
        f_out, _ = arrival_features(propagate(src, m, d), GRID)
        measured = f_out.t_max - f_src.t_max
        oracle = d * m.beta_prime(GRID.f) / (2 * np.pi)
        np.testing.assert_allclose(measured, oracle, rtol=0.05)

    def test_later_stronger_pulse_is_excluded(self):
        first = pd_pulse().samples
        late = 3.0 * shift_samples(pd_pulse(), 8000).samples  # 80 us later
        feats, _ = arrival_features(Waveform(first + late, FS), GRID)
        alone, _ = arrival_features(pd_pulse(), GRID)
        # scales whose window (plus the late pulse's own wavelet spread) ends before 80 us
        ok = 1.5 * wavelet_support(GRID.f) < 80e-6
        assert ok.sum() > len(GRID) // 2
        assert feats.valid[ok].all()
        np.testing.assert_allclose(feats.t_max[ok], alone.t_max[ok], atol=0.01 / FS)

    def test_noise_only_is_invalid(self):
        rng = np.random.default_rng(3)
        feats, _ = arrival_features(Waveform(rng.normal(size=40_000), FS), GRID)
        assert not feats.valid.any()

    def test_interpolation_beats_integer_peaks(self):
        m = PropagationModel(v_inf=2e8)
        src = pd_waveform(SourceParams.pd(), FS, 500e-6, delay=150e-6)
        ref, _ = arrival_features(src, GRID)
        err_interp, err_int = [], []
        for frac in np.linspace(0.05, 0.95, 10):
            d = (2000 + frac) * m.v_inf / FS
            out = propagate(src, m, d)
            sg = cwt_morlet(out, GRID)
            win = detect_first_arrival(sg)
            truth = ref.t_max + d / m.v_inf
            err_interp.append(scale_maxima(sg, win).t_max - truth)
            err_int.append(scale_maxima(sg, win, interpolate=False).t_max - truth)
        rms = lambda e: float(np.sqrt(np.mean(np.square(e))))  # noqa: E731
        assert rms(err_interp) < 0.5 * rms(err_int)
        assert rms(err_interp) < 0.1 / FS


class TestParabola:
    def test_vertex(self):
        # y = 4 - (x - 0.3)**2 sampled at -1, 0, 1
        y = [4 - 1.3 ** 2, 4 - 0.09, 4 - 0.7 ** 2]
        delta, peak = parabolic_peak(*y)
        assert delta == pytest.approx(0.3) and peak == pytest.approx(4.0)

    def test_flat(self):
        assert parabolic_peak(1.0, 1.0, 1.0) == (0.0, 1.0)
