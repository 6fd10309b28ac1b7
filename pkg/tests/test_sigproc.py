import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cardiodx.core import BinSelection, InvalidInputError, RadarConfig
from cardiodx.ptl import PtlParams, ptl
from cardiodx.sigproc import (bandpass, build_features, build_tracked_features,
                              second_derivative)
from cardiodx.synth import gen_cir, healthy_profile

from conftest import make_cir

RATE = 200.0


def steady_amplitude(freq, rate=RATE, n=4000):
    t = np.arange(n) / rate
    y = bandpass(np.sin(2 * np.pi * freq * t), 0.2, 50.0, rate)
    return np.max(np.abs(y[n // 4:3 * n // 4]))


class TestBandpass:
    def test_dc_suppressed(self):
        out = bandpass(np.ones(2000), 0.2, 50.0, RATE)
        assert np.max(np.abs(out)) < 1e-3

    def test_passband_1hz(self):
        assert 0.89 <= steady_amplitude(1.0) <= 1.12

    def test_passband_edges_within_1db(self):
        lo_db = 20 * np.log10(steady_amplitude(0.4))
        hi_db = 20 * np.log10(steady_amplitude(40.0))
        assert abs(lo_db) <= 1.0
        assert abs(hi_db) <= 1.0

    def test_stopband_80hz(self):
        assert steady_amplitude(80.0) <= 0.1

    def test_stopband_low_side(self):
        assert steady_amplitude(0.1) <= 0.1  # >= 20 dB down

    def test_band_preconditions(self):
        x = np.zeros(1000)
        for lo, hi in [(0.0, 50.0), (50.0, 0.2), (0.2, 100.0), (0.2, 120.0)]:
            with pytest.raises(InvalidInputError):
                bandpass(x, lo, hi, RATE)

    def test_near_idempotent(self, rng):
        x = rng.standard_normal(4000)
        once = bandpass(x, 0.2, 50.0, RATE)
        twice = bandpass(once, 0.2, 50.0, RATE)
        assert (np.linalg.norm(twice - once)
                < 0.25 * np.linalg.norm(once))


class TestSecondDerivative:
    def test_constant_annihilated(self):
        out = second_derivative(np.full(50, 3.7), h=0.01)
        assert np.max(np.abs(out)) < 1e-12

    def test_ramp_annihilated_interior(self):
        out = second_derivative(np.arange(50.0), h=1.0)
        assert np.max(np.abs(out[3:-3])) < 1e-12

    def test_quadratic_exact(self):
        t = np.arange(64.0)
        out = second_derivative(t * t, h=1.0)
        assert np.max(np.abs(out[3:-3] - 2.0)) < 1e-12

    def test_quadratic_scaled_h(self):
        h = 0.005
        t = np.arange(64.0) * h
        out = second_derivative(t * t, h=h)
        assert np.allclose(out[3:-3], 2.0, atol=1e-9)

    def test_too_short_rejected(self):
        with pytest.raises(InvalidInputError):
            second_derivative(np.zeros(6), h=1.0)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**16), a=st.floats(-3, 3), b=st.floats(-3, 3))
    def test_linearity(self, seed, a, b):
        r = np.random.default_rng(seed)
        x, y = r.standard_normal(30), r.standard_normal(30)
        lhs = second_derivative(a * x + b * y, h=0.1)
        rhs = a * second_derivative(x, h=0.1) + b * second_derivative(y, h=0.1)
        assert np.allclose(lhs, rhs, atol=1e-9)


class TestBuildFeatures:
    def test_constant_cir_all_zero_channels(self):
        data = np.full((1, 1000), 2.0 + 1.0j)
        cir = make_cir(data)
        sel = BinSelection(bins=np.zeros(1000, dtype=int))
        block = build_features(cir, sel, PtlParams(w_t=100, w_b=1))
        assert np.allclose(block.channels, 0.0)

    def test_shapes(self):
        profile = healthy_profile(11)
        bundle = gen_cir(profile, RadarConfig(), duration=6.0)
        params = PtlParams(w_t=100, w_b=9)
        sel = ptl(bundle.cir, params)
        block = build_features(bundle.cir, sel, params)
        assert block.channels.shape == (9, 6 * 200, 3)
        assert block.num_bins == 9
        tracked = build_tracked_features(bundle.cir, sel)
        assert tracked.channels.shape == (1, 6 * 200, 3)

    def test_channels_are_zscored_per_recording(self):
        bundle = gen_cir(healthy_profile(5), RadarConfig(), duration=6.0)
        params = PtlParams(w_t=100, w_b=3)
        sel = ptl(bundle.cir, params)
        block = build_features(bundle.cir, sel, params)
        # statistics shared across bins: global mean 0 / SD 1 per channel,
        # while individual bins keep their relative amplitudes
        for c in range(3):
            channel = block.channels[:, :, c]
            assert abs(channel.mean()) < 1e-9
            assert channel.std() == pytest.approx(1.0, abs=1e-9)
        live = params.w_b // 2  # neighborhood is centered on the live bin
        assert block.channels[live, :, 0].std() > \
            1.5 * block.channels[0, :, 0].std()

    def test_acceleration_peaks_near_r_peaks(self):
        # The dominant bin's acceleration channel must spike within 30 ms
        # of at least 90% of ground-truth beats.
        profile = healthy_profile(3)
        bundle = gen_cir(profile, RadarConfig(), duration=20.0)
        params = PtlParams(w_t=100, w_b=9)
        sel = ptl(bundle.cir, params)
        block = build_features(bundle.cir, sel, params)
        dominant_row = profile.region_bins[0] - (
            profile.region_bins[0] - params.w_b // 2)
        acc = block.channels[dominant_row, :, 1]
        maxima = np.nonzero((acc[1:-1] > acc[:-2]) & (acc[1:-1] >= acc[2:])
                            & (acc[1:-1] > 1.0))[0] + 1
        peak_times = maxima / 200.0
        hits = sum(np.any(np.abs(peak_times - rp) <= 0.030)
                   for rp in bundle.r_peaks)
        assert hits / bundle.r_peaks.size >= 0.9

    def test_bin_permutation_permutes_rows(self):
        bundle = gen_cir(healthy_profile(9), RadarConfig(), duration=6.0)
        params = PtlParams(w_t=100, w_b=5)
        sel = ptl(bundle.cir, params)
        block = build_features(bundle.cir, sel, params)
        center = profile_bin = bundle.subject_profile.region_bins[0]
        first = profile_bin - params.w_b // 2
        # swap two non-dominant neighborhood rows in the raw CIR
        swapped = bundle.cir.data.copy()
        a, b = first, first + 1
        assert a != center and b != center
        swapped[[a, b]] = swapped[[b, a]]
        from cardiodx.core import CirMatrix
        cir2 = CirMatrix(data=swapped, config=bundle.cir.config)
        block2 = build_features(cir2, sel, params)
        assert np.allclose(block2.channels[0], block.channels[1])
        assert np.allclose(block2.channels[1], block.channels[0])
        assert np.allclose(block2.channels[2:], block.channels[2:])

    def test_selection_outside_neighborhood_rejected(self):
        bundle = gen_cir(healthy_profile(2), RadarConfig(), duration=6.0)
        n = bundle.cir.num_chirps
        bad = BinSelection(bins=np.full(n, 200))
        with pytest.raises(InvalidInputError):
            build_features(bundle.cir, bad, PtlParams(w_t=100, w_b=5))
