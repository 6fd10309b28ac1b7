import numpy as np
import pytest
from hypothesis import given, strategies as st

from cardiodx.core import (BinSelection, InvalidInputError, RadarConfig,
                           displacement_from_phase, magnitude,
                           phase_from_displacement, phase_track, unwrap_phase)

from conftest import make_cir

finite_floats = st.floats(min_value=-1e6, max_value=1e6,
                          allow_nan=False, allow_infinity=False)


class TestRadarConfig:
    def test_derived_rates(self):
        cfg = RadarConfig()
        assert cfg.slow_time_rate == pytest.approx(5000.0)
        assert cfg.decimation == 25
        assert cfg.wavelength == pytest.approx(299792458.0 / 79e9)

    def test_rejects_non_divisible_processing_rate(self):
        with pytest.raises(InvalidInputError):
            RadarConfig(processing_rate=333.0)

    def test_rejects_non_positive(self):
        with pytest.raises(InvalidInputError):
            RadarConfig(chirp_period=0.0)


class TestDisplacementFromPhase:
    def test_zero_phase(self):
        assert displacement_from_phase(0.0, RadarConfig()) == 0.0

    def test_quarter_wavelength(self):
        # lambda = c/f evaluated independently of the implementation
        lam = 299792458.0 / 79e9
        d = displacement_from_phase(np.pi, RadarConfig())
        assert d == pytest.approx(lam / 4.0, rel=1e-12)
        assert d == pytest.approx(9.487103e-4, rel=1e-6)

    def test_full_wavelength(self):
        cfg = RadarConfig()
        assert displacement_from_phase(4.0 * np.pi, cfg) == pytest.approx(
            cfg.wavelength, rel=1e-12)

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInputError):
            displacement_from_phase(np.nan, RadarConfig())

    @given(a=finite_floats, phi=finite_floats)
    def test_linearity(self, a, phi):
        cfg = RadarConfig()
        assert displacement_from_phase(a * phi, cfg) == pytest.approx(
            a * displacement_from_phase(phi, cfg), rel=1e-12, abs=1e-15)

    def test_inverse(self):
        cfg = RadarConfig()
        assert phase_from_displacement(
            displacement_from_phase(1.234, cfg), cfg) == pytest.approx(1.234)


class TestMagnitude:
    def test_pythagorean(self):
        cir = make_cir([[3 + 4j, 0.0], [1.0, 1.0]])
        out = magnitude(cir)
        assert out[0, 0] == pytest.approx(5.0)
        assert out[0, 1] == 0.0

    def test_all_ones(self):
        cir = make_cir(np.ones((3, 4), dtype=np.complex128))
        assert np.allclose(magnitude(cir), 1.0)


class TestUnwrapPhase:
    def test_no_jumps_unchanged(self):
        x = np.array([0.0, 0.1, 0.2])
        assert np.array_equal(unwrap_phase(x), x)

    def test_jump_corrected(self):
        out = unwrap_phase([3.0, -3.0])
        assert out[0] == 3.0
        assert out[1] == pytest.approx(-3.0 + 2.0 * np.pi)

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            unwrap_phase([])

    @given(st.lists(st.floats(min_value=-50, max_value=50), min_size=1,
                    max_size=60))
    def test_round_trip_mod_2pi(self, values):
        x = np.asarray(values)
        out = unwrap_phase(x)
        # congruent mod 2 pi and jump-free
        assert np.allclose(np.mod(out - x + np.pi, 2 * np.pi) - np.pi, 0.0,
                           atol=1e-9)
        if out.size > 1:
            assert np.all(np.abs(np.diff(out)) <= np.pi + 1e-12)


class TestPhaseTrack:
    def test_constant_sample_gives_zeros(self):
        cir = make_cir(np.ones((2, 5), dtype=np.complex128))
        sel = BinSelection(bins=np.zeros(5, dtype=int))
        assert np.allclose(phase_track(cir, sel), 0.0)

    def test_known_angles(self):
        theta = np.array([0.1, 0.5, 1.2, 2.0])
        data = np.exp(1j * theta)[None, :]
        cir = make_cir(data)
        sel = BinSelection(bins=np.zeros(4, dtype=int))
        assert np.allclose(phase_track(cir, sel), theta, atol=1e-12)

    def test_recovers_sinusoidal_displacement(self):
        # Invert the phase relation on a CIR built directly from a known
        # displacement; oracle is the construction itself.
        cfg = RadarConfig(samples_per_chirp=3)
        t = np.arange(2000) / cfg.processing_rate
        disp = 2e-4 * np.sin(2 * np.pi * 1.3 * t)
        phase = 4.0 * np.pi / cfg.wavelength * disp
        filler = np.full_like(t, 0.001)
        data = np.vstack([filler, np.exp(1j * phase), filler])
        from cardiodx.core import CirMatrix
        cir = CirMatrix(data=data.astype(np.complex128), config=cfg)
        sel = BinSelection(bins=np.ones(t.size, dtype=int))
        tracked = phase_track(cir, sel)
        assert np.max(np.abs(tracked - phase)) < 1e-6

    def test_shape_mismatch_rejected(self):
        cir = make_cir(np.ones((2, 5), dtype=np.complex128))
        with pytest.raises(InvalidInputError):
            phase_track(cir, BinSelection(bins=np.zeros(4, dtype=int)))
        with pytest.raises(InvalidInputError):
            phase_track(cir, BinSelection(bins=np.full(5, 7)))
