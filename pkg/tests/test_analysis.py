import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cardiodx.analysis import (classification_metrics, detect_peaks, dtw,
                               hrv, medape, monitoring_errors, roc_auc,
                               rr_and_hr, zncc)
from cardiodx.core import Hpw, InsufficientDataError, InvalidInputError


def brute_force_dtw(a, b):
    """Enumerate every monotone warping path; minimize cost, then length."""
    best = [np.inf, np.inf]

    def walk(i, j, cost, length):
        cost += abs(a[i] - b[j])
        length += 1
        if i == len(a) - 1 and j == len(b) - 1:
            if cost < best[0] - 1e-15 or (abs(cost - best[0]) <= 1e-15
                                          and length < best[1]):
                best[0], best[1] = cost, length
            return
        if i + 1 < len(a):
            walk(i + 1, j, cost, length)
        if j + 1 < len(b):
            walk(i, j + 1, cost, length)
        if i + 1 < len(a) and j + 1 < len(b):
            walk(i + 1, j + 1, cost, length)

    walk(0, 0, 0.0, 0)
    return best[0] / best[1]


def gaussian_pulse(center, n=600, rate=200.0, sigma=0.04):
    t = np.arange(n) / rate
    return np.exp(-((t - center) ** 2) / (2 * sigma * sigma))


class TestDetectPeaks:
    def test_single_pulse(self):
        hpw = Hpw(samples=gaussian_pulse(1.0), rate=200.0)
        peaks = detect_peaks(hpw)
        assert peaks.size == 1
        assert abs(peaks[0] - 1.0) <= 1 / 200.0

    def test_regular_train_spacing(self):
        x = sum(gaussian_pulse(0.5 + 0.8 * k, n=2000) for k in range(8))
        peaks = detect_peaks(Hpw(samples=np.minimum(x, 1.0), rate=200.0))
        assert peaks.size == 8
        spacing = np.diff(peaks) * 200.0
        assert np.all(np.abs(spacing - 160.0) <= 1.0)

    def test_refractory_keeps_higher(self):
        x = gaussian_pulse(1.0) + 0.7 * gaussian_pulse(1.1)
        peaks = detect_peaks(Hpw(samples=x, rate=200.0), refractory=0.25)
        assert peaks.size == 1
        assert abs(peaks[0] - 1.0) < 0.03

    def test_equal_heights_keep_earlier(self):
        x = np.zeros(400)
        x[100] = 0.9
        x[130] = 0.9
        peaks = detect_peaks(Hpw(samples=x, rate=200.0), refractory=0.3)
        assert np.array_equal(peaks, [0.5])

    def test_below_threshold_ignored(self):
        hpw = Hpw(samples=0.3 * gaussian_pulse(1.0), rate=200.0)
        assert detect_peaks(hpw, min_height=0.4).size == 0

    def test_bad_refractory(self):
        with pytest.raises(InvalidInputError):
            detect_peaks(Hpw(samples=np.zeros(10), rate=200.0), refractory=0.0)


class TestRrAndHr:
    def test_constant_rate(self):
        peaks = np.arange(0, 30, 0.75)
        rr, hr = rr_and_hr(peaks)
        assert np.allclose(rr, 750.0)
        assert np.allclose(hr[~np.isnan(hr)], 80.0)

    def test_irregular_intervals(self):
        rr, _ = rr_and_hr(np.array([0.0, 0.7, 1.6]), window_s=1.0)
        assert np.allclose(rr, [700.0, 900.0])

    def test_window_mean(self):
        # interval midpoints 0.35, 1.1, 1.95 all fall inside [0, 2)
        rr, hr = rr_and_hr(np.array([0.0, 0.7, 1.5, 2.4]), window_s=2.0)
        assert np.allclose(rr, [700.0, 800.0, 900.0])
        assert hr[0] == pytest.approx(60000.0 / 800.0)

    def test_insufficient_peaks(self):
        with pytest.raises(InsufficientDataError):
            rr_and_hr(np.array([1.0]))


class TestHrv:
    def test_constant_rr(self):
        f = hrv([800.0, 800.0, 800.0])
        assert f.mean_nn == f.median_nn == 800.0
        assert f.sdnn == f.iqr_nn == f.mad_nn == f.mad_over_median == 0.0

    def test_hand_computed(self):
        f = hrv([700.0, 800.0, 900.0])
        assert f.mean_nn == pytest.approx(800.0)
        assert f.median_nn == pytest.approx(800.0)
        assert f.sdnn == pytest.approx(100.0)  # sample SD, n-1
        assert f.iqr_nn == pytest.approx(100.0)  # linear-interp quartiles
        assert f.mad_nn == pytest.approx(148.26)
        assert f.mad_over_median == pytest.approx(148.26 / 800.0)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**16),
           c=st.floats(min_value=0.1, max_value=10.0))
    def test_scale_equivariance(self, seed, c):
        rr = np.random.default_rng(seed).uniform(500, 1200, size=20)
        f1, f2 = hrv(rr), hrv(c * rr)
        assert f2.mean_nn == pytest.approx(c * f1.mean_nn)
        assert f2.median_nn == pytest.approx(c * f1.median_nn)
        assert f2.sdnn == pytest.approx(c * f1.sdnn)
        assert f2.iqr_nn == pytest.approx(c * f1.iqr_nn)
        assert f2.mad_nn == pytest.approx(c * f1.mad_nn)
        assert f2.mad_over_median == pytest.approx(f1.mad_over_median)

    def test_insufficient(self):
        with pytest.raises(InsufficientDataError):
            hrv([800.0])


class TestDtw:
    def test_identity(self, rng):
        x = rng.standard_normal(50)
        assert dtw(x, x) == 0.0

    def test_single_points(self):
        assert dtw([0.0], [1.0]) == 1.0

    def test_warping_absorbs_repeat(self):
        assert dtw([1.0, 2.0, 3.0], [1.0, 2.0, 2.0, 3.0]) == 0.0

    def test_matches_bruteforce_enumeration(self, rng):
        for _ in range(30):
            a = rng.standard_normal(rng.integers(1, 7))
            b = rng.standard_normal(rng.integers(1, 7))
            assert dtw(a, b) == pytest.approx(brute_force_dtw(a, b), abs=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**16))
    def test_symmetry(self, seed):
        r = np.random.default_rng(seed)
        a = r.standard_normal(r.integers(1, 12))
        b = r.standard_normal(r.integers(1, 12))
        assert dtw(a, b) == pytest.approx(dtw(b, a), abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            dtw([], [1.0])


class TestMedape:
    def test_exact(self):
        assert medape([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_ten_percent(self):
        assert medape([110.0], [100.0]) == pytest.approx(10.0)

    def test_median_of_percent_errors(self):
        assert medape([90.0, 100.0, 121.0],
                      [100.0, 100.0, 110.0]) == pytest.approx(10.0)

    def test_zero_truth_rejected(self):
        with pytest.raises(InvalidInputError):
            medape([1.0], [0.0])

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            medape([1.0], [1.0, 2.0])


class TestZncc:
    def test_self_correlation(self, rng):
        x = rng.standard_normal(200)
        c = zncc(x, x, max_lag=5)
        assert c[5] == pytest.approx(1.0)

    def test_anticorrelation(self, rng):
        x = rng.standard_normal(200)
        assert zncc(x, -x, max_lag=0)[0] == pytest.approx(-1.0)

    def test_quarter_period_shift(self):
        rate, period = 200.0, 1.0
        t = np.arange(1200) / rate
        a = np.sin(2 * np.pi * t / period)
        b = np.sin(2 * np.pi * (t - period / 4) / period)
        c = zncc(a, b, max_lag=100)
        lag = np.argmax(c) - 100
        assert abs(lag - period / 4 * rate) <= 1

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**16))
    def test_bounded(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.standard_normal(60), r.standard_normal(60)
        c = zncc(a, b, max_lag=10)
        assert np.all(np.abs(c) <= 1.0 + 1e-12)

    def test_zero_variance_rejected(self):
        with pytest.raises(InvalidInputError):
            zncc(np.ones(50), np.arange(50.0), max_lag=2)


class TestClassificationMetrics:
    def test_reported_counts_first_system(self):
        r = classification_metrics(tp=18, fn=6, tn=23, fp=1)
        assert r.precision == pytest.approx(18 / 19, abs=1e-12)
        assert r.recall == pytest.approx(0.75, abs=1e-12)
        assert r.accuracy == pytest.approx(41 / 48, abs=1e-12)
        assert r.f1 == pytest.approx(2 * (18 / 19) * 0.75 / (18 / 19 + 0.75),
                                     abs=1e-12)
        # rounded headline values
        assert r.precision == pytest.approx(0.947, abs=5e-4)
        assert r.f1 == pytest.approx(0.837, abs=5e-4)

    def test_reported_counts_second_system(self):
        r = classification_metrics(tp=22, fn=2, tn=23, fp=1)
        assert r.recall == pytest.approx(22 / 24, abs=1e-12)
        assert r.accuracy == pytest.approx(45 / 48, abs=1e-12)
        assert r.recall == pytest.approx(0.917, abs=5e-4)
        assert r.f1 == pytest.approx(0.936, abs=5e-4)
        assert r.accuracy == pytest.approx(0.938, abs=5e-4)

    def test_all_zero_rejected(self):
        with pytest.raises(InvalidInputError):
            classification_metrics(0, 0, 0, 0)


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_identical_scores(self):
        assert roc_auc([0.5] * 6, [0, 1, 0, 1, 0, 1]) == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(InvalidInputError):
            roc_auc([0.1, 0.9], [1, 1])


class TestMonitoringErrors:
    def test_identical_trains_zero(self):
        peaks = np.arange(0.5, 25.0, 0.75)
        out = monitoring_errors(peaks, peaks, duration=25.0)
        assert out["hr_medape"] == 0.0
        assert out["rr_medape"] == 0.0

    def test_offset_detector_nonzero(self):
        truth = np.arange(0.5, 25.0, 0.75)
        est = truth.copy()
        est[10] += 0.1
        out = monitoring_errors(est, truth, duration=25.0)
        assert out["rr_medape"] >= 0.0
        assert out["hr_medape"] < 2.0
