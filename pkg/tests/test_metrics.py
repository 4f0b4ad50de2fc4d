import numpy as np
import pytest

from mfveb.metrics import (DegenerateTruthError, MetricReport, mpiw, picp,
                           relative_error, relative_error_detail, tll,
                           wasserstein)
from mfveb.numerics import RngStream


class TestRelativeError:
    def test_perfect_prediction(self):
        truth = RngStream(0).uniform(0.1, 1.0, size=(3, 4, 3))
        assert relative_error(truth, truth) == 0.0

    def test_single_point_hand_case(self):
        truth = np.array([[[3.0, 4.0, 0.0]]])
        pred = np.array([[[3.0, 0.0, 0.0]]])
        assert relative_error(pred, truth) == pytest.approx(80.0, rel=1e-12)

    def test_homogeneous_scaling(self):
        truth = RngStream(1).uniform(0.2, 1.0, size=(5, 7, 3))
        assert relative_error(1.1 * truth, truth) == pytest.approx(10.0, rel=1e-9)

    def test_zero_norm_steps_skipped_and_counted(self):
        truth = np.array([[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]])
        pred = np.array([[[5.0, 0.0, 0.0], [1.1, 0.0, 0.0]]])
        value, skipped = relative_error_detail(pred, truth)
        assert skipped == 1
        assert value == pytest.approx(10.0, rel=1e-9)

    def test_all_degenerate_raises(self):
        truth = np.zeros((2, 2, 3))
        with pytest.raises(DegenerateTruthError):
            relative_error(np.ones_like(truth), truth)


class TestTll:
    def test_exact_mean_unit_variance(self):
        y = np.zeros((1, 1, 1))
        assert tll(y, np.ones_like(y), y) == pytest.approx(-0.9189385332, abs=1e-9)

    def test_one_sigma_out(self):
        mean = np.zeros((1, 1, 1))
        truth = np.ones((1, 1, 1))
        assert tll(mean, np.ones_like(mean), truth) == pytest.approx(-1.4189385332, abs=1e-9)

    def test_wider_variance(self):
        y = np.zeros((1, 1, 1))
        assert tll(y, 4.0 * np.ones_like(y), y) == pytest.approx(-1.6120857137, abs=1e-9)

    def test_components_sum_steps_average(self):
        y = np.zeros((2, 3, 3))
        out = tll(y, np.ones_like(y), y)
        assert out == pytest.approx(3 * -0.9189385332, abs=1e-8)

    def test_maximized_at_truth(self):
        truth = np.zeros((1, 1, 1))
        var = 0.5 * np.ones_like(truth)
        offsets = np.linspace(-2.0, 2.0, 801)
        values = [tll(truth + d, var, truth) for d in offsets]
        assert abs(offsets[int(np.argmax(values))]) < 1e-9


class TestWasserstein:
    def test_identical_gaussians(self):
        m = RngStream(2).uniform(-1, 1, size=(2, 3, 3))
        s = RngStream(3).uniform(0.1, 1.0, size=(2, 3, 3))
        assert wasserstein(m, s, m, s) == 0.0

    def test_mean_shift(self):
        m = np.zeros((1, 1, 1))
        s = np.ones((1, 1, 1))
        assert wasserstein(m, s, m + 3.0, s) == pytest.approx(3.0, rel=1e-12)

    def test_std_shift(self):
        m = np.zeros((1, 1, 1))
        assert wasserstein(m, 2.0 * np.ones_like(m), m, np.ones_like(m)) == \
            pytest.approx(1.0, rel=1e-12)

    def test_metric_axioms_on_random_triples(self):
        rng = RngStream(4)
        for _ in range(200):
            m1, m2, m3 = rng.uniform(-2, 2, size=3)
            s1, s2, s3 = rng.uniform(0.0, 2.0, size=3)
            a = lambda: None  # noqa: E731

            def w(ma, sa, mb, sb):
                return wasserstein(np.array([[[ma]]]), np.array([[[sa]]]),
                                   np.array([[[mb]]]), np.array([[[sb]]]))

            d12 = w(m1, s1, m2, s2)
            d21 = w(m2, s2, m1, s1)
            d13 = w(m1, s1, m3, s3)
            d23 = w(m2, s2, m3, s3)
            assert abs(d12 - d21) < 1e-12
            assert d13 <= d12 + d23 + 1e-12


class TestIntervals:
    def test_picp_full_coverage(self):
        truth = RngStream(5).uniform(-1, 1, size=(3, 4, 3))
        assert picp(truth - 1e6, truth + 1e6, truth) == 1.0

    def test_picp_zero_width_off_truth(self):
        truth = np.ones((2, 2, 3))
        bounds = np.zeros_like(truth)
        assert picp(bounds, bounds, truth) == 0.0

    def test_picp_half(self):
        truth = np.array([[[0.0, 5.0]]])
        lower = np.array([[[-1.0, -1.0]]])
        upper = np.array([[[1.0, 1.0]]])
        assert picp(lower, upper, truth) == 0.5

    def test_mpiw_values(self):
        lo = np.zeros((1, 2, 1))
        assert mpiw(lo, lo + 2.0) == pytest.approx(2.0)
        assert mpiw(lo, lo) == 0.0
        hi = np.array([[[1.0], [3.0]]])
        assert mpiw(np.zeros_like(hi), hi) == pytest.approx(2.0)

    def test_invalid_bounds(self):
        lo = np.ones((1, 1, 1))
        with pytest.raises(ValueError):
            mpiw(lo, lo - 1.0)
        with pytest.raises(ValueError):
            picp(lo, lo - 1.0, lo)

    def test_widening_consistency(self):
        rng = RngStream(6)
        truth = rng.uniform(-1, 1, size=(4, 5, 3))
        mid = truth + rng.normal(size=truth.shape) * 0.5
        half = rng.uniform(0.0, 1.0, size=truth.shape)
        lower, upper = mid - half, mid + half
        delta = 0.3
        p0, w0 = picp(lower, upper, truth), mpiw(lower, upper)
        p1 = picp(lower - delta / 2, upper + delta / 2, truth)
        w1 = mpiw(lower - delta / 2, upper + delta / 2)
        assert p1 >= p0
        assert w1 == pytest.approx(w0 + delta, rel=1e-12)

    def test_calibrated_gaussian_coverage(self):
        # intervals from the true total variance cover calibrated samples
        rng = RngStream(7)
        n = 100_000
        mean = rng.uniform(-1, 1, size=(n, 1, 1))
        std = rng.uniform(0.1, 0.8, size=(n, 1, 1))
        samples = mean + std * rng.normal(size=mean.shape)
        z = 1.959964
        cover = picp(mean - z * std, mean + z * std, samples)
        assert 0.94 <= cover <= 0.96


class TestMetricReport:
    def test_validation(self):
        MetricReport(eps_r=1.0, tll=0.0, wa=0.1, picp=0.9, mpiw=0.2)
        with pytest.raises(ValueError):
            MetricReport(eps_r=-1.0)
        with pytest.raises(ValueError):
            MetricReport(eps_r=1.0, picp=1.5)
