import math
from decimal import Decimal, getcontext

import numpy as np
import pytest

from mfveb.numerics import (DomainError, RngStream, ShapeError, add,
                            gaussian_logpdf, hadamard, log_gamma,
                            map_elementwise, matmul, softplus, softplus_inv)


def softplus_reference(x: float) -> float:
    """Oracle: evaluate ln(1 + e^x) in 60-digit decimal arithmetic."""
    getcontext().prec = 60
    return float((Decimal(1) + Decimal(x).exp()).ln())


class TestSoftplus:
    def test_at_zero(self):
        assert softplus(0.0) == pytest.approx(math.log(2.0), abs=1e-15)

    def test_large_x_asymptote(self):
        assert softplus(100.0) == pytest.approx(100.0, rel=1e-12)

    def test_deep_negative_against_decimal_oracle(self):
        expected = softplus_reference(-20.0)
        assert expected == pytest.approx(2.0611536e-9, abs=1e-15)
        assert softplus(-20.0) == pytest.approx(expected, abs=1e-15)

    def test_strictly_positive(self):
        assert softplus(-800.0) > 0.0

    def test_monotone_on_random_pairs(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-40.0, 40.0, size=(10_000, 2))
        lo, hi = x.min(axis=1), x.max(axis=1)
        distinct = lo < hi
        assert np.all(softplus(lo[distinct]) < softplus(hi[distinct]))

    def test_inverse_round_trip(self):
        x = np.linspace(-25.0, 80.0, 211)
        back = softplus_inv(softplus(x))
        assert np.all(np.abs(back - x) <= 1e-12 * np.maximum(1.0, np.abs(x)))

    def test_inverse_domain(self):
        with pytest.raises(DomainError):
            softplus_inv(0.0)


class TestLogGamma:
    def test_integers(self):
        assert log_gamma(1.0) == pytest.approx(0.0, abs=1e-12)
        assert log_gamma(2.0) == pytest.approx(0.0, abs=1e-12)

    def test_half(self):
        assert log_gamma(0.5) == pytest.approx(0.5 * math.log(math.pi), abs=1e-9)
        assert log_gamma(0.5) == pytest.approx(0.5723649429, abs=1e-9)

    def test_recurrence(self):
        x = np.linspace(0.5, 100.0, 997)
        resid = log_gamma(x + 1.0) - log_gamma(x) - np.log(x)
        assert np.max(np.abs(resid)) < 1e-9

    def test_wide_range_against_lgamma(self):
        x = np.logspace(-3, 6, 500)
        ref = np.array([math.lgamma(v) for v in x])
        assert np.max(np.abs(log_gamma(x) - ref)) < 1e-10 * np.maximum(1.0, np.abs(ref)).max()

    def test_domain(self):
        with pytest.raises(DomainError):
            log_gamma(0.0)
        with pytest.raises(DomainError):
            log_gamma(-1.5)


class TestGaussianLogpdf:
    def test_standard_normal_at_zero(self):
        assert gaussian_logpdf(0.0, 0.0, 1.0) == pytest.approx(-0.9189385332, abs=1e-9)

    def test_one_sigma_out(self):
        assert gaussian_logpdf(1.0, 0.0, 1.0) == pytest.approx(-1.4189385332, abs=1e-9)

    def test_wider_variance(self):
        assert gaussian_logpdf(0.0, 0.0, 4.0) == pytest.approx(-1.6120857137, abs=1e-9)

    def test_integrates_to_one(self):
        for var in (0.25, 1.0, 9.0):
            sd = math.sqrt(var)
            y = np.linspace(-10.0 * sd, 10.0 * sd, 40_001)
            density = np.exp(gaussian_logpdf(y, 0.0, var))
            assert np.trapezoid(density, y) == pytest.approx(1.0, abs=1e-6)

    def test_domain(self):
        with pytest.raises(DomainError):
            gaussian_logpdf(0.0, 0.0, 0.0)


class TestMatrixOps:
    def test_identity(self):
        a = np.arange(12.0).reshape(3, 4)
        assert np.array_equal(matmul(np.eye(3), a), a)

    def test_annihilator(self):
        a = np.arange(6.0).reshape(2, 3)
        assert np.array_equal(matmul(a, np.zeros((3, 2))), np.zeros((2, 2)))

    def test_hand_case(self):
        out = matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[5.0], [6.0]]))
        assert np.array_equal(out, np.array([[17.0], [39.0]]))

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(np.zeros((2, 3)), np.zeros((2, 2)))

    def test_add_and_hadamard(self):
        a = np.array([[1.0, 2.0]])
        b = np.array([[3.0, 5.0]])
        assert np.array_equal(add(a, b), np.array([[4.0, 7.0]]))
        assert np.array_equal(hadamard(a, b), np.array([[3.0, 10.0]]))
        with pytest.raises(ShapeError, match=r"\(1, 2\).*\(2, 1\)"):
            add(a, b.T)
        with pytest.raises(ShapeError):
            hadamard(a, b.T)

    def test_map_elementwise(self):
        out = map_elementwise(lambda v: v * v, np.array([[1.0, -2.0], [3.0, 0.0]]))
        assert np.array_equal(out, np.array([[1.0, 4.0], [9.0, 0.0]]))


class TestRngStream:
    def test_replay_identical(self):
        a = RngStream(7, 3).uniform(size=100_000)
        b = RngStream(7, 3).uniform(size=100_000)
        assert np.array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = RngStream(7, 0).uniform(size=1000)
        b = RngStream(7, 1).uniform(size=1000)
        assert not np.array_equal(a, b)

    def test_normal_replay_and_shape(self):
        a = RngStream(1, 2).normal(size=(3, 5))
        b = RngStream(1, 2).normal(size=(3, 5))
        assert a.shape == (3, 5)
        assert np.array_equal(a, b)

    def test_normal_moments(self):
        z = RngStream(11).normal(size=200_000)
        assert abs(z.mean()) < 0.01
        assert abs(z.std() - 1.0) < 0.01

    def test_substream_deterministic_and_distinct(self):
        root = RngStream(5)
        c1 = root.substream(0)
        c2 = root.substream(1)
        again = RngStream(5).substream(0)
        assert c1.stream_id == again.stream_id
        assert c1.stream_id != c2.stream_id
        assert np.array_equal(c1.uniform(size=10), again.uniform(size=10))
