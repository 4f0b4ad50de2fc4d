import numpy as np
import pytest

from mfveb.datagen import (Dataset, OracleConfig, add_noise, build_benchmark,
                           generate_strain_paths, hf_oracle, lf_oracle,
                           load_dataset, noise_std,
                           quadratic_paths_from_controls, save_dataset)
from mfveb.metrics import relative_error_detail
from mfveb.numerics import RngStream


def scalar_return_mapping(strain_1d, modulus, yield_stress, hardening, exponent,
                          n_bisect=100):
    """Independent scalar re-implementation of the stress recursion."""
    sigma = np.float64(0.0)
    ebar = np.float64(0.0)
    eps_prev = np.float64(0.0)
    out = []
    for eps in strain_1d:
        eps = np.float64(eps)
        trial = sigma + np.float64(modulus) * (eps - eps_prev)
        sy = np.float64(yield_stress) + np.float64(hardening) * ebar ** np.float64(exponent)
        if abs(trial) > sy:
            lo = np.float64(0.0)
            hi = abs(trial) / np.float64(modulus)
            for _ in range(n_bisect):
                mid = np.float64(0.5) * (lo + hi)
                g = abs(trial) - np.float64(modulus) * mid \
                    - (np.float64(yield_stress)
                       + np.float64(hardening) * (ebar + mid) ** np.float64(exponent))
                if g > 0.0:
                    lo = mid
                else:
                    hi = mid
            dlam = np.float64(0.5) * (lo + hi)
            sign = np.float64(1.0) if trial >= 0.0 else np.float64(-1.0)
            sigma = sign * (abs(trial) - np.float64(modulus) * dlam)
            ebar = ebar + dlam
        else:
            sigma = trial
        out.append(float(sigma))
        eps_prev = eps
    return np.array(out)


class TestStrainPaths:
    def test_defaults_stay_in_range(self):
        paths = generate_strain_paths(50, (-0.1, 0.1), 100, 6, seed=0)
        assert paths.shape == (50, 100, 3)
        assert np.all(paths >= -0.1) and np.all(paths <= 0.1)

    def test_same_seed_identical(self):
        a = generate_strain_paths(5, (-0.1, 0.1), 20, 6, seed=3)
        b = generate_strain_paths(5, (-0.1, 0.1), 20, 6, seed=3)
        assert np.array_equal(a, b)

    def test_constant_controls_give_constant_path(self):
        control = np.full((2, 3, 6), 0.04)
        paths = quadratic_paths_from_controls(control, 25, -0.1, 0.1)
        assert np.max(np.abs(paths - 0.04)) < 1e-12

    def test_invalid_range(self):
        with pytest.raises(ValueError):
            generate_strain_paths(3, (0.1, -0.1), 10, 6, seed=0)
        with pytest.raises(ValueError):
            generate_strain_paths(3, (-0.1, 0.1), 10, 2, seed=0)


class TestHfOracle:
    def setup_method(self):
        self.cfg = OracleConfig()

    def test_zero_strain_zero_stress(self):
        strain = np.zeros((2, 10, 3))
        assert np.array_equal(hf_oracle(self.cfg, strain), np.zeros((2, 10, 3)))

    def test_elastic_regime_is_linear(self):
        # below first yield (sigma0 / E = 0.005) the response is E * strain
        ramp = np.linspace(0.0, 0.004, 15)
        strain = np.stack([ramp, -ramp, 0.5 * ramp], axis=-1)[None, ...]
        stress = hf_oracle(self.cfg, strain)
        assert np.allclose(stress, self.cfg.elastic_modulus * strain, rtol=1e-12, atol=0)

    def test_matches_scalar_reference_on_load_unload_reload(self):
        triangle = np.concatenate([
            np.linspace(0.0, 0.08, 30),
            np.linspace(0.08, 0.0, 30),
            np.linspace(0.0, 0.05, 20),
        ])
        strain = np.stack([triangle] * 3, axis=-1)
        stress = hf_oracle(self.cfg, strain)  # single-path 2-D call
        ref = scalar_return_mapping(triangle, self.cfg.elastic_modulus,
                                    self.cfg.yield_stress, self.cfg.hardening_modulus,
                                    self.cfg.hardening_exponent)
        assert stress.shape == strain.shape
        for j in range(3):
            assert np.max(np.abs(stress[:, j] - ref)) < 1e-12
        # plastic loading leaves residual stress at zero strain
        assert abs(stress[59, 0]) > 0.05

    def test_history_dependence_witness(self):
        # same final strain, different history => different final stress
        direct = np.linspace(0.0, 0.02, 40)
        loop = np.concatenate([np.linspace(0.0, 0.08, 20), np.linspace(0.08, 0.02, 20)])
        strain = np.stack([np.stack([direct] * 3, -1), np.stack([loop] * 3, -1)])
        stress = hf_oracle(self.cfg, strain)
        assert strain[0, -1, 0] == strain[1, -1, 0]
        assert abs(stress[0, -1, 0] - stress[1, -1, 0]) > 1e-3

    def test_bitwise_deterministic(self):
        strain = generate_strain_paths(4, (-0.1, 0.1), 50, 6, seed=9)
        assert np.array_equal(hf_oracle(self.cfg, strain), hf_oracle(self.cfg, strain))


class TestLfOracle:
    def test_unit_bias_matches_hf(self):
        cfg = OracleConfig(lf_modulus_factor=1.0, lf_hardening_factor=1.0)
        strain = generate_strain_paths(3, (-0.1, 0.1), 30, 6, seed=1)
        assert np.array_equal(lf_oracle(cfg, strain), hf_oracle(cfg, strain))

    def test_elastic_bias_is_exact_scaling(self):
        cfg = OracleConfig()
        ramp = np.linspace(0.0, 0.004, 10)
        strain = np.stack([ramp] * 3, axis=-1)[None, ...]
        assert np.allclose(lf_oracle(cfg, strain),
                           cfg.lf_modulus_factor * hf_oracle(cfg, strain),
                           rtol=1e-12, atol=0)

    def test_default_bias_lands_in_calibrated_band(self):
        cfg = OracleConfig()
        strain = generate_strain_paths(50, (-0.1, 0.1), 100, 6, seed=2)
        err, _ = relative_error_detail(lf_oracle(cfg, strain), hf_oracle(cfg, strain))
        assert 3.0 <= err <= 15.0


class TestNoise:
    def test_zero_noise_identity(self):
        cfg = OracleConfig(noise_floor=0.0, noise_slope=0.0)
        stress = np.ones((2, 5, 3))
        noisy, std = add_noise(stress, cfg, RngStream(0))
        assert np.array_equal(noisy, stress)
        assert np.array_equal(std, np.zeros_like(stress))

    def test_empirical_std(self):
        cfg = OracleConfig(noise_floor=0.1, noise_slope=0.0)
        stress = np.zeros((10_000, 1, 1))
        noisy, _ = add_noise(stress, cfg, RngStream(1))
        assert 0.097 <= noisy.std() <= 0.103

    def test_unbiased(self):
        cfg = OracleConfig()
        stress = np.full((10_000, 1, 1), 0.4)
        noisy, std = add_noise(stress, cfg, RngStream(2))
        se = std[0, 0, 0] / np.sqrt(10_000)
        assert abs(noisy.mean() - 0.4) < 3 * se

    def test_std_monotone_in_magnitude(self):
        cfg = OracleConfig()
        lo = noise_std(cfg, np.array(0.1))
        hi = noise_std(cfg, np.array(-0.9))
        assert hi > lo


class TestBenchmark:
    def test_s2_is_clean_both_sides(self):
        suite = build_benchmark("s2", seed=0, n_hf=5, n_lf=8, n_test=4,
                                n_replicates=3, t_steps=20)
        assert suite.hf.noisy is False and suite.lf.noisy is False
        assert suite.hf.true_std is None and suite.lf.true_std is None
        assert suite.id_test.replicates is None
        assert np.array_equal(suite.id_test.true_std, np.zeros_like(suite.id_test.stress))

    def test_s4_noisy_lf_clean_hf(self):
        suite = build_benchmark("s4", seed=0, n_hf=5, n_lf=8, n_test=4,
                                n_replicates=3, t_steps=20)
        assert suite.lf.noisy is True and suite.hf.noisy is False

    def test_s1_has_no_lf(self):
        suite = build_benchmark("s1", seed=0, n_hf=5, n_lf=8, n_test=4,
                                n_replicates=3, t_steps=20)
        assert suite.lf is None
        assert suite.hf.noisy is True
        assert suite.id_test.replicates.shape == (4, 3, 20, 3)

    def test_ground_truth_identical_across_suites(self):
        suites = [build_benchmark(s, seed=7, n_hf=3, n_lf=3, n_test=4,
                                  n_replicates=2, t_steps=15)
                  for s in ("s1", "s2", "s3", "s4")]
        base = suites[0].id_test.stress
        for s in suites[1:]:
            assert np.array_equal(s.id_test.stress, base)

    def test_ood_extends_range(self):
        suite = build_benchmark("s2", seed=1, n_hf=3, n_lf=3, n_test=50,
                                n_replicates=2, t_steps=30)
        assert np.max(np.abs(suite.ood_test.strain)) > 0.1
        assert np.max(np.abs(suite.ood_test.strain)) <= 0.125
        assert np.max(np.abs(suite.id_test.strain)) <= 0.1

    def test_unknown_suite(self):
        with pytest.raises(ValueError):
            build_benchmark("s9", seed=0)


class TestSerialization:
    def test_round_trip_bitwise(self, tmp_path):
        suite = build_benchmark("s3", seed=11, n_hf=4, n_lf=3, n_test=3,
                                n_replicates=2, t_steps=10)
        for name, ds in (("hf", suite.hf), ("id", suite.id_test)):
            path = tmp_path / f"{name}.jsonl"
            save_dataset(ds, path)
            back = load_dataset(path)
            assert np.array_equal(back.strain, ds.strain)
            assert np.array_equal(back.stress, ds.stress)
            if ds.true_std is None:
                assert back.true_std is None
            else:
                assert np.array_equal(back.true_std, ds.true_std)
            if ds.replicates is None:
                assert back.replicates is None
            else:
                assert np.array_equal(back.replicates, ds.replicates)
            assert back.fidelity == ds.fidelity and back.noisy == ds.noisy
