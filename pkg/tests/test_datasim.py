import json
import math

import numpy as np
import pytest

from r2d2m2.datasim import (
    DegenerateDataError,
    SimConfig,
    gen_coefficients,
    gen_dataset,
    gen_dataset_with_retries,
    gen_design,
    population_sigma_for_r2,
    save_dataset,
    solve_sigma_for_r2,
)
from r2d2m2.distributions import ParameterError, RngStream


class TestSimConfig:
    def test_z_defaults_to_v(self):
        assert SimConfig(v=0.7).z_eff == 0.7
        assert SimConfig(v=0.7, z=0.2).z_eff == 0.2

    def test_validation(self):
        with pytest.raises(ParameterError):
            SimConfig(rho=1.0)
        with pytest.raises(ParameterError):
            SimConfig(r2_target=0.0)
        with pytest.raises(ParameterError):
            SimConfig(sigma_overall=0.0)

    def test_roundtrip(self):
        cfg = SimConfig(p=5, seed=9, rho=0.3)
        assert SimConfig.from_dict(cfg.to_dict()) == cfg


class TestGenDesign:
    def test_uncorrelated_covariates(self):
        cfg = SimConfig(n_train=100_000, n_test=0, p=4, n_factors=0, rho=0.0)
        x, _, _ = gen_design(cfg, RngStream(1))
        corr = np.corrcoef(x, rowvar=False)
        off = corr[np.triu_indices(4, k=1)]
        assert np.all(np.abs(off) < 3.0 / math.sqrt(cfg.n_train))

    def test_ar1_lag_two_correlation(self):
        cfg = SimConfig(n_train=100_000, n_test=0, p=3, n_factors=0, rho=0.5)
        x, _, _ = gen_design(cfg, RngStream(2))
        corr13 = np.corrcoef(x[:, 0], x[:, 2])[0, 1]
        assert corr13 == pytest.approx(0.25, abs=3.0 / math.sqrt(cfg.n_train))

    def test_all_levels_covered(self):
        cfg = SimConfig(n_train=200, n_test=50, p=2, n_factors=2, n_levels=20)
        _, _, levels = gen_design(cfg, RngStream(3))
        for train_lv, test_lv in levels:
            assert np.unique(train_lv).size == 20
            assert np.all(test_lv < 20)


class TestGenCoefficients:
    def test_forced_cascade_all_zero(self):
        # v = 1 with z defaulting to v: every slope and varying draw is zero.
        cfg = SimConfig(p=5, n_factors=2, n_levels=3, v=1.0)
        coefs = gen_coefficients(cfg, RngStream(4))
        assert np.all(coefs["b"] == 0.0)
        for uk in coefs["u"]:
            assert np.all(uk == 0.0)

    def test_no_zeroing(self):
        cfg = SimConfig(p=20, n_factors=1, n_levels=3, v=0.0, z=0.0)
        coefs = gen_coefficients(cfg, RngStream(5))
        assert np.all(coefs["b"] != 0.0)
        assert np.all(coefs["u"][0] != 0.0)

    def test_binomial_nonzero_count(self):
        cfg = SimConfig(p=100, n_factors=0, v=0.95)
        rng = RngStream(6)
        counts = [int((gen_coefficients(cfg, rng)["b"] != 0).sum())
                  for _ in range(200)]
        expected = 100 * 0.05
        se = math.sqrt(100 * 0.05 * 0.95 / 200)
        assert abs(np.mean(counts) - expected) < 3.0 * se

    def test_hierarchical_mask_invariant(self):
        cfg = SimConfig(p=10, n_factors=2, n_levels=4, v=0.5, z=0.3)
        rng = RngStream(7)
        for _ in range(100):
            coefs = gen_coefficients(cfg, rng)
            zero_b = coefs["b"] == 0.0
            for uk in coefs["u"]:
                slopes = uk[1:]
                assert np.all(slopes[zero_b] == 0.0)


class TestSolveSigma:
    def test_known_values(self):
        assert solve_sigma_for_r2(3.0, 0.75) == pytest.approx(1.0)
        assert solve_sigma_for_r2(1.0, 0.5) == pytest.approx(1.0)
        assert solve_sigma_for_r2(4.0, 0.25) == pytest.approx(math.sqrt(12.0))

    def test_population_identity(self):
        for var_mu, r2 in [(0.5, 0.1), (7.0, 0.9), (2.0, 0.75)]:
            sigma = solve_sigma_for_r2(var_mu, r2)
            assert var_mu / (var_mu + sigma ** 2) == pytest.approx(r2, rel=1e-14)

    def test_degenerate_error(self):
        with pytest.raises(DegenerateDataError):
            solve_sigma_for_r2(0.0, 0.5)

    def test_population_sigma(self):
        # E var(mu) = 10*0.05*9 + 1*0.05*4 + 10*1*0.05*0.05*4 = 4.8
        cfg = SimConfig(p=10, n_factors=1, n_levels=20, v=0.95, r2_target=0.75)
        assert population_sigma_for_r2(cfg) == pytest.approx(
            math.sqrt(4.8 / 3.0))
        with pytest.raises(DegenerateDataError):
            population_sigma_for_r2(SimConfig(p=2, n_factors=0, v=1.0))


class TestGenDataset:
    def test_achieved_r2_concentrates_on_target(self):
        achieved = []
        for rep in range(40):
            cfg = SimConfig(n_train=200, n_test=0, p=10, n_factors=1,
                            n_levels=5, v=0.5, r2_target=0.75, seed=rep)
            ds = gen_dataset(cfg)
            achieved.append(ds.truth["achieved_train_r2"])
        assert abs(np.mean(achieved) - 0.75) < 0.08

    def test_truth_roundtrips_bit_exact(self, tmp_path):
        cfg = SimConfig(n_train=30, n_test=10, p=3, n_factors=1, n_levels=3,
                        v=0.5, seed=11)
        ds = gen_dataset(cfg)
        paths = save_dataset(ds, tmp_path)
        with open(paths["truth"]) as fh:
            loaded = json.load(fh)
        assert loaded["b"] == ds.truth["b"]
        assert loaded["sigma"] == ds.truth["sigma"]
        assert loaded["u"] == ds.truth["u"]

    def test_sigma_fixed_bypasses_solver(self):
        cfg = SimConfig(n_train=50, n_test=0, p=2, n_factors=0, v=1.0,
                        sigma_fixed=2.5, seed=3)
        ds = gen_dataset(cfg)       # all-zero coefficients would otherwise fail
        assert ds.truth["sigma"] == 2.5

    def test_determinism(self):
        cfg = SimConfig(n_train=25, n_test=5, p=3, n_factors=1, n_levels=3,
                        v=0.5, seed=21)
        d1 = gen_dataset(cfg)
        d2 = gen_dataset(cfg)
        assert np.array_equal(d1.train.y, d2.train.y)
        assert np.array_equal(d1.test.x, d2.test.x)

    def test_retry_on_degenerate(self):
        # v=1 forces all-zero coefficients; every attempt degenerates.
        cfg = SimConfig(n_train=20, n_test=0, p=2, n_factors=0, v=1.0, seed=5)
        with pytest.raises(DegenerateDataError, match="10 consecutive"):
            gen_dataset_with_retries(cfg, max_attempts=10)

    def test_csv_outputs(self, tmp_path):
        cfg = SimConfig(n_train=10, n_test=4, p=2, n_factors=1, n_levels=2,
                        v=0.0, seed=2)
        ds = gen_dataset(cfg)
        paths = save_dataset(ds, tmp_path)
        header = open(paths["train"]).readline().strip()
        assert header == "y,x1,x2,g1"
        assert len(open(paths["test"]).readlines()) == 5
