"""Acceptance suite: every headline criterion at its stated tolerance.

Each test prints one [PASS]/[FAIL] line (visible with pytest -s or in
captured output).  Desk-scale replications use pinned seeds; every
statistical tolerance below is the contract value, not a calibrated one.
"""

import json
import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad

from r2d2m2.cli import main
from r2d2m2.datasim import SimConfig, gen_dataset, population_sigma_for_r2
from r2d2m2.distributions import RngStream, sample_beta_prime
from r2d2m2.gibbs import GibbsConfig, PrecomputedDesign, run_chain
from r2d2m2.metrics import evaluate
from r2d2m2.model import GroupingFactor, Hyperparameters, MultilevelDesign, standardize
from r2d2m2.prior_analysis import (
    MarginalParams,
    ShrinkageParams,
    bounded_influence_curve,
    implied_r2_mc,
    marginal_coef_logdensity,
    shrinkage_density,
    shrinkage_moment,
    tail_exponent_estimate,
)


def report(name: str, passed: bool, detail: str) -> None:
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    assert passed, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# Shared desk-scale replication fits (Table 3 / Table 4 scenario, setup 1).


@pytest.fixture(scope="module")
def desk_replications():
    """10 replications of p=10, K=1, rho=0, v=z=0.95, R2_0=0.75, N=200.

    The noise sd is calibrated at the configuration level (shared across
    replications), so signal strength varies relative to the noise as in the
    reference experiments, and null datasets stay in the sample.
    """
    hyper = Hyperparameters(mu_r2=0.1, phi_r2=0.5, alpha=0.5)   # setup 1
    base = SimConfig(n_train=200, n_test=200, p=10, n_factors=1,
                     n_levels=20, rho=0.0, v=0.95, r2_target=0.75)
    sigma = population_sigma_for_r2(base)
    reports = []
    for rep in range(10):
        cfg = SimConfig(n_train=200, n_test=200, p=10, n_factors=1,
                        n_levels=20, rho=0.0, v=0.95, r2_target=0.75,
                        sigma_fixed=sigma, seed=1000 + rep)
        ds = gen_dataset(cfg)
        table = run_chain(ds.train, hyper,
                          GibbsConfig(n_iterations=4000, n_warmup=1000,
                                      seed=500 + rep))
        profile = PrecomputedDesign.from_design(standardize(ds.train)).ss_profile()
        reports.append(evaluate(table, ds.truth, ds.test, ss_profile=profile,
                                alphas=(0.05,), replication=rep))
    return reports


class TestSbcCalibration:
    """ECDF-envelope pass rate >= 95% of tracked quantities per configuration."""

    @pytest.mark.parametrize("n_factors", [0, 1])
    def test_sbc_envelope(self, n_factors, tmp_path):
        cfg = {"p": 10, "n_factors": n_factors,
               "n_levels": 20 if n_factors else 0,
               "n_obs": 100, "n_warmup": 1000,
               "mu_r2": 0.5, "phi_r2": 1.0, "a_pi": 0.5, "seed": 0}
        cfg_path = tmp_path / "sbc.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / f"sbc_k{n_factors}"
        code = main(["sbc", "--config", str(cfg_path), "--trials", "100",
                     "--draws", "3000", "--thin", "30", "--threads", "2",
                     "--out-dir", str(out)])
        assert code == 0
        envelope = json.loads((out / "envelope.json").read_text())
        rate = envelope["pass_rate"]
        report(f"SBC calibration (K={n_factors})", rate >= 0.95,
               f"{envelope['n_pass']}/{envelope['n_quantities']} quantities "
               f"pass at gamma=0.95 (rate {rate:.3f})")


class TestDeskReplications:
    def test_estimation_error(self, desk_replications):
        rmse_mean = float(np.mean([r.rmse_all for r in desk_replications]))
        report("Desk replication RMSE", rmse_mean <= 0.05,
               f"mean RMSE over 10 replications = {rmse_mean:.4f} (<= 0.05)")

    def test_effective_coefficients(self, desk_replications):
        meff = float(np.mean([r.meff_median for r in desk_replications]))
        report("Desk replication m_eff", 15.0 <= meff <= 60.0,
               f"mean posterior-median m_eff = {meff:.1f} (in [15, 60])")

    def test_error_rates(self, desk_replications):
        type_i = float(np.mean([r.intervals[0].type_i for r in desk_replications]))
        fdr = float(np.mean([r.intervals[0].fdr for r in desk_replications]))
        # Type II is undefined on null datasets; average where it exists.
        with_signal = [r.intervals[0].type_ii for r in desk_replications
                       if r.intervals[0].n_nonzero > 0]
        type_ii = float(np.mean(with_signal)) if with_signal else float("nan")
        report("Desk replication Type I", type_i <= 0.01,
               f"mean Type I at alpha=0.05 = {type_i:.4f} (<= 0.01)")
        report("Desk replication FDR", fdr <= 0.10,
               f"mean FDR at alpha=0.05 = {fdr:.4f} (<= 0.10)")
        report("Desk replication Type II", type_ii <= 0.4,
               f"mean Type II at alpha=0.05 = {type_ii:.4f} over "
               f"{len(with_signal)} signal-bearing replications "
               f"(reported; expected band [0.1, 0.4])")


class TestTailLaw:
    def test_tail_exponents(self):
        for a2 in (0.25, 0.5, 1.0):
            params = MarginalParams(q2=1.0, a_pi=0.5, a2=a2)
            slope = tail_exponent_estimate(params)
            target = -(2.0 * a2 + 1.0)
            report(f"Tail law a2={a2}", abs(slope - target) <= 0.05,
                   f"fitted slope {slope:.4f} vs {target} (+/- 0.05)")


class TestOriginDichotomy:
    def test_divergence_and_boundedness(self):
        for a_pi in (0.25, 0.4):
            params = MarginalParams(q2=1.0, a_pi=a_pi, a2=0.5)
            v12 = marginal_coef_logdensity(1e-12, params)
            v6 = marginal_coef_logdensity(1e-6, params)
            report(f"Origin divergence a_pi={a_pi}", v12 > v6,
                   f"log p(1e-12) = {v12:.3f} > log p(1e-6) = {v6:.3f}")
        for a_pi in (0.75, 1.0):
            params = MarginalParams(q2=1.0, a_pi=a_pi, a2=0.5)
            v12 = math.exp(marginal_coef_logdensity(1e-12, params))
            v6 = math.exp(marginal_coef_logdensity(1e-6, params))
            ok = np.isfinite(v12) and abs(v12 - v6) <= 0.10 * v6
            report(f"Origin boundedness a_pi={a_pi}", ok,
                   f"p(1e-12) = {v12:.6f} within 10% of p(1e-6) = {v6:.6f}")


class TestBoundedInfluence:
    def test_curve_close_to_identity(self):
        ys = np.arange(8.0, 50.5, 0.5)
        gaps = np.array([abs(bounded_influence_curve(float(y)) - y) for y in ys])
        worst = float(gaps.max())
        at10 = abs(bounded_influence_curve(10.0) - 10.0)
        report("Bounded influence", worst < 0.15 and abs(at10 - 0.1) < 1e-6,
               f"max |E(b|y*) - y*| = {worst:.4f} for y* in [8, 50] "
               f"(gap at y*=10: {at10:.4f})")


class TestShrinkageLawOracle:
    def test_density_and_mean_against_monte_carlo(self):
        rng = RngStream(2024)
        gen = rng.generator
        worst_ks, worst_z = 0.0, 0.0
        for trial in range(20):
            mu = gen.uniform(0.15, 0.85)
            phi_r2 = gen.uniform(0.3, 3.0)
            rphi = gen.uniform(0.5, 50.0)
            hyper = Hyperparameters(mu_r2=mu, phi_r2=phi_r2)
            params = ShrinkageParams(phi_comp=1.0, r=rphi,
                                     a1=hyper.a1, a2=hyper.a2)
            tau2 = sample_beta_prime(hyper.a1, hyper.a2, rng.child(trial),
                                     size=1_000_000)
            kappa = 1.0 / (1.0 + rphi * tau2)
            # CDF from the density by piecewise quadrature on a fixed grid.
            grid = np.linspace(0.0, 1.0, 513)
            pieces = [quad(lambda k: shrinkage_density(k, params),
                           grid[i], grid[i + 1], limit=100)[0]
                      for i in range(len(grid) - 1)]
            cdf = np.concatenate([[0.0], np.cumsum(pieces)])
            cdf /= cdf[-1]
            emp = np.searchsorted(np.sort(kappa), grid) / kappa.size
            ks = float(np.max(np.abs(emp - cdf)))
            worst_ks = max(worst_ks, ks)
            mean = shrinkage_moment(1, params)
            se = kappa.std() / math.sqrt(kappa.size)
            worst_z = max(worst_z, abs(mean - kappa.mean()) / se)
        report("Shrinkage-law oracle",
               worst_ks < 0.01 and worst_z < 3.0,
               f"worst KS over 20 triples = {worst_ks:.4f} (< 0.01), "
               f"worst |z| of the m=1 mean = {worst_z:.2f} (< 3)")


class TestGibbsPriorRecovery:
    def test_prior_marginals_at_full_size(self):
        # Structure-only design; the chain runs with the likelihood disabled.
        x = np.random.default_rng(0).normal(size=(4, 2))
        design = MultilevelDesign(
            y=np.zeros(4), x=x,
            factors=[GroupingFactor("g", np.array([0, 1, 0, 1]), 2, (1, 2))])
        hyper = Hyperparameters(mu_r2=0.5, phi_r2=1.0, alpha=0.5)
        config = GibbsConfig(n_iterations=202_000, n_warmup=2000, thin=2,
                             seed=42, prior_only=True)
        table = run_chain(design, hyper, config)
        assert table.n_draws == 100_000
        n_terms = 5
        alpha0 = 0.5 * n_terms

        def ks(draws, cdf):
            xs = np.sort(draws)
            n = xs.size
            grid = cdf(xs)
            return float(np.max(np.maximum(np.arange(1, n + 1) / n - grid,
                                           grid - np.arange(0, n) / n)))

        d_tau = ks(table.columns["tau2"],
                   lambda v: stats.betaprime.cdf(v, hyper.a1, hyper.a2))
        d_phi = ks(table.columns["phi[1]"],
                   lambda v: stats.beta.cdf(v, 0.5, alpha0 - 0.5))
        d_sig = ks(table.columns["sigma"] ** 2,
                   lambda v: stats.invgamma.cdf(v, 1.0, scale=1.0))
        d_r2 = ks(table.columns["R2"],
                  lambda v: stats.beta.cdf(v, hyper.a1, hyper.a2))
        ok = max(d_tau, d_phi, d_sig, d_r2) < 0.02
        report("Gibbs prior recovery", ok,
               f"KS at 1e5 thinned draws: tau2 {d_tau:.4f}, phi {d_phi:.4f}, "
               f"sigma2 {d_sig:.4f}, R2 {d_r2:.4f} (all < 0.02)")


class TestConjugateOracle:
    def test_frozen_scale_posterior(self):
        rng_data = np.random.default_rng(30)
        n = 24
        x = rng_data.normal(1.5, 2.0, size=(n, 1))
        y = 0.8 * x[:, 0] + rng_data.normal(size=n)
        design = MultilevelDesign(y=y, x=x)
        hyper = Hyperparameters(mu_r2=0.5, phi_r2=1.0, alpha=1.0)
        config = GibbsConfig(n_iterations=41_000, n_warmup=1000, seed=3,
                             frozen_steps=("b0", "sigma2", "tau2", "xi", "phi"))
        table = run_chain(design, hyper, config)
        xs = (x[:, 0] - x[:, 0].mean()) / x[:, 0].std(ddof=1)
        sigma2 = y.var(ddof=1)
        a = xs @ xs + 1.0
        mean_exact = xs @ y / a
        var_exact = sigma2 / a
        draws = table.columns["b[1]"] * x[:, 0].std(ddof=1)
        se = draws.std() / math.sqrt(draws.size)
        mean_ok = abs(draws.mean() - mean_exact) < 3.0 * se
        var_ok = abs(draws.var() - var_exact) <= 0.05 * var_exact
        report("Conjugate oracle", mean_ok and var_ok,
               f"mean {draws.mean():.4f} vs {mean_exact:.4f} (3 SE = {3 * se:.4f}); "
               f"var {draws.var():.5f} vs {var_exact:.5f} (+/- 5%)")


class TestMarginalNormalization:
    def test_grid(self):
        worst = 0.0
        for a_pi in (0.25, 0.5, 1.0):
            for a2 in (0.25, 0.5, 1.0):
                params = MarginalParams(q2=1.0, a_pi=a_pi, a2=a2)
                f = lambda t: math.exp(marginal_coef_logdensity(t, params))
                near, _ = quad(f, 0.0, 1.0, limit=200)
                far, _ = quad(f, 1.0, np.inf, limit=200)
                worst = max(worst, abs(2.0 * (near + far) - 1.0))
        report("Marginal normalization", worst <= 1e-6,
               f"max |integral - 1| over the (a_pi, a2) grid = {worst:.2e}")


class TestImpliedR2Demonstration:
    def test_median_increases_with_p(self):
        medians, ses = [], []
        for p in (1, 5, 25):
            draws = implied_r2_mc(p, 1.0, {"kind": "exponential", "rate": 1.0},
                                  100_000, RngStream(p))
            medians.append(float(np.median(draws)))
            ses.append(float(draws.std() / math.sqrt(draws.size)))
        ok = (medians[0] + 3 * ses[0] < medians[1]
              and medians[1] + 3 * ses[1] < medians[2])
        report("Implied R2 demonstration", ok,
               f"medians over p in (1, 5, 25): "
               f"{medians[0]:.3f} < {medians[1]:.3f} < {medians[2]:.3f} "
               f"with 3-SE separation")
