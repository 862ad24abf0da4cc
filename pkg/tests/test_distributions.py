import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad
from scipy.optimize import brentq

from r2d2m2.distributions import (
    GigParams,
    ParameterError,
    RngStream,
    beta_prime_log_density,
    gig_log_density,
    gig_mean,
    make_sigma_sampler,
    sample_beta_prime,
    sample_dirichlet,
    sample_gig,
    sample_half_student_t,
    sample_inv_gamma,
    standard_dists,
)


def ks_against_sorted(draws: np.ndarray, cdf) -> float:
    xs = np.sort(draws)
    n = xs.size
    grid = cdf(xs)
    return float(np.max(np.maximum(np.arange(1, n + 1) / n - grid,
                                   grid - np.arange(0, n) / n)))


class TestRngStream:
    def test_reproducible(self):
        a = RngStream(123, 5).generator.random(10)
        b = RngStream(123, 5).generator.random(10)
        assert np.array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = RngStream(123, 0).generator.random(10)
        b = RngStream(123, 1).generator.random(10)
        assert not np.array_equal(a, b)

    def test_child_streams_deterministic_and_distinct(self):
        root = RngStream(9)
        ids = {root.child(i).stream_id for i in range(1000)}
        assert len(ids) == 1000
        assert root.child(3).stream_id == RngStream(9).child(3).stream_id


class TestGig:
    def test_invariants(self):
        with pytest.raises(ParameterError):
            GigParams(chi=-1.0, rho=1.0, nu=0.5)
        with pytest.raises(ParameterError):
            GigParams(chi=1.0, rho=0.0, nu=0.5)
        with pytest.raises(ParameterError):
            GigParams(chi=0.0, rho=1.0, nu=-0.5)

    def test_reciprocal_symmetry(self):
        # X ~ GIG(chi, rho, nu)  =>  1/X ~ GIG(rho, chi, -nu)
        n = 100_000
        rng = RngStream(11)
        fwd = np.array([sample_gig(GigParams(1.3, 0.7, 0.8), rng) for _ in range(n)])
        rng2 = RngStream(12)
        rev = np.array([sample_gig(GigParams(0.7, 1.3, -0.8), rng2) for _ in range(n)])
        d = stats.ks_2samp(1.0 / fwd, rev).statistic
        assert d < 0.02

    def test_mean_against_bessel_moment(self):
        # E X = sqrt(chi/rho) K_{nu+1}(sqrt(chi rho)) / K_nu(sqrt(chi rho)),
        # cross-checked by quadrature of the density.
        params = GigParams(1.0, 1.0, 0.5)
        expected = gig_mean(params)
        norm, _ = quad(lambda z: math.exp(gig_log_density(z, params)), 0, np.inf)
        num, _ = quad(lambda z: z * math.exp(gig_log_density(z, params)), 0, np.inf)
        assert expected == pytest.approx(num / norm, rel=1e-9)
        n = 1_000_000
        rng = RngStream(13)
        draws = np.array([sample_gig(params, rng) for _ in range(n)])
        se = draws.std() / math.sqrt(n)
        assert abs(draws.mean() - expected) < 3.0 * se

    def test_gamma_limit(self):
        n = 100_000
        rng = RngStream(14)
        draws = np.array([sample_gig(GigParams(1e-300, 2.0, 1.5), rng)
                          for _ in range(n)])
        d = ks_against_sorted(draws, lambda x: stats.gamma.cdf(x, 1.5, scale=1.0))
        assert d < 0.02

    def test_chi_zero_dispatch(self):
        n = 50_000
        rng = RngStream(15)
        draws = np.array([sample_gig(GigParams(0.0, 3.0, 2.0), rng) for _ in range(n)])
        d = ks_against_sorted(draws, lambda x: stats.gamma.cdf(x, 2.0, scale=2.0 / 3.0))
        assert d < 0.02

    @pytest.mark.parametrize("chi,rho,nu", [
        (2.0, 3.0, 5.0),        # ratio-of-uniforms with shift
        (0.5, 0.5, 0.2),        # ratio-of-uniforms without shift
        (0.01, 1.0, 0.3),       # concave three-part envelope
        (4.0, 0.2, -3.5),       # negative order, reciprocal path
        (1e-12, 2.0, -9.5),     # underflow-adjacent phi-update shape
    ])
    def test_ks_against_scipy_all_regimes(self, chi, rho, nu):
        n = 40_000
        rng = RngStream(hash((chi, rho, nu)) % (2 ** 63))
        draws = np.array([sample_gig(GigParams(chi, rho, nu), rng) for _ in range(n)])
        omega = math.sqrt(chi * rho)
        scale = math.sqrt(chi / rho)
        d = ks_against_sorted(draws, lambda x: stats.geninvgauss.cdf(x / scale, nu, omega))
        assert d < 0.015

    def test_determinism(self):
        params = GigParams(1.0, 2.0, -0.7)
        a = [sample_gig(params, RngStream(99, 1)) for _ in range(3)]
        b = [sample_gig(params, RngStream(99, 1)) for _ in range(3)]
        assert a[0] == b[0]


class TestBetaPrime:
    def test_density_value(self):
        # a1 = a2 = 1: p(x) = (1+x)^{-2}
        assert math.exp(beta_prime_log_density(1.0, 1.0, 1.0)) == pytest.approx(0.25, rel=1e-12)

    def test_transform_to_beta(self):
        # X/(1+X) ~ Beta(a1, a2)
        n = 100_000
        draws = sample_beta_prime(1.3, 2.1, RngStream(21), size=n)
        d = ks_against_sorted(draws / (1.0 + draws),
                              lambda x: stats.beta.cdf(x, 1.3, 2.1))
        assert d < 0.02

    def test_mean_formula(self):
        # E X = a1 / (a2 - 1)
        n = 1_000_000
        draws = sample_beta_prime(2.0, 3.0, RngStream(22), size=n)
        se = draws.std() / math.sqrt(n)
        assert abs(draws.mean() - 1.0) < 3.0 * se

    def test_invalid_shapes(self):
        with pytest.raises(ParameterError):
            sample_beta_prime(0.0, 1.0, RngStream(0))
        with pytest.raises(ParameterError):
            beta_prime_log_density(1.0, 1.0, -2.0)


class TestDirichlet:
    def test_single_component(self):
        for a in [0.3, 1.0, 7.0]:
            assert sample_dirichlet([a], RngStream(1)).tolist() == [1.0]

    def test_sums_to_one(self):
        rng = RngStream(31)
        for _ in range(100):
            x = sample_dirichlet([0.5, 1.0, 2.0, 0.7], rng)
            assert abs(x.sum() - 1.0) <= 1e-12
            assert np.all(x >= 0)

    def test_symmetric_means(self):
        rng = RngStream(32)
        draws = np.array([sample_dirichlet([1.0, 1.0, 1.0], rng) for _ in range(100_000)])
        se = draws[:, 0].std() / math.sqrt(draws.shape[0])
        for j in range(3):
            assert abs(draws[:, j].mean() - 1.0 / 3.0) < 3.0 * se

    def test_negative_covariance_formula(self):
        # cov(phi_i, phi_j) = -a_i a_j / (a0^2 (a0 + 1))
        alpha = np.array([2.0, 1.0, 1.0])
        a0 = alpha.sum()
        expected = -alpha[0] * alpha[1] / (a0 ** 2 * (a0 + 1.0))
        assert expected == pytest.approx(-0.025, abs=1e-12)
        n = 1_000_000
        draws = RngStream(33).generator.dirichlet(alpha, size=n)
        prod = draws[:, 0] * draws[:, 1]
        cov = prod.mean() - draws[:, 0].mean() * draws[:, 1].mean()
        se = prod.std() / math.sqrt(n)
        assert abs(cov - expected) < 3.0 * se

    def test_invalid_alpha(self):
        with pytest.raises(ParameterError):
            sample_dirichlet([1.0, 0.0], RngStream(0))
        with pytest.raises(ParameterError):
            sample_dirichlet([], RngStream(0))


class TestStandardDists:
    def test_normal_logpdf_at_mean(self):
        reg = standard_dists()
        assert reg["normal"].log_density(0.0, 0.0, 1.0) == pytest.approx(
            -0.9189385332046727, abs=1e-12)

    def test_inv_gamma_mean(self):
        # mean = d / (c - 1) = 1 for (c, d) = (3, 2)
        n = 1_000_000
        draws = sample_inv_gamma(3.0, 2.0, RngStream(41), size=n)
        se = draws.std() / math.sqrt(n)
        assert abs(draws.mean() - 1.0) < 3.0 * se

    def test_half_student_t_median(self):
        # Median from root-finding the folded-t CDF at 1/2.
        nu = 3.0
        median = brentq(lambda x: 2.0 * stats.t.cdf(x, nu) - 1.0 - 0.5, 0.01, 10.0,
                        xtol=1e-13)
        assert median == pytest.approx(0.7648923284043472, rel=1e-10)
        n = 1_000_000
        draws = sample_half_student_t(nu, 1.0, RngStream(42), size=n)
        assert np.all(draws >= 0)
        # SE of the sample median: 1 / (2 sqrt(n) f(median)).
        dens = 2.0 * stats.t.pdf(median, nu)
        se = 1.0 / (2.0 * math.sqrt(n) * dens)
        assert abs(np.median(draws) - median) < 3.0 * se

    def test_densities_integrate_to_one(self):
        reg = standard_dists()
        cases = [
            ("normal", (0.3, 1.7), (-np.inf, np.inf)),
            ("gamma", (2.0, 1.5), (0.0, np.inf)),
            ("inverse_gamma", (3.0, 2.0), (0.0, np.inf)),
            ("beta", (0.5, 2.0), (0.0, 1.0)),
            ("half_student_t", (3.0, 1.0), (0.0, np.inf)),
        ]
        for name, params, (lo, hi) in cases:
            total, _ = quad(lambda x: math.exp(reg[name].log_density(x, *params)),
                            lo, hi)
            assert total == pytest.approx(1.0, abs=1e-6), name

    def test_density_accuracy_against_scipy(self):
        reg = standard_dists()
        assert reg["gamma"].log_density(1.3, 2.0, 1.5) == pytest.approx(
            stats.gamma.logpdf(1.3, 2.0, scale=1.0 / 1.5), abs=1e-12)
        assert reg["inverse_gamma"].log_density(0.7, 3.0, 2.0) == pytest.approx(
            stats.invgamma.logpdf(0.7, 3.0, scale=2.0), abs=1e-12)
        assert reg["beta"].log_density(0.4, 0.5, 2.5) == pytest.approx(
            stats.beta.logpdf(0.4, 0.5, 2.5), abs=1e-12)

    def test_seeded_samplers(self):
        reg = standard_dists()
        a = reg["gamma"].sample(RngStream(5), 2.0, 3.0)
        b = reg["gamma"].sample(RngStream(5), 2.0, 3.0)
        assert a == b

    def test_domain_errors(self):
        reg = standard_dists()
        with pytest.raises(ParameterError):
            reg["normal"].log_density(0.0, 0.0, -1.0)
        with pytest.raises(ParameterError):
            sample_inv_gamma(-1.0, 1.0, RngStream(0))


class TestSigmaSampler:
    def test_fixed(self):
        f = make_sigma_sampler({"kind": "fixed", "value": 2.5})
        assert f(RngStream(0)) == 2.5

    def test_exponential_mean(self):
        f = make_sigma_sampler({"kind": "exponential", "rate": 2.0})
        rng = RngStream(51)
        draws = np.array([f(rng) for _ in range(200_000)])
        assert draws.mean() == pytest.approx(0.5, abs=3.0 * draws.std() / math.sqrt(draws.size))

    def test_unknown_kind(self):
        with pytest.raises(ParameterError):
            make_sigma_sampler({"kind": "cauchy"})
