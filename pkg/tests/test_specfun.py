import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import exp1

from r2d2m2.specfun import (
    ConvergenceError,
    QuadratureSpec,
    SpecFunError,
    bessel_k,
    erf,
    hyp_2f1,
    hyp_u,
    hyp_u_log,
    log_gamma,
)


class TestLogGamma:
    def test_known_values(self):
        assert log_gamma(1.0) == 0.0
        assert log_gamma(0.5) == pytest.approx(math.log(math.sqrt(math.pi)), rel=1e-13)
        assert log_gamma(5.0) == pytest.approx(math.log(24.0), rel=1e-13)

    def test_domain_error(self):
        with pytest.raises(SpecFunError):
            log_gamma(0.0)
        with pytest.raises(SpecFunError):
            log_gamma(-1.5)


class TestHypU:
    def test_closed_form_identity(self):
        # U(a, a+1, z) = z^{-a}
        assert hyp_u(1.0, 2.0, 2.0) == pytest.approx(0.5, rel=1e-8)

    def test_exponential_integral_value(self):
        # U(1,1,z) = e^z E_1(z); frozen via the scipy exponential-integral oracle.
        oracle = math.e * exp1(1.0)
        assert oracle == pytest.approx(0.5963473623231940, rel=1e-12)
        assert hyp_u(1.0, 1.0, 1.0) == pytest.approx(oracle, rel=1e-8)

    def test_large_z_asymptote(self):
        # U ~ z^{-eta} for large z.
        assert hyp_u(1.0, 1.0, 1000.0) == pytest.approx(1e-3, rel=5e-3)

    def test_identity_grid(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            a = rng.uniform(0.1, 10.0)
            z = rng.uniform(0.1, 10.0)
            assert abs(hyp_u(a, a + 1.0, z) * z ** a - 1.0) <= 1e-8

    def test_transformation_identity(self):
        # U(eta, nu, z) = z^{1-nu} U(eta - nu + 1, 2 - nu, z)
        rng = np.random.default_rng(7)
        for _ in range(200):
            eta = rng.uniform(0.2, 5.0)
            nu = rng.uniform(-2.0, min(eta + 0.8, 1.8))
            z = rng.uniform(0.05, 20.0)
            lhs = hyp_u(eta, nu, z)
            rhs = z ** (1.0 - nu) * hyp_u(eta - nu + 1.0, 2.0 - nu, z)
            assert abs(lhs - rhs) <= 1e-7 * abs(lhs)

    def test_quadrature_oracle(self):
        # Independent check: direct integral for a moderate case.
        eta, nu, z = 1.7, 0.4, 2.3
        val, _ = quad(lambda t: math.exp(-z * t) * t ** (eta - 1.0)
                      * (1.0 + t) ** (nu - eta - 1.0), 0.0, np.inf)
        assert hyp_u(eta, nu, z) == pytest.approx(val / math.gamma(eta), rel=1e-9)

    def test_extreme_small_z(self):
        # Small-z law U ~ Gamma(nu-1)/Gamma(eta) z^{1-nu} for nu > 1.
        eta, nu, z = 1.0, 1.25, 5e-25
        expected = math.gamma(nu - 1.0) / math.gamma(eta) * z ** (1.0 - nu)
        assert hyp_u(eta, nu, z) == pytest.approx(expected, rel=1e-4)

    def test_domain_errors(self):
        with pytest.raises(SpecFunError):
            hyp_u(-1.0, 1.0, 1.0)
        with pytest.raises(SpecFunError):
            hyp_u(1.0, 1.0, 0.0)

    def test_pure_bit_identical(self):
        vals = {hyp_u(0.9, 1.1, 3.7) for _ in range(5)}
        assert len(vals) == 1

    def test_log_variant_consistent(self):
        assert math.exp(hyp_u_log(2.0, 0.5, 4.0)) == pytest.approx(
            hyp_u(2.0, 0.5, 4.0), rel=1e-14)

    def test_convergence_error_carries_tolerance(self):
        spec = QuadratureSpec(relative_tolerance=1e-13, max_subdivisions=1)
        try:
            hyp_u(0.15, 1.9, 1e-3, spec=spec)
        except ConvergenceError as exc:
            assert exc.achieved_tol > 0
        # A single subdivision may still succeed for easy integrands; either
        # outcome is acceptable, the contract is the error type + payload.


class TestHyp2F1:
    def test_empty_series(self):
        for a, b, c in [(0.5, 2.0, 1.5), (3.0, 1.0, 4.0)]:
            assert hyp_2f1(a, b, c, 0.0) == 1.0

    def test_log_identity(self):
        # 2F1(1,1;2;z) = -ln(1-z)/z
        assert hyp_2f1(1.0, 1.0, 2.0, 0.5) == pytest.approx(2.0 * math.log(2.0), rel=1e-10)

    def test_gauss_summation_at_one(self):
        # 2F1(a,b;c;1) = Gamma(c)Gamma(c-a-b) / (Gamma(c-a)Gamma(c-b))
        expected = (math.gamma(2.0) * math.gamma(1.0)
                    / math.gamma(1.5) ** 2)
        assert hyp_2f1(0.5, 0.5, 2.0, 1.0) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(1.2732395447351628, rel=1e-12)

    def test_divergence_at_one(self):
        with pytest.raises(SpecFunError):
            hyp_2f1(1.0, 1.5, 2.0, 1.0)

    def test_pfaff_agrees_with_direct_series(self):
        # Overlap region: evaluate both routes via the Pfaff identity
        # 2F1(a,b;c;z) = (1-z)^{-a} 2F1(a, c-b; c; z/(z-1)).
        rng = np.random.default_rng(3)
        for _ in range(200):
            a = rng.uniform(0.2, 3.0)
            b = rng.uniform(0.2, 3.0)
            c_lo = max(a + b - 0.5, 0.5)
            c = rng.uniform(c_lo, c_lo + 3.0)
            z = rng.uniform(-0.5, 0.5)
            direct = hyp_2f1(a, b, c, z)
            via_pfaff = (1.0 - z) ** (-a) * hyp_2f1(a, c - b, c, z / (z - 1.0))
            assert abs(direct - via_pfaff) <= 1e-9 * abs(direct)

    def test_very_negative_argument(self):
        # Use-site shape: z = 1 - r*phi with large r*phi; oracle by quadrature
        # of the Euler integral (c > b > 0):
        # 2F1(a,b;c;z) = int_0^1 t^{b-1}(1-t)^{c-b-1}(1-zt)^{-a} dt / B(b,c-b)
        a, b, c, z = 1.0, 1.5, 2.5, -19.0
        val, _ = quad(lambda t: t ** (b - 1.0) * (1.0 - t) ** (c - b - 1.0)
                      * (1.0 - z * t) ** (-a), 0.0, 1.0)
        val /= math.gamma(b) * math.gamma(c - b) / math.gamma(c)
        assert hyp_2f1(a, b, c, z) == pytest.approx(val, rel=1e-8)

    def test_invalid_c(self):
        with pytest.raises(SpecFunError):
            hyp_2f1(1.0, 1.0, 0.0, 0.5)
        with pytest.raises(SpecFunError):
            hyp_2f1(1.0, 1.0, -2.0, 0.5)

    def test_z_above_one(self):
        with pytest.raises(SpecFunError):
            hyp_2f1(1.0, 1.0, 3.0, 1.5)


class TestBesselK:
    def test_half_order_closed_form(self):
        expected = math.sqrt(math.pi / 2.0) * math.exp(-1.0)
        assert bessel_k(0.5, 1.0) == pytest.approx(expected, rel=1e-10)

    def test_symmetry_in_order(self):
        assert bessel_k(-0.5, 2.0) == pytest.approx(bessel_k(0.5, 2.0), rel=1e-12)

    def test_recurrence_value(self):
        # K_{3/2}(1) from the three-term recurrence K_{v+1} = K_{v-1} + (2v/x) K_v.
        k_half = math.sqrt(math.pi / 2.0) * math.exp(-1.0)
        expected = k_half + 2.0 * 0.5 * k_half
        assert expected == pytest.approx(0.9221370088957891, rel=1e-12)
        assert bessel_k(1.5, 1.0) == pytest.approx(expected, rel=1e-10)

    def test_domain_error(self):
        with pytest.raises(SpecFunError):
            bessel_k(1.0, 0.0)


class TestErf:
    def test_zero(self):
        assert erf(0.0) == 0.0

    def test_odd_symmetry(self):
        for x in [0.3, 1.7, 4.2]:
            assert erf(-x) == -erf(x)

    def test_quadrature_oracle_at_one(self):
        val, _ = quad(lambda t: 2.0 / math.sqrt(math.pi) * math.exp(-t * t), 0.0, 1.0)
        assert val == pytest.approx(0.8427007929497149, abs=1e-13)
        assert erf(1.0) == pytest.approx(val, abs=1e-12)
