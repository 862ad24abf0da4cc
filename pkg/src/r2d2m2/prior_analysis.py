"""Closed-form and Monte-Carlo prior machinery.

Marginal coefficient densities (second-kind confluent hypergeometric form),
their origin and tail asymptotics, shrinkage-factor densities and moments,
the effective-number-of-coefficients simulation, the implied-R^2
demonstration, and the bounded-influence posterior-mean curve.

Everything is conditional on a fixed residual scale sigma (default 1), as are
the closed forms these functions implement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import specfun
from .distributions import (
    ParameterError,
    RngStream,
    make_sigma_sampler,
    sample_beta_prime,
    sample_dirichlet,
)
from .model import Hyperparameters


class SingularityError(ValueError):
    """Density evaluated exactly at a non-integrable point."""


@dataclass(frozen=True)
class MarginalParams:
    """Scale ratio and shape parameters of the marginal coefficient prior.

    q2 is sigma^2/sigma_x^2; the density's U-arguments are
    eta = a2 + 1/2, nu = 3/2 - a_pi, z = t^2 / (2 q2).
    """

    q2: float = 1.0
    a_pi: float = 0.5
    a2: float = 0.5

    def __post_init__(self):
        if not (self.q2 > 0 and self.a_pi > 0 and self.a2 > 0):
            raise ParameterError("q2, a_pi, a2 must all be positive")

    @property
    def eta(self) -> float:
        return self.a2 + 0.5

    @property
    def nu(self) -> float:
        return 1.5 - self.a_pi


def marginal_coef_logdensity(t: float, params: MarginalParams) -> float:
    """log p(t | sigma) = log[ Gamma(eta) U(eta, nu, z) / (sqrt(2 pi q2) B(a_pi, a2)) ]."""
    eta, nu = params.eta, params.nu
    log_const = (-0.5 * math.log(2.0 * math.pi * params.q2)
                 - specfun.log_beta(params.a_pi, params.a2)
                 + specfun.log_gamma(eta))
    if t == 0.0:
        if params.a_pi <= 0.5:
            raise SingularityError(
                f"marginal density is singular at t = 0 for a_pi = {params.a_pi} <= 1/2")
        # U(eta, nu, 0) = Gamma(1 - nu) / Gamma(eta - nu + 1), valid for nu < 1.
        log_u0 = specfun.log_gamma(1.0 - nu) - specfun.log_gamma(eta - nu + 1.0)
        return log_const + log_u0
    z = t * t / (2.0 * params.q2)
    return log_const + specfun.hyp_u_log(eta, nu, z)


def origin_asymptote(t: float, params: MarginalParams) -> float:
    """Leading-order marginal density near the origin, for a_pi <= 1/2.

    For a_pi < 1/2 the density diverges like t^{2 a_pi - 1}; at a_pi = 1/2 it
    diverges logarithmically.  The returned value carries the full density
    normalization, so exact/asymptote -> 1 as t -> 0.
    """
    if params.a_pi > 0.5:
        raise ParameterError(
            f"origin asymptote only applies for a_pi <= 1/2, got {params.a_pi}")
    q2 = params.q2
    log_norm = (-0.5 * math.log(2.0 * math.pi * q2)
                - specfun.log_beta(params.a_pi, params.a2))
    if params.a_pi < 0.5:
        # Gamma(eta) U ~ Gamma(nu - 1) (2 q2)^{1/2 - a_pi} t^{2 a_pi - 1}.
        log_c = (specfun.log_gamma(0.5 - params.a_pi)
                 + (0.5 - params.a_pi) * math.log(2.0 * q2) + log_norm)
        return math.exp(log_c) * abs(t) ** (2.0 * params.a_pi - 1.0)
    return -math.exp(log_norm) * math.log(t * t / (2.0 * q2))


def tail_exponent_estimate(params: MarginalParams,
                           t_lo: float = 1e3, t_hi: float = 1e5,
                           n_points: int = 9) -> float:
    """Fitted slope of log p vs log |t| over the far tail.

    The marginal prior decays polynomially; the fitted slope estimates the
    tail exponent -(2 a2 + 1).
    """
    ts = np.geomspace(t_lo, t_hi, n_points)
    logs = np.array([marginal_coef_logdensity(float(t), params) for t in ts])
    slope, _ = np.polyfit(np.log(ts), logs, 1)
    return float(slope)


@dataclass(frozen=True)
class ShrinkageParams:
    """One shrinkage factor's ingredients: kappa = 1 / (1 + r * phi * tau^2)."""

    phi_comp: float
    r: float
    a1: float
    a2: float

    def __post_init__(self):
        if not (0.0 < self.phi_comp <= 1.0):
            raise ParameterError(f"phi component must be in (0, 1], got {self.phi_comp}")
        if not (self.r > 0 and self.a1 > 0 and self.a2 > 0):
            raise ParameterError("r, a1, a2 must all be positive")

    @property
    def r_phi(self) -> float:
        return self.r * self.phi_comp


def shrinkage_density(kappa: float, params: ShrinkageParams) -> float:
    """Prior density of the shrinkage factor, conditional on phi.

    p(k) = (r phi)^{a2} / B(a1, a2) * (1-k)^{a1-1} k^{a2-1} ((r phi - 1) k + 1)^{-a1-a2}
    """
    if not 0.0 < kappa < 1.0:
        raise ParameterError(f"kappa must be in (0, 1), got {kappa}")
    rp = params.r_phi
    a1, a2 = params.a1, params.a2
    log_dens = (a2 * math.log(rp) - specfun.log_beta(a1, a2)
                + (a1 - 1.0) * math.log1p(-kappa) + (a2 - 1.0) * math.log(kappa)
                - (a1 + a2) * math.log((rp - 1.0) * kappa + 1.0))
    return math.exp(log_dens)


def shrinkage_moment(m: int, params: ShrinkageParams) -> float:
    """m-th prior moment of the shrinkage factor, conditional on phi.

    E(kappa^m | phi) = (r phi)^{a2} / B(a1,a2) * B(a2+m, a1)
                       * 2F1(a1+a2, a2+m; a1+a2+m; 1 - r phi)
    """
    if m < 1:
        raise ParameterError(f"moment order must be >= 1, got {m}")
    rp = params.r_phi
    a1, a2 = params.a1, params.a2
    front = math.exp(a2 * math.log(rp) - specfun.log_beta(a1, a2)
                     + specfun.log_beta(a2 + m, a1))
    return front * specfun.hyp_2f1(a1 + a2, a2 + m, a1 + a2 + m, 1.0 - rp)


@dataclass
class SsProfile:
    """Per-term sums-of-squares ratios r = SS / sigma_x^2.

    Overall terms carry one r each; each varying term carries one r per level
    of its factor.  The balanced default (SS_i = N, SS_ig_j = N / L) lets the
    elicitation run before any data exists.
    """

    overall: np.ndarray                       # (p,)
    varying: list[np.ndarray] = field(default_factory=list)   # per factor (terms, levels)

    def __post_init__(self):
        self.overall = np.asarray(self.overall, dtype=float)
        self.varying = [np.asarray(v, dtype=float) for v in self.varying]
        if np.any(self.overall <= 0) or any(np.any(v <= 0) for v in self.varying):
            raise ParameterError("all ss_profile entries must be strictly positive")

    @property
    def n_terms(self) -> int:
        return self.overall.size + sum(v.shape[0] for v in self.varying)

    @property
    def total_coefficients(self) -> int:
        return self.overall.size + sum(v.size for v in self.varying)

    @classmethod
    def balanced(cls, p: int, n_factors: int, n_levels: int, n_obs: int,
                 q_slopes: int | None = None) -> "SsProfile":
        q = p if q_slopes is None else q_slopes
        varying = [np.full((q + 1, n_levels), n_obs / n_levels)
                   for _ in range(n_factors)]
        return cls(overall=np.full(p, float(n_obs)), varying=varying)


def meff_prior_sample(hyper: Hyperparameters, ss_profile: SsProfile,
                      n_draws: int, rng: RngStream) -> dict:
    """Simulate the prior of the effective number of non-zero coefficients.

    Per draw: tau^2 ~ BetaPrime(a1, a2), phi ~ Dirichlet(alpha), each
    kappa = 1/(1 + r phi tau^2), m_eff = sum over all coefficients of
    (1 - kappa).  Returns the samples plus summary quantiles.
    """
    if n_draws < 1:
        raise ParameterError("n_draws must be >= 1")
    n_terms = ss_profile.n_terms
    alpha = hyper.alpha_vector(n_terms)
    gen = rng.generator
    xi = gen.gamma(hyper.a2, 1.0, size=n_draws)
    tau2 = gen.gamma(hyper.a1, 1.0 / xi)
    phi = gen.dirichlet(alpha, size=n_draws) if n_terms > 1 \
        else np.ones((n_draws, 1))
    p = ss_profile.overall.size
    scale = phi[:, :p] * tau2[:, None]
    meff = np.sum(1.0 - 1.0 / (1.0 + ss_profile.overall[None, :] * scale), axis=1)
    pos = p
    for v in ss_profile.varying:
        t_g = v.shape[0]
        phi_g = phi[:, pos:pos + t_g] * tau2[:, None]       # (draws, terms)
        kappa = 1.0 / (1.0 + v[None, :, :] * phi_g[:, :, None])
        meff += np.sum(1.0 - kappa, axis=(1, 2))
        pos += t_g
    qs = np.quantile(meff, [0.05, 0.25, 0.5, 0.75, 0.95])
    return {
        "samples": meff,
        "quantiles": {"q05": qs[0], "q25": qs[1], "median": qs[2],
                      "q75": qs[3], "q95": qs[4]},
        "mean": float(meff.mean()),
        "total_coefficients": ss_profile.total_coefficients,
    }


def implied_r2_mc(p: int, coef_sd: float, sigma_dist: dict,
                  n_draws: int, rng: RngStream,
                  x_sds: np.ndarray | None = None) -> np.ndarray:
    """Implied R^2 draws under independent Normal(0, coef_sd^2) priors.

    The linear-predictor variance is the prior variance sum
    var(mu) = sum_i sigma_x_i^2 coef_sd^2; only sigma is random, drawn from
    sigma_dist per draw.
    """
    if p < 0:
        raise ParameterError("p must be >= 0")
    if p == 0:
        return np.zeros(n_draws)
    sds = np.ones(p) if x_sds is None else np.asarray(x_sds, dtype=float)
    var_mu = float(np.sum(sds ** 2) * coef_sd ** 2)
    sample_sigma = make_sigma_sampler(sigma_dist)
    sigma = np.array([sample_sigma(rng) for _ in range(n_draws)])
    return var_mu / (var_mu + sigma ** 2)


def bounded_influence_curve(y_star: float) -> float:
    """Posterior mean E(b | y*) under the no-varying-terms prior, unit noise.

    E(b | y*) = y* + sqrt(2/pi) exp(-y*^2/2) / erf(y*/sqrt(2)) - 1/y*.
    Strong signals are left essentially unshrunken: E(b | y*) -> y*.
    """
    if y_star == 0.0:
        return 0.0
    y = abs(y_star)
    if y < 1e-4:
        value = 2.0 * y / 3.0          # Taylor limit of the closed form
    else:
        value = y + math.sqrt(2.0 / math.pi) * math.exp(-0.5 * y * y) / math.erf(y / math.sqrt(2.0)) - 1.0 / y
    return math.copysign(value, y_star)


# ---------------------------------------------------------------------------
# Grid evaluation helpers shared by the CLI and the HTTP service.


def r2_density_grid(mu_r2: float, phi_r2: float, n: int = 201) -> dict:
    """Beta(mu*phi, (1-mu)*phi) density of R^2 on an open (0, 1) grid."""
    hyper = Hyperparameters(mu_r2=mu_r2, phi_r2=phi_r2)
    xs = np.linspace(0.0, 1.0, n + 2)[1:-1]
    a1, a2 = hyper.a1, hyper.a2
    log_b = specfun.log_beta(a1, a2)
    dens = np.exp((a1 - 1.0) * np.log(xs) + (a2 - 1.0) * np.log1p(-xs) - log_b)
    return {"x": xs.tolist(), "density": dens.tolist()}


def tau2_density_grid(mu_r2: float, phi_r2: float, x_max: float = 10.0,
                      n: int = 201) -> dict:
    """Beta-Prime density of tau^2 = R^2/(1-R^2) on (0, x_max]."""
    from .distributions import beta_prime_log_density

    hyper = Hyperparameters(mu_r2=mu_r2, phi_r2=phi_r2)
    xs = np.linspace(0.0, x_max, n + 1)[1:]
    dens = np.array([math.exp(beta_prime_log_density(float(x), hyper.a1, hyper.a2))
                     for x in xs])
    return {"x": xs.tolist(), "density": dens.tolist()}


def marginal_density_grid(params: MarginalParams, t_max: float = 5.0,
                          n: int = 201) -> dict:
    """Marginal coefficient density on a symmetric grid, skipping t = 0.

    A log-spaced cluster of points near the origin is appended so the
    divergence (or boundedness) there renders faithfully.
    """
    xs = np.linspace(-t_max, t_max, n)
    near = np.geomspace(1e-4, min(0.05, t_max / 2.0), 9)
    xs = np.unique(np.concatenate([xs, near, -near]))
    xs = xs[xs != 0.0]
    dens = np.array([math.exp(marginal_coef_logdensity(float(t), params)) for t in xs])
    return {"x": xs.tolist(), "density": dens.tolist()}


def kappa_density_grid(params: ShrinkageParams, n: int = 201) -> dict:
    """Shrinkage-factor density on an open (0, 1) grid, with the m=1 mean."""
    xs = np.linspace(0.0, 1.0, n + 2)[1:-1]
    dens = np.array([shrinkage_density(float(k), params) for k in xs])
    return {"x": xs.tolist(), "density": dens.tolist(),
            "mean": shrinkage_moment(1, params)}
