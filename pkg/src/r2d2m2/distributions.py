"""Seeded samplers and densities for every distribution the model touches.

Randomness flows through :class:`RngStream`, a thin wrapper over numpy's
counter-based Philox generator keyed by (seed, stream_id).  Distinct stream
ids give statistically independent streams, so chains, SBC trials, and
simulation replications can run in parallel without coordination.

The Generalized Inverse Gaussian sampler follows the three-regime
ratio-of-uniforms / rejection scheme of Hoermann & Leydold (2014), with an
exact gamma-limit dispatch when the small parameter underflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ParameterError(ValueError):
    """A distribution parameter violates its domain."""


class RejectionCapError(RuntimeError):
    """A rejection sampler exceeded its hard iteration cap."""


_GIG_REJECTION_CAP = 1_000_000


def _splitmix64(x: int) -> int:
    # Well-spread 64-bit mix, used to derive child stream ids.
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


@dataclass
class RngStream:
    """Reproducible random stream keyed by (seed, stream_id).

    The same key always reproduces the same draw sequence; different
    stream ids are independent.  Use :meth:`child` to derive
    non-overlapping sub-streams deterministically.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator | None = field(default=None, repr=False, compare=False)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF,
                            self.stream_id & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def child(self, label: int) -> "RngStream":
        """Derive an independent sub-stream for the given integer label."""
        return RngStream(self.seed, _splitmix64(self.stream_id ^ _splitmix64(label + 1)))

    def uniform(self) -> float:
        return self.generator.random()


@dataclass(frozen=True)
class GigParams:
    """Parameters of the Generalized Inverse Gaussian.

    Density is proportional to z^{nu-1} exp{-(rho*z + chi/z)/2} with
    chi >= 0, rho > 0.  chi = 0 is the Gamma(nu, rate=rho/2) limit and
    requires nu > 0.
    """

    chi: float
    rho: float
    nu: float

    def __post_init__(self):
        if not self.chi >= 0:
            raise ParameterError(f"GIG chi must be >= 0, got {self.chi}")
        if not self.rho > 0:
            raise ParameterError(f"GIG rho must be > 0, got {self.rho}")
        if self.chi == 0 and not self.nu > 0:
            raise ParameterError(
                f"GIG with chi = 0 requires nu > 0 (gamma limit), got nu = {self.nu}")


def _gig_mode(lam: float, omega: float) -> float:
    if lam >= 1.0:
        return (math.sqrt((lam - 1.0) ** 2 + omega ** 2) + (lam - 1.0)) / omega
    return omega / (math.sqrt((1.0 - lam) ** 2 + omega ** 2) + (1.0 - lam))


def _gig_rou_shift(lam: float, omega: float, rng: np.random.Generator) -> float:
    # Ratio-of-uniforms with mode shift; lam > 2 or omega > 3.
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode(lam, omega)
    nc = t * math.log(xm) - s * (xm + 1.0 / xm)
    # Bounding rectangle from the positive roots of a cubic in y = x - xm.
    a = -(2.0 * (lam + 1.0) / omega + xm)
    b = 2.0 * (lam - 1.0) * xm / omega - 1.0
    p = b - a * a / 3.0
    q = (2.0 * a * a * a) / 27.0 - (a * b) / 3.0 + xm
    fi = math.acos(-q / (2.0 * math.sqrt(-(p ** 3) / 27.0)))
    fak = 2.0 * math.sqrt(-p / 3.0)
    y1 = fak * math.cos(fi / 3.0) - a / 3.0
    y2 = fak * math.cos(fi / 3.0 + 4.0 / 3.0 * math.pi) - a / 3.0
    uplus = (y1 - xm) * math.exp(t * math.log(y1) - s * (y1 + 1.0 / y1) - nc)
    uminus = (y2 - xm) * math.exp(t * math.log(y2) - s * (y2 + 1.0 / y2) - nc)
    for _ in range(_GIG_REJECTION_CAP):
        u = uminus + rng.random() * (uplus - uminus)
        v = rng.random()
        if v <= 0.0:
            continue
        x = u / v + xm
        if x > 0.0 and math.log(v) <= t * math.log(x) - s * (x + 1.0 / x) - nc:
            return x
    raise RejectionCapError("GIG ratio-of-uniforms (shift) exceeded rejection cap")


def _gig_rou_noshift(lam: float, omega: float, rng: np.random.Generator) -> float:
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode(lam, omega)
    nc = t * math.log(xm) - s * (xm + 1.0 / xm)
    ym = ((lam + 1.0) + math.sqrt((lam + 1.0) ** 2 + omega ** 2)) / omega
    um = math.exp(0.5 * (lam + 1.0) * math.log(ym) - s * (ym + 1.0 / ym) - nc)
    for _ in range(_GIG_REJECTION_CAP):
        u = um * rng.random()
        v = rng.random()
        if v <= 0.0:
            continue
        x = u / v
        if math.log(v) <= t * math.log(x) - s * (x + 1.0 / x) - nc:
            return x
    raise RejectionCapError("GIG ratio-of-uniforms (no shift) exceeded rejection cap")


def _gig_concave(lam: float, omega: float, rng: np.random.Generator) -> float:
    # Rejection from a three-part envelope; 0 <= lam < 1 and small omega.
    xm = _gig_mode(lam, omega)
    x0 = omega / (1.0 - lam)
    k0 = math.exp((lam - 1.0) * math.log(xm) - 0.5 * omega * (xm + 1.0 / xm))
    a0 = k0 * x0
    if x0 >= 2.0 / omega:
        k1 = 0.0
        a1 = 0.0
        k2 = x0 ** (lam - 1.0)
        a2 = k2 * 2.0 * math.exp(-omega * x0 / 2.0) / omega
    else:
        k1 = math.exp(-omega)
        a1 = (k1 * math.log(2.0 / (omega * omega)) if lam == 0.0
              else k1 / lam * ((2.0 / omega) ** lam - x0 ** lam))
        k2 = (2.0 / omega) ** (lam - 1.0)
        a2 = k2 * 2.0 * math.exp(-1.0) / omega
    atot = a0 + a1 + a2
    for _ in range(_GIG_REJECTION_CAP):
        v = atot * rng.random()
        if v <= a0:
            x = x0 * v / a0
            hx = k0
        elif v <= a0 + a1:
            v -= a0
            if lam == 0.0:
                x = omega * math.exp(math.exp(omega) * v)
                hx = k1 / x
            else:
                x = (x0 ** lam + lam / k1 * v) ** (1.0 / lam)
                hx = k1 * x ** (lam - 1.0)
        else:
            v -= a0 + a1
            aa = max(x0, 2.0 / omega)
            inner = math.exp(-omega / 2.0 * aa) - omega / (2.0 * k2) * v
            if inner <= 0.0:
                continue
            x = -2.0 / omega * math.log(inner)
            hx = k2 * math.exp(-omega / 2.0 * x)
        u = rng.random() * hx
        if math.log(u) <= (lam - 1.0) * math.log(x) - omega / 2.0 * (x + 1.0 / x):
            return x
    raise RejectionCapError("GIG concave-envelope sampler exceeded rejection cap")


# Below this omega the gamma limit is exact to double precision for lam >= 1
# (total variation error ~ omega^2 / (4 (lam - 1 + 1))).
_GIG_GAMMA_LIMIT_OMEGA = 1e-7


def sample_gig(params: GigParams, rng: RngStream) -> float:
    """Draw from the Generalized Inverse Gaussian distribution."""
    chi, rho, nu = params.chi, params.rho, params.nu
    gen = rng.generator
    if chi == 0.0:
        return gen.gamma(nu, 2.0 / rho)
    alpha = math.sqrt(chi / rho)
    omega = math.sqrt(chi * rho)
    lam = abs(nu)
    if omega < _GIG_GAMMA_LIMIT_OMEGA and lam >= 1.0:
        x = 2.0 * gen.gamma(lam) / omega
    elif lam > 2.0 or omega > 3.0:
        x = _gig_rou_shift(lam, omega, gen)
    elif lam >= 1.0 - 2.25 * omega * omega or omega > 0.2:
        x = _gig_rou_noshift(lam, omega, gen)
    else:
        x = _gig_concave(lam, omega, gen)
    return alpha / x if nu < 0 else alpha * x


def gig_log_density(z: float, params: GigParams) -> float:
    """Unnormalized log density of the GIG at z > 0."""
    if z <= 0:
        return -math.inf
    return (params.nu - 1.0) * math.log(z) - 0.5 * (params.rho * z + params.chi / z)


def gig_mean(params: GigParams) -> float:
    """E[Z] = sqrt(chi/rho) * K_{nu+1}(sqrt(chi*rho)) / K_nu(sqrt(chi*rho))."""
    from .specfun import bessel_k

    if params.chi == 0.0:
        return 2.0 * params.nu / params.rho
    omega = math.sqrt(params.chi * params.rho)
    return math.sqrt(params.chi / params.rho) * bessel_k(params.nu + 1.0, omega) / bessel_k(params.nu, omega)


def beta_prime_log_density(x: float, a1: float, a2: float) -> float:
    """log p(x) for the Beta-Prime(a1, a2) distribution, x > 0."""
    from .specfun import log_beta

    if a1 <= 0 or a2 <= 0:
        raise ParameterError(f"beta-prime shapes must be positive, got ({a1}, {a2})")
    if x <= 0:
        return -math.inf
    return (a1 - 1.0) * math.log(x) - (a1 + a2) * math.log1p(x) - log_beta(a1, a2)


def sample_beta_prime(a1: float, a2: float, rng: RngStream, size: int | None = None):
    """Beta-Prime draws via the gamma chain: xi ~ Gamma(a2, 1), x | xi ~ Gamma(a1, rate=xi)."""
    if a1 <= 0 or a2 <= 0:
        raise ParameterError(f"beta-prime shapes must be positive, got ({a1}, {a2})")
    gen = rng.generator
    xi = gen.gamma(a2, 1.0, size=size)
    return gen.gamma(a1, 1.0 / xi)


def sample_dirichlet(alpha, rng: RngStream) -> np.ndarray:
    """Draw a simplex vector from Dirichlet(alpha); all alpha_i > 0."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or alpha.size == 0:
        raise ParameterError("alpha must be a non-empty 1-D vector")
    if not np.all(alpha > 0):
        raise ParameterError("all Dirichlet concentrations must be > 0")
    if alpha.size == 1:
        return np.array([1.0])
    return rng.generator.dirichlet(alpha)


# ---------------------------------------------------------------------------
# Registry of the standard component distributions (log-densities + samplers).


class _Dist:
    def __init__(self, log_density, sample):
        self.log_density = log_density
        self.sample = sample


_LOG_2PI = math.log(2.0 * math.pi)


def _normal_logpdf(x, mu=0.0, sd=1.0):
    if sd <= 0:
        raise ParameterError(f"normal sd must be > 0, got {sd}")
    zz = (x - mu) / sd
    return -0.5 * _LOG_2PI - math.log(sd) - 0.5 * zz * zz


def _gamma_logpdf(x, shape, rate):
    if shape <= 0 or rate <= 0:
        raise ParameterError(f"gamma requires shape, rate > 0, got ({shape}, {rate})")
    if x <= 0:
        return -math.inf
    return shape * math.log(rate) + (shape - 1.0) * math.log(x) - rate * x - math.lgamma(shape)


def _inv_gamma_logpdf(x, shape, scale):
    if shape <= 0 or scale <= 0:
        raise ParameterError(f"inverse-gamma requires shape, scale > 0, got ({shape}, {scale})")
    if x <= 0:
        return -math.inf
    return shape * math.log(scale) - (shape + 1.0) * math.log(x) - scale / x - math.lgamma(shape)


def _beta_logpdf(x, a, b):
    from .specfun import log_beta

    if a <= 0 or b <= 0:
        raise ParameterError(f"beta requires a, b > 0, got ({a}, {b})")
    if x <= 0 or x >= 1:
        return -math.inf
    return (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - log_beta(a, b)


def _half_student_t_logpdf(x, nu, scale):
    if nu <= 0 or scale <= 0:
        raise ParameterError(f"half-t requires nu, scale > 0, got ({nu}, {scale})")
    if x < 0:
        return -math.inf
    z = x / scale
    return (math.log(2.0) + math.lgamma((nu + 1.0) / 2.0) - math.lgamma(nu / 2.0)
            - 0.5 * math.log(nu * math.pi) - math.log(scale)
            - (nu + 1.0) / 2.0 * math.log1p(z * z / nu))


def sample_inv_gamma(shape: float, scale: float, rng: RngStream, size=None):
    """InvGamma(shape, scale) draws; reciprocal of a Gamma(shape, rate=scale)."""
    if shape <= 0 or scale <= 0:
        raise ParameterError(f"inverse-gamma requires shape, scale > 0, got ({shape}, {scale})")
    return 1.0 / rng.generator.gamma(shape, 1.0 / scale, size=size)


def sample_half_student_t(nu: float, scale: float, rng: RngStream, size=None):
    if nu <= 0 or scale <= 0:
        raise ParameterError(f"half-t requires nu, scale > 0, got ({nu}, {scale})")
    return np.abs(rng.generator.standard_t(nu, size=size)) * scale


def standard_dists() -> dict[str, _Dist]:
    """Registry of component distributions keyed by name.

    Gamma uses the (shape, rate) convention; inverse-gamma uses
    (shape, scale), matching the residual-variance prior.
    """
    return {
        "normal": _Dist(
            _normal_logpdf,
            lambda rng, mu=0.0, sd=1.0, size=None: rng.generator.normal(mu, sd, size=size)),
        "gamma": _Dist(
            _gamma_logpdf,
            lambda rng, shape, rate, size=None: rng.generator.gamma(shape, 1.0 / rate, size=size)),
        "inverse_gamma": _Dist(
            _inv_gamma_logpdf,
            lambda rng, shape, scale, size=None: sample_inv_gamma(shape, scale, rng, size=size)),
        "beta": _Dist(
            _beta_logpdf,
            lambda rng, a, b, size=None: rng.generator.beta(a, b, size=size)),
        "half_student_t": _Dist(
            _half_student_t_logpdf,
            lambda rng, nu, scale, size=None: sample_half_student_t(nu, scale, rng, size=size)),
    }


def make_sigma_sampler(spec: dict):
    """Build a sigma sampler from a JSON-style spec, e.g. {"kind": "exponential", "rate": 1}.

    Supported kinds: fixed(value), exponential(rate), half_student_t(nu, scale).
    Returns a callable rng -> sigma draw.
    """
    kind = spec.get("kind")
    if kind == "fixed":
        value = float(spec["value"])
        if value <= 0:
            raise ParameterError("fixed sigma must be > 0")
        return lambda rng: value
    if kind == "exponential":
        rate = float(spec.get("rate", 1.0))
        if rate <= 0:
            raise ParameterError("exponential rate must be > 0")
        return lambda rng: rng.generator.exponential(1.0 / rate)
    if kind == "half_student_t":
        nu = float(spec.get("nu", 3.0))
        scale = float(spec.get("scale", 1.0))
        return lambda rng: float(sample_half_student_t(nu, scale, rng))
    raise ParameterError(f"unknown sigma distribution kind: {kind!r}")
