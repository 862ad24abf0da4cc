"""Special functions backing the marginal-density and shrinkage-moment formulas.

All functions here are pure and operate on real scalars.  The confluent
hypergeometric function of the second kind is evaluated by adaptive
quadrature of its integral representation

    U(eta, nu, z) = Gamma(eta)^{-1} * int_0^inf exp(-z*t) t^{eta-1} (1+t)^{nu-eta-1} dt,

which is the reference path for every density built on top of it.  The Gauss
hypergeometric 2F1 is summed as a power series, mapping negative arguments
into (0, 1) with the Pfaff transformation first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import kv as _scipy_kv


class SpecFunError(ValueError):
    """Domain violation for a special-function argument."""


class ConvergenceError(ArithmeticError):
    """Requested tolerance could not be reached; carries the achieved one."""

    def __init__(self, message: str, achieved_tol: float):
        super().__init__(f"{message} (achieved tolerance {achieved_tol:.3e})")
        self.achieved_tol = achieved_tol


@dataclass(frozen=True)
class QuadratureSpec:
    """Controls for the adaptive quadrature used by :func:`hyp_u`."""

    relative_tolerance: float = 1e-10
    max_subdivisions: int = 200

    def __post_init__(self):
        if not self.relative_tolerance > 0:
            raise SpecFunError("relative_tolerance must be > 0")
        if self.max_subdivisions < 1:
            raise SpecFunError("max_subdivisions must be >= 1")


DEFAULT_QUAD = QuadratureSpec()


def log_gamma(x: float) -> float:
    """Natural log of the Gamma function for x > 0."""
    if not x > 0:
        raise SpecFunError(f"log_gamma requires x > 0, got {x}")
    return math.lgamma(x)


def log_beta(a: float, b: float) -> float:
    """Natural log of the Beta function B(a, b) for a, b > 0."""
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b)


def _hyp_u_log_integral(eta: float, nu: float, z: float, spec: QuadratureSpec) -> float:
    # Substituting t = e^v turns the integral into
    #     int exp(-z e^v + eta v) (1 + e^v)^{nu-eta-1} dv,
    # whose integrand is smooth and unimodal in v for every admissible
    # (eta, nu, z), including extreme z where the mass sits many decades from
    # t = 1.  The log-integrand is shifted by its maximum so the linear
    # quadrature never under- or overflows.
    pw = nu - eta - 1.0

    def log_g(v: float) -> float:
        if v < 700.0:
            ev = math.exp(v)
            penalty = -z * ev if z * ev < 1e306 else -math.inf
            return penalty + eta * v + pw * math.log1p(ev)
        # log1p(e^v) == v to double precision here; e^v may overflow.
        return -math.inf if z > 0 else eta * v + pw * v

    def dlog_g(v: float) -> float:
        sig = 1.0 / (1.0 + math.exp(-v))
        zev = z * math.exp(v) if v < 700.0 else math.inf
        return eta + pw * sig - zev

    # Mode: dlog_g is positive at -inf and strictly decreasing through its
    # root, so bisection is safe.
    hi = math.log(max(eta + abs(pw), 1.0) / z) + 5.0 if z < 1e300 else 700.0
    lo = min(hi - 1.0, -5.0)
    while dlog_g(lo) <= 0.0:
        lo -= 50.0
    while dlog_g(hi) > 0.0:
        hi += 50.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if dlog_g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    v_star = 0.5 * (lo + hi)
    m = log_g(v_star)

    def bound(direction: float) -> float:
        v, step = v_star, 1.0
        while log_g(v) - m > -60.0:
            v += direction * step
            step *= 2.0
            if abs(v) > 1e6:
                break
        return v

    v_lo, v_hi = bound(-1.0), bound(+1.0)

    def f(v: float) -> float:
        lg = log_g(v) - m
        return math.exp(lg) if lg > -745.0 else 0.0

    value, abserr = quad(f, v_lo, v_hi, epsabs=0.0,
                         epsrel=spec.relative_tolerance,
                         limit=spec.max_subdivisions)
    if value <= 0.0:
        raise ConvergenceError(
            f"quadrature for U({eta}, {nu}, {z}) returned non-positive mass",
            achieved_tol=math.inf)
    if abserr > 10.0 * spec.relative_tolerance * abs(value):
        raise ConvergenceError(
            f"quadrature for U({eta}, {nu}, {z}) did not converge",
            achieved_tol=abserr / abs(value))
    return m + math.log(value)


def hyp_u_log(eta: float, nu: float, z: float,
              spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """log U(eta, nu, z) for eta > 0, z > 0 (second-kind confluent function)."""
    if not eta > 0:
        raise SpecFunError(f"hyp_u requires eta > 0, got {eta}")
    if not z > 0:
        raise SpecFunError(f"hyp_u requires z > 0, got {z}")
    return _hyp_u_log_integral(eta, nu, z, spec) - math.lgamma(eta)


def hyp_u(eta: float, nu: float, z: float,
          spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Confluent hypergeometric function of the second kind U(eta, nu, z)."""
    return math.exp(hyp_u_log(eta, nu, z, spec))


_2F1_MAX_TERMS = 10_000
_2F1_TERM_TOL = 1e-15


def _hyp_2f1_series(a: float, b: float, c: float, z: float) -> float:
    # Direct Gauss series on 0 <= z < 1; deterministic truncation rule.
    term = 1.0
    total = 1.0
    for n in range(_2F1_MAX_TERMS):
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z
        total += term
        if abs(term) < _2F1_TERM_TOL * abs(total):
            return total
    raise ConvergenceError(
        f"2F1 series for ({a}, {b}; {c}; {z}) exceeded {_2F1_MAX_TERMS} terms",
        achieved_tol=abs(term) / abs(total) if total != 0 else math.inf)


def hyp_2f1(a: float, b: float, c: float, z: float) -> float:
    """Gauss hypergeometric 2F1(a, b; c; z) for real arguments with z <= 1.

    Negative z is mapped into (0, 1) via the Pfaff transformation
    2F1(a,b;c;z) = (1-z)^{-a} 2F1(a, c-b; c; z/(z-1)).  At z = 1 the Gauss
    summation theorem applies and requires c - a - b > 0.
    """
    if c <= 0 and c == int(c):
        raise SpecFunError(f"2F1 undefined for non-positive integer c = {c}")
    if z > 1:
        raise SpecFunError(f"2F1 requires z <= 1, got {z}")
    if z == 0.0:
        return 1.0
    if z == 1.0:
        if c - a - b <= 0:
            raise SpecFunError(
                f"2F1 diverges at z = 1 when c - a - b = {c - a - b} <= 0")
        return math.exp(math.lgamma(c) + math.lgamma(c - a - b)
                        - math.lgamma(c - a) - math.lgamma(c - b))
    if z < 0:
        return (1.0 - z) ** (-a) * _hyp_2f1_series(a, c - b, c, z / (z - 1.0))
    return _hyp_2f1_series(a, b, c, z)


def bessel_k(nu: float, x: float) -> float:
    """Modified Bessel function of the second kind K_nu(x), x > 0."""
    if not x > 0:
        raise SpecFunError(f"bessel_k requires x > 0, got {x}")
    return float(_scipy_kv(nu, x))


def erf(x: float) -> float:
    """Error function."""
    return math.erf(x)
