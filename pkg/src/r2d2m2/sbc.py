"""Simulation-based calibration of the Gibbs sampler.

Each trial draws true parameters from the prior, simulates data from the
likelihood (covariates drawn independently of the parameters), fits the
chain, and records the rank of every true value within the thinned
posterior draws.  Under a calibrated sampler those ranks are uniform; the
ECDF-difference test checks that with a simultaneous confidence band whose
pointwise level is calibrated by simulation.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.stats import binom

from .datasim import _ar1_rows
from .distributions import ParameterError, RngStream
from .gibbs import ChainError, GibbsConfig, run_chain
from .model import GroupingFactor, Hyperparameters, MultilevelDesign


class InsufficientDataError(ValueError):
    """Too few ranks to run the uniformity test."""


class SbcFailureRateError(RuntimeError):
    """More than the tolerated fraction of chains failed."""


@dataclass(frozen=True)
class SbcTemplate:
    """The probabilistic program shared by the generator and the fitter."""

    p: int = 10
    n_factors: int = 1
    n_levels: int = 20
    n_obs: int = 100
    rho: float = 0.0
    mu_r2: float = 0.5
    phi_r2: float = 1.0
    a_pi: float = 0.5
    sigma2_shape: float = 1.0
    sigma2_scale: float = 1.0
    intercept_sd: float = 10.0
    n_warmup: int = 1000

    def hyper(self) -> Hyperparameters:
        return Hyperparameters(
            mu_r2=self.mu_r2, phi_r2=self.phi_r2, alpha=self.a_pi,
            sigma_prior={"kind": "inv_gamma", "shape": self.sigma2_shape,
                         "scale": self.sigma2_scale},
            intercept_sd=self.intercept_sd)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RankTable:
    """Integer ranks in [0, s_eff] per tracked quantity across trials."""

    quantities: list[str]
    ranks: np.ndarray            # (T_ok, n_quantities)
    s_eff: int
    n_failed: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ranks = np.asarray(self.ranks, dtype=int)
        if self.ranks.ndim != 2 or self.ranks.shape[1] != len(self.quantities):
            raise ParameterError("rank matrix shape does not match quantity names")
        if self.ranks.size and (self.ranks.min() < 0 or self.ranks.max() > self.s_eff):
            raise ParameterError("ranks out of [0, s_eff]")

    @property
    def n_trials(self) -> int:
        return self.ranks.shape[0]

    def save(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.quantities)
            writer.writerows(self.ranks.tolist())
        with open(str(path) + ".meta.json", "w") as fh:
            json.dump({"s_eff": self.s_eff, "n_failed": self.n_failed,
                       "metadata": self.metadata}, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "RankTable":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            names = next(reader)
            rows = [[int(v) for v in row] for row in reader if row]
        with open(str(path) + ".meta.json") as fh:
            meta = json.load(fh)
        return cls(quantities=names, ranks=np.array(rows, dtype=int),
                   s_eff=meta["s_eff"], n_failed=meta.get("n_failed", 0),
                   metadata=meta.get("metadata", {}))


def tracked_quantities(p: int, n_factors: int, n_levels: int) -> list[str]:
    """Every model parameter plus R^2 and tau^2, in draws-column naming."""
    names = ["b0"]
    names += [f"b[{i}]" for i in range(1, p + 1)]
    n_terms = p + n_factors + n_factors * p
    for k in range(n_factors):
        for d in range(0, p + 1):
            for lev in range(1, n_levels + 1):
                names.append(f"u[{k + 1},{d},{lev}]")
    names += ["sigma", "tau2", "R2"]
    names += [f"phi[{m}]" for m in range(1, n_terms + 1)]
    return names


def compute_rank(truth: float, draws: np.ndarray) -> int:
    """Number of draws strictly below the true value."""
    return int(np.sum(draws < truth))


def _simulate_trial(template: SbcTemplate, rng: RngStream):
    """Draw (theta, data) from the joint model; returns design + truth map."""
    gen = rng.generator
    t = template
    x = _ar1_rows(t.n_obs, t.p, t.rho, gen)
    x_means = x.mean(axis=0)
    x_sds = x.std(axis=0, ddof=1)
    xs = (x - x_means) / x_sds
    levels = [gen.integers(0, t.n_levels, size=t.n_obs) for _ in range(t.n_factors)]

    hyper = t.hyper()
    n_terms = t.p + t.n_factors + t.n_factors * t.p
    alpha = hyper.alpha_vector(n_terms)
    sigma2 = t.sigma2_scale / gen.gamma(t.sigma2_shape)
    r2 = gen.beta(hyper.a1, hyper.a2)
    tau2 = r2 / (1.0 - r2)
    phi = gen.dirichlet(alpha) if n_terms > 1 else np.ones(1)
    b0 = gen.normal(0.0, t.intercept_sd)
    b_std = gen.normal(size=t.p) * np.sqrt(sigma2 * phi[:t.p] * tau2)
    mu = b0 + xs @ b_std
    u_std = []
    for k in range(t.n_factors):
        slots = [t.p + k] + [t.p + t.n_factors + k * t.p + (i - 1) for i in range(1, t.p + 1)]
        sd = np.sqrt(sigma2 * phi[slots] * tau2)
        uk = gen.normal(size=(t.p + 1, t.n_levels)) * sd[:, None]
        lv = levels[k]
        mu = mu + uk[0, lv] + np.einsum("np,pn->n", xs, uk[1:, lv])
        u_std.append(uk)
    y = mu + math.sqrt(sigma2) * gen.standard_normal(t.n_obs)

    factors = [GroupingFactor(name=f"g{k + 1}", levels=levels[k],
                              n_levels=t.n_levels,
                              varying_slopes=tuple(range(1, t.p + 1)))
               for k in range(t.n_factors)]
    design = MultilevelDesign(y=y, x=x, factors=factors)

    # Truth on the original data scale, matching the recorded draw columns.
    truth = {"b0": b0 - float(np.dot(x_means, b_std / x_sds)),
             "sigma": math.sqrt(sigma2), "tau2": tau2, "R2": r2}
    for i in range(t.p):
        truth[f"b[{i + 1}]"] = b_std[i] / x_sds[i]
    for k in range(t.n_factors):
        for d in range(0, t.p + 1):
            scale = 1.0 if d == 0 else 1.0 / x_sds[d - 1]
            for lev in range(t.n_levels):
                truth[f"u[{k + 1},{d},{lev + 1}]"] = u_std[k][d, lev] * scale
    for m in range(n_terms):
        truth[f"phi[{m + 1}]"] = phi[m]
    return design, truth


def _run_one_trial(args) -> tuple[int, dict | None, str | None]:
    template, seed, trial, s_draws, thin_ranks = args
    rng = RngStream(seed).child(trial)
    design, truth = _simulate_trial(template, rng.child(1))
    config = GibbsConfig(
        n_iterations=template.n_warmup + s_draws, n_warmup=template.n_warmup,
        thin=1, seed=seed, sigma2_shape=template.sigma2_shape,
        sigma2_scale=template.sigma2_scale, center_y=False)
    try:
        table = run_chain(design, template.hyper(), config,
                          chain_id=_splitmix_trial(trial))
    except ChainError as exc:
        return trial, None, str(exc)
    ranks = {}
    for name, true_value in truth.items():
        draws = table.columns[name][::thin_ranks]
        ranks[name] = compute_rank(true_value, draws)
    return trial, ranks, None


def _splitmix_trial(trial: int) -> int:
    # Distinct chain ids per trial so chain streams never collide.
    return trial + 1


def sbc_run(template: SbcTemplate, n_trials: int = 100, s_draws: int = 3000,
            thin: int | None = None, seed: int = 0, n_workers: int = 1,
            max_failure_rate: float = 0.02) -> RankTable:
    """Run the calibration study and collect the rank table.

    ``thin`` defaults to s_draws // 100 so the rank resolution is about 100
    effectively-spaced draws per trial.  Failed chains are recorded and
    excluded; more than ``max_failure_rate`` of them invalidates the run.
    """
    if n_trials < 1 or s_draws < 2:
        raise ParameterError("need n_trials >= 1 and s_draws >= 2")
    thin_ranks = thin if thin is not None else max(1, s_draws // 100)
    s_eff = (s_draws + thin_ranks - 1) // thin_ranks
    names = tracked_quantities(template.p, template.n_factors, template.n_levels)
    jobs = [(template, seed, trial, s_draws, thin_ranks) for trial in range(n_trials)]
    results = []
    if n_workers <= 1:
        for job in jobs:
            results.append(_run_one_trial(job))
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_run_one_trial, jobs, chunksize=1))
    failures = [(t, err) for t, r, err in results if r is None]
    if len(failures) > max_failure_rate * n_trials:
        raise SbcFailureRateError(
            f"{len(failures)}/{n_trials} chains failed: {failures[:3]}")
    rows = [[r[name] for name in names] for _, r, err in sorted(results) if r is not None]
    return RankTable(
        quantities=names, ranks=np.array(rows, dtype=int), s_eff=s_eff,
        n_failed=len(failures),
        metadata={"template": template.to_dict(), "n_trials": n_trials,
                  "s_draws": s_draws, "thin": thin_ranks, "seed": seed,
                  "failed_trials": [t for t, _ in failures]})


# ---------------------------------------------------------------------------
# ECDF-difference uniformity test with simulation-calibrated bands.


def _simulated_ecdfs(n_ranks: int, s_eff: int, m_sim: int,
                     rng: RngStream) -> np.ndarray:
    sims = rng.generator.integers(0, s_eff + 1, size=(m_sim, n_ranks))
    offset = (s_eff + 1) * np.arange(m_sim)[:, None]
    counts = np.bincount((sims + offset).ravel(),
                         minlength=m_sim * (s_eff + 1)).reshape(m_sim, s_eff + 1)
    return counts.cumsum(axis=1)[:, :-1] / n_ranks     # drop the trivial last point


def _bands(beta: float, n_ranks: int, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lower = binom.ppf(beta / 2.0, n_ranks, probs) / n_ranks
    upper = binom.ppf(1.0 - beta / 2.0, n_ranks, probs) / n_ranks
    return lower, upper


_CALIBRATION_CACHE: dict[tuple, float] = {}


def _calibrated_level(n_ranks: int, s_eff: int, gamma: float, m_sim: int,
                      seed: int) -> float:
    """Pointwise two-sided level whose joint band covers >= gamma (cached)."""
    key = (n_ranks, s_eff, gamma, m_sim, seed)
    if key in _CALIBRATION_CACHE:
        return _CALIBRATION_CACHE[key]
    probs = (np.arange(s_eff) + 1.0) / (s_eff + 1.0)
    sim = _simulated_ecdfs(n_ranks, s_eff, m_sim, RngStream(seed))

    def coverage(beta: float) -> float:
        lower, upper = _bands(beta, n_ranks, probs)
        inside = np.all((sim >= lower) & (sim <= upper), axis=1)
        return float(inside.mean())

    lo, hi = 1e-10, 1.0 - 1e-10
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if coverage(mid) >= gamma:
            lo = mid
        else:
            hi = mid
    _CALIBRATION_CACHE[key] = lo
    return lo


def ecdf_envelope(ranks, gamma: float = 0.95, s_eff: int | None = None,
                  m_sim: int = 5000, calibration_seed: int = 20_201_203) -> dict:
    """Simultaneous ECDF confidence-band test for rank uniformity.

    The pointwise binomial level is calibrated by simulation so the joint
    band has coverage gamma under uniform ranks (conservative at ties).
    Returns pass/fail plus the rotated ECDF-difference curve and band.
    """
    ranks = np.asarray(ranks, dtype=int)
    if ranks.ndim != 1:
        raise ParameterError("ranks must be a 1-D integer vector")
    if ranks.size < 20:
        raise InsufficientDataError(
            f"need at least 20 ranks for the envelope test, got {ranks.size}")
    if not 0.0 < gamma < 1.0:
        raise ParameterError("gamma must be in (0, 1)")
    s_max = s_eff if s_eff is not None else int(ranks.max())
    if ranks.min() < 0 or ranks.max() > s_max:
        raise ParameterError("ranks out of [0, s_eff]")
    n = ranks.size
    probs = (np.arange(s_max) + 1.0) / (s_max + 1.0)
    beta = _calibrated_level(n, s_max, gamma, m_sim, calibration_seed)
    lower, upper = _bands(beta, n, probs)

    counts = np.bincount(ranks, minlength=s_max + 1)
    ecdf = counts.cumsum()[:-1] / n
    ok = bool(np.all((ecdf >= lower) & (ecdf <= upper)))
    return {
        "pass": ok,
        "gamma": gamma,
        "pointwise_level": beta,
        "z": probs.tolist(),
        "ecdf": ecdf.tolist(),
        "ecdf_diff": (ecdf - probs).tolist(),
        "band_lower_diff": (lower - probs).tolist(),
        "band_upper_diff": (upper - probs).tolist(),
        "n_ranks": n,
        "s_eff": s_max,
    }


def envelope_report(table: RankTable, gamma: float = 0.95,
                    m_sim: int = 5000) -> dict:
    """Envelope test per tracked quantity; returns per-quantity results + summary."""
    results = {}
    n_pass = 0
    for j, name in enumerate(table.quantities):
        res = ecdf_envelope(table.ranks[:, j], gamma=gamma, s_eff=table.s_eff,
                            m_sim=m_sim)
        results[name] = res
        n_pass += res["pass"]
    return {
        "gamma": gamma,
        "n_quantities": len(table.quantities),
        "n_pass": n_pass,
        "pass_rate": n_pass / len(table.quantities),
        "per_quantity": results,
    }
