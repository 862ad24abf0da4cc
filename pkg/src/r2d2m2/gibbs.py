"""Blocked Gibbs sampler for the joint-shrinkage multilevel model.

The update cycle is b0 -> b -> u -> sigma^2 -> tau^2 -> xi -> phi, with the
overall block and each grouping factor's per-level blocks drawn from their
exact multivariate-normal conditionals.  The phi update integrates the
global scale out of its conditional; because the normalized-GIG construction
for that draw is exact only when the Gamma shape a1 equals the total
Dirichlet concentration alpha_0, the update runs one auxiliary-variable
sweep (exact for alpha_0 > a1, the practical regime) or an
independence-Metropolis correction (a1 > alpha_0), and refreshes tau^2
jointly with phi.  Both reduce to the plain construction when a1 = alpha_0.

All conditionals are sigma^2-scaled except the intercept prior.  Predictors
are standardized internally; recorded draws are reported on the original
data scale.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .distributions import GigParams, RngStream, sample_gig
from .model import (
    CoefficientIndex,
    DesignError,
    DrawsTable,
    Hyperparameters,
    MultilevelDesign,
    ParameterState,
    config_hash,
    draws_column_names,
    recover_intercept,
    standardize,
)

_CHI_FLOOR = 1e-300      # keeps the GIG chi argument a proper positive value
_TAU2_FLOOR = 1e-250     # float-underflow guard; far below any statistical scale


class ChainError(RuntimeError):
    """A Gibbs step failed; carries the iteration index and a state snapshot."""

    def __init__(self, message: str, iteration: int, state: ParameterState | None = None):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration
        self.state = state


@dataclass(frozen=True)
class GibbsConfig:
    """Chain-length, thinning, seeding, and sigma^2-prior settings."""

    n_iterations: int = 4000
    n_warmup: int = 1000
    thin: int = 1
    n_chains: int = 1
    seed: int = 0
    sigma2_shape: float = 1.0     # inverse-gamma c
    sigma2_scale: float = 1.0     # inverse-gamma d
    center_y: bool = False
    prior_only: bool = False
    frozen_steps: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.n_iterations > self.n_warmup >= 0:
            raise DesignError("need n_iterations > n_warmup >= 0")
        if self.thin < 1:
            raise DesignError("thin must be >= 1")
        if self.n_chains < 1:
            raise DesignError("n_chains must be >= 1")
        if self.sigma2_shape <= 0 or self.sigma2_scale <= 0:
            raise DesignError("inverse-gamma (c, d) must be positive")

    def to_dict(self) -> dict:
        return {
            "n_iterations": self.n_iterations, "n_warmup": self.n_warmup,
            "thin": self.thin, "n_chains": self.n_chains, "seed": self.seed,
            "sigma2_shape": self.sigma2_shape, "sigma2_scale": self.sigma2_scale,
            "center_y": self.center_y, "prior_only": self.prior_only,
        }


@dataclass
class FactorBlocks:
    """Per-factor precomputation: level-local cross products and term slots."""

    levels: np.ndarray          # (N,) level id per observation
    n_levels: int
    z: np.ndarray               # (N, t) per-observation design [1, varying slopes]
    ztz: np.ndarray             # (L, t, t) level-local Z'Z blocks
    slots: np.ndarray           # (t,) phi slots: intercept slot then slope slots
    slope_cols: np.ndarray      # (t-1,) zero-based X columns of the slopes
    ss_levels: np.ndarray       # (t, L) level-local sums of squares

    @property
    def n_terms(self) -> int:
        return self.z.shape[1]

    def contribution(self, u: np.ndarray) -> np.ndarray:
        """Z u evaluated at every observation; u is (t, L)."""
        if self.z.shape[0] == 0:
            return np.zeros(0)
        return np.einsum("nt,tn->n", self.z, u[:, self.levels])

    def zt_r(self, resid: np.ndarray) -> np.ndarray:
        """Level-wise Z'r, returned as (L, t)."""
        out = np.zeros((self.n_levels, self.n_terms))
        np.add.at(out, self.levels, self.z * resid[:, None])
        return out


@dataclass
class PrecomputedDesign:
    """Standardized design plus every data-dependent quantity the steps reuse."""

    x: np.ndarray               # (N, p) standardized predictors
    y: np.ndarray               # (N,) response (centered iff center_y)
    xtx: np.ndarray             # (p, p)
    factors: list[FactorBlocks]
    index: CoefficientIndex
    x_means: np.ndarray
    x_sds: np.ndarray
    y_mean: float

    @property
    def n_obs(self) -> int:
        return self.x.shape[0]

    @property
    def n_predictors(self) -> int:
        return self.x.shape[1]

    @property
    def n_coefficients(self) -> int:
        """sigma^2-scaled coefficient count: p + sum_g L_g * t_g."""
        return self.n_predictors + sum(f.n_levels * f.n_terms for f in self.factors)

    @property
    def ss_overall(self) -> np.ndarray:
        return np.einsum("ij,ij->j", self.x, self.x)

    def ss_profile(self):
        """Standardized-scale r values (sigma_x = 1): SS_i and SS_ig_j."""
        from .prior_analysis import SsProfile

        return SsProfile(overall=self.ss_overall,
                         varying=[f.ss_levels for f in self.factors])

    @classmethod
    def from_design(cls, design: MultilevelDesign, center_y: bool = False,
                    prior_only: bool = False) -> "PrecomputedDesign":
        std = design if design.standardized else standardize(design, center_y=center_y)
        keep = slice(0, 0) if prior_only else slice(None)
        x = np.ascontiguousarray(std.x[keep])
        y = np.ascontiguousarray(std.y[keep])
        n = x.shape[0]
        factors = []
        for g in std.factors:
            levels = g.levels[keep]
            t = g.n_terms
            cols = np.array(g.varying_slopes, dtype=int) - 1
            z = np.column_stack([np.ones(n), x[:, cols]]) if n else np.empty((0, t))
            ztz = np.zeros((g.n_levels, t, t))
            ss = np.zeros((t, g.n_levels))
            for j in range(g.n_levels):
                rows = np.flatnonzero(levels == j)
                if rows.size:
                    zj = z[rows]
                    ztz[j] = zj.T @ zj
                    ss[:, j] = np.einsum("nt,nt->t", zj, zj)
            factors.append(FactorBlocks(
                levels=levels, n_levels=g.n_levels, z=z, ztz=ztz,
                slots=np.array([], dtype=int), slope_cols=cols, ss_levels=ss))
        index = CoefficientIndex.from_design(std)
        for k, fb in enumerate(factors):
            fb.slots = np.array(index.factor_slots(k), dtype=int)
        x_means = std.x_means if std.x_means is not None else np.zeros(x.shape[1])
        x_sds = std.x_sds if std.x_sds is not None else np.ones(x.shape[1])
        return cls(x=x, y=y, xtx=x.T @ x, factors=factors, index=index,
                   x_means=x_means, x_sds=x_sds, y_mean=std.y_mean)


def initial_state(data: PrecomputedDesign, hyper: Hyperparameters) -> ParameterState:
    """Deterministic in-support initialization."""
    idx = data.index
    sigma2 = float(np.var(data.y, ddof=1)) if data.n_obs > 1 else 1.0
    if not sigma2 > 0:
        sigma2 = 1.0
    return ParameterState(
        b0=0.0,
        b=np.zeros(idx.n_predictors),
        u=[np.zeros((1 + len(idx.factor_slopes[k]), idx.factor_levels[k]))
           for k in range(idx.n_factors)],
        sigma2=sigma2,
        tau2=hyper.mu_r2 / (1.0 - hyper.mu_r2),
        phi=np.full(idx.n_terms, 1.0 / idx.n_terms),
        xi=hyper.a2,
    )


def _u_contribution(data: PrecomputedDesign, state: ParameterState) -> np.ndarray:
    total = np.zeros(data.n_obs)
    for fb, uk in zip(data.factors, state.u):
        total += fb.contribution(uk)
    return total


def step_b0(state: ParameterState, data: PrecomputedDesign,
            hyper: Hyperparameters, rng: RngStream) -> float:
    """Conjugate draw of the intercept under its Normal(0, intercept_sd^2) prior."""
    n = data.n_obs
    prec = n / state.sigma2 + 1.0 / hyper.intercept_sd ** 2
    if n:
        resid = data.y - data.x @ state.b - _u_contribution(data, state)
        mean = (resid.sum() / state.sigma2) / prec
    else:
        mean = 0.0
    return mean + rng.generator.normal() / math.sqrt(prec)


def step_b(state: ParameterState, data: PrecomputedDesign, rng: RngStream) -> np.ndarray:
    """Overall-slope block draw from Normal((X'X+G^-1)^-1 X'r, sigma^2 (X'X+G^-1)^-1)."""
    p = data.n_predictors
    if p == 0:
        return state.b
    slots = np.arange(p)
    gamma_inv = 1.0 / np.maximum(state.phi[slots] * state.tau2, _CHI_FLOOR)
    a = data.xtx.copy()
    a[np.diag_indices_from(a)] += gamma_inv
    if data.n_obs:
        xtr = data.x.T @ (data.y - state.b0 - _u_contribution(data, state))
    else:
        xtr = np.zeros(p)
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        diag = np.diag(a)
        raise ChainError(
            f"overall-block factorization failed (diagonal range "
            f"[{diag.min():.3e}, {diag.max():.3e}])", -1, state) from exc
    mean = np.linalg.solve(a, xtr)
    noise = np.linalg.solve(chol.T, rng.generator.standard_normal(p))
    return mean + math.sqrt(state.sigma2) * noise


def step_u(state: ParameterState, data: PrecomputedDesign, rng: RngStream) -> list[np.ndarray]:
    """Per-level blocked draws of the varying coefficients, factor by factor.

    With one grouping factor Z'Z is block-diagonal by level, so every
    level's block is independent; with several factors the updates run
    sequentially, each conditioning on the others' current values.
    """
    gen = rng.generator
    new_u = [uk.copy() for uk in state.u]
    if not data.factors:
        return new_u
    base = None
    if data.n_obs:
        base = data.y - state.b0 - data.x @ state.b
        contribs = [fb.contribution(uk) for fb, uk in zip(data.factors, new_u)]
    for k, fb in enumerate(data.factors):
        t = fb.n_terms
        gamma_inv = 1.0 / np.maximum(state.phi[fb.slots] * state.tau2, _CHI_FLOOR)
        a = fb.ztz + np.diag(gamma_inv)[None, :, :]
        try:
            chol = np.linalg.cholesky(a)
        except np.linalg.LinAlgError as exc:
            raise ChainError(
                f"factor {k}: level-block factorization failed", -1, state) from exc
        if data.n_obs:
            resid = base - (sum(contribs) - contribs[k])
            ztr = fb.zt_r(resid)
            mean = np.linalg.solve(a, ztr[:, :, None])[:, :, 0]
        else:
            mean = np.zeros((fb.n_levels, t))
        z = gen.standard_normal((fb.n_levels, t))
        noise = np.linalg.solve(np.transpose(chol, (0, 2, 1)), z[:, :, None])[:, :, 0]
        new_u[k] = (mean + math.sqrt(state.sigma2) * noise).T
        if data.n_obs:
            contribs[k] = fb.contribution(new_u[k])
    return new_u


def _quad_forms(state: ParameterState, data: PrecomputedDesign) -> float:
    """b' T_b^-1 b + u' T_u^-1 u with T = Gamma / tau^2 (i.e. divided by phi only)."""
    p = data.n_predictors
    total = float(np.sum(state.b ** 2 / np.maximum(state.phi[:p], _CHI_FLOOR)))
    for fb, uk in zip(data.factors, state.u):
        phi_g = np.maximum(state.phi[fb.slots], _CHI_FLOOR)
        total += float(np.sum((uk ** 2).sum(axis=1) / phi_g))
    return total


def step_sigma2(state: ParameterState, data: PrecomputedDesign,
                config: GibbsConfig, rng: RngStream) -> float:
    """Inverse-gamma draw with shape c + (N + #coefficients)/2."""
    shape = config.sigma2_shape + 0.5 * (data.n_obs + data.n_coefficients)
    rss = 0.0
    if data.n_obs:
        resid = data.y - state.b0 - data.x @ state.b - _u_contribution(data, state)
        rss = float(resid @ resid)
    scale = config.sigma2_scale + 0.5 * (rss + _quad_forms(state, data) / max(state.tau2, _TAU2_FLOOR))
    return scale / rng.generator.gamma(shape)


def step_tau2(state: ParameterState, data: PrecomputedDesign,
              hyper: Hyperparameters, rng: RngStream) -> float:
    """GIG draw of the global scale given phi, coefficients, sigma, xi."""
    chi = max(_quad_forms(state, data) / state.sigma2, _CHI_FLOOR)
    nu = hyper.a1 - 0.5 * data.n_coefficients
    draw = sample_gig(GigParams(chi=chi, rho=2.0 * state.xi, nu=nu), rng)
    return max(draw, _TAU2_FLOOR)


def step_xi(state: ParameterState, hyper: Hyperparameters, rng: RngStream) -> float:
    """xi ~ Gamma(a1 + a2, rate 1 + tau^2)."""
    return rng.generator.gamma(hyper.a1 + hyper.a2, 1.0 / (1.0 + state.tau2))


def _phi_gig_params(state: ParameterState, data: PrecomputedDesign,
                    alpha: np.ndarray, rho: float) -> list[GigParams]:
    p = data.n_predictors
    chi = np.empty(data.index.n_terms)
    nu = np.empty(data.index.n_terms)
    chi[:p] = state.b ** 2 / state.sigma2
    nu[:p] = alpha[:p] - 0.5
    for fb, uk in zip(data.factors, state.u):
        chi[fb.slots] = (uk ** 2).sum(axis=1) / state.sigma2
        nu[fb.slots] = alpha[fb.slots] - 0.5 * fb.n_levels
    chi = np.maximum(chi, _CHI_FLOOR)
    return [GigParams(chi=float(c), rho=rho, nu=float(v)) for c, v in zip(chi, nu)]


def step_phi(state: ParameterState, data: PrecomputedDesign,
             hyper: Hyperparameters, rng: RngStream) -> tuple[np.ndarray, float]:
    """Joint (phi, tau^2) refresh from their conditional given b, u, sigma, xi.

    Draws one unnormalized scale per term: overall terms use
    GIG(b_j^2/sigma^2, rho, alpha_j - 1/2), varying terms use
    GIG(sum_levels u^2/sigma^2, rho, alpha_j - L/2); phi is the normalized
    vector and tau^2 the sum.  rho is 2(xi + s) with the auxiliary
    s ~ Gamma(alpha_0 - a1, rate tau^2) whenever alpha_0 > a1; when
    a1 > alpha_0 an independence-Metropolis accept/reject applies instead.
    Returns (phi, tau2).
    """
    idx = data.index
    alpha = hyper.alpha_vector(idx.n_terms)
    alpha0 = float(alpha.sum())
    beta = alpha0 - hyper.a1
    gen = rng.generator

    if abs(beta) < 1e-12:
        draws = np.array([sample_gig(g, rng) for g in
                          _phi_gig_params(state, data, alpha, 2.0 * state.xi)])
        total = max(float(draws.sum()), _TAU2_FLOOR)
        return draws / total, total
    if beta > 0:
        s = gen.gamma(beta, 1.0 / max(state.tau2, _TAU2_FLOOR))
        draws = np.array([sample_gig(g, rng) for g in
                          _phi_gig_params(state, data, alpha, 2.0 * (state.xi + s))])
        total = max(float(draws.sum()), _TAU2_FLOOR)
        return draws / total, total
    # a1 > alpha_0: propose from the plain construction, correct by MH.
    draws = np.array([sample_gig(g, rng) for g in
                      _phi_gig_params(state, data, alpha, 2.0 * state.xi)])
    total = max(float(draws.sum()), _TAU2_FLOOR)
    log_accept = (hyper.a1 - alpha0) * (math.log(total) - math.log(max(state.tau2, _TAU2_FLOOR)))
    if math.log(gen.random()) <= log_accept:
        return draws / total, total
    return state.phi, state.tau2


_STEP_NAMES = ("b0", "b", "u", "sigma2", "tau2", "xi", "phi")


def run_chain(design: MultilevelDesign, hyper: Hyperparameters,
              config: GibbsConfig, chain_id: int = 0,
              init: ParameterState | None = None) -> DrawsTable:
    """Run one chain and return the recorded draws on the original data scale."""
    for name in config.frozen_steps:
        if name not in _STEP_NAMES:
            raise DesignError(f"unknown frozen step {name!r}")
    data = PrecomputedDesign.from_design(
        design, center_y=config.center_y, prior_only=config.prior_only)
    idx = data.index
    alpha = hyper.alpha_vector(idx.n_terms)     # validates length up front
    rng = RngStream(config.seed).child(chain_id)
    state = init if init is not None else initial_state(data, hyper)
    state.validate(idx)

    kept = (config.n_iterations - config.n_warmup + config.thin - 1) // config.thin
    store = {
        "b0": np.empty(kept), "b": np.empty((kept, idx.n_predictors)),
        "u": [np.empty((kept, 1 + len(idx.factor_slopes[k]), idx.factor_levels[k]))
              for k in range(idx.n_factors)],
        "sigma2": np.empty(kept), "tau2": np.empty(kept),
        "phi": np.empty((kept, idx.n_terms)),
    }
    frozen = set(config.frozen_steps)
    t_start = time.perf_counter()
    row = 0
    for it in range(config.n_iterations):
        try:
            if "b0" not in frozen:
                state.b0 = step_b0(state, data, hyper, rng)
            if "b" not in frozen:
                state.b = step_b(state, data, rng)
            if "u" not in frozen:
                state.u = step_u(state, data, rng)
            if "sigma2" not in frozen:
                state.sigma2 = step_sigma2(state, data, config, rng)
            if "tau2" not in frozen:
                state.tau2 = step_tau2(state, data, hyper, rng)
            if "xi" not in frozen:
                state.xi = step_xi(state, hyper, rng)
            if "phi" not in frozen:
                state.phi, state.tau2 = step_phi(state, data, hyper, rng)
        except ChainError as exc:
            raise ChainError(str(exc), it, state) from exc
        except (np.linalg.LinAlgError, ValueError, ArithmeticError) as exc:
            raise ChainError(f"step failed: {exc}", it, state) from exc
        if it >= config.n_warmup and (it - config.n_warmup) % config.thin == 0:
            store["b0"][row] = state.b0
            store["b"][row] = state.b
            for k in range(idx.n_factors):
                store["u"][k][row] = state.u[k]
            store["sigma2"][row] = state.sigma2
            store["tau2"][row] = state.tau2
            store["phi"][row] = state.phi
            row += 1
    elapsed = time.perf_counter() - t_start

    # Back-transform to the original data scale.
    sds = data.x_sds
    b_orig = store["b"] / sds[None, :]
    b0_orig = np.array([
        recover_intercept(b0c, data.y_mean, data.x_means, b_orig[i])
        for i, b0c in enumerate(store["b0"])])
    columns: dict[str, np.ndarray] = {"b0": b0_orig}
    for i in range(idx.n_predictors):
        columns[f"b[{i + 1}]"] = np.ascontiguousarray(b_orig[:, i])
    for k in range(idx.n_factors):
        terms = [0] + list(idx.factor_slopes[k])
        for d_pos, d in enumerate(terms):
            scale = 1.0 if d == 0 else 1.0 / sds[d - 1]
            for lev in range(idx.factor_levels[k]):
                columns[f"u[{k + 1},{d},{lev + 1}]"] = \
                    np.ascontiguousarray(store["u"][k][:, d_pos, lev] * scale)
    columns["sigma"] = np.sqrt(store["sigma2"])
    columns["tau2"] = store["tau2"]
    columns["R2"] = store["tau2"] / (1.0 + store["tau2"])
    for m in range(idx.n_terms):
        columns[f"phi[{m + 1}]"] = np.ascontiguousarray(store["phi"][:, m])
    lam_scale = np.ones(idx.n_terms)
    lam_scale[:idx.n_predictors] = 1.0 / sds ** 2
    for k in range(idx.n_factors):
        for i in idx.factor_slopes[k]:
            lam_scale[idx.slope_slot(k, i)] = 1.0 / sds[i - 1] ** 2
    lam = store["phi"] * (store["sigma2"] * store["tau2"])[:, None] * lam_scale[None, :]
    for m in range(idx.n_terms):
        columns[f"lambda2[{m + 1}]"] = np.ascontiguousarray(lam[:, m])

    expected = draws_column_names(idx)
    columns = {name: columns[name] for name in expected}
    return DrawsTable(
        columns=columns, chain_id=chain_id,
        metadata={
            "seed": config.seed, "chain_id": chain_id,
            "config_hash": config_hash(config.to_dict()),
            "n_iterations": config.n_iterations, "n_warmup": config.n_warmup,
            "thin": config.thin, "elapsed_seconds": round(elapsed, 4),
            "x_means": data.x_means.tolist(), "x_sds": data.x_sds.tolist(),
            "y_mean": data.y_mean,
        })


def run_chains(design: MultilevelDesign, hyper: Hyperparameters,
               config: GibbsConfig, n_workers: int = 1) -> list[DrawsTable]:
    """Run config.n_chains chains on disjoint streams, optionally in parallel."""
    ids = list(range(config.n_chains))
    if n_workers <= 1 or config.n_chains == 1:
        return [run_chain(design, hyper, config, chain_id=c) for c in ids]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        futures = [pool.submit(run_chain, design, hyper, config, c) for c in ids]
        return [f.result() for f in futures]
