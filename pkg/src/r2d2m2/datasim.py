"""Sparse multilevel data generator with noise calibrated to a target R^2.

Covariate rows follow an AR(1) correlation structure; overall and varying
coefficients are drawn from centered normals and zeroed at configurable
rates, with varying slopes forced to zero whenever their overall parent is
zero.  The residual sd is solved per dataset so that the population identity
var(mu) / (var(mu) + sigma^2) equals the requested R^2 exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .distributions import ParameterError, RngStream
from .model import GroupingFactor, MultilevelDesign


class DegenerateDataError(RuntimeError):
    """Every coefficient collapsed to zero; the dataset carries no signal."""


@dataclass(frozen=True)
class SimConfig:
    """Data-generating-process knobs.

    ``z`` (the varying-coefficient zeroing probability) defaults to ``v``,
    matching how the two rates are always tied in the reference experiments.
    """

    n_train: int = 200
    n_test: int = 200
    p: int = 10
    n_factors: int = 1
    n_levels: int = 20
    rho: float = 0.0
    v: float = 0.95
    z: float | None = None
    sigma_intercept: float = 2.0
    sigma_overall: float = 3.0
    sigma_varying: float = 2.0
    r2_target: float = 0.75
    sigma_fixed: float | None = None      # bypasses the R^2 solver when set
    seed: int = 0

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 0:
            raise ParameterError("need n_train >= 1 and n_test >= 0")
        if self.p < 1:
            raise ParameterError("p must be >= 1")
        if self.n_factors < 0 or (self.n_factors > 0 and self.n_levels < 1):
            raise ParameterError("invalid grouping structure")
        if not 0.0 <= self.rho < 1.0:
            raise ParameterError(f"rho must be in [0, 1), got {self.rho}")
        if not 0.0 <= self.v <= 1.0 or not 0.0 <= self.z_eff <= 1.0:
            raise ParameterError("zeroing probabilities must be in [0, 1]")
        for name in ("sigma_intercept", "sigma_overall", "sigma_varying"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be > 0")
        if self.sigma_fixed is None and not 0.0 < self.r2_target < 1.0:
            raise ParameterError(f"r2_target must be in (0, 1), got {self.r2_target}")
        if self.sigma_fixed is not None and self.sigma_fixed <= 0:
            raise ParameterError("sigma_fixed must be > 0")

    @property
    def z_eff(self) -> float:
        return self.v if self.z is None else self.z

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        return cls(**d)


def _ar1_rows(n: int, p: int, rho: float, gen: np.random.Generator) -> np.ndarray:
    """Rows from N(0, C) with C_ij = rho^|i-j|, via the exact AR recursion."""
    x = gen.standard_normal((n, p))
    if rho != 0.0 and p > 1:
        w = math.sqrt(1.0 - rho * rho)
        for j in range(1, p):
            x[:, j] = rho * x[:, j - 1] + w * x[:, j]
    return x


def gen_design(config: SimConfig, rng: RngStream,
               max_attempts: int = 1000) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    """Draw covariates and level assignments for train and test rows.

    Every level must appear in the training rows (test rows reuse training
    levels; no new-level prediction), so assignments are redrawn until all
    levels are covered.
    """
    gen = rng.generator
    x_train = _ar1_rows(config.n_train, config.p, config.rho, gen)
    x_test = _ar1_rows(config.n_test, config.p, config.rho, gen)
    levels = []
    for _ in range(config.n_factors):
        for _ in range(max_attempts):
            train_lv = gen.integers(0, config.n_levels, size=config.n_train)
            if np.unique(train_lv).size == config.n_levels:
                break
        else:
            raise ParameterError(
                f"could not cover all {config.n_levels} levels in "
                f"{config.n_train} training rows")
        test_lv = gen.integers(0, config.n_levels, size=config.n_test)
        levels.append((train_lv, test_lv))
    return x_train, x_test, levels


def gen_coefficients(config: SimConfig, rng: RngStream) -> dict:
    """Draw (b0, b, u) with Bernoulli zeroing masks.

    Overall slopes are zeroed with probability v.  Varying terms are zeroed
    with probability z at the term level (a zeroed term drops all of its
    levels at once, matching the model's one-scale-per-term structure), and
    slope terms are additionally forced to zero whenever the parent overall
    slope is zero.
    """
    gen = rng.generator
    b0 = gen.normal(0.0, config.sigma_intercept)
    keep_b = gen.random(config.p) >= config.v
    b = gen.normal(0.0, config.sigma_overall, size=config.p) * keep_b
    u, u_masks = [], []
    for _ in range(config.n_factors):
        raw = gen.normal(0.0, config.sigma_varying,
                         size=(config.p + 1, config.n_levels))
        keep_term = gen.random(config.p + 1) >= config.z_eff
        keep_term[1:] &= keep_b
        keep_u = np.repeat(keep_term[:, None], config.n_levels, axis=1)
        u.append(raw * keep_u)
        u_masks.append(keep_u)
    return {"b0": b0, "b": b, "mask_b": keep_b, "u": u, "mask_u": u_masks}


def solve_sigma_for_r2(var_mu: float, r2_target: float) -> float:
    """sigma with var(mu)/(var(mu) + sigma^2) = r2_target exactly."""
    if not var_mu > 0:
        raise DegenerateDataError(
            "linear predictor has zero variance (all coefficients zeroed); "
            "regenerate the dataset")
    if not 0.0 < r2_target < 1.0:
        raise ParameterError(f"r2_target must be in (0, 1), got {r2_target}")
    return math.sqrt(var_mu * (1.0 - r2_target) / r2_target)


def population_sigma_for_r2(config: SimConfig) -> float:
    """Noise sd calibrated at the configuration level rather than per dataset.

    Uses the data-generating process's expected linear-predictor variance,
    E var(mu) = p(1-v) sigma_b^2 + K(1-z) sigma_g^2 + pK(1-v)(1-z) sigma_g^2,
    so one configuration shares a single sigma across its replications and
    signal strength varies relative to the noise.  Pass the result through
    ``sigma_fixed`` to bypass the per-dataset solver.
    """
    keep_b = 1.0 - config.v
    keep_u = 1.0 - config.z_eff
    evar = (config.p * keep_b * config.sigma_overall ** 2
            + config.n_factors * keep_u * config.sigma_varying ** 2
            + config.p * config.n_factors * keep_b * keep_u * config.sigma_varying ** 2)
    if not evar > 0:
        raise DegenerateDataError(
            "the configuration's expected signal variance is zero")
    return solve_sigma_for_r2(evar, config.r2_target)


def _linear_pred(x, levels, coefs, config) -> np.ndarray:
    mu = coefs["b0"] + x @ coefs["b"]
    for k in range(config.n_factors):
        uk = coefs["u"][k]
        lv = levels[k]
        mu = mu + uk[0, lv] + np.einsum("np,pn->n", x, uk[1:, lv])
    return mu


@dataclass
class SimDataset:
    """Train/test bundle with the full ground truth record.

    ``test`` is None when the config requests no held-out rows.
    """

    train: MultilevelDesign
    test: MultilevelDesign | None
    truth: dict = field(default_factory=dict)


def gen_dataset(config: SimConfig, rng: RngStream | None = None) -> SimDataset:
    """Generate one dataset; raises DegenerateDataError on an all-zero draw."""
    rng = rng if rng is not None else RngStream(config.seed)
    x_train, x_test, levels = gen_design(config, rng)
    coefs = gen_coefficients(config, rng)
    mu_train = _linear_pred(x_train, [lv[0] for lv in levels], coefs, config)
    mu_test = _linear_pred(x_test, [lv[1] for lv in levels], coefs, config)
    if config.sigma_fixed is not None:
        sigma = config.sigma_fixed
    else:
        # The linear predictor is constant (population var zero) exactly when
        # every slope and varying coefficient collapsed to zero.
        if np.all(coefs["b"] == 0.0) and all(np.all(uk == 0.0) for uk in coefs["u"]):
            raise DegenerateDataError(
                "all coefficients zeroed; the dataset carries no signal")
        var_mu = float(np.var(mu_train, ddof=1))
        sigma = solve_sigma_for_r2(var_mu, config.r2_target)
    gen = rng.generator
    y_train = mu_train + sigma * gen.standard_normal(config.n_train)
    y_test = mu_test + sigma * gen.standard_normal(config.n_test)

    def build(y, x, lvs):
        factors = [GroupingFactor(
            name=f"g{k + 1}", levels=lvs[k], n_levels=config.n_levels,
            varying_slopes=tuple(range(1, config.p + 1)))
            for k in range(config.n_factors)]
        return MultilevelDesign(y=y, x=x, factors=factors)

    train = build(y_train, x_train, [lv[0] for lv in levels])
    test = build(y_test, x_test, [lv[1] for lv in levels]) if config.n_test else None
    if config.n_train > 1 and np.std(y_train) > 0 and np.std(mu_train) > 0:
        achieved = float(np.corrcoef(y_train, mu_train)[0, 1] ** 2)
    else:
        achieved = float("nan")
    truth = {
        "b0": coefs["b0"],
        "b": coefs["b"].tolist(),
        "mask_b": coefs["mask_b"].astype(int).tolist(),
        "u": [uk.tolist() for uk in coefs["u"]],
        "mask_u": [mk.astype(int).tolist() for mk in coefs["mask_u"]],
        "sigma": sigma,
        "r2_target": None if config.sigma_fixed is not None else config.r2_target,
        "achieved_train_r2": achieved,
        "config": config.to_dict(),
    }
    return SimDataset(train=train, test=test, truth=truth)


def gen_dataset_with_retries(config: SimConfig, max_attempts: int = 10) -> tuple[SimDataset, int]:
    """Regenerate on degenerate draws with an incremented sub-seed.

    Returns the dataset and the number of attempts used.
    """
    last_exc = None
    for attempt in range(max_attempts):
        rng = RngStream(config.seed).child(attempt)
        try:
            return gen_dataset(config, rng), attempt + 1
        except DegenerateDataError as exc:
            last_exc = exc
    raise DegenerateDataError(
        f"{max_attempts} consecutive degenerate datasets for seed {config.seed}"
    ) from last_exc


def save_dataset(ds: SimDataset, out_dir, stem: str = "") -> dict:
    """Write train/test CSVs plus the truth JSON; returns the path map."""
    import csv
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    splits = [("train", ds.train)] + ([("test", ds.test)] if ds.test is not None else [])
    for split, design in splits:
        path = out / f"{stem}{split}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["y"] + [f"x{i}" for i in range(1, design.n_predictors + 1)]
            header += [g.name for g in design.factors]
            writer.writerow(header)
            for n in range(design.n_obs):
                row = [repr(float(design.y[n]))]
                row += [repr(float(v)) for v in design.x[n]]
                row += [str(int(g.levels[n])) for g in design.factors]
                writer.writerow(row)
        paths[split] = str(path)
    truth_path = out / f"{stem}truth.json"
    with open(truth_path, "w") as fh:
        json.dump(ds.truth, fh, indent=2, sort_keys=True)
    paths["truth"] = str(truth_path)
    return paths
