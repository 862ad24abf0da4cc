"""Evaluation suite: RMSE, elpd, interval coverage/width, error rates, ROC.

Conventions: a coefficient is "discovered" when the central credible
interval of size 1 - alpha excludes zero.  Type I error is the rejection
rate over truly-zero coefficients, Type II over truly-nonzero; the
per-replication false-discovery proportion Q = V/R is taken as 0 when
nothing is rejected.  Reports are produced both over all coefficients and
over the overall slopes alone (the intercept is never tested).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import ParameterError
from .model import DesignError, DrawsTable, MultilevelDesign

DEFAULT_ALPHA_GRID = (0.02, 0.05, 0.10, 0.20, 0.50, 0.66)


def rmse(posterior_means, truth) -> float:
    """Root mean squared error of the posterior means against the truth."""
    est = np.asarray(posterior_means, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ParameterError(f"length mismatch: {est.shape} vs {tru.shape}")
    return float(np.sqrt(np.mean((est - tru) ** 2)))


def coefficient_names(table: DrawsTable, include_intercept: bool = False,
                      overall_only: bool = False) -> list[str]:
    """Coefficient columns in the draws table (b and u; never phi/lambda)."""
    names = []
    for name in table.names:
        if name == "b0":
            if include_intercept:
                names.append(name)
        elif name.startswith("b[") or (name.startswith("u[") and not overall_only):
            names.append(name)
    return names


def truth_vector(truth: dict, names: list[str]) -> np.ndarray:
    """Match truth-record entries to draws-column names."""
    b = np.asarray(truth["b"], dtype=float)
    u = [np.asarray(uk, dtype=float) for uk in truth.get("u", [])]
    out = np.empty(len(names))
    for j, name in enumerate(names):
        if name == "b0":
            out[j] = truth["b0"]
        elif name.startswith("b["):
            out[j] = b[int(name[2:-1]) - 1]
        elif name.startswith("u["):
            k, d, lev = (int(s) for s in name[2:-1].split(","))
            out[j] = u[k - 1][d, lev - 1]
        else:
            raise ParameterError(f"no truth entry for column {name!r}")
    return out


def posterior_mu_draws(table: DrawsTable, design: MultilevelDesign) -> np.ndarray:
    """(S, N) linear-predictor draws on the original data scale."""
    s = table.n_draws
    mu = np.tile(table.columns["b0"][:, None], (1, design.n_obs))
    if design.n_predictors:
        b = np.column_stack([table.columns[f"b[{i}]"]
                             for i in range(1, design.n_predictors + 1)])
        mu += b @ design.x.T
    for k, g in enumerate(design.factors):
        terms = [0] + list(g.varying_slopes)
        for d in terms:
            u_cols = np.column_stack([table.columns[f"u[{k + 1},{d},{lev}]"]
                                      for lev in range(1, g.n_levels + 1)])
            at_obs = u_cols[:, g.levels]            # (S, N)
            if d == 0:
                mu += at_obs
            else:
                mu += at_obs * design.x[:, d - 1][None, :]
    return mu


def elpd_hat(table: DrawsTable, test: MultilevelDesign) -> float:
    """Sum over test points of log mean_s Normal(y | mu^s, sigma^s): stable log-sum-exp."""
    if table.n_draws == 0:
        raise ParameterError("empty draws table")
    mu = posterior_mu_draws(table, test)            # (S, N)
    sigma = table.columns["sigma"][:, None]
    log_p = (-0.5 * math.log(2.0 * math.pi) - np.log(sigma)
             - 0.5 * ((test.y[None, :] - mu) / sigma) ** 2)
    m = log_p.max(axis=0)
    lse = m + np.log(np.mean(np.exp(log_p - m), axis=0))
    return float(lse.sum())


@dataclass
class IntervalReport:
    """Coverage/width and test error rates at one credibility level."""

    alpha: float
    coverage: float
    width: float
    coverage_nonzero: float
    width_nonzero: float
    type_i: float
    type_ii: float
    fdr: float
    n_zero: int
    n_nonzero: int

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "alpha", "coverage", "width", "coverage_nonzero", "width_nonzero",
            "type_i", "type_ii", "fdr", "n_zero", "n_nonzero")}


def interval_report(table: DrawsTable, truth: dict, alpha: float,
                    overall_only: bool = False) -> IntervalReport:
    """Central-interval coverage, width, Type I/II, and FDR at level alpha."""
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must be in (0, 1), got {alpha}")
    names = coefficient_names(table, overall_only=overall_only)
    if not names:
        raise ParameterError("no coefficient columns in the draws table")
    tru = truth_vector(truth, names)
    draws = table.matrix(names)
    lo = np.quantile(draws, alpha / 2.0, axis=0)
    hi = np.quantile(draws, 1.0 - alpha / 2.0, axis=0)
    covered = (tru >= lo) & (tru <= hi)
    widths = hi - lo
    rejected = (lo > 0.0) | (hi < 0.0)
    is_zero = tru == 0.0
    n_zero = int(is_zero.sum())
    n_nonzero = int((~is_zero).sum())
    type_i = float(rejected[is_zero].mean()) if n_zero else 0.0
    type_ii = float((~rejected[~is_zero]).mean()) if n_nonzero else 0.0
    n_rejected = int(rejected.sum())
    fdr = float(rejected[is_zero].sum() / n_rejected) if n_rejected else 0.0
    return IntervalReport(
        alpha=alpha,
        coverage=float(covered.mean()),
        width=float(widths.mean()),
        coverage_nonzero=float(covered[~is_zero].mean()) if n_nonzero else float("nan"),
        width_nonzero=float(widths[~is_zero].mean()) if n_nonzero else float("nan"),
        type_i=type_i, type_ii=type_ii, fdr=fdr,
        n_zero=n_zero, n_nonzero=n_nonzero)


def roc_points(table: DrawsTable, truth: dict,
               alphas=DEFAULT_ALPHA_GRID, overall_only: bool = False) -> list[dict]:
    """(FPR, TPR) per alpha; FPR = Type I, TPR = 1 - Type II."""
    out = []
    for alpha in alphas:
        rep = interval_report(table, truth, alpha, overall_only=overall_only)
        out.append({"alpha": alpha, "fpr": rep.type_i, "tpr": 1.0 - rep.type_ii})
    return out


def meff_posterior(table: DrawsTable, ss_profile) -> np.ndarray:
    """Per-draw effective number of non-zero coefficients at posterior draws.

    Shrinkage factors use the design's sums-of-squares profile:
    kappa = 1/(1 + r * phi * tau^2) per coefficient, summed as (1 - kappa).
    """
    n_terms = ss_profile.n_terms
    missing = [f"phi[{m}]" for m in range(1, n_terms + 1)
               if f"phi[{m}]" not in table.columns]
    if missing or "tau2" not in table.columns:
        raise DesignError(f"draws table lacks required columns: {missing or ['tau2']}")
    phi = np.column_stack([table.columns[f"phi[{m}]"] for m in range(1, n_terms + 1)])
    tau2 = table.columns["tau2"]
    p = ss_profile.overall.size
    scale = phi[:, :p] * tau2[:, None]
    meff = np.sum(1.0 - 1.0 / (1.0 + ss_profile.overall[None, :] * scale), axis=1)
    pos = p
    for v in ss_profile.varying:
        t_g = v.shape[0]
        phi_g = phi[:, pos:pos + t_g] * tau2[:, None]
        kappa = 1.0 / (1.0 + v[None, :, :] * phi_g[:, :, None])
        meff += np.sum(1.0 - kappa, axis=(1, 2))
        pos += t_g
    return meff


@dataclass
class EvalReport:
    """Full per-replication evaluation bundle."""

    replication: int
    scenario: dict = field(default_factory=dict)
    rmse_all: float = float("nan")
    rmse_overall: float = float("nan")
    elpd: float = float("nan")
    meff_median: float = float("nan")
    intervals: list[IntervalReport] = field(default_factory=list)
    intervals_overall: list[IntervalReport] = field(default_factory=list)
    roc: list[dict] = field(default_factory=list)
    roc_overall: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "replication": self.replication,
            "scenario": self.scenario,
            "rmse_all": self.rmse_all,
            "rmse_overall": self.rmse_overall,
            "elpd": self.elpd,
            "meff_median": self.meff_median,
            "intervals": [r.to_dict() for r in self.intervals],
            "intervals_overall": [r.to_dict() for r in self.intervals_overall],
            "roc": self.roc,
            "roc_overall": self.roc_overall,
        }


def evaluate(table: DrawsTable, truth: dict, test: MultilevelDesign | None,
             ss_profile=None, alphas=DEFAULT_ALPHA_GRID,
             replication: int = 0, scenario: dict | None = None) -> EvalReport:
    """Compute the full evaluation suite for one fitted replication."""
    names_all = coefficient_names(table)
    names_overall = coefficient_names(table, overall_only=True)
    means = table.matrix(names_all).mean(axis=0)
    means_overall = table.matrix(names_overall).mean(axis=0)
    report = EvalReport(replication=replication, scenario=scenario or {})
    report.rmse_all = rmse(means, truth_vector(truth, names_all))
    report.rmse_overall = rmse(means_overall, truth_vector(truth, names_overall))
    if test is not None:
        report.elpd = elpd_hat(table, test)
    if ss_profile is not None:
        report.meff_median = float(np.median(meff_posterior(table, ss_profile)))
    report.intervals = [interval_report(table, truth, a) for a in alphas]
    report.intervals_overall = [interval_report(table, truth, a, overall_only=True)
                                for a in alphas]
    report.roc = roc_points(table, truth, alphas)
    report.roc_overall = roc_points(table, truth, alphas, overall_only=True)
    return report


def aggregate_reports(reports: list[EvalReport]) -> dict:
    """Mean metrics across replications, per alpha, in summary-table shape."""
    if not reports:
        raise ParameterError("no reports to aggregate")

    def nanmean(values) -> float:
        arr = np.asarray(values, dtype=float)
        finite = arr[np.isfinite(arr)]
        return float(finite.mean()) if finite.size else float("nan")

    alphas = [r.alpha for r in reports[0].intervals]
    agg = {
        "n_replications": len(reports),
        "rmse_all": float(np.mean([r.rmse_all for r in reports])),
        "rmse_overall": float(np.mean([r.rmse_overall for r in reports])),
        "elpd": nanmean([r.elpd for r in reports]),
        "meff_median": nanmean([r.meff_median for r in reports]),
        "by_alpha": [],
    }
    for i, alpha in enumerate(alphas):
        row = {"alpha": alpha}
        for scope, attr in (("all", "intervals"), ("overall", "intervals_overall")):
            reps = [getattr(r, attr)[i] for r in reports]
            row[scope] = {
                "coverage": float(np.mean([x.coverage for x in reps])),
                "width": float(np.mean([x.width for x in reps])),
                "coverage_nonzero": nanmean([x.coverage_nonzero for x in reps]),
                "width_nonzero": nanmean([x.width_nonzero for x in reps]),
                "type_i": float(np.mean([x.type_i for x in reps])),
                "type_ii": float(np.mean([x.type_ii for x in reps])),
                "fdr": float(np.mean([x.fdr for x in reps])),
            }
        agg["by_alpha"].append(row)
    return agg
