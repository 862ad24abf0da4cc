"""Data model: multilevel designs, hyperparameters, parameter states, draws.

Term ordering convention (used by the phi simplex, the local variances, and
every column naming scheme): positions 0..p-1 are the overall slopes, the
next K positions are the varying intercepts (one per grouping factor), and
then each grouping factor contributes a contiguous batch of its varying
slopes.  Levels never enter the term count.
"""

from __future__ import annotations

import io
import json
import hashlib
from dataclasses import dataclass, field

import numpy as np


class DesignError(ValueError):
    """Invalid design, dimension mismatch, or malformed input data."""


@dataclass
class GroupingFactor:
    """One grouping factor: a level id in {0..n_levels-1} per observation."""

    name: str
    levels: np.ndarray          # (N,) int level assignment
    n_levels: int
    varying_slopes: tuple[int, ...]   # predictor indices (1-based) varying here

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=int)
        if self.levels.min(initial=0) < 0 or (self.levels.size and self.levels.max() >= self.n_levels):
            raise DesignError(f"factor {self.name}: level ids out of range")

    @property
    def n_terms(self) -> int:
        # Varying intercept is always present alongside the slopes.
        return 1 + len(self.varying_slopes)


@dataclass
class MultilevelDesign:
    """Response, predictors, and grouping structure for one dataset."""

    y: np.ndarray               # (N,)
    x: np.ndarray               # (N, p) original-scale predictors
    factors: list[GroupingFactor] = field(default_factory=list)
    x_means: np.ndarray | None = None
    x_sds: np.ndarray | None = None
    y_mean: float = 0.0
    standardized: bool = False

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim != 2:
            raise DesignError("x must be a 2-D matrix")
        if self.y.shape[0] != self.x.shape[0]:
            raise DesignError(
                f"y has {self.y.shape[0]} rows but x has {self.x.shape[0]}")
        if self.y.shape[0] < 1:
            raise DesignError("need at least one observation")
        for g in self.factors:
            if g.levels.shape[0] != self.n_obs:
                raise DesignError(f"factor {g.name}: wrong number of level assignments")
            for i in g.varying_slopes:
                if not 1 <= i <= self.n_predictors:
                    raise DesignError(f"factor {g.name}: slope index {i} out of range")

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]

    @property
    def n_predictors(self) -> int:
        return self.x.shape[1]

    @property
    def n_factors(self) -> int:
        return len(self.factors)


def standardize(design: MultilevelDesign, center_y: bool = True) -> MultilevelDesign:
    """Center and scale predictors to sample sd 1; record the statistics.

    Raises on constant columns, naming the offender.  Already-standardized
    designs are returned unchanged.
    """
    if design.standardized:
        return design
    x = design.x
    means = x.mean(axis=0)
    sds = x.std(axis=0, ddof=1) if design.n_obs > 1 else np.ones(design.n_predictors)
    bad = np.flatnonzero(~(sds > 0))
    if bad.size:
        raise DesignError(f"predictor column {bad[0]} is constant; cannot standardize")
    y_mean = float(design.y.mean()) if center_y else 0.0
    return MultilevelDesign(
        y=design.y - y_mean,
        x=(x - means) / sds,
        factors=design.factors,
        x_means=means,
        x_sds=sds,
        y_mean=y_mean,
        standardized=True,
    )


def recover_intercept(b0_centered: float, y_mean: float, x_means: np.ndarray,
                      b_original: np.ndarray) -> float:
    """Population-level intercept on the original data scale."""
    return y_mean + b0_centered - float(np.dot(x_means, b_original))


def tau2_from_r2(r2: float) -> float:
    """tau^2 = R^2 / (1 - R^2) for R^2 in [0, 1)."""
    if not 0.0 <= r2 < 1.0:
        raise DesignError(f"r2 must be in [0, 1), got {r2}")
    return r2 / (1.0 - r2)


def r2_from_tau2(tau2: float) -> float:
    """R^2 = tau^2 / (1 + tau^2) for tau^2 >= 0."""
    if not tau2 >= 0.0:
        raise DesignError(f"tau2 must be >= 0, got {tau2}")
    return tau2 / (1.0 + tau2)


@dataclass(frozen=True)
class CoefficientIndex:
    """Bijection between (kind, predictor, factor) and flat term positions."""

    n_predictors: int
    factor_names: tuple[str, ...]
    factor_slopes: tuple[tuple[int, ...], ...]
    factor_levels: tuple[int, ...]

    @classmethod
    def from_design(cls, design: MultilevelDesign) -> "CoefficientIndex":
        return cls(
            n_predictors=design.n_predictors,
            factor_names=tuple(g.name for g in design.factors),
            factor_slopes=tuple(tuple(g.varying_slopes) for g in design.factors),
            factor_levels=tuple(g.n_levels for g in design.factors),
        )

    @property
    def n_factors(self) -> int:
        return len(self.factor_names)

    @property
    def n_terms(self) -> int:
        return self.n_predictors + self.n_factors + sum(len(s) for s in self.factor_slopes)

    def overall_slot(self, predictor: int) -> int:
        if not 1 <= predictor <= self.n_predictors:
            raise DesignError(f"predictor index {predictor} out of range")
        return predictor - 1

    def intercept_slot(self, factor: int) -> int:
        return self.n_predictors + factor

    def slope_slot(self, factor: int, predictor: int) -> int:
        base = self.n_predictors + self.n_factors
        for k in range(factor):
            base += len(self.factor_slopes[k])
        return base + self.factor_slopes[factor].index(predictor)

    def factor_slots(self, factor: int) -> list[int]:
        """Term slots of one factor in its within-level order: intercept, then slopes."""
        return [self.intercept_slot(factor)] + [
            self.slope_slot(factor, i) for i in self.factor_slopes[factor]]

    def term_names(self) -> list[str]:
        names = [f"b[{i}]" for i in range(1, self.n_predictors + 1)]
        names += [f"u_int[{k + 1}]" for k in range(self.n_factors)]
        for k in range(self.n_factors):
            names += [f"u_slope[{k + 1},{i}]" for i in self.factor_slopes[k]]
        return names


@dataclass
class Hyperparameters:
    """Prior hyperparameters: R^2 mean/precision, Dirichlet alpha, sigma prior."""

    mu_r2: float
    phi_r2: float
    alpha: np.ndarray | float = 1.0      # full vector or scalar a_pi
    sigma_prior: dict = field(default_factory=lambda: {"kind": "inv_gamma", "shape": 1.0, "scale": 1.0})
    intercept_sd: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.mu_r2 < 1.0:
            raise DesignError(f"mu_r2 must be in (0, 1), got {self.mu_r2}")
        if not self.phi_r2 > 0:
            raise DesignError(f"phi_r2 must be > 0, got {self.phi_r2}")
        if self.a1 <= 0 or self.a2 <= 0:
            raise DesignError("derived shapes a1, a2 must be positive")

    @property
    def a1(self) -> float:
        return self.mu_r2 * self.phi_r2

    @property
    def a2(self) -> float:
        return (1.0 - self.mu_r2) * self.phi_r2

    def alpha_vector(self, n_terms: int) -> np.ndarray:
        """Expand scalar a_pi symmetrically, or validate a full-length vector."""
        if np.isscalar(self.alpha):
            if self.alpha <= 0:
                raise DesignError(f"a_pi must be > 0, got {self.alpha}")
            return np.full(n_terms, float(self.alpha))
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.shape != (n_terms,):
            raise DesignError(
                f"alpha has length {alpha.size}, expected {n_terms} terms")
        if not np.all(alpha > 0):
            raise DesignError("all alpha components must be > 0")
        return alpha


@dataclass
class ParameterState:
    """One Gibbs state.  u is stored per factor as a (terms x levels) matrix."""

    b0: float
    b: np.ndarray
    u: list[np.ndarray]
    sigma2: float
    tau2: float
    phi: np.ndarray
    xi: float

    @property
    def r2(self) -> float:
        return r2_from_tau2(self.tau2)

    def validate(self, index: CoefficientIndex) -> None:
        if self.b.shape != (index.n_predictors,):
            raise DesignError("b has wrong length")
        if len(self.u) != index.n_factors:
            raise DesignError("u has wrong number of factors")
        for k, uk in enumerate(self.u):
            expected = (1 + len(index.factor_slopes[k]), index.factor_levels[k])
            if uk.shape != expected:
                raise DesignError(f"u[{k}] has shape {uk.shape}, expected {expected}")
        if self.phi.shape != (index.n_terms,):
            raise DesignError("phi has wrong length")
        if abs(self.phi.sum() - 1.0) > 1e-10:
            raise DesignError(f"phi sums to {self.phi.sum()}, not 1")
        if not (self.sigma2 > 0 and self.tau2 >= 0 and self.xi > 0):
            raise DesignError("sigma2, xi must be > 0 and tau2 >= 0")


def linear_predictor(design: MultilevelDesign, state: ParameterState) -> np.ndarray:
    """mu_n = b0 + x_n.b + varying intercepts + varying slopes at each row's levels."""
    if state.b.shape[0] != design.n_predictors:
        raise DesignError(
            f"state has {state.b.shape[0]} slopes, design has {design.n_predictors}")
    if len(state.u) != design.n_factors:
        raise DesignError("state/design disagree on the number of grouping factors")
    mu = state.b0 + design.x @ state.b
    for g, uk in zip(design.factors, state.u):
        if uk.shape != (g.n_terms, g.n_levels):
            raise DesignError(f"factor {g.name}: u block has shape {uk.shape}")
        at_obs = uk[:, g.levels]               # (terms, N)
        mu = mu + at_obs[0]
        for row, pred in enumerate(g.varying_slopes, start=1):
            mu = mu + design.x[:, pred - 1] * at_obs[row]
    return mu


# ---------------------------------------------------------------------------
# DrawsTable


def draws_column_names(index: CoefficientIndex) -> list[str]:
    """Column layout: b0, b[i], u[k,d,l], sigma, tau2, R2, phi[m], lambda2[m]."""
    names = ["b0"]
    names += [f"b[{i}]" for i in range(1, index.n_predictors + 1)]
    for k in range(index.n_factors):
        terms = [0] + list(index.factor_slopes[k])
        for d in terms:
            for lev in range(1, index.factor_levels[k] + 1):
                names.append(f"u[{k + 1},{d},{lev}]")
    names += ["sigma", "tau2", "R2"]
    names += [f"phi[{m}]" for m in range(1, index.n_terms + 1)]
    names += [f"lambda2[{m}]" for m in range(1, index.n_terms + 1)]
    return names


@dataclass
class DrawsTable:
    """Stored chain draws: one named column per scalar parameter."""

    columns: dict[str, np.ndarray]
    chain_id: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {v.shape[0] for v in self.columns.values()}
        if len(lengths) > 1:
            raise DesignError("all columns must have the same number of rows")

    @property
    def n_draws(self) -> int:
        return next(iter(self.columns.values())).shape[0] if self.columns else 0

    @property
    def names(self) -> list[str]:
        return list(self.columns.keys())

    def matrix(self, names: list[str] | None = None) -> np.ndarray:
        names = names if names is not None else self.names
        return np.column_stack([self.columns[n] for n in names])

    def save(self, path) -> None:
        """Write CSV (17 significant digits: float64 round-trips exactly)."""
        names = self.names
        with open(path, "w", newline="") as fh:
            fh.write(",".join(f'"{n}"' for n in names) + "\n")
            mat = self.matrix(names)
            np.savetxt(fh, mat, delimiter=",", fmt="%.17g")
        meta = {"chain_id": self.chain_id, "metadata": self.metadata}
        with open(str(path) + ".meta.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "DrawsTable":
        import csv

        with open(path, "r", newline="") as fh:
            names = next(csv.reader(fh))
            body = fh.read()
        mat = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
        if mat.size and mat.shape[1] != len(names):
            raise DesignError(
                f"CSV body has {mat.shape[1]} columns, header names {len(names)}")
        columns = {n: np.ascontiguousarray(mat[:, j]) for j, n in enumerate(names)}
        chain_id, metadata = 0, {}
        try:
            with open(str(path) + ".meta.json") as fh:
                meta = json.load(fh)
            chain_id = meta.get("chain_id", 0)
            metadata = meta.get("metadata", {})
        except FileNotFoundError:
            pass
        return cls(columns=columns, chain_id=chain_id, metadata=metadata)

    @classmethod
    def concat(cls, tables: list["DrawsTable"]) -> "DrawsTable":
        if not tables:
            raise DesignError("nothing to concatenate")
        names = tables[0].names
        for t in tables[1:]:
            if t.names != names:
                raise DesignError("cannot merge draws with different columns")
        cols = {n: np.concatenate([t.columns[n] for t in tables]) for n in names}
        return cls(columns=cols, chain_id=-1, metadata=tables[0].metadata)


def config_hash(obj) -> str:
    """Stable short fingerprint of a JSON-serializable config object."""
    payload = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Design ingestion: CSV data + JSON model config.


def load_design_csv(data_path, model_config: dict) -> MultilevelDesign:
    """Build a design from a CSV with header row and a model-config mapping.

    The config names the response column, predictor columns, grouping
    columns, and (per grouping column) which predictors vary across it.
    """
    import csv

    with open(data_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DesignError(f"{data_path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DesignError(
                    f"{data_path}: row {lineno} has {len(row)} fields, header has {len(header)}")
            rows.append(row)
    if not rows:
        raise DesignError(f"{data_path}: no data rows")
    col = {name: idx for idx, name in enumerate(header)}

    def column(name: str, lineno_base: int = 2) -> list[str]:
        if name not in col:
            raise DesignError(f"{data_path}: column {name!r} not found")
        return [row[col[name]] for row in rows]

    def as_float(name: str) -> np.ndarray:
        raw = column(name)
        try:
            return np.array([float(v) for v in raw])
        except ValueError as exc:
            bad = next(i for i, v in enumerate(raw) if not _is_float(v))
            raise DesignError(
                f"{data_path}: row {bad + 2}, column {name!r}: not a number: {raw[bad]!r}") from exc

    y = as_float(model_config["response"])
    predictors = list(model_config["predictors"])
    x = np.column_stack([as_float(name) for name in predictors]) if predictors \
        else np.empty((len(rows), 0))

    factors = []
    for gcfg in model_config.get("grouping", []):
        raw = column(gcfg["column"])
        labels = sorted(set(raw))
        label_to_id = {lab: i for i, lab in enumerate(labels)}
        levels = np.array([label_to_id[v] for v in raw])
        slopes = tuple(predictors.index(name) + 1 for name in gcfg.get("varying_slopes", []))
        factors.append(GroupingFactor(
            name=gcfg["column"], levels=levels, n_levels=len(labels),
            varying_slopes=slopes))
    return MultilevelDesign(y=y, x=x, factors=factors)


def _is_float(v: str) -> bool:
    try:
        float(v)
        return True
    except ValueError:
        return False
