"""Local JSON service exposing the prior-analysis grids for the elicitation UI.

All endpoints live under /api/v1, answer in {x: [...], density: [...]} grid
form, and share the exact code paths used by the CLI's prior command, so
the two surfaces can never disagree.  An out-of-domain R^2 mean (mu outside
(0, 1)) is rejected with 422; other invalid hyperparameters return 400 with
field-level messages.
"""

from __future__ import annotations

import platform

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Query

from . import __version__, prior_analysis
from .distributions import ParameterError, RngStream
from .model import DesignError, Hyperparameters
from .prior_analysis import MarginalParams, ShrinkageParams, SsProfile


def _bad_request(field: str, message: str) -> HTTPException:
    return HTTPException(status_code=400, detail=[{"field": field, "message": message}])


def _require_positive(**fields: float) -> None:
    for name, value in fields.items():
        if not value > 0:
            raise _bad_request(name, f"must be > 0, got {value}")


def build_app() -> FastAPI:
    app = FastAPI(title="r2d2m2 prior service", version=__version__)

    @app.get("/api/v1/health")
    def health() -> dict:
        return {
            "status": "ok",
            "package": "r2d2m2",
            "version": __version__,
            "python": platform.python_version(),
        }

    @app.get("/api/v1/prior/r2")
    def prior_r2(mu: float = Query(gt=0.0, lt=1.0),
                 phi: float = Query(),
                 n: int = Query(default=201, ge=3, le=2001)) -> dict:
        _require_positive(phi=phi)
        return prior_analysis.r2_density_grid(mu, phi, n=n)

    @app.get("/api/v1/prior/tau2")
    def prior_tau2(mu: float = Query(gt=0.0, lt=1.0),
                   phi: float = Query(),
                   xmax: float = Query(default=10.0, gt=0.0),
                   n: int = Query(default=201, ge=3, le=2001)) -> dict:
        _require_positive(phi=phi)
        return prior_analysis.tau2_density_grid(mu, phi, x_max=xmax, n=n)

    @app.get("/api/v1/prior/marginal")
    def prior_marginal(mu: float = Query(gt=0.0, lt=1.0),
                       phi: float = Query(),
                       api: float = Query(),
                       sigma: float = Query(default=1.0),
                       sigmax: float = Query(default=1.0),
                       tmax: float = Query(default=5.0, gt=0.0),
                       n: int = Query(default=201, ge=3, le=2001)) -> dict:
        _require_positive(phi=phi, api=api, sigma=sigma, sigmax=sigmax)
        try:
            hyper = Hyperparameters(mu_r2=mu, phi_r2=phi)
            params = MarginalParams(q2=sigma ** 2 / sigmax ** 2, a_pi=api, a2=hyper.a2)
            return prior_analysis.marginal_density_grid(params, t_max=tmax, n=n)
        except (ParameterError, DesignError) as exc:
            raise _bad_request("api", str(exc)) from exc

    @app.get("/api/v1/prior/kappa")
    def prior_kappa(mu: float = Query(gt=0.0, lt=1.0),
                    phi: float = Query(),
                    r: float = Query(),
                    phicomp: float = Query(),
                    n: int = Query(default=201, ge=3, le=2001)) -> dict:
        _require_positive(phi=phi, r=r, phicomp=phicomp)
        if phicomp > 1.0:
            raise _bad_request("phicomp", f"must be in (0, 1], got {phicomp}")
        try:
            hyper = Hyperparameters(mu_r2=mu, phi_r2=phi)
            params = ShrinkageParams(phi_comp=phicomp, r=r, a1=hyper.a1, a2=hyper.a2)
            return prior_analysis.kappa_density_grid(params, n=n)
        except (ParameterError, DesignError) as exc:
            raise _bad_request("phicomp", str(exc)) from exc

    @app.post("/api/v1/prior/meff")
    def prior_meff(payload: dict = Body(...)) -> dict:
        required = {"mu", "phi", "api", "p", "K", "L", "N"}
        missing = sorted(required - payload.keys())
        if missing:
            raise _bad_request(missing[0], "required field missing")
        try:
            mu = float(payload["mu"])
            phi = float(payload["phi"])
        except (TypeError, ValueError):
            raise _bad_request("mu", "mu and phi must be numbers") from None
        if not 0.0 < mu < 1.0:
            raise HTTPException(status_code=422, detail=[
                {"field": "mu", "message": "must be in the open interval (0, 1)"}])
        _require_positive(phi=phi)
        try:
            hyper = Hyperparameters(mu_r2=mu, phi_r2=phi, alpha=float(payload["api"]))
            profile = SsProfile.balanced(
                p=int(payload["p"]), n_factors=int(payload["K"]),
                n_levels=int(payload["L"]), n_obs=int(payload["N"]))
            n_draws = int(payload.get("n_draws", 20_000))
            if not 1 <= n_draws <= 1_000_000:
                raise _bad_request("n_draws", "must be in [1, 1e6]")
            rng = RngStream(int(payload.get("seed", 0)))
            result = prior_analysis.meff_prior_sample(hyper, profile, n_draws, rng)
        except HTTPException:
            raise
        except (ParameterError, DesignError, ValueError) as exc:
            raise _bad_request("payload", str(exc)) from exc
        counts, edges = np.histogram(result["samples"], bins=60)
        return {
            "quantiles": {k: float(v) for k, v in result["quantiles"].items()},
            "mean": result["mean"],
            "total_coefficients": result["total_coefficients"],
            "histogram": {"counts": counts.astype(int).tolist(),
                          "edges": edges.tolist()},
        }

    return app
