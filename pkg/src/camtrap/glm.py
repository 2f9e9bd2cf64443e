"""Quasi-Poisson log-linear regression with an effort offset.

Used to compare trap rates between trail-side and random camera placements:
counts per deployment are modelled with ``log E[y] = X b + log(days)`` and
the placement effect is tested with an F-test that allows for
overdispersion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from camtrap.datamodel import Placement, ProjectStore
from camtrap.estimators import deployment_counts


@dataclass(frozen=True)
class GlmFit:
    coefficients: np.ndarray
    standard_errors: np.ndarray
    dispersion: float
    deviance: float
    df_residual: int
    converged: bool
    iterations: int
    n_obs: int = 0
    deviance_history: list[float] = field(default_factory=list)
    _data_key: int = 0
    design: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_params(self) -> int:
        return len(self.coefficients)


@dataclass(frozen=True)
class FTestResult:
    F: float
    df_num: int
    df_den: int
    p_value: float


def poisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(y / mu), 0.0)
    return float(2.0 * np.sum(term - (y - mu)))


def fit_quasipoisson(
    counts,
    design,
    offset=None,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> GlmFit:
    """Fit by iteratively reweighted least squares.

    Convergence is declared once the largest coefficient step falls below
    ``tol`` relative to the coefficient scale (``max(1, max|b|)``). A step
    that raises the deviance is halved until it does not. Dispersion is the
    Pearson chi-square over the residual degrees of freedom (NaN when the
    model is saturated) and scales the standard errors.
    """
    y = np.asarray(counts, dtype=float)
    X = np.asarray(design, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    if y.shape != (n,) or off.shape != (n,):
        raise ValueError("counts, design rows and offset must agree")
    if np.any(y < 0) or not np.all(np.isfinite(y)):
        raise ValueError("counts must be finite and non-negative")
    if not np.all(np.isfinite(off)):
        raise ValueError("offset must be finite")
    if np.linalg.matrix_rank(X) < p:
        raise ValueError("design matrix is rank deficient")

    # start from the saturated-ish fit mu = (y + ybar)/2, projected onto the model
    mu = (y + y.mean()) / 2.0 + 1e-3
    eta = np.log(mu)
    z = eta - off
    w = mu
    beta = linalg.cho_solve(linalg.cho_factor(X.T @ (w[:, None] * X)), X.T @ (w * z))
    eta = X @ beta + off
    mu = np.exp(eta)
    dev = poisson_deviance(y, mu)
    history = [dev]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        w = mu
        z = eta - off + (y - mu) / mu
        xtwx = X.T @ (w[:, None] * X)
        try:
            new = linalg.cho_solve(linalg.cho_factor(xtwx), X.T @ (w * z))
        except linalg.LinAlgError:
            break
        step = new - beta
        for _ in range(30):
            cand = beta + step
            eta_c = X @ cand + off
            mu_c = np.exp(np.clip(eta_c, -700, 700))
            dev_c = poisson_deviance(y, mu_c)
            if dev_c <= dev * (1 + 1e-12) + 1e-12:
                break
            step = step / 2.0
        beta, eta, mu, dev = cand, eta_c, mu_c, dev_c
        history.append(dev)
        if np.max(np.abs(step)) < tol * max(1.0, float(np.max(np.abs(beta)))):
            converged = True
            break

    df = n - p
    if df > 0:
        dispersion = float(np.sum((y - mu) ** 2 / mu) / df)
    else:
        dispersion = math.nan
    cov = linalg.inv(X.T @ (mu[:, None] * X))
    se = np.sqrt(np.diag(cov) * dispersion)
    return GlmFit(
        coefficients=beta,
        standard_errors=se,
        dispersion=dispersion,
        deviance=dev,
        df_residual=df,
        converged=converged,
        iterations=it,
        n_obs=n,
        deviance_history=history,
        _data_key=hash((y.tobytes(), off.tobytes())),
        design=X,
    )


def f_test(full: GlmFit, reduced: GlmFit) -> FTestResult:
    """Overdispersion-aware F-test of a reduced model nested in ``full``.

    ``F = (dev_reduced - dev_full) / df_diff / dispersion_full`` on
    ``(df_diff, df_residual_full)`` degrees of freedom.
    """
    if full._data_key != reduced._data_key or full.n_obs != reduced.n_obs:
        raise ValueError("models were not fitted to the same data")
    ddf = reduced.df_residual - full.df_residual
    if ddf < 0:
        raise ValueError("reduced model has more parameters than the full model")
    if full.design is not None and reduced.design is not None:
        coef, *_ = np.linalg.lstsq(full.design, reduced.design, rcond=None)
        resid = reduced.design - full.design @ coef
        if np.max(np.abs(resid)) > 1e-8 * max(1.0, float(np.max(np.abs(reduced.design)))):
            raise ValueError("reduced model is not nested in the full model")
    if full.df_residual <= 0:
        raise ValueError("full model has no residual degrees of freedom")
    if ddf == 0:
        return FTestResult(0.0, 0, full.df_residual, 1.0)
    F = max(0.0, (reduced.deviance - full.deviance) / ddf / full.dispersion)
    return FTestResult(F, ddf, full.df_residual, float(stats.f.sf(F, ddf, full.df_residual)))


def rate_ratio(fit: GlmFit, index: int = 1) -> float:
    """Multiplicative effect of the indicator in column ``index``."""
    return math.exp(fit.coefficients[index])


@dataclass(frozen=True)
class PlacementTest:
    species: str
    n_random: int
    n_trail: int
    detections: int
    rate_ratio: float
    F: float
    p: float
    converged: bool


def placement_test(counts, days, trail) -> tuple[GlmFit, GlmFit, FTestResult]:
    """Full (intercept + trail indicator) and intercept-only fits plus F-test."""
    y = np.asarray(counts, dtype=float)
    trail = np.asarray(trail, dtype=float)
    off = np.log(np.asarray(days, dtype=float))
    ones = np.ones_like(y)
    full = fit_quasipoisson(y, np.column_stack([ones, trail]), off)
    reduced = fit_quasipoisson(y, ones[:, None], off)
    return full, reduced, f_test(full, reduced)


def trail_bias(
    store: ProjectStore,
    min_detections: int = 10,
    effort: str = "effective",
    species: list[str] | None = None,
) -> list[PlacementTest]:
    """Trail-versus-random comparison for every species with enough detections.

    Deployments with no confirmed effort are skipped (their log offset is
    undefined).
    """
    loc_placement = {loc.location_id: loc.placement for loc in store.locations}
    out = []
    for sp in species if species is not None else store.species():
        rows = [
            (y, t, loc_placement[d.location_id] is Placement.TRAIL)
            for d, y, t in deployment_counts(store, sp, effort=effort)
            if t > 0
        ]
        total = sum(r[0] for r in rows)
        n_trail = sum(1 for r in rows if r[2])
        n_random = len(rows) - n_trail
        if total < min_detections or n_trail == 0 or n_random == 0:
            continue
        y, t, tr = zip(*rows)
        full, _, ft = placement_test(y, t, tr)
        out.append(
            PlacementTest(sp, n_random, n_trail, total, rate_ratio(full), ft.F, ft.p_value,
                          full.converged)
        )
    return out
