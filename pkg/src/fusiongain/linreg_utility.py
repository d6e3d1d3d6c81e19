"""Utility assessment for multiple linear regression with an external
univariate-regression estimate.

Model: Y = mu' X + eps with mean-zero covariates (no intercept) and
homoskedastic errors.  The prospective external information is a univariate
least-squares slope of Y on one designated covariate column S computed from N
additional observations.  Both bound traces have closed forms in five sample
moments, so the point estimate is direct, its asymptotic variance is positive
under mild conditions, and the confidence interval is centered at the point
estimate itself (no split estimator is needed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BoundPair, UtilityEstimate, wald_interval
from .errors import (
    DegenerateResidualVariance,
    DegenerateVariance,
    OutOfRange,
    SingularDesign,
    TooFewObservations,
    ZeroSColumn,
    stage,
)
from .nuisance import MAX_CONDITION_NUMBER, Dataset


@dataclass(frozen=True)
class LinRegComponents:
    """The five moment estimators the bound traces are built from.

    mu_hat: least-squares coefficients of Y on X (no intercept);
    eta_hat: univariate slope of Y on the S column;
    sigma_mat: second-moment matrix X'X / n (symmetric positive definite);
    kappa_hat: trace of its inverse;
    sigma_hat: root mean squared residual of the full regression;
    alpha_hat: mean of S^2 (Y - eta_hat S)^2.
    """

    mu_hat: np.ndarray
    eta_hat: float
    sigma_mat: np.ndarray
    kappa_hat: float
    sigma_hat: float
    alpha_hat: float
    s_index: int


def fit_components(data: Dataset, s_index: int = 0) -> LinRegComponents:
    x = data.x
    y = data.y
    n, p = x.shape
    if not 0 <= s_index < p:
        raise OutOfRange(f"s_index must be in [0, {p - 1}], got {s_index}")
    sigma_mat = x.T @ x / n
    eigenvalues = np.linalg.eigvalsh(sigma_mat)
    if eigenvalues[0] <= 0 or eigenvalues[-1] / eigenvalues[0] > MAX_CONDITION_NUMBER:
        raise SingularDesign(
            "covariate second-moment matrix is not (numerically) positive definite"
        )
    s = x[:, s_index]
    s_sq_sum = float(s @ s)
    if s_sq_sum <= 0.0:
        raise ZeroSColumn("designated covariate column has zero sum of squares")
    mu_hat = np.linalg.solve(x.T @ x, x.T @ y)
    eta_hat = float(s @ y) / s_sq_sum
    kappa_hat = float(np.trace(np.linalg.inv(sigma_mat)))
    residuals = y - x @ mu_hat
    sigma_hat = math.sqrt(float(np.mean(residuals**2)))
    alpha_hat = float(np.mean(s**2 * (y - eta_hat * s) ** 2))
    return LinRegComponents(
        mu_hat=mu_hat,
        eta_hat=eta_hat,
        sigma_mat=sigma_mat,
        kappa_hat=kappa_hat,
        sigma_hat=sigma_hat,
        alpha_hat=alpha_hat,
        s_index=s_index,
    )


def bounds_linreg(comp: LinRegComponents, nu: float) -> BoundPair:
    """Bound-trace estimates: theta2 = sigma^2 kappa, theta1 = theta2 - (1-nu) sigma^4 / alpha."""
    if comp.alpha_hat <= 0.0:
        raise DegenerateResidualVariance(
            "exact-fit data: S-weighted residual moment is zero"
        )
    theta2 = comp.sigma_hat**2 * comp.kappa_hat
    theta1 = theta2 - (1.0 - nu) * comp.sigma_hat**4 / comp.alpha_hat
    return BoundPair(theta1, theta2)


def point_estimate_linreg(comp: LinRegComponents, nu: float) -> float:
    """Raw point estimate 1 - (1-nu) sigma^2 / (alpha kappa)."""
    if not 0.0 <= nu < 1.0:
        raise OutOfRange(f"nu must be in [0, 1), got {nu}")
    if comp.alpha_hat <= 0.0:
        raise DegenerateResidualVariance(
            "exact-fit data: S-weighted residual moment is zero"
        )
    return 1.0 - (1.0 - nu) * comp.sigma_hat**2 / (comp.alpha_hat * comp.kappa_hat)


def influence_composite(data: Dataset, comp: LinRegComponents) -> np.ndarray:
    """Per-observation composite whose sample variance drives the variance plug-in.

    v_i = (Y_i - mu'X_i)^2 + (sigma^2/kappa) * tr(Sigma^-1 X_i X_i' Sigma^-1)
        - (sigma^2/alpha) * [S_i^2 (Y_i - eta S_i)^2
                             - 2 mean(S^3 (Y - eta S)) S_i (Y_i - eta S_i) / mean(S^2)]
    """
    x = data.x
    y = data.y
    sigma_inv = np.linalg.inv(comp.sigma_mat)
    residuals = y - x @ comp.mu_hat
    trace_term = np.sum((x @ sigma_inv) ** 2, axis=1)
    s = x[:, comp.s_index]
    s_resid = s * (y - comp.eta_hat * s)
    third_moment = float(np.mean(s**2 * s_resid))  # mean of S^3 (Y - eta S)
    mean_s_sq = float(np.mean(s**2))
    s_block = s_resid**2 - 2.0 * third_moment * s_resid / mean_s_sq
    sigma_sq = comp.sigma_hat**2
    return (
        residuals**2
        + (sigma_sq / comp.kappa_hat) * trace_term
        - (sigma_sq / comp.alpha_hat) * s_block
    )


def variance_linreg(data: Dataset, comp: LinRegComponents, nu: float) -> float:
    """Plug-in asymptotic variance ((1-nu)/(alpha kappa))^2 Var(v), divisor n-1."""
    if comp.alpha_hat <= 0.0:
        raise DegenerateResidualVariance(
            "exact-fit data: S-weighted residual moment is zero"
        )
    if data.n < 2:
        raise TooFewObservations("variance needs at least two observations")
    composite = influence_composite(data, comp)
    var_composite = float(np.var(composite, ddof=1))
    if var_composite == 0.0:
        raise DegenerateVariance("influence composite is constant")
    prefactor = ((1.0 - nu) / (comp.alpha_hat * comp.kappa_hat)) ** 2
    return prefactor * var_composite


def assess_linreg(
    data: Dataset, s_index: int, nu: float, alpha: float = 0.95
) -> UtilityEstimate:
    """Full assessment; the interval is centered at the point estimate.

    A degenerate (exactly zero) composite variance yields a zero-width
    interval instead of an error so that simulation loops stay total.
    """
    if not 0.0 < alpha < 1.0:
        raise OutOfRange(f"alpha must be in (0, 1), got {alpha}")
    with stage("components"):
        comp = fit_components(data, s_index)
    with stage("point"):
        theta_raw = point_estimate_linreg(comp, nu)
    with stage("variance"):
        try:
            gamma_hat = math.sqrt(variance_linreg(data, comp, nu))
        except DegenerateVariance:
            gamma_hat = 0.0
    with stage("interval"):
        ci_raw = wald_interval(theta_raw, gamma_hat, data.n, alpha)
    return UtilityEstimate.from_raw(
        theta_hat_raw=theta_raw,
        theta_tilde_raw=None,
        gamma_hat=gamma_hat,
        ci_raw=ci_raw,
        nu=nu,
        n=data.n,
        alpha=alpha,
        method="linreg",
    )
