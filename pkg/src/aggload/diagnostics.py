"""Residual curves, fMSRE measures, LRT/BIC comparison and standard errors."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .covariance import CovKind, variance_grid
from .model import FitResult, Workspace
from .panel import LoadPanel, MarketTable

__all__ = [
    "ResidualCurves",
    "ComparisonReport",
    "relative_residuals",
    "fmsre_parameter",
    "fmsre_fit",
    "likelihood_ratio_test",
    "bic",
    "bic_of",
    "beta_covariance",
    "covariance_param_se",
    "snr_curve",
    "fitted_values",
    "variance_curve",
]


@dataclass
class ResidualCurves:
    """Relative residual curves with zero-reference points masked out."""

    curves: np.ndarray        # (..., N), NaN where the reference is zero
    median: np.ndarray        # pointwise median over the leading axes
    excluded: np.ndarray      # boolean mask of flagged (zero-reference) points


def relative_residuals(estimate: np.ndarray,
                       reference: np.ndarray) -> ResidualCurves:
    """(estimate - reference) / reference, pointwise.

    Zero-reference points are flagged and excluded from the curves and the
    median rather than producing infinities.
    """
    estimate = np.asarray(estimate, dtype=float)
    reference = np.asarray(reference, dtype=float)
    reference = np.broadcast_to(reference, estimate.shape)
    excluded = reference == 0.0
    curves = np.where(excluded, np.nan,
                      (estimate - reference) / np.where(excluded, 1.0, reference))
    flat = curves.reshape(-1, curves.shape[-1]) if curves.ndim > 1 else curves[None, :]
    with warnings.catch_warnings():
        # a grid point excluded in every curve legitimately has a NaN median
        warnings.simplefilter("ignore", RuntimeWarning)
        median = np.nanmedian(flat, axis=0)
    return ResidualCurves(curves=curves, median=median, excluded=excluded)


def fmsre_parameter(residual_curves: np.ndarray, horizon: float) -> float:
    """Mean over runs of the Riemann-sum integral of squared residual curves.

    ``residual_curves`` holds one curve per run on a common grid of N points;
    the time step ``horizon / N`` plays the role of dt.
    """
    curves = np.atleast_2d(np.asarray(residual_curves, dtype=float))
    n = curves.shape[-1]
    per_run = (horizon / n) * np.nansum(curves**2, axis=-1)
    return float(np.mean(per_run))


def fmsre_fit(fitted: np.ndarray, observed: np.ndarray,
              horizon: float) -> np.ndarray:
    """Per-substation mean over days of the integrated squared fit error.

    Note this is the absolute squared error; the source naming keeps the
    'relative' wording but the displayed formula does not divide by the
    observation (see README).
    """
    fitted = np.asarray(fitted, dtype=float)
    observed = np.asarray(observed, dtype=float)
    if fitted.shape != observed.shape or fitted.ndim != 3:
        raise ValueError("fitted and observed must both be (days, substations, times)")
    n_days, _, n_times = fitted.shape
    per_day = (horizon / n_times) * np.sum((fitted - observed) ** 2, axis=2)
    return per_day.mean(axis=0)


@dataclass
class ComparisonReport:
    """LRT and BIC comparison between a nested and a larger model fit."""

    loglik_nested: float
    loglik_larger: float
    statistic: float
    df: int
    p_value: float
    bic_nested: float
    bic_larger: float
    warning: str | None = None

    @property
    def bic_difference(self) -> float:
        return self.bic_nested - self.bic_larger


def _dims(fit_like) -> tuple[int, int, int]:
    return fit_like.n_days, fit_like.n_substations, fit_like.n_times


def likelihood_ratio_test(nested, larger) -> ComparisonReport:
    """Chi-square test of a nested fit against a larger one on the same data.

    The statistic is twice the log-likelihood gap; degrees of freedom are the
    mechanical parameter-count difference.  A larger model scoring below the
    nested one (beyond 1e-6) signals an optimizer failure and is reported as
    a warning instead of an error.
    """
    if _dims(nested) != _dims(larger):
        raise ValueError("fits compare different data dimensions")
    df = larger.n_parameters - nested.n_parameters
    if df <= 0:
        raise ValueError(
            "larger fit must have more parameters than the nested fit"
        )
    statistic = 2.0 * (larger.loglik - nested.loglik)
    warning = None
    if statistic < -1e-6:
        warning = (
            "larger model has lower log-likelihood than the nested model; "
            "one of the optimizations likely failed"
        )
    p_value = float(chi2.sf(max(statistic, 0.0), df))
    return ComparisonReport(
        loglik_nested=nested.loglik,
        loglik_larger=larger.loglik,
        statistic=statistic,
        df=df,
        p_value=p_value,
        bic_nested=bic_of(nested),
        bic_larger=bic_of(larger),
        warning=warning,
    )


def bic(loglik: float, n_params: int, n_days: int, n_substations: int,
        n_times: int) -> float:
    """-2 * loglik + n_params * log(days * substations * times)."""
    return -2.0 * loglik + n_params * np.log(n_days * n_substations * n_times)


def bic_of(fit_like) -> float:
    i, j, n = _dims(fit_like)
    return bic(fit_like.loglik, fit_like.n_parameters, i, j, n)


def beta_covariance(result: FitResult) -> np.ndarray:
    """Covariance of the coefficient estimator.

    The sandwich collapses: with A = (X'S^-1X)^-1 X'S^-1 the estimator
    covariance A S A' equals (X'S^-1X)^-1, so it is computed that way.
    """
    return result.beta_covariance()


@dataclass
class CovarianceSE:
    """Delta-method standard errors of the covariance parameters."""

    sigma: np.ndarray | None
    omega: np.ndarray | None
    eta_coeffs: np.ndarray | None
    packed: np.ndarray | None
    available: bool
    condition_number: float | None = None


def covariance_param_se(result: FitResult) -> CovarianceSE:
    """Standard errors from the inverse observed Hessian.

    The Hessian is taken on the optimizer's (log) scale and transformed back
    to the reporting scale, so sigma/omega intervals match the natural
    parameterization.  A numerically singular Hessian yields
    ``available=False`` together with its condition number.
    """
    hess = result.cov_hessian
    if hess is None:
        return CovarianceSE(None, None, None, None, available=False)
    cond = float(np.linalg.cond(hess))
    if not np.isfinite(cond) or cond > 1e12:
        return CovarianceSE(None, None, None, None, available=False,
                            condition_number=cond)
    try:
        inv = np.linalg.inv(hess)
    except np.linalg.LinAlgError:
        return CovarianceSE(None, None, None, None, available=False,
                            condition_number=cond)
    diag = np.diag(inv).copy()
    if np.any(diag < 0):
        return CovarianceSE(None, None, None, None, available=False,
                            condition_number=cond)
    se_packed = np.sqrt(diag)

    spec = result.config.covariance
    params = result.cov_params
    c = params.n_types
    if spec.kind is CovKind.HOMOGENEOUS_UNIFORM:
        sigma_se = np.full(c, params.sigma[0] * se_packed[0])
        omega_se = params.omega * se_packed[1:1 + c]
        eta_se = None
    else:
        sigma_se = params.sigma * se_packed[:c]
        omega_se = params.omega * se_packed[c:2 * c]
        eta_se = None
        if spec.kind is CovKind.COMPLETE:
            kp = spec.num_variance_basis
            free = se_packed[2 * c:].reshape(c, kp - 1)
            # the constrained last coefficient is minus the sum of the free
            # ones: its variance needs the free-block covariance
            eta_se = np.empty((c, kp))
            eta_se[:, :-1] = free
            offset = 2 * c
            for ci in range(c):
                block = inv[offset + ci * (kp - 1):offset + (ci + 1) * (kp - 1),
                            offset + ci * (kp - 1):offset + (ci + 1) * (kp - 1)]
                eta_se[ci, -1] = np.sqrt(max(block.sum(), 0.0))
    return CovarianceSE(sigma=sigma_se, omega=omega_se, eta_coeffs=eta_se,
                        packed=se_packed, available=True,
                        condition_number=cond)


def snr_curve(typical: np.ndarray, variance: np.ndarray) -> np.ndarray:
    """Pointwise ratio of a typical curve to its variance functional."""
    typical = np.asarray(typical, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if np.any(variance <= 0):
        raise ValueError("variance functional must be positive")
    return typical / variance


def fitted_values(result: FitResult, panel: LoadPanel,
                  market: MarketTable) -> np.ndarray:
    """Model means on the panel grid, shape (days, substations, times)."""
    ws = Workspace(panel, market, result.config)
    return ws.mean_curves(result.beta)


def variance_curve(result: FitResult, c: int, ts: np.ndarray) -> np.ndarray:
    """Estimated variance functional for type ``c`` on a grid."""
    ts = np.asarray(ts, dtype=float)
    return variance_grid(result.config.covariance, result.cov_params, ts)[c]
