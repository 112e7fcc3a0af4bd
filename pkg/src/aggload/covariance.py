"""Per-customer-type covariance functionals and substation covariance matrices.

A customer of type ``c`` contributes the kernel
``psi_c(s, t) = eta_c(s) * rho_c(s, t) * eta_c(t)`` where ``rho_c`` is an
exponential decay in ``|t - s|`` and ``eta_c`` is one of three nested
variance functionals:

* homogeneous uniform: a single scale shared by every type,
* homogeneous: one scale per type,
* complete: per-type scale times the exponential of a spline expansion
  whose coefficients sum to zero.

A substation aggregates independent customers, so its covariance matrix is
the market-weighted sum of the type kernels evaluated on the observation
grid.  Factorizations are computed eagerly and cached on the matrix object.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import solve_triangular

from .basis import KnotVector, basis_matrix
from .errors import FactorizationError

__all__ = [
    "CovKind",
    "CovarianceSpec",
    "CovarianceParams",
    "CovMatrix",
    "correlation",
    "correlation_matrix",
    "variance_functional",
    "customer_covariance",
    "substation_covariance",
    "chol_solve",
    "logdet",
    "n_free_params",
    "pack_params",
    "unpack_params",
    "param_labels",
]

ZERO_SUM_TOL = 1e-10
# Jitter ladder applied to the mean diagonal before declaring failure.
_JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


class CovKind(str, Enum):
    HOMOGENEOUS_UNIFORM = "homogeneous-uniform"
    HOMOGENEOUS = "homogeneous"
    COMPLETE = "complete"


@dataclass(frozen=True)
class CovarianceSpec:
    """Which nested covariance structure to use.

    ``variance_knots`` (the basis for the log-variance expansion) is required
    for the complete structure and ignored otherwise.
    """

    kind: CovKind
    variance_knots: KnotVector | None = None

    def __post_init__(self):
        kind = CovKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is CovKind.COMPLETE and self.variance_knots is None:
            raise ValueError("complete covariance requires variance_knots")

    @property
    def num_variance_basis(self) -> int:
        if self.variance_knots is None:
            return 0
        return self.variance_knots.num_basis


@dataclass
class CovarianceParams:
    """Scale, decay and (for the complete structure) log-variance coefficients.

    ``sigma`` and ``omega`` hold one positive entry per customer type; for the
    uniform structure all ``sigma`` entries are equal.  ``eta_coeffs`` is a
    ``(C, K')`` array whose rows sum to zero.
    """

    sigma: np.ndarray
    omega: np.ndarray
    eta_coeffs: np.ndarray | None = None

    def __post_init__(self):
        self.sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        self.omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        if self.sigma.shape != self.omega.shape:
            raise ValueError("sigma and omega must have one entry per type")
        if np.any(self.sigma <= 0):
            raise ValueError("sigma entries must be positive")
        if np.any(self.omega <= 0):
            raise ValueError("omega entries must be positive")
        if self.eta_coeffs is not None:
            self.eta_coeffs = np.asarray(self.eta_coeffs, dtype=float)
            if self.eta_coeffs.ndim != 2 or self.eta_coeffs.shape[0] != self.sigma.size:
                raise ValueError("eta_coeffs must be (n_types, K')")
            sums = self.eta_coeffs.sum(axis=1)
            if np.any(np.abs(sums) > ZERO_SUM_TOL):
                raise ValueError(
                    f"eta coefficient rows must sum to zero (got sums {sums})"
                )

    @property
    def n_types(self) -> int:
        return self.sigma.size

    def copy(self) -> "CovarianceParams":
        return CovarianceParams(
            sigma=self.sigma.copy(),
            omega=self.omega.copy(),
            eta_coeffs=None if self.eta_coeffs is None else self.eta_coeffs.copy(),
        )


def correlation(s: float, t: float, omega: float, horizon: float) -> float:
    """Exponential-decay correlation between times ``s`` and ``t``.

    Equals ``exp(-2 * |t - s| / (omega * horizon))``; 1 exactly when s == t.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    return float(np.exp(-2.0 * abs(t - s) / (omega * horizon)))


def correlation_matrix(times: np.ndarray, omega: float,
                       horizon: float) -> np.ndarray:
    if omega <= 0 or horizon <= 0:
        raise ValueError("omega and horizon must be positive")
    times = np.asarray(times, dtype=float)
    lags = np.abs(times[:, None] - times[None, :])
    return np.exp(-2.0 * lags / (omega * horizon))


def variance_functional(spec: CovarianceSpec, params: CovarianceParams,
                        c: int, t) -> np.ndarray | float:
    """Variance functional ``eta_c`` evaluated at time(s) ``t``."""
    scalar = np.isscalar(t)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if spec.kind is CovKind.COMPLETE:
        if params.eta_coeffs is None:
            raise ValueError("complete covariance requires eta_coeffs")
        phi = basis_matrix(spec.variance_knots, t_arr)
        vals = params.sigma[c] * np.exp(phi @ params.eta_coeffs[c])
    else:
        vals = np.full(t_arr.shape, params.sigma[c])
    return float(vals[0]) if scalar else vals


def variance_grid(spec: CovarianceSpec, params: CovarianceParams,
                  times: np.ndarray) -> np.ndarray:
    """All variance functionals on a grid, shape ``(n_types, N)``."""
    times = np.asarray(times, dtype=float)
    if spec.kind is CovKind.COMPLETE:
        phi = basis_matrix(spec.variance_knots, times)
        return params.sigma[:, None] * np.exp(params.eta_coeffs @ phi.T)
    return np.repeat(params.sigma[:, None], times.size, axis=1)


def customer_covariance(spec: CovarianceSpec, params: CovarianceParams,
                        c: int, s: float, t: float, horizon: float) -> float:
    """Covariance kernel of a single type-``c`` customer at ``(s, t)``."""
    eta_s = variance_functional(spec, params, c, s)
    eta_t = variance_functional(spec, params, c, t)
    return eta_s * correlation(s, t, params.omega[c], horizon) * eta_t


class CovMatrix:
    """Dense SPD covariance matrix with a cached Cholesky factor.

    Immutable after construction; safe to share across threads.
    """

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("covariance matrix must be square")
        scale = max(np.abs(values).max(), 1.0)
        if np.abs(values - values.T).max() > 1e-10 * scale:
            raise ValueError("covariance matrix is not symmetric")
        values = 0.5 * (values + values.T)
        self.values = values
        self.chol, self.jitter = _chol_with_jitter(values)
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(self.chol))))
        self.values.setflags(write=False)
        self.chol.setflags(write=False)

    @property
    def shape(self):
        return self.values.shape

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``M x = rhs`` using the cached factorization."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.values.shape[0]:
            raise ValueError(
                f"rhs has leading dimension {rhs.shape[0]}, expected {self.values.shape[0]}"
            )
        half = solve_triangular(self.chol, rhs, lower=True)
        return solve_triangular(self.chol, half, lower=True, trans="T")

    def half_solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``L x = rhs`` where ``M = L L^T``; useful for quadratic forms."""
        return solve_triangular(self.chol, rhs, lower=True)


def _chol_with_jitter(values: np.ndarray) -> tuple[np.ndarray, float]:
    mean_diag = float(np.mean(np.diag(values)))
    if not np.isfinite(mean_diag) or mean_diag <= 0:
        raise FactorizationError("covariance diagonal is not positive")
    for jitter in _JITTERS:
        try:
            bumped = values if jitter == 0.0 else values + jitter * mean_diag * np.eye(len(values))
            return np.linalg.cholesky(bumped), jitter
        except np.linalg.LinAlgError:
            continue
    cond = float(np.linalg.cond(values))
    raise FactorizationError(
        f"Cholesky failed after jitter up to {_JITTERS[-1]:g} of mean diagonal "
        f"(condition number {cond:.3e})",
        condition_number=cond,
    )


def substation_covariance(market_row: np.ndarray, spec: CovarianceSpec,
                          params: CovarianceParams, times: np.ndarray,
                          horizon: float) -> CovMatrix:
    """Aggregated covariance matrix for one substation on a time grid.

    Sums the per-type kernels weighted by the market counts; positive
    semi-definiteness is structural (each kernel is PSD and weights are
    non-negative).
    """
    market_row = np.asarray(market_row, dtype=float)
    if market_row.ndim != 1 or market_row.size != params.n_types:
        raise ValueError("market row must hold one count per customer type")
    if np.any(market_row < 0) or not np.any(market_row > 0):
        raise ValueError("market row needs non-negative counts, at least one positive")
    times = np.asarray(times, dtype=float)
    if times.size < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be strictly increasing with >= 2 points")
    etas = variance_grid(spec, params, times)
    total = np.zeros((times.size, times.size))
    for c in range(params.n_types):
        if market_row[c] == 0:
            continue
        rho = correlation_matrix(times, params.omega[c], horizon)
        total += market_row[c] * np.outer(etas[c], etas[c]) * rho
    return CovMatrix(total)


def chol_solve(matrix: CovMatrix, rhs: np.ndarray) -> np.ndarray:
    return matrix.solve(rhs)


def logdet(matrix: CovMatrix) -> float:
    return matrix.logdet


# ---------------------------------------------------------------------------
# Packing between CovarianceParams and the unconstrained optimizer vector.
# Scales and decays are optimized on the log scale; the zero-sum constraint
# on eta coefficients is enforced by optimizing K'-1 free entries per type
# and setting the last one to minus their sum.
# ---------------------------------------------------------------------------

def n_free_params(spec: CovarianceSpec, n_types: int) -> int:
    if spec.kind is CovKind.HOMOGENEOUS_UNIFORM:
        return 1 + n_types
    if spec.kind is CovKind.HOMOGENEOUS:
        return 2 * n_types
    return 2 * n_types + n_types * (spec.num_variance_basis - 1)


def pack_params(spec: CovarianceSpec, params: CovarianceParams) -> np.ndarray:
    if spec.kind is CovKind.HOMOGENEOUS_UNIFORM:
        if not np.all(params.sigma == params.sigma[0]):
            raise ValueError("uniform structure requires a single shared sigma")
        head = [np.log(params.sigma[:1])]
    else:
        head = [np.log(params.sigma)]
    head.append(np.log(params.omega))
    if spec.kind is CovKind.COMPLETE:
        if params.eta_coeffs is None:
            raise ValueError("complete covariance requires eta_coeffs")
        head.append(params.eta_coeffs[:, :-1].ravel())
    return np.concatenate(head)


def unpack_params(spec: CovarianceSpec, theta: np.ndarray,
                  n_types: int) -> CovarianceParams:
    theta = np.asarray(theta, dtype=float)
    if theta.size != n_free_params(spec, n_types):
        raise ValueError("parameter vector has wrong length for this spec")
    if spec.kind is CovKind.HOMOGENEOUS_UNIFORM:
        sigma = np.full(n_types, np.exp(theta[0]))
        omega = np.exp(theta[1:1 + n_types])
        return CovarianceParams(sigma=sigma, omega=omega)
    sigma = np.exp(theta[:n_types])
    omega = np.exp(theta[n_types:2 * n_types])
    if spec.kind is CovKind.HOMOGENEOUS:
        return CovarianceParams(sigma=sigma, omega=omega)
    kp = spec.num_variance_basis
    free = theta[2 * n_types:].reshape(n_types, kp - 1)
    eta = np.concatenate([free, -free.sum(axis=1, keepdims=True)], axis=1)
    return CovarianceParams(sigma=sigma, omega=omega, eta_coeffs=eta)


def param_labels(spec: CovarianceSpec, n_types: int) -> list[str]:
    """Names of the packed free parameters, in packing order."""
    if spec.kind is CovKind.HOMOGENEOUS_UNIFORM:
        labels = ["log_sigma"]
    else:
        labels = [f"log_sigma_{c + 1}" for c in range(n_types)]
    labels += [f"log_omega_{c + 1}" for c in range(n_types)]
    if spec.kind is CovKind.COMPLETE:
        kp = spec.num_variance_basis
        labels += [
            f"eta_{c + 1}_{k + 1}" for c in range(n_types) for k in range(kp - 1)
        ]
    return labels
