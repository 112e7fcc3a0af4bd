"""Design matrices, Gaussian log-likelihood and the alternating estimation loop.

The aggregated model for substation ``j`` on day ``i`` stacks, per time
point, the market-scaled basis (or tensor-basis) blocks for each customer
type followed by the covariate columns.  Estimation alternates between

* a quasi-Newton maximization of the log-likelihood over the covariance
  parameters with the curve coefficients fixed, and
* a generalized least-squares update of the curve coefficients with the
  covariance fixed,

until the likelihood change drops below the precision ``xi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize

from .basis import KnotVector, TensorBasisSpec, basis_matrix, eval_basis, \
    eval_tensor_basis, make_uniform_knots, tensor_matrix
from .covariance import (
    CovKind,
    CovMatrix,
    CovarianceParams,
    CovarianceSpec,
    n_free_params,
    pack_params,
    unpack_params,
    variance_grid,
)
from .errors import FactorizationError, IdentifiabilityError, SchemaError
from .panel import LoadPanel, MarketTable

__all__ = [
    "ModelConfig",
    "FitResult",
    "CurveBand",
    "IdentifiabilityReport",
    "build_design_row",
    "log_likelihood",
    "wls_beta_update",
    "optimize_covariance",
    "fit",
    "typical_curve",
    "check_identifiability",
]

_LOG_2PI = float(np.log(2.0 * np.pi))
_BIG = 1e12
_COSINE_TOL = 1e-10


@dataclass
class ModelConfig:
    """Basis, covariance structure, covariates and convergence control."""

    time_basis: KnotVector
    covariance: CovarianceSpec
    covariate_basis: KnotVector | None = None
    covariates: tuple[str, ...] = ()
    xi: float = 1e-6
    max_outer_iter: int = 200

    def __post_init__(self):
        self.covariates = tuple(self.covariates)
        if self.xi <= 0:
            raise ValueError("xi must be positive")
        if self.max_outer_iter < 1:
            raise ValueError("max_outer_iter must be at least 1")

    @property
    def tensor(self) -> bool:
        return self.covariate_basis is not None

    def basis_size(self) -> int:
        k = self.time_basis.num_basis
        return k * self.covariate_basis.num_basis if self.tensor else k

    @classmethod
    def for_panel(cls, panel: LoadPanel, *, n_time_basis: int,
                  covariance: str | CovKind = CovKind.HOMOGENEOUS,
                  n_covariate_basis: int | None = None,
                  n_variance_basis: int = 6,
                  covariates: tuple[str, ...] = (),
                  xi: float = 1e-6, max_outer_iter: int = 200,
                  degree: int = 3) -> "ModelConfig":
        """Build a config with uniform knots over the panel's observed ranges."""
        time_kv = make_uniform_knots(0.0, panel.horizon, n_time_basis, degree)
        cov_kv = None
        if n_covariate_basis is not None:
            lo, hi = panel.temperature_range()
            cov_kv = make_uniform_knots(lo, hi, n_covariate_basis, degree)
        kind = CovKind(covariance)
        variance_knots = None
        if kind is CovKind.COMPLETE:
            variance_knots = make_uniform_knots(0.0, panel.horizon,
                                                n_variance_basis, degree)
        return cls(
            time_basis=time_kv,
            covariance=CovarianceSpec(kind=kind, variance_knots=variance_knots),
            covariate_basis=cov_kv,
            covariates=tuple(covariates),
            xi=xi,
            max_outer_iter=max_outer_iter,
        )


@dataclass
class IdentifiabilityReport:
    ok: bool
    problems: list[str] = field(default_factory=list)
    proportional_pairs: list[tuple[str, str]] = field(default_factory=list)


def check_identifiability(market: MarketTable, n_types: int | None = None,
                          n_clusters: int | None = None) -> IdentifiabilityReport:
    """Check the substation-count and market-independence conditions.

    Single-model fits need more substations than customer types; a B-cluster
    mixture additionally needs room to place strictly more than C substations
    in every cluster, which rules out B=4 with 12 substations and 2 types.
    """
    c = n_types if n_types is not None else market.n_types
    j = market.n_substations
    b = n_clusters if n_clusters is not None else 1
    problems: list[str] = []
    if b < 1:
        raise ValueError("n_clusters must be at least 1")
    if j <= c * b:
        problems.append(
            f"{j} substations cannot identify {b} cluster(s) of {c} customer "
            f"types (need J > C*B = {c * b})"
        )
    if b >= 2 and j <= b * (c + 1):
        problems.append(
            f"cannot give every one of {b} clusters more than {c} substations "
            f"with only {j} available (need J > B*(C+1) = {b * (c + 1)})"
        )
    pairs = []
    if c >= 2:
        # with a single type all rows point the same way and the GLS stays
        # full rank, so proportionality only matters for 2+ types
        rows = market.counts.astype(float)
        norms = np.linalg.norm(rows, axis=1)
        unit = rows / norms[:, None]
        cos = unit @ unit.T
        for a in range(j):
            for bb in range(a + 1, j):
                if abs(cos[a, bb]) > 1.0 - _COSINE_TOL:
                    pairs.append((market.substations[a], market.substations[bb]))
    if pairs:
        listed = ", ".join(f"{x}~{y}" for x, y in pairs)
        problems.append(f"proportional market rows: {listed}")
    return IdentifiabilityReport(ok=not problems, problems=problems,
                                 proportional_pairs=pairs)


def require_identifiable(market: MarketTable, n_types: int | None = None,
                         n_clusters: int | None = None) -> None:
    report = check_identifiability(market, n_types, n_clusters)
    if not report.ok:
        raise IdentifiabilityError("; ".join(report.problems))


def build_design_row(market_row: np.ndarray, config: ModelConfig, t: float,
                     v: float | None = None,
                     covariate_values=()) -> np.ndarray:
    """Single design row: market-scaled basis blocks plus covariate columns."""
    market_row = np.asarray(market_row, dtype=float)
    covariate_values = np.asarray(covariate_values, dtype=float).ravel()
    if covariate_values.size != len(config.covariates):
        raise SchemaError(
            f"expected {len(config.covariates)} covariate values, "
            f"got {covariate_values.size}"
        )
    if config.tensor:
        if v is None:
            raise ValueError("tensor design needs a covariate value v")
        spec = TensorBasisSpec(config.time_basis, config.covariate_basis)
        phi = eval_tensor_basis(spec, t, v)
    else:
        phi = eval_basis(config.time_basis, t)
    blocks = [m * phi for m in market_row]
    blocks.append(covariate_values)
    return np.concatenate(blocks)


class Workspace:
    """Prebuilt designs and response statistics for one (panel, market, config).

    Designs are stored per substation, as one (N, p) matrix when they do not
    change across days (no tensor surface and no functional covariates) and
    as an (I, N, p) array otherwise.
    """

    def __init__(self, panel: LoadPanel, market: MarketTable,
                 config: ModelConfig):
        if panel.substations != market.substations:
            raise SchemaError("panel and market substations differ")
        self.panel = panel
        self.market = market
        self.config = config
        self.times = panel.times
        self.horizon = panel.horizon
        self.n_days = panel.n_days
        self.n_subs = panel.n_substations
        self.n_times = panel.n_times
        self.C = market.n_types
        self.P = len(config.covariates)
        for name in config.covariates:
            panel.covariate_kind(name)  # raises on unknown names
        uses_functional = any(
            name in panel.functional_covariates for name in config.covariates
        )
        self.day_constant = not config.tensor and not uses_functional
        if config.tensor and panel.temperature is None:
            raise SchemaError("tensor-basis config needs panel temperature curves")
        self.p = self.C * config.basis_size() + self.P
        self.y = panel.loads
        self._lags = np.abs(self.times[:, None] - self.times[None, :])
        self.designs = self._build_designs()

    # -- design construction -------------------------------------------------

    def _covariate_columns(self, i: int, j: int) -> np.ndarray:
        cols = np.empty((self.n_times, self.P))
        for k, name in enumerate(self.config.covariates):
            if name in self.panel.scalar_covariates:
                cols[:, k] = self.panel.scalar_covariates[name][j]
            else:
                cols[:, k] = self.panel.functional_covariates[name][i, j]
        return cols

    def _build_designs(self):
        cfg = self.config
        counts = self.market.counts.astype(float)
        designs = []
        if self.day_constant:
            phi = basis_matrix(cfg.time_basis, self.times)
            for j in range(self.n_subs):
                blocks = [counts[j, c] * phi for c in range(self.C)]
                if self.P:
                    blocks.append(self._covariate_columns(0, j))
                designs.append(np.concatenate(blocks, axis=1))
            return designs
        spec = TensorBasisSpec(cfg.time_basis, cfg.covariate_basis) if cfg.tensor else None
        phi_time = None if cfg.tensor else basis_matrix(cfg.time_basis, self.times)
        for j in range(self.n_subs):
            x = np.empty((self.n_days, self.n_times, self.p))
            for i in range(self.n_days):
                if cfg.tensor:
                    phi = tensor_matrix(spec, self.times,
                                        self.panel.temperature[i, j])
                else:
                    phi = phi_time
                blocks = [counts[j, c] * phi for c in range(self.C)]
                if self.P:
                    blocks.append(self._covariate_columns(i, j))
                x[i] = np.concatenate(blocks, axis=1)
            designs.append(x)
        return designs

    # -- covariance assembly --------------------------------------------------

    def covariances(self, params: CovarianceParams,
                    counts: np.ndarray | None = None) -> list[CovMatrix]:
        """Per-substation covariance matrices for the given parameters."""
        spec = self.config.covariance
        counts = self.market.counts if counts is None else counts
        etas = variance_grid(spec, params, self.times)
        kernels = []
        for c in range(self.C):
            rho = np.exp(-2.0 * self._lags / (params.omega[c] * self.horizon))
            kernels.append(np.outer(etas[c], etas[c]) * rho)
        mats = []
        for j in range(counts.shape[0]):
            total = np.zeros((self.n_times, self.n_times))
            for c in range(self.C):
                if counts[j, c]:
                    total += counts[j, c] * kernels[c]
            mats.append(CovMatrix(total))
        return mats

    # -- residuals and likelihood ----------------------------------------------

    def mean_curves(self, beta: np.ndarray) -> np.ndarray:
        """Model means, shape (I, J, N)."""
        mu = np.empty((self.n_days, self.n_subs, self.n_times))
        for j in range(self.n_subs):
            x = self.designs[j]
            if self.day_constant:
                mu[:, j, :] = (x @ beta)[None, :]
            else:
                mu[:, j, :] = x @ beta
        return mu

    def residual_matrices(self, beta: np.ndarray) -> list[np.ndarray]:
        """Per-substation (N, I) matrices of mean minus observed load."""
        out = []
        for j in range(self.n_subs):
            x = self.designs[j]
            if self.day_constant:
                mu = x @ beta
                r = mu[:, None] - self.y[:, j, :].T
            else:
                r = (x @ beta).T - self.y[:, j, :].T
            out.append(r)
        return out

    def substation_logliks(self, resids: list[np.ndarray],
                           covs: list[CovMatrix]) -> np.ndarray:
        """Sum over days of the Gaussian log-density, one entry per substation."""
        out = np.empty(self.n_subs)
        ni = self.n_days * self.n_times
        for j in range(self.n_subs):
            half = covs[j].half_solve(resids[j])
            quad = float(np.sum(half * half))
            out[j] = -0.5 * (self.n_days * covs[j].logdet + quad + ni * _LOG_2PI)
        return out

    def loglik_resid(self, resids: list[np.ndarray], covs: list[CovMatrix],
                     weights: np.ndarray | None = None) -> float:
        per_sub = self.substation_logliks(resids, covs)
        if weights is None:
            return float(per_sub.sum())
        return float(per_sub @ np.asarray(weights, dtype=float))

    def loglik(self, beta: np.ndarray, params: CovarianceParams) -> float:
        return self.loglik_resid(self.residual_matrices(beta),
                                 self.covariances(params))

    # -- normal equations -------------------------------------------------------

    def normal_equations(self, covs: list[CovMatrix] | None = None,
                         weights: np.ndarray | None = None):
        """Accumulate X' W X and X' W y, W the (weighted) precision."""
        a = np.zeros((self.p, self.p))
        b = np.zeros(self.p)
        w = np.ones(self.n_subs) if weights is None else np.asarray(weights, float)
        for j in range(self.n_subs):
            if w[j] == 0.0:
                continue
            x = self.designs[j]
            yj = self.y[:, j, :]
            if self.day_constant:
                v = covs[j].solve(x) if covs is not None else x
                a += w[j] * self.n_days * (x.T @ v)
                ysum = yj.sum(axis=0)
                rhs = covs[j].solve(ysum) if covs is not None else ysum
                b += w[j] * (x.T @ rhs)
            else:
                flat = x.transpose(1, 0, 2).reshape(self.n_times, -1)
                vflat = covs[j].solve(flat) if covs is not None else flat
                v = vflat.reshape(self.n_times, self.n_days, self.p)
                a += w[j] * np.einsum("inp,niq->pq", x, v)
                wy = covs[j].solve(yj.T) if covs is not None else yj.T
                b += w[j] * np.einsum("inp,ni->p", x, wy)
        return 0.5 * (a + a.T), b

    def solve_normal(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        try:
            factor = cho_factor(a)
        except LinAlgError:
            report = check_identifiability(self.market)
            detail = "; ".join(report.problems) if report.problems else \
                "design columns are linearly dependent"
            raise IdentifiabilityError(
                f"normal equations are rank deficient: {detail}"
            ) from None
        beta = cho_solve(factor, b)
        for _ in range(2):  # iterative refinement
            beta = beta + cho_solve(factor, b - a @ beta)
        rel = np.linalg.norm(a @ beta - b) / max(np.linalg.norm(b), 1e-300)
        if rel > 1e-8:
            raise IdentifiabilityError(
                f"normal equations too ill-conditioned (relative residual {rel:.2e})"
            )
        return beta


# ---------------------------------------------------------------------------
# Covariance optimization
# ---------------------------------------------------------------------------

@dataclass
class OptimizationInfo:
    converged: bool
    n_iterations: int
    n_evaluations: int
    improved: bool
    objective: float


def make_covariance_objective(ws: Workspace, resids: list[np.ndarray],
                              weights: np.ndarray | None = None):
    """Negative (weighted) log-likelihood as a function of packed parameters."""
    spec = ws.config.covariance
    n_types = ws.C

    def objective(theta: np.ndarray) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                params = unpack_params(spec, theta, n_types)
                covs = ws.covariances(params)
                ll = ws.loglik_resid(resids, covs, weights)
            except (FactorizationError, ValueError, FloatingPointError):
                return _BIG
        if not np.isfinite(ll):
            return _BIG
        return -ll

    return objective


def _optimize_covariance(ws: Workspace, resids: list[np.ndarray],
                         init: CovarianceParams,
                         weights: np.ndarray | None = None,
                         gtol: float = 1e-5,
                         maxiter: int = 200) -> tuple[CovarianceParams, OptimizationInfo]:
    objective = make_covariance_objective(ws, resids, weights)
    theta0 = pack_params(ws.config.covariance, init)
    f0 = objective(theta0)
    res = minimize(objective, theta0, method="BFGS", jac="3-point",
                   options={"gtol": gtol, "maxiter": maxiter})
    improved = np.isfinite(res.fun) and res.fun <= f0
    if not improved:
        return init.copy(), OptimizationInfo(
            converged=False, n_iterations=int(res.nit),
            n_evaluations=int(res.nfev), improved=False, objective=f0,
        )
    params = unpack_params(ws.config.covariance, res.x, ws.C)
    grad_ok = res.success or (res.jac is not None
                              and np.max(np.abs(res.jac)) < gtol)
    info = OptimizationInfo(
        converged=bool(grad_ok), n_iterations=int(res.nit),
        n_evaluations=int(res.nfev), improved=True, objective=float(res.fun),
    )
    return params, info


def fd_hessian(func, x: np.ndarray, rel_step: float = 3e-4) -> np.ndarray:
    """Central finite-difference Hessian of a scalar function."""
    x = np.asarray(x, dtype=float)
    n = x.size
    h = rel_step * (1.0 + np.abs(x))
    hess = np.empty((n, n))
    f0 = func(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        fpp = func(x + ei)
        fmm = func(x - ei)
        hess[i, i] = (fpp - 2.0 * f0 + fmm) / h[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            fa = func(x + ei + ej)
            fb = func(x + ei - ej)
            fc = func(x - ei + ej)
            fd = func(x - ei - ej)
            hess[i, j] = hess[j, i] = (fa - fb - fc + fd) / (4.0 * h[i] * h[j])
    return hess


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def log_likelihood(beta: np.ndarray, cov_params: CovarianceParams,
                   panel: LoadPanel, market: MarketTable,
                   config: ModelConfig) -> float:
    """Gaussian log-likelihood, including the -(NIJ/2) log(2 pi) constant."""
    return Workspace(panel, market, config).loglik(np.asarray(beta, float),
                                                   cov_params)


def wls_beta_update(cov_params: CovarianceParams, panel: LoadPanel,
                    market: MarketTable, config: ModelConfig) -> np.ndarray:
    """Generalized least-squares solve of the curve coefficients."""
    require_identifiable(market)
    ws = Workspace(panel, market, config)
    covs = ws.covariances(cov_params)
    a, b = ws.normal_equations(covs)
    return ws.solve_normal(a, b)


def optimize_covariance(beta: np.ndarray, panel: LoadPanel,
                        market: MarketTable, config: ModelConfig,
                        init: CovarianceParams,
                        gtol: float = 1e-5,
                        maxiter: int = 200) -> tuple[CovarianceParams, OptimizationInfo]:
    """Maximize the log-likelihood over covariance parameters at fixed beta."""
    ws = Workspace(panel, market, config)
    resids = ws.residual_matrices(np.asarray(beta, float))
    return _optimize_covariance(ws, resids, init, gtol=gtol, maxiter=maxiter)


def moment_sigma_split(counts: np.ndarray, per_sub_var: np.ndarray) -> np.ndarray:
    """Split per-substation residual variances into per-type scales.

    Regressing the variances on the market counts exploits market variation
    to attribute variance to customer types; a symmetric split tends to fall
    into label-swapped local optima on strongly unbalanced markets.
    """
    counts = np.asarray(counts, dtype=float)
    per_sub_var = np.asarray(per_sub_var, dtype=float)
    shared = max(float(per_sub_var.mean()), 1e-12) / \
        max(float(counts.sum(axis=1).mean()), 1.0)
    sigma2, *_ = np.linalg.lstsq(counts, per_sub_var, rcond=None)
    if not np.all(np.isfinite(sigma2)):
        sigma2 = np.full(counts.shape[1], shared)
    return np.sqrt(np.clip(sigma2, 1e-2 * shared, None))


def default_covariance_init(ws: Workspace, beta: np.ndarray) -> CovarianceParams:
    """Moment-based starting point for the covariance optimization."""
    resids = ws.residual_matrices(beta)
    per_sub = np.array([np.mean(r * r) for r in resids])
    spec = ws.config.covariance
    if spec.kind is CovKind.HOMOGENEOUS_UNIFORM:
        pooled = float(per_sub.mean())
        mean_total = float(ws.market.counts.sum(axis=1).mean())
        sigma = np.full(ws.C, np.sqrt(max(pooled, 1e-12) / max(mean_total, 1.0)))
    else:
        sigma = moment_sigma_split(ws.market.counts, per_sub)
    omega = np.full(ws.C, 0.2)
    eta = None
    if spec.kind is CovKind.COMPLETE:
        eta = np.zeros((ws.C, spec.num_variance_basis))
    return CovarianceParams(sigma=sigma, omega=omega, eta_coeffs=eta)


@dataclass
class FitResult:
    """Estimated coefficients, covariance parameters and fit metadata."""

    beta: np.ndarray
    cov_params: CovarianceParams
    loglik: float
    trace: list[float]
    converged: bool
    n_outer_iter: int
    config: ModelConfig
    market: MarketTable
    n_days: int
    n_substations: int
    times: np.ndarray
    horizon: float
    normal_matrix: np.ndarray
    cov_hessian: np.ndarray | None = None
    cov_opt_converged: bool = True

    def __post_init__(self):
        self._beta_cov = None

    @property
    def n_times(self) -> int:
        return self.times.size

    @property
    def n_beta(self) -> int:
        return self.beta.size

    @property
    def n_cov_params(self) -> int:
        return n_free_params(self.config.covariance, self.market.n_types)

    @property
    def n_parameters(self) -> int:
        return self.n_beta + self.n_cov_params

    def beta_block(self, c: int) -> np.ndarray:
        size = self.config.basis_size()
        return self.beta[c * size:(c + 1) * size]

    @property
    def gamma(self) -> np.ndarray:
        p_cov = len(self.config.covariates)
        return self.beta[self.beta.size - p_cov:] if p_cov else np.empty(0)

    def beta_covariance(self) -> np.ndarray:
        """Covariance of the coefficient estimator, (X' Sigma^-1 X)^-1."""
        if self._beta_cov is None:
            self._beta_cov = np.linalg.inv(self.normal_matrix)
        return self._beta_cov


@dataclass
class CurveBand:
    """A curve with its pointwise standard error and 95% band."""

    values: np.ndarray
    se: np.ndarray

    @property
    def lower(self) -> np.ndarray:
        return self.values - 1.96 * self.se

    @property
    def upper(self) -> np.ndarray:
        return self.values + 1.96 * self.se


def fit(panel: LoadPanel, market: MarketTable, config: ModelConfig,
        init_beta: np.ndarray | None = None,
        init_cov: CovarianceParams | None = None,
        compute_hessian: bool = True) -> FitResult:
    """Alternate GLS and covariance optimization until the likelihood settles.

    The starting coefficients come from an unweighted least-squares fit unless
    supplied.  A non-convergent run (iteration cap reached) is returned with
    ``converged=False`` rather than raised.
    """
    require_identifiable(market)
    ws = Workspace(panel, market, config)

    if init_beta is not None:
        beta = np.asarray(init_beta, dtype=float)
        if beta.shape != (ws.p,):
            raise ValueError(f"init_beta must have shape ({ws.p},)")
    else:
        a0, b0 = ws.normal_equations(None)
        beta = ws.solve_normal(a0, b0)

    cov = init_cov.copy() if init_cov is not None else \
        default_covariance_init(ws, beta)

    covs = ws.covariances(cov)
    trace = [ws.loglik_resid(ws.residual_matrices(beta), covs)]
    converged = False
    cov_opt_ok = True
    a = None
    for _ in range(config.max_outer_iter):
        resids = ws.residual_matrices(beta)
        cov, info = _optimize_covariance(ws, resids, cov)
        cov_opt_ok = info.converged
        covs = ws.covariances(cov)
        a, rhs = ws.normal_equations(covs)
        beta = ws.solve_normal(a, rhs)
        ll = ws.loglik_resid(ws.residual_matrices(beta), covs)
        trace.append(ll)
        if abs(trace[-1] - trace[-2]) < config.xi:
            converged = True
            break

    hessian = None
    if compute_hessian:
        resids = ws.residual_matrices(beta)
        objective = make_covariance_objective(ws, resids)
        hessian = fd_hessian(objective, pack_params(config.covariance, cov))

    return FitResult(
        beta=beta,
        cov_params=cov,
        loglik=trace[-1],
        trace=trace,
        converged=converged,
        n_outer_iter=len(trace) - 1,
        config=config,
        market=market,
        n_days=panel.n_days,
        n_substations=panel.n_substations,
        times=panel.times.copy(),
        horizon=panel.horizon,
        normal_matrix=a if a is not None else ws.normal_equations(covs)[0],
        cov_hessian=hessian,
        cov_opt_converged=cov_opt_ok,
    )


def typical_curve(result: FitResult, c: int, ts: np.ndarray,
                  v=None) -> CurveBand:
    """Estimated typical curve for type ``c`` with a pointwise 95% band.

    For tensor-basis fits ``v`` gives the covariate values: a scalar, an
    array aligned with ``ts`` or a callable evaluated at ``ts``.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    cfg = result.config
    if cfg.tensor:
        if v is None:
            raise ValueError("tensor-basis fit needs covariate values v")
        if callable(v):
            vs = np.asarray(v(ts), dtype=float)
        else:
            vs = np.broadcast_to(np.asarray(v, dtype=float), ts.shape).copy()
        spec = TensorBasisSpec(cfg.time_basis, cfg.covariate_basis)
        phi = tensor_matrix(spec, ts, vs)
    else:
        if v is not None:
            raise ValueError("simple-basis fit takes no covariate values")
        phi = basis_matrix(cfg.time_basis, ts)
    size = cfg.basis_size()
    block = result.beta_covariance()[c * size:(c + 1) * size,
                                     c * size:(c + 1) * size]
    values = phi @ result.beta_block(c)
    var = np.einsum("nk,kl,nl->n", phi, block, phi)
    se = np.sqrt(np.clip(var, 0.0, None))
    return CurveBand(values=values, se=se)
