"""Mixture-of-Gaussian-processes clustering of substations via ECM.

Substations share one of ``B`` sets of typical curves and covariance
parameters.  The observed-data log-likelihood is maximized by iterating

* E-step: posterior membership probabilities, computed in log space with
  per-row max subtraction (day densities multiply, so 30+ days would
  underflow any direct product),
* M-step: exact updates of the mixing proportions and of the per-cluster
  curve coefficients (responsibility-weighted GLS), then a quasi-Newton
  conditional maximization of the per-cluster covariance parameters,
  warm-started from the previous iteration.

Initial values come from the best of ``G`` random valid partitions, scored
by the squared error of per-cluster unweighted fits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .covariance import CovKind, CovarianceParams, n_free_params
from .errors import DegenerateClusterError, IdentifiabilityError
from .model import (
    ModelConfig,
    Workspace,
    _optimize_covariance,
    moment_sigma_split,
    require_identifiable,
)
from .panel import LoadPanel, MarketTable

__all__ = [
    "MixtureConfig",
    "MixtureState",
    "MixtureFitResult",
    "init_clusters",
    "e_step",
    "m_step_pi",
    "m_step_beta",
    "m_step_covariance",
    "fit_mixture",
]

_RESPONSIBILITY_FLOOR = 1e-8


@dataclass
class MixtureConfig:
    """Cluster count, initialization trials and EM convergence control.

    ``n_starts`` of the top squared-error trials are burned in for
    ``burn_iter`` EM iterations each; the best observed likelihood then
    continues to convergence.  This guards against the local maxima a single
    starting partition is prone to.
    """

    model: ModelConfig
    n_clusters: int
    n_trials: int = 10
    xi: float = 1e-6
    max_iter: int = 200
    seed: int | None = None
    n_starts: int = 5
    burn_iter: int = 4

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ValueError("n_clusters must be at least 1")
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")
        if self.xi <= 0:
            raise ValueError("xi must be positive")
        if self.n_starts < 1:
            raise ValueError("n_starts must be at least 1")


@dataclass
class MixtureState:
    """Current mixture parameters: one coefficient vector and covariance
    parameter set per cluster, plus the mixing proportions."""

    betas: np.ndarray
    cov_params: list[CovarianceParams]
    pi: np.ndarray

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=float)
        self.pi = np.asarray(self.pi, dtype=float)
        if self.betas.ndim != 2:
            raise ValueError("betas must be (n_clusters, p)")
        if len(self.cov_params) != self.betas.shape[0] or self.pi.size != self.betas.shape[0]:
            raise ValueError("cluster counts of betas, cov_params and pi differ")

    @property
    def n_clusters(self) -> int:
        return self.betas.shape[0]

    def permuted(self, order) -> "MixtureState":
        order = list(order)
        return MixtureState(
            betas=self.betas[order].copy(),
            cov_params=[self.cov_params[b].copy() for b in order],
            pi=self.pi[order].copy(),
        )


@dataclass
class InitState(MixtureState):
    """Initialization result; keeps the per-trial squared errors around so the
    selection rule can be audited."""

    trial_errors: np.ndarray = field(default_factory=lambda: np.empty(0))
    labels: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))


@dataclass
class MixtureFitResult:
    """Fitted mixture: proportions, responsibilities, per-cluster parameters."""

    pi: np.ndarray
    responsibilities: np.ndarray
    betas: np.ndarray
    cov_params: list[CovarianceParams]
    loglik: float
    trace: list[float]
    assignments: np.ndarray
    converged: bool
    n_iter: int
    config: MixtureConfig
    market: MarketTable
    n_days: int
    times: np.ndarray
    horizon: float

    @property
    def n_clusters(self) -> int:
        return self.pi.size

    @property
    def n_substations(self) -> int:
        return self.responsibilities.shape[0]

    @property
    def n_times(self) -> int:
        return self.times.size

    @property
    def n_parameters(self) -> int:
        per_cluster_cov = n_free_params(self.config.model.covariance,
                                        self.market.n_types)
        b = self.n_clusters
        return b * self.betas.shape[1] + b * per_cluster_cov + (b - 1)


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

def _loglik_matrix(ws: Workspace, state: MixtureState):
    """Per-(substation, cluster) sums over days of the Gaussian log-density."""
    n_subs, n_clusters = ws.n_subs, state.n_clusters
    ll = np.empty((n_subs, n_clusters))
    cov_mats = []
    for b in range(n_clusters):
        covs = ws.covariances(state.cov_params[b])
        resids = ws.residual_matrices(state.betas[b])
        ll[:, b] = ws.substation_logliks(resids, covs)
        cov_mats.append(covs)
    return ll, cov_mats


def _posteriors(ll_matrix: np.ndarray, pi: np.ndarray):
    """Row-normalized responsibilities and the observed-data log-likelihood."""
    with np.errstate(divide="ignore"):
        logw = ll_matrix + np.log(pi)[None, :]
    norm = logsumexp(logw, axis=1, keepdims=True)
    post = np.exp(logw - norm)
    return post, float(norm.sum())


def observed_loglik(state: MixtureState, panel: LoadPanel,
                    market: MarketTable, config: ModelConfig) -> float:
    ws = Workspace(panel, market, config)
    ll, _ = _loglik_matrix(ws, state)
    return _posteriors(ll, state.pi)[1]


def e_step(state: MixtureState, panel: LoadPanel, market: MarketTable,
           config: ModelConfig) -> np.ndarray:
    """Posterior membership probabilities; rows sum to one."""
    ws = Workspace(panel, market, config)
    ll, _ = _loglik_matrix(ws, state)
    post, _ = _posteriors(ll, state.pi)
    return post


def m_step_pi(responsibilities: np.ndarray) -> np.ndarray:
    """Column means of the responsibility matrix."""
    post = np.asarray(responsibilities, dtype=float)
    return post.mean(axis=0)


def _weighted_beta_updates(ws: Workspace, cov_mats: list, post: np.ndarray,
                           p: int) -> np.ndarray:
    n_clusters = post.shape[1]
    betas = np.empty((n_clusters, p))
    for b in range(n_clusters):
        weights = post[:, b]
        total = float(weights.sum())
        if total < _RESPONSIBILITY_FLOOR:
            raise DegenerateClusterError(
                f"cluster {b + 1} holds negligible responsibility ({total:.3e})",
                cluster=b,
            )
        support = int(np.sum(weights > 1e-6))
        if support < ws.C:
            # fewer than C independent market rows leave the cluster's GLS
            # rank deficient; C substations are the identifiability minimum
            raise DegenerateClusterError(
                f"cluster {b + 1} effectively holds {support} substation(s); "
                f"needs at least {ws.C}",
                cluster=b,
            )
        a, rhs = ws.normal_equations(cov_mats[b], weights=weights)
        betas[b] = ws.solve_normal(a, rhs)
    return betas


def m_step_beta(responsibilities: np.ndarray, cov_params: list[CovarianceParams],
                panel: LoadPanel, market: MarketTable,
                config: ModelConfig) -> np.ndarray:
    """Responsibility-weighted GLS update of every cluster's coefficients."""
    ws = Workspace(panel, market, config)
    cov_mats = [ws.covariances(cp) for cp in cov_params]
    return _weighted_beta_updates(ws, cov_mats, np.asarray(responsibilities, float), ws.p)


def m_step_covariance(responsibilities: np.ndarray, betas: np.ndarray,
                      panel: LoadPanel, market: MarketTable,
                      config: ModelConfig,
                      init: list[CovarianceParams]) -> list[CovarianceParams]:
    """Conditional maximization of the covariance part of the Q function,
    one independent quasi-Newton solve per cluster."""
    ws = Workspace(panel, market, config)
    post = np.asarray(responsibilities, dtype=float)
    out = []
    for b in range(post.shape[1]):
        resids = ws.residual_matrices(np.asarray(betas)[b])
        params, _ = _optimize_covariance(ws, resids, init[b],
                                         weights=post[:, b])
        out.append(params)
    return out


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def _random_partition(rng, n_subs: int, n_clusters: int, min_size: int) -> np.ndarray:
    labels = np.empty(n_subs, dtype=int)
    perm = rng.permutation(n_subs)
    head = n_clusters * min_size
    labels[perm[:head]] = np.tile(np.arange(n_clusters), min_size)
    if n_subs > head:
        labels[perm[head:]] = rng.integers(0, n_clusters, size=n_subs - head)
    return labels


def _substation_stats(ws: Workspace) -> list[tuple]:
    """Identity-covariance normal-equation pieces per substation."""
    stats = []
    for j in range(ws.n_subs):
        x = ws.designs[j]
        yj = ws.y[:, j, :]
        if ws.day_constant:
            a_j = ws.n_days * (x.T @ x)
            b_j = x.T @ yj.sum(axis=0)
        else:
            a_j = np.einsum("inp,inq->pq", x, x)
            b_j = np.einsum("inp,in->p", x, yj)
        stats.append((a_j, b_j, float(np.sum(yj * yj))))
    return stats


def _noise_normalized_stats(ws: Workspace, stats: list[tuple]) -> list[tuple]:
    """Stats rescaled by pilot per-substation residual variances.

    Raw squared error is dominated by the noisiest substations, so
    partitions selected on it can sit far from the likelihood's preference;
    dividing each substation's contribution by its variance under a global
    one-cluster fit approximates the Gaussian geometry.
    """
    a = sum(s[0] for s in stats)
    rhs = sum(s[1] for s in stats)
    try:
        beta = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError:
        return stats
    n_points = ws.n_days * ws.n_times
    scaled = []
    for a_j, b_j, yy_j in stats:
        ss = max(yy_j - 2.0 * beta @ b_j + beta @ a_j @ beta, 1e-12)
        v_j = ss / n_points
        scaled.append((a_j / v_j, b_j / v_j, yy_j / v_j))
    return scaled


def _partition_fit(ws: Workspace, stats: list[tuple], labels: np.ndarray,
                   n_clusters: int):
    """Per-cluster unweighted fits and the total squared error, or None."""
    betas = np.empty((n_clusters, ws.p))
    err = 0.0
    for b in range(n_clusters):
        members = np.flatnonzero(labels == b)
        a = sum(stats[j][0] for j in members)
        rhs = sum(stats[j][1] for j in members)
        try:
            beta_b = np.linalg.solve(a, rhs)
        except np.linalg.LinAlgError:
            return None, np.inf
        betas[b] = beta_b
        for j in members:
            a_j, b_j, yy_j = stats[j]
            err += yy_j - 2.0 * beta_b @ b_j + beta_b @ a_j @ beta_b
    return betas, float(err)


def _profile_score(ws: Workspace, raw_stats: list[tuple], labels: np.ndarray,
                   betas: np.ndarray) -> float:
    """Per-substation log-variance profile of a partition (lower is better).

    Summing 0.5 * n * log(ss_j / n) scores each substation's fit on its own
    noise scale, which tracks the Gaussian likelihood far better than summed
    squared errors when noise levels differ by an order of magnitude.
    """
    n_pts = ws.n_days * ws.n_times
    score = 0.0
    for j in range(ws.n_subs):
        a_j, b_j, yy_j = raw_stats[j]
        beta = betas[labels[j]]
        ss = max(yy_j - 2.0 * beta @ b_j + beta @ a_j @ beta, 1e-12)
        score += 0.5 * n_pts * float(np.log(ss / n_pts))
    return score


def _polish_partition(ws: Workspace, norm_stats: list[tuple],
                      raw_stats: list[tuple], labels: np.ndarray,
                      n_clusters: int, min_size: int,
                      frozen: int | None = None, max_passes: int = 10):
    """Greedy moves and swaps that lower the profile score of a partition.

    Random partitions of a handful of substations almost never start inside
    the basin of the best clustering, and the saturated posteriors of panels
    this informative keep EM from migrating members later, so candidate
    partitions are polished combinatorially first.  ``frozen`` pins one
    substation's label, letting basin-hopping kicks survive the descent.
    """

    def evaluate(lab):
        betas, _ = _partition_fit(ws, norm_stats, lab, n_clusters)
        if betas is None:
            return None, np.inf
        return betas, _profile_score(ws, raw_stats, lab, betas)

    labels = np.asarray(labels, dtype=int).copy()
    betas, score = evaluate(labels)
    if betas is None:
        return labels, betas, score
    for _ in range(max_passes):
        improved = False
        for j in range(ws.n_subs):
            if j == frozen:
                continue
            current = labels[j]
            if np.sum(labels == current) <= min_size:
                continue
            for b in range(n_clusters):
                if b == current:
                    continue
                labels[j] = b
                cand_betas, cand_score = evaluate(labels)
                if cand_betas is not None and cand_score < score - 1e-9:
                    betas, score = cand_betas, cand_score
                    current = b
                    improved = True
                else:
                    labels[j] = current
        # pairwise swaps escape plateaus single moves cannot
        for j in range(ws.n_subs):
            for jj in range(j + 1, ws.n_subs):
                if labels[j] == labels[jj] or frozen in (j, jj):
                    continue
                labels[j], labels[jj] = labels[jj], labels[j]
                cand_betas, cand_score = evaluate(labels)
                if cand_betas is not None and cand_score < score - 1e-9:
                    betas, score = cand_betas, cand_score
                    improved = True
                else:
                    labels[j], labels[jj] = labels[jj], labels[j]
        if not improved:
            break
    return labels, betas, score


def _run_trials(ws: Workspace, cfg: MixtureConfig, rng: np.random.Generator,
                stats: list[tuple] | None = None):
    """G random valid partitions with per-cluster unweighted fits and errors."""
    n_subs, n_clusters = ws.n_subs, cfg.n_clusters
    min_size = ws.market.n_types + 1
    if stats is None:
        stats = _substation_stats(ws)
    trial_errors = np.full(cfg.n_trials, np.inf)
    trial_labels = []
    trial_betas = []
    for g in range(cfg.n_trials):
        labels = _random_partition(rng, n_subs, n_clusters, min_size)
        betas, err = _partition_fit(ws, stats, labels, n_clusters)
        trial_labels.append(labels)
        trial_betas.append(betas)
        trial_errors[g] = err
    if not np.any(np.isfinite(trial_errors)):
        raise IdentifiabilityError(
            "no initialization trial produced solvable per-cluster fits"
        )
    return trial_errors, trial_labels, trial_betas


def _state_from_trial(ws: Workspace, cfg: MixtureConfig, labels: np.ndarray,
                      betas: np.ndarray, trial_errors: np.ndarray) -> InitState:
    """Mixing fractions and per-cluster refined covariances for one trial."""
    market = ws.market
    pi = np.bincount(labels, minlength=cfg.n_clusters) / ws.n_subs
    cov_params = []
    for b in range(cfg.n_clusters):
        members = labels == b
        idx = np.flatnonzero(members)
        resids = ws.residual_matrices(betas[b])
        per_sub = np.array([np.mean(resids[j] ** 2) for j in idx])
        sigma = moment_sigma_split(market.counts[idx], per_sub)
        eta = None
        if cfg.model.covariance.kind is CovKind.COMPLETE:
            eta = np.zeros((ws.C, cfg.model.covariance.num_variance_basis))
        start = CovarianceParams(sigma=sigma, omega=np.full(ws.C, 0.2),
                                 eta_coeffs=eta)
        refined, _ = _optimize_covariance(ws, resids, start,
                                          weights=members.astype(float))
        cov_params.append(refined)
    return InitState(betas=betas, cov_params=cov_params, pi=pi,
                     trial_errors=trial_errors, labels=labels)


def _ranked_candidates(trial_errors: np.ndarray, trial_labels, trial_betas,
                       k: int):
    """Indices of the best k trials with distinct partitions."""
    order = np.argsort(trial_errors)
    seen = set()
    picked = []
    for g in order:
        if not np.isfinite(trial_errors[g]):
            break
        key = _canonical_partition(trial_labels[g])
        if key in seen:
            continue
        seen.add(key)
        picked.append(int(g))
        if len(picked) == k:
            break
    return picked


def _canonical_partition(labels: np.ndarray) -> tuple:
    """Label-free representation of a partition for duplicate detection."""
    groups = {}
    for j, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(j)
    return tuple(sorted(tuple(g) for g in groups.values()))


def init_clusters(panel: LoadPanel, market: MarketTable, cfg: MixtureConfig,
                  rng: np.random.Generator | None = None) -> InitState:
    """Best-of-G random partitions, each scored by per-cluster unweighted fits.

    Every random partition places more than C substations in every cluster.
    The winning (smallest squared error) trial provides the initial
    coefficients; mixing proportions start at the cluster-size fractions and
    covariance parameters are refined per cluster on the hard members.
    """
    require_identifiable(market, n_clusters=cfg.n_clusters)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    ws = Workspace(panel, market, cfg.model)
    trial_errors, trial_labels, trial_betas = _run_trials(ws, cfg, rng)
    best = int(np.argmin(trial_errors))
    return _state_from_trial(ws, cfg, trial_labels[best], trial_betas[best],
                             trial_errors)


# ---------------------------------------------------------------------------
# Full ECM loop
# ---------------------------------------------------------------------------

def _em_iterations(ws: Workspace, cfg: MixtureConfig, state: MixtureState,
                   max_iter: int):
    """Iterate ECM from ``state`` for at most ``max_iter`` iterations."""
    ll_mat, cov_mats = _loglik_matrix(ws, state)
    post, obs = _posteriors(ll_mat, state.pi)
    trace = [obs]
    converged = False
    for _ in range(max_iter):
        pi = m_step_pi(post)
        betas = _weighted_beta_updates(ws, cov_mats, post, ws.p)
        cov_params = []
        for b in range(cfg.n_clusters):
            resids = ws.residual_matrices(betas[b])
            params, _ = _optimize_covariance(ws, resids, state.cov_params[b],
                                             weights=post[:, b])
            cov_params.append(params)
        state = MixtureState(betas=betas, cov_params=cov_params, pi=pi)
        ll_mat, cov_mats = _loglik_matrix(ws, state)
        post, obs = _posteriors(ll_mat, state.pi)
        trace.append(obs)
        if abs(trace[-1] - trace[-2]) < cfg.xi:
            converged = True
            break
    return state, post, trace, converged


def fit_mixture(panel: LoadPanel, market: MarketTable, cfg: MixtureConfig,
                init: MixtureState | None = None) -> MixtureFitResult:
    """Run ECM until the observed-data log-likelihood change is below xi.

    Without an explicit ``init``, the top ``n_starts`` distinct trial
    partitions are each burned in for a few iterations and the best observed
    likelihood continues to convergence.  Hitting the iteration cap returns
    a flagged (``converged=False``) result rather than raising; a cluster
    losing all responsibility raises :class:`DegenerateClusterError`.
    """
    require_identifiable(market, n_clusters=cfg.n_clusters)
    ws = Workspace(panel, market, cfg.model)

    if init is not None:
        state, post, trace, converged = _em_iterations(ws, cfg, init,
                                                       cfg.max_iter)
    else:
        rng = np.random.default_rng(cfg.seed)
        raw_stats = _substation_stats(ws)
        norm_stats = _noise_normalized_stats(ws, raw_stats)
        trial_errors, trial_labels, trial_betas = _run_trials(ws, cfg, rng,
                                                              norm_stats)
        # polish every trial; clusters may shrink to the identifiability
        # minimum of C members even though random starts use C+1
        optima: dict[tuple, tuple] = {}

        def add_optimum(start_labels, frozen=None):
            labels, betas, score = _polish_partition(
                ws, norm_stats, raw_stats, start_labels, cfg.n_clusters,
                ws.C, frozen=frozen,
            )
            if betas is not None:
                optima.setdefault(_canonical_partition(labels),
                                  (score, labels, betas))

        for g in range(cfg.n_trials):
            if trial_betas[g] is not None:
                add_optimum(trial_labels[g])
        if optima:
            # basin hopping: kick every substation out of the best optimum
            # and re-polish around it; near-ties between basins are settled
            # later by the burned-in observed likelihood
            _, best_labels, _ = min(optima.values(), key=lambda t: t[0])
            for j in range(ws.n_subs):
                for b in range(cfg.n_clusters):
                    if b == best_labels[j]:
                        continue
                    kicked = best_labels.copy()
                    kicked[j] = b
                    if np.min(np.bincount(kicked, minlength=cfg.n_clusters)) \
                            >= ws.C:
                        add_optimum(kicked, frozen=j)
        ranked = sorted(optima.values(), key=lambda t: t[0])
        candidates = [(labels, betas)
                      for _, labels, betas in ranked[:cfg.n_starts]]
        if not candidates:
            picks = _ranked_candidates(trial_errors, trial_labels,
                                       trial_betas, cfg.n_starts)
            candidates = [(trial_labels[g], trial_betas[g]) for g in picks]
        burns = []
        failure: Exception | None = None
        burn_iters = min(cfg.burn_iter, cfg.max_iter)
        for labels, betas in candidates:
            cand = _state_from_trial(ws, cfg, labels, betas, trial_errors)
            try:
                burns.append(_em_iterations(ws, cfg, cand, burn_iters))
            except (DegenerateClusterError, IdentifiabilityError) as exc:
                failure = exc  # a collapsed candidate; other starts may be fine
        if not burns:
            raise failure if failure is not None else DegenerateClusterError(
                "every initialization candidate collapsed"
            )
        best = int(np.argmax([b[2][-1] for b in burns]))
        state, post, trace, converged = burns[best]
        if not converged and cfg.max_iter > burn_iters:
            state, post, more, converged = _em_iterations(
                ws, cfg, state, cfg.max_iter - burn_iters
            )
            trace = trace + more[1:]

    assignments = np.argmax(post, axis=1)  # ties resolve to the lowest index
    return MixtureFitResult(
        pi=state.pi,
        responsibilities=post,
        betas=state.betas,
        cov_params=state.cov_params,
        loglik=trace[-1],
        trace=trace,
        assignments=assignments,
        converged=converged,
        n_iter=len(trace) - 1,
        config=cfg,
        market=market,
        n_days=panel.n_days,
        times=panel.times.copy(),
        horizon=panel.horizon,
    )
