"""Cubic B-spline bases, tensor-product surface bases and interpolating splines.

Bases are clamped (boundary knots repeated ``degree + 1`` times) so they form
a partition of unity on their domain.  Evaluation follows the de Boor
recursion and is vectorised over evaluation points; design matrices for a
fixed grid are cached because the same grid is evaluated once per day across
a whole panel.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_interp_spline

from .errors import DomainError

__all__ = [
    "KnotVector",
    "TensorBasisSpec",
    "make_uniform_knots",
    "eval_basis",
    "basis_matrix",
    "eval_tensor_basis",
    "tensor_matrix",
    "fit_interpolating_spline",
    "InterpolatingCurve",
]


@dataclass(frozen=True)
class KnotVector:
    """A clamped B-spline knot vector.

    ``num_basis`` equals ``(#interior knots) + degree + 1``; the boundary
    knots appear ``degree + 1`` times each.
    """

    degree: int
    knots: tuple[float, ...]

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        k = np.asarray(self.knots, dtype=float)
        if k.size < 2 * (self.degree + 1):
            raise ValueError("knot vector too short for its degree")
        if np.any(np.diff(k) < 0):
            raise ValueError("knots must be non-decreasing")
        d = self.degree
        if not (np.all(k[: d + 1] == k[0]) and np.all(k[-(d + 1):] == k[-1])):
            raise ValueError("boundary knots must be repeated degree+1 times")
        if k[0] >= k[-1]:
            raise ValueError("domain is empty")

    @property
    def num_basis(self) -> int:
        return len(self.knots) - self.degree - 1

    @property
    def domain(self) -> tuple[float, float]:
        return self.knots[0], self.knots[-1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.knots, dtype=float)


@dataclass(frozen=True)
class TensorBasisSpec:
    """Tensor-product basis: a time basis crossed with a covariate basis.

    The flattened index runs with the covariate direction fastest: entry
    ``k * L + l`` is (time function k) x (covariate function l).
    """

    time_basis: KnotVector
    covariate_basis: KnotVector

    def __post_init__(self):
        lo, hi = self.covariate_basis.domain
        if not np.isfinite([lo, hi]).all() or hi <= lo:
            raise ValueError("covariate range must be finite and non-degenerate")

    @property
    def num_basis(self) -> int:
        return self.time_basis.num_basis * self.covariate_basis.num_basis


def make_uniform_knots(domain_lo: float, domain_hi: float, num_basis: int,
                       degree: int = 3) -> KnotVector:
    """Clamped knot vector with equally spaced interior knots.

    Yields exactly ``num_basis`` basis functions on ``[domain_lo, domain_hi]``.
    """
    if num_basis < degree + 1:
        raise ValueError(
            f"num_basis={num_basis} must be at least degree+1={degree + 1}"
        )
    if not domain_hi > domain_lo:
        raise ValueError("domain_hi must exceed domain_lo")
    n_interior = num_basis - degree - 1
    interior = np.linspace(domain_lo, domain_hi, n_interior + 2)[1:-1]
    knots = np.concatenate([
        np.full(degree + 1, float(domain_lo)),
        interior,
        np.full(degree + 1, float(domain_hi)),
    ])
    return KnotVector(degree=degree, knots=tuple(knots.tolist()))


def _design(kv: KnotVector, ts: np.ndarray) -> np.ndarray:
    """De Boor evaluation of all basis functions at each point of ``ts``."""
    lo, hi = kv.domain
    if ts.size and (ts.min() < lo or ts.max() > hi):
        raise DomainError(
            f"evaluation points outside basis domain [{lo}, {hi}]"
        )
    d = kv.degree
    knots = kv.as_array()
    nb = kv.num_basis
    span = np.searchsorted(knots, ts, side="right") - 1
    span = np.clip(span, d, nb - 1)  # closed right endpoint

    n = ts.size
    vals = np.zeros((n, d + 1))
    vals[:, 0] = 1.0
    left = np.zeros((n, d + 1))
    right = np.zeros((n, d + 1))
    for j in range(1, d + 1):
        left[:, j] = ts - knots[span + 1 - j]
        right[:, j] = knots[span + j] - ts
        saved = np.zeros(n)
        for r in range(j):
            temp = vals[:, r] / (right[:, r + 1] + left[:, j - r])
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved

    out = np.zeros((n, nb))
    cols = span[:, None] - d + np.arange(d + 1)[None, :]
    np.put_along_axis(out, cols, vals, axis=1)
    return out


_matrix_cache: dict[tuple, np.ndarray] = {}
_cache_lock = threading.Lock()


def basis_matrix(kv: KnotVector, ts: np.ndarray) -> np.ndarray:
    """Design matrix of shape ``(len(ts), num_basis)``; cached per grid.

    The returned array is read-only so cached results can be shared across
    threads.
    """
    ts = np.ascontiguousarray(ts, dtype=float)
    key = (kv, ts.tobytes())
    cached = _matrix_cache.get(key)
    if cached is not None:
        return cached
    mat = _design(kv, ts)
    mat.setflags(write=False)
    with _cache_lock:
        _matrix_cache.setdefault(key, mat)
    return mat


def eval_basis(kv: KnotVector, t: float) -> np.ndarray:
    """Values of all basis functions at a single point."""
    return _design(kv, np.atleast_1d(float(t)))[0]


def eval_tensor_basis(spec: TensorBasisSpec, t: float, v: float) -> np.ndarray:
    """Flattened tensor-product basis at ``(t, v)``, covariate index fastest."""
    return np.kron(eval_basis(spec.time_basis, t),
                   eval_basis(spec.covariate_basis, v))


def tensor_matrix(spec: TensorBasisSpec, ts: np.ndarray,
                  vs: np.ndarray) -> np.ndarray:
    """Row-wise tensor design: row i is ``eval_tensor_basis(ts[i], vs[i])``."""
    ts = np.asarray(ts, dtype=float)
    vs = np.asarray(vs, dtype=float)
    if ts.shape != vs.shape:
        raise ValueError("time and covariate grids must have the same shape")
    a = _design(spec.time_basis, ts)
    b = _design(spec.covariate_basis, vs)
    n = ts.size
    return np.einsum("nk,nl->nkl", a, b).reshape(n, -1)


@dataclass(frozen=True)
class InterpolatingCurve:
    """Cubic spline through given points, evaluable on their x-range only."""

    x: np.ndarray
    y: np.ndarray
    _spline: object

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.domain
        if t.size and (t.min() < lo or t.max() > hi):
            raise DomainError(
                f"evaluation outside interpolation range [{lo}, {hi}]"
            )
        return self._spline(t)


def fit_interpolating_spline(points) -> InterpolatingCurve:
    """Cubic interpolating spline through ``points`` (pairs of (x, y)).

    Requires at least four points with strictly increasing x.  Used to lift
    coarsely observed covariates (3-hourly temperature) to the model grid.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be a sequence of (x, y) pairs")
    if pts.shape[0] < 4:
        raise ValueError("need at least 4 points for a cubic interpolant")
    x, y = pts[:, 0], pts[:, 1]
    dx = np.diff(x)
    if np.any(dx == 0):
        raise ValueError("duplicate x values in interpolation points")
    if np.any(dx < 0):
        raise ValueError("x values must be strictly increasing")
    spline = make_interp_spline(x, y, k=3)
    return InterpolatingCurve(x=x, y=y, _spline=spline)
