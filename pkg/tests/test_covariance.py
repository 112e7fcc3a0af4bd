"""Tests for covariance functionals and substation covariance assembly."""

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aggload.basis import eval_basis, make_uniform_knots
from aggload.covariance import (
    CovKind,
    CovMatrix,
    CovarianceParams,
    CovarianceSpec,
    chol_solve,
    correlation,
    correlation_matrix,
    customer_covariance,
    logdet,
    n_free_params,
    pack_params,
    substation_covariance,
    unpack_params,
    variance_functional,
)
from aggload.errors import FactorizationError


def gaussian_elimination_solve(a, b):
    """Naive dense solver with partial pivoting, used only as an oracle."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = a.shape[0]
    for k in range(n):
        piv = k + np.argmax(np.abs(a[k:, k]))
        a[[k, piv]] = a[[piv, k]]
        b[[k, piv]] = b[[piv, k]]
        for i in range(k + 1, n):
            m = a[i, k] / a[k, k]
            a[i, k:] -= m * a[k, k:]
            b[i] -= m * b[k]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - a[i, i + 1:] @ x[i + 1:]) / a[i, i]
    return x


def zero_sum_coeffs(rng, n_types, kp):
    raw = rng.normal(size=(n_types, kp))
    return raw - raw.mean(axis=1, keepdims=True)


class TestCorrelation:
    def test_zero_lag_is_one(self):
        assert correlation(3.5, 3.5, omega=0.4, horizon=24.0) == 1.0

    def test_unit_horizon_lag(self):
        # -2 * (1/2) * 1 = -1
        assert correlation(0.0, 24.0, omega=2.0, horizon=24.0) == pytest.approx(
            np.exp(-1.0), rel=1e-14
        )

    def test_small_omega_against_high_precision_oracle(self):
        # half-horizon lag at a decay of 0.03
        expected = float(mpmath.e ** (-mpmath.mpf(2) / mpmath.mpf("0.03") / 2))
        got = correlation(0.0, 12.0, omega=0.03, horizon=24.0)
        assert got == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("omega,horizon", [(0.0, 24.0), (-1.0, 24.0), (0.5, 0.0)])
    def test_invalid_parameters(self, omega, horizon):
        with pytest.raises(ValueError):
            correlation(0.0, 1.0, omega, horizon)

    def test_stationarity_on_uniform_grid(self):
        times = np.arange(0.0, 24.0, 0.5)
        rho = correlation_matrix(times, omega=0.3, horizon=24.0)
        # every pair with the same lag has the same correlation
        for lag in (1, 5, 17):
            diag = np.diagonal(rho, offset=lag)
            assert np.ptp(diag) < 1e-15


class TestVarianceFunctional:
    def complete_spec(self, kp=4):
        return CovarianceSpec(
            kind=CovKind.COMPLETE,
            variance_knots=make_uniform_knots(0.0, 24.0, kp, 3),
        )

    def test_complete_with_zero_coeffs_reduces_to_homogeneous(self):
        spec = self.complete_spec()
        params = CovarianceParams(
            sigma=[1.3, 2.1], omega=[0.1, 0.5], eta_coeffs=np.zeros((2, 4))
        )
        ts = np.linspace(0, 24, 13)
        np.testing.assert_allclose(
            variance_functional(spec, params, 0, ts), np.full(13, 1.3)
        )
        np.testing.assert_allclose(
            variance_functional(spec, params, 1, ts), np.full(13, 2.1)
        )

    def test_homogeneous_reported_scale(self):
        spec = CovarianceSpec(kind=CovKind.HOMOGENEOUS)
        params = CovarianceParams(sigma=[0.6608, 5.6094], omega=[0.0404, 0.8205])
        for t in (0.0, 7.7, 23.9):
            assert variance_functional(spec, params, 0, t) == 0.6608

    def test_complete_matches_exp_of_spline_oracle(self):
        rng = np.random.default_rng(11)
        spec = self.complete_spec(kp=4)
        eta = zero_sum_coeffs(rng, 2, 4)
        params = CovarianceParams(sigma=[0.8, 3.0], omega=[0.2, 0.2], eta_coeffs=eta)
        for t in rng.uniform(0, 24, size=6):
            phi = eval_basis(spec.variance_knots, t)
            for c in range(2):
                expected = params.sigma[c] * np.exp(phi @ eta[c])
                assert variance_functional(spec, params, c, t) == pytest.approx(
                    expected, rel=1e-13
                )

    def test_zero_sum_enforced(self):
        with pytest.raises(ValueError):
            CovarianceParams(
                sigma=[1.0], omega=[0.3], eta_coeffs=np.array([[0.5, 0.5, 0.5, 0.5]])
            )


class TestCustomerCovariance:
    def test_zero_lag_is_eta_squared(self):
        spec = CovarianceSpec(kind=CovKind.HOMOGENEOUS)
        params = CovarianceParams(sigma=[1.7], omega=[0.4])
        assert customer_covariance(spec, params, 0, 5.0, 5.0, 24.0) == pytest.approx(
            1.7**2
        )

    def test_homogeneous_product_form(self):
        spec = CovarianceSpec(kind=CovKind.HOMOGENEOUS)
        params = CovarianceParams(sigma=[2.0], omega=[2.0])
        got = customer_covariance(spec, params, 0, 0.0, 24.0, 24.0)
        assert got == pytest.approx(4.0 * np.exp(-1.0), rel=1e-13)

    @given(
        st.floats(min_value=0.0, max_value=24.0),
        st.floats(min_value=0.0, max_value=24.0),
    )
    @settings(max_examples=40, deadline=None)
    def test_symmetry(self, s, t):
        spec = CovarianceSpec(
            kind=CovKind.COMPLETE,
            variance_knots=make_uniform_knots(0.0, 24.0, 4, 3),
        )
        eta = np.array([[0.4, -0.1, -0.5, 0.2]])
        params = CovarianceParams(sigma=[1.2], omega=[0.3], eta_coeffs=eta)
        a = customer_covariance(spec, params, 0, s, t, 24.0)
        b = customer_covariance(spec, params, 0, t, s, 24.0)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-15)


class TestSubstationCovariance:
    def times(self, n=10):
        return np.linspace(0.0, 23.5, n)

    def test_single_customer_matches_pointwise_kernel(self):
        spec = CovarianceSpec(kind=CovKind.HOMOGENEOUS)
        params = CovarianceParams(sigma=[1.4], omega=[0.25])
        ts = self.times(6)
        mat = substation_covariance(np.array([1]), spec, params, ts, 24.0)
        for a, s in enumerate(ts):
            for b, t in enumerate(ts):
                assert mat.values[a, b] == pytest.approx(
                    customer_covariance(spec, params, 0, s, t, 24.0), rel=1e-12
                )

    def test_zero_market_removes_type(self):
        spec = CovarianceSpec(kind=CovKind.HOMOGENEOUS)
        params = CovarianceParams(sigma=[1.4, 9.9], omega=[0.25, 0.7])
        ts = self.times(8)
        two = substation_covariance(np.array([2, 0]), spec, params, ts, 24.0)
        one = substation_covariance(
            np.array([1]),
            CovarianceSpec(kind=CovKind.HOMOGENEOUS),
            CovarianceParams(sigma=[1.4], omega=[0.25]),
            ts,
            24.0,
        )
        np.testing.assert_allclose(two.values, 2.0 * one.values, rtol=1e-13)

    def test_matches_dense_assembly_oracle(self):
        # substation with 69 customers split 70/30, first-cluster parameters
        m = np.array([48, 21])
        sigma = np.array([1.54, 1.53])
        omega = np.array([0.16, 0.03])
        spec = CovarianceSpec(kind=CovKind.HOMOGENEOUS)
        params = CovarianceParams(sigma=sigma, omega=omega)
        ts = self.times(12)
        mat = substation_covariance(m, spec, params, ts, 24.0)
        expected = np.zeros((12, 12))
        for c in range(2):
            for a in range(12):
                for b in range(12):
                    rho = np.exp(-2.0 * abs(ts[a] - ts[b]) / (omega[c] * 24.0))
                    expected[a, b] += m[c] * sigma[c] * rho * sigma[c]
        np.testing.assert_allclose(mat.values, expected, rtol=1e-12)

    def test_psd_on_random_parameter_draws(self):
        rng = np.random.default_rng(3)
        kp = 5
        spec = CovarianceSpec(
            kind=CovKind.COMPLETE,
            variance_knots=make_uniform_knots(0.0, 24.0, kp, 3),
        )
        ts = np.arange(0.0, 24.0, 1.0)
        for _ in range(25):
            params = CovarianceParams(
                sigma=rng.uniform(0.1, 6.0, size=2),
                omega=rng.uniform(0.02, 1.5, size=2),
                eta_coeffs=zero_sum_coeffs(rng, 2, kp),
            )
            m = rng.integers(1, 300, size=2)
            mat = substation_covariance(m, spec, params, ts, 24.0)
            assert np.all(np.diag(mat.chol) > 0)

    def test_rejects_empty_market(self):
        spec = CovarianceSpec(kind=CovKind.HOMOGENEOUS)
        params = CovarianceParams(sigma=[1.0, 1.0], omega=[0.3, 0.3])
        with pytest.raises(ValueError):
            substation_covariance(np.array([0, 0]), spec, params, self.times(), 24.0)


class TestCovMatrix:
    def test_identity_solve_and_logdet(self):
        mat = CovMatrix(np.eye(5))
        rhs = np.arange(5.0)
        np.testing.assert_allclose(chol_solve(mat, rhs), rhs)
        assert logdet(mat) == pytest.approx(0.0, abs=1e-14)

    def test_diagonal_solve_and_logdet(self):
        d = np.array([0.5, 2.0, 4.0])
        mat = CovMatrix(np.diag(d))
        rhs = np.array([1.0, 1.0, 1.0])
        np.testing.assert_allclose(chol_solve(mat, rhs), rhs / d)
        assert logdet(mat) == pytest.approx(np.sum(np.log(d)), rel=1e-14)

    def test_random_spd_against_elimination_oracle(self):
        rng = np.random.default_rng(19)
        a = rng.normal(size=(8, 8))
        spd = a @ a.T + 8 * np.eye(8)
        rhs = rng.normal(size=8)
        mat = CovMatrix(spd)
        got = chol_solve(mat, rhs)
        expected = gaussian_elimination_solve(spd, rhs)
        np.testing.assert_allclose(got, expected, rtol=1e-8)
        residual = spd @ got - rhs
        assert np.linalg.norm(residual) <= 1e-8 * np.linalg.norm(rhs)

    def test_matrix_rhs(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(6, 6))
        spd = a @ a.T + 6 * np.eye(6)
        rhs = rng.normal(size=(6, 3))
        mat = CovMatrix(spd)
        np.testing.assert_allclose(spd @ mat.solve(rhs), rhs, atol=1e-10)

    def test_dimension_mismatch(self):
        mat = CovMatrix(np.eye(4))
        with pytest.raises(ValueError):
            mat.solve(np.ones(5))

    def test_asymmetric_rejected(self):
        bad = np.eye(3)
        bad[0, 1] = 0.5
        with pytest.raises(ValueError):
            CovMatrix(bad)

    def test_factorization_failure_reports_condition(self):
        # negative-definite block defeats every jitter level
        bad = np.diag([1.0, 1.0, -5.0])
        with pytest.raises(FactorizationError):
            CovMatrix(bad)


class TestNesting:
    def test_complete_with_zero_eta_equals_homogeneous(self):
        kp = 4
        complete = CovarianceSpec(
            kind=CovKind.COMPLETE,
            variance_knots=make_uniform_knots(0.0, 24.0, kp, 3),
        )
        homog = CovarianceSpec(kind=CovKind.HOMOGENEOUS)
        cp = CovarianceParams(
            sigma=[0.7, 2.2], omega=[0.05, 0.6], eta_coeffs=np.zeros((2, kp))
        )
        hp = CovarianceParams(sigma=[0.7, 2.2], omega=[0.05, 0.6])
        ts = np.linspace(0, 23.5, 9)
        m = np.array([10, 5])
        a = substation_covariance(m, complete, cp, ts, 24.0)
        b = substation_covariance(m, homog, hp, ts, 24.0)
        np.testing.assert_allclose(a.values, b.values, rtol=1e-13)

    def test_homogeneous_with_equal_sigma_equals_uniform(self):
        homog = CovarianceSpec(kind=CovKind.HOMOGENEOUS)
        unif = CovarianceSpec(kind=CovKind.HOMOGENEOUS_UNIFORM)
        hp = CovarianceParams(sigma=[1.1, 1.1], omega=[0.05, 0.6])
        up = CovarianceParams(sigma=[1.1, 1.1], omega=[0.05, 0.6])
        ts = np.linspace(0, 23.5, 9)
        m = np.array([3, 4])
        a = substation_covariance(m, homog, hp, ts, 24.0)
        b = substation_covariance(m, unif, up, ts, 24.0)
        np.testing.assert_allclose(a.values, b.values, rtol=1e-14)


class TestPacking:
    @pytest.mark.parametrize(
        "kind,kp",
        [
            (CovKind.HOMOGENEOUS_UNIFORM, None),
            (CovKind.HOMOGENEOUS, None),
            (CovKind.COMPLETE, 5),
        ],
    )
    def test_round_trip(self, kind, kp):
        rng = np.random.default_rng(23)
        knots = make_uniform_knots(0.0, 24.0, kp, 3) if kp else None
        spec = CovarianceSpec(kind=kind, variance_knots=knots)
        n_types = 2
        if kind is CovKind.HOMOGENEOUS_UNIFORM:
            sigma = np.full(2, 1.7)
        else:
            sigma = rng.uniform(0.2, 4.0, size=2)
        params = CovarianceParams(
            sigma=sigma,
            omega=rng.uniform(0.02, 1.0, size=2),
            eta_coeffs=zero_sum_coeffs(rng, 2, kp) if kp else None,
        )
        theta = pack_params(spec, params)
        assert theta.size == n_free_params(spec, n_types)
        back = unpack_params(spec, theta, n_types)
        np.testing.assert_allclose(back.sigma, params.sigma, rtol=1e-12)
        np.testing.assert_allclose(back.omega, params.omega, rtol=1e-12)
        if kp:
            np.testing.assert_allclose(back.eta_coeffs, params.eta_coeffs, atol=1e-12)
            assert np.all(np.abs(back.eta_coeffs.sum(axis=1)) < 1e-12)
