from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lamegap.auxiliary_fields import LameConstants
from lamegap.errors import DomainError, MissingFactorData, SingularSystemError
from lamegap.factor_system import (
    FactorData,
    block_partition,
    c_alpha_asymptotic,
    definiteness_check,
    det_ratio,
    diag_expansion,
    extrapolate_factors,
    f1_matrix,
    f2_matrix,
    fit_geometry_constants,
    free_constants,
    leading_coefficient,
    reassemble,
    richardson_extrapolate,
    substitute_column,
)

LAME = LameConstants(1.0, 1.0)


def _spd(n: int, rng) -> np.ndarray:
    M = rng.normal(size=(n, n))
    return M @ M.T + 0.5 * n * np.eye(n)


class TestBlocks:
    def test_two_dimensional_shapes(self):
        F = np.arange(9.0).reshape(3, 3)
        A, B, C, D = block_partition(F, 2)
        assert A.shape == (2, 2) and D.shape == (1, 1)
        assert D[0, 0] == F[2, 2]

    def test_three_dimensional_shapes(self):
        A, B, C, D = block_partition(np.eye(6), 3)
        assert A.shape == (3, 3) and D.shape == (3, 3)

    @settings(max_examples=20, deadline=None)
    @given(d=st.integers(2, 4), seed=st.integers(0, 10_000))
    def test_round_trip(self, d, seed):
        n = d * (d + 1) // 2
        F = np.random.default_rng(seed).normal(size=(n, n))
        np.testing.assert_array_equal(reassemble(*block_partition(F, d)), F)

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            block_partition(np.eye(4), 2)


class TestSubstitution:
    def test_hand_determinant(self):
        s = substitute_column(np.eye(3), [1.0, 2.0, 3.0], 2)
        np.testing.assert_allclose(s.matrix, [[1, 1, 0], [0, 2, 0], [0, 3, 1]])
        np.testing.assert_allclose(s.det(), 2.0, rtol=1e-14)

    def test_identity_substitution(self):
        F = _spd(3, np.random.default_rng(0))
        s = substitute_column(F, F[:, 0], 1)
        np.testing.assert_allclose(s.det(), np.linalg.det(F), rtol=1e-12)

    def test_zero_column(self):
        assert substitute_column(np.eye(3), np.zeros(3), 3).det() == 0.0

    def test_restore(self):
        F = np.random.default_rng(1).normal(size=(4, 4))
        s = substitute_column(F, np.ones(4), 3)
        np.testing.assert_array_equal(s.restore(), F)

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            substitute_column(np.eye(3), np.ones(3), 4)

    def test_f1_is_bordered_d_block(self):
        rng = np.random.default_rng(2)
        fd = FactorData(2, _spd(3, rng), rng.normal(size=3))
        m = f1_matrix(fd, 1).matrix
        np.testing.assert_allclose(m, [[fd.q[0], fd.a[0, 2]], [fd.q[2], fd.a[2, 2]]])

    def test_f2_is_d_block(self):
        rng = np.random.default_rng(3)
        fd = FactorData(3, _spd(6, rng), rng.normal(size=6))
        m = f2_matrix(fd, 5).matrix
        D = fd.a[3:, 3:].copy()
        D[:, 1] = fd.q[3:]
        np.testing.assert_allclose(m, D)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), c=st.floats(-3, 3))
    def test_determinant_linear_in_load(self, seed, c):
        rng = np.random.default_rng(seed)
        F = _spd(6, rng)
        y, z = rng.normal(size=6), rng.normal(size=6)
        det = lambda v: substitute_column(F, v, 4).det()
        np.testing.assert_allclose(det(c * y + z), c * det(y) + det(z), rtol=1e-9, atol=1e-9 * abs(det(y)))


class TestFreeConstants:
    def test_identity(self):
        q = np.array([1.0, -2.0, 3.0])
        X, diag = free_constants(FactorData(2, np.eye(3), q))
        np.testing.assert_allclose(X, q, rtol=1e-14)
        np.testing.assert_allclose(diag.cramer, q, rtol=1e-14)

    def test_diagonal(self):
        X, _ = free_constants(FactorData(2, np.diag([2.0, 3.0, 4.0]), [2.0, 3.0, 4.0]))
        np.testing.assert_allclose(X, 1.0, rtol=1e-14)

    def test_toy_two_by_two(self):
        a = np.array([[2.0, 1.0], [1.0, 2.0]])
        assert substitute_column(a, [3.0, 3.0], 1).det() == pytest.approx(3.0)
        assert substitute_column(a, [3.0, 3.0], 2).det() == pytest.approx(3.0)
        assert np.linalg.det(a) == pytest.approx(3.0)

    @settings(max_examples=100, deadline=None)
    @given(d=st.integers(1, 3), seed=st.integers(0, 100_000))
    def test_cramer_agrees_with_factorisation(self, d, seed):
        rng = np.random.default_rng(seed)
        n = d * (d + 1) // 2
        fd = FactorData(d, _spd(n, rng), rng.normal(size=n))
        X, diag = free_constants(fd)
        assert diag.relative_gap <= 1e-10
        np.testing.assert_allclose(fd.a @ X, fd.q, rtol=1e-10, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), c=st.floats(0.1, 10.0))
    def test_scale_equivariance(self, seed, c):
        rng = np.random.default_rng(seed)
        fd = FactorData(2, _spd(3, rng), rng.normal(size=3))
        X1, _ = free_constants(fd)
        X2, _ = free_constants(fd.scaled(c))
        np.testing.assert_allclose(X2, c * X1, rtol=1e-12, atol=1e-14)

    def test_indefinite_rejected(self):
        a = np.diag([1.0, -1.0, 1.0])
        with pytest.raises(SingularSystemError):
            free_constants(FactorData(2, a, np.ones(3)))

    def test_singular_rejected(self):
        a = np.diag([1.0, 1.0, 0.0])
        with pytest.raises(SingularSystemError):
            free_constants(FactorData(2, a, np.ones(3)), check_definite=False)

    def test_asymmetric_rejected(self):
        with pytest.raises(DomainError):
            FactorData(2, [[1, 0.5, 0], [0, 1, 0], [0, 0, 1]], np.ones(3))

    def test_wrong_size(self):
        with pytest.raises(DomainError):
            FactorData(2, np.eye(2), np.ones(2))


class TestDefiniteness:
    def test_identity(self):
        res = definiteness_check(np.eye(3))
        assert res.passed and res.lambda_min == pytest.approx(1.0) and res.constant == pytest.approx(1.0)

    def test_indefinite(self):
        res = definiteness_check(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert not res.passed
        assert res.lambda_min == pytest.approx(-1.0)


class TestDiagonalExpansion:
    def test_two_dimensional(self):
        np.testing.assert_allclose(diag_expansion(1, 2, LAME, (2.0,), 1e-4), 100 * math.pi, rtol=1e-14)

    def test_three_dimensional(self):
        val = diag_expansion(3, 3, LAME, (1.0, 1.0), math.exp(-10))
        np.testing.assert_allclose(val, 60 * math.pi, rtol=1e-14)

    def test_constant_shift(self):
        a = diag_expansion(2, 2, LAME, (1.0,), 1e-3, k_star=0.0)
        b = diag_expansion(2, 2, LAME, (1.0,), 1e-3, k_star=2.5)
        assert b - a == pytest.approx(2.5, abs=1e-12)

    def test_rotation_rejected(self):
        with pytest.raises(DomainError):
            diag_expansion(3, 2, LAME, (1.0,), 1e-3)

    def test_dimension_rejected(self):
        with pytest.raises(DomainError):
            leading_coefficient(1, 4, LAME, (1.0, 1.0, 1.0))


class TestGeometryFit:
    def test_exact_recovery(self):
        eps = np.geomspace(1e-6, 1e-3, 6)
        fit = fit_geometry_constants(np.column_stack([eps, 100 * eps**-0.5 + 7]), 2)
        np.testing.assert_allclose([fit.leading_coef, fit.k_star], [100, 7], rtol=1e-10)
        assert fit.residual < 1e-10

    def test_perturbed_recovery(self):
        # a slowly varying eps^(1/24) term is nearly constant, so K absorbs at most its sup
        eps = np.geomspace(1e-8, 1e-4, 6)
        bump = eps ** (1 / 24)
        fit = fit_geometry_constants(np.column_stack([eps, 100 * eps**-0.5 + 7 + bump]), 2)
        assert abs(fit.leading_coef - 100) / 100 <= 0.02
        assert abs(fit.k_star - 7) <= bump.max()

    def test_perturbed_recovery_small_eps(self):
        eps = np.geomspace(1e-12, 1e-8, 6)
        fit = fit_geometry_constants(np.column_stack([eps, 100 * eps**-0.5 + 7 + eps ** (1 / 24)]), 2)
        assert abs(fit.leading_coef - 100) / 100 <= 0.02
        assert abs(fit.k_star - 7) <= 0.5

    def test_three_dimensional(self):
        eps = np.geomspace(1e-6, 1e-2, 5)
        fit = fit_geometry_constants(np.column_stack([eps, 3 * np.abs(np.log(eps)) - 1]), 3)
        np.testing.assert_allclose([fit.leading_coef, fit.k_star], [3, -1], rtol=1e-10, atol=1e-10)

    def test_expected_coefficient(self):
        eps = np.geomspace(1e-6, 1e-3, 4)
        c = leading_coefficient(1, 2, LAME, (1.0,))
        fit = fit_geometry_constants(np.column_stack([eps, c * eps**-0.5]), 2, LAME, (1.0,))
        assert fit.relative_coef_error < 1e-10

    def test_rank_deficient(self):
        with pytest.raises(SingularSystemError):
            fit_geometry_constants([(1e-3, 1.0), (1e-3, 2.0), (1e-3, 3.0)], 2)


class TestAsymptoticConstants:
    def test_two_dimensional_value(self):
        # a* with unit D block and Q chosen so that det F1*^1 / det D* = 1
        a = np.eye(3)
        q = np.array([1.0, 0.0, 0.0])
        X = c_alpha_asymptotic(2, FactorData(2, a, q), (2.0,), LAME, 1e-4, k_star=(0.0, 0.0))
        np.testing.assert_allclose(X[0], 0.01 / math.pi, rtol=1e-14)
        np.testing.assert_allclose(X[0], 3.1831e-3, rtol=1e-4)

    def test_high_dimension_identity(self):
        n = 10
        q = np.zeros(n)
        q[0] = 1.0
        X = c_alpha_asymptotic(4, FactorData(4, np.eye(n), q), None, LAME, 1e-4)
        np.testing.assert_allclose(X, q, atol=1e-15)

    def test_missing(self):
        with pytest.raises(MissingFactorData):
            c_alpha_asymptotic(2, None, (1.0,), LAME, 1e-3, k_star=(0.0, 0.0))
        with pytest.raises(MissingFactorData):
            c_alpha_asymptotic(2, FactorData(2, np.eye(3), np.ones(3)), (1.0,), LAME, 1e-3)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), eps=st.floats(1e-8, 1e-2))
    def test_reduces_to_cramer_for_diagonal_mock(self, seed, eps):
        # with K* = 0 and diagonal translations given by the expansion, Cramer on the full
        # system reproduces the asymptotic formula when translations decouple
        rng = np.random.default_rng(seed)
        D = rng.uniform(1, 3)
        q = rng.normal(size=3)
        tau = (rng.uniform(0.5, 2.0),)
        star = FactorData(2, np.diag([1.0, 1.0, D]), q)
        X = c_alpha_asymptotic(2, star, tau, LAME, eps, k_star=(0.0, 0.0))
        full = np.diag([diag_expansion(1, 2, LAME, tau, eps), diag_expansion(2, 2, LAME, tau, eps), D])
        ref, _ = free_constants(FactorData(2, full, q))
        np.testing.assert_allclose(X, ref, rtol=1e-12)

    def test_det_ratio_kinds(self):
        rng = np.random.default_rng(9)
        fd = FactorData(2, _spd(3, rng), rng.normal(size=3))
        np.testing.assert_allclose(det_ratio(fd, "F3", 2), np.linalg.solve(fd.a, fd.q)[1], rtol=1e-12)
        with pytest.raises(DomainError):
            det_ratio(fd, "F9", 1)


class TestExtrapolation:
    def test_known_power(self):
        eps = np.geomspace(1e-4, 1e-2, 5)
        fit = richardson_extrapolate(eps, 2.0 + 3.0 * eps**0.5, power=0.5)
        np.testing.assert_allclose(fit.limit, 2.0, rtol=1e-12)

    def test_fitted_power(self):
        eps = np.geomspace(1e-4, 1e-1, 8)
        fit = richardson_extrapolate(eps, -1.0 + 0.7 * eps**0.8)
        np.testing.assert_allclose([fit.limit, fit.power], [-1.0, 0.8], rtol=1e-6)

    def test_factor_limit(self):
        eps = np.geomspace(1e-4, 1e-2, 5)
        base = np.array([[1.0, 0.1, 0.2], [0.1, 1.0, 0.3], [0.2, 0.3, 2.0]])
        samples = []
        for e in eps:
            a = base + e * np.ones((3, 3))
            a[0, 0] += e**-0.5
            a[1, 1] += e**-0.5
            samples.append(FactorData(2, a, np.array([1.0, 2.0, 3.0]) + e, eps=e))
        lim = extrapolate_factors(samples, power=1.0)
        np.testing.assert_allclose(lim.a[2, 2], 2.0, rtol=1e-10)
        np.testing.assert_allclose(lim.a[0, 2], 0.2, rtol=1e-10)
        np.testing.assert_allclose(lim.q, [1.0, 2.0, 3.0], rtol=1e-10)
        assert lim.eps is None and lim.provenance == "extrapolated"
