from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lamegap.errors import DomainError, GeometryError
from lamegap.geometry import (
    CallableGraph,
    GapProfile,
    PowerGraph,
    ThinGapRegion,
    ZeroGraph,
    delta,
    disk_profile,
    polynomial_profile,
    power_profile,
    principal_relative_curvatures,
    quadratic_profile,
    validate_conditions,
)


def _square_plus_cube(eps: float, R: float, kappa):
    def fn(p):
        r = np.linalg.norm(p, axis=1)
        return r**2 + r**3

    def grad(p):
        r = np.linalg.norm(p, axis=1)
        return (2 + 3 * r)[:, None] * p

    def hess(p):
        r = np.linalg.norm(p, axis=1)
        return (2 + 6 * r)[:, None, None] * np.ones((len(p), 1, 1))

    h1 = CallableGraph(fn, grad, hess, is_radial=True)
    return GapProfile(d=2, m=2, R=R, eps=eps, h=ZeroGraph(), h1=h1, kappa=kappa)


class TestDelta:
    def test_origin_equals_eps(self):
        p = quadratic_profile([1.0], 1e-4)
        np.testing.assert_allclose(delta(p, [0.0]), 1e-4, rtol=0, atol=1e-18)

    def test_quadratic_substitution(self):
        p = quadratic_profile([1.0], 1e-4)
        np.testing.assert_allclose(delta(p, [0.1]), 5.1e-3, rtol=1e-14)

    def test_quartic_substitution(self):
        p = power_profile(2, 4, 1e-6)
        np.testing.assert_allclose(delta(p, [0.1]), 1.01e-4, rtol=1e-12)

    def test_vectorised_shape(self):
        p = quadratic_profile([1.0, 2.0], 1e-3)
        pts = np.zeros((5, 2))
        assert p.delta(pts).shape == (5,)

    def test_outside_double_ball_raises(self):
        p = quadratic_profile([1.0], 1e-3, R=0.1)
        with pytest.raises(DomainError):
            p.delta([0.3])

    def test_disk_gap_at_origin(self):
        p = disk_profile(1e-3)
        np.testing.assert_allclose(p.delta([0.0]), 1e-3, rtol=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(
        eps=st.floats(1e-8, 1e-1),
        x=st.floats(-0.2, 0.2),
        m=st.sampled_from([2, 3, 4, 6]),
    )
    def test_delta_at_least_eps(self, eps, x, m):
        p = power_profile(2, m, eps, R=0.2)
        assert p.delta([x]) >= eps


class TestCurvatures:
    def test_diagonal_hessian(self):
        p = polynomial_profile(3, 2, 1e-3, {(2, 0): 0.5, (0, 2): 1.0})
        np.testing.assert_allclose(principal_relative_curvatures(p), [1.0, 2.0], rtol=1e-14)

    def test_half_square(self):
        p = polynomial_profile(2, 2, 1e-3, {(2,): 0.5})
        np.testing.assert_allclose(principal_relative_curvatures(p), [1.0], rtol=1e-14)

    def test_reference_disks(self):
        p = disk_profile(1e-3, r1=0.5, r0=1.0)
        np.testing.assert_allclose(principal_relative_curvatures(p), [1.0], rtol=1e-12)

    def test_reference_disks_finite_difference(self):
        p = disk_profile(1e-3, r1=0.5, r0=1.0)
        h = 1e-3
        second = (p.gap([h]) - 2 * p.gap([0.0]) + p.gap([-h])) / h**2
        np.testing.assert_allclose(second, 1.0, rtol=1e-5)

    def test_non_quadratic_rejected(self):
        with pytest.raises(GeometryError):
            principal_relative_curvatures(power_profile(2, 4, 1e-3))

    @settings(max_examples=30, deadline=None)
    @given(t1=st.floats(0.1, 5.0), t2=st.floats(0.1, 5.0), x=st.floats(-0.05, 0.05), y=st.floats(-0.05, 0.05))
    def test_quadratic_taylor_residual_is_cubic(self, t1, t2, x, y):
        p = quadratic_profile([t1, t2], 1e-3, R=0.1)
        quad = 0.5 * (t1 * x**2 + t2 * y**2)
        np.testing.assert_allclose(p.delta([x, y]) - p.eps, quad, rtol=0, atol=1e-15)

    def test_disk_taylor_residual_scales_cubically(self):
        p = disk_profile(1e-3)
        r = np.geomspace(1e-3, 0.1, 12)
        resid = np.abs(p.gap(r[:, None]) - 0.5 * r**2)
        slope = np.polyfit(np.log(r), np.log(resid), 1)[0]
        assert slope >= 3.0 - 0.05


class TestValidateConditions:
    def test_exact_envelope_passes(self):
        p = power_profile(2, 2, 1e-3)
        rep = validate_conditions(p)
        assert rep.passed, rep.failures()

    def test_overclaimed_lower_envelope_fails(self):
        p = GapProfile(d=2, m=2, R=1.0, eps=1e-3, h=ZeroGraph(), h1=PowerGraph(1.0, 2), kappa=(2.0, 2.0))
        rep = validate_conditions(p)
        assert not rep.passed
        assert rep["envelope_lower"].passed is False

    def test_square_plus_cube_passes_on_small_ball(self):
        p = _square_plus_cube(1e-3, 0.1, (1.0, 1.1))
        rep = validate_conditions(p, radius=0.1)
        assert rep["envelope_upper"].passed
        assert rep["envelope_lower"].passed

    def test_square_plus_cube_fails_when_ball_too_large(self):
        p = _square_plus_cube(1e-3, 0.2, (1.0, 1.1))
        rep = validate_conditions(p, radius=0.2)
        assert not rep["envelope_upper"].passed

    def test_missing_constants_are_unchecked(self):
        p = polynomial_profile(2, 2, 1e-3, {(2,): 1.0})
        rep = validate_conditions(p)
        assert rep["envelope_lower"].checked is False
        assert rep.passed

    def test_disks_pass(self):
        rep = validate_conditions(disk_profile(1e-2))
        assert rep.passed, rep.failures()

    def test_three_dimensional_quadratic(self):
        rep = validate_conditions(quadratic_profile([1.0, 2.0], 1e-3))
        assert rep.passed, rep.failures()

    def test_normalization_failure(self):
        p = polynomial_profile(2, 2, 1e-3, {(2,): 1.0, (1,): 0.1})
        rep = validate_conditions(p)
        assert not rep["normalization"].passed


class TestProfileConstruction:
    def test_bad_order(self):
        with pytest.raises(GeometryError):
            power_profile(2, 1, 1e-3)

    def test_bad_eps(self):
        with pytest.raises(GeometryError):
            power_profile(2, 2, 0.0)

    def test_disk_radius_order(self):
        with pytest.raises(GeometryError):
            disk_profile(1e-3, r1=1.0, r0=0.5)

    def test_disk_cutoff_too_large(self):
        with pytest.raises(GeometryError):
            disk_profile(1e-3, r1=0.5, r0=1.0, R=0.3)

    def test_with_eps(self):
        p = power_profile(3, 2, 1e-3)
        q = p.with_eps(1e-5)
        assert q.eps == 1e-5 and q.m == p.m

    def test_top_and_bottom(self):
        p = quadratic_profile([2.0], 1e-2)
        np.testing.assert_allclose(p.bottom([0.1]), [0.1, 0.0])
        np.testing.assert_allclose(p.top([0.1]), [0.1, 1e-2 + 0.01])


class TestThinGapRegion:
    def test_unit_normals(self):
        reg = ThinGapRegion(disk_profile(1e-3), 0.2)
        xs = np.linspace(-0.2, 0.2, 41)[:, None]
        np.testing.assert_allclose(np.linalg.norm(reg.normal_top(xs), axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(reg.normal_bottom(xs), axis=1), 1.0, atol=1e-12)

    def test_normals_orthogonal_to_tangent(self):
        p = disk_profile(1e-3)
        reg = ThinGapRegion(p, 0.2)
        xs = np.linspace(-0.2, 0.2, 41)[:, None]
        tan_top = np.column_stack([np.ones(41), p.h1.grad(xs)[:, 0]])
        tan_bot = np.column_stack([np.ones(41), p.h.grad(xs)[:, 0]])
        np.testing.assert_allclose(np.einsum("ni,ni->n", reg.normal_top(xs), tan_top), 0.0, atol=1e-12)
        np.testing.assert_allclose(np.einsum("ni,ni->n", reg.normal_bottom(xs), tan_bot), 0.0, atol=1e-12)

    def test_normal_signs(self):
        reg = ThinGapRegion(disk_profile(1e-3), 0.2)
        assert reg.normal_top([0.1])[-1] > 0
        assert reg.normal_bottom([0.1])[-1] < 0

    def test_contains(self):
        p = quadratic_profile([2.0], 1e-2)
        reg = ThinGapRegion(p, 0.5)
        inside = reg.contains([[0.0, 5e-3], [0.0, 2e-2], [0.6, 0.1]])
        np.testing.assert_array_equal(inside, [True, False, False])
