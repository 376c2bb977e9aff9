from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from lamegap.auxiliary_fields import LameConstants
from lamegap.boundary_data import make_family
from lamegap.errors import DomainError
from lamegap.gap_quadrature import (
    closed_form_convex_2d,
    closed_form_convex_3d,
    energy_leading,
    gap_integral,
    moment_integral,
    parity_vanish_check,
    q_leading,
)
from lamegap.geometry import polynomial_profile, power_profile, quadratic_profile

LAME = LameConstants(1.0, 1.0)


def _arctan_oracle(eps, R=1.0):
    return 2 / math.sqrt(eps) * math.atan(R / math.sqrt(eps))


class TestMoments:
    def test_two_dimensional_arctan(self):
        res = moment_integral(power_profile(2, 2, 1e-4), 0, tol_rel=1e-12)
        np.testing.assert_allclose(res.value, _arctan_oracle(1e-4), rtol=1e-10)
        np.testing.assert_allclose(res.value, 312.1593, atol=1e-4)

    def test_three_dimensional_log(self):
        eps = 1e-6
        res = moment_integral(power_profile(3, 2, eps), 0, tol_rel=1e-12)
        np.testing.assert_allclose(res.value, math.pi * math.log((1 + eps) / eps), rtol=1e-9)
        np.testing.assert_allclose(res.value, 43.40, atol=5e-3)

    @pytest.mark.parametrize("d", [2, 3])
    def test_large_eps_volume(self, d):
        res = moment_integral(power_profile(d, 2, 1.0, R=0.5), 0)
        volume = 1.0 if d == 2 else math.pi * 0.25
        ratio = res.value / volume
        assert 0.8 <= ratio <= 1.2

    @settings(max_examples=25, deadline=None)
    @given(eps=st.floats(1e-9, 1e-2), m=st.sampled_from([2, 3, 4, 6]), k=st.integers(0, 3),
           kappa=st.floats(0.5, 4.0))
    def test_against_scipy_oracle(self, eps, m, k, kappa):
        res = moment_integral(power_profile(2, m, eps, coef=kappa), k, tol_abs=1e-12, tol_rel=1e-10)
        s = eps ** (1 / m)
        f = lambda x: x**k / (eps + kappa * x**m)
        ref = 2 * sum(integrate.quad(f, a, b, epsabs=0, epsrel=1e-13, limit=200)[0]
                      for a, b in [(0, min(s, 1.0)), (min(s, 1.0), 1.0)])
        np.testing.assert_allclose(res.value, ref, rtol=1e-8)

    @settings(max_examples=15, deadline=None)
    @given(eps=st.floats(1e-8, 1e-2), kappa=st.floats(0.5, 4.0))
    def test_three_dimensional_radial_oracle(self, eps, kappa):
        res = moment_integral(power_profile(3, 2, eps, coef=kappa), 0, tol_abs=1e-12, tol_rel=1e-10)
        ref = math.pi / kappa * math.log((eps + kappa) / eps)
        np.testing.assert_allclose(res.value, ref, rtol=1e-8)

    def test_error_estimate_is_honest(self):
        p = power_profile(2, 4, 1e-6)
        coarse = moment_integral(p, 0, tol_rel=1e-6)
        fine = moment_integral(p, 0, tol_rel=1e-12, extra_depth=1)
        assert coarse.abs_error_estimate >= 0
        assert abs(fine.value - coarse.value) <= 2 * max(coarse.abs_error_estimate, 1e-14 * fine.value)

    def test_axis_permutation(self):
        a = moment_integral(quadratic_profile([1.0, 3.0], 1e-4), 2).value
        b = moment_integral(quadratic_profile([3.0, 1.0], 1e-4), 2).value
        np.testing.assert_allclose(a, b, rtol=1e-10)

    def test_radius_limit(self):
        with pytest.raises(DomainError):
            moment_integral(power_profile(2, 2, 1e-3, R=0.5), 0, R=0.8)

    def test_negative_order(self):
        with pytest.raises(DomainError):
            moment_integral(power_profile(2, 2, 1e-3), -1)

    def test_high_dimension_radial(self):
        eps = 1e-3
        res = moment_integral(power_profile(5, 2, eps), 0)
        area = 4 * math.pi**2 / 2  # surface area of the unit 3-sphere
        ref = area * integrate.quad(lambda r: r**3 / (eps + r**2), 0, 1, epsrel=1e-13)[0]
        np.testing.assert_allclose(res.value, ref, rtol=1e-8)

    def test_log_regime_fit(self):
        eps = np.geomspace(1e-8, 1e-4, 9)
        vals = np.array([moment_integral(power_profile(2, 2, e), 1).value for e in eps])
        A = np.column_stack([np.ones_like(eps), np.abs(np.log(eps))])
        coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
        resid = vals - A @ coef
        r2 = 1 - resid @ resid / np.sum((vals - vals.mean()) ** 2)
        assert r2 > 0.999


class TestClosedForms:
    def test_two_dimensional(self):
        np.testing.assert_allclose(closed_form_convex_2d(2.0, 1.0, 1e-4), 100 * math.pi - 2, rtol=1e-14)
        assert abs(closed_form_convex_2d(2.0, 1.0, 1e-4) - _arctan_oracle(1e-4)) < 1e-2
        assert abs(closed_form_convex_2d(2.0, 1.0, 1e-8) - _arctan_oracle(1e-8)) < 1e-4

    def test_two_dimensional_homogeneity(self):
        f = lambda e: closed_form_convex_2d(2.0, 1.0, e) + 2.0
        np.testing.assert_allclose(f(1e-6 / 4), 2 * f(1e-6), rtol=1e-14)

    @pytest.mark.parametrize("eps", [1e-3, 1e-4, 1e-5, 1e-6])
    def test_two_dimensional_vs_quadrature(self, eps):
        q = moment_integral(quadratic_profile([2.0], eps), 0, tol_rel=1e-12).value
        assert abs(q - closed_form_convex_2d(2.0, 1.0, eps)) / eps <= 2.0

    def test_three_dimensional_round(self):
        eps = 1e-6
        np.testing.assert_allclose(closed_form_convex_3d(2.0, 2.0, 1.0, eps), math.pi * abs(math.log(eps)),
                                   rtol=1e-14)
        np.testing.assert_allclose(closed_form_convex_3d(2.0, 2.0, math.e, eps),
                                   math.pi * abs(math.log(eps)) + 2 * math.pi, rtol=1e-14)

    def test_three_dimensional_anisotropic(self):
        eps = 1e-6
        closed = closed_form_convex_3d(8.0, 2.0, 1.0, eps)
        quad = moment_integral(quadratic_profile([8.0, 2.0], eps), 0, tol_rel=1e-10).value
        np.testing.assert_allclose(closed, quad, rtol=1e-2)

    def test_invalid(self):
        with pytest.raises(DomainError):
            closed_form_convex_2d(0.0, 1.0, 1e-3)


class TestEnergyAndFlux:
    def test_translation_energy(self):
        res = energy_leading(1, power_profile(2, 2, 1e-4), LAME)
        np.testing.assert_allclose(res.value, _arctan_oracle(1e-4), rtol=1e-8)

    def test_rotation_energy(self):
        eps = 1e-4
        res = energy_leading(3, power_profile(2, 2, eps), LAME)
        ref = 3 * (2 - 2 * math.sqrt(eps) * math.atan(1 / math.sqrt(eps)))
        np.testing.assert_allclose(res.value, ref, rtol=1e-8)
        np.testing.assert_allclose(res.value, 5.906, atol=2e-3)

    def test_energy_scaling(self):
        for eps in (1e-6, 1e-8):
            a = energy_leading(1, power_profile(2, 2, eps), LAME).value
            b = energy_leading(1, power_profile(2, 2, 4 * eps, coef=4.0), LAME).value
            assert 0.24 <= b / a <= 0.26

    def test_odd_data_vanishes(self):
        phi = make_family("E2", 1.0, 1, 2)
        assert abs(q_leading(1, phi, power_profile(2, 2, 1e-4), LAME).value) < 1e-14

    def test_tangential_data_vanishes_normal_flux(self):
        phi = make_family("E3", 1.0, 1, 2)
        assert abs(q_leading(2, phi, power_profile(2, 2, 1e-4), LAME).value) < 1e-14

    def test_e1_flux(self):
        eps = 1e-4
        phi = make_family("E1", 1.0, 2, 2)
        res = q_leading(1, phi, power_profile(2, 2, eps), LAME)
        ref = 2 - 2 * math.sqrt(eps) * math.atan(1 / math.sqrt(eps))
        np.testing.assert_allclose(abs(res.value), ref, rtol=1e-8)
        np.testing.assert_allclose(abs(res.value), 1.9686, atol=5e-4)

    def test_rotation_flux_odd(self):
        phi = make_family("E2", 1.0, 1, 2)
        res = q_leading(3, phi, power_profile(2, 2, 1e-4), LAME)
        assert abs(res.value) > 0.1

    def test_alpha_out_of_range(self):
        with pytest.raises(DomainError):
            q_leading(5, make_family("E1", 1.0, 2, 2), power_profile(2, 2, 1e-4), LAME)

    def test_linearity_in_data(self):
        p = power_profile(2, 2, 1e-4)
        phi = make_family("E1", 1.0, 2, 2)
        a = q_leading(2, phi, p, LAME).value
        b = q_leading(2, phi.scaled(3.0), p, LAME).value
        np.testing.assert_allclose(b, 3 * a, rtol=1e-12)


class TestParityCheck:
    def setup_method(self):
        self.profile = power_profile(3, 2, 1e-4)

    def test_odd_linear(self):
        chk = parity_vanish_check(lambda p: p[:, 0], self.profile, 0)
        assert chk.passed and chk.weight_is_odd

    def test_odd_product(self):
        chk = parity_vanish_check(lambda p: p[:, 0] * p[:, 1], self.profile, 0)
        assert chk.passed and chk.weight_is_odd

    def test_even_fails(self):
        chk = parity_vanish_check(lambda p: p[:, 0] ** 2, self.profile, 0)
        assert not chk.passed and not chk.weight_is_odd

    def test_gap_integral_of_constant_weight(self):
        p = polynomial_profile(2, 2, 1.0, {(2,): 0.0}, R=0.5)
        res = gap_integral(p, lambda x: np.ones(len(x)))
        np.testing.assert_allclose(res.value, 1.0, rtol=1e-12)
