from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lamegap.auxiliary_fields import AuxField, LameConstants
from lamegap.blowup_rates import rho_selectors
from lamegap.boundary_data import custom_data, make_family
from lamegap.errors import CaseNotCovered, DomainError, MissingFactorData
from lamegap.expansion import (
    ExpansionConfig,
    bounds_cylinder,
    bounds_field,
    bounds_flat,
    bounds_segment,
    grad_u_asymptotic,
)
from lamegap.factor_system import FactorData, c_alpha_asymptotic
from lamegap.geometry import disk_profile, power_profile

LAME = LameConstants(1.0, 1.0)
EPS_GRID = np.geomspace(1e-10, 1e-2, 9)


def _starred(q, seed=0) -> FactorData:
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(3, 3))
    return FactorData(2, M @ M.T + 3 * np.eye(3), q)


def _config(phi, eps=1e-3, q=(0.3, -0.2, 0.1), k_star=(0.5, -0.4), profile=None):
    prof = profile or disk_profile(eps)
    return ExpansionConfig(prof, LAME, phi, starred=_starred(np.asarray(q)), k_star=k_star)


class TestGradient:
    def test_zero_data(self):
        phi = custom_data(2, [{}, {}])
        cfg = _config(phi, q=(0.0, 0.0, 0.0))
        res = grad_u_asymptotic(cfg, np.array([0.05, 5e-4 + 1.3e-3]))
        np.testing.assert_allclose(res.gradient, 0.0, atol=0)
        np.testing.assert_allclose(res.coefficients, 0.0, atol=0)

    def test_scaling(self):
        phi = make_family("E1", 1.0, 2, 2).with_cutoff(0.2)
        q = np.array([0.3, -0.2, 0.1])
        base = _config(phi, q=q)
        doubled = _config(phi.scaled(2.0), q=2 * q)
        x = np.array([[0.0, 5e-4], [0.05, 0.0013 + 1e-4]])
        np.testing.assert_allclose(grad_u_asymptotic(doubled, x).gradient,
                                   2 * grad_u_asymptotic(base, x).gradient, rtol=1e-12, atol=1e-15)

    def test_additivity(self):
        p1 = make_family("E1", 1.0, 2, 2)
        p2 = make_family("E1", 0.5, 3, 2)
        q1, q2 = np.array([0.3, -0.2, 0.1]), np.array([0.1, 0.4, -0.3])
        x = np.array([[0.02, 6e-4]])
        a = grad_u_asymptotic(_config(p1, q=q1), x).gradient
        b = grad_u_asymptotic(_config(p2, q=q2), x).gradient
        c = grad_u_asymptotic(_config(p1 + p2, q=q1 + q2), x).gradient
        np.testing.assert_allclose(c, a + b, rtol=1e-12, atol=1e-14)

    def test_coefficients_match_factor_module(self):
        phi = make_family("E1", 1.0, 2, 2)
        cfg = _config(phi)
        res = grad_u_asymptotic(cfg, np.array([0.0, 5e-4]))
        ref = c_alpha_asymptotic(2, cfg.starred, (1.0,), LAME, 1e-3, cfg.k_star)
        np.testing.assert_allclose(res.coefficients, ref, rtol=1e-14)

    def test_dominant_entry_on_segment(self):
        eps = 1e-3
        phi = make_family("E1", 1.0, 2, 2).with_cutoff(0.2)
        cfg = _config(phi, eps)
        res = grad_u_asymptotic(cfg, np.array([0.0, eps / 2]))
        np.testing.assert_allclose(res.gradient[1, 1], res.coefficients[1] / eps, rtol=1e-12)

    def test_uncertainty_is_data_norm(self):
        phi = make_family("E1", 1.0, 2, 2).with_cutoff(0.2)
        cfg = _config(phi)
        res = grad_u_asymptotic(cfg, np.array([0.0, 5e-4]))
        np.testing.assert_allclose(res.uncertainty, phi.c2_norm(cfg.profile.R))

    def test_rotations_subdominant_on_segment(self):
        phi = make_family("E1", 1.0, 2, 2).with_cutoff(0.2)
        ratios = []
        for eps in (1e-2, 1e-3, 1e-4, 1e-5):
            cfg = _config(phi, eps)
            x = np.array([0.0, eps / 2])
            coef = grad_u_asymptotic(cfg, x).coefficients
            trans = sum(coef[a - 1] * AuxField.u_bar(a, cfg.profile, LAME).gradient(x) for a in (1, 2))
            rot = coef[2] * AuxField.u_bar(3, cfg.profile, LAME).gradient(x)
            ratios.append(np.linalg.norm(rot) / np.linalg.norm(trans))
        assert np.all(np.diff(ratios) < 0)

    def test_needs_flat_data_gradient(self):
        cfg = _config(make_family("E3", 1.0, 1, 2))
        with pytest.raises(DomainError):
            grad_u_asymptotic(cfg, np.array([0.0, 5e-4]))

    def test_needs_starred_data(self):
        cfg = ExpansionConfig(disk_profile(1e-3), LAME, make_family("E1", 1.0, 2, 2))
        with pytest.raises(MissingFactorData):
            grad_u_asymptotic(cfg, np.array([0.0, 5e-4]))

    def test_point_outside_gap(self):
        cfg = _config(make_family("E1", 1.0, 2, 2))
        with pytest.raises(DomainError):
            grad_u_asymptotic(cfg, np.array([0.0, 0.5]))


class TestBounds:
    def test_segment_resolved(self):
        cfg = _config(make_family("E1", 1.0, 2, 2))
        lo, up = bounds_segment(cfg)
        assert lo.resolved and up.resolved
        assert np.all(lo.evaluate(EPS_GRID) <= up.evaluate(EPS_GRID))

    def test_segment_power_regime(self):
        prof = power_profile(2, 6, 1e-4)
        cfg = _config(make_family("E1", 1.0, 2, 2), profile=prof)
        lo, up = bounds_segment(cfg)
        assert float(up.exponent) == pytest.approx(-2 / 3)

    def test_cylinder(self):
        prof = power_profile(2, 4, 1e-4)
        cfg = _config(make_family("E3", 1.0, 1, 2), profile=prof)
        lo, up = bounds_cylinder(cfg)
        assert float(up.exponent) == pytest.approx(-0.75)
        assert np.all(lo.evaluate(EPS_GRID) <= up.evaluate(EPS_GRID))

    def test_cylinder_uncovered(self):
        cfg = _config(make_family("E1", 1.0, 2, 2))
        with pytest.raises(CaseNotCovered):
            bounds_cylinder(cfg)

    def test_custom_family_uncovered(self):
        cfg = _config(custom_data(2, [{(2,): 1.0}, {}]))
        with pytest.raises(CaseNotCovered):
            bounds_segment(cfg)

    def test_field_at_origin(self):
        eps = 1e-4
        prof = power_profile(2, 6, eps)
        cfg = _config(make_family("E1", 1.0, 2, 2), profile=prof)
        c = bounds_field(cfg, [0.0])
        ra, _ = rho_selectors("A1", 2, 6, 2, eps)
        np.testing.assert_allclose(c.evaluate(eps), c.prefactor * ra / eps, rtol=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(x=st.floats(-0.2, 0.2))
    def test_field_positive(self, x):
        cfg = _config(make_family("E2", 1.0, 1, 2))
        assert bounds_field(cfg, [x]).evaluate(1e-4) > 0

    def test_flat(self):
        cfg = _config(make_family("E3", 1.0, 1, 2), profile=power_profile(2, 2, 1e-6))
        lo, up, uni = bounds_flat(cfg, 0.25)
        np.testing.assert_allclose(up.evaluate(1e-6), 0.5e6, rtol=1e-12)
        assert uni.side == "two-sided"
