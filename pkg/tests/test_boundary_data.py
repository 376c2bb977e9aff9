from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lamegap.boundary_data import (
    basis_size,
    classify_parity,
    constant_data,
    custom_data,
    make_family,
    rigid_basis,
    smooth_cutoff,
)
from lamegap.errors import DomainError


class TestRigidBasis:
    def test_two_dimensional_rotation(self):
        psi = rigid_basis(2, 3)
        np.testing.assert_allclose(psi([0.3, 0.7]), [0.7, -0.3])

    def test_three_dimensional_translation(self):
        np.testing.assert_allclose(rigid_basis(3, 2)([0.1, 0.2, 0.3]), [0.0, 1.0, 0.0])

    def test_three_dimensional_inplane_rotation(self):
        np.testing.assert_allclose(rigid_basis(3, 6)([0.1, 0.2, 0.3]), [0.2, -0.1, 0.0])

    def test_three_dimensional_ordering(self):
        x = np.array([0.1, 0.2, 0.3])
        np.testing.assert_allclose(rigid_basis(3, 4)(x), [0.3, 0.0, -0.1])
        np.testing.assert_allclose(rigid_basis(3, 5)(x), [0.0, 0.3, -0.2])

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            rigid_basis(2, 4)

    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_basis_size(self, d):
        assert basis_size(d) == d * (d + 1) // 2

    @settings(max_examples=40, deadline=None)
    @given(d=st.integers(2, 4), data=st.data())
    def test_gradient_antisymmetric_and_constant(self, d, data):
        alpha = data.draw(st.integers(1, basis_size(d)))
        psi = rigid_basis(d, alpha)
        g = psi.gradient()
        np.testing.assert_allclose(g + g.T, 0.0, atol=0)
        x = np.array(data.draw(st.lists(st.floats(-1, 1), min_size=d, max_size=d)))
        y = np.array(data.draw(st.lists(st.floats(-1, 1), min_size=d, max_size=d)))
        np.testing.assert_allclose(psi(x) - psi(y), g @ (x - y), atol=1e-14)


class TestFamilies:
    def test_e1(self):
        phi = make_family("E1", 1.0, 2, 2)
        np.testing.assert_allclose(phi.values([0.3]), [-0.09, -0.09], rtol=1e-14)

    def test_e2(self):
        phi = make_family("E2", 2.0, 1, 3)
        np.testing.assert_allclose(phi.values([0.3, -0.4]), [0.0, 0.0, 0.6], rtol=1e-14)

    def test_e3(self):
        phi = make_family("E3", 1.0, 3, 2)
        np.testing.assert_allclose(phi.values([-0.5]), [-0.125, 0.0], rtol=1e-14)

    @pytest.mark.parametrize("tag,k", [("E1", 1), ("E2", 2), ("E3", 0)])
    def test_invalid_order(self, tag, k):
        with pytest.raises(DomainError):
            make_family(tag, 1.0, k, 2)

    def test_unknown_tag(self):
        with pytest.raises(DomainError):
            make_family("E4", 1.0, 2, 2)

    @pytest.mark.parametrize("tag,k,d", [("E1", 2, 2), ("E1", 3, 3), ("E2", 1, 2), ("E2", 3, 3), ("E3", 1, 2),
                                         ("E3", 4, 3)])
    def test_growth_bound(self, tag, k, d):
        assert make_family(tag, 1.5, k, d).growth_margin(0.5) >= 0

    def test_growth_attained_on_axis(self):
        phi = make_family("E2", 1.5, 3, 2)
        np.testing.assert_allclose(np.abs(phi.values([0.4])).max(), 1.5 * 0.4**3, rtol=1e-14)

    def test_growth_attained_radially_for_e1(self):
        phi = make_family("E1", 2.0, 2, 3)
        x = np.array([0.3, 0.4])
        np.testing.assert_allclose(np.abs(phi.values(x)), 2.0 * 0.25, rtol=1e-14)

    @pytest.mark.parametrize("tag,k", [("E1", 2), ("E2", 1), ("E3", 3)])
    def test_normalized(self, tag, k):
        assert make_family(tag, 1.0, k, 2).is_normalized()

    def test_trace_gradient_matches_differences(self):
        phi = make_family("E1", 1.0, 3, 3).with_cutoff(0.4)
        x = np.array([0.11, -0.07])
        val, grad = phi.trace(x)
        h = 1e-6
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd = (phi.values(x + e) - phi.values(x - e)) / (2 * h)
            np.testing.assert_allclose(grad[:, j], fd, rtol=1e-6, atol=1e-10)

    def test_cutoff_hessian_matches_differences(self):
        phi = make_family("E1", 1.0, 2, 2).with_cutoff(0.3)
        x = np.array([0.2])
        hess = phi.trace_hessian(x)
        h = 1e-5
        fd = (phi.trace(x + h)[1] - phi.trace(x - h)[1]) / (2 * h)
        np.testing.assert_allclose(hess[:, :, 0], fd, rtol=1e-5, atol=1e-8)

    def test_cutoff_support(self):
        phi = make_family("E1", 1.0, 2, 2).with_cutoff(0.2)
        np.testing.assert_allclose(phi.values([0.25]), 0.0, atol=0)
        np.testing.assert_allclose(phi.values([0.05]), [-0.0025, -0.0025], rtol=1e-14)

    def test_smooth_cutoff_profile(self):
        chi, _, _ = smooth_cutoff(np.array([0.0, 0.5, 1.0, 2.0]), 1.0)
        np.testing.assert_allclose(chi[[0, 1, 2, 3]], [1.0, 1.0, 0.0, 0.0], atol=1e-15)

    def test_scaled_is_linear(self):
        phi = make_family("E3", 1.0, 1, 2)
        np.testing.assert_allclose(phi.scaled(3.0).values([0.2]), 3.0 * phi.values([0.2]))

    def test_sum(self):
        a = make_family("E1", 1.0, 2, 2)
        b = make_family("E2", 1.0, 1, 2)
        np.testing.assert_allclose((a + b).values([0.3]), a.values([0.3]) + b.values([0.3]))


class TestParity:
    @pytest.mark.parametrize("tag,k,expected", [("E1", 2, "A1"), ("E2", 1, "A2"), ("E3", 1, "A3"),
                                                ("E2", 3, "A2"), ("E3", 3, "A3")])
    def test_family_classes_two_dimensional(self, tag, k, expected):
        assert classify_parity(make_family(tag, 1.0, k, 2)) == expected

    @pytest.mark.parametrize("tag,k,expected", [("E1", 2, "A1"), ("E2", 1, "A2"), ("E3", 1, "A3")])
    def test_family_classes_three_dimensional(self, tag, k, expected):
        assert classify_parity(make_family(tag, 1.0, k, 3)) == expected

    def test_constant_is_even(self):
        assert classify_parity(constant_data([1.0, -2.0])) == "A1"

    def test_mixed_parity(self):
        phi = custom_data(2, [{(1,): 1.0, (2,): 1.0}, {}])
        assert classify_parity(phi) == "none"

    def test_custom_needs_all_components(self):
        with pytest.raises(DomainError):
            custom_data(3, [{(1, 0): 1.0}])
