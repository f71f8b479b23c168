from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import observed_order, random_F
from hypoplast import tensor as tn

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def mats(d):
    return arrays(np.float64, (d, d), elements=finite)


class TestDoubleContract:
    def test_identity(self):
        assert tn.double_contract(np.eye(2), np.eye(2)) == 2.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            tn.double_contract(np.eye(2), np.eye(3))

    @pytest.mark.parametrize("d", [2, 3])
    def test_triple_product_identities(self, rng, d):
        A, B, C = (rng.standard_normal((1000, d, d)) for _ in range(3))
        lhs = tn.double_contract(A, tn.matmul(B, C))
        bound = 1e-12 * tn.norm(A) * tn.norm(B) * tn.norm(C)
        assert np.all(np.abs(lhs - tn.double_contract(tn.matmul(tn.transpose(B), A), C)) <= bound)
        assert np.all(np.abs(lhs - tn.double_contract(tn.matmul(A, tn.transpose(C)), B)) <= bound)

    @given(mats(2), mats(2), mats(2))
    def test_triple_product_property(self, A, B, C):
        lhs = tn.double_contract(A, B @ C)
        scale = 1e-12 * (1 + tn.norm(A) * tn.norm(B) * tn.norm(C))
        assert abs(lhs - tn.double_contract(B.T @ A, C)) <= scale
        assert abs(lhs - tn.double_contract(A @ C.T, B)) <= scale

    @given(mats(3))
    def test_dev_orthogonal_to_identity(self, A):
        assert abs(tn.double_contract(tn.dev(A), np.eye(3))) <= 1e-13 * (1 + tn.norm(A))


class TestDetCofInv:
    def test_identity(self):
        d, c, i = tn.det_cof_inv(np.eye(2))
        assert d == 1.0
        np.testing.assert_array_equal(c, np.eye(2))
        np.testing.assert_array_equal(i, np.eye(2))

    def test_diagonal(self):
        d, c, i = tn.det_cof_inv(np.diag([2.0, 3.0]))
        assert d == 6.0
        np.testing.assert_allclose(c, np.diag([3.0, 2.0]))
        np.testing.assert_allclose(i, np.diag([0.5, 1 / 3]))

    @pytest.mark.parametrize("d", [2, 3])
    def test_cofactor_is_det_inverse_transpose(self, rng, d):
        F = random_F(rng, 200, d)
        np.testing.assert_allclose(tn.cof(F), tn.det(F)[:, None, None] * tn.transpose(tn.inv(F)), atol=1e-12)

    def test_cof_defined_for_singular(self):
        a = np.array([[1.0, 2.0], [2.0, 4.0]])
        np.testing.assert_allclose(tn.double_contract(tn.cof(a), a) / 2, tn.det(a) + 0.0, atol=1e-15)
        with pytest.raises(tn.SingularMatrixError) as err:
            tn.inv(a)
        assert err.value.det == pytest.approx(0.0)

    @pytest.mark.parametrize("d", [2, 3])
    def test_inverse_accuracy(self, rng, d):
        F = random_F(rng, 500, d)
        np.testing.assert_allclose(tn.matmul(tn.inv(F), F), np.broadcast_to(np.eye(d), F.shape), atol=1e-12)

    def test_inverse_moderate_condition(self, rng):
        U, _ = np.linalg.qr(rng.standard_normal((2, 2)))
        V, _ = np.linalg.qr(rng.standard_normal((2, 2)))
        a = U @ np.diag([1.0, 1e-6]) @ V
        np.testing.assert_allclose(tn.inv(a) @ a, np.eye(2), atol=1e-9)

    @pytest.mark.parametrize("d", [2, 3])
    def test_det_derivative_order(self, rng, d):
        F = random_F(rng, None, d)
        G = rng.standard_normal((d, d))
        exact = tn.double_contract(tn.cof(F), G)
        hs = [1e-1, 5e-2, 2.5e-2]
        errs = [abs((tn.det(F + h * G) - tn.det(F - h * G)) / (2 * h) - exact) for h in hs]
        if d == 2:  # det is quadratic: the central difference is exact
            assert max(errs) <= 1e-12
        else:
            assert observed_order(errs, hs) >= 1.9


class TestDevTrSym:
    def test_dev_identity(self):
        np.testing.assert_array_equal(tn.dev(np.eye(2)), np.zeros((2, 2)))

    def test_trace_free(self, rng):
        a = rng.standard_normal((1000, 2, 2))
        assert np.abs(tn.tr(tn.dev(a))).max() <= 1e-14 * 10

    def test_sym_of_skew(self, rng):
        a = tn.skew(rng.standard_normal((10, 3, 3)))
        np.testing.assert_allclose(tn.sym(a), 0.0, atol=1e-15)

    @given(mats(2))
    def test_sym_symmetric(self, a):
        s = tn.sym(a)
        np.testing.assert_array_equal(s, s.T)

    def test_not_square(self):
        with pytest.raises(ValueError):
            tn.dev(np.zeros((2, 3)))


class TestRotations:
    @pytest.mark.parametrize("d", [2, 3])
    def test_random_rotation(self, rng, d):
        R = tn.random_rotation(rng, d)
        np.testing.assert_allclose(R @ R.T, np.eye(d), atol=1e-13)
        assert np.linalg.det(R) == pytest.approx(1.0)

    def test_rotation2(self):
        R = tn.rotation2(np.pi / 2)
        np.testing.assert_allclose(R @ np.array([1.0, 0.0]), [0.0, 1.0], atol=1e-15)
