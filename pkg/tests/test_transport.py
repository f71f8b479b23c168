from __future__ import annotations

import numpy as np
import pytest
import sympy as sp
from scipy.linalg import expm

from conftest import observed_order
from hypoplast import tensor as tn
from hypoplast.errors import CFLViolation, DeterminantCollapseError
from hypoplast.fields import Box, constant_tensor, tensor_space, velocity_space
from hypoplast.materials import ALTERNATIVE
from hypoplast.transport import Kinematics, Transport, TransportState, density

BOX = Box(1.0, 1.0, 12, 12)
xs, ys = sp.symbols("x y")
PI = sp.pi


def lambdify_matrix(M):
    def ev(X, Y):
        out = np.empty(X.shape + M.shape)
        for i in range(M.shape[0]):
            for j in range(M.shape[1]):
                out[..., i, j] = np.broadcast_to(sp.lambdify((xs, ys), M[i, j], "numpy")(X, Y), X.shape)
        return out

    return ev


def manufactured():
    """Symbolic fields in the parity classes: F_e, L_p tensors and a velocity."""
    c, s = sp.cos, sp.sin
    F = sp.Matrix(
        [
            [1 + sp.Rational(1, 10) * c(PI * xs) * c(PI * ys), sp.Rational(1, 20) * s(PI * xs) * s(2 * PI * ys)],
            [sp.Rational(1, 25) * s(2 * PI * xs) * s(PI * ys), 1 - sp.Rational(1, 15) * c(2 * PI * xs)],
        ]
    )
    a = sp.Rational(1, 10) * c(PI * xs) * c(PI * ys)
    L = sp.Matrix([[a, sp.Rational(1, 8) * s(PI * xs) * s(PI * ys)], [sp.Rational(-1, 9) * s(PI * xs) * s(PI * ys), -a]])
    v = sp.Matrix([sp.Rational(1, 5) * s(PI * xs) * c(PI * ys), sp.Rational(-1, 7) * c(2 * PI * xs) * s(PI * ys)])
    gv = v.jacobian([xs, ys])
    adv = sp.Matrix(2, 2, lambda i, j: v[0] * sp.diff(F[i, j], xs) + v[1] * sp.diff(F[i, j], ys))
    R = gv * F - adv - F * L
    lap = sp.Matrix(2, 2, lambda i, j: sp.diff(F[i, j], xs, 2) + sp.diff(F[i, j], ys, 2))
    return F, L, v, gv, R, lap


@pytest.fixture(scope="module")
def mms():
    F, L, v, gv, R, lap = manufactured()
    X, Y = BOX.mesh
    ev = lambda M: lambdify_matrix(M)(X, Y)  # noqa: E731
    vals = dict(F=ev(F), L=ev(L), v=ev(v)[..., 0], gv=ev(gv), R=ev(R), lap=ev(lap))
    return vals


def spaces():
    return (
        tensor_space(BOX),
        tensor_space(BOX, tracefree=True),
        velocity_space(BOX),
    )


class TestRightHandSide:
    def test_rest(self):
        T, _, _ = spaces()
        tr = Transport(T)
        c = constant_tensor(T, np.diag([1.2, 0.9]))
        np.testing.assert_allclose(tr.rhs_Fe(c, Kinematics.at_rest(BOX)), 0.0, atol=1e-14)

    def test_manufactured_solution(self, mms):
        T, TL, V = spaces()
        cF = T.project(mms["F"])
        np.testing.assert_allclose(T.evaluate(cF), mms["F"], atol=1e-13)
        cv = V.project(mms["v"])
        cL = TL.project(mms["L"])
        kin = Kinematics.from_coefficients(V, cv, TL, cL)
        np.testing.assert_allclose(kin.grad_v, mms["gv"], atol=1e-12)
        rhs = Transport(T).rhs_Fe(cF, kin)
        np.testing.assert_allclose(T.evaluate(rhs), mms["R"], atol=1e-12)

    def test_linear_regularizer_is_laplacian(self, mms):
        T, _, _ = spaces()
        cF = T.project(mms["F"])
        reg = Transport(T, k_reg=0.3, r_exp=2.0).regularizer(cF)
        np.testing.assert_allclose(T.evaluate(reg), 0.3 * mms["lap"], atol=1e-11)

    def test_regularizer_linear_in_weight(self, mms):
        T, _, _ = spaces()
        cF = T.project(mms["F"])
        r1 = Transport(T, k_reg=1e-3).regularizer(cF)
        r2 = Transport(T, k_reg=2e-3).regularizer(cF)
        np.testing.assert_allclose(r2, 2 * r1, rtol=1e-14, atol=1e-300)

    def test_rigid_rotation_preserves_norm(self, rng):
        T = tensor_space(BOX, layout="cosine")
        X, Y = BOX.mesh
        omega = 0.7
        W = omega * np.array([[0.0, -1.0], [1.0, 0.0]])
        kin = Kinematics(
            v=np.stack([-omega * (Y - 0.5), omega * (X - 0.5)], -1),
            grad_v=np.broadcast_to(W, X.shape + (2, 2)).copy(),
            L=np.zeros(X.shape + (2, 2)),
        )
        F0 = np.eye(2) + 0.2 * rng.standard_normal((2, 2))
        rhs = T.evaluate(Transport(T).rhs_Fe(constant_tensor(T, F0), kin))
        assert np.abs(tn.double_contract(F0, rhs)).max() <= 1e-13


class TestStep:
    def test_rest_only_advances_time(self):
        T, _, _ = spaces()
        tr = Transport(T)
        st = TransportState(constant_tensor(T, np.eye(2)))
        new = tr.step(st, Kinematics.at_rest(BOX), 0.1)
        np.testing.assert_array_equal(new.F_e, st.F_e)
        assert new.t == 0.1 and new.step == 1

    def test_matrix_exponential(self):
        T = tensor_space(BOX, layout="cosine")
        a = 0.8
        Lp = np.diag([a, -a])
        F0 = np.array([[1.1, 0.2], [-0.1, 0.95]])
        kin = Kinematics(np.zeros((12, 12, 2)), np.zeros((12, 12, 2, 2)), np.broadcast_to(Lp, (12, 12, 2, 2)).copy())
        tr = Transport(T)
        exact = F0 @ expm(-Lp * 1.0)
        errs, dts = [], [0.1, 0.05, 0.025]
        for dt in dts:
            st = TransportState(constant_tensor(T, F0))
            for _ in range(round(1.0 / dt)):
                st = tr.step(st, kin, dt)
            errs.append(np.abs(T.evaluate(st.F_e)[0, 0] - exact).max())
        assert observed_order(errs, dts) == pytest.approx(2.0, abs=0.1)

    def test_determinant_local_order(self, mms):
        """One RK2 step of the semi-discrete system against an RK4 reference at dt/16."""
        T, TL, V = spaces()
        X, Y = BOX.mesh
        psi = 0.05
        vel = np.stack([psi * np.pi * np.sin(np.pi * X) * np.cos(np.pi * Y), -psi * np.pi * np.cos(np.pi * X) * np.sin(np.pi * Y)], -1)
        cv = V.project(vel)
        kin = Kinematics.from_coefficients(V, cv, TL, TL.zeros())
        assert np.abs(np.trace(kin.grad_v, axis1=-2, axis2=-1)).max() <= 1e-12
        tr = Transport(T, cfl=10.0)
        c0 = T.project(mms["F"])

        def rk4(c, dt, n):
            h = dt / n
            for _ in range(n):
                k1 = tr.rhs_Fe(c, kin)
                k2 = tr.rhs_Fe(c + 0.5 * h * k1, kin)
                k3 = tr.rhs_Fe(c + 0.5 * h * k2, kin)
                k4 = tr.rhs_Fe(c + h * k3, kin)
                c = c + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            return c

        errs, dts = [], [0.08, 0.04, 0.02]
        for dt in dts:
            rk2 = tr.step(TransportState(c0), kin, dt).F_e
            ref = rk4(c0, dt, 16)
            errs.append(np.abs(tn.det(T.evaluate(rk2)) - tn.det(T.evaluate(ref))).max())
        assert observed_order(errs, dts) >= 2.7

    def test_cfl_violation(self):
        T, _, _ = spaces()
        X, _ = BOX.mesh
        kin = Kinematics(np.full(X.shape + (2,), 10.0), np.zeros(X.shape + (2, 2)), np.zeros(X.shape + (2, 2)))
        with pytest.raises(CFLViolation) as err:
            Transport(T).step(TransportState(constant_tensor(T, np.eye(2))), kin, 1.0)
        assert err.value.dt_max < 1.0

    def test_diffusive_limit(self, mms):
        T, _, _ = spaces()
        tr = Transport(T, k_reg=1.0)
        cF = T.project(mms["F"])
        assert tr.max_dt(Kinematics.at_rest(BOX), cF) < np.inf

    def test_determinant_collapse(self):
        T = tensor_space(BOX, layout="cosine")
        X, _ = BOX.mesh
        kin = Kinematics(np.zeros(X.shape + (2,)), np.broadcast_to(np.diag([-50.0, 0.0]), X.shape + (2, 2)).copy(),
                         np.zeros(X.shape + (2, 2)))
        with pytest.raises(DeterminantCollapseError) as err:
            Transport(T, det_floor=0.6).step(TransportState(constant_tensor(T, np.eye(2))), kin, 0.02)
        assert err.value.det_min == pytest.approx(0.5)

    def test_invalid(self):
        T, _, _ = spaces()
        with pytest.raises(ValueError):
            Transport(T, variant="other")
        with pytest.raises(ValueError):
            Transport(T, k_reg=-1.0)
        with pytest.raises(ValueError):
            Transport(T).step(TransportState(T.zeros()), Kinematics.at_rest(BOX), 0.0)


class TestReconstruction:
    def test_rest(self):
        T, _, _ = spaces()
        c = constant_tensor(T, np.eye(2))
        c2, iso = Transport(T).reconstruct_Fp_step(c, Kinematics.at_rest(BOX), 0.1)
        np.testing.assert_array_equal(c2, c)
        assert iso <= 1e-14

    @pytest.mark.parametrize("variant", ["eshelby", ALTERNATIVE])
    def test_isochoric_local_order(self, variant):
        T = tensor_space(BOX, layout="cosine")
        Lp = np.array([[0.3, 0.5], [-0.2, -0.3]])
        X, _ = BOX.mesh
        kin = Kinematics(np.zeros(X.shape + (2,)), np.zeros(X.shape + (2, 2)), np.broadcast_to(Lp, X.shape + (2, 2)).copy())
        tr = Transport(T, variant=variant)
        cFe = constant_tensor(T, np.diag([1.05, 0.97]))
        errs, dts = [], [0.1, 0.05, 0.025]
        for dt in dts:
            _, iso = tr.reconstruct_Fp_step(constant_tensor(T, np.eye(2)), kin, dt, cFe, cFe)
            errs.append(iso)
        assert observed_order(errs, dts) >= 2.7

    def test_recombination_without_plastic_rate(self, mms):
        T, TL, V = spaces()
        X, Y = BOX.mesh
        vel = np.stack([0.1 * np.sin(np.pi * X) * np.cos(np.pi * Y), 0.05 * np.cos(np.pi * X) * np.sin(np.pi * Y)], -1)
        kin = Kinematics.from_coefficients(V, V.project(vel), TL, TL.zeros())
        tr = Transport(T)
        F_tot = TransportState(T.project(mms["F"]))
        st = TransportState(T.project(mms["F"]), F_p=constant_tensor(T, np.eye(2)))
        for _ in range(5):
            cFp, _ = tr.reconstruct_Fp_step(st.F_p, kin, 0.01)
            st = tr.step(st, kin, 0.01)
            st = TransportState(st.F_e, st.t, cFp, st.step)
            F_tot = tr.step(F_tot, kin, 0.01)
        np.testing.assert_allclose(tr.total_deformation(st.F_e, st.F_p), T.evaluate(F_tot.F_e), atol=1e-13)


class TestDensity:
    def test_values(self):
        assert density(2.0, np.eye(2)) == 2.0
        assert density(2.0, np.diag([2.0, 1.0])) == 1.0

    def test_collapse(self):
        with pytest.raises(DeterminantCollapseError):
            density(1.0, np.diag([-1.0, 1.0]))

    def test_continuity_residual_first_order(self, mms):
        T, TL, V = spaces()
        X, Y = BOX.mesh
        vel = np.stack([0.2 * np.sin(np.pi * X) * np.cos(np.pi * Y), 0.1 * np.cos(np.pi * X) * np.sin(np.pi * Y)], -1)
        cv = V.project(vel)
        kin = Kinematics.from_coefficients(V, cv, TL, TL.zeros())
        tr = Transport(T)
        cF0 = constant_tensor(T, np.eye(2))
        rho0 = density(1.0, T.evaluate(cF0))
        div_v = np.trace(kin.grad_v, axis1=-2, axis2=-1)
        res = []
        dts = [0.02, 0.01, 0.005]
        for dt in dts:
            rho1 = density(1.0, T.evaluate(tr.step(TransportState(cF0), kin, dt).F_e))
            # rho0 is uniform, so div(rho v) = rho0 div v
            r = (rho1 - rho0) / dt + rho0 * div_v
            res.append(BOX.norm_Lp(r, 2))
        assert observed_order(res, dts) == pytest.approx(1.0, abs=0.15)
