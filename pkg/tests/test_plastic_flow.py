from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from hypoplast import tensor as tn
from hypoplast.fields import Box, tensor_space
from hypoplast.materials import ALTERNATIVE, Material, PlasticPotential, StoredEnergy
from hypoplast.plastic_flow import FlowProblem, from_coords, to_coords

BOX = Box(1.0, 1.0, 12, 12)


def problem(sy=0.0, mp=2.0, delta=1e-6, layout="parity", **kw):
    mat = Material(plastic=PlasticPotential(sy, mp, delta))
    return FlowProblem(tensor_space(BOX, layout=layout, tracefree=True), mat, **kw)


def uniform(D):
    return np.broadcast_to(np.asarray(D, dtype=float), (BOX.nx, BOX.ny, 2, 2)).copy()


def smooth_D(amp=0.3):
    X, Y = BOX.mesh
    a = amp * (0.5 + np.cos(np.pi * X) * np.cos(np.pi * Y))
    b = amp * np.sin(np.pi * X) * np.sin(2 * np.pi * Y)
    return np.stack([np.stack([a, b], -1), np.stack([0.5 * b, -a], -1)], -2)


def scalar_oracle(pot: PlasticPotential, dnorm: float) -> float:
    """Minimiser of g(t^2) - |D| t over t >= 0 (uniform fields: gradient term inert)."""
    f = lambda t: pot.radial(t * t)[0] - dnorm * t  # noqa: E731
    res = minimize_scalar(f, bounds=(0.0, 10.0 * dnorm / max(pot.plastic_viscosity, 1e-12) + 1.0), method="bounded",
                          options=dict(xatol=1e-14))
    return res.x


class TestCoordinates:
    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
    def test_isometry(self, a, b, c):
        L = np.array([[a, b], [c, -a]])
        u = to_coords(L)
        assert np.linalg.norm(u) == pytest.approx(tn.norm(L), abs=1e-12)
        np.testing.assert_allclose(from_coords(u), L, atol=1e-12)


class TestDrivingStress:
    def test_reference(self):
        P = problem()
        np.testing.assert_allclose(P.driving_stress(uniform(np.eye(2))), 0.0, atol=1e-14)

    @pytest.mark.parametrize("lam", [0.9, 1.1])
    def test_diagonal_closed_form(self, lam):
        P = problem()
        G = P.material.stored.shear_modulus
        D = P.driving_stress(uniform(np.diag([lam, 1 / lam])))
        np.testing.assert_allclose(D[0, 0], 0.5 * G * (lam**2 - lam**-2) * np.diag([1.0, -1.0]), atol=1e-14)

    def test_alternative_variant(self, rng):
        P = problem(variant=ALTERNATIVE)
        F = uniform(np.eye(2) + 0.1 * rng.standard_normal((2, 2)))
        S = StoredEnergy().phi_prime(F)
        np.testing.assert_allclose(P.driving_stress(F), tn.dev(tn.matmul(S, tn.transpose(F))), atol=1e-13)

    def test_invalid(self):
        with pytest.raises(ValueError):
            problem(q_exp=2.0)
        with pytest.raises(ValueError):
            problem(mu_grad=0.0)
        with pytest.raises(ValueError):
            problem(variant="other")


class TestSolve:
    def test_zero_drive(self):
        P = problem(sy=0.3)
        r = P.solve(D=uniform(np.zeros((2, 2))))
        np.testing.assert_array_equal(r.L, 0.0)

    @pytest.mark.parametrize("layout", ["parity", "cosine"])
    def test_uniform_creep(self, layout):
        P = problem(layout=layout)
        D = np.array([[0.2, 0.0], [0.0, -0.2]]) if layout == "parity" else np.array([[0.2, 0.1], [-0.05, -0.2]])
        r = P.solve(D=uniform(D))
        np.testing.assert_allclose(P.space.evaluate(r.L), uniform(D / 2.0), atol=1e-10)

    @pytest.mark.parametrize("dnorm", [0.1, 0.25])
    def test_sub_yield_lock(self, dnorm):
        pot = PlasticPotential(0.3, 2.0, 1e-6)
        P = problem(0.3, 2.0, 1e-6)
        D = dnorm / np.sqrt(2) * np.diag([1.0, -1.0])
        L = P.space.evaluate(P.solve(D=uniform(D)).L)
        t = scalar_oracle(pot, dnorm)
        assert tn.norm(L).max() == pytest.approx(t, rel=1e-5, abs=1e-12)
        assert tn.norm(L).max() <= 10 * pot.delta

    def test_above_yield(self):
        pot = PlasticPotential(0.3, 2.0, 1e-6)
        P = problem(0.3, 2.0, 1e-6)
        dnorm = 0.5
        D = dnorm / np.sqrt(2) * np.diag([1.0, -1.0])
        L = P.space.evaluate(P.solve(D=uniform(D)).L)
        assert tn.norm(L).max() == pytest.approx(scalar_oracle(pot, dnorm), rel=1e-6)
        assert tn.norm(L).max() == pytest.approx((dnorm - 0.3) / 2.0, rel=1e-4)

    def test_nonuniform_properties(self, rng):
        P = problem(0.05, 1.0, 1e-4, mu_grad=1e-2)
        D = smooth_D()
        r = P.solve(D=D)
        L = P.space.evaluate(r.L)
        assert np.abs(tn.tr(L)).max() <= 1e-13
        assert np.all(P.dissipation_density(r.L) >= 0)
        assert P.certificate(r.L, D, rng, 20) >= -1e-8
        assert r.residual_norm <= 1e-10 * (1 + np.abs(D).max() * 10)

    def test_certificate_detects_non_minimiser(self, rng):
        P = problem(0.0, 1.0, mu_grad=1e-2)
        D = smooth_D()
        r = P.solve(D=D)
        assert P.certificate(0.5 * r.L, D, rng, 20) < -1e-8

    def test_monotone_in_drive(self):
        P = problem(0.05, 1.0, 1e-4, mu_grad=1e-2)
        D = smooth_D()
        norms = [np.sqrt(P.space.inner(P.solve(D=a * D).L, P.solve(D=a * D).L)) for a in (1.0, 0.7, 0.4, 0.1)]
        assert all(b <= a + 1e-14 for a, b in zip(norms, norms[1:]))
