"""Plastic distortion rate from the flow-rule inclusion at frozen elastic strain.

The inclusion ``d zeta(L) - div(mu |grad L|^(q-2) grad L) \\ni D`` with the
(truncated, deviatoric) driving stress ``D`` is the optimality condition of::

    Phi(L) = int zeta_delta(L) + mu/q |grad L|^q - D : L dx

over trace-free Galerkin fields, which is minimised by damped Newton.  Trace-free
fields are stored with coordinates ``u = (sqrt2 a, b, c)`` for
``L = [[a, b], [c, -a]]`` so that ``|L| = |u|`` and ``D : L = D~ . u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import tensor as tn
from .errors import ConvergenceError
from .fields import FieldSpace
from .materials import ESHELBY, VARIANTS, Material, truncation
from .momentum_solver import TruncationCounters

SQRT2 = np.sqrt(2.0)


def to_coords(M: np.ndarray) -> np.ndarray:
    """Coordinates (sqrt2 dev_xx, M_xy, M_yx) of the deviatoric part, last axis."""
    a = 0.5 * (M[..., 0, 0] - M[..., 1, 1])
    return np.stack([SQRT2 * a, M[..., 0, 1], M[..., 1, 0]], axis=-1)


def from_coords(u: np.ndarray) -> np.ndarray:
    a = u[..., 0] / SQRT2
    return np.stack([np.stack([a, u[..., 1]], -1), np.stack([u[..., 2], -a], -1)], -2)


@dataclass
class FlowResult:
    L: np.ndarray
    iterations: int
    history: list
    residual_norm: float


@dataclass
class FlowProblem:
    space: FieldSpace
    material: Material
    mu_grad: float = 1e-3
    q_exp: float = 4.0
    variant: str = ESHELBY
    eps_trunc: float = 1e-3
    tol: float = 1e-10
    max_iter: int = 80
    delta_q: float = 1e-8
    counters: TruncationCounters = field(default_factory=TruncationCounters)

    def __post_init__(self):
        if self.q_exp <= 2:
            raise ValueError(f"gradient exponent q = {self.q_exp} must exceed d = 2")
        if self.mu_grad <= 0:
            raise ValueError("gradient coefficient mu must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        S = self.space
        self.w = S.box.wx * S.box.wy
        comps = [(0, 0), (0, 1), (1, 0)]
        scale = np.array([SQRT2, 1.0, 1.0])
        self.U = np.stack([s * S.component_matrix(ix) for s, ix in zip(scale, comps)])
        self.DU = np.stack(
            [s * S.component_matrix(ix, *dd) for s, ix in zip(scale, comps) for dd in ((1, 0), (0, 1))]
        )  # (b, k) flattened, direction fastest
        self._Uf = self.U.reshape(-1, S.ndof)
        self._DUf = self.DU.reshape(-1, S.ndof)
        self._slices = [slice(S.offsets[i], S.offsets[i + 1]) for i in range(len(S.blocks))]

    # ---------------------------------------------------------------- driving stress
    def driving_stress(self, F_e: np.ndarray, counted: bool = True) -> np.ndarray:
        """Deviatoric part of the truncated Eshelby (or alternative) stress at the nodes."""
        E = self.material.stored.eshelby(F_e, self.variant)
        fac, active = truncation(tn.norm(E), 1.0 / self.eps_trunc**2)
        if counted:
            self.counters.eshelby += int(active.sum())
        return tn.dev(fac[..., None, None] * E)

    # ---------------------------------------------------------------- functional
    def _fields(self, c):
        u = self.U @ c  # (3, Nq)
        G = self.DU @ c  # (6, Nq)
        return u, G

    def functional(self, c, Dc) -> float:
        """``Phi`` for driving-stress coordinates ``Dc`` of shape (3, Nq)."""
        u, G = self._fields(c)
        g = self.material.plastic.radial((u**2).sum(axis=0))[0]
        s = (G**2).sum(axis=0) + self.delta_q**2
        grad = self.mu_grad / self.q_exp * (s ** (0.5 * self.q_exp) - self.delta_q**self.q_exp)
        return self.w * float(np.sum(g + grad - (Dc * u).sum(axis=0)))

    def gradient(self, c, Dc) -> np.ndarray:
        u, G = self._fields(c)
        g1 = self.material.plastic.radial((u**2).sum(axis=0))[1]
        s = (G**2).sum(axis=0) + self.delta_q**2
        flux = self.mu_grad * s ** (0.5 * self.q_exp - 1.0) * G
        return self.w * (self._Uf.T @ (2.0 * g1 * u - Dc).ravel() + self._DUf.T @ flux.ravel())

    def hessian(self, c) -> np.ndarray:
        u, G = self._fields(c)
        _, g1, g2 = self.material.plastic.radial((u**2).sum(axis=0))
        q = self.q_exp
        s = (G**2).sum(axis=0) + self.delta_q**2
        alpha = self.mu_grad * s ** (0.5 * q - 1.0)
        H = np.zeros((self.space.ndof, self.space.ndof))
        # the isotropic parts only couple a block with itself
        for b, sl in enumerate(self._slices):
            Ub = self.U[b][:, sl]
            Dx, Dy = self.DU[2 * b][:, sl], self.DU[2 * b + 1][:, sl]
            H[sl, sl] = Ub.T @ ((2.0 * g1)[:, None] * Ub) + Dx.T @ (alpha[:, None] * Dx) + Dy.T @ (alpha[:, None] * Dy)
        if np.any(g2 != 0.0):
            Zu = (u[:, :, None] * self.U).sum(axis=0)
            H += Zu.T @ ((4.0 * g2)[:, None] * Zu)
        if q != 2:
            Zg = (G[:, :, None] * self.DU).sum(axis=0)
            H += Zg.T @ ((self.mu_grad * (q - 2.0) * s ** (0.5 * q - 2.0))[:, None] * Zg)
        return self.w * H

    # ---------------------------------------------------------------- solve
    def coords(self, D: np.ndarray) -> np.ndarray:
        return np.moveaxis(to_coords(D), -1, 0).reshape(3, -1)

    def solve(self, F_e=None, L_init=None, D=None) -> FlowResult:
        """Minimise ``Phi``; pass either ``F_e`` or a nodal driving stress ``D``."""
        if D is None:
            D = self.driving_stress(F_e)
        Dc = self.coords(D)
        c = self.space.zeros() if L_init is None else np.array(L_init, dtype=float)
        scale = 1.0 + np.linalg.norm(self.w * self._Uf.T @ Dc.ravel())
        history = []
        for it in range(self.max_iter + 1):
            r = self.gradient(c, Dc)
            rn = float(np.linalg.norm(r))
            history.append(rn)
            if rn <= self.tol * scale:
                return FlowResult(c, it, history, rn)
            if it == self.max_iter:
                break
            step = -linalg.cho_solve(linalg.cho_factor(self.hessian(c)), r)
            Phi0 = self.functional(c, Dc)
            slope = r @ step
            tau = 1.0
            while tau > 1e-12:
                trial = c + tau * step
                if self.functional(trial, Dc) <= Phi0 + 1e-4 * tau * slope:
                    break
                if np.linalg.norm(self.gradient(trial, Dc)) < (1.0 - 1e-4 * tau) * rn:
                    break
                tau *= 0.5
            c = trial
        raise ConvergenceError("plastic flow solver", history)

    # ---------------------------------------------------------------- checks
    def dissipation_density(self, c) -> np.ndarray:
        """``d zeta_delta(L) : L`` at the nodes (nonnegative by convexity)."""
        u, _ = self._fields(c)
        g1 = self.material.plastic.radial((u**2).sum(axis=0))[1]
        return 2.0 * g1 * (u**2).sum(axis=0)

    def certificate(self, c, D, rng: np.random.Generator, n_tests: int = 20, scale: float | None = None) -> float:
        """Minimum slack of the discrete variational inequality over random test fields.

        Slack = ``int zeta_d(Lt) + mu/q |grad Lt|^q - D:(Lt - L) - zeta_d(L) - mu/q |grad L|^q``;
        it is nonnegative for the exact minimiser.
        """
        Dc = self.coords(D)
        Phi = self.functional(c, Dc)
        amp = scale if scale is not None else max(1.0, float(np.max(np.abs(c))))
        slacks = []
        for i in range(n_tests):
            # test fields at distances spanning three decades from the candidate
            size = amp * 10.0 ** (-(i % 4))
            trial = c + size * rng.standard_normal(self.space.ndof) / np.sqrt(self.space.ndof)
            slacks.append(self.functional(trial, Dc) - Phi)
        return float(min(slacks))
