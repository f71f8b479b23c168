"""Quasistatic momentum balance for the velocity at a frozen elastic strain.

For fixed ``F_e`` the Galerkin equations are the stationarity conditions of the
convex functional::

    Pi(v) = int xi(e(v)) + nu/p |grad e(v)|^p + T_el : grad v - rho_eps g.v dx
            + int_walls kappa/2 |v|^2 - f.v dS

where ``T_el = S F_e^T / (1 + (|S F_e^T| - 1/eps^2)^+) + phi I / (1 + (phi - 1/eps)^+)``
and ``rho_eps = rho0 / max(det F_e, eps)``.  The minimiser is found with a damped
Newton method (Armijo backtracking on ``Pi``).  Since ``v.n = 0`` holds for every
basis function, only the tangential part of the wall terms is active.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import tensor as tn
from .errors import ConvergenceError
from .fields import WALLS, FieldSpace
from .materials import Material, truncation

SQRT2 = np.sqrt(2.0)


@dataclass
class WallLoad:
    """Tangential traction on one wall: ``value * profile(s) * ramp(t)``.

    ``profile`` is ``uniform`` or ``sine`` (one half-wave along the wall);
    ``ramp`` is a linear ramp-up time (0 = applied at once).  ``friction``
    overrides the problem-wide boundary friction coefficient on this wall.
    """

    traction: float = 0.0
    profile: str = "uniform"
    ramp: float = 0.0
    friction: float | None = None

    def values(self, s: np.ndarray, length: float, t: float) -> np.ndarray:
        scale = 1.0 if self.ramp <= 0 else min(1.0, t / self.ramp)
        if self.profile == "uniform":
            shape = np.ones_like(s)
        elif self.profile == "sine":
            shape = np.sin(np.pi * s / length)
        else:
            raise ValueError(f"unknown traction profile {self.profile!r}")
        return self.traction * scale * shape


@dataclass
class TruncationCounters:
    """Number of node evaluations at which an eps-truncation was active."""

    kirchhoff: int = 0
    pressure: int = 0
    density: int = 0
    eshelby: int = 0

    def total(self) -> int:
        return self.kirchhoff + self.pressure + self.density + self.eshelby

    def as_dict(self) -> dict:
        return dict(kirchhoff=self.kirchhoff, pressure=self.pressure, density=self.density, eshelby=self.eshelby)


@dataclass
class MomentumResult:
    v: np.ndarray
    iterations: int
    history: list
    residual_norm: float
    load_norm: float


def elastic_stress(material: Material, F_e: np.ndarray, eps: float, counters: TruncationCounters | None = None):
    """Truncated conservative Cauchy stress ``T_el`` at the nodes (no viscous part)."""
    K = material.stored.kirchhoff(F_e)
    phi = material.stored.phi(F_e)
    a, act_k = truncation(tn.norm(K), 1.0 / eps**2)
    b, act_p = truncation(phi, 1.0 / eps)
    if counters is not None:
        counters.kirchhoff += int(act_k.sum())
        counters.pressure += int(act_p.sum())
    return a[..., None, None] * K + (b * phi)[..., None, None] * np.eye(F_e.shape[-1])


def truncated_density(rho0, F_e: np.ndarray, eps: float, counters: TruncationCounters | None = None):
    J = tn.det(F_e)
    if counters is not None:
        counters.density += int((J < eps).sum())
    return rho0 / np.maximum(J, eps)


@dataclass
class MomentumProblem:
    space: FieldSpace
    material: Material
    nu: float = 1e-3
    p_exp: float = 4.0
    kappa_friction: float = 1.0
    walls: dict = field(default_factory=dict)
    gravity: tuple = (0.0, 0.0)
    rho0: float | np.ndarray = 1.0
    eps_trunc: float = 1e-3
    tol: float = 1e-8
    max_iter: int = 60
    delta_p: float = 1e-8

    def __post_init__(self):
        d = 2
        if self.p_exp <= d:
            raise ValueError(f"gradient exponent p = {self.p_exp} must exceed d = {d}")
        if self.nu <= 0:
            raise ValueError("hyperviscosity nu must be positive")
        for w in self.walls:
            if w not in WALLS:
                raise ValueError(f"unknown wall {w!r}")
        if min(self.friction(w) for w in WALLS) <= 0:
            raise ValueError("boundary friction must be positive on every wall")
        self.counters = TruncationCounters()
        self._build()

    def friction(self, wall: str) -> float:
        load = self.walls.get(wall)
        if load is not None and load.friction is not None:
            return load.friction
        return self.kappa_friction

    # ------------------------------------------------------------------ operators
    def _build(self):
        S = self.space
        box = S.box
        self.w = box.wx * box.wy
        cm = S.component_matrix
        self.grad_ops = np.stack(
            [cm((0,), 1, 0), cm((0,), 0, 1), cm((1,), 1, 0), cm((1,), 0, 1)]
        )  # d_x v_x, d_y v_x, d_x v_y, d_y v_y
        g = self.grad_ops
        self.E = np.stack([g[0], g[3], (g[1] + g[2]) / SQRT2])  # Mandel strain
        xx0, xy0, yy0 = cm((0,), 2, 0), cm((0,), 1, 1), cm((0,), 0, 2)
        xx1, xy1, yy1 = cm((1,), 2, 0), cm((1,), 1, 1), cm((1,), 0, 2)
        self.K = np.stack(
            [xx0, xy0, xy1, yy1, (xy0 + xx1) / SQRT2, (yy0 + xy1) / SQRT2]
        )  # Mandel components of grad e, direction fastest

        lam, mu = self.material.viscous.vol_viscosity, self.material.viscous.shear_viscosity
        Hxi = lam * np.array([[1, 1, 0], [1, 1, 0], [0, 0, 0.0]]) + mu * np.array([[1, -1, 0], [-1, 1, 0], [0, 0, 2.0]])
        HE = np.tensordot(Hxi, self.E, axes=(1, 0))
        A = self.w * self.E.reshape(-1, S.ndof).T @ HE.reshape(-1, S.ndof)
        self.wall_ops = {}
        for wall in WALLS:
            _, t = box.wall_geometry(wall)
            it = int(np.argmax(np.abs(t)))
            B = S.wall_component_matrix(wall, (it,))
            _, _, ww = box.wall_points(wall)
            self.wall_ops[wall] = (B, ww)
            A += self.friction(wall) * ww * B.T @ B
        self.A_lin = A
        self.Hxi = Hxi

    # ------------------------------------------------------------------ loads
    def traction_vector(self, t: float = 0.0) -> np.ndarray:
        out = self.space.zeros()
        box = self.space.box
        for wall, load in self.walls.items():
            if load.traction == 0.0:
                continue
            B, ww = self.wall_ops[wall]
            x, y, _ = box.wall_points(wall)
            s, length = (x, box.Lx) if wall in ("bottom", "top") else (y, box.Ly)
            out += ww * B.T @ load.values(s, length, t)
        return out

    def body_force(self, F_e, counted: bool = True):
        rho = truncated_density(self.rho0, F_e, self.eps_trunc, self.counters if counted else None)
        return rho[..., None] * np.asarray(self.gravity, dtype=float)

    def load_vector(self, F_e: np.ndarray, t: float = 0.0, counted: bool = True) -> np.ndarray:
        """Everything in the residual that does not depend on v (sign: residual = A(v) + load)."""
        c = self.counters if counted else None
        T_el = elastic_stress(self.material, F_e, self.eps_trunc, c)
        r = self.space.test_integrals_grad(T_el)
        r -= self.space.test_integrals(self.body_force(F_e, counted))
        r -= self.traction_vector(t)
        return r

    # ------------------------------------------------------------------ functional
    def _hyper(self, c):
        G = self.K @ c  # (6, Nq)
        s = (G**2).sum(axis=0) + self.delta_p**2
        return G, s

    def potential(self, c, load) -> float:
        _, s = self._hyper(c)
        hyper = self.w * self.nu / self.p_exp * np.sum(s ** (0.5 * self.p_exp))
        return 0.5 * c @ self.A_lin @ c + hyper + c @ load

    def operator(self, c) -> np.ndarray:
        """v-dependent part of the residual."""
        G, s = self._hyper(c)
        h = self.nu * s ** (0.5 * self.p_exp - 1.0) * G
        return self.A_lin @ c + self.w * self.K.reshape(-1, self.K.shape[-1]).T @ h.ravel()

    def hessian(self, c, rank_term: bool = True) -> np.ndarray:
        G, s = self._hyper(c)
        p = self.p_exp
        alpha = self.w * self.nu * s ** (0.5 * p - 1.0)
        Kf = self.K.reshape(-1, self.K.shape[-1])
        H = self.A_lin + Kf.T @ (np.tile(alpha, 6)[:, None] * Kf)
        if rank_term and p != 2:
            beta = self.w * self.nu * (p - 2.0) * s ** (0.5 * p - 2.0)
            Z = (G[:, :, None] * self.K).sum(axis=0)
            H += Z.T @ (beta[:, None] * Z)
        return H

    def residual(self, c, F_e, t: float = 0.0) -> np.ndarray:
        """Galerkin residual tested against every velocity basis function."""
        return self.operator(c) + self.load_vector(F_e, t, counted=False)

    # ------------------------------------------------------------------ solve
    def solve(self, F_e, v_init=None, t: float = 0.0) -> MomentumResult:
        load = self.load_vector(F_e, t)
        c = self.space.zeros() if v_init is None else np.array(v_init, dtype=float)
        scale = 1.0 + np.linalg.norm(load)
        history = []
        for it in range(self.max_iter + 1):
            r = self.operator(c) + load
            rn = float(np.linalg.norm(r))
            history.append(rn)
            if rn <= self.tol * scale:
                return MomentumResult(c, it, history, rn, scale - 1.0)
            if it == self.max_iter:
                break
            try:
                step = -linalg.cho_solve(linalg.cho_factor(self.hessian(c)), r)
            except linalg.LinAlgError:
                # Picard fallback: frozen-coefficient operator, always SPD
                step = -linalg.solve(self.hessian(c, rank_term=False), r, assume_a="pos")
            Pi0 = self.potential(c, load)
            slope = r @ step
            tau = 1.0
            while tau > 1e-10:
                trial = c + tau * step
                if self.potential(trial, load) <= Pi0 + 1e-4 * tau * slope:
                    break
                # near the minimum Pi differences drown in rounding; fall back on the residual
                if np.linalg.norm(self.operator(trial) + load) < (1.0 - 1e-4 * tau) * rn:
                    break
                tau *= 0.5
            c = trial
        raise ConvergenceError("momentum solver", history)
