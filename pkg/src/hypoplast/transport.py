"""Explicit transport of the elastic strain and a-posteriori plastic reconstruction.

Within one global step the velocity and the plastic rate are frozen (they are
slaved to ``F_e`` by the quasistatic equations) and ``F_e`` is advanced with
Heun's SSP-RK2 method applied to the Galerkin-projected right-hand side::

    d_t F_e = (grad v) F_e - (v.grad) F_e - F_e L_p  +  (1/k) div(|grad F_e|^(r-2) grad F_e)

(``(grad v - L_p) F_e`` replaces the first and last terms for the alternative
flow-rule variant).  The regularizer is taken in weak form with natural
boundary conditions.  Products are formed at the quadrature nodes, whose
count makes the projection of quadratic products alias-free.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import tensor as tn
from .errors import CFLViolation, DeterminantCollapseError
from .fields import FieldSpace
from .materials import ALTERNATIVE, ESHELBY, VARIANTS, _jacobian


@dataclass(frozen=True)
class TransportState:
    F_e: np.ndarray  # tensor-space coefficients
    t: float = 0.0
    F_p: np.ndarray | None = None
    step: int = 0


@dataclass(frozen=True)
class Kinematics:
    """Nodal velocity, velocity gradient and plastic rate, frozen over a step."""

    v: np.ndarray  # (nx, ny, 2)
    grad_v: np.ndarray  # (nx, ny, 2, 2), [i, j] = d_j v_i
    L: np.ndarray  # (nx, ny, 2, 2)

    @classmethod
    def from_coefficients(cls, vspace: FieldSpace, cv, lspace: FieldSpace, cL) -> "Kinematics":
        return cls(vspace.evaluate(cv), vspace.grad(cv), lspace.evaluate(cL))

    @classmethod
    def at_rest(cls, box) -> "Kinematics":
        z = np.zeros((box.nx, box.ny, 2, 2))
        return cls(np.zeros((box.nx, box.ny, 2)), z, z.copy())

    def vmax(self) -> float:
        return float(np.sqrt((self.v**2).sum(axis=-1)).max())


def advect(v: np.ndarray, grad_F: np.ndarray) -> np.ndarray:
    """``(v.grad) F`` from nodal v and the nodal gradient of F."""
    return np.einsum("...k,...ijk->...ij", v, grad_F)


def strain_rate_kernel(F, grad_F, kin: Kinematics, variant: str = ESHELBY) -> np.ndarray:
    """Pointwise ``(grad v) F - (v.grad) F - F L`` (or ``(grad v - L) F``)."""
    if variant == ESHELBY:
        R = tn.matmul(kin.grad_v, F) - tn.matmul(F, kin.L)
    elif variant == ALTERNATIVE:
        R = tn.matmul(kin.grad_v - kin.L, F)
    else:
        raise ValueError(f"variant must be one of {VARIANTS}")
    return R - advect(kin.v, grad_F)


@dataclass
class Transport:
    space: FieldSpace
    k_reg: float = 0.0  # 1/k
    r_exp: float = 4.0
    det_floor: float = 1e-3
    iso_tol: float = 1e-6
    cfl: float = 0.5
    variant: str = ESHELBY

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.k_reg < 0:
            raise ValueError("regularizer weight 1/k must be nonnegative")

    # ------------------------------------------------------------ right-hand sides
    def regularizer(self, cF) -> np.ndarray:
        """Coefficients of ``(1/k) div(|grad F|^(r-2) grad F)`` in weak form."""
        if self.k_reg == 0.0:
            return np.zeros_like(cF)
        G = self.space.grad(cF)
        mag = np.sqrt((G**2).sum(axis=(-3, -2, -1)))
        flux = mag[..., None, None, None] ** (self.r_exp - 2.0) * G
        return -self.k_reg * self.space.test_integrals_grad(flux) / self.space.mass_diag

    def transport_part(self, cF, kin: Kinematics) -> np.ndarray:
        F = self.space.evaluate(cF)
        R = strain_rate_kernel(F, self.space.grad(cF), kin, self.variant)
        return self.space.project(R)

    def rhs_Fe(self, cF, kin: Kinematics) -> np.ndarray:
        return self.transport_part(cF, kin) + self.regularizer(cF)

    # ------------------------------------------------------------ step control
    def max_dt(self, kin: Kinematics, cF=None) -> float:
        """Advective (and, with a regularizer, diffusive) explicit step limit."""
        box = self.space.box
        vmax = kin.vmax()
        dt = np.inf if vmax == 0 else self.cfl * box.h / vmax
        if self.k_reg > 0 and cF is not None:
            G = self.space.grad(cF)
            gmax = float(np.sqrt((G**2).sum(axis=(-3, -2, -1))).max())
            diff = self.k_reg * (self.r_exp - 1.0) * gmax ** (self.r_exp - 2.0)
            lx, ly = self.space.modes
            kmax2 = (np.pi * lx / box.Lx) ** 2 + (np.pi * ly / box.Ly) ** 2
            if diff > 0:
                dt = min(dt, 2.0 / (diff * kmax2))
        return dt

    def check_det(self, cF) -> float:
        J = tn.det(self.space.evaluate(cF))
        jmin = float(J.min())
        if not jmin >= self.det_floor:
            where = np.unravel_index(np.argmin(np.where(np.isnan(J), -np.inf, J)), J.shape)
            raise DeterminantCollapseError(jmin, where, self.det_floor)
        return jmin

    def step(self, state: TransportState, kin: Kinematics, dt: float) -> TransportState:
        """One Heun (SSP-RK2) step of ``F_e`` with frozen kinematics."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        dt_max = self.max_dt(kin, state.F_e)
        if dt > dt_max:
            raise CFLViolation(dt, dt_max)
        c0 = state.F_e
        c1 = c0 + dt * self.rhs_Fe(c0, kin)
        c2 = 0.5 * (c0 + c1 + dt * self.rhs_Fe(c1, kin))
        self.check_det(c2)
        return replace(state, F_e=c2, t=state.t + dt, step=state.step + 1)

    # ------------------------------------------------------------ reconstruction
    def _plastic_rate(self, F_e_nodal, kin: Kinematics) -> np.ndarray:
        if self.variant == ESHELBY:
            return kin.L
        return tn.matmul(tn.matmul(tn.inv(F_e_nodal), kin.L), F_e_nodal)

    def fp_rhs(self, cFp, kin: Kinematics, F_e_nodal) -> np.ndarray:
        Fp = self.space.evaluate(cFp)
        M = self._plastic_rate(F_e_nodal, kin)
        R = tn.matmul(M, Fp) - advect(kin.v, self.space.grad(cFp))
        return self.space.project(R)

    def reconstruct_Fp_step(self, cFp, kin: Kinematics, dt: float, cFe_old=None, cFe_new=None):
        """Advance ``F_p`` by the same RK2; returns (coefficients, max |det F_p - 1|)."""
        Fe0 = Fe1 = None
        if self.variant == ALTERNATIVE:
            Fe0 = self.space.evaluate(cFe_old)
            Fe1 = self.space.evaluate(cFe_new if cFe_new is not None else cFe_old)
        c1 = cFp + dt * self.fp_rhs(cFp, kin, Fe0)
        c2 = 0.5 * (cFp + c1 + dt * self.fp_rhs(c1, kin, Fe1))
        return c2, self.isochoricity_defect(c2)

    def isochoricity_defect(self, cFp) -> float:
        return float(np.abs(tn.det(self.space.evaluate(cFp)) - 1.0).max())

    def total_deformation(self, cFe, cFp) -> np.ndarray:
        """Nodal ``F = F_e F_p``."""
        return tn.matmul(self.space.evaluate(cFe), self.space.evaluate(cFp))


def density(rho0, F_e_nodal) -> np.ndarray:
    """``rho = rho0 / det F_e`` at the nodes."""
    return rho0 / _jacobian(F_e_nodal)
