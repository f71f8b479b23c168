"""Constitutive layer: stored energy, viscous and plastic dissipation potentials.

Default forms (all isotropic):

* stored energy, with ``J = det F``::

      phi(F) = G/2 (|F|^2 - d) - G ln J + K/2 (ln J)^2
               + eps_phi (J^-kappa - 1 + kappa (J - 1))

  which vanishes exactly on rotations, is stress free at the identity and
  blows up like ``eps_phi J^-kappa`` under compression;
* viscous potential ``xi(e) = lam_v/2 (tr e)^2 + mu_v |dev e|^2``;
* plastic potential ``zeta(L) = sigma_y |L| + mu_p/2 |L|^2`` on trace-free L,
  smoothed to ``sigma_y (sqrt(|L|^2 + delta^2) - delta) + mu_p/2 |L|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .errors import DeterminantCollapseError

ESHELBY = "eshelby"
ALTERNATIVE = "alternative"
VARIANTS = (ESHELBY, ALTERNATIVE)


def _jacobian(F: np.ndarray) -> np.ndarray:
    J = tn.det(F)
    if np.any(~(J > 0.0)):
        Jm = np.where(np.isnan(J), -np.inf, J)
        where = np.unravel_index(np.argmin(Jm), J.shape) if J.ndim else None
        raise DeterminantCollapseError(np.min(Jm), where)
    return J


@dataclass(frozen=True)
class StoredEnergy:
    shear_modulus: float = 1.0  # G [Pa]
    bulk_modulus: float = 1.0  # K [Pa]
    blowup_coeff: float = 0.01  # eps_phi [Pa]
    blowup_exponent: float = 9.0  # kappa (the blow-up exponent, not the wall friction)

    def _c(self, J):
        G, K, eps, kap = self.shear_modulus, self.bulk_modulus, self.blowup_coeff, self.blowup_exponent
        return -G + K * np.log(J) + eps * kap * (J - J ** (-kap))

    def phi(self, F):
        F = np.asarray(F, dtype=float)
        d = F.shape[-1]
        J = _jacobian(F)
        G, K, eps, kap = self.shear_modulus, self.bulk_modulus, self.blowup_coeff, self.blowup_exponent
        lnJ = np.log(J)
        return (
            0.5 * G * (tn.double_contract(F, F) - d)
            - G * lnJ
            + 0.5 * K * lnJ**2
            + eps * (J ** (-kap) - 1.0 + kap * (J - 1.0))
        )

    def phi_prime(self, F):
        """Piola stress ``S = phi'(F) = G F + c(J) F^-T``."""
        F = np.asarray(F, dtype=float)
        J = _jacobian(F)
        Finv_T = tn.cof(F) / J[..., None, None]
        return self.shear_modulus * F + self._c(J)[..., None, None] * Finv_T

    def eshelby(self, F, variant: str = ESHELBY):
        """Plastic driving stress ``F^T S`` (or ``S F^T`` for the alternative variant)."""
        F = np.asarray(F, dtype=float)
        d = F.shape[-1]
        J = _jacobian(F)
        c = self._c(J)[..., None, None] * np.eye(d)
        if variant == ESHELBY:
            return self.shear_modulus * tn.matmul(tn.transpose(F), F) + c
        if variant == ALTERNATIVE:
            return self.shear_modulus * tn.matmul(F, tn.transpose(F)) + c
        raise ValueError(f"unknown flow-rule variant {variant!r}")

    def kirchhoff(self, F):
        """``S F^T``, the conservative part of the Cauchy stress without pressure."""
        return self.eshelby(F, ALTERNATIVE)

    def cauchy_elastic(self, F):
        """``phi'(F) F^T + phi(F) I``."""
        F = np.asarray(F, dtype=float)
        d = F.shape[-1]
        return self.kirchhoff(F) + self.phi(F)[..., None, None] * np.eye(d)

    def linear_lame(self) -> tuple[float, float]:
        """Small-strain (mu, lambda) of the linearised stress ``phi'(I + H)``."""
        kap = self.blowup_exponent
        return self.shear_modulus, self.bulk_modulus + self.blowup_coeff * kap * (kap + 1.0)


@dataclass(frozen=True)
class ViscousPotential:
    vol_viscosity: float = 1.0  # lam_v [Pa s]
    shear_viscosity: float = 1.0  # mu_v [Pa s]

    growth_exponent = 1.0  # xi' grows linearly

    def xi(self, e):
        e = np.asarray(e, dtype=float)
        de = tn.dev(e)
        return 0.5 * self.vol_viscosity * tn.tr(e) ** 2 + self.shear_viscosity * tn.double_contract(de, de)

    def xi_prime(self, e):
        e = np.asarray(e, dtype=float)
        d = e.shape[-1]
        return self.vol_viscosity * tn.tr(e)[..., None, None] * np.eye(d) + 2.0 * self.shear_viscosity * tn.dev(e)


@dataclass(frozen=True)
class PlasticPotential:
    yield_stress: float = 0.0  # sigma_y [Pa]
    plastic_viscosity: float = 1.0  # mu_p [Pa s]
    delta: float = 1e-6  # smoothing scale [1/s]

    @property
    def homogeneity_floor(self) -> float:
        return 1.0 if self.yield_stress > 0 else 2.0

    @staticmethod
    def _require_dev(L, tol=1e-10):
        L = np.asarray(L, dtype=float)
        t = np.abs(tn.tr(L))
        if np.any(t > tol * (1.0 + tn.norm(L))):
            raise ValueError("plastic rate must be trace-free (zeta = +inf off the deviatoric subspace)")
        return L

    def zeta(self, L):
        """Unsmoothed potential; ``+inf`` off the deviatoric subspace."""
        L = np.asarray(L, dtype=float)
        n = tn.norm(L)
        val = self.yield_stress * n + 0.5 * self.plastic_viscosity * n**2
        off = np.abs(tn.tr(L)) > 1e-10 * (1.0 + n)
        return np.where(off, np.inf, val)

    def radial(self, t):
        """``g(t)`` with ``zeta_delta(L) = g(|L|^2)``, plus ``g'`` and ``g''``."""
        sy, mp, dl = self.yield_stress, self.plastic_viscosity, self.delta
        s = np.sqrt(t + dl * dl)
        g = sy * (s - dl) + 0.5 * mp * t
        g1 = 0.5 * sy / s + 0.5 * mp
        g2 = -0.25 * sy / s**3
        return g, g1, g2

    def zeta_delta(self, L):
        L = self._require_dev(L)
        return self.radial(tn.double_contract(L, L))[0]

    def zeta_delta_prime(self, L):
        L = self._require_dev(L)
        g1 = self.radial(tn.double_contract(L, L))[1]
        return 2.0 * g1[..., None, None] * L


@dataclass(frozen=True)
class Material:
    stored: StoredEnergy = field(default_factory=StoredEnergy)
    viscous: ViscousPotential = field(default_factory=ViscousPotential)
    plastic: PlasticPotential = field(default_factory=PlasticPotential)


def truncation(x_norm, bound):
    """Factor ``1 / (1 + (|x| - bound)^+)`` of the bounded surrogate stresses.

    Returns the factor and a boolean mask of nodes where it is active.
    """
    excess = np.maximum(np.asarray(x_norm, dtype=float) - bound, 0.0)
    return 1.0 / (1.0 + excess), excess > 0.0
