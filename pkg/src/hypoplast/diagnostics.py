"""Energy-dissipation ledger, a-priori norm monitors and consistency checks.

The balance tracked per accepted step ``n`` is::

    (E_{n+1} - E_n) / dt + visc + plast + grad_v + grad_L + boundary
        - load - traction - reg = residual_n

with ``E = int phi(F_e)``.  The rates are evaluated at the state that drives
step ``n``, so the residual is a forward difference and is first order in dt.
``reg`` is the power of the (1/k) regularizer, which is absent from the
unregularized balance and is therefore kept as a separate column.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import tensor as tn
from .fields import WALLS
from .momentum_solver import MomentumProblem, elastic_stress
from .plastic_flow import FlowProblem
from .transport import Transport

RATE_FIELDS = ("visc_rate", "plast_rate", "grad_v_rate", "grad_L_rate", "boundary_rate")
POWER_FIELDS = ("load_power", "traction_power", "reg_power")


@dataclass
class EnergyLedger:
    step: int
    t: float
    stored: float
    visc_rate: float = 0.0
    plast_rate: float = 0.0
    grad_v_rate: float = 0.0
    grad_L_rate: float = 0.0
    boundary_rate: float = 0.0
    load_power: float = 0.0
    traction_power: float = 0.0
    reg_power: float = 0.0
    balance_residual: float = math.nan

    @property
    def dissipation(self) -> float:
        return sum(getattr(self, f) for f in RATE_FIELDS)

    @property
    def power(self) -> float:
        return sum(getattr(self, f) for f in POWER_FIELDS)

    def close(self, stored_next: float, dt: float) -> None:
        """Fill the balance residual once the next stored energy is known."""
        self.balance_residual = (stored_next - self.stored) / dt + self.dissipation - self.power

    def sign_violations(self, scale: float = 1.0) -> list[str]:
        return [f for f in RATE_FIELDS if getattr(self, f) < -1e-12 * scale]


class LedgerEvaluator:
    """Evaluates every term of the ledger with the quadrature of the Galerkin spaces."""

    def __init__(self, momentum: MomentumProblem, flow: FlowProblem, transport: Transport):
        self.momentum = momentum
        self.flow = flow
        self.transport = transport
        self.box = momentum.space.box

    def stored(self, F_e_nodal) -> float:
        return float(self.box.integrate(self.momentum.material.stored.phi(F_e_nodal)))

    def evaluate(self, step: int, t: float, cF, cv, cL) -> EnergyLedger:
        mom, flow, box = self.momentum, self.flow, self.box
        w = box.wx * box.wy
        F = self.transport.space.evaluate(cF)
        out = EnergyLedger(step=step, t=t, stored=self.stored(F))

        e = (mom.E @ cv).T  # Mandel strain, (Nq, 3)
        out.visc_rate = w * float(np.einsum("qa,ab,qb->", e, mom.Hxi, e))
        G, s = mom._hyper(cv)
        out.grad_v_rate = w * mom.nu * float(np.sum(s ** (0.5 * mom.p_exp - 1.0) * (G**2).sum(axis=0)))

        out.plast_rate = w * float(flow.dissipation_density(cL).sum())
        _, GL = flow._fields(cL)
        sL = (GL**2).sum(axis=0) + flow.delta_q**2
        out.grad_L_rate = w * flow.mu_grad * float(np.sum(sL ** (0.5 * flow.q_exp - 1.0) * (GL**2).sum(axis=0)))

        for wall in WALLS:
            B, ww = mom.wall_ops[wall]
            vt = B @ cv
            out.boundary_rate += mom.friction(wall) * ww * float(vt @ vt)
        out.traction_power = float(mom.traction_vector(t) @ cv)
        vals = mom.space.evaluate(cv)
        out.load_power = float(box.integrate((mom.body_force(F, counted=False) * vals).sum(axis=-1)))

        if self.transport.k_reg > 0:
            reg = self.transport.space.evaluate(self.transport.regularizer(cF))
            S = mom.material.stored.phi_prime(F)
            out.reg_power = float(box.integrate(tn.double_contract(S, reg)))
        return out

    def elastic_power(self, cF, cv) -> float:
        """``int T_el : grad v`` (equals the stored-energy rate up to projection error)."""
        F = self.transport.space.evaluate(cF)
        T = elastic_stress(self.momentum.material, F, self.momentum.eps_trunc)
        return float(self.box.integrate(tn.double_contract(T, self.momentum.space.grad(cv))))


# ------------------------------------------------------------------ monitors
def fe_monitors(space, cF, kappa_blowup: float, r_exp: float) -> dict:
    """Norm proxies for the elastic strain, including the inputs of the determinant lower bound."""
    box = space.box
    F = space.evaluate(cF)
    J = tn.det(F)
    G = space.grad(cF)
    return dict(
        min_det=float(J.min()),
        int_det_pow=float(box.integrate(np.where(J > 0, J, np.nan) ** (-kappa_blowup))),
        Fe_L2=box.norm_Lp(F, 2),
        Fe_W1r=box.norm_Lp(F, r_exp) + box.norm_Lp(G, r_exp),
        max_Fe_minus_I=float(np.abs(F - np.eye(2)).max()),
    )


def rate_monitors(vspace, cv, lspace, cL, p_exp: float, q_exp: float) -> dict:
    box = vspace.box
    H = vspace.hessian(cv)  # (..., i, j, k): d_j d_k v_i
    grad_e = 0.5 * (H + np.swapaxes(H, -3, -2))
    gv = vspace.grad(cv)
    L = lspace.evaluate(cL)
    GL = lspace.grad(cL)
    Lq = box.norm_Lp(L, q_exp)
    GLq = box.norm_Lp(GL, q_exp)
    return dict(
        grad_e_Lp=box.norm_Lp(grad_e, p_exp),
        Lp_W1q=float((Lq**q_exp + GLq**q_exp) ** (1.0 / q_exp)),
        Lp_L2=box.norm_Lp(L, 2),
        grad_v_inf=box.norm_Lp(gv, np.inf),
        Lp_inf=box.norm_Lp(L, np.inf),
        v_rms=float(np.sqrt(box.integrate((vspace.evaluate(cv) ** 2).sum(axis=-1)) / box.area)),
    )


class GronwallTracker:
    """``|F_e(t)|_L2 <= |F_e(0)|_L2 exp(int_0^t |grad v|_inf + |L_p|_inf ds)`` with left sums."""

    def __init__(self, fe0_norm: float, exponent: float = 0.0):
        self.fe0 = fe0_norm
        self.exponent = exponent

    def bound(self) -> float:
        return self.fe0 * math.exp(self.exponent)

    def advance(self, grad_v_inf: float, L_inf: float, dt: float) -> None:
        self.exponent += dt * (grad_v_inf + L_inf)

    def holds(self, fe_norm: float, rtol: float = 1e-6) -> bool:
        return fe_norm <= self.bound() * (1.0 + rtol)


def classical_cross_check(stored_energy, F_total, F_p, F_e, Fp_prev, Fp_next, v, grad_Fp, dt, plastic, box) -> dict:
    """Compare the classical (F, F_p) bookkeeping against the hypoplastic ledger.

    The stored energy ``phi(F F_p^-1)`` is compared with ``phi(F_e)``, and the
    plastic dissipation is recomputed from ``L = (dF_p/dt + v.grad F_p) F_p^-1``
    estimated by a forward difference of consecutive ``F_p`` snapshots.
    """
    E_cl = float(box.integrate(stored_energy.phi(tn.matmul(F_total, tn.inv(F_p)))))
    E_hy = float(box.integrate(stored_energy.phi(F_e)))
    Fp_dot = (Fp_next - Fp_prev) / dt + np.einsum("...k,...ijk->...ij", v, grad_Fp)
    L_est = tn.dev(tn.matmul(Fp_dot, tn.inv(Fp_prev)))
    diss = float(box.integrate(tn.double_contract(plastic.zeta_delta_prime(L_est), L_est)))
    return dict(stored_classical=E_cl, stored_hypo=E_hy, plast_rate_classical=diss)


# ------------------------------------------------------------------ reports / IO
def apriori_report(rows: list[dict], det_floor: float, rtol: float = 1e-6) -> dict:
    """Summary of the monitored estimate proxies over a run history."""
    if not rows:
        return {}
    col = lambda k: np.array([r[k] for r in rows], dtype=float)  # noqa: E731
    resid = col("balance_residual")
    finite = resid[np.isfinite(resid)]
    gron = col("Fe_L2") <= col("gronwall_bound") * (1.0 + rtol)
    return dict(
        steps=len(rows),
        t_final=float(rows[-1]["t"]),
        min_det=float(col("min_det").min()),
        det_floor_ok=bool(col("min_det").min() >= det_floor),
        max_int_det_pow=float(col("int_det_pow").max()),
        max_Fe_W1r=float(col("Fe_W1r").max()),
        max_grad_e_Lp=float(col("grad_e_Lp").max()),
        max_Lp_W1q=float(col("Lp_W1q").max()),
        gronwall_ok=bool(gron.all()),
        gronwall_max_ratio=float((col("Fe_L2") / col("gronwall_bound")).max()),
        balance_residual_L1=float(np.sum(np.abs(finite) * col("dt")[: len(finite)])) if len(finite) else 0.0,
        balance_residual_max=float(np.abs(finite).max()) if len(finite) else 0.0,
        truncations=int(col("truncations").max()),
        max_iso_defect=_nanmax(col("iso_defect")),
        min_rate=float(min(col(f).min() for f in RATE_FIELDS)),
    )


def _nanmax(a: np.ndarray) -> float:
    a = a[np.isfinite(a)]
    return float(a.max()) if a.size else math.nan


def write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        wr.writeheader()
        for r in rows:
            wr.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def read_csv(path: Path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out.append({k: _parse(v) for k, v in r.items()})
    return out


def _parse(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def write_json(path: Path, data: dict) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=float) + "\n")


def ledger_columns() -> list[str]:
    return [f.name for f in fields(EnergyLedger)]


def ledger_row(entry: EnergyLedger) -> dict:
    return asdict(entry)
