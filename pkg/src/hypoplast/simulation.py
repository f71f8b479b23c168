"""Run orchestration: the staggered global step, monitors, persistence, restart.

One accepted step ``n -> n+1``:

1. momentum solve for ``v`` at ``F_e^n`` (warm-started from ``v^{n-1}``),
2. flow-rule solve for ``L_p`` at ``F_e^n``,
3. ledger and monitors at step ``n``,
4. SSP-RK2 transport of ``F_e`` with ``(v, L_p)`` frozen,
5. optional reconstruction of ``F_p`` and of the total deformation ``F``.

A scenario with ``prescribed_velocity`` skips steps 1 and 2 (``L_p = 0``),
which is how pure transport verification runs are set up.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from . import tensor as tn
from .errors import CFLViolation, ConvergenceError, DeterminantCollapseError
from .fields import constant_tensor, read_snapshot, tensor_space, velocity_space, write_snapshot
from .momentum_solver import MomentumProblem, TruncationCounters, elastic_stress
from .plastic_flow import FlowProblem
from .scenarios import Scenario, dump
from .transport import Kinematics, Transport, TransportState

RUN_ERRORS = (ConvergenceError, DeterminantCollapseError, CFLViolation)


@dataclass
class RunResult:
    rows: list
    summary: dict
    state: TransportState
    status: str = "ok"
    failure: dict | None = None
    extra: dict = field(default_factory=dict)


class Simulation:
    def __init__(self, scenario: Scenario):
        self.sc = sc = scenario
        g, m, ex, reg, ld, sol = sc.geometry, sc.material, sc.exponents, sc.regularization, sc.loads, sc.solver
        self.box = box = sc.box()
        self.vspace = velocity_space(box, g.kx, g.ky)
        self.tspace = tensor_space(box, g.lx, g.ly, g.layout)
        self.lspace = tensor_space(box, g.lx, g.ly, g.layout, tracefree=True)
        self.material = sc.build_material()
        self.counters = TruncationCounters()
        self.momentum = MomentumProblem(
            self.vspace,
            self.material,
            nu=m.nu,
            p_exp=ex.p,
            kappa_friction=ld.friction,
            walls=sc.wall_loads(),
            gravity=tuple(float(x) for x in ld.gravity),
            rho0=ld.rho0,
            eps_trunc=reg.eps,
            tol=sol.tol_newton,
            max_iter=sol.max_iter,
        )
        self.momentum.counters = self.counters
        self.flow = FlowProblem(
            self.lspace,
            self.material,
            mu_grad=m.mu,
            q_exp=ex.q,
            variant=sc.variant,
            eps_trunc=reg.eps,
            tol=sol.tol_flow,
            max_iter=sol.max_iter,
            counters=self.counters,
        )
        self.transport = Transport(
            self.tspace, k_reg=reg.k_inv, r_exp=ex.r, det_floor=sol.det_floor, iso_tol=sol.iso_tol,
            cfl=sol.cfl, variant=sc.variant,
        )
        # total deformation obeys the plain transport law dF/dt = (grad v) F
        self.total = Transport(self.tspace, det_floor=-np.inf, cfl=sol.cfl)
        self.evaluator = dg.LedgerEvaluator(self.momentum, self.flow, self.transport)
        self.v_prescribed = None
        if sc.prescribed_velocity is not None:
            self.v_prescribed = self.stream_velocity(sc.prescribed_velocity.amplitude)

    # ------------------------------------------------------------------ setup
    def stream_velocity(self, amplitude: float) -> np.ndarray:
        """Coefficients of the curl of ``A sin(pi x/Lx) sin(pi y/Ly)``."""
        box = self.box
        X, Y = box.mesh
        ax, ay = np.pi / box.Lx, np.pi / box.Ly
        v = np.stack(
            [amplitude * ay * np.sin(ax * X) * np.cos(ay * Y), -amplitude * ax * np.cos(ax * X) * np.sin(ay * Y)], -1
        )
        return self.vspace.project(v)

    def initial_state(self) -> TransportState:
        X, Y = self.box.mesh
        cF = self.tspace.project(self.sc.initial_Fe(X, Y))
        cFp = constant_tensor(self.tspace, np.eye(2)) if self.sc.initial.track_plastic else None
        return TransportState(F_e=cF, t=0.0, F_p=cFp, step=0)

    def _fresh_context(self, state: TransportState) -> dict:
        F0 = self.tspace.evaluate(state.F_e)
        return dict(
            v=self.vspace.zeros(),
            L=self.lspace.zeros(),
            F_total=state.F_e.copy(),
            gronwall_exponent=0.0,
            fe0_norm=self.box.norm_Lp(F0, 2),
            int_det0=float(self.box.integrate(tn.det(F0))),
            det_drift=0.0,
            counters=[0, 0, 0, 0],
        )

    # ------------------------------------------------------------------ checkpoints
    def save_checkpoint(self, path: Path, state: TransportState, ctx: dict) -> None:
        arrays = dict(
            F_e=state.F_e,
            F_p=state.F_p if state.F_p is not None else np.zeros(0),
            v=ctx["v"],
            L=ctx["L"],
            F_total=ctx["F_total"],
        )
        meta = dict(
            t=state.t,
            step=state.step,
            has_fp=state.F_p is not None,
            gronwall_exponent=ctx["gronwall_exponent"],
            fe0_norm=ctx["fe0_norm"],
            int_det0=ctx["int_det0"],
            det_drift=ctx["det_drift"],
            counters=list(self.counters.as_dict().values()),
            scenario=self.sc.to_dict(),
        )
        np.savez(path, meta=np.array(json.dumps(meta)), **arrays)

    def load_checkpoint(self, path: Path) -> tuple[TransportState, dict]:
        with np.load(path) as data:
            meta = json.loads(str(data["meta"]))
            arrays = {k: data[k].copy() for k in data.files if k != "meta"}
        state = TransportState(
            F_e=arrays["F_e"], t=meta["t"], F_p=arrays["F_p"] if meta["has_fp"] else None, step=meta["step"]
        )
        ctx = dict(
            v=arrays["v"],
            L=arrays["L"],
            F_total=arrays["F_total"],
            gronwall_exponent=meta["gronwall_exponent"],
            fe0_norm=meta["fe0_norm"],
            int_det0=meta["int_det0"],
            det_drift=meta["det_drift"],
        )
        k, p, d, e = meta["counters"]
        self.counters.kirchhoff, self.counters.pressure, self.counters.density, self.counters.eshelby = k, p, d, e
        return state, ctx

    # ------------------------------------------------------------------ one step
    def solve_rates(self, state: TransportState, ctx: dict):
        if self.v_prescribed is not None:
            return self.v_prescribed, self.lspace.zeros(), 0, 0
        F = self.tspace.evaluate(state.F_e)
        mres = self.momentum.solve(F, ctx["v"], state.t)
        fres = self.flow.solve(F, ctx["L"])
        return mres.v, fres.L, mres.iterations, fres.iterations

    def averages(self, F, cv) -> dict:
        """Volume averages of the Cauchy stress (elastic + viscous) and strain rate."""
        T = elastic_stress(self.material, F, self.sc.regularization.eps)
        gv = self.vspace.grad(cv)
        e = tn.sym(gv)
        T = T + self.material.viscous.xi_prime(e)
        A = self.box.area
        Ta = self.box.integrate(T) / A
        ea = self.box.integrate(e) / A
        return dict(T_xx=Ta[0, 0], T_xy=Ta[0, 1], T_yx=Ta[1, 0], T_yy=Ta[1, 1], e_xx=ea[0, 0], e_xy=ea[0, 1], e_yy=ea[1, 1])

    def step(self, state: TransportState, ctx: dict, dt: float) -> tuple[TransportState, dict]:
        sc, box = self.sc, self.box
        n = state.step
        F = self.tspace.evaluate(state.F_e)
        cv, cL, it_v, it_L = self.solve_rates(state, ctx)
        ctx["v"], ctx["L"] = cv, cL
        kin = Kinematics.from_coefficients(self.vspace, cv, self.lspace, cL)

        entry = self.evaluator.evaluate(n, state.t, state.F_e, cv, cL)
        row = dict(step=n, t=state.t, dt=dt)
        mon = dg.fe_monitors(self.tspace, state.F_e, self.material.stored.blowup_exponent, sc.exponents.r)
        rates = dg.rate_monitors(self.vspace, cv, self.lspace, cL, sc.exponents.p, sc.exponents.q)

        gron = dg.GronwallTracker(ctx["fe0_norm"], ctx["gronwall_exponent"])
        gronwall_bound = gron.bound()
        gron.advance(rates["grad_v_inf"], rates["Lp_inf"], dt)
        ctx["gronwall_exponent"] = gron.exponent

        D = self.flow.driving_stress(F, counted=False)
        slack = np.nan
        every = sc.time.certificate_every
        if self.v_prescribed is None and every > 0 and n % every == 0:
            rng = np.random.default_rng([sc.seed, n])
            slack = self.flow.certificate(cL, D, rng, sc.solver.certificate_tests)

        reg_share = 0.0
        if self.transport.k_reg > 0:
            reg = self.transport.regularizer(state.F_e)
            full = reg + self.transport.transport_part(state.F_e, kin)
            nf = np.sqrt(self.tspace.inner(full, full))
            reg_share = float(np.sqrt(self.tspace.inner(reg, reg)) / nf) if nf > 0 else 0.0

        # ---- transport
        new = self.transport.step(state, kin, dt)
        F_new = self.tspace.evaluate(new.F_e)
        iso = np.nan
        cross = {}
        if state.F_p is not None:
            cFp, iso = self.transport.reconstruct_Fp_step(state.F_p, kin, dt, state.F_e, new.F_e)
            kin0 = replace(kin, L=np.zeros_like(kin.L))
            cFt = self.total.step(TransportState(ctx["F_total"]), kin0, dt).F_e
            Fp_old = self.tspace.evaluate(state.F_p)
            cross = dg.classical_cross_check(
                self.material.stored,
                self.tspace.evaluate(ctx["F_total"]),
                Fp_old,
                F,
                Fp_old,
                self.tspace.evaluate(cFp),
                kin.v,
                self.tspace.grad(state.F_p),
                dt,
                self.material.plastic,
                box,
            )
            ctx["F_total"] = cFt
            new = replace(new, F_p=cFp)

        # determinant transport law residual (forward difference against the exact rate)
        J0, J1 = tn.det(F), tn.det(F_new)
        gradF = self.tspace.grad(state.F_e)
        gradJ = np.einsum("...ij,...ijk->...k", tn.cof(F), gradF)
        div_v = np.trace(kin.grad_v, axis1=-2, axis2=-1)
        law = (J1 - J0) / dt + (kin.v * gradJ).sum(-1) - J0 * div_v
        ctx["det_drift"] += dt * float(box.integrate(np.abs(law))) / ctx["int_det0"]

        entry.close(self.evaluator.stored(F_new), dt)
        row.update(dg.ledger_row(entry))
        row.update(mon)
        row.update(rates)
        row.update(self.averages(F, cv))
        row.update(
            gronwall_bound=gronwall_bound,
            gronwall_ok=int(mon["Fe_L2"] <= gronwall_bound * (1.0 + 1e-6)),
            int_det=float(box.integrate(J0)),
            det_drift=ctx["det_drift"],
            max_driving=float(tn.norm(D).max()),
            vi_slack=slack,
            reg_share=reg_share,
            iso_defect=iso,
            stored_classical=cross.get("stored_classical", np.nan),
            plast_rate_classical=cross.get("plast_rate_classical", np.nan),
            truncations=self.counters.total(),
            newton_v=it_v,
            newton_L=it_L,
            yield_fraction=float(np.mean(tn.norm(kin.L) > 10.0 * self.material.plastic.delta)),
        )
        row.pop("step", None)
        row = dict(step=n, **row)
        return new, row

    # ------------------------------------------------------------------ run
    def run(self, out_dir: Path | None = None, restart: Path | None = None, steps: int | None = None) -> RunResult:
        sc = self.sc
        total_steps = sc.time.steps if steps is None else steps
        dt = sc.time.dt
        if restart is not None:
            state, ctx = self.load_checkpoint(restart)
        else:
            state = self.initial_state()
            ctx = self._fresh_context(state)
        out = Path(out_dir) if out_dir is not None else None
        if out is not None:
            (out / "snapshots").mkdir(parents=True, exist_ok=True)
            (out / "checkpoints").mkdir(parents=True, exist_ok=True)
            dump(sc, out / "scenario.yaml")

        rows: list = []
        failure = None
        t_start = time.perf_counter()
        try:
            while state.step < total_steps:
                n = state.step
                if out is not None and sc.time.output_every > 0 and n % sc.time.output_every == 0:
                    self.write_snapshot(out / "snapshots" / f"snap_{n:06d}.bin", state, ctx)
                state, row = self.step(state, ctx, dt)
                rows.append(row)
                if out is not None and sc.time.checkpoint_every > 0 and state.step % sc.time.checkpoint_every == 0:
                    self.save_checkpoint(out / "checkpoints" / f"ckpt_{state.step:06d}.npz", state, ctx)
        except RUN_ERRORS as exc:
            failure = dict(
                status="failed",
                error=type(exc).__name__,
                message=str(exc),
                step=state.step,
                t=state.t,
                details={k: v for k, v in vars(exc).items() if isinstance(v, (int, float, str, list))},
            )
        wall = time.perf_counter() - t_start

        summary = dg.apriori_report(rows, sc.solver.det_floor)
        final = dg.fe_monitors(self.tspace, state.F_e, self.material.stored.blowup_exponent, sc.exponents.r)
        summary.update(
            scenario=sc.name,
            variant=sc.variant,
            status="ok" if failure is None else "failed",
            final_step=state.step,
            final_time=state.t,
            final_min_det=final["min_det"],
            final_Fe_L2=final["Fe_L2"],
            truncation_counters=self.counters.as_dict(),
            iso_ok=not summary.get("max_iso_defect", 0.0) > sc.solver.iso_tol,
            wall_time_s=wall,
        )
        if out is not None:
            dg.write_csv(out / "series.csv", rows)
            if failure is None:
                self.write_snapshot(out / "snapshots" / f"snap_{state.step:06d}.bin", state, ctx)
                self.save_checkpoint(out / "checkpoints" / f"ckpt_{state.step:06d}.npz", state, ctx)
            else:
                dg.write_json(out / "failure.json", failure)
            dg.write_json(out / "summary.json", summary)
        return RunResult(rows, summary, state, summary["status"], failure)

    # ------------------------------------------------------------------ snapshots
    def write_snapshot(self, path: Path, state: TransportState, ctx: dict) -> None:
        arrays = {
            "F_e": self.tspace.evaluate(state.F_e),
            "v": self.vspace.evaluate(ctx["v"]),
            "L_p": self.lspace.evaluate(ctx["L"]),
        }
        units = {"F_e": "1", "v": "m/s", "L_p": "1/s"}
        if state.F_p is not None:
            arrays["F_p"] = self.tspace.evaluate(state.F_p)
            units["F_p"] = "1"
        write_snapshot(path, self.box, arrays, state.t, units)


def latest_checkpoint(out_dir: Path) -> Path | None:
    ckpts = sorted(Path(out_dir, "checkpoints").glob("ckpt_*.npz"))
    return ckpts[-1] if ckpts else None


def load_snapshot(path: Path):
    return read_snapshot(path)
