"""Exception types shared by the solvers and the run orchestration."""

from __future__ import annotations


class DeterminantCollapseError(ArithmeticError):
    """Raised when ``det F <= 0`` (constitutive layer) or below the floor (stepper)."""

    def __init__(self, det_min: float, where=None, floor: float | None = None):
        self.det_min = float(det_min)
        self.where = where
        self.floor = floor
        msg = f"determinant collapse: min det F = {self.det_min:.3e}"
        if floor is not None:
            msg += f" < floor {floor:.1e}"
        if where is not None:
            msg += f" at node {tuple(int(i) for i in where)}"
        super().__init__(msg)


class ConvergenceError(RuntimeError):
    """A nonlinear solve hit its iteration cap; carries the residual history."""

    def __init__(self, solver: str, history):
        self.solver = solver
        self.history = list(history)
        last = self.history[-1] if self.history else float("nan")
        super().__init__(
            f"{solver} did not converge in {len(self.history)} iterations (last residual {last:.3e});"
            " try a smaller time step"
        )


class CFLViolation(ValueError):
    """The advective step restriction is violated; carries the admissible step."""

    def __init__(self, dt: float, dt_max: float):
        self.dt = dt
        self.dt_max = dt_max
        super().__init__(f"time step {dt:.3e} exceeds the advective limit {dt_max:.3e}; reduce dt")


class AssumptionViolation(ValueError):
    """Scenario data violate a qualification assumption; ``failures`` lists (tag, message)."""

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("; ".join(f"[{tag}] {msg}" for tag, msg in self.failures))
