"""Scenario configuration: YAML schema, shipped scenarios and data qualification.

A scenario file mirrors the :class:`Scenario` dataclass tree; unknown keys are
rejected.  Units are SI throughout (lengths m, stresses Pa, viscosities Pa s,
rates 1/s); see the README for the per-key table.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import tensor as tn
from .errors import AssumptionViolation
from .fields import LAYOUTS, WALLS, Box, constant_tensor, tensor_space
from .materials import VARIANTS, Material, PlasticPotential, StoredEnergy, ViscousPotential
from .momentum_solver import WallLoad

SHIPPED = ("rest", "shear_creep", "gravity_block", "rotation_check", "mms_transport", "variant_compare")
D = 2


@dataclass
class Geometry:
    Lx: float = 1.0  # m
    Ly: float = 1.0  # m
    nx: int = 24
    ny: int = 24
    kx: int | None = None  # velocity modes (default: 2/3 rule)
    ky: int | None = None
    lx: int | None = None  # tensor modes (default: 2/3 rule)
    ly: int | None = None
    layout: str = "parity"


@dataclass
class MaterialParams:
    shear_modulus: float = 1.0  # G [Pa]
    bulk_modulus: float = 1.0  # K [Pa]
    blowup_coeff: float = 0.01  # eps_phi [Pa]
    blowup_exponent: float = 9.0  # kappa_blowup [-]
    vol_viscosity: float = 1.0  # lambda_v [Pa s]
    shear_viscosity: float = 1.0  # mu_v [Pa s]
    yield_stress: float = 0.0  # sigma_y [Pa]
    plastic_viscosity: float = 2.0  # mu_p [Pa s]
    nu: float = 1e-3  # hyperviscosity [Pa s m^2]
    mu: float = 1e-3  # plastic gradient coefficient [Pa s^q m^q]

    def build(self, delta: float) -> Material:
        return Material(
            StoredEnergy(self.shear_modulus, self.bulk_modulus, self.blowup_coeff, self.blowup_exponent),
            ViscousPotential(self.vol_viscosity, self.shear_viscosity),
            PlasticPotential(self.yield_stress, self.plastic_viscosity, delta),
        )


@dataclass
class Exponents:
    p: float = 4.0
    q: float = 4.0
    r: float = 4.0


@dataclass
class RegularizationParams:
    eps: float = 1e-3  # truncation level
    k_inv: float = 1e-9  # weight 1/k of the r-Laplacian regularizer
    delta: float = 1e-6  # smoothing scale of zeta [1/s]


@dataclass
class WallSpec:
    traction: float = 0.0  # Pa
    profile: str = "uniform"
    ramp: float = 0.0  # s
    friction: float | None = None  # Pa s/m


@dataclass
class Loads:
    gravity: list = field(default_factory=lambda: [0.0, 0.0])  # m/s^2
    rho0: float = 1.0  # kg/m^3
    friction: float = 1.0  # kappa [Pa s/m]
    walls: dict = field(default_factory=dict)  # wall name -> WallSpec


@dataclass
class Initial:
    kind: str = "identity"  # identity | rotation | dilation | stretch
    amplitude: float = 0.0  # angle [rad] for rotation, relative size otherwise
    track_plastic: bool = True  # reconstruct F_p (starting from I)


@dataclass
class PrescribedVelocity:
    """Divergence-free velocity from the stream function A sin(pi x/Lx) sin(pi y/Ly)."""

    amplitude: float = 0.0  # m^2/s


@dataclass
class TimeParams:
    time_scale: float = 1.0  # T [s]
    dt: float = 1e-3  # s
    steps: int = 200
    output_every: int = 50
    checkpoint_every: int = 100
    certificate_every: int = 10


@dataclass
class SolverParams:
    tol_newton: float = 1e-8
    tol_flow: float = 1e-10
    max_iter: int = 60
    det_floor: float = 1e-3
    iso_tol: float = 1e-6
    cfl: float = 0.5
    certificate_tests: int = 20


@dataclass
class Scenario:
    name: str = "custom"
    geometry: Geometry = field(default_factory=Geometry)
    material: MaterialParams = field(default_factory=MaterialParams)
    exponents: Exponents = field(default_factory=Exponents)
    regularization: RegularizationParams = field(default_factory=RegularizationParams)
    loads: Loads = field(default_factory=Loads)
    initial: Initial = field(default_factory=Initial)
    time: TimeParams = field(default_factory=TimeParams)
    solver: SolverParams = field(default_factory=SolverParams)
    variant: str = "eshelby"
    prescribed_velocity: PrescribedVelocity | None = None
    seed: int = 0

    # ------------------------------------------------------------ construction
    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        return _build(cls, data or {}, "scenario")

    def to_dict(self) -> dict:
        return asdict(self)

    def copy(self) -> "Scenario":
        return copy.deepcopy(self)

    def box(self) -> Box:
        g = self.geometry
        return Box(g.Lx, g.Ly, g.nx, g.ny)

    def wall_loads(self) -> dict:
        return {name: WallLoad(**asdict(spec)) for name, spec in self.loads.walls.items()}

    def build_material(self) -> Material:
        return self.material.build(self.regularization.delta)

    def initial_Fe(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Nodal initial elastic strain."""
        ini, g = self.initial, self.geometry
        F = np.broadcast_to(np.eye(D), X.shape + (D, D)).copy()
        bump = np.cos(np.pi * X / g.Lx) * np.cos(np.pi * Y / g.Ly)
        if ini.kind == "identity":
            return F
        if ini.kind == "rotation":
            return np.broadcast_to(tn.rotation2(ini.amplitude), F.shape).copy()
        if ini.kind == "dilation":
            return (1.0 + ini.amplitude * bump)[..., None, None] * F
        if ini.kind == "stretch":
            lam = 1.0 + ini.amplitude * bump
            F[..., 0, 0], F[..., 1, 1] = lam, 1.0 / lam
            return F
        raise ValueError(f"unknown initial condition {ini.kind!r}")

    def with_overrides(self, dt=None, steps=None, resolution=None, variant=None, seed=None) -> "Scenario":
        sc = self.copy()
        if dt is not None:
            sc.time.dt = float(dt)
        if steps is not None:
            sc.time.steps = int(steps)
        if resolution is not None:
            kx, ky, lx, ly = resolution
            g = sc.geometry
            g.kx, g.ky, g.lx, g.ly = kx, ky, lx, ly
            # smallest even grids that keep quadratic products alias-free
            g.nx = _grid_for(max(kx, lx))
            g.ny = _grid_for(max(ky, ly))
        if variant is not None:
            sc.variant = variant
        if seed is not None:
            sc.seed = int(seed)
        return sc


def _grid_for(modes: int) -> int:
    n = (3 * modes + 2) // 2
    n += n % 2
    return max(n, 4)


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ValueError(f"{where}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    nested = {
        "geometry": Geometry,
        "material": MaterialParams,
        "exponents": Exponents,
        "regularization": RegularizationParams,
        "loads": Loads,
        "initial": Initial,
        "time": TimeParams,
        "solver": SolverParams,
        "prescribed_velocity": PrescribedVelocity,
    }
    for key, value in data.items():
        if key in nested and cls is Scenario:
            kwargs[key] = None if value is None else _build(nested[key], value, f"{where}.{key}")
        elif cls is Loads and key == "walls":
            kwargs[key] = {w: _build(WallSpec, spec or {}, f"{where}.walls.{w}") for w, spec in (value or {}).items()}
        else:
            kwargs[key] = value
    obj = cls(**kwargs)
    _coerce_numbers(obj)
    return obj


def _coerce_numbers(obj) -> None:
    """YAML reads ``1e-3`` as a string; coerce annotated numeric fields."""
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, str) and ("float" in str(f.type) or "int" in str(f.type)):
            setattr(obj, f.name, float(v) if "float" in str(f.type) else int(v))
        elif is_dataclass(v):
            _coerce_numbers(v)


# ------------------------------------------------------------------ loading
def shipped_path(name: str) -> Path:
    return Path(str(resources.files("hypoplast") / "configs" / f"{name}.yaml"))


def load(source: str | Path) -> Scenario:
    """Load a scenario from a YAML path or the name of a shipped scenario."""
    p = Path(source)
    if not p.exists() and str(source) in SHIPPED:
        p = shipped_path(str(source))
    with open(p) as fh:
        data = yaml.safe_load(fh)
    return Scenario.from_dict(data)


def dump(scenario: Scenario, path: Path) -> None:
    Path(path).write_text(yaml.safe_dump(scenario.to_dict(), sort_keys=False))


# ------------------------------------------------------------------ qualification
@dataclass
class ValidationReport:
    scenario: str
    checks: list  # (tag, passed, message)

    @property
    def ok(self) -> bool:
        return all(p for _, p, _ in self.checks)

    def failures(self) -> list:
        return [(t, m) for t, p, m in self.checks if not p]

    def lines(self) -> list[str]:
        return [f"{'PASS' if p else 'FAIL'} [{t}] {m}" for t, p, m in self.checks]


def validate(sc: Scenario, raise_on_failure: bool = False) -> ValidationReport:
    """Check the data qualification needed by the existence theory and the solvers."""
    checks = []

    def check(tag, cond, msg):
        checks.append((tag, bool(cond), msg))

    ex, m, reg, ld, sol = sc.exponents, sc.material, sc.regularization, sc.loads, sc.solver
    check("growth-exponents", min(ex.p, ex.q) > D, f"min(p, q) = {min(ex.p, ex.q):g} must exceed d = {D}")
    check("regularizer-exponent", ex.r > D, f"r = {ex.r:g} must exceed d = {D}")
    if ex.r > D:
        need = ex.r * D / (ex.r - D)
        check(
            "determinant-exponent",
            m.blowup_exponent > need,
            f"blow-up exponent {m.blowup_exponent:g} must exceed r d/(r - d) = {need:g}",
        )
    check("stored-energy", m.blowup_coeff > 0 and m.shear_modulus > 0 and m.bulk_modulus > 0,
          "G, K and the blow-up coefficient must be positive")
    check("viscous-potential", m.shear_viscosity > 0 and m.vol_viscosity + m.shear_viscosity > 0,
          "xi must be strictly convex (mu_v > 0, lambda_v + mu_v > 0)")
    check("plastic-potential", m.plastic_viscosity > 0 and m.yield_stress >= 0 and reg.delta > 0,
          "zeta needs mu_p > 0, sigma_y >= 0 and a positive smoothing scale")
    check("gradient-coefficients", m.nu > 0 and m.mu > 0, "nu and mu must be positive")
    frictions = [ld.friction] + [w.friction for w in ld.walls.values() if w.friction is not None]
    check("boundary-friction", min(frictions) > 0, "boundary friction kappa must be positive on every wall")
    check("walls", set(ld.walls) <= set(WALLS), f"wall names must be among {WALLS}")
    check("traction-profile", all(w.profile in ("uniform", "sine") for w in ld.walls.values()),
          "traction profiles are uniform or sine")
    check("density", ld.rho0 > sol.det_floor, f"rho0 = {ld.rho0:g} must exceed the floor {sol.det_floor:g}")
    check("regularization", reg.eps > 0 and reg.k_inv >= 0, "eps > 0 and 1/k >= 0")
    check("variant", sc.variant in VARIANTS, f"variant must be one of {VARIANTS}")
    check("layout", sc.geometry.layout in LAYOUTS, f"layout must be one of {LAYOUTS}")
    check("time", sc.time.dt > 0 and sc.time.steps >= 0, "dt > 0 and steps >= 0")

    try:
        box = sc.box()
        space = tensor_space(box, sc.geometry.lx, sc.geometry.ly, sc.geometry.layout)
        X, Y = box.mesh
        F0 = sc.initial_Fe(X, Y)
        c = space.project(F0)
        err = float(np.abs(space.evaluate(c) - F0).max())
        check("initial-representable", err < 1e-10, f"initial F_e representable in the tensor space (error {err:.1e})")
        J = tn.det(space.evaluate(c))
        check("initial-determinant", J.min() > sol.det_floor,
              f"min det F_e,0 = {J.min():.4g} must exceed the floor {sol.det_floor:g}")
        if sc.initial.track_plastic:
            cp = constant_tensor(space, np.eye(D))
            dp = float(np.abs(tn.det(space.evaluate(cp)) - 1.0).max())
            check("initial-isochoric", dp <= 1e-12, f"|det F_p,0 - 1| = {dp:.1e} <= 1e-12")
    except (ValueError, ArithmeticError) as exc:
        check("initial-data", False, str(exc))

    report = ValidationReport(sc.name, checks)
    if raise_on_failure and not report.ok:
        raise AssumptionViolation(report.failures())
    return report
