"""Trigonometric Galerkin spaces on the impermeable box ``[0, Lx] x [0, Ly]``.

Collocation/quadrature nodes are cell midpoints, so a product
``cos(i pi x/L) cos(i' pi x/L)`` (or the sine analogue) is integrated exactly
whenever ``i + i' < 2 n``.  With the default mode counts ``m = (2 n - 1) // 3``
this makes the Galerkin projection of any quadratic nonlinearity exact, which
is the 2/3 dealiasing rule.

Velocity: ``v_x`` in span sin(i pi x/Lx) cos(j pi y/Ly), ``v_y`` in
span cos(i pi x/Lx) sin(j pi y/Ly), so ``v.n = 0`` on every wall by
construction.

Tensor fields come in two layouts:

``parity`` (default)
    diagonal components cos.cos, off-diagonal components sin.sin.  This is the
    symmetry class that ``grad v`` itself belongs to, so every product in the
    transport and flow equations stays in the space.
``cosine``
    all components cos.cos (homogeneous Neumann for every component).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

COS = "c"
SIN = "s"
LAYOUTS = ("parity", "cosine")
WALLS = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class Box:
    Lx: float = 1.0
    Ly: float = 1.0
    nx: int = 24
    ny: int = 24

    def __post_init__(self):
        for n in (self.nx, self.ny):
            if n < 4 or n % 2:
                raise ValueError(f"collocation counts must be even and >= 4, got {self.nx}x{self.ny}")
        if self.Lx <= 0 or self.Ly <= 0:
            raise ValueError("box lengths must be positive")

    @cached_property
    def x(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.Lx / self.nx

    @cached_property
    def y(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.Ly / self.ny

    @property
    def wx(self) -> float:
        return self.Lx / self.nx

    @property
    def wy(self) -> float:
        return self.Ly / self.ny

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    @property
    def h(self) -> float:
        return min(self.wx, self.wy)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def default_modes(self) -> tuple[int, int]:
        return (2 * self.nx - 1) // 3, (2 * self.ny - 1) // 3

    def integrate(self, f) -> float | np.ndarray:
        """Midpoint-rule integral over the first two (grid) axes."""
        f = np.asarray(f, dtype=float)
        return f.sum(axis=(0, 1)) * self.wx * self.wy

    def norm_Lp(self, values, exponent: float) -> float:
        """``(int |f|^p)^(1/p)`` with ``|.|`` the Euclidean norm over trailing axes."""
        v = np.asarray(values, dtype=float)
        mag = np.sqrt((v.reshape(self.nx, self.ny, -1) ** 2).sum(axis=-1))
        if np.isinf(exponent):
            return float(mag.max())
        return float(self.integrate(mag**exponent) ** (1.0 / exponent))

    def wall_points(self, wall: str) -> tuple[np.ndarray, np.ndarray, float]:
        """Quadrature points (x, y) and weight along one wall."""
        if wall == "left":
            return np.zeros(self.ny), self.y, self.wy
        if wall == "right":
            return np.full(self.ny, self.Lx), self.y, self.wy
        if wall == "bottom":
            return self.x, np.zeros(self.nx), self.wx
        if wall == "top":
            return self.x, np.full(self.nx, self.Ly), self.wx
        raise ValueError(f"unknown wall {wall!r}")

    def wall_geometry(self, wall: str) -> tuple[np.ndarray, np.ndarray]:
        """Outward normal and unit tangent of a wall."""
        n = {"left": (-1.0, 0.0), "right": (1.0, 0.0), "bottom": (0.0, -1.0), "top": (0.0, 1.0)}[wall]
        t = (0.0, 1.0) if wall in ("left", "right") else (1.0, 0.0)
        return np.array(n), np.array(t)


@dataclass(frozen=True)
class Basis1D:
    """cos(i pi x/L), i = 0..m  or  sin(i pi x/L), i = 1..m."""

    kind: str
    m: int
    L: float

    @cached_property
    def modes(self) -> np.ndarray:
        return np.arange(0, self.m + 1) if self.kind == COS else np.arange(1, self.m + 1)

    @property
    def size(self) -> int:
        return len(self.modes)

    @cached_property
    def norms(self) -> np.ndarray:
        """``int_0^L b_i^2 dx``."""
        n = np.full(self.size, 0.5 * self.L)
        if self.kind == COS:
            n[0] = self.L
        return n

    def eval(self, x, deriv: int = 0) -> np.ndarray:
        """Matrix ``[b_i^(deriv)(x_m)]`` of shape (len(x), size)."""
        k = self.modes * np.pi / self.L
        arg = np.outer(np.atleast_1d(x), k) + 0.5 * np.pi * deriv
        f = np.cos(arg) if self.kind == COS else np.sin(arg)
        # exact values on the walls, where k x is a multiple of pi
        x = np.atleast_1d(x)
        shift = [np.cos, np.sin][self.kind == SIN](0.5 * np.pi * deriv)
        sign = (-1.0) ** self.modes
        f[x == 0.0] = np.round(shift)
        f[x == self.L] = np.round(shift) * sign
        return f * k**deriv


class ScalarSpace:
    """Tensor-product space ``span{bx_i(x) by_j(y)}`` sampled on a :class:`Box`."""

    def __init__(self, box: Box, bx: Basis1D, by: Basis1D):
        self.box, self.bx, self.by = box, bx, by
        self._cache: dict = {}

    @property
    def shape(self) -> tuple[int, int]:
        return self.bx.size, self.by.size

    @property
    def size(self) -> int:
        return self.bx.size * self.by.size

    def mat1d(self, axis: int, deriv: int) -> np.ndarray:
        key = ("1d", axis, deriv)
        if key not in self._cache:
            b, pts = (self.bx, self.box.x) if axis == 0 else (self.by, self.box.y)
            self._cache[key] = b.eval(pts, deriv)
        return self._cache[key]

    @cached_property
    def norms(self) -> np.ndarray:
        return np.outer(self.bx.norms, self.by.norms)

    def evaluate(self, c, dx: int = 0, dy: int = 0) -> np.ndarray:
        c = np.asarray(c, dtype=float).reshape(self.shape)
        return self.mat1d(0, dx) @ c @ self.mat1d(1, dy).T

    def evaluate_at(self, c, x, y, dx: int = 0, dy: int = 0) -> np.ndarray:
        """Values at scattered points (x[i], y[i])."""
        c = np.asarray(c, dtype=float).reshape(self.shape)
        return np.einsum("pi,ij,pj->p", self.bx.eval(x, dx), c, self.by.eval(y, dy))

    def test_integrals(self, f) -> np.ndarray:
        """``int f b_ij dx`` for nodal ``f`` of shape (nx, ny)."""
        return self.box.wx * self.box.wy * (self.mat1d(0, 0).T @ f @ self.mat1d(1, 0))

    def test_integrals_grad(self, fx, fy) -> np.ndarray:
        """``int (fx d_x b_ij + fy d_y b_ij) dx``."""
        w = self.box.wx * self.box.wy
        return w * (self.mat1d(0, 1).T @ fx @ self.mat1d(1, 0) + self.mat1d(0, 0).T @ fy @ self.mat1d(1, 1))

    def project(self, f) -> np.ndarray:
        return (self.test_integrals(f) / self.norms).ravel()

    def matrix(self, dx: int = 0, dy: int = 0) -> np.ndarray:
        """Dense nodal evaluation matrix, rows ordered x-major / y-fastest."""
        key = ("kron", dx, dy)
        if key not in self._cache:
            self._cache[key] = np.kron(self.mat1d(0, dx), self.mat1d(1, dy))
        return self._cache[key]

    def wall_matrix(self, wall: str, dx: int = 0, dy: int = 0) -> np.ndarray:
        x, y, _ = self.box.wall_points(wall)
        Bx, By = self.bx.eval(x, dx), self.by.eval(y, dy)
        return np.einsum("pi,pj->pij", Bx, By).reshape(len(x), -1)


@dataclass
class Block:
    space: ScalarSpace
    pattern: np.ndarray  # value-shaped array the scalar multiplies
    label: str

    @property
    def weight(self) -> float:
        return float((self.pattern**2).sum())


class FieldSpace:
    """Direct sum of scalar blocks, each multiplying a fixed value pattern.

    Blocks have Frobenius-orthogonal patterns, so the L2 projection decouples
    block by block.
    """

    def __init__(self, box: Box, blocks: list[Block], value_shape: tuple[int, ...], name: str):
        self.box = box
        self.blocks = blocks
        self.value_shape = value_shape
        self.name = name
        sizes = [b.space.size for b in blocks]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.ndof = int(self.offsets[-1])

    def split(self, c):
        c = np.asarray(c, dtype=float)
        return [c[self.offsets[i] : self.offsets[i + 1]] for i in range(len(self.blocks))]

    def zeros(self) -> np.ndarray:
        return np.zeros(self.ndof)

    def evaluate(self, c, dx: int = 0, dy: int = 0) -> np.ndarray:
        out = np.zeros((self.box.nx, self.box.ny) + self.value_shape)
        for blk, cb in zip(self.blocks, self.split(c)):
            out += blk.space.evaluate(cb, dx, dy)[(...,) + (None,) * len(self.value_shape)] * blk.pattern
        return out

    def grad(self, c) -> np.ndarray:
        """Nodal gradient with the derivative direction as the last axis."""
        return np.stack([self.evaluate(c, 1, 0), self.evaluate(c, 0, 1)], axis=-1)

    def hessian(self, c) -> np.ndarray:
        dxx, dxy, dyy = self.evaluate(c, 2, 0), self.evaluate(c, 1, 1), self.evaluate(c, 0, 2)
        return np.stack([np.stack([dxx, dxy], -1), np.stack([dxy, dyy], -1)], -1)

    def evaluate_at(self, c, x, y, dx: int = 0, dy: int = 0) -> np.ndarray:
        out = np.zeros((len(x),) + self.value_shape)
        for blk, cb in zip(self.blocks, self.split(c)):
            out += blk.space.evaluate_at(cb, x, y, dx, dy)[(...,) + (None,) * len(self.value_shape)] * blk.pattern
        return out

    def _contract(self, values, pattern) -> np.ndarray:
        axes = tuple(range(2, 2 + len(self.value_shape)))
        return (np.asarray(values) * pattern).sum(axis=axes)

    def test_integrals(self, values) -> np.ndarray:
        """``int values : (pattern b) dx`` for every basis function."""
        return np.concatenate(
            [blk.space.test_integrals(self._contract(values, blk.pattern)).ravel() for blk in self.blocks]
        )

    def test_integrals_grad(self, flux) -> np.ndarray:
        """``int flux : grad(pattern b) dx`` with flux shaped (nx, ny, *value_shape, 2)."""
        out = []
        for blk in self.blocks:
            fx = self._contract(flux[..., 0], blk.pattern)
            fy = self._contract(flux[..., 1], blk.pattern)
            out.append(blk.space.test_integrals_grad(fx, fy).ravel())
        return np.concatenate(out)

    @cached_property
    def mass_diag(self) -> np.ndarray:
        return np.concatenate([(blk.space.norms * blk.weight).ravel() for blk in self.blocks])

    def project(self, values) -> np.ndarray:
        """Discrete L2 projection of nodal values onto the space."""
        return self.test_integrals(values) / self.mass_diag

    def inner(self, ca, cb) -> float:
        return float(np.sum(self.mass_diag * np.asarray(ca) * np.asarray(cb)))

    def component_matrix(self, index: tuple[int, ...], dx: int = 0, dy: int = 0) -> np.ndarray:
        """Dense map from coefficients to nodal values of one value component."""
        cols = []
        for blk in self.blocks:
            p = blk.pattern[index]
            if p == 0.0:
                cols.append(np.zeros((self.box.nx * self.box.ny, blk.space.size)))
            else:
                cols.append(p * blk.space.matrix(dx, dy))
        return np.hstack(cols)

    def wall_component_matrix(self, wall: str, index: tuple[int, ...], dx: int = 0, dy: int = 0) -> np.ndarray:
        cols = []
        for blk in self.blocks:
            M = blk.space.wall_matrix(wall, dx, dy)
            cols.append(blk.pattern[index] * M)
        return np.hstack(cols)

    def restrict(self, c, other: "FieldSpace") -> np.ndarray:
        """Map coefficients into a nested space by truncation / zero padding."""
        out = other.zeros()
        for (blk_a, ca), (blk_b, cb_slice) in zip(
            zip(self.blocks, self.split(c)), zip(other.blocks, range(len(other.blocks)))
        ):
            if blk_a.label != blk_b.label:
                raise ValueError("spaces are not of the same family")
            A = ca.reshape(blk_a.space.shape)
            B = np.zeros(blk_b.space.shape)
            mx = min(A.shape[0], B.shape[0])
            my = min(A.shape[1], B.shape[1])
            B[:mx, :my] = A[:mx, :my]
            out[other.offsets[cb_slice] : other.offsets[cb_slice + 1]] = B.ravel()
        return out


def _basis(kind: str, m: int, L: float) -> Basis1D:
    return Basis1D(kind, m, L)


def velocity_space(box: Box, kx: int | None = None, ky: int | None = None) -> FieldSpace:
    dkx, dky = box.default_modes()
    kx = dkx if kx is None else kx
    ky = dky if ky is None else ky
    vx = ScalarSpace(box, _basis(SIN, kx, box.Lx), _basis(COS, ky, box.Ly))
    vy = ScalarSpace(box, _basis(COS, kx, box.Lx), _basis(SIN, ky, box.Ly))
    blocks = [Block(vx, np.array([1.0, 0.0]), "vx"), Block(vy, np.array([0.0, 1.0]), "vy")]
    space = FieldSpace(box, blocks, (2,), "velocity")
    space.modes = (kx, ky)
    return space


def _unit(i: int, j: int) -> np.ndarray:
    e = np.zeros((2, 2))
    e[i, j] = 1.0
    return e


def tensor_space(
    box: Box,
    lx: int | None = None,
    ly: int | None = None,
    layout: str = "parity",
    tracefree: bool = False,
) -> FieldSpace:
    """d x d (d = 2) tensor fields; ``tracefree`` spans only deviatoric values."""
    if layout not in LAYOUTS:
        raise ValueError(f"layout must be one of {LAYOUTS}")
    dlx, dly = box.default_modes()
    lx = dlx if lx is None else lx
    ly = dly if ly is None else ly

    def space(kind):
        return ScalarSpace(box, _basis(kind, lx, box.Lx), _basis(kind, ly, box.Ly))

    off = SIN if layout == "parity" else COS
    if tracefree:
        blocks = [
            Block(space(COS), np.diag([1.0, -1.0]), "dev_diag"),
            Block(space(off), _unit(0, 1), "xy"),
            Block(space(off), _unit(1, 0), "yx"),
        ]
    else:
        blocks = [
            Block(space(COS), _unit(0, 0), "xx"),
            Block(space(off), _unit(0, 1), "xy"),
            Block(space(off), _unit(1, 0), "yx"),
            Block(space(COS), _unit(1, 1), "yy"),
        ]
    fs = FieldSpace(box, blocks, (2, 2), "tracefree" if tracefree else "tensor")
    fs.modes = (lx, ly)
    fs.layout = layout
    return fs


def constant_tensor(space: FieldSpace, value) -> np.ndarray:
    """Coefficients of a spatially uniform tensor (must be representable)."""
    vals = np.broadcast_to(np.asarray(value, dtype=float), (space.box.nx, space.box.ny, 2, 2))
    c = space.project(vals)
    if np.max(np.abs(space.evaluate(c) - vals)) > 1e-12 * (1.0 + np.max(np.abs(vals))):
        raise ValueError(f"uniform tensor {np.asarray(value).tolist()} is not representable in this layout")
    return c


def identity(space: FieldSpace) -> np.ndarray:
    return constant_tensor(space, np.eye(2))


# ---------------------------------------------------------------------- snapshots
SNAPSHOT_MAGIC = "hypoplast-snapshot 1"


def write_snapshot(path, box: Box, arrays: dict, time: float, units: dict | None = None) -> None:
    """Write nodal arrays as raw little-endian float64 after a text header.

    Each array has leading shape (nx, ny) and is stored row-major, so the
    y index varies fastest over the grid and component indices fastest of all.
    The header ends with a line ``end`` followed by the binary payload.
    """
    units = units or {}
    lines = [
        SNAPSHOT_MAGIC,
        f"time {time!r}",
        f"box {box.Lx!r} {box.Ly!r} {box.nx} {box.ny}",
        "layout row-major y-fastest float64-le",
    ]
    offset = 0
    payload = []
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        if a.shape[:2] != (box.nx, box.ny):
            raise ValueError(f"array {name!r} has grid shape {a.shape[:2]}, expected {(box.nx, box.ny)}")
        shape = " ".join(str(s) for s in a.shape)
        lines.append(f"field {name} {units.get(name, '1')} {offset} {shape}")
        offset += a.nbytes
        payload.append(a.tobytes())
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for chunk in payload:
            fh.write(chunk)


def read_snapshot(path) -> tuple[dict, dict]:
    """Inverse of :func:`write_snapshot`; returns (metadata, arrays)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    end = raw.index(b"\nend\n") + len(b"\nend\n")
    header = raw[:end].decode("ascii").splitlines()
    if header[0] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path} is not a snapshot file")
    meta: dict = {"fields": {}}
    arrays = {}
    for line in header[1:-1]:
        key, *rest = line.split()
        if key == "time":
            meta["time"] = float(rest[0])
        elif key == "box":
            meta["box"] = Box(float(rest[0]), float(rest[1]), int(rest[2]), int(rest[3]))
        elif key == "layout":
            meta["layout"] = " ".join(rest)
        elif key == "field":
            name, unit, off = rest[0], rest[1], int(rest[2])
            shape = tuple(int(s) for s in rest[3:])
            count = int(np.prod(shape))
            arrays[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=end + off).reshape(shape).copy()
            meta["fields"][name] = unit
    return meta, arrays
