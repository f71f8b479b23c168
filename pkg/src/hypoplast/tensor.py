"""Small dense matrix algebra on batches of d x d matrices.

Every function accepts arrays of shape ``(..., d, d)`` so the same code serves
single matrices and whole collocation grids.
"""

from __future__ import annotations

import numpy as np


class SingularMatrixError(ArithmeticError):
    """Raised when an inverse is requested for a (numerically) singular matrix."""

    def __init__(self, det):
        self.det = det
        super().__init__(f"matrix is singular (det = {np.min(np.abs(det)):.3e})")


def _check_square(a: np.ndarray) -> int:
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected (..., d, d) array, got shape {a.shape}")
    return a.shape[-1]


def double_contract(a, b):
    """Return ``sum_ij a_ij b_ij`` over the trailing two axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-2:] != b.shape[-2:]:
        raise ValueError(f"dimension mismatch: {a.shape[-2:]} vs {b.shape[-2:]}")
    return np.einsum("...ij,...ij->...", a, b)


def tr(a):
    return np.trace(np.asarray(a, dtype=float), axis1=-2, axis2=-1)


def transpose(a):
    return np.swapaxes(a, -1, -2)


def sym(a):
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + transpose(a))


def skew(a):
    a = np.asarray(a, dtype=float)
    return 0.5 * (a - transpose(a))


def dev(a):
    """Trace-free part ``a - tr(a)/d I``."""
    a = np.asarray(a, dtype=float)
    d = _check_square(a)
    return a - (tr(a) / d)[..., None, None] * np.eye(d)


def norm(a):
    """Frobenius norm over the trailing two axes."""
    return np.sqrt(double_contract(a, a))


def det(a):
    a = np.asarray(a, dtype=float)
    d = _check_square(a)
    if d == 2:
        return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    if d == 3:
        return np.einsum("...i,...i->...", a[..., 0, :], np.cross(a[..., 1, :], a[..., 2, :]))
    return np.linalg.det(a)


def cof(a):
    """Cofactor matrix from the explicit adjugate formula.

    Defined for singular arguments too; equals ``det(a) a^{-T}`` whenever a is
    invertible.
    """
    a = np.asarray(a, dtype=float)
    d = _check_square(a)
    out = np.empty_like(a)
    if d == 2:
        out[..., 0, 0] = a[..., 1, 1]
        out[..., 0, 1] = -a[..., 1, 0]
        out[..., 1, 0] = -a[..., 0, 1]
        out[..., 1, 1] = a[..., 0, 0]
        return out
    if d == 3:
        # rows of cof are cross products of the other two rows
        out[..., 0, :] = np.cross(a[..., 1, :], a[..., 2, :])
        out[..., 1, :] = np.cross(a[..., 2, :], a[..., 0, :])
        out[..., 2, :] = np.cross(a[..., 0, :], a[..., 1, :])
        return out
    raise ValueError("cofactor implemented for d = 2, 3 only")


def inv(a, rtol: float = 1e-14):
    """Inverse via the adjugate; raises :class:`SingularMatrixError` if det ~ 0."""
    a = np.asarray(a, dtype=float)
    da = det(a)
    scale = np.max(np.abs(a), axis=(-2, -1)) ** a.shape[-1]
    if np.any(np.abs(da) <= rtol * np.maximum(scale, np.finfo(float).tiny)):
        raise SingularMatrixError(da)
    return transpose(cof(a)) / da[..., None, None]


def det_cof_inv(a):
    """Return ``(det, cof, inv)`` for a matrix or batch of matrices."""
    a = np.asarray(a, dtype=float)
    return det(a), cof(a), inv(a)


def matmul(a, b):
    return np.einsum("...ij,...jk->...ik", a, b)


def rotation2(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def random_rotation(rng: np.random.Generator, d: int) -> np.ndarray:
    """Haar-distributed proper rotation."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q

