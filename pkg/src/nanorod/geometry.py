"""Discrete gradients, nearest-rotation distances, rotation utilities.

Cell configurations are 3x8 matrices whose columns are the (hatted) corner
positions in the order of ``lattice.CELL_DIRECTIONS``.  The discrete gradient
subtracts the column mean; the rigid reference gradient is the direction
matrix itself, whose squared Frobenius norm is 6.
"""

from __future__ import annotations

import numpy as np

from .errors import NonRotation, NonSkewInput
from .lattice import CELL_DIRECTIONS

_REF_NORM_SQ = 6.0  # |reference gradient|_F^2 = sum |z_i|^2 = 8 * 3/4


def discrete_gradient(ybar: np.ndarray) -> np.ndarray:
    """Column-mean-free part of a 3x8 cell configuration (batched on leading axes)."""
    ybar = np.asarray(ybar, dtype=float)
    return ybar - ybar.mean(axis=-1, keepdims=True)


def _branch_distances(G):
    """Squared distances of mean-free G to the rotated and reflected reference gradients."""
    M = G @ CELL_DIRECTIONS.T
    s = np.linalg.svd(M, compute_uv=False)
    det = np.linalg.det(M)
    sgn = np.where(det >= 0.0, 1.0, -1.0)
    norm_sq = np.sum(G * G, axis=(-2, -1))
    rot = norm_sq + _REF_NORM_SQ - 2.0 * (s[..., 0] + s[..., 1] + sgn * s[..., 2])
    refl = norm_sq + _REF_NORM_SQ - 2.0 * (s[..., 0] + s[..., 1] - sgn * s[..., 2])
    return np.maximum(rot, 0.0), np.maximum(refl, 0.0)


def rigid_distance(G: np.ndarray) -> np.ndarray:
    """Frobenius distance of a mean-free 3x8 matrix to the rotated reference gradients.

    Solved in closed form by orthogonal Procrustes with determinant
    correction.  Batched over leading axes.
    """
    rot, _ = _branch_distances(np.asarray(G, dtype=float))
    return np.sqrt(rot)


def reflection_distance(G: np.ndarray) -> np.ndarray:
    """Distance to the orientation-reversing (reflected) reference gradients."""
    _, refl = _branch_distances(np.asarray(G, dtype=float))
    return np.sqrt(refl)


def nearest_rotation(M: np.ndarray) -> np.ndarray:
    """Rotation closest to a 3x3 matrix (SVD with determinant correction)."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    d = np.sign(np.linalg.det(U @ Vt))
    return U @ np.diag([1.0, 1.0, d]) @ Vt


def require_rotation(R: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise NonRotation("expected a finite 3x3 matrix")
    if np.linalg.norm(R.T @ R - np.eye(3)) > tol or np.linalg.det(R) < 0:
        raise NonRotation("matrix is not a rotation within tolerance")
    return R


def require_skew(A: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.shape != (3, 3):
        raise NonSkewInput("expected a 3x3 matrix")
    if np.linalg.norm(A + A.T) > tol * (1.0 + np.linalg.norm(A)):
        raise NonSkewInput("matrix is not skew-symmetric within tolerance")
    return A


def skew_part(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return 0.5 * (M - M.T)


def random_rotations(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform random rotations from normalized quaternions, shape (n, 3, 3)."""
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((n, 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def rotation_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        if angle != 0.0:
            raise NonRotation("zero axis with nonzero angle")
        return np.eye(3)
    K = _hat(axis / n)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def _hat(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def skew_exp(A: np.ndarray) -> np.ndarray:
    """Matrix exponential of a 3x3 skew matrix (Rodrigues)."""
    A = np.asarray(A, dtype=float)
    theta = np.sqrt(0.5 * np.sum(A * A))
    if theta < 1e-12:
        return np.eye(3) + A + 0.5 * (A @ A)
    return np.eye(3) + (np.sin(theta) / theta) * A + ((1 - np.cos(theta)) / theta**2) * (A @ A)


def skew_exp_integral(A: np.ndarray, s: float) -> np.ndarray:
    """Closed form of the integral of exp(t A) for t in [0, s], A skew."""
    A = np.asarray(A, dtype=float)
    theta = np.sqrt(0.5 * np.sum(A * A))
    if theta * abs(s) < 1e-8:
        return s * np.eye(3) + 0.5 * s**2 * A + (s**3 / 6.0) * (A @ A)
    c1 = (1.0 - np.cos(s * theta)) / theta**2
    c2 = (s - np.sin(s * theta) / theta) / theta**2
    return s * np.eye(3) + c1 * A + c2 * (A @ A)
