"""Manifold primitives on S^2 and SO(3).

Vectors are plain ``numpy`` arrays with the spatial axis last, so every
function here also accepts stacks of vectors (shape ``(..., 3)``) and
complex-valued input. The complex path is used for complex-step
directional derivatives, which is why ``dot`` and ``norm`` avoid
conjugation.
"""

from enum import Enum

import numpy as np

from .errors import DomainError, InvalidInput

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])

UNIT_TOL = 1e-9
ROT_TOL = 1e-8
SKEW_TOL = 1e-9


def dot(a, b):
    """Bilinear inner product over the last axis (no conjugation)."""
    return np.sum(a * b, axis=-1)


def norm(a):
    return np.sqrt(dot(a, a))


def cross(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    a, b = np.broadcast_arrays(a, b)
    return np.stack(
        (
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ),
        axis=-1,
    )


def hat(a):
    """Skew-symmetric matrix with ``hat(a) @ b == cross(a, b)``."""
    a = np.asarray(a)
    z = np.zeros_like(a[..., 0])
    x, y, w = a[..., 0], a[..., 1], a[..., 2]
    return np.stack(
        (
            np.stack((z, -w, y), axis=-1),
            np.stack((w, z, -x), axis=-1),
            np.stack((-y, x, z), axis=-1),
        ),
        axis=-2,
    )


def vee(S, check=True):
    """Inverse of :func:`hat`. Raises ``InvalidInput`` on non-skew input."""
    S = np.asarray(S)
    if check:
        asym = np.sqrt(np.sum(np.abs(S + np.swapaxes(S, -1, -2)) ** 2, axis=(-2, -1)))
        if np.any(asym > SKEW_TOL):
            raise InvalidInput(f"matrix is not skew-symmetric (|S+S^T|_F = {np.max(asym):.3e})")
    return np.stack((S[..., 2, 1], S[..., 0, 2], S[..., 1, 0]), axis=-1)


def skew_part_vee(M):
    """vee of the skew-symmetric part of M; used where M is skew only up to rounding."""
    return 0.5 * vee(M - np.swapaxes(M, -1, -2), check=False)


def matvec(M, v):
    return np.einsum("...ij,...j->...i", M, v)


def transpose(M):
    return np.swapaxes(M, -1, -2)


def s2_error(q_d, q):
    """Cable-direction configuration error ``(e_q, psi)``.

    ``e_q = q_d x q`` and ``psi = 1 - q.q_d``; ``|e_q|^2 = psi (2 - psi)``.
    """
    return cross(q_d, q), 1.0 - dot(q, q_d)


def so3_error(R_d, R, Omega_d, Omega):
    """Attitude and body-rate errors ``(e_R, e_Omega)``."""
    RdT_R = transpose(R_d) @ R
    e_R = 0.5 * vee(RdT_R - transpose(RdT_R), check=False)
    e_Omega = Omega - matvec(transpose(RdT_R), Omega_d)
    return e_R, e_Omega


class VecMap(str, Enum):
    TANH = "tanh"
    COSH = "cosh"
    SECH = "sech"
    LN = "ln"


def vec_map(h, kind):
    """Componentwise Tanh / Cosh / Sech / Ln of a vector."""
    h = np.asarray(h)
    kind = VecMap(kind)
    if kind is VecMap.TANH:
        return np.tanh(h)
    if kind is VecMap.COSH:
        return np.cosh(h)
    if kind is VecMap.SECH:
        return 1.0 / np.cosh(h)
    if np.any(np.real(h) <= 0.0):
        raise DomainError("Ln requires strictly positive components")
    return np.log(h)


def normalize(v):
    return v / norm(v)[..., None]


def tangent_project(q, w):
    """Remove the component of ``w`` along unit ``q``."""
    return w - dot(q, w)[..., None] * q


def project_rotation(R, tol=1e-15, max_iter=8):
    """Nearest rotation (orthogonal polar factor) by Newton-Schulz iteration.

    Exact rotations are returned unchanged, which keeps equilibria exact
    fixed points of the integrator.
    """
    X = np.array(R, dtype=float)
    eye = np.eye(3)
    for _ in range(max_iter):
        G = transpose(X) @ X
        if np.max(np.abs(G - eye)) <= tol:
            break
        X = X @ (1.5 * eye - 0.5 * G)
    return X


def orthonormality_error(R):
    return np.linalg.norm(transpose(R) @ R - np.eye(3), axis=(-2, -1))


def is_unit(v, tol=UNIT_TOL):
    return bool(np.all(np.abs(np.linalg.norm(v, axis=-1) - 1.0) <= tol))


def is_rotation(R, tol=ROT_TOL):
    R = np.asarray(R, dtype=float)
    return bool(
        np.all(orthonormality_error(R) <= tol) and np.all(np.abs(np.linalg.det(R) - 1.0) <= tol)
    )


def as_unit(v, tol=UNIT_TOL):
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != 3 or not np.all(np.isfinite(v)) or not is_unit(v, tol):
        raise InvalidInput("expected a finite unit 3-vector")
    return v


def as_rotation(R, tol=ROT_TOL):
    R = np.asarray(R, dtype=float)
    if R.shape[-2:] != (3, 3) or not np.all(np.isfinite(R)) or not is_rotation(R, tol):
        raise InvalidInput("expected a rotation matrix")
    return R


def axis_angle(rotvec):
    """Rotation matrix for a rotation vector (Rodrigues)."""
    rotvec = np.asarray(rotvec, dtype=float)
    theta = np.linalg.norm(rotvec)
    if theta < 1e-12:
        return np.eye(3) + hat(rotvec)
    K = hat(rotvec / theta)
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
