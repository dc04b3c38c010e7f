# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Rotation representations, forward kinematics and small angle
primitives shared by the models and the metrics.

All functions are vectorized over leading dimensions and are pure, so
they can be called from any thread.
"""

import numpy as np

_EPS = 1e-9


class DegenerateRotation(ValueError):
    """
    A 6D rotation has a zero forward vector or parallel forward/up vectors.
    """
    pass


class InvalidRotation(ValueError):
    """
    A matrix is not a proper rotation.
    """
    pass


class SkeletonMismatch(ValueError):
    """
    Per-joint data does not match the skeleton's joint count.
    """
    pass


class InvalidSpeed(ValueError):
    pass


def rot6d_to_matrix(r):
    """
    Decode 6D rotations with Gram-Schmidt: the forward vector is
    normalized, the up vector is orthogonalized against it and the third
    column is their cross product.

    :param r: array of shape ``(..., 6)``, forward then up vector
    :returns: rotation matrices, shape ``(..., 3, 3)``
    :raises: :exc:`DegenerateRotation` on zero or parallel vectors
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] != 6:
        raise DegenerateRotation('6D rotation must have 6 components, got shape %s' % (r.shape,))
    forward = r[..., 0:3]
    up = r[..., 3:6]
    fn = np.linalg.norm(forward, axis=-1, keepdims=True)
    if np.any(fn < _EPS):
        raise DegenerateRotation('zero forward vector in 6D rotation')
    a = forward / fn
    b = up - np.sum(a * up, axis=-1, keepdims=True) * a
    bn = np.linalg.norm(b, axis=-1, keepdims=True)
    if np.any(bn < _EPS):
        raise DegenerateRotation('forward and up vectors are parallel or up is zero')
    b = b / bn
    c = np.cross(a, b)
    return np.stack([a, b, c], axis=-1)


def matrix_to_rot6d(R, tol=1e-5):
    """
    :param R: rotation matrices, shape ``(..., 3, 3)``
    :param tol: orthonormality tolerance, ``float``
    :returns: 6D rotations (first two columns), shape ``(..., 6)``
    :raises: :exc:`InvalidRotation` if *R* is not a proper rotation
    """
    R = np.asarray(R, dtype=np.float64)
    if R.shape[-2:] != (3, 3):
        raise InvalidRotation('expected (..., 3, 3) matrices, got shape %s' % (R.shape,))
    gram = np.einsum('...ji,...jk->...ik', R, R)
    if np.max(np.abs(gram - np.eye(3)), initial=0.0) > tol:
        raise InvalidRotation('matrix is not orthonormal within %g' % tol)
    if np.any(np.linalg.det(R) <= 0):
        raise InvalidRotation('matrix is a reflection, not a rotation')
    return np.concatenate([R[..., :, 0], R[..., :, 1]], axis=-1)


def yaw_matrix(angle):
    """
    Rotation about the vertical (+Y) axis.

    :param angle: radians, scalar or array
    :returns: matrices of shape ``angle.shape + (3, 3)``
    """
    angle = np.asarray(angle, dtype=np.float64)
    c, s = np.cos(angle), np.sin(angle)
    z, o = np.zeros_like(angle), np.ones_like(angle)
    return np.stack([
        np.stack([c, z, s], axis=-1),
        np.stack([z, o, z], axis=-1),
        np.stack([-s, z, c], axis=-1)], axis=-2)


def forward_kinematics(skeleton, root_position, local_rotations):
    """
    Accumulate local joint rotations down the hierarchy.  The position
    of a child is its parent's position plus the parent's global
    rotation applied to the child's rest offset.

    :param skeleton: object with ``parents`` (``[int]``, -1 for the
      root, topologically ordered) and ``offsets`` (``(J, 3)``)
    :param root_position: root translation, shape ``(..., 3)``
    :param local_rotations: shape ``(..., J, 3, 3)``
    :returns: ``(positions, global_rotations)`` with shapes
      ``(..., J, 3)`` and ``(..., J, 3, 3)``
    :raises: :exc:`SkeletonMismatch`
    """
    parents = list(skeleton.parents)
    offsets = np.asarray(skeleton.offsets, dtype=np.float64)
    local_rotations = np.asarray(local_rotations, dtype=np.float64)
    root_position = np.asarray(root_position, dtype=np.float64)
    if local_rotations.shape[-3] != len(parents) or offsets.shape[0] != len(parents):
        raise SkeletonMismatch('skeleton has %d joints but rotations are given for %d'
                               % (len(parents), local_rotations.shape[-3]))
    batch = local_rotations.shape[:-3]
    positions = np.zeros(batch + (len(parents), 3))
    rotations = np.zeros(batch + (len(parents), 3, 3))
    for j, p in enumerate(parents):
        if p < 0:
            rotations[..., j, :, :] = local_rotations[..., j, :, :]
            positions[..., j, :] = root_position + offsets[j]
        else:
            rotations[..., j, :, :] = rotations[..., p, :, :] @ local_rotations[..., j, :, :]
            positions[..., j, :] = positions[..., p, :] + \
                np.einsum('...ij,j->...i', rotations[..., p, :, :], offsets[j])
    return positions, rotations


def contact_weight(f_v):
    """
    Probability of ground contact from foot speed: 1 up to 0.5, 0 from
    1.0, and the cubic ``2t^3 - 3t^2 + 1`` with ``t = 2(f_v - 0.5)``
    in between.

    :param f_v: foot speed in cm/frame, scalar or array
    :raises: :exc:`InvalidSpeed` on negative speeds
    """
    f_v = np.asarray(f_v, dtype=np.float64)
    if np.any(f_v < 0):
        raise InvalidSpeed('foot speed must be non-negative')
    t = np.clip(2.0 * (f_v - 0.5), 0.0, 1.0)
    w = 2.0 * t ** 3 - 3.0 * t ** 2 + 1.0
    if w.ndim == 0:
        return float(w)
    return w


def wrap_angle(theta):
    """
    Wrap radians into ``(-pi, pi]``.
    """
    theta = np.asarray(theta, dtype=np.float64)
    wrapped = np.pi - np.mod(np.pi - theta, 2.0 * np.pi)
    if wrapped.ndim == 0:
        return float(wrapped)
    return wrapped


def slerp_angle(a, b, w):
    """
    Interpolate two planar angles along the shorter arc.  Antipodal
    pairs resolve toward the positive direction (counter-clockwise from
    *a*).

    :param a: start angle in radians
    :param b: end angle in radians
    :param w: weight in ``[0, 1]``; 0 gives *a*, 1 gives *b*
    :returns: angle in ``(-pi, pi]``
    """
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < 0) or np.any(w > 1):
        raise ValueError('slerp weight must be in [0, 1]')
    # wrap_angle maps an exact half turn to +pi, which is the tie rule
    diff = wrap_angle(np.asarray(b, dtype=np.float64) - np.asarray(a, dtype=np.float64))
    return wrap_angle(np.asarray(a, dtype=np.float64) + w * diff)


def rotate2d(p, theta):
    """
    :param p: 2-vectors, shape ``(..., 2)``
    :param theta: radians, broadcastable to ``p.shape[:-1]``
    """
    p = np.asarray(p, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([c * p[..., 0] - s * p[..., 1], s * p[..., 0] + c * p[..., 1]], axis=-1)


def shift_to_angle(shift):
    """Signed shift in turns to radians."""
    return 2.0 * np.pi * np.asarray(shift, dtype=np.float64)


def angle_to_shift(angle):
    """Radians to signed shift in turns, in ``(-0.5, 0.5]``."""
    return wrap_angle(angle) / (2.0 * np.pi)
