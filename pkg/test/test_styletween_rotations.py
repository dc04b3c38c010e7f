# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

import numpy as np
import pytest


def test_rot6d_roundtrip_identity():
    from styletween.rotations import matrix_to_rot6d, rot6d_to_matrix
    r = matrix_to_rot6d(np.eye(3))
    assert [1, 0, 0, 0, 1, 0] == list(r)
    assert np.allclose(np.eye(3), rot6d_to_matrix(r))


def test_rot6d_gram_schmidt():
    from styletween.rotations import rot6d_to_matrix
    R = rot6d_to_matrix(np.array([2.0, 0, 0, 1.0, 3.0, 0]))
    assert np.allclose(np.eye(3), R)
    R = rot6d_to_matrix(np.random.default_rng(0).normal(size=(5, 6)))
    assert np.allclose(np.einsum('nji,njk->nik', R, R), np.eye(3))
    assert np.allclose(np.linalg.det(R), 1.0)


def test_rot6d_degenerate():
    from styletween.rotations import DegenerateRotation, rot6d_to_matrix
    with pytest.raises(DegenerateRotation):
        rot6d_to_matrix(np.zeros(6))
    with pytest.raises(DegenerateRotation):
        rot6d_to_matrix(np.array([1.0, 0, 0, 2.0, 0, 0]))


def test_matrix_to_rot6d_invalid():
    from styletween.rotations import InvalidRotation, matrix_to_rot6d
    with pytest.raises(InvalidRotation):
        matrix_to_rot6d(np.diag([-1.0, 1.0, 1.0]))
    with pytest.raises(InvalidRotation):
        matrix_to_rot6d(2 * np.eye(3))


def test_yaw_matrix():
    from styletween.rotations import yaw_matrix
    R = yaw_matrix(np.pi / 2)
    # +Z turns into +X
    assert np.allclose([1, 0, 0], R @ np.array([0, 0, 1.0]))
    assert (4, 3, 3) == yaw_matrix(np.zeros(4)).shape


def test_forward_kinematics():
    from styletween.rotations import SkeletonMismatch, forward_kinematics, yaw_matrix

    class Chain(object):
        parents = [-1, 0, 1]
        offsets = np.array([[0, 0, 0], [0, 0, 10.0], [0, 0, 5.0]])

    local = np.tile(np.eye(3), (3, 1, 1))
    local[1] = yaw_matrix(np.pi / 2)
    pos, rot = forward_kinematics(Chain, np.array([1.0, 2.0, 3.0]), local)
    assert np.allclose([1, 2, 3], pos[0])
    assert np.allclose([1, 2, 13], pos[1])
    assert np.allclose([6, 2, 13], pos[2])
    assert np.allclose(yaw_matrix(np.pi / 2), rot[2])
    with pytest.raises(SkeletonMismatch):
        forward_kinematics(Chain, np.zeros(3), local[:2])


def test_contact_weight():
    from styletween.rotations import InvalidSpeed, contact_weight
    assert 1.0 == contact_weight(0.0)
    assert 1.0 == contact_weight(0.5)
    assert 0.0 == contact_weight(1.0)
    assert 0.0 == contact_weight(3.0)
    assert abs(contact_weight(0.75) - 0.5) < 1e-12
    w = contact_weight(np.linspace(0, 2, 50))
    assert np.all(np.diff(w) <= 0)
    with pytest.raises(InvalidSpeed):
        contact_weight(-0.1)


def test_wrap_angle():
    from styletween.rotations import wrap_angle
    assert abs(wrap_angle(3 * np.pi / 2) + np.pi / 2) < 1e-12
    assert abs(wrap_angle(np.pi) - np.pi) < 1e-12
    assert abs(wrap_angle(-np.pi) - np.pi) < 1e-12
    assert abs(wrap_angle(0.25) - 0.25) < 1e-12


def test_slerp_angle():
    from styletween.rotations import slerp_angle
    assert abs(slerp_angle(0.0, np.pi / 2, 0.5) - np.pi / 4) < 1e-12
    assert abs(slerp_angle(0.3, 1.2, 0.0) - 0.3) < 1e-12
    assert abs(slerp_angle(0.3, 1.2, 1.0) - 1.2) < 1e-12
    # shorter arc through the half turn
    assert abs(abs(slerp_angle(3.0, -3.0, 0.5)) - np.pi) < 1e-9
    # antipodal pair goes counter-clockwise
    assert abs(slerp_angle(0.0, np.pi, 0.5) - np.pi / 2) < 1e-12
    with pytest.raises(ValueError):
        slerp_angle(0.0, 1.0, 1.5)


def test_rotate2d_and_shift():
    from styletween.rotations import angle_to_shift, rotate2d, shift_to_angle
    assert np.allclose([0, 1], rotate2d(np.array([1.0, 0.0]), np.pi / 2))
    assert abs(shift_to_angle(0.25) - np.pi / 2) < 1e-12
    assert abs(angle_to_shift(3 * np.pi / 2) + 0.25) < 1e-12
