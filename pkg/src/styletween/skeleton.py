# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Skeleton, motion clip and phase track representations.

A :class:`MotionClip` stores global joint positions (cm) and global
joint rotations per frame.  Velocities and 6D rotations are derived, so
the canonical per-joint feature layout ``[position 3, velocity 3,
rotation 6]`` always satisfies ``v[t] = p[t] - p[t-1]`` with
``v[0] = v[1]``.
"""

import numpy as np

from .common import FOOT_JOINTS, FPS, HIP_JOINT, JOINT_FEATURES, ShapeError
from .rotations import SkeletonMismatch, forward_kinematics, matrix_to_rot6d, rot6d_to_matrix


class InvalidSkeleton(ValueError):
    pass


class Skeleton(object):
    """
    Joint hierarchy with rest offsets in centimeters.

    :param names: joint names, ``[str]``
    :param parents: parent index per joint, -1 for the root
    :param offsets: rest offsets, ``(J, 3)``
    :param forward_axis: local axis (``'x'``, ``'y'`` or ``'z'``) of the
      hip rotation that points in the facing direction
    """

    def __init__(self, names, parents, offsets, forward_axis='z', end_sites=None):
        self.names = list(names)
        self.parents = [int(p) for p in parents]
        self.offsets = np.asarray(offsets, dtype=np.float64).reshape(-1, 3)
        self.forward_axis = forward_axis
        # BVH end sites, kept for export only: {joint index: offset}
        self.end_sites = dict(end_sites or {})
        if len(self.names) != len(self.parents) or len(self.names) != len(self.offsets):
            raise InvalidSkeleton('names, parents and offsets differ in length')
        if len(set(self.names)) != len(self.names):
            raise InvalidSkeleton('joint names are not unique')
        roots = [j for j, p in enumerate(self.parents) if p < 0]
        if roots != [0]:
            raise InvalidSkeleton('skeleton must have exactly one root at index 0')
        for j, p in enumerate(self.parents):
            if p >= j:
                raise InvalidSkeleton('joint [%s] precedes its parent' % self.names[j])
        if forward_axis not in ('x', 'y', 'z'):
            raise InvalidSkeleton('forward axis must be x, y or z, got [%s]' % forward_axis)

    def __len__(self):
        return len(self.names)

    def __eq__(self, other):
        return isinstance(other, Skeleton) and self.names == other.names and \
            self.parents == other.parents and np.array_equal(self.offsets, other.offsets)

    def __ne__(self, other):
        return not self.__eq__(other)

    @property
    def num_joints(self):
        return len(self.names)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError('skeleton has no joint [%s]' % name)

    @property
    def hip_index(self):
        return self.index(HIP_JOINT) if HIP_JOINT in self.names else 0

    @property
    def foot_indices(self):
        """
        Indices of the left/right ankle and toe joints present in the rig.
        """
        return [self.names.index(n) for n in FOOT_JOINTS if n in self.names]

    @property
    def forward_column(self):
        return 'xyz'.index(self.forward_axis)

    def children(self, j):
        return [k for k, p in enumerate(self.parents) if p == j]

    def descendants(self, j):
        out = []
        for k in range(j + 1, len(self.parents)):
            p = self.parents[k]
            if p == j or p in out:
                out.append(k)
        return out

    def to_array(self):
        """
        :returns: ``(J, 4)`` array of parent index and rest offset
        """
        return np.concatenate([np.asarray(self.parents, dtype=np.float64)[:, None],
                               self.offsets], axis=1)

    @classmethod
    def from_array(cls, names, array, forward_axis='z'):
        array = np.asarray(array, dtype=np.float64)
        return cls(names, array[:, 0].astype(int), array[:, 1:4], forward_axis=forward_axis)


class PhaseTrack(object):
    """
    Per-frame phase parameters, each ``(N_p, T)``: amplitude, signed
    shift in turns and frequency in cycles per frame.
    """

    def __init__(self, amplitude, shift, frequency):
        self.amplitude = np.asarray(amplitude, dtype=np.float64)
        self.shift = np.asarray(shift, dtype=np.float64)
        self.frequency = np.asarray(frequency, dtype=np.float64)
        if not (self.amplitude.shape == self.shift.shape == self.frequency.shape):
            raise ShapeError('phase track components differ in shape',
                             self.amplitude.shape, self.shift.shape, self.frequency.shape)

    @property
    def channels(self):
        return self.amplitude.shape[0]

    @property
    def n_frames(self):
        return self.amplitude.shape[1]

    def vectors(self):
        """
        :returns: phase vectors ``(T, 2 * N_p)`` ordered
          ``(A sin 2piS, A cos 2piS)`` per channel
        """
        angle = 2.0 * np.pi * self.shift
        p = np.stack([self.amplitude * np.sin(angle), self.amplitude * np.cos(angle)], axis=1)
        return p.reshape(-1, self.n_frames).T

    def slice(self, start, stop):
        return PhaseTrack(self.amplitude[:, start:stop], self.shift[:, start:stop],
                          self.frequency[:, start:stop])


class MotionClip(object):
    """
    :param skeleton: :class:`Skeleton`
    :param positions: global joint positions, ``(T, J, 3)`` in cm
    :param rotations: global joint rotations, ``(T, J, 3, 3)``
    :param style: style label, ``str``
    """

    def __init__(self, skeleton, positions, rotations, style='', fps=FPS, name='', phase=None):
        self.skeleton = skeleton
        self.positions = np.asarray(positions, dtype=np.float64)
        self.rotations = np.asarray(rotations, dtype=np.float64)
        self.style = style
        self.fps = fps
        self.name = name
        self.phase = phase
        J = skeleton.num_joints
        if self.positions.ndim != 3 or self.positions.shape[1:] != (J, 3):
            raise SkeletonMismatch('positions have shape %s for a %d-joint skeleton'
                                   % (self.positions.shape, J))
        if self.rotations.shape != self.positions.shape[:2] + (3, 3):
            raise ShapeError('rotations do not match positions',
                             self.rotations.shape, self.positions.shape)

    def __len__(self):
        return self.positions.shape[0]

    @property
    def n_frames(self):
        return self.positions.shape[0]

    @property
    def velocities(self):
        v = np.zeros_like(self.positions)
        if self.n_frames > 1:
            v[1:] = self.positions[1:] - self.positions[:-1]
            v[0] = v[1]
        return v

    @property
    def rot6d(self):
        return matrix_to_rot6d(self.rotations)

    def features(self):
        """
        :returns: canonical feature tensor ``(J, 12, T)``
        """
        f = np.concatenate([self.positions, self.velocities, self.rot6d], axis=-1)
        return np.transpose(f, (1, 2, 0))

    def frame_vectors(self):
        """
        :returns: per-frame flattened features ``(T, J * 12)``
        """
        f = np.concatenate([self.positions, self.velocities, self.rot6d], axis=-1)
        return f.reshape(self.n_frames, -1)

    def hip_features(self):
        """
        :returns: hip velocity and 6D rotation per frame, ``(T, 9)``
        """
        h = self.skeleton.hip_index
        return np.concatenate([self.velocities[:, h], self.rot6d[:, h]], axis=-1)

    def local_rotations(self):
        local = self.rotations.copy()
        for j, p in enumerate(self.skeleton.parents):
            if p >= 0:
                local[:, j] = np.einsum('tji,tjk->tik', self.rotations[:, p], self.rotations[:, j])
        return local

    def slice(self, start, stop):
        phase = self.phase.slice(start, stop) if self.phase is not None else None
        return MotionClip(self.skeleton, self.positions[start:stop], self.rotations[start:stop],
                          style=self.style, fps=self.fps, name=self.name, phase=phase)

    def copy(self, **changes):
        values = dict(skeleton=self.skeleton, positions=self.positions.copy(),
                      rotations=self.rotations.copy(), style=self.style, fps=self.fps,
                      name=self.name, phase=self.phase)
        values.update(changes)
        return MotionClip(**values)

    @classmethod
    def from_local(cls, skeleton, root_positions, local_rotations, **kwargs):
        positions, rotations = forward_kinematics(skeleton, root_positions, local_rotations)
        return cls(skeleton, positions, rotations, **kwargs)

    @classmethod
    def from_frame_vectors(cls, skeleton, frames, **kwargs):
        """
        Rebuild a clip from ``(T, J * 12)`` feature vectors.  Positions
        are taken as given and rotations are re-orthonormalized.
        """
        frames = np.asarray(frames, dtype=np.float64)
        J = skeleton.num_joints
        if frames.ndim != 2 or frames.shape[1] != J * JOINT_FEATURES:
            raise SkeletonMismatch('frame vectors of width %s do not fit %d joints'
                                   % (frames.shape[1:], J))
        f = frames.reshape(frames.shape[0], J, JOINT_FEATURES)
        return cls(skeleton, f[..., 0:3], rot6d_to_matrix(f[..., 6:12]), **kwargs)


def feature_slices(num_joints):
    """
    Index arrays into a flattened frame vector for the position,
    velocity and rotation channels of every joint.
    """
    base = np.arange(num_joints)[:, None] * JOINT_FEATURES
    return (base + np.arange(0, 3)).ravel(), (base + np.arange(3, 6)).ravel(), \
        (base + np.arange(6, 12)).ravel()
