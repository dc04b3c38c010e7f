# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Synthetic gait generator and style catalog.

Clips are built from global joint rotations: legs by two-bone inverse
kinematics toward planted or swinging ankle targets, torso and arms by
periodic rotations.  Local rotations and positions then come from
forward kinematics, so every clip is kinematically consistent and
stance feet do not slip.
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .common import FPS
from .rotations import yaw_matrix
from .skeleton import MotionClip, Skeleton

logger = logging.getLogger(__name__)

STANCE_FRACTION = 0.6
ANKLE_HEIGHT = 8.0
# part of the swing during which the foot moves horizontally
_SWING_TRAVEL = (0.15, 0.85)

RIG = [
    ('Hips', None, (0.0, 0.0, 0.0)),
    ('LeftUpLeg', 'Hips', (9.0, -5.0, 0.0)),
    ('LeftLeg', 'LeftUpLeg', (0.0, -42.0, 0.0)),
    ('LeftFoot', 'LeftLeg', (0.0, -42.0, 0.0)),
    ('LeftToe', 'LeftFoot', (0.0, -8.0, 14.0)),
    ('RightUpLeg', 'Hips', (-9.0, -5.0, 0.0)),
    ('RightLeg', 'RightUpLeg', (0.0, -42.0, 0.0)),
    ('RightFoot', 'RightLeg', (0.0, -42.0, 0.0)),
    ('RightToe', 'RightFoot', (0.0, -8.0, 14.0)),
    ('Spine', 'Hips', (0.0, 8.0, 0.0)),
    ('Spine1', 'Spine', (0.0, 10.0, 0.0)),
    ('Spine2', 'Spine1', (0.0, 10.0, 0.0)),
    ('Spine3', 'Spine2', (0.0, 10.0, 0.0)),
    ('Neck', 'Spine3', (0.0, 12.0, 0.0)),
    ('Head', 'Neck', (0.0, 10.0, 0.0)),
    ('LeftShoulder', 'Spine3', (4.0, 8.0, 0.0)),
    ('LeftArm', 'LeftShoulder', (14.0, 0.0, 0.0)),
    ('LeftForeArm', 'LeftArm', (0.0, -28.0, 0.0)),
    ('LeftHand', 'LeftForeArm', (0.0, -25.0, 0.0)),
    ('RightShoulder', 'Spine3', (-4.0, 8.0, 0.0)),
    ('RightArm', 'RightShoulder', (-14.0, 0.0, 0.0)),
    ('RightForeArm', 'RightArm', (0.0, -28.0, 0.0)),
    ('RightHand', 'RightForeArm', (0.0, -25.0, 0.0)),
]

_THUMBS = {
    'LeftHand': [('LeftHandThumb1', 'LeftHand', (2.0, -4.0, 3.0)),
                 ('LeftHandThumb2', 'LeftHandThumb1', (0.0, -3.0, 1.0))],
    'RightHand': [('RightHandThumb1', 'RightHand', (-2.0, -4.0, 3.0)),
                  ('RightHandThumb2', 'RightHandThumb1', (0.0, -3.0, 1.0))],
}


class ParameterError(ValueError):
    pass


@dataclass
class GaitStyle:
    """
    :param stride: distance covered per gait cycle, cm
    :param cadence: gait cycles per second
    :param lift: peak swing-foot lift, cm
    :param sway: lateral hip sway, cm
    :param arm: arm swing amplitude, degrees
    :param lean: forward torso lean, degrees
    :param crouch: hip height as a fraction of the leg reach
    """
    name: str = 'walk'
    stride: float = 100.0
    cadence: float = 1.0
    lift: float = 10.0
    sway: float = 2.0
    arm: float = 20.0
    lean: float = 0.0
    crouch: float = 0.95

    def validate(self):
        if self.cadence <= 0:
            raise ParameterError('cadence must be positive, got [%s]' % self.cadence)
        for key in ('stride', 'lift', 'sway', 'arm'):
            if getattr(self, key) < 0:
                raise ParameterError('%s must be non-negative, got [%s]' % (key, getattr(self, key)))
        if not 0.5 <= self.crouch < 1.0:
            raise ParameterError('crouch must be in [0.5, 1), got [%s]' % self.crouch)


def build_skeleton(thumbs=False):
    """
    The 23-joint rig (27 joints with thumbs), facing +Z with the left
    side on +X.
    """
    rows = []
    for row in RIG:
        rows.append(row)
        if thumbs and row[0] in _THUMBS:
            rows.extend(_THUMBS[row[0]])
    names = [r[0] for r in rows]
    parents = [names.index(r[1]) if r[1] else -1 for r in rows]
    end_sites = dict((names.index(n), (0.0, -8.0, 0.0)) for n in ('Head', 'LeftHand', 'RightHand'))
    return Skeleton(names, parents, [r[2] for r in rows], forward_axis='z', end_sites=end_sites)


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    z, o = np.zeros_like(a), np.ones_like(a)
    return np.stack([np.stack([o, z, z], -1), np.stack([z, c, -s], -1),
                     np.stack([z, s, c], -1)], -2)


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    z, o = np.zeros_like(a), np.ones_like(a)
    return np.stack([np.stack([c, -s, z], -1), np.stack([s, c, z], -1),
                     np.stack([z, z, o], -1)], -2)


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _bone_frame(direction, forward):
    """
    Rotation taking the rest bone axis (-Y) onto *direction* with local
    +Z kept as close to *forward* as possible.
    """
    y = -direction
    z = _unit(forward - np.sum(forward * y, axis=-1, keepdims=True) * y)
    x = np.cross(y, z)
    return np.stack([x, y, z], axis=-1)


def _two_bone(hip, target, l1, l2, pole):
    v = target - hip
    dist = np.linalg.norm(v, axis=-1, keepdims=True)
    u = v / dist
    dist = np.clip(dist, abs(l1 - l2) + 1e-6, l1 + l2 - 1e-6)
    cos_a = (l1 * l1 + dist * dist - l2 * l2) / (2.0 * l1 * dist)
    sin_a = np.sqrt(np.clip(1.0 - cos_a * cos_a, 0.0, 1.0))
    w = _unit(pole - np.sum(pole * u, axis=-1, keepdims=True) * u)
    knee = hip + l1 * (cos_a * u + sin_a * w)
    return knee, hip + dist * u


def _smootherstep(x):
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0)


def _swing_progress(u):
    """
    Horizontal progress of a foot over one gait cycle given its cycle
    fraction *u*: 0 during stance, smootherstep during swing.
    """
    swing = np.clip((u - STANCE_FRACTION) / (1.0 - STANCE_FRACTION), 0.0, 1.0)
    a, b = _SWING_TRAVEL
    return _smootherstep(np.clip((swing - a) / (b - a), 0.0, 1.0)), swing


def synth_gait(style, n_frames, seed, heading=None, phase=None, return_stance=False, thumbs=False):
    """
    Generate a walking clip.

    :param style: :class:`GaitStyle`
    :param n_frames: number of frames at 30 fps
    :param seed: seed for the heading, phase and start position
    :param return_stance: also return the ``(T, 4)`` mask of frames in
      which each foot joint is planted
    :raises: :exc:`ParameterError`
    """
    style.validate()
    rng = np.random.default_rng(seed)
    if heading is None:
        heading = rng.uniform(-np.pi, np.pi)
    if phase is None:
        phase = rng.uniform(0.0, 1.0)
    start = np.array([rng.uniform(-100, 100), 0.0, rng.uniform(-100, 100)])

    skeleton = build_skeleton(thumbs)
    names = skeleton.names
    J = skeleton.num_joints
    t = np.arange(n_frames, dtype=np.float64)
    cycle = phase + style.cadence * t / FPS
    S = style.stride

    R_h = yaw_matrix(heading)
    lateral, up, forward = R_h[:, 0], np.array([0.0, 1.0, 0.0]), R_h[:, 2]

    thigh = abs(skeleton.offsets[names.index('LeftLeg'), 1])
    shin = abs(skeleton.offsets[names.index('LeftFoot'), 1])
    reach = thigh + shin
    bob_amp = 0.03 * S
    half_step = (STANCE_FRACTION / 2.0) * S
    hip_drop = abs(skeleton.offsets[names.index('LeftUpLeg'), 1])
    drop = np.sqrt(max((style.crouch * reach) ** 2 - half_step ** 2, 1.0))
    hip_y = ANKLE_HEIGHT + hip_drop + drop - bob_amp + bob_amp * np.cos(4.0 * np.pi * cycle)
    sway = style.sway * np.sin(2.0 * np.pi * cycle)
    root = start + np.outer(S * (cycle - phase), forward) + np.outer(sway, lateral) + \
        np.outer(hip_y, up)

    G = np.tile(np.eye(3), (n_frames, J, 1, 1))
    G[:, 0] = R_h
    stance = np.zeros((n_frames, 4), dtype=bool)
    fwd = np.tile(forward, (n_frames, 1))
    for side, sign, shift in (('Left', 1.0, 0.0), ('Right', -1.0, 0.5)):
        foot_cycle = cycle + shift
        u = np.mod(foot_cycle, 1.0)
        progress, swing = _swing_progress(u)
        along = S * (np.floor(foot_cycle) + progress - shift - phase + STANCE_FRACTION / 2.0)
        height = ANKLE_HEIGHT + style.lift * np.sin(np.pi * swing)
        ankle = start + np.outer(along, forward) + np.outer(np.full(n_frames, sign * 9.0), lateral) + \
            np.outer(height, up)
        up_leg = names.index(side + 'UpLeg')
        hip_joint = root + R_h @ skeleton.offsets[up_leg]
        knee, ankle = _two_bone(hip_joint, ankle, thigh, shin, fwd)
        G[:, up_leg] = _bone_frame(_unit(knee - hip_joint), fwd)
        G[:, names.index(side + 'Leg')] = _bone_frame(_unit(ankle - knee), fwd)
        G[:, names.index(side + 'Foot')] = R_h
        G[:, names.index(side + 'Toe')] = R_h
        planted = u < STANCE_FRACTION
        still = planted.copy()
        still[1:] &= planted[:-1]
        if n_frames > 1:
            still[0] = planted[0] and planted[1]
        col = 0 if side == 'Left' else 2
        stance[:, col] = still
        stance[:, col + 1] = still

    deg = np.pi / 180.0
    roll = 2.0 * style.sway * deg * np.sin(2.0 * np.pi * cycle)
    twist = -0.3 * style.arm * deg * np.sin(2.0 * np.pi * cycle)
    lean = style.lean * deg
    for k, name in enumerate(('Spine', 'Spine1', 'Spine2', 'Spine3')):
        frac = (k + 1) / 4.0
        G[:, names.index(name)] = R_h @ yaw_matrix(frac * twist) @ _rx(np.full(n_frames, frac * lean)) \
            @ _rz(frac * roll)
    torso = G[:, names.index('Spine3')]
    G[:, names.index('Neck')] = R_h @ _rx(np.full(n_frames, 0.5 * lean))
    G[:, names.index('Head')] = R_h
    bend = _rx(np.full(n_frames, -15.0 * deg))
    for side, shift in (('Left', 0.0), ('Right', 0.5)):
        swing_angle = style.arm * deg * np.cos(2.0 * np.pi * (cycle + shift))
        G[:, names.index(side + 'Shoulder')] = torso
        arm = torso @ _rx(swing_angle)
        G[:, names.index(side + 'Arm')] = arm
        G[:, names.index(side + 'ForeArm')] = arm @ bend
        G[:, names.index(side + 'Hand')] = arm @ bend
        for extra in (side + 'HandThumb1', side + 'HandThumb2'):
            if extra in names:
                G[:, names.index(extra)] = arm @ bend

    local = G.copy()
    for j, p in enumerate(skeleton.parents):
        if p >= 0:
            local[:, j] = np.swapaxes(G[:, p], -1, -2) @ G[:, j]
    clip = MotionClip.from_local(skeleton, root, local, style=style.name, fps=FPS,
                                 name='%s/%d' % (style.name, seed))
    if return_stance:
        return clip, stance
    return clip


def idle_style(name='idle'):
    return GaitStyle(name=name, stride=0.0, cadence=1.0, lift=0.0, sway=0.0, arm=0.0)


def make_styles(n_styles, rng):
    """
    Draw *n_styles* distinct gait styles.
    """
    styles = []
    for i in range(n_styles):
        styles.append(GaitStyle(
            name='style%02d' % i,
            stride=float(rng.uniform(60.0, 130.0)),
            cadence=float(rng.uniform(0.7, 1.3)),
            lift=float(rng.uniform(6.0, 14.0)),
            sway=float(rng.uniform(0.0, 4.0)),
            arm=float(rng.uniform(5.0, 35.0)),
            lean=float(rng.uniform(-5.0, 15.0)),
            crouch=float(rng.uniform(0.85, 0.95))))
    return styles


def synth_catalog(n_styles=10, clips_per_style=8, n_frames=600, seed=0, thumbs=False):
    """
    :returns: ``(styles, clips)``; clips are grouped by style in catalog order
    """
    rng = np.random.default_rng(seed)
    styles = make_styles(n_styles, rng)
    clips = []
    for style in styles:
        for _ in range(clips_per_style):
            clips.append(synth_gait(style, n_frames, int(rng.integers(0, 2 ** 31 - 1)),
                                    thumbs=thumbs))
        logger.debug('generated %d clips of %s: %s', clips_per_style, style.name, asdict(style))
    return styles, clips
