# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
BVH reading and writing.

Rotation channels are intrinsic Euler angles in degrees applied in the
order they are declared.  Only the root's position channels move the
skeleton; position channels on other joints are read and written back
but do not enter forward kinematics.
"""

import logging

import numpy as np
from scipy.spatial.transform import Rotation

from .skeleton import MotionClip, Skeleton

logger = logging.getLogger(__name__)

_ROTATION_CHANNELS = {'Xrotation': 'X', 'Yrotation': 'Y', 'Zrotation': 'Z'}
_POSITION_CHANNELS = ('Xposition', 'Yposition', 'Zposition')
EXPORT_CHANNELS = ('Zrotation', 'Yrotation', 'Xrotation')


class ParseError(ValueError):
    """
    Malformed BVH text.
    """

    def __init__(self, msg, line=None):
        super(ParseError, self).__init__(msg)
        self.line = line

    def __str__(self):
        if self.line is None:
            return self.args[0]
        return '%s\nline [%d]' % (self.args[0], self.line)


class BvhMotion(object):
    """
    Raw channel data of a BVH file.

    :param channels: channel names per joint, ``[[str]]``
    :param values: channel values per frame, ``(F, sum(len(c)))``
    :param frame_time: seconds per frame
    """

    def __init__(self, channels, values, frame_time):
        self.channels = [list(c) for c in channels]
        self.values = np.asarray(values, dtype=np.float64).reshape(-1, sum(len(c) for c in self.channels))
        self.frame_time = float(frame_time)

    @property
    def n_frames(self):
        return self.values.shape[0]

    @property
    def fps(self):
        return int(round(1.0 / self.frame_time))

    def _joint_values(self, j):
        start = sum(len(c) for c in self.channels[:j])
        return self.values[:, start:start + len(self.channels[j])]

    def root_positions(self):
        chans = self.channels[0]
        vals = self._joint_values(0)
        out = np.zeros((self.n_frames, 3))
        for k, axis in enumerate(_POSITION_CHANNELS):
            if axis in chans:
                out[:, k] = vals[:, chans.index(axis)]
        return out

    def local_rotations(self):
        """
        :returns: ``(F, J, 3, 3)`` local rotation matrices
        """
        out = np.tile(np.eye(3), (self.n_frames, len(self.channels), 1, 1))
        for j, chans in enumerate(self.channels):
            rot = [c for c in chans if c in _ROTATION_CHANNELS]
            if not rot or self.n_frames == 0:
                continue
            vals = self._joint_values(j)
            angles = np.stack([vals[:, chans.index(c)] for c in rot], axis=1)
            order = ''.join(_ROTATION_CHANNELS[c] for c in rot)
            out[:, j] = Rotation.from_euler(order, angles, degrees=True).as_matrix()
        return out


def _numbers(tokens, count, line):
    if len(tokens) != count:
        raise ParseError('expected %d numbers, got %d' % (count, len(tokens)), line)
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ParseError('invalid number in [%s]' % ' '.join(tokens), line)


def parse_bvh(text):
    """
    Parse BVH text.

    :returns: ``(Skeleton, BvhMotion)``
    :raises: :exc:`ParseError` with the offending line number
    """
    lines = [(i + 1, l.strip()) for i, l in enumerate(text.splitlines())]
    lines = [(n, l) for n, l in lines if l]
    pos = 0

    def expect(keyword):
        if pos >= len(lines) or lines[pos][1].split()[0] != keyword:
            n = lines[pos][0] if pos < len(lines) else (lines[-1][0] if lines else 0)
            raise ParseError('expected [%s]' % keyword, n)

    expect('HIERARCHY')
    pos += 1
    names, parents, offsets, channels = [], [], [], []
    end_sites = {}
    stack = []
    pending = None       # kind of the most recent header, awaiting '{'
    in_end_site = False
    while pos < len(lines):
        n, line = lines[pos]
        tokens = line.split()
        head = tokens[0]
        if head == 'MOTION':
            break
        if head in ('ROOT', 'JOINT'):
            if len(tokens) < 2:
                raise ParseError('joint without a name', n)
            if head == 'ROOT' and names:
                raise ParseError('more than one ROOT', n)
            if head == 'JOINT' and not stack:
                raise ParseError('JOINT outside of a ROOT', n)
            names.append(' '.join(tokens[1:]))
            parents.append(stack[-1] if stack else -1)
            offsets.append(None)
            channels.append([])
            pending = 'joint'
        elif head == 'End':
            if not stack:
                raise ParseError('End Site outside of a joint', n)
            pending = 'end'
        elif head == '{':
            if pending == 'joint':
                stack.append(len(names) - 1)
            elif pending == 'end':
                in_end_site = True
            else:
                raise ParseError('unexpected [{]', n)
            pending = None
        elif head == '}':
            if in_end_site:
                in_end_site = False
            elif stack:
                stack.pop()
            else:
                raise ParseError('unbalanced [}]', n)
        elif head == 'OFFSET':
            values = _numbers(tokens[1:], 3, n)
            if in_end_site:
                end_sites[stack[-1]] = values
            elif stack:
                offsets[stack[-1]] = values
            else:
                raise ParseError('OFFSET outside of a joint', n)
        elif head == 'CHANNELS':
            if not stack or in_end_site:
                raise ParseError('CHANNELS outside of a joint', n)
            try:
                count = int(tokens[1])
            except (IndexError, ValueError):
                raise ParseError('CHANNELS needs a count', n)
            chans = tokens[2:]
            if len(chans) != count:
                raise ParseError('CHANNELS declares %d channels but lists %d' % (count, len(chans)), n)
            for c in chans:
                if c not in _ROTATION_CHANNELS and c not in _POSITION_CHANNELS:
                    raise ParseError('unknown channel [%s]' % c, n)
            channels[stack[-1]] = chans
        else:
            raise ParseError('unexpected token [%s]' % head, n)
        pos += 1

    if stack or in_end_site:
        raise ParseError('hierarchy is not closed', lines[pos - 1][0] if pos else 0)
    if not names:
        raise ParseError('hierarchy has no joints', lines[0][0] if lines else 0)
    for j, off in enumerate(offsets):
        if off is None:
            raise ParseError('joint [%s] has no OFFSET' % names[j])

    expect('MOTION')
    pos += 1
    if pos >= len(lines) or not lines[pos][1].startswith('Frames:'):
        raise ParseError('expected [Frames:]', lines[pos - 1][0])
    n, line = lines[pos]
    try:
        n_frames = int(line.split(':', 1)[1])
    except ValueError:
        raise ParseError('invalid frame count', n)
    pos += 1
    if pos >= len(lines) or not lines[pos][1].startswith('Frame Time:'):
        raise ParseError('expected [Frame Time:]', lines[pos - 1][0])
    n, line = lines[pos]
    try:
        frame_time = float(line.split(':', 1)[1])
    except ValueError:
        raise ParseError('invalid frame time', n)
    if frame_time <= 0:
        raise ParseError('frame time must be positive', n)
    pos += 1

    width = sum(len(c) for c in channels)
    rows = []
    for n, line in lines[pos:]:
        rows.append(_numbers(line.split(), width, n))
    if len(rows) != n_frames:
        raise ParseError('header declares %d frames but %d are present' % (n_frames, len(rows)),
                         lines[-1][0])

    skeleton = Skeleton(names, parents, offsets, end_sites=end_sites)
    return skeleton, BvhMotion(channels, np.array(rows).reshape(n_frames, width), frame_time)


def write_bvh(skeleton, motion):
    """
    :returns: BVH text for *skeleton* and *motion*
    """
    out = ['HIERARCHY']

    def emit(j, depth):
        pad = '  ' * depth
        kind = 'ROOT' if skeleton.parents[j] < 0 else 'JOINT'
        out.append('%s%s %s' % (pad, kind, skeleton.names[j]))
        out.append('%s{' % pad)
        out.append('%s  OFFSET %s' % (pad, ' '.join('%.6f' % v for v in skeleton.offsets[j])))
        chans = motion.channels[j]
        out.append('%s  CHANNELS %d%s' % (pad, len(chans), ''.join(' ' + c for c in chans)))
        for k in skeleton.children(j):
            emit(k, depth + 1)
        if j in skeleton.end_sites:
            out.append('%s  End Site' % pad)
            out.append('%s  {' % pad)
            out.append('%s    OFFSET %s' % (pad, ' '.join('%.6f' % v for v in skeleton.end_sites[j])))
            out.append('%s  }' % pad)
        out.append('%s}' % pad)

    # channel data is laid out in depth-first order; our joints are
    # topologically ordered, which matches depth-first for parsed files
    emit(0, 0)
    out.append('MOTION')
    out.append('Frames: %d' % motion.n_frames)
    out.append('Frame Time: %.8f' % motion.frame_time)
    for row in motion.values:
        out.append(' '.join('%.6f' % v for v in row))
    return '\n'.join(out) + '\n'


def _depth_first(skeleton):
    order = []

    def visit(j):
        order.append(j)
        for k in skeleton.children(j):
            visit(k)
    visit(0)
    return order


def clip_to_motion(clip):
    """
    Convert a clip to root-position plus ZYX Euler channels.

    :raises: :exc:`ValueError` if the joints are not in depth-first order
    """
    skeleton = clip.skeleton
    if _depth_first(skeleton) != list(range(skeleton.num_joints)):
        raise ValueError('skeleton joints must be in depth-first order for BVH export')
    local = clip.local_rotations()
    order = ''.join(_ROTATION_CHANNELS[c] for c in EXPORT_CHANNELS)
    F, J = local.shape[:2]
    euler = Rotation.from_matrix(local.reshape(-1, 3, 3)).as_euler(order, degrees=True)
    euler = euler.reshape(F, J, 3)
    root = clip.positions[:, 0] - skeleton.offsets[0]
    values = np.concatenate([root, euler[:, 0]] + [euler[:, j] for j in range(1, J)], axis=1)
    channels = [list(_POSITION_CHANNELS) + list(EXPORT_CHANNELS)] + \
        [list(EXPORT_CHANNELS) for _ in range(1, J)]
    return BvhMotion(channels, values, 1.0 / clip.fps)


def motion_to_clip(skeleton, motion, style='', name=''):
    return MotionClip.from_local(skeleton, motion.root_positions(), motion.local_rotations(),
                                 style=style, fps=motion.fps, name=name)


def load_bvh(path, style=''):
    """
    Read a BVH file into a :class:`MotionClip` at the file's frame rate.
    """
    with open(path) as f:
        text = f.read()
    skeleton, motion = parse_bvh(text)
    logger.debug('read %s: %d joints, %d frames at %d fps',
                 path, skeleton.num_joints, motion.n_frames, motion.fps)
    return motion_to_clip(skeleton, motion, style=style, name=path)


def save_bvh(path, clip):
    with open(path, 'w', newline='\n') as f:
        f.write(write_bvh(clip.skeleton, clip_to_motion(clip)))
