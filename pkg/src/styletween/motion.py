# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Motion data preparation: retargeting by joint removal, resampling,
mirroring, cropping, orientation, contact labels, dataset splits and
the binary clip cache.
"""

import logging
from collections import OrderedDict

import numpy as np

from .common import FPS
from .container import read_container, write_container
from .rotations import contact_weight, matrix_to_rot6d, rot6d_to_matrix, yaw_matrix
from .skeleton import MotionClip, PhaseTrack, Skeleton

logger = logging.getLogger(__name__)

_MIRROR = np.diag([-1.0, 1.0, 1.0])


class RetargetError(ValueError):
    pass


class ResampleError(ValueError):
    pass


class MirrorError(ValueError):
    pass


class SplitError(ValueError):
    pass


def joints_matching(skeleton, patterns):
    """
    :returns: names of joints containing any of *patterns*
    """
    return [n for n in skeleton.names if any(p in n for p in patterns)]


def retarget_drop_joints(clip, names):
    """
    Remove joints from a clip.  Removed joints must be leaves or have
    every descendant removed as well, so survivors keep their global
    transforms exactly.

    :param clip: :class:`MotionClip`
    :param names: names of joints to remove
    :raises: :exc:`RetargetError`
    """
    skeleton = clip.skeleton
    removed = set()
    for name in names:
        try:
            removed.add(skeleton.index(name))
        except KeyError:
            raise RetargetError('cannot remove unknown joint [%s]' % name)
    if not removed:
        return clip
    if 0 in removed:
        raise RetargetError('cannot remove the root joint [%s]' % skeleton.names[0])
    for j in removed:
        kept = [k for k in skeleton.descendants(j) if k not in removed]
        if kept:
            raise RetargetError('joint [%s] has kept descendant [%s]'
                                % (skeleton.names[j], skeleton.names[kept[0]]))
    keep = [j for j in range(skeleton.num_joints) if j not in removed]
    remap = dict((old, new) for new, old in enumerate(keep))
    parents = [remap[skeleton.parents[j]] if skeleton.parents[j] >= 0 else -1 for j in keep]
    end_sites = dict((remap[j], v) for j, v in skeleton.end_sites.items() if j in remap)
    reduced = Skeleton([skeleton.names[j] for j in keep], parents, skeleton.offsets[keep],
                       forward_axis=skeleton.forward_axis, end_sites=end_sites)
    return MotionClip(reduced, clip.positions[:, keep], clip.rotations[:, keep],
                      style=clip.style, fps=clip.fps, name=clip.name, phase=clip.phase)


def resample_to_30fps(clip):
    """
    Subsample a clip whose frame rate is an integer multiple of 30.

    :raises: :exc:`ResampleError`
    """
    if clip.fps < FPS or clip.fps % FPS:
        raise ResampleError('cannot subsample %s fps to %d fps by an integer stride'
                            % (clip.fps, FPS))
    stride = clip.fps // FPS
    if stride == 1:
        return clip
    return MotionClip(clip.skeleton, clip.positions[::stride], clip.rotations[::stride],
                      style=clip.style, fps=FPS, name=clip.name)


def mirror_indices(skeleton, pairs=None):
    """
    Index permutation swapping left and right joints.

    :param pairs: explicit ``{name: mirrored name}`` map for rigs that
      do not use ``Left``/``Right`` prefixes
    :raises: :exc:`MirrorError` for an unpaired lateral joint
    """
    perm = list(range(skeleton.num_joints))
    for j, name in enumerate(skeleton.names):
        if pairs and name in pairs:
            other = pairs[name]
        elif name.startswith('Left'):
            other = 'Right' + name[4:]
        elif name.startswith('Right'):
            other = 'Left' + name[5:]
        else:
            continue
        if other not in skeleton.names:
            raise MirrorError('joint [%s] has no mirrored counterpart [%s]' % (name, other))
        perm[j] = skeleton.names.index(other)
    return perm


def mirror_clip(clip, pairs=None):
    """
    Reflect a clip across the lateral (X) axis and swap left and right.
    """
    perm = mirror_indices(clip.skeleton, pairs)
    positions = clip.positions[:, perm] * np.array([-1.0, 1.0, 1.0])
    rotations = _MIRROR @ clip.rotations[:, perm] @ _MIRROR
    name = clip.name[:-len('#mirror')] if clip.name.endswith('#mirror') else clip.name + '#mirror'
    return MotionClip(clip.skeleton, positions, rotations, style=clip.style, fps=clip.fps,
                      name=name)


class Windows(list):
    """
    List of cropped clips, with ``warnings`` recording skipped input.
    """

    def __init__(self, items=(), warnings=()):
        super(Windows, self).__init__(items)
        self.warnings = list(warnings)


def crop_windows(clip, length, overlap):
    """
    Cut a clip into full-length windows with stride ``length - overlap``.
    Clips shorter than *length* are skipped with a warning.

    :returns: :class:`Windows`
    """
    stride = length - overlap
    if stride <= 0:
        raise ValueError('overlap %d must be smaller than the window length %d' % (overlap, length))
    if clip.n_frames < length:
        msg = 'clip [%s] has %d frames, shorter than the %d-frame window; skipped' \
            % (clip.name, clip.n_frames, length)
        logger.warning(msg)
        return Windows(warnings=[msg])
    return Windows([clip.slice(s, s + length) for s in range(0, clip.n_frames - length + 1, stride)])


def random_crop(clip, length, rng):
    """
    :returns: a window with uniformly drawn start, or ``None`` if the
      clip is too short
    """
    if clip.n_frames < length:
        logger.warning('clip [%s] has %d frames, shorter than the %d-frame window; skipped',
                       clip.name, clip.n_frames, length)
        return None
    start = int(rng.integers(0, clip.n_frames - length + 1))
    return clip.slice(start, start + length)


def heading_angle(clip, frame=0):
    """
    Yaw of the hip forward column projected onto the ground plane,
    measured from +X toward +Z.

    :param frame: frame index, or ``None`` for every frame
    """
    fwd = clip.rotations[:, clip.skeleton.hip_index, :, clip.skeleton.forward_column]
    if frame is None:
        return np.arctan2(fwd[:, 2], fwd[:, 0])
    return float(np.arctan2(fwd[frame, 2], fwd[frame, 0]))


def orient_to_x(clip):
    """
    Apply one rigid transform to every frame so that frame 0's hip faces
    +X and sits above the origin.
    """
    h = clip.skeleton.hip_index
    fwd = clip.rotations[0, h][:, clip.skeleton.forward_column]
    if np.hypot(fwd[0], fwd[2]) > 1e-9:
        yaw = yaw_matrix(heading_angle(clip))
    else:
        yaw = np.eye(3)
    positions = clip.positions @ yaw.T
    offset = positions[0, h].copy()
    offset[1] = 0.0
    positions = positions - offset
    rotations = yaw @ clip.rotations
    return MotionClip(clip.skeleton, positions, rotations, style=clip.style, fps=clip.fps,
                      name=clip.name, phase=clip.phase)


def foot_speeds(clip):
    """
    :returns: foot joint speed in cm/frame, ``(T, N_f)``
    """
    return np.linalg.norm(clip.velocities[:, clip.skeleton.foot_indices], axis=-1)


def contact_labels(clip):
    """
    :returns: contact probability per frame and foot joint, ``(T, N_f)``
    """
    return contact_weight(foot_speeds(clip))


class DatasetSplit(object):
    """
    Style subsets ``A``, ``B`` and ``C`` plus the clip indices of the
    training set, the style-overlap test and the style-no-overlap test.
    """

    def __init__(self, styles_a, styles_b, styles_c, train, test_overlap, test_no_overlap,
                 clip_styles):
        self.styles_a = list(styles_a)
        self.styles_b = list(styles_b)
        self.styles_c = list(styles_c)
        self.train = list(train)
        self.test_overlap = list(test_overlap)
        self.test_no_overlap = list(test_no_overlap)
        self.clip_styles = list(clip_styles)

    def _styles(self, subset):
        if subset == 'A':
            return set(self.styles_a)
        if subset == 'B':
            return set(self.styles_b)
        if subset == 'C':
            return set(self.styles_c)
        if subset == 'all':
            return set(self.styles_a) | set(self.styles_b)
        raise SplitError('unknown style subset [%s]' % subset)

    def train_indices(self, subset='all'):
        styles = self._styles(subset)
        return [i for i in self.train if self.clip_styles[i] in styles]

    def test_indices(self, on='overlap'):
        """
        :param on: ``'overlap'``, ``'A'``, ``'B'`` or ``'C'``
        """
        if on == 'overlap':
            return list(self.test_overlap)
        if on == 'C':
            return list(self.test_no_overlap)
        styles = self._styles(on)
        return [i for i in self.test_overlap if self.clip_styles[i] in styles]

    def add_train(self, indices, styles):
        for i, s in zip(indices, styles):
            while len(self.clip_styles) <= i:
                self.clip_styles.append(None)
            self.clip_styles[i] = s
            self.train.append(i)

    def to_dict(self):
        return OrderedDict([
            ('styles_a', self.styles_a), ('styles_b', self.styles_b), ('styles_c', self.styles_c),
            ('train', self.train), ('test_overlap', self.test_overlap),
            ('test_no_overlap', self.test_no_overlap), ('clip_styles', self.clip_styles)])

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d['styles_a'], d['styles_b'], d['styles_c'], d['train'],
                       d['test_overlap'], d['test_no_overlap'], d['clip_styles'])
        except (KeyError, TypeError) as e:
            raise SplitError('invalid split description: %s' % e)


def make_splits(styles, clip_styles, seed, sources=None):
    """
    Split a style catalog into subsets A (first 46%), B (next 44%) and C
    (last 10%), then hold out 10% of the clips of every A/B style as the
    style-overlap test set.  A mirrored clip always lands in the same
    set as the clip it was mirrored from.

    :param styles: style labels in catalog order
    :param clip_styles: style label of every clip
    :param seed: seed of the hold-out draw
    :param sources: optional ``sources`` list of :func:`prepare_clips`
    :raises: :exc:`SplitError`
    """
    styles = list(styles)
    n = len(styles)
    n_c = int(round(0.1 * n))
    n_a = int(round(0.46 * n))
    n_b = n - n_a - n_c
    if min(n_a, n_b, n_c) < 1:
        raise SplitError('%d styles are too few for A/B/C subsets (%d/%d/%d)' % (n, n_a, n_b, n_c))
    styles_a, styles_b, styles_c = styles[:n_a], styles[n_a:n_a + n_b], styles[n_a + n_b:]
    unknown = set(clip_styles) - set(styles)
    if unknown:
        raise SplitError('clips use styles missing from the catalog: %s' % sorted(unknown))
    if sources is None:
        sources = [-1] * len(clip_styles)
    if len(sources) != len(clip_styles):
        raise SplitError('%d sources for %d clips' % (len(sources), len(clip_styles)))
    roots = [i if src < 0 else int(src) for i, src in enumerate(sources)]
    for i, root in enumerate(roots):
        if not 0 <= root < len(clip_styles) or clip_styles[root] != clip_styles[i]:
            raise SplitError('clip %d has an invalid source [%s]' % (i, sources[i]))
    rng = np.random.default_rng(seed)
    train, test_overlap, test_no_overlap = [], [], []
    for style in styles:
        idx = [i for i, s in enumerate(clip_styles) if s == style]
        if style in styles_c:
            test_no_overlap.extend(idx)
            continue
        if not idx:
            raise SplitError('style [%s] has no clips' % style)
        originals = sorted(set(roots[i] for i in idx))
        held = max(1, int(round(0.1 * len(originals))))
        order = rng.permutation(len(originals))
        chosen = set(originals[k] for k in order[:held])
        test_overlap.extend(i for i in idx if roots[i] in chosen)
        train.extend(i for i in idx if roots[i] not in chosen)
    return DatasetSplit(styles_a, styles_b, styles_c, sorted(train), sorted(test_overlap),
                        sorted(test_no_overlap), clip_styles)


# clip cache

def save_clip_cache(path, clips, metadata=None):
    """
    Write clips sharing one skeleton to the binary clip cache.
    """
    if not clips:
        raise ValueError('no clips to write')
    skeleton = clips[0].skeleton
    tensors = OrderedDict()
    tensors['skeleton'] = skeleton.to_array()
    for i, clip in enumerate(clips):
        if clip.skeleton != skeleton:
            raise ValueError('clip [%s] uses a different skeleton' % clip.name)
        key = 'clips/%04d/' % i
        tensors[key + 'positions'] = clip.positions
        tensors[key + 'velocities'] = clip.velocities
        tensors[key + 'rotations'] = matrix_to_rot6d(clip.rotations)
        if clip.phase is not None:
            tensors[key + 'phase_A'] = clip.phase.amplitude
            tensors[key + 'phase_S'] = clip.phase.shift
            tensors[key + 'phase_F'] = clip.phase.frequency
    meta = dict(metadata or {})
    meta.update({
        'joints': list(skeleton.names),
        'forward_axis': skeleton.forward_axis,
        'styles': [c.style for c in clips],
        'names': [c.name for c in clips],
        'fps': int(clips[0].fps),
    })
    write_container(path, tensors, meta)


def load_clip_cache(path, stage='prepare'):
    """
    :returns: ``(clips, metadata)``
    """
    tensors, meta = read_container(path, stage=stage)
    skeleton = Skeleton.from_array(meta['joints'], tensors['skeleton'],
                                   forward_axis=meta.get('forward_axis', 'z'))
    clips = []
    for i, (style, name) in enumerate(zip(meta['styles'], meta['names'])):
        key = 'clips/%04d/' % i
        phase = None
        if key + 'phase_A' in tensors:
            phase = PhaseTrack(tensors[key + 'phase_A'], tensors[key + 'phase_S'],
                               tensors[key + 'phase_F'])
        clips.append(MotionClip(skeleton, tensors[key + 'positions'],
                                rot6d_to_matrix(tensors[key + 'rotations']),
                                style=style, fps=meta.get('fps', FPS), name=name, phase=phase))
    return clips, meta


def prepare_clips(raw_clips, drop_patterns=('Wrist', 'Thumb'), mirror=True):
    """
    Resample, retarget and (optionally) mirror raw clips.

    :returns: ``(clips, sources)`` where ``sources[i]`` is the index of
      the raw clip a mirrored clip came from, or -1 for an original
    """
    clips, sources = [], []
    for clip in raw_clips:
        clip = resample_to_30fps(clip)
        clip = retarget_drop_joints(clip, joints_matching(clip.skeleton, drop_patterns))
        clips.append(clip)
        sources.append(-1)
    if mirror:
        for i in range(len(raw_clips)):
            clips.append(mirror_clip(clips[i]))
            sources.append(i)
    return clips, sources
