# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

import os
import tempfile

import numpy as np
import pytest


def _gait(n=60, seed=0, **kwargs):
    from styletween.synthetic import GaitStyle, synth_gait
    return synth_gait(GaitStyle(**kwargs), n, seed)


def test_clip_features():
    from styletween.common import JOINT_FEATURES, NUM_JOINTS
    clip = _gait(50)
    assert (NUM_JOINTS, JOINT_FEATURES, 50) == clip.features().shape
    assert (50, NUM_JOINTS * JOINT_FEATURES) == clip.frame_vectors().shape
    assert (50, 9) == clip.hip_features().shape
    v = clip.velocities
    assert np.array_equal(v[0], v[1])
    rebuilt = clip.positions[0] + np.concatenate([np.zeros((1,) + v.shape[1:]),
                                                  np.cumsum(v[1:], axis=0)])
    assert np.max(np.abs(rebuilt - clip.positions)) < 1e-4


def test_clip_from_frame_vectors():
    from styletween.skeleton import MotionClip
    clip = _gait(10)
    again = MotionClip.from_frame_vectors(clip.skeleton, clip.frame_vectors())
    assert np.allclose(clip.positions, again.positions)
    assert np.allclose(clip.rotations, again.rotations)


def test_skeleton_validation():
    from styletween.skeleton import InvalidSkeleton, Skeleton
    with pytest.raises(InvalidSkeleton):
        Skeleton(['a', 'b'], [-1, -1], np.zeros((2, 3)))
    with pytest.raises(InvalidSkeleton):
        Skeleton(['a', 'b'], [1, -1], np.zeros((2, 3)))
    with pytest.raises(InvalidSkeleton):
        Skeleton(['a', 'a'], [-1, 0], np.zeros((2, 3)))
    with pytest.raises(InvalidSkeleton):
        Skeleton(['a'], [-1], np.zeros((1, 3)), forward_axis='w')
    skeleton = _gait(2).skeleton
    assert 0 == skeleton.hip_index
    assert ['LeftFoot', 'LeftToe', 'RightFoot', 'RightToe'] == \
        [skeleton.names[j] for j in skeleton.foot_indices]
    again = Skeleton.from_array(skeleton.names, skeleton.to_array())
    assert skeleton == again


def test_retarget_drop_joints():
    from styletween.common import NUM_JOINTS
    from styletween.motion import RetargetError, joints_matching, retarget_drop_joints
    from styletween.synthetic import GaitStyle, synth_gait
    full = synth_gait(GaitStyle(), 20, 1, thumbs=True)
    assert NUM_JOINTS + 4 == full.skeleton.num_joints
    assert full is retarget_drop_joints(full, [])
    names = joints_matching(full.skeleton, ('Wrist', 'Thumb'))
    assert 4 == len(names)
    reduced = retarget_drop_joints(full, names)
    assert NUM_JOINTS == reduced.skeleton.num_joints
    for j, name in enumerate(reduced.skeleton.names):
        k = full.skeleton.index(name)
        assert np.array_equal(full.positions[:, k], reduced.positions[:, j])
        assert np.array_equal(full.rotations[:, k], reduced.rotations[:, j])
    with pytest.raises(RetargetError):
        retarget_drop_joints(full, ['LeftLeg'])
    with pytest.raises(RetargetError):
        retarget_drop_joints(full, ['Hips'])
    with pytest.raises(RetargetError):
        retarget_drop_joints(full, ['Tail'])


def test_resample_to_30fps():
    from styletween.motion import ResampleError, resample_to_30fps
    clip = _gait(10)
    assert clip is resample_to_30fps(clip)
    fast = resample_to_30fps(clip.copy(fps=60))
    assert 30 == fast.fps
    assert 5 == fast.n_frames
    assert np.array_equal(clip.positions[[0, 2, 4, 6, 8]], fast.positions)
    assert 4 == resample_to_30fps(clip.copy(fps=90)).n_frames
    with pytest.raises(ResampleError):
        resample_to_30fps(clip.copy(fps=45))
    with pytest.raises(ResampleError):
        resample_to_30fps(clip.copy(fps=24))


def test_mirror_clip():
    from styletween.motion import mirror_clip
    clip = _gait(30)
    mirrored = mirror_clip(clip)
    assert clip.style == mirrored.style
    twice = mirror_clip(mirrored)
    assert clip.name == twice.name
    assert np.max(np.abs(twice.positions - clip.positions)) < 1e-9
    assert np.max(np.abs(twice.rotations - clip.rotations)) < 1e-9
    s = clip.skeleton
    hips, spine = s.index('Hips'), s.index('Spine2')
    for j in (hips, spine):
        assert np.allclose(np.abs(clip.positions[:, j]), np.abs(mirrored.positions[:, j]))
    left, right = s.index('LeftFoot'), s.index('RightFoot')
    assert np.allclose(mirrored.positions[:, left], clip.positions[:, right] * [-1.0, 1.0, 1.0])
    # reflected rotations stay proper
    assert np.allclose(np.linalg.det(mirrored.rotations), 1.0)


def test_mirror_pairs():
    from styletween.motion import MirrorError, mirror_indices
    from styletween.skeleton import Skeleton
    lonely = Skeleton(['Hips', 'LeftArm'], [-1, 0], np.zeros((2, 3)))
    with pytest.raises(MirrorError):
        mirror_indices(lonely)
    odd = Skeleton(['root', 'l_arm', 'r_arm'], [-1, 0, 0], np.zeros((3, 3)))
    assert [0, 2, 1] == mirror_indices(odd, {'l_arm': 'r_arm', 'r_arm': 'l_arm'})


def test_crop_windows():
    from styletween.motion import crop_windows
    clip = _gait(100)
    windows = crop_windows(clip, 60, 20)
    assert 2 == len(windows)
    assert np.array_equal(clip.positions[40], windows[1].positions[0])
    assert all(60 == w.n_frames for w in windows)
    assert 1 == len(crop_windows(_gait(60), 60, 20))
    assert 3 == len(crop_windows(_gait(140), 60, 20))
    short = crop_windows(_gait(50), 60, 20)
    assert 0 == len(short)
    assert 1 == len(short.warnings)
    with pytest.raises(ValueError):
        crop_windows(clip, 60, 60)


def test_random_crop():
    from styletween.motion import random_crop
    clip = _gait(100)
    a = random_crop(clip, 30, np.random.default_rng(4))
    b = random_crop(clip, 30, np.random.default_rng(4))
    assert 30 == a.n_frames
    assert np.array_equal(a.positions, b.positions)
    assert random_crop(clip, 101, np.random.default_rng(0)) is None


def test_orient_to_x():
    from styletween.motion import heading_angle, orient_to_x
    clip = _gait(40, seed=5)
    oriented = orient_to_x(clip)
    h = clip.skeleton.hip_index
    fwd = oriented.rotations[0, h][:, 2]
    assert fwd[0] > 0 and abs(fwd[2]) < 1e-9
    assert np.allclose([0.0, 0.0], oriented.positions[0, h][[0, 2]], atol=1e-6)
    assert abs(heading_angle(oriented)) < 1e-6
    assert np.allclose(clip.positions[0, h, 1], oriented.positions[0, h, 1])
    again = orient_to_x(oriented)
    assert np.max(np.abs(again.positions - oriented.positions)) < 1e-6
    # one rigid transform for every frame
    a = np.linalg.norm(clip.positions[0, 3] - clip.positions[30, 17])
    b = np.linalg.norm(oriented.positions[0, 3] - oriented.positions[30, 17])
    assert abs(a - b) < 1e-9


def test_contact_labels():
    from styletween.motion import contact_labels
    from styletween.synthetic import GaitStyle, idle_style, synth_gait
    idle = synth_gait(idle_style(), 20, 0)
    assert np.all(contact_labels(idle) == 1.0)
    clip, stance = synth_gait(GaitStyle(), 90, 2, return_stance=True)
    labels = contact_labels(clip)
    assert (90, 4) == labels.shape
    assert np.all(labels[stance] > 0.9)
    assert np.any(labels[~stance] < 0.1)


def test_make_splits():
    from styletween.motion import SplitError, make_splits
    styles = ['s%03d' % i for i in range(100)]
    split = make_splits(styles, styles, seed=0)
    assert (46, 44, 10) == (len(split.styles_a), len(split.styles_b), len(split.styles_c))
    ten = ['s%d' % i for i in range(10)]
    clip_styles = [s for s in ten for _ in range(8)]
    split = make_splits(ten, clip_styles, seed=3)
    assert (5, 4, 1) == (len(split.styles_a), len(split.styles_b), len(split.styles_c))
    assert ['s9'] == split.styles_c
    groups = [set(split.train), set(split.test_overlap), set(split.test_no_overlap)]
    assert set(range(80)) == groups[0] | groups[1] | groups[2]
    assert not (groups[0] & groups[1]) and not (groups[0] & groups[2])
    assert 9 == len(split.test_overlap)
    assert 8 == len(split.test_no_overlap)
    again = make_splits(ten, clip_styles, seed=3)
    assert split.to_dict() == again.to_dict()
    assert all(clip_styles[i] in split.styles_a for i in split.train_indices('A'))
    assert split.test_no_overlap == split.test_indices('C')
    with pytest.raises(SplitError):
        make_splits(['a', 'b'], ['a', 'b'], seed=0)
    with pytest.raises(SplitError):
        make_splits(ten, clip_styles + ['other'], seed=0)


def test_make_splits_keeps_mirrors_with_source():
    from styletween.motion import SplitError, make_splits
    ten = ['s%d' % i for i in range(10)]
    originals = [s for s in ten for _ in range(10)]
    clip_styles = originals + originals
    sources = [-1] * 100 + list(range(100))
    split = make_splits(ten, clip_styles, seed=0, sources=sources)
    train = set(split.train)
    assert 18 == len(split.test_overlap)
    assert 9 == len([i for i in split.test_overlap if i < 100])
    for i in split.test_overlap:
        original = i if i < 100 else sources[i]
        assert original not in train
        assert original + 100 not in train
        assert original + 100 in split.test_overlap
    for i in split.train:
        assert (i + 100 if i < 100 else sources[i]) in train
    with pytest.raises(SplitError):
        make_splits(ten, clip_styles, seed=0, sources=sources[:-1])
    with pytest.raises(SplitError):
        make_splits(ten, clip_styles, seed=0, sources=[-1] * 100 + [10] + list(range(1, 100)))


def test_split_dict():
    from styletween.motion import DatasetSplit, SplitError, make_splits
    ten = ['s%d' % i for i in range(10)]
    split = make_splits(ten, [s for s in ten for _ in range(4)], seed=1)
    assert split.to_dict() == DatasetSplit.from_dict(split.to_dict()).to_dict()
    with pytest.raises(SplitError):
        DatasetSplit.from_dict({'train': []})
    with pytest.raises(SplitError):
        split.train_indices('D')


def test_clip_cache():
    from styletween.common import CheckpointError
    from styletween.motion import load_clip_cache, save_clip_cache
    from styletween.skeleton import PhaseTrack
    clips = [_gait(20, seed=1), _gait(30, seed=2, cadence=1.2)]
    clips[1] = clips[1].copy(phase=PhaseTrack(np.ones((2, 30)), np.zeros((2, 30)),
                                              np.full((2, 30), 0.03)), style='fast')
    d = tempfile.mkdtemp()
    path = os.path.join(d, 'clips.bin')
    save_clip_cache(path, clips, {'seed': 7})
    loaded, meta = load_clip_cache(path)
    assert 7 == meta['seed']
    assert ['walk', 'fast'] == [c.style for c in loaded]
    assert loaded[0].phase is None
    assert np.allclose(0.03, loaded[1].phase.frequency)
    assert np.max(np.abs(loaded[1].positions - clips[1].positions)) < 1e-3
    assert clips[0].skeleton == loaded[0].skeleton
    # deterministic bytes
    other = os.path.join(d, 'again.bin')
    save_clip_cache(other, clips, {'seed': 7})
    with open(path, 'rb') as a, open(other, 'rb') as b:
        assert a.read() == b.read()
    with pytest.raises(CheckpointError) as e:
        load_clip_cache(os.path.join(d, 'missing.bin'))
    assert 'prepare' == e.value.stage
    with pytest.raises(ValueError):
        save_clip_cache(path, [])


def test_prepare_clips():
    from styletween.common import NUM_JOINTS
    from styletween.motion import prepare_clips
    from styletween.synthetic import GaitStyle, synth_gait
    raw = [synth_gait(GaitStyle(), 40, s, thumbs=True).copy(fps=60) for s in range(2)]
    clips, sources = prepare_clips(raw)
    assert [-1, -1, 0, 1] == sources
    assert all(NUM_JOINTS == c.skeleton.num_joints for c in clips)
    assert all(30 == c.fps and 20 == c.n_frames for c in clips)
    assert clips[2].name.endswith('#mirror')
    plain, sources = prepare_clips(raw, mirror=False)
    assert 2 == len(plain)
