# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

import numpy as np
import pytest


def test_build_skeleton():
    from styletween.common import FOOT_JOINTS, NUM_JOINTS
    from styletween.synthetic import build_skeleton
    skeleton = build_skeleton()
    assert NUM_JOINTS == skeleton.num_joints
    assert 'Hips' == skeleton.names[0]
    for name in FOOT_JOINTS:
        assert name in skeleton.names
    assert NUM_JOINTS + 4 == build_skeleton(thumbs=True).num_joints


def test_gait_style_validate():
    from styletween.synthetic import GaitStyle, ParameterError, synth_gait
    GaitStyle().validate()
    with pytest.raises(ParameterError):
        GaitStyle(cadence=0.0).validate()
    with pytest.raises(ParameterError):
        synth_gait(GaitStyle(cadence=-1.0), 10, 0)
    with pytest.raises(ParameterError):
        GaitStyle(stride=-1.0).validate()
    with pytest.raises(ParameterError):
        GaitStyle(crouch=1.0).validate()


def test_idle_is_still():
    from styletween.synthetic import idle_style, synth_gait
    clip = synth_gait(idle_style(), 30, 3)
    assert np.all(clip.velocities == 0.0)


def test_gait_deterministic():
    from styletween.synthetic import GaitStyle, synth_gait
    a = synth_gait(GaitStyle(), 40, 11)
    b = synth_gait(GaitStyle(), 40, 11)
    c = synth_gait(GaitStyle(), 40, 12)
    assert np.array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions, c.positions)


def test_gait_bones_rigid():
    from styletween.synthetic import GaitStyle, synth_gait
    clip = synth_gait(GaitStyle(lean=10.0), 50, 2)
    s = clip.skeleton
    for j, p in enumerate(s.parents):
        if p < 0:
            continue
        length = np.linalg.norm(clip.positions[:, j] - clip.positions[:, p], axis=-1)
        assert np.allclose(length, np.linalg.norm(s.offsets[j]), atol=1e-6)


def test_gait_feet_do_not_skate():
    from styletween.metrics import foot_skate
    from styletween.synthetic import GaitStyle, synth_gait
    clip, stance = synth_gait(GaitStyle(), 120, 0, return_stance=True)
    feet = clip.skeleton.foot_indices
    speed = np.linalg.norm(clip.velocities[:, feet], axis=-1)
    assert np.max(speed[stance]) < 1e-6
    assert foot_skate(clip.positions, feet) < 0.01


def test_cadence_sets_period():
    from styletween.spectral import dominant_bin, power_spectrum
    from styletween.synthetic import GaitStyle, synth_gait

    def peak(cadence):
        clip = synth_gait(GaitStyle(cadence=cadence), 300, 1)
        height = clip.positions[:, 0, 1]
        return int(dominant_bin(power_spectrum(height - height.mean())))
    # hip height bobs twice per gait cycle
    assert 20 == peak(1.0)
    assert 40 == peak(2.0)


def test_heading():
    from styletween.motion import heading_angle
    from styletween.synthetic import GaitStyle, synth_gait
    clip = synth_gait(GaitStyle(), 10, 0, heading=0.0)
    assert abs(heading_angle(clip) - np.pi / 2) < 1e-9
    # walking along +Z
    step = clip.positions[-1, 0] - clip.positions[0, 0]
    assert step[2] > abs(step[0])


def test_synth_catalog():
    from styletween.synthetic import synth_catalog
    styles, clips = synth_catalog(n_styles=3, clips_per_style=2, n_frames=20, seed=4)
    assert 3 == len(styles)
    assert 3 == len(set(s.name for s in styles))
    assert 6 == len(clips)
    assert [s.name for s in styles for _ in range(2)] == [c.style for c in clips]
    assert all(20 == c.n_frames for c in clips)
    _, again = synth_catalog(n_styles=3, clips_per_style=2, n_frames=20, seed=4)
    assert all(np.array_equal(a.positions, b.positions) for a, b in zip(clips, again))
