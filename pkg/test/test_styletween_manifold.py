# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

import os
import tempfile

import numpy as np
import pytest


def _phased(clip, channels=2):
    from styletween.skeleton import PhaseTrack
    t = np.arange(clip.n_frames)
    shift = np.mod(0.03 * t + 0.5, 1.0) - 0.5
    return clip.copy(phase=PhaseTrack(np.ones((channels, clip.n_frames)),
                                      np.tile(shift, (channels, 1)),
                                      np.full((channels, clip.n_frames), 0.03)))


def _clips(n=2, frames=30, phased=True):
    from styletween.synthetic import GaitStyle, synth_gait
    clips = [synth_gait(GaitStyle(), frames, s) for s in range(n)]
    return [_phased(c) for c in clips] if phased else clips


def _model(seed=0):
    from styletween.manifold import MotionManifold
    from styletween.synthetic import build_skeleton
    return MotionManifold(build_skeleton(), 2, np.random.default_rng(seed), experts=2, latent=4,
                          hidden=16, gate_hidden=8)


def _config(**kwargs):
    from styletween.config import ManifoldConfig
    values = dict(experts=2, latent=4, hidden=16, gate_hidden=8, window=4, epochs=2,
                  steps_per_epoch=2, batch=2)
    values.update(kwargs)
    return ManifoldConfig(**values)


def test_kl_and_reparameterize():
    from styletween.manifold import kl_divergence, reparameterize
    assert np.allclose(0.0, kl_divergence(np.zeros(3), np.zeros(3)).data)
    assert np.all(kl_divergence(np.ones(3), np.zeros(3)).data > 0)
    mu = np.array([1.0, -2.0])
    assert np.allclose(mu, reparameterize(mu, np.zeros(2), np.zeros(2)).data)
    assert np.allclose([2.0, 0.0], reparameterize(mu, np.log([1.0, 4.0]), [1.0, 1.0]).data)


def test_gate_on_simplex():
    model = _model()
    rng = np.random.default_rng(1)
    w = model.gate(rng.normal(size=(5, 4)), rng.normal(size=(5, 4))).data
    assert (5, 2) == w.shape
    assert np.all(w >= 0)
    assert np.allclose(1.0, w.sum(axis=-1))


def test_step_shapes():
    from styletween.common import ShapeError
    model = _model()
    clip = _clips(1, 5)[0]
    frames = clip.frame_vectors()
    z = np.zeros(4)
    p = clip.phase.vectors()[1]
    single = model.step(frames[0], clip.hip_features()[1], z, p)
    assert (276,) == single.shape
    batch = model.step(frames[:3], clip.hip_features()[1:4], np.zeros((3, 4)),
                       clip.phase.vectors()[1:4])
    assert (3, 276) == batch.shape
    assert np.allclose(single.data, batch.data[0])
    with pytest.raises(ShapeError):
        model.step(frames[0][:-1], clip.hip_features()[1], z, p)
    with pytest.raises(ShapeError):
        model.decode_moe(frames[:3], clip.hip_features()[1:3], np.zeros((3, 4)),
                         clip.phase.vectors()[1:4])


def test_step_velocity_matches_displacement():
    from styletween.skeleton import feature_slices
    model = _model(3)
    clip = _clips(1, 5)[0]
    s = clip.frame_vectors()[0]
    nxt = model.sample_step(s, clip.hip_features()[1], clip.phase.vectors()[1],
                            np.random.default_rng(0)).data
    pos, vel, _ = feature_slices(23)
    assert np.allclose(nxt[vel], nxt[pos] - s[pos], atol=1e-9)


def test_manifold_loss():
    from styletween.manifold import MissingLabels, manifold_loss
    model = _model()
    x = np.ones((2, 3, 276))
    mu, logvar = np.zeros((2, 3, 4)), np.zeros((2, 3, 4))
    total, parts = manifold_loss(x, x, mu, logvar, np.zeros((2, 3, 4)), model.foot_columns)
    assert 0.0 == total.item()
    assert {'rec', 'kl', 'foot'} == set(parts)
    _, parts = manifold_loss(x, x, mu, logvar, np.ones((2, 3, 4)), model.foot_columns)
    assert abs(parts['foot'] - 3.0) < 1e-12
    with pytest.raises(MissingLabels):
        manifold_loss(x, x, mu, logvar, None, model.foot_columns)


def test_train_manifold():
    from styletween.manifold import rollout, train_manifold, training_windows, window_batch
    from styletween.motion import heading_angle
    clips = _clips()
    model, curve = train_manifold(clips, _config(), seed=0, clip_length=20, clip_overlap=10,
                                  validation=clips[:1], progress=False)
    assert [0, 1] == curve.column('epoch')
    for key in ('loss', 'rec', 'kl', 'foot', 'val_rec'):
        assert all(np.isfinite(curve.column(key)))
    windows = training_windows(clips, 20, 10)
    assert 4 == len(windows)
    assert all(20 == w.n_frames for w in windows)
    assert all(abs(heading_angle(w)) < 1e-6 for w in windows)
    assert 1 == len(training_windows(_clips(1, 12), 20, 10))
    frames, hips, phases, contacts = window_batch(windows, np.random.default_rng(0), 3, 4)
    assert (3, 4, 276) == frames.shape
    assert (3, 4, 9) == hips.shape
    assert (3, 4, 4) == phases.shape
    assert (3, 4, 4) == contacts.shape
    predicted, mu, logvar = rollout(model, frames, hips, phases)
    assert (3, 3, 276) == predicted.shape
    assert (3, 3, 4) == mu.shape


def test_train_manifold_needs_phase():
    from styletween.common import EmptyDataset
    from styletween.manifold import MissingPhase, train_manifold
    with pytest.raises(MissingPhase):
        train_manifold(_clips(phased=False), _config(), progress=False)
    with pytest.raises(EmptyDataset):
        train_manifold(_clips(frames=3), _config(), progress=False)


def test_save_load_manifold():
    from styletween.common import CheckpointError
    from styletween.manifold import fit_normalizers, load_manifold, save_manifold
    model = _model(5)
    clips = _clips()
    model.set_normalizers(*fit_normalizers(clips))
    d = tempfile.mkdtemp()
    path = os.path.join(d, 'manifold.ckpt')
    save_manifold(path, model)
    loaded = load_manifold(path)
    assert model.skeleton == loaded.skeleton
    assert (2, 4, 16) == (loaded.experts, loaded.latent, loaded.hidden)
    for (name, a), (_, b) in zip(model.named_parameters(), loaded.named_parameters()):
        assert np.allclose(a.data, b.data, rtol=1e-6, atol=1e-7), name
    assert np.allclose(model.state_norm.std, loaded.state_norm.std, rtol=1e-6)
    with pytest.raises(CheckpointError) as e:
        load_manifold(os.path.join(d, 'missing.ckpt'))
    assert 'train-manifold' == e.value.stage
