# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

import os
import tempfile

import numpy as np
import pytest

STYLE_FRAMES = 8


def _phased(clip, channels=2):
    from styletween.skeleton import PhaseTrack
    t = np.arange(clip.n_frames)
    shift = np.mod(0.03 * t + 0.5, 1.0) - 0.5
    return clip.copy(phase=PhaseTrack(np.ones((channels, clip.n_frames)),
                                      np.tile(shift, (channels, 1)),
                                      np.full((channels, clip.n_frames), 0.03)))


def _clips(n=2, frames=20, phased=True, name='walk'):
    from styletween.synthetic import GaitStyle, synth_gait
    clips = [synth_gait(GaitStyle(name=name), frames, s) for s in range(n)]
    return [_phased(c) for c in clips] if phased else clips


def _manifold():
    from styletween.manifold import MotionManifold
    from styletween.synthetic import build_skeleton
    return MotionManifold(build_skeleton(), 2, np.random.default_rng(0), experts=2, latent=4,
                          hidden=16, gate_hidden=8)


def _config(**kwargs):
    from styletween.config import SamplerConfig
    values = dict(hidden=8, style_channels=4, curriculum_start=3, curriculum_end=4, epochs=2,
                  steps_per_epoch=1, batch=2)
    values.update(kwargs)
    return SamplerConfig(**values)


def _sampler(manifold, **kwargs):
    from styletween.sampler import build_sampler
    return build_sampler(manifold, _config(**kwargs), np.random.default_rng(1), STYLE_FRAMES)


def _snapshot(module):
    return dict((name, (p.group, p.data.copy())) for name, p in module.named_parameters())


def test_time_embedding():
    from styletween.common import ConfigError
    from styletween.sampler import time_embedding
    assert np.allclose([0.0, 1.0, 0.0, 1.0], time_embedding(0, 4))
    z = time_embedding(7, 4)
    assert np.allclose([np.sin(7.0), np.cos(7.0), np.sin(0.07), np.cos(0.07)], z)
    assert (3, 8) == time_embedding(np.arange(3), 8).shape
    with pytest.raises(ConfigError):
        time_embedding(1, 5)


def test_noise_schedule():
    from styletween.sampler import noise_scale, noise_schedule
    assert 0.0 == noise_scale(5)
    assert 0.0 == noise_scale(0)
    assert 0.5 == noise_scale(17.5)
    assert 1.0 == noise_scale(30)
    assert 1.0 == noise_scale(100)
    assert np.all(noise_schedule(3, 0, (4,)) == 0.0)
    a = noise_schedule(40, 1, (1000,))
    assert np.array_equal(a, noise_schedule(40, 1, (1000,)))
    assert abs(np.var(a) - 0.5) < 0.1


def test_frequency_wrap():
    from styletween.sampler import frequency_wrap
    assert abs(frequency_wrap(0.4, -0.4) + 0.2) < 1e-12
    assert abs(frequency_wrap(-0.45, 0.45) - 0.1) < 1e-12
    assert abs(frequency_wrap(0.1, 0.05) - 0.05) < 1e-12
    assert np.allclose([0.1, -0.2], frequency_wrap([0.1, 0.4], [0.0, -0.4]))


def test_phase_update():
    from styletween.phase import phase_vector
    from styletween.sampler import phase_update
    p_t = phase_vector([1.0], [0.0])
    p_hat = phase_vector([1.0], [0.1])
    assert np.allclose(phase_vector([1.0], [0.1]), phase_update(p_t, p_hat, [1.0], [0.1]))
    # halfway between the advanced and the predicted angle, mean amplitude
    out = phase_update(p_t, phase_vector([3.0], [0.2]), [1.0], [0.0])
    assert np.allclose(phase_vector([2.0], [0.1]), out)
    # a zero current phase contributes no angle
    out = phase_update(np.zeros(2), phase_vector([1.0], [0.3]), [1.0], [0.05])
    assert np.allclose(phase_vector([1.0], [0.3]), out)


def test_phase_update_tensor_matches():
    from styletween.phase import phase_vector
    from styletween.sampler import phase_update, phase_update_tensor
    from styletween.tensor import Tensor
    rng = np.random.default_rng(2)
    amp = rng.uniform(0.5, 2.0, size=(4, 3))
    freq = rng.uniform(0.0, 0.1, size=(4, 3))
    p_t = phase_vector(rng.uniform(0.5, 2.0, size=(4, 3)), rng.uniform(-0.5, 0.5, size=(4, 3)))
    p_hat = phase_vector(rng.uniform(0.5, 2.0, size=(4, 3)), rng.uniform(-0.5, 0.5, size=(4, 3)))
    p_next, p_tilde = phase_update_tensor(Tensor(p_t), Tensor(p_hat), Tensor(amp), Tensor(freq))
    assert np.allclose(phase_update(p_t, p_hat, amp, freq), p_next.data, atol=1e-6)
    pairs = p_tilde.data.reshape(4, 3, 2)
    assert np.allclose(amp, np.hypot(pairs[..., 0], pairs[..., 1]), atol=1e-6)


def test_phase_update_tensor_stays_on_circle():
    from styletween.phase import phase_vector
    from styletween.sampler import phase_update_tensor
    from styletween.tensor import Tensor
    amp = np.array([[0.7, 1.3, 2.0]])
    freq = np.array([[0.02, 0.05, 0.11]])
    shift = np.array([[0.3, -0.45, 0.0]])
    p = Tensor(phase_vector(amp, shift))
    for _ in range(40):
        shift = shift + freq
        p_hat = Tensor(phase_vector(amp, shift))
        p_next, p_tilde = phase_update_tensor(p, p_hat, Tensor(amp), Tensor(freq))
        before = p.data.reshape(1, 3, 2)
        after = p_next.data.reshape(1, 3, 2)
        assert np.allclose(amp, np.hypot(after[..., 0], after[..., 1]), atol=1e-6)
        turned = np.arctan2(after[..., 0], after[..., 1]) - np.arctan2(before[..., 0],
                                                                        before[..., 1])
        turned = np.mod(turned + np.pi, 2.0 * np.pi) - np.pi
        assert np.allclose(2.0 * np.pi * freq, turned, atol=1e-6)
        assert np.allclose(p_next.data, p_tilde.data, atol=1e-6)
        p = p_next


def test_sampler_construction():
    from styletween.common import ConfigError
    from styletween.sampler import FINETUNE_GROUPS, Sampler
    with pytest.raises(ConfigError):
        Sampler(276, 2, 4, np.random.default_rng(0), hidden=7)
    sampler = _sampler(_manifold())
    groups = set(p.group for p in sampler.parameters())
    assert set(FINETUNE_GROUPS) <= groups
    plain = _sampler(_manifold(), use_attention=False)
    assert 'atn_linear' not in set(p.group for p in plain.parameters())


def test_encode_style():
    from styletween.sampler import StyleClipTooShort, encode_style
    sampler = _sampler(_manifold())
    k = encode_style(sampler, _clips(1, 12)[0])
    assert (4, 2) == k.shape
    with pytest.raises(StyleClipTooShort):
        encode_style(sampler, _clips(1, STYLE_FRAMES - 1)[0])


def test_step_needs_state():
    from styletween.sampler import StateError
    sampler = _sampler(_manifold())
    with pytest.raises(StateError):
        sampler(None, np.zeros(276), np.zeros((1, 4, 2)))


def _elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _linear(layer, x):
    y = x @ layer.weight.data
    return y if layer.bias is None else y + layer.bias.data


def _mlp(mlp, x):
    for i in range(mlp.n_layers):
        x = _linear(getattr(mlp, 'layer%d' % i), x)
        if i < mlp.n_layers - 1:
            x = _elu(x)
    return x


def _film(film, x, cond):
    gb = _linear(film.linear, cond)
    return (1.0 + gb[:, :film.channels]) * x + gb[:, film.channels:]


def _attention(att, query, sequence):
    seq = np.swapaxes(sequence, 1, 2)
    q = _linear(att.query, query)
    scores = np.einsum('btw,bw->bt', _linear(att.key, seq), q) / np.sqrt(att.width)
    weights = np.exp(scores - scores.max(axis=1, keepdims=True))
    weights /= weights.sum(axis=1, keepdims=True)
    return np.einsum('btw,bt->bw', _linear(att.value, seq), weights)


def _unrolled_step(sampler, frame, target, k, phase, h, c, remaining):
    from styletween.sampler import phase_update, time_embedding
    mean, std = sampler.state_norm.mean, sampler.state_norm.std
    z_dt = time_embedding(remaining, sampler.hidden)
    pooled = k.mean(axis=-1)
    e_stat = _mlp(sampler.state_encoder, (frame - mean) / std)
    x = _film(sampler.style_film, e_stat, pooled)
    x = np.concatenate([x, _attention(sampler.style_attention, e_stat, k)], axis=-1)
    e_sty = _mlp(sampler.style_mlp, x)
    h_target = np.concatenate([_mlp(sampler.target_encoder, (target - mean) / std),
                               _mlp(sampler.offset_encoder, (target - frame) / std)], axis=-1)
    h_target = h_target + z_dt
    lstm = sampler.lstm
    z = np.concatenate([e_sty + z_dt, h_target], axis=-1) @ lstm.w_ih.data \
        + h @ lstm.w_hh.data + lstm.bias.data
    H = sampler.hidden
    c = _sigmoid(z[:, H:2 * H]) * c + _sigmoid(z[:, :H]) * np.tanh(z[:, 2 * H:3 * H])
    h = _sigmoid(z[:, 3 * H:]) * np.tanh(c)
    y = _linear(sampler.decoder_in, np.concatenate([phase, h, h_target], axis=-1))
    y = _elu(_film(sampler.decoder_film, y, pooled))
    y = _elu(_linear(sampler.decoder_hidden, y))
    out = {
        'z': _linear(sampler.head_z, y),
        'p_hat': _linear(sampler.head_phase, y),
        'A': np.logaddexp(0.0, _linear(sampler.head_amplitude, y)),
        'F': _linear(sampler.head_frequency, y),
        'v_h': _linear(sampler.head_hip, y) * sampler.hip_norm.std + sampler.hip_norm.mean,
    }
    out['p'] = phase_update(phase, out['p_hat'], out['A'], out['F'])
    return out, h, c


def _step_inputs(seed=5):
    from styletween.phase import phase_vector
    from styletween.training import Normalizer
    rng = np.random.default_rng(seed)
    sampler = _sampler(_manifold())
    sampler.set_normalizers(Normalizer(rng.normal(size=276), rng.uniform(0.5, 2.0, size=276)),
                            Normalizer(rng.normal(size=9), rng.uniform(0.5, 2.0, size=9)))
    frame = rng.normal(size=(2, 276))
    target = rng.normal(size=(2, 276))
    k = rng.normal(size=(2, 4, 2))
    phase = phase_vector(rng.uniform(0.5, 1.5, size=(2, 2)), rng.uniform(-0.5, 0.5, size=(2, 2)))
    return sampler, frame, target, k, phase


def test_sampler_step_matches_unrolled_network():
    from styletween.sampler import sampler_step
    from styletween.tensor import Tensor
    sampler, frame, target, k, phase = _step_inputs()
    state = sampler.initial_state(frame, phase, 12)
    h, c = np.zeros((2, 8)), np.zeros((2, 8))
    for remaining in (12, 11):
        out, state = sampler_step(sampler, state, target, Tensor(k))
        expected, h, c = _unrolled_step(sampler, frame, target, k, phase, h, c, remaining)
        for key in ('z', 'p_hat', 'A', 'F', 'v_h'):
            assert np.allclose(expected[key], out[key].data, rtol=1e-9, atol=1e-12), key
        assert np.allclose(expected['p'], out['p'].data, atol=1e-6)
        assert np.allclose(h, state.h.data, rtol=1e-9, atol=1e-12)
        assert np.allclose(c, state.c.data, rtol=1e-9, atol=1e-12)
        assert remaining - 1 == state.remaining
        # next step starts from a moved frame and the updated phase
        frame = frame + 0.1
        phase = out['p'].data
        state = state.with_frame(Tensor(frame))


def test_sampler_step_gradients():
    from styletween import tensor as T
    from styletween.sampler import sampler_step
    from styletween.tensor import Tensor, check_gradients
    sampler, frame, target, k, phase = _step_inputs(6)
    rng = np.random.default_rng(7)
    weights = dict((key, rng.normal(size=shape)) for key, shape in
                   (('z', (1, 4)), ('p', (1, 4)), ('v_h', (1, 9)), ('p_tilde', (1, 4))))
    leaves = [Tensor(frame[:1], requires_grad=True), Tensor(target[:1], requires_grad=True),
              Tensor(phase[:1], requires_grad=True)]

    def loss(frame, target, phase):
        out, _ = sampler_step(sampler, sampler.initial_state(frame, phase, 9), target,
                              Tensor(k[:1]))
        return sum((T.sum_(out[key] * w) for key, w in weights.items()), T.sum_(out['A'] * 0.5))

    check_gradients(loss, leaves)


def test_sampler_step_without_gradients_matches():
    from styletween.sampler import sampler_step
    from styletween.tensor import Tensor, no_grad
    sampler, frame, target, k, phase = _step_inputs(8)
    recorded, _ = sampler_step(sampler, sampler.initial_state(frame, phase, 20), target, Tensor(k))
    with no_grad():
        plain, state = sampler_step(sampler, sampler.initial_state(frame, phase, 20), target,
                                    Tensor(k))
    for key in ('z', 'p_hat', 'A', 'F', 'v_h'):
        assert np.array_equal(recorded[key].data, plain[key].data)
    assert np.allclose(recorded['p'].data, plain['p'].data, atol=1e-6)
    assert np.allclose(recorded['p_tilde'].data, plain['p_tilde'].data, atol=1e-6)
    assert not plain['p'].requires_grad
    assert 19 == state.remaining


def test_synthesize_transition():
    from styletween.sampler import synthesize_transition
    from styletween.skeleton import feature_slices
    manifold = _manifold()
    sampler = _sampler(manifold)
    clip = _clips(1, 20)[0]
    frames = clip.frame_vectors()
    a = synthesize_transition(manifold, sampler, frames[0], frames[-1], 10, clip, seed=4,
                              start_phase=clip.phase.vectors()[0])
    assert (11, 276) == a.frames.shape
    assert (11, 4) == a.phases.shape
    assert 10 == len(a.times)
    assert np.array_equal(frames[0], a.frames[0])
    pos, vel, _ = feature_slices(23)
    assert np.allclose(a.frames[1:, vel], a.frames[1:, pos] - a.frames[:-1, pos], atol=1e-9)
    b = synthesize_transition(manifold, sampler, frames[0], frames[-1], 10, clip, seed=4,
                              start_phase=clip.phase.vectors()[0])
    assert np.array_equal(a.frames, b.frames)
    c = synthesize_transition(manifold, sampler, frames[0], frames[-1], 10, clip, seed=5,
                              start_phase=clip.phase.vectors()[0])
    assert not np.array_equal(a.frames, c.frames)
    assert 11 == a.to_clip(style='walk').n_frames


def test_synthesize_transition_errors():
    from styletween.common import CheckpointError, ShapeError
    from styletween.manifold import MotionManifold
    from styletween.sampler import DurationError, synthesize_transition
    from styletween.synthetic import build_skeleton
    manifold = _manifold()
    sampler = _sampler(manifold)
    clip = _clips(1, 20)[0]
    frames = clip.frame_vectors()
    with pytest.raises(DurationError):
        synthesize_transition(manifold, sampler, frames[0], frames[-1], 0, clip)
    with pytest.raises(DurationError):
        synthesize_transition(manifold, sampler, frames[0], frames[-1], 50, clip, max_duration=40)
    with pytest.raises(ShapeError):
        synthesize_transition(manifold, sampler, frames[0][:-1], frames[-1], 5, clip)
    other = MotionManifold(build_skeleton(), 3, np.random.default_rng(0), experts=2, latent=4,
                           hidden=16, gate_hidden=8)
    with pytest.raises(CheckpointError):
        synthesize_transition(other, sampler, frames[0], frames[-1], 5, clip)


def test_sampler_loss_requirements():
    from styletween.manifold import MissingLabels, MissingPhase
    from styletween.sampler import sampler_loss
    x = np.zeros((1, 3, 276))
    phase = {'A': np.zeros((1, 3, 2)), 'F': np.zeros((1, 3, 2)),
             'p_hat': np.zeros((1, 3, 4)), 'p_tilde': np.zeros((1, 3, 4))}
    target = {'A': np.zeros((1, 3, 2)), 'F': np.zeros((1, 3, 2)), 'p': np.zeros((1, 3, 4))}
    total, parts = sampler_loss(x, x, phase, target, np.zeros((1, 3, 4)), np.zeros((0, 3)))
    assert 0.0 == total.item()
    assert {'rec', 'last', 'foot', 'phase'} == set(parts)
    with pytest.raises(MissingPhase):
        sampler_loss(x, x, phase, None, np.zeros((1, 3, 4)), np.zeros((0, 3)))
    with pytest.raises(MissingLabels):
        sampler_loss(x, x, phase, target, None, np.zeros((0, 3)))


def test_train_sampler():
    from styletween.sampler import train_sampler
    manifold = _manifold()
    before = _snapshot(manifold)
    sampler, curve = train_sampler(_clips(), manifold, _config(), seed=0,
                                   style_length=STYLE_FRAMES, progress=False)
    assert [3, 4] == curve.column('length')
    for key in ('loss', 'rec', 'last', 'foot', 'phase'):
        assert all(np.isfinite(curve.column(key)))
    after = _snapshot(manifold)
    assert all(np.array_equal(before[k][1], after[k][1]) for k in before)
    assert all(p.requires_grad for p in manifold.parameters())
    assert STYLE_FRAMES == sampler.style_length


def test_train_sampler_errors():
    from styletween.common import EmptyDataset
    from styletween.manifold import MissingPhase
    from styletween.sampler import train_sampler
    with pytest.raises(MissingPhase):
        train_sampler(_clips(phased=False), _manifold(), _config(), style_length=STYLE_FRAMES,
                      progress=False)
    with pytest.raises(EmptyDataset):
        train_sampler(_clips(frames=6), _manifold(), _config(), style_length=STYLE_FRAMES,
                      progress=False)


def test_augment_clips():
    from styletween.manifold import MissingPhase
    from styletween.phase import PeriodicAutoencoder, fit_normalizer
    from styletween.sampler import augment_clips
    clips = _clips(2, 20)
    pae = PeriodicAutoencoder(69, np.random.default_rng(0), channels=2, window=13, hidden=4)
    out = augment_clips(clips, np.random.default_rng(0), (pae, fit_normalizer(clips)),
                        style_length=STYLE_FRAMES)
    assert 6 == len(out)
    assert out[1].name.endswith('#mirror')
    assert out[2].n_frames == 15
    assert all(2 == c.phase.channels for c in out)
    assert out[0].phase is clips[0].phase
    # mirrored clips need a fresh phase track
    with pytest.raises(MissingPhase):
        augment_clips(clips, np.random.default_rng(0), style_length=STYLE_FRAMES)


def test_finetune_style_changes_selected_groups():
    from styletween.common import ConfigError, EmptyDataset
    from styletween.config import FinetuneConfig
    from styletween.sampler import finetune_style
    manifold = _manifold()
    sampler = _sampler(manifold)
    before = _snapshot(sampler)
    config = FinetuneConfig(epochs=1, steps_per_epoch=1, batch=2, augment=False,
                            curriculum_start=3, curriculum_end=4,
                            groups=['style_encoder'])
    _, curve = finetune_style(sampler, manifold, _clips(2, 20, name='new'), config, seed=0,
                              progress=False)
    assert 1 == len(curve.rows)
    after = _snapshot(sampler)
    changed = [k for k in before if not np.array_equal(before[k][1], after[k][1])]
    assert changed
    assert all('style_encoder' == before[k][0] for k in changed)
    assert all(p.requires_grad for p in sampler.parameters())
    with pytest.raises(ConfigError):
        finetune_style(sampler, manifold, _clips(), FinetuneConfig(groups=['lstm']),
                       progress=False)
    with pytest.raises(EmptyDataset):
        finetune_style(sampler, manifold, [], config, progress=False)


def test_save_load_sampler():
    from styletween.common import CheckpointError
    from styletween.sampler import load_sampler, save_sampler
    sampler = _sampler(_manifold(), t_zero=4.0)
    d = tempfile.mkdtemp()
    path = os.path.join(d, 'sampler.ckpt')
    save_sampler(path, sampler)
    loaded = load_sampler(path)
    assert (STYLE_FRAMES, 4.0, 8) == (loaded.style_length, loaded.t_zero, loaded.hidden)
    for (name, a), (_, b) in zip(sampler.named_parameters(), loaded.named_parameters()):
        assert np.allclose(a.data, b.data, rtol=1e-6, atol=1e-7), name
        assert a.group == b.group
    with pytest.raises(CheckpointError) as e:
        load_sampler(os.path.join(d, 'missing.ckpt'))
    assert 'train-sampler' == e.value.stage
