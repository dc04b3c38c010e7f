# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Autoregressive motion sampler.

Every step the sampler reads the current frame, the target frame, the
current phase vector and a temporal style code, and predicts the
latent ``z``, the next phase and the next hip feature.  The frozen
manifold turns these into the next frame.
"""

import logging
import time

import numpy as np
from tqdm import tqdm

from . import tensor as T
from .common import ConfigError, EmptyDataset, CheckpointError, ShapeError
from .container import load_module_state, save_module
from .layers import Attention, Conv1d, FiLM, Linear, LSTMCell, MLP, Module
from .manifold import HIP_FEATURES, MissingLabels, MissingPhase
from .motion import contact_labels, mirror_clip, orient_to_x, random_crop
from .optim import Amsgrad
from .phase import extract_phase_track, phase_vector
from .rotations import rotate2d, slerp_angle
from .skeleton import MotionClip
from .tensor import Tensor, no_grad
from .training import LossCurve, Normalizer, check_finite, curriculum_length

logger = logging.getLogger(__name__)

STYLE_LENGTH = 120
FINETUNE_GROUPS = ('style_encoder', 'film_linear', 'atn_linear')

_EPS = 1e-8


class StyleClipTooShort(ValueError):
    pass


class StateError(ValueError):
    pass


class DurationError(ValueError):
    pass


def time_embedding(dt, d):
    """
    Sinusoidal embedding of the frames remaining until the target,
    ``z[2i] = sin(dt / 10000^(2i/d))`` and ``z[2i+1]`` the cosine.

    :param dt: frames remaining, scalar or array
    :param d: embedding width, even
    :returns: ``(..., d)``
    :raises: :exc:`ConfigError` for odd *d*
    """
    if d % 2:
        raise ConfigError('time embedding width must be even, got %d' % d)
    dt = np.asarray(dt, dtype=np.float64)
    i = np.arange(d // 2)
    angle = dt[..., None] / np.power(10000.0, 2.0 * i / d)
    z = np.empty(dt.shape + (d,))
    z[..., 0::2] = np.sin(angle)
    z[..., 1::2] = np.cos(angle)
    return z


def noise_scale(remaining, t_zero=5.0, t_period=30.0):
    """
    ``clamp((remaining - t_zero) / (t_period - t_zero), 0, 1)``
    """
    return float(np.clip((remaining - t_zero) / (t_period - t_zero), 0.0, 1.0))


def noise_schedule(remaining, seed, shape, t_zero=5.0, t_period=30.0, variance=0.5):
    """
    Target noise, zero-mean Gaussian with *variance* scaled by
    :func:`noise_scale`.

    :param seed: ``int`` or ``numpy.random.Generator``
    """
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(shape) * np.sqrt(variance)
    return noise_scale(remaining, t_zero, t_period) * eps


def frequency_wrap(shift, previous):
    """
    Frame-to-frame change of the signed shift, wrapped into
    ``[-0.5, 0.5]``: ``+1`` below ``-0.5`` and ``-1`` above ``0.5``.
    """
    d = np.asarray(shift, dtype=np.float64) - np.asarray(previous, dtype=np.float64)
    d = np.where(d > 0.5, d - 1.0, d)
    d = np.where(d < -0.5, d + 1.0, d)
    if d.ndim == 0:
        return float(d)
    return d


def _channel_angles(p):
    p = np.asarray(p, dtype=np.float64)
    pairs = p.reshape(p.shape[:-1] + (-1, 2))
    return np.arctan2(pairs[..., 0], pairs[..., 1]), np.hypot(pairs[..., 0], pairs[..., 1])


def advance_phase(p_t, amplitude, frequency, dt=1.0):
    """
    Current phase advanced by ``2 pi F dt`` and rescaled to *amplitude*.
    A channel of zero amplitude stays at zero.

    :returns: ``(..., 2 N_p)``
    """
    p_t = np.asarray(p_t, dtype=np.float64)
    pairs = p_t.reshape(p_t.shape[:-1] + (-1, 2))
    # (sin, cos) pairs advance clockwise in the plane
    turned = rotate2d(pairs, -2.0 * np.pi * np.asarray(frequency, dtype=np.float64) * dt)
    norm = np.linalg.norm(turned, axis=-1, keepdims=True)
    unit = np.divide(turned, norm, out=np.zeros_like(turned), where=norm > 0)
    return (np.asarray(amplitude, dtype=np.float64)[..., None] * unit).reshape(p_t.shape)


def phase_update(p_t, p_hat, amplitude, frequency, dt=1.0):
    """
    Next phase vector from the current one and the sampler's
    predictions.  The current phase is advanced by ``2 pi F dt``
    and rescaled to the predicted amplitude; its angle is then
    slerped halfway toward the predicted phase, and the amplitudes are
    averaged.  A current phase of zero amplitude contributes no angle.

    :param p_t: ``(..., 2 N_p)``
    :param p_hat: ``(..., 2 N_p)``
    :param amplitude: ``(..., N_p)``, non-negative
    :param frequency: cycles per frame, ``(..., N_p)``
    :returns: ``(..., 2 N_p)``
    """
    _, norm_t = _channel_angles(p_t)
    advanced, _ = _channel_angles(advance_phase(p_t, np.ones_like(norm_t), frequency, dt))
    angle_hat, norm_hat = _channel_angles(p_hat)
    angle = np.where(norm_t > 0, slerp_angle(advanced, angle_hat, 0.5), angle_hat)
    amp = 0.5 * (np.asarray(amplitude, dtype=np.float64) + norm_hat)
    return phase_vector(amp, angle / (2.0 * np.pi))


def _unit_pairs(x, y):
    n = T.sqrt(x * x + y * y + _EPS)
    return x / n, y / n


def phase_update_tensor(p_t, p_hat, amplitude, frequency, dt=1.0):
    """
    Differentiable :func:`phase_update`.  The halfway slerp is the
    normalized sum of the two unit phase vectors.

    :returns: ``(p_next, p_tilde)``, each ``(B, 2 N_p)``
    """
    B, width = p_t.shape
    pairs = T.reshape(p_t, (B, width // 2, 2))
    x, y = pairs[..., 0], pairs[..., 1]
    theta = (2.0 * np.pi * dt) * frequency
    c, s = T.cos(theta), T.sin(theta)
    ux, uy = _unit_pairs(x * c + y * s, y * c - x * s)
    p_tilde = T.reshape(T.stack([amplitude * ux, amplitude * uy], axis=-1), (B, width))
    hat = T.reshape(p_hat, (B, width // 2, 2))
    hx, hy = hat[..., 0], hat[..., 1]
    hat_norm = T.sqrt(hx * hx + hy * hy + _EPS)
    mx, my = _unit_pairs(ux + hx / hat_norm, uy + hy / hat_norm)
    amp = 0.5 * (amplitude + hat_norm)
    p_next = T.reshape(T.stack([amp * mx, amp * my], axis=-1), (B, width))
    return p_next, p_tilde


class StyleEncoder(Module):
    """
    Two stride-2 convolutions: a ``(B, D, 120)`` style clip becomes a
    ``(B, C_s, 30)`` temporal style code.
    """

    def __init__(self, in_channels, channels, rng, kernel=3):
        super(StyleEncoder, self).__init__()
        self.in_channels = in_channels
        self.channels = channels
        self.conv1 = Conv1d(in_channels, channels, kernel, rng, stride=2, padding=kernel // 2)
        self.conv2 = Conv1d(channels, channels, kernel, rng, stride=2, padding=kernel // 2)
        self.set_group('style_encoder')

    def forward(self, x):
        return T.elu(self.conv2(T.elu(self.conv1(x))))


class SamplerState(object):
    """
    Recurrent state: LSTM hidden and cell, current frame ``(B, D)``,
    current phase ``(B, 2 N_p)`` and frames remaining.
    """

    def __init__(self, h, c, frame, phase, remaining):
        self.h = h
        self.c = c
        self.frame = frame
        self.phase = phase
        self.remaining = remaining

    def with_frame(self, frame):
        return SamplerState(self.h, self.c, frame, self.phase, self.remaining)


class Sampler(Module):

    def __init__(self, frame_width, phase_channels, latent, rng, hidden=128, style_channels=64,
                 use_attention=True, style_length=STYLE_LENGTH):
        super(Sampler, self).__init__()
        if hidden % 2:
            raise ConfigError('sampler hidden width must be even, got %d' % hidden)
        self.frame_width = frame_width
        self.phase_channels = phase_channels
        self.latent = latent
        self.hidden = hidden
        self.style_channels = style_channels
        self.use_attention = bool(use_attention)
        self.style_length = style_length
        D, H, C = frame_width, hidden, style_channels

        self.style_encoder = StyleEncoder(D, C, rng)
        self.state_encoder = MLP([D, H, H], rng)
        self.target_encoder = MLP([D, H, H // 2], rng)
        self.offset_encoder = MLP([D, H, H // 2], rng)
        self.style_film = FiLM(C, H, rng).set_group('film_linear')
        if self.use_attention:
            self.style_attention = Attention(H, C, H, rng).set_group('atn_linear')
        self.style_mlp = MLP([2 * H if self.use_attention else H, H, H], rng)
        self.lstm = LSTMCell(2 * H, H, rng)
        self.decoder_in = Linear(2 * phase_channels + 2 * H, H, rng)
        self.decoder_film = FiLM(C, H, rng).set_group('film_linear')
        self.decoder_hidden = Linear(H, H, rng)
        self.head_z = Linear(H, latent, rng)
        self.head_phase = Linear(H, 2 * phase_channels, rng)
        self.head_amplitude = Linear(H, phase_channels, rng)
        self.head_frequency = Linear(H, phase_channels, rng)
        self.head_hip = Linear(H, HIP_FEATURES, rng)

        self.state_norm = Normalizer(np.zeros(D), np.ones(D))
        self.hip_norm = Normalizer(np.zeros(HIP_FEATURES), np.ones(HIP_FEATURES))
        self.t_zero = 5.0
        self.t_period = 30.0
        self.noise_var = 0.5

    def set_normalizers(self, state, hip):
        self.state_norm = state
        self.hip_norm = hip

    def _norm(self, s):
        return (s - self.state_norm.mean) / self.state_norm.std

    def style_input(self, clips):
        """
        Normalized style windows ``(B, D, style_length)``; each clip is
        oriented to face +X.
        """
        windows = []
        for clip in clips:
            if clip.n_frames < self.style_length:
                raise StyleClipTooShort('style clip [%s] has %d frames, %d needed'
                                        % (clip.name, clip.n_frames, self.style_length))
            clip = orient_to_x(clip.slice(0, self.style_length))
            windows.append(self.state_norm.normalize(clip.frame_vectors()).T)
        return np.stack(windows)

    def style_embedding(self, e_stat, k):
        pooled = T.mean(k, axis=-1)
        x = self.style_film(e_stat, pooled)
        if self.use_attention:
            x = T.concat([x, self.style_attention(e_stat, k)], axis=-1)
        return self.style_mlp(x)

    def initial_state(self, frame, phase, remaining):
        frame = T.as_tensor(frame)
        phase = T.as_tensor(phase)
        if frame.ndim == 1:
            frame = T.reshape(frame, (1, frame.shape[0]))
        if phase.ndim == 1:
            phase = T.reshape(phase, (1, phase.shape[0]))
        if frame.shape[1] != self.frame_width or phase.shape[1] != 2 * self.phase_channels:
            raise ShapeError('sampler state does not fit the network', frame.shape, phase.shape)
        h, c = self.lstm.initial_state(frame.shape[0])
        return SamplerState(h, c, frame, phase, remaining)

    def forward(self, state, target, k, rng=None):
        """
        One sampler step.

        :param state: :class:`SamplerState`
        :param target: target frames ``(B, D)``
        :param k: style codes ``(B, C_s, T_s)``
        :param rng: generator for the target noise; ``None`` disables it
        :returns: ``(outputs, state)``.  *outputs* holds ``z``, ``p_hat``,
          ``A``, ``F``, ``v_h``, the updated phase ``p`` and ``p_tilde``
        :raises: :exc:`StateError`
        """
        if not isinstance(state, SamplerState) or state.h is None or state.frame is None:
            raise StateError('sampler step needs an initialized state')
        s = state.frame
        target = T.as_tensor(target)
        if target.ndim == 1:
            target = T.reshape(target, (1, target.shape[0]))
        B = s.shape[0]
        z_dt = time_embedding(state.remaining, self.hidden)

        e_sty = self.style_embedding(self.state_encoder(self._norm(s)), k)
        h_target = T.concat([self.target_encoder(self._norm(target)),
                             self.offset_encoder((target - s) / self.state_norm.std)], axis=-1)
        h_target = h_target + z_dt
        if rng is not None:
            h_target = h_target + noise_schedule(state.remaining, rng, (B, self.hidden),
                                                 self.t_zero, self.t_period, self.noise_var)
        h, c = self.lstm(T.concat([e_sty + z_dt, h_target], axis=-1), (state.h, state.c))

        y = self.decoder_in(T.concat([state.phase, h, h_target], axis=-1))
        y = T.elu(self.decoder_film(y, T.mean(k, axis=-1)))
        y = T.elu(self.decoder_hidden(y))
        out = {
            'z': self.head_z(y),
            'p_hat': self.head_phase(y),
            'A': T.softplus(self.head_amplitude(y)),
            'F': self.head_frequency(y),
            'v_h': self.head_hip(y) * self.hip_norm.std + self.hip_norm.mean,
        }
        if T.is_grad_enabled():
            out['p'], out['p_tilde'] = phase_update_tensor(state.phase, out['p_hat'], out['A'],
                                                           out['F'])
        else:
            phase = T.as_tensor(state.phase).data
            A, F = out['A'].data, out['F'].data
            out['p'] = Tensor(phase_update(phase, out['p_hat'].data, A, F))
            out['p_tilde'] = Tensor(advance_phase(phase, A, F))
        return out, SamplerState(h, c, s, out['p'], state.remaining - 1)


def sampler_step(sampler, state, target, k, rng=None):
    return sampler(state, target, k, rng)


def encode_style(sampler, clip):
    """
    Style code of the first ``style_length`` frames of *clip*.

    :returns: ``(C_s, T_s)``
    :raises: :exc:`StyleClipTooShort`
    """
    with no_grad():
        return sampler.style_encoder(Tensor(sampler.style_input([clip]))).data[0]


def check_compatible(manifold, sampler):
    """
    :raises: :exc:`CheckpointError` if the two networks disagree on dimensions
    """
    ours = (sampler.frame_width, sampler.phase_channels, sampler.latent)
    theirs = (manifold.frame_width, manifold.phase_channels, manifold.latent)
    if ours != theirs:
        raise CheckpointError('sampler (frame width, phase channels, latent) %s does not match '
                              'manifold %s' % (ours, theirs), stage='train-sampler')


def rollout(sampler, manifold, start, target, start_phase, k, duration, rng=None, times=None):
    """
    Generate *duration* frames after *start*.

    :returns: ``(frames, outputs)``, one entry per generated frame
    """
    state = sampler.initial_state(start, start_phase, duration)
    frames, outputs = [], []
    for _ in range(duration):
        began = time.perf_counter()
        out, state = sampler_step(sampler, state, target, k, rng)
        s_next = manifold.step(state.frame, out['v_h'], out['z'], out['p'])
        state = state.with_frame(s_next)
        if times is not None:
            times.append(time.perf_counter() - began)
        frames.append(s_next)
        outputs.append(out)
    return frames, outputs


def sampler_loss(predicted, target, predicted_phase, target_phase, contacts, foot_columns,
                 normalizer=None):
    """
    ``L = L_rec + L_last + L_foot + L_phase``.

    :param predicted: generated frames ``(B, T, D)``
    :param target: ground truth, same shape; the last frame is the target
    :param predicted_phase: ``A``, ``F`` ``(B, T, N_p)`` and ``p_hat``,
      ``p_tilde`` ``(B, T, 2 N_p)``
    :param target_phase: ground truth ``A``, ``F`` and ``p``
    :param contacts: ``(B, T, N_f)``
    :returns: ``(total, components)``
    :raises: :exc:`MissingPhase`, :exc:`MissingLabels`
    """
    if target_phase is None:
        raise MissingPhase('sampler loss needs a ground-truth phase track')
    if contacts is None:
        raise MissingLabels('sampler loss needs foot contact labels')
    predicted, target = T.as_tensor(predicted), T.as_tensor(target)
    if predicted.shape != target.shape:
        raise ShapeError('prediction and target differ in shape', predicted.shape, target.shape)
    if normalizer is not None:
        pn = (predicted - normalizer.mean) / normalizer.std
        tn = (target - normalizer.mean) / normalizer.std
    else:
        pn, tn = predicted, target
    rec = T.l1_loss(pn, tn)
    last = T.l1_loss(pn[:, -1], tn[:, -1])

    contacts = np.asarray(contacts, dtype=np.float64)
    foot_columns = np.asarray(foot_columns, dtype=int)
    if foot_columns.size:
        flat = T.reshape(predicted, (-1, predicted.shape[-1]))
        fv = T.reshape(flat[:, foot_columns.reshape(-1)], predicted.shape[:-1] + foot_columns.shape)
        foot = T.mean(T.sum_(fv * fv, axis=-1) * (contacts * contacts))
    else:
        foot = Tensor(0.0)

    dA = T.as_tensor(predicted_phase['A']) - target_phase['A']
    dF = T.as_tensor(predicted_phase['F']) - target_phase['F']
    phase = T.mean(dA * dA) + T.mean(dF * dF)
    for key in ('p_hat', 'p_tilde'):
        d = T.as_tensor(predicted_phase[key]) - target_phase['p']
        d = T.reshape(d, d.shape[:-1] + (d.shape[-1] // 2, 2))
        phase = phase + 0.5 * T.mean(T.sum_(d * d, axis=-1))
    total = rec + last + foot + phase
    return total, {'rec': rec.item(), 'last': last.item(), 'foot': foot.item(),
                   'phase': phase.item()}


def _stack_outputs(outputs, key):
    return T.stack([o[key] for o in outputs], axis=1)


def _style_pools(clips, length):
    pools = {}
    for clip in clips:
        if clip.n_frames >= length:
            pools.setdefault(clip.style, []).append(clip)
    return pools


def sequence_batch(clips, pools, rng, count, length, style_length=STYLE_LENGTH):
    """
    Draw *count* training sequences of ``length + 1`` frames with a
    style clip of the same style for each.

    :returns: dictionary of stacked ground truth and the style clips
    """
    frames, amp, shift, vecs, contacts, styles = [], [], [], [], [], []
    while len(frames) < count:
        clip = clips[int(rng.integers(0, len(clips)))]
        pool = pools.get(clip.style)
        if not pool:
            continue
        window = orient_to_x(random_crop(clip, length + 1, rng))
        pick = pool[int(rng.integers(0, len(pool)))]
        styles.append(random_crop(pick, min(pick.n_frames, style_length), rng))
        frames.append(window.frame_vectors())
        amp.append(window.phase.amplitude.T)
        shift.append(window.phase.shift.T)
        vecs.append(window.phase.vectors())
        contacts.append(contact_labels(window))
    shift = np.stack(shift)
    return {
        'frames': np.stack(frames),
        'A': np.stack(amp),
        'F': frequency_wrap(shift[:, 1:], shift[:, :-1]),
        'p': np.stack(vecs),
        'contacts': np.stack(contacts),
        'styles': styles,
    }


def batch_loss(sampler, manifold, batch, rng=None):
    """
    Roll out a batch and score it against its ground truth.
    """
    frames = batch['frames']
    k = sampler.style_encoder(Tensor(sampler.style_input(batch['styles'])))
    generated, outputs = rollout(sampler, manifold, frames[:, 0], frames[:, -1], batch['p'][:, 0],
                                 k, frames.shape[1] - 1, rng)
    predicted_phase = dict((key, _stack_outputs(outputs, key))
                           for key in ('A', 'F', 'p_hat', 'p_tilde'))
    target_phase = {'A': batch['A'][:, 1:], 'F': batch['F'], 'p': batch['p'][:, 1:]}
    return sampler_loss(T.stack(generated, axis=1), frames[:, 1:], predicted_phase, target_phase,
                        batch['contacts'][:, 1:], manifold.foot_columns, sampler.state_norm)


def _usable(clips, min_frames):
    clips = [c for c in clips if c.n_frames >= min_frames]
    missing = [c.name for c in clips if c.phase is None]
    if missing:
        raise MissingPhase('sampler training needs phase tracks; missing for %s' % missing[:5])
    return clips


def _fit(sampler, manifold, clips, optimizer, stage, epochs, steps, batch, lengths, rng, progress):
    pools = _style_pools(clips, sampler.style_length)
    clips = [c for c in clips if c.style in pools]
    if not clips:
        raise EmptyDataset('%s needs clips of at least %d frames for every style'
                           % (stage, sampler.style_length))
    curve = LossCurve(stage)
    manifold.requires_grad_(False)
    step = 0
    try:
        for epoch in tqdm(range(epochs), desc=stage, disable=not progress):
            n = lengths(epoch)
            usable = [c for c in clips if c.n_frames > n]
            if not usable:
                raise EmptyDataset('%s needs clips longer than %d frames' % (stage, n))
            sums = dict.fromkeys(('loss', 'rec', 'last', 'foot', 'phase'), 0.0)
            for _ in range(steps):
                data = sequence_batch(usable, pools, rng, batch, n, sampler.style_length)
                optimizer.zero_grad()
                loss, parts = batch_loss(sampler, manifold, data, rng)
                parts['loss'] = loss.item()
                check_finite(stage, step, parts)
                T.backward(loss)
                optimizer.step()
                for key in sums:
                    sums[key] += parts[key]
                step += 1
            row = dict((key, v / max(steps, 1)) for key, v in sums.items())
            row['length'] = n
            curve.append(epoch, **row)
    finally:
        manifold.requires_grad_(True)
    return curve


def build_sampler(manifold, config, rng, style_length=STYLE_LENGTH):
    sampler = Sampler(manifold.frame_width, manifold.phase_channels, manifold.latent, rng,
                      hidden=config.hidden, style_channels=config.style_channels,
                      use_attention=config.use_attention, style_length=style_length)
    sampler.set_normalizers(manifold.state_norm, manifold.hip_norm)
    sampler.t_zero = config.t_zero
    sampler.t_period = config.t_period
    sampler.noise_var = config.noise_var
    return sampler


def optimizer_groups(sampler, weight_decay, groups=None):
    """
    Optimizer groups with weight decay on the style encoder only.  With
    *groups* given, only parameters in those groups are included.
    """
    decayed, plain = [], []
    for _, p in sampler.named_parameters():
        if groups is not None and p.group not in groups:
            continue
        (decayed if p.group == 'style_encoder' else plain).append(p)
    return [{'params': decayed, 'weight_decay': weight_decay},
            {'params': plain, 'weight_decay': 0.0}]


def train_sampler(clips, manifold, config, seed=0, style_length=STYLE_LENGTH, progress=True):
    """
    Train the sampler against a frozen manifold with a rollout length
    growing from ``curriculum_start`` to ``curriculum_end`` frames.

    :param config: :class:`styletween.config.SamplerConfig`
    :param style_length: frames of every style clip
    :returns: ``(sampler, loss_curve)``
    :raises: :exc:`EmptyDataset`, :exc:`MissingPhase`
    """
    clips = _usable(clips, config.curriculum_start + 1)
    rng = np.random.default_rng(seed)
    sampler = build_sampler(manifold, config, rng, style_length)
    optimizer = Amsgrad(optimizer_groups(sampler, config.weight_decay), lr=config.lr,
                        betas=(config.beta1, config.beta2))
    curve = _fit(sampler, manifold, clips, optimizer, 'sampler', config.epochs,
                 config.steps_per_epoch, config.batch,
                 lambda e: curriculum_length(e, config.epochs, config.curriculum_start,
                                             config.curriculum_end), rng, progress)
    return sampler, curve


def augment_clips(clips, rng, phase_model=None, style_length=STYLE_LENGTH):
    """
    Triple a few-shot clip set: each clip, its mirror image and a random
    temporal crop.  Clips without a phase track get one from
    *phase_model*, a ``(pae, normalizer)`` pair.

    :raises: :exc:`MissingPhase`
    """
    out = []
    for clip in clips:
        crop_length = max(style_length, int(0.75 * clip.n_frames))
        crop = random_crop(clip, min(crop_length, clip.n_frames), rng)
        for variant in (clip, mirror_clip(clip), crop):
            if variant.phase is None:
                if phase_model is None:
                    raise MissingPhase('clip [%s] has no phase track and no phase model was given'
                                       % variant.name)
                variant = variant.copy(phase=extract_phase_track(phase_model[0], phase_model[1],
                                                                 variant))
            out.append(variant)
    return out


def finetune_style(sampler, manifold, clips, config, seed=0, phase_model=None, progress=True):
    """
    Adapt a trained sampler to a new style from a few clips.  Only the
    parameter groups named in ``config.groups`` change.

    :param config: :class:`styletween.config.FinetuneConfig`
    :returns: ``(sampler, loss_curve)``
    :raises: :exc:`EmptyDataset`, :exc:`ConfigError`
    """
    if not clips:
        raise EmptyDataset('fine-tuning needs at least one clip of the new style')
    unknown = set(config.groups) - set(FINETUNE_GROUPS)
    if unknown:
        raise ConfigError('unknown fine-tune groups %s' % sorted(unknown))
    rng = np.random.default_rng(seed)
    if config.augment:
        clips = augment_clips(clips, rng, phase_model, sampler.style_length)
    logger.info('fine-tuning on %d sequences', len(clips))
    curriculum = (config.curriculum_start, config.curriculum_end)
    clips = _usable(clips, curriculum[0] + 1)
    groups = set(config.groups)
    trainable = [p for p in sampler.parameters() if p.group in groups]
    frozen = [p for p in sampler.parameters() if p.group not in groups]
    for p in frozen:
        p.requires_grad = False
    try:
        optimizer = Amsgrad(optimizer_groups(sampler, config.weight_decay, groups), lr=config.lr)
        curve = _fit(sampler, manifold, clips, optimizer, 'finetune', config.epochs,
                     config.steps_per_epoch, config.batch,
                     lambda e: curriculum_length(e, config.epochs, *curriculum), rng, progress)
    finally:
        for p in frozen:
            p.requires_grad = True
    logger.debug('fine-tuned %d of %d tensors', len(trainable), len(sampler.parameters()))
    return sampler, curve


class Transition(object):
    """
    A synthesized in-between: frame vectors ``(T+1, D)`` starting at the
    given start frame, phase vectors ``(T+1, 2 N_p)`` and the wall-clock
    seconds spent on each generated frame.
    """

    def __init__(self, skeleton, frames, phases, times):
        self.skeleton = skeleton
        self.frames = frames
        self.phases = phases
        self.times = times

    @property
    def n_frames(self):
        return self.frames.shape[0]

    def to_clip(self, style='', name=''):
        return MotionClip.from_frame_vectors(self.skeleton, self.frames, style=style, name=name)


def synthesize_transition(manifold, sampler, start, target, duration, style_clip, seed=0,
                          start_phase=None, max_duration=None):
    """
    Generate the frames between *start* and *target*.

    :param start: start frame vector ``(D,)``
    :param target: target frame vector ``(D,)``
    :param duration: number of frames to generate, ``T``
    :param style_clip: :class:`MotionClip` of at least ``style_length`` frames
    :param start_phase: phase vector of the start frame, zero if ``None``
    :returns: :class:`Transition` with ``T + 1`` frames
    :raises: :exc:`CheckpointError`, :exc:`DurationError`,
      :exc:`StyleClipTooShort`
    """
    check_compatible(manifold, sampler)
    if duration < 1 or (max_duration is not None and duration > max_duration):
        raise DurationError('duration must be in [1, %s], got %d' % (max_duration, duration))
    start = np.asarray(start, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if start.shape != (sampler.frame_width,) or target.shape != start.shape:
        raise ShapeError('start and target must be frame vectors of width %d'
                         % sampler.frame_width, start.shape, target.shape)
    if start_phase is None:
        start_phase = np.zeros(2 * sampler.phase_channels)
    rng = np.random.default_rng(seed)
    times = []
    with no_grad():
        k = Tensor(encode_style(sampler, style_clip)[None])
        generated, outputs = rollout(sampler, manifold, start[None], target[None],
                                     np.asarray(start_phase, dtype=np.float64)[None], k, duration,
                                     rng, times)
    frames = np.concatenate([start[None], np.concatenate([g.data for g in generated])])
    phases = np.concatenate([np.asarray(start_phase, dtype=np.float64)[None],
                             np.concatenate([o['p'].data for o in outputs])])
    return Transition(manifold.skeleton, frames, phases, np.asarray(times))


def save_sampler(path, sampler, stage='sampler'):
    extra = {}
    extra.update(sampler.state_norm.to_tensors('norm/state/'))
    extra.update(sampler.hip_norm.to_tensors('norm/hip/'))
    save_module(path, sampler, {
        'stage': stage,
        'frame_width': sampler.frame_width,
        'phase_channels': sampler.phase_channels,
        'latent': sampler.latent,
        'hidden': sampler.hidden,
        'style_channels': sampler.style_channels,
        'use_attention': sampler.use_attention,
        'style_length': sampler.style_length,
        't_zero': sampler.t_zero,
        't_period': sampler.t_period,
        'noise_var': sampler.noise_var,
    }, extra=extra)


def load_sampler(path, stage='train-sampler'):
    state, meta = load_module_state(path, stage=stage)
    sampler = Sampler(meta['frame_width'], meta['phase_channels'], meta['latent'],
                      np.random.default_rng(0), hidden=meta['hidden'],
                      style_channels=meta['style_channels'], use_attention=meta['use_attention'],
                      style_length=meta['style_length'])
    sampler.load_state_dict(state)
    sampler.set_normalizers(Normalizer.from_tensors(state, 'norm/state/'),
                            Normalizer.from_tensors(state, 'norm/hip/'))
    sampler.t_zero = meta['t_zero']
    sampler.t_period = meta['t_period']
    sampler.noise_var = meta['noise_var']
    return sampler
