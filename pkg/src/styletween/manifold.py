# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Motion manifold: a conditional VAE over single-step pose transitions.

The encoder sees the current and the next frame and yields the mean and
log-variance of the latent ``z``.  A gating network turns the next
phase vector and ``z`` into blend coefficients for a bank of expert
decoders, whose blended parameters map the current frame, the next hip
feature and ``z`` to the pose change.  Frames are always advanced
additively, ``s_next = s_t + delta``.
"""

import logging

import numpy as np
from tqdm import tqdm

from . import tensor as T
from .common import EmptyDataset, JOINT_FEATURES, ShapeError
from .container import load_module_state, save_module
from .layers import ExpertLinear, MLP, Module
from .motion import contact_labels, crop_windows, orient_to_x
from .optim import Amsgrad
from .skeleton import Skeleton, feature_slices
from .tensor import Tensor, no_grad
from .training import LossCurve, Normalizer, check_finite, sample_indices

logger = logging.getLogger(__name__)

HIP_FEATURES = 9


class MissingLabels(ValueError):
    pass


class MissingPhase(ValueError):
    pass


def reparameterize(mu, logvar, eps):
    """
    ``z = mu + eps * exp(0.5 * logvar)``
    """
    return T.as_tensor(mu) + T.as_tensor(eps) * T.exp(0.5 * T.as_tensor(logvar))


def kl_divergence(mu, logvar):
    """
    Elementwise ``KL(N(mu, exp(logvar)) || N(0, 1))``.
    """
    mu, logvar = T.as_tensor(mu), T.as_tensor(logvar)
    return -0.5 * (1.0 + logvar - mu * mu - T.exp(logvar))


def _batched(x, width, what):
    x = T.as_tensor(x)
    single = x.ndim == 1
    if single:
        x = T.reshape(x, (1, x.shape[0]))
    if x.ndim != 2 or x.shape[1] != width:
        raise ShapeError('%s must have width %d' % (what, width), x.shape)
    return x, single


def _unbatch(x, single):
    return T.reshape(x, (x.shape[1],)) if single else x


class MotionManifold(Module):
    """
    :param skeleton: rig of the frames the model is trained on
    :param phase_channels: number of phase channels ``N_p``
    :param experts: number of expert parameter sets ``K``
    :param latent: width ``L`` of ``z``
    """

    def __init__(self, skeleton, phase_channels, rng, experts=4, latent=32, hidden=128,
                 gate_hidden=64):
        super(MotionManifold, self).__init__()
        self.skeleton = skeleton
        self.num_joints = skeleton.num_joints
        self.frame_width = self.num_joints * JOINT_FEATURES
        self.phase_channels = phase_channels
        self.experts = experts
        self.latent = latent
        self.hidden = hidden
        self.gate_hidden = gate_hidden
        D, L = self.frame_width, latent
        self.encoder = MLP([2 * D, hidden, hidden, 2 * L], rng)
        self.gating = MLP([2 * phase_channels + L, gate_hidden, gate_hidden, experts], rng)
        self.expert0 = ExpertLinear(experts, D + HIP_FEATURES + L, hidden, rng)
        self.expert1 = ExpertLinear(experts, hidden, hidden, rng)
        self.expert2 = ExpertLinear(experts, hidden, D, rng)

        identity = Normalizer(np.zeros(D), np.ones(D))
        self.state_norm = identity
        self.delta_norm = identity
        self.hip_norm = Normalizer(np.zeros(HIP_FEATURES), np.ones(HIP_FEATURES))

        pos, vel, _ = feature_slices(self.num_joints)
        self._pos = pos
        self._vel = vel
        keep = np.ones(D)
        keep[vel] = 0.0
        self._keep = keep
        scatter = np.zeros((len(vel), D))
        scatter[np.arange(len(vel)), vel] = 1.0
        self._scatter = scatter
        feet = skeleton.foot_indices
        self.foot_columns = np.asarray([vel[3 * j:3 * j + 3] for j in feet], dtype=int).reshape(-1, 3)

    def set_normalizers(self, state, delta, hip):
        self.state_norm = state
        self.delta_norm = delta
        self.hip_norm = hip

    def _norm(self, s, normalizer):
        return (s - normalizer.mean) / normalizer.std

    def encode(self, s_t, s_next):
        """
        :param s_t: frame vector ``(D,)`` or batch ``(B, D)``
        :param s_next: following frame, same shape
        :returns: ``(mu, logvar)``, each ``(L,)`` or ``(B, L)``
        :raises: :exc:`ShapeError`
        """
        a, single = _batched(s_t, self.frame_width, 'current frame')
        b, _ = _batched(s_next, self.frame_width, 'next frame')
        if a.shape != b.shape:
            raise ShapeError('encoder frames differ in shape', a.shape, b.shape)
        out = self.encoder(T.concat([self._norm(a, self.state_norm),
                                     self._norm(b, self.state_norm)], axis=-1))
        mu = out[:, :self.latent]
        logvar = out[:, self.latent:]
        return _unbatch(mu, single), _unbatch(logvar, single)

    def gate(self, p_next, z):
        """
        :returns: blend coefficients ``(B, K)`` on the simplex
        """
        p, _ = _batched(p_next, 2 * self.phase_channels, 'phase vector')
        z, _ = _batched(z, self.latent, 'latent')
        return T.softmax(self.gating(T.concat([p, z], axis=-1)), axis=-1)

    def decode_moe(self, s_t, v_h_next, z, p_next):
        """
        Pose change from the current frame, the next hip feature and
        ``z``, with experts blended by the gate.  The velocity channels
        of the returned change are set so that the next frame's velocity
        equals its realized position difference.

        :returns: ``delta`` with the shape of *s_t*
        :raises: :exc:`ShapeError`
        """
        s, single = _batched(s_t, self.frame_width, 'current frame')
        h, _ = _batched(v_h_next, HIP_FEATURES, 'hip feature')
        z, _ = _batched(z, self.latent, 'latent')
        p, _ = _batched(p_next, 2 * self.phase_channels, 'phase vector')
        if not (s.shape[0] == h.shape[0] == z.shape[0] == p.shape[0]):
            raise ShapeError('decoder inputs differ in batch size', s.shape, h.shape, z.shape, p.shape)
        w = self.gate(p, z)
        return _unbatch(self.decode_blended(s, h, z, w), single)

    def decode_blended(self, s, h, z, coefficients):
        x = T.concat([self._norm(s, self.state_norm), self._norm(h, self.hip_norm), z], axis=-1)
        x = T.elu(self.expert0(x, coefficients))
        x = T.elu(self.expert1(x, coefficients))
        raw = self.expert2(x, coefficients) * self.delta_norm.std + self.delta_norm.mean
        return self._fix_velocity(s, raw)

    def _fix_velocity(self, s, raw):
        moved = raw[:, self._pos] - s[:, self._vel]
        return raw * self._keep + T.matmul(moved, self._scatter)

    def step(self, s_t, v_h_next, z, p_next):
        """
        :returns: ``s_t + decode_moe(s_t, v_h_next, z, p_next)``
        """
        s_t = T.as_tensor(s_t)
        return s_t + self.decode_moe(s_t, v_h_next, z, p_next)

    def sample_step(self, s_t, v_h_next, p_next, rng):
        """
        Advance one frame with ``z`` drawn from the prior.
        """
        s = T.as_tensor(s_t)
        shape = (self.latent,) if s.ndim == 1 else (s.shape[0], self.latent)
        return self.step(s, v_h_next, Tensor(rng.standard_normal(shape)), p_next)


def manifold_loss(predicted, target, mu, logvar, contacts, foot_columns, beta=0.001,
                  normalizer=None):
    """
    ``L = L_rec + beta * L_kl + L_foot``.

    :param predicted: rolled-out frames ``(B, T, D)``
    :param target: ground-truth frames, same shape
    :param mu: latent means, ``(..., L)``
    :param logvar: latent log-variances, same shape
    :param contacts: contact weight per frame and foot joint, ``(B, T, N_f)``
    :param foot_columns: velocity columns of each foot joint, ``(N_f, 3)``
    :param normalizer: state :class:`Normalizer` for the reconstruction term
    :returns: ``(total, components)``
    :raises: :exc:`MissingLabels` if *contacts* is ``None``
    """
    if contacts is None:
        raise MissingLabels('manifold loss needs foot contact labels')
    predicted, target = T.as_tensor(predicted), T.as_tensor(target)
    if predicted.shape != target.shape:
        raise ShapeError('prediction and target differ in shape', predicted.shape, target.shape)
    if normalizer is not None:
        rec = T.mse((predicted - normalizer.mean) / normalizer.std,
                    (target - normalizer.mean) / normalizer.std)
    else:
        rec = T.mse(predicted, target)
    kl = T.mean(kl_divergence(mu, logvar))
    contacts = np.asarray(contacts, dtype=np.float64)
    foot_columns = np.asarray(foot_columns, dtype=int)
    if foot_columns.size:
        flat = T.reshape(predicted, (-1, predicted.shape[-1]))
        fv = T.reshape(flat[:, foot_columns.reshape(-1)], predicted.shape[:-1] + foot_columns.shape)
        foot = T.mean(T.sum_(fv * fv, axis=-1) * (contacts * contacts))
    else:
        foot = Tensor(0.0)
    total = rec + beta * kl + foot
    return total, {'rec': rec.item(), 'kl': kl.item(), 'foot': foot.item()}


def rollout(model, frames, hips, phases, rng=None):
    """
    Roll the decoder through a window, feeding ground-truth hip features
    and phases and drawing ``z`` from the encoder posterior.  With *rng*
    ``None`` the posterior mean is used.

    :param frames: ``(B, W, D)`` ground truth
    :returns: ``(predicted (B, W-1, D), mu, logvar)``
    """
    s = Tensor(frames[:, 0])
    preds, mus, logvars = [], [], []
    for t in range(frames.shape[1] - 1):
        mu, logvar = model.encode(s, frames[:, t + 1])
        if rng is None:
            z = mu
        else:
            z = reparameterize(mu, logvar, rng.standard_normal(mu.shape))
        s = model.step(s, hips[:, t + 1], z, phases[:, t + 1])
        preds.append(s)
        mus.append(mu)
        logvars.append(logvar)
    return T.stack(preds, axis=1), T.stack(mus, axis=1), T.stack(logvars, axis=1)


def _has_phase(clips, what):
    missing = [c.name for c in clips if c.phase is None]
    if missing:
        raise MissingPhase('%s needs phase tracks; missing for %s' % (what, missing[:5]))


def fit_normalizers(clips):
    """
    Frame, frame-change and hip-feature statistics of oriented clips.
    """
    oriented = [orient_to_x(c) for c in clips]
    frames = np.concatenate([c.frame_vectors() for c in oriented], axis=0)
    deltas = np.concatenate([np.diff(c.frame_vectors(), axis=0) for c in oriented], axis=0)
    hips = np.concatenate([c.hip_features() for c in oriented], axis=0)
    return Normalizer.fit(frames), Normalizer.fit(deltas), Normalizer.fit(hips)


def training_windows(clips, length=60, overlap=20):
    """
    Cut clips into *length*-frame windows overlapping by *overlap*
    frames, each oriented to face +X.  A clip shorter than *length* is
    kept whole.
    """
    windows = []
    for clip in clips:
        if clip.n_frames < length:
            windows.append(clip)
        else:
            windows.extend(crop_windows(clip, length, overlap))
    return [orient_to_x(w) for w in windows]


def window_batch(windows, rng, count, window):
    """
    Draw *count* random *window*-frame slices of training windows.

    :returns: ``(frames, hips, phases, contacts)`` stacked over the batch
    """
    frames, hips, phases, contacts = [], [], [], []
    for i in sample_indices(rng, len(windows), count):
        clip = windows[i]
        start = int(rng.integers(0, clip.n_frames - window + 1))
        w = clip.slice(start, start + window)
        frames.append(w.frame_vectors())
        hips.append(w.hip_features())
        phases.append(w.phase.vectors())
        contacts.append(contact_labels(w))
    return np.stack(frames), np.stack(hips), np.stack(phases), np.stack(contacts)


def train_manifold(clips, config, seed=0, clip_length=60, clip_overlap=20, validation=None,
                   progress=True):
    """
    Train the motion manifold on windows of clips carrying phase tracks.

    :param config: :class:`styletween.config.ManifoldConfig`
    :param clip_length: length of the windows clips are cut into
    :param clip_overlap: overlap of consecutive windows
    :returns: ``(model, loss_curve)``
    :raises: :exc:`EmptyDataset`, :exc:`MissingPhase`,
      :exc:`styletween.common.TrainingDiverged`
    """
    clips = [c for c in clips if c.n_frames >= config.window]
    if not clips:
        raise EmptyDataset('manifold training needs a clip of at least %d frames' % config.window)
    _has_phase(clips, 'manifold training')
    rng = np.random.default_rng(seed)
    model = MotionManifold(clips[0].skeleton, clips[0].phase.channels, rng,
                           experts=config.experts, latent=config.latent, hidden=config.hidden,
                           gate_hidden=config.gate_hidden)
    model.set_normalizers(*fit_normalizers(clips))
    optimizer = Amsgrad(model.parameters(), lr=config.lr, betas=(config.beta1, config.beta2))
    windows = training_windows(clips, clip_length, clip_overlap)
    logger.info('manifold training on %d windows of %d clips', len(windows), len(clips))
    val_batch = None
    validation = [c for c in validation or () if c.n_frames >= config.window]
    if validation:
        _has_phase(validation, 'manifold validation')
        val_batch = window_batch(training_windows(validation, clip_length, clip_overlap),
                                 np.random.default_rng(seed + 1), config.batch, config.window)
    curve = LossCurve('manifold')
    step = 0
    for epoch in tqdm(range(config.epochs), desc='manifold', disable=not progress):
        sums = {'loss': 0.0, 'rec': 0.0, 'kl': 0.0, 'foot': 0.0}
        for _ in range(config.steps_per_epoch):
            frames, hips, phases, contacts = window_batch(windows, rng, config.batch, config.window)
            optimizer.zero_grad()
            predicted, mu, logvar = rollout(model, frames, hips, phases, rng)
            loss, parts = manifold_loss(predicted, frames[:, 1:], mu, logvar, contacts[:, 1:],
                                        model.foot_columns, config.beta, model.state_norm)
            parts['loss'] = loss.item()
            check_finite('manifold', step, parts)
            T.backward(loss)
            optimizer.step()
            for k in sums:
                sums[k] += parts[k]
            step += 1
        row = dict((k, v / max(config.steps_per_epoch, 1)) for k, v in sums.items())
        if val_batch is not None:
            row['val_rec'] = evaluate_manifold(model, val_batch)
        curve.append(epoch, **row)
    return model, curve


def evaluate_manifold(model, batch):
    """
    Reconstruction loss of a window batch rolled out with posterior means.
    """
    frames, hips, phases, _ = batch
    with no_grad():
        predicted, _, _ = rollout(model, frames, hips, phases)
        return T.mse((predicted - model.state_norm.mean) / model.state_norm.std,
                     (Tensor(frames[:, 1:]) - model.state_norm.mean) / model.state_norm.std).item()


def save_manifold(path, model):
    extra = {'skeleton': model.skeleton.to_array()}
    extra.update(model.state_norm.to_tensors('norm/state/'))
    extra.update(model.delta_norm.to_tensors('norm/delta/'))
    extra.update(model.hip_norm.to_tensors('norm/hip/'))
    save_module(path, model, {
        'stage': 'manifold',
        'joints': list(model.skeleton.names),
        'forward_axis': model.skeleton.forward_axis,
        'num_joints': model.num_joints,
        'phase_channels': model.phase_channels,
        'experts': model.experts,
        'latent': model.latent,
        'hidden': model.hidden,
        'gate_hidden': model.gate_hidden,
    }, extra=extra)


def load_manifold(path):
    state, meta = load_module_state(path, stage='train-manifold')
    skeleton = Skeleton.from_array(meta['joints'], state['skeleton'],
                                   forward_axis=meta.get('forward_axis', 'z'))
    model = MotionManifold(skeleton, meta['phase_channels'], np.random.default_rng(0),
                           experts=meta['experts'], latent=meta['latent'], hidden=meta['hidden'],
                           gate_hidden=meta['gate_hidden'])
    model.load_state_dict(state)
    model.set_normalizers(Normalizer.from_tensors(state, 'norm/state/'),
                          Normalizer.from_tensors(state, 'norm/delta/'),
                          Normalizer.from_tensors(state, 'norm/hip/'))
    return model
