# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Periodic autoencoder and phase extraction.

The encoder turns a window of joint velocities into ``N_p`` latent
curves. A differentiable spectral head describes each curve by
amplitude, frequency, offset and phase, the curves are rebuilt as
sinusoids from those parameters, and the decoder has to reconstruct
the input from the sinusoids alone.

Phase tracks are read from the latent curves of windows centered on
every frame.
"""

import logging

import numpy as np
from tqdm import tqdm

from . import tensor as T
from .common import EmptyDataset, ShapeError
from .container import load_module_state, save_module
from .layers import Conv1d, ConvTranspose1d, Module, Parameter
from .motion import heading_angle
from .optim import Amsgrad
from .rotations import yaw_matrix
from .skeleton import PhaseTrack
from .spectral import bin_frequencies, dft_basis, dominant_bin, refine_peak
from .tensor import Tensor, no_grad
from .training import LossCurve, Normalizer, check_finite

logger = logging.getLogger(__name__)

_EPS = 1e-8


class InvalidAmplitude(ValueError):
    pass


def phase_vector(amplitude, shift):
    """
    Phase vector ``(A sin 2piS, A cos 2piS)`` per channel, channels
    interleaved along the last axis.

    :param amplitude: ``A >= 0``, scalar or ``(..., N_p)``
    :param shift: signed shift in turns, same shape
    :returns: ``(..., 2 * N_p)``
    :raises: :exc:`InvalidAmplitude`
    """
    amplitude = np.asarray(amplitude, dtype=np.float64)
    shift = np.asarray(shift, dtype=np.float64)
    if np.any(amplitude < 0):
        raise InvalidAmplitude('phase amplitude must be non-negative')
    angle = 2.0 * np.pi * shift
    p = np.stack(np.broadcast_arrays(amplitude * np.sin(angle), amplitude * np.cos(angle)), axis=-1)
    if p.ndim == 1:
        return p
    return p.reshape(p.shape[:-2] + (-1,))


def fit_spectral_params(curve, refine=False):
    """
    Describe a curve by its dominant sinusoid.

    Amplitude and frequency come from the strongest non-DC DFT bin,
    ``A = 2|X_k| / W`` and ``F = k / W``, the offset is the mean and the
    shift is the phase at the window center in turns.  With *refine*
    the peak position is interpolated between bins and the amplitude is
    taken from the projection at that frequency.

    :param curve: real sequence of length ``W >= 4``
    :returns: ``(A, F, b, S)``
    """
    curve = np.asarray(curve, dtype=np.float64)
    W = curve.shape[-1]
    if W < 4:
        raise ShapeError('spectral fit needs at least 4 samples', curve.shape)
    b = float(np.mean(curve))
    centered = curve - b
    X = np.fft.rfft(centered)
    magnitude = np.abs(X)
    k = int(dominant_bin(magnitude ** 2))
    if k == 0 or magnitude[k] <= _EPS * W:
        return 0.0, 0.0, b, 0.0
    tau = np.arange(W) - (W - 1) / 2.0
    if refine:
        F = refine_peak(magnitude, k) / W
    else:
        F = k / float(W)
    c_s = np.dot(centered, np.sin(2.0 * np.pi * F * tau))
    c_c = np.dot(centered, np.cos(2.0 * np.pi * F * tau))
    if refine:
        A = 2.0 * np.hypot(c_s, c_c) / W
    else:
        A = 2.0 * magnitude[k] / W
    S = np.arctan2(c_c, c_s) / (2.0 * np.pi)
    return float(A), float(F), b, float(S)


def pae_inputs(clip):
    """
    Joint velocities expressed in each frame's heading frame.

    :returns: ``(3 * J, T)``
    """
    local = np.einsum('tij,tkj->tki', yaw_matrix(heading_angle(clip, frame=None)), clip.velocities)
    return local.reshape(clip.n_frames, -1).T


def centered_windows(x, window, centers=None):
    """
    Windows of length *window* centered on each frame of ``x (C, T)``,
    edge-padded at the clip boundaries.

    :returns: ``(len(centers), C, window)``
    """
    half = window // 2
    T_ = x.shape[1]
    if centers is None:
        centers = np.arange(T_)
    idx = np.clip(np.asarray(centers)[:, None] + np.arange(-half, window - half)[None, :], 0, T_ - 1)
    return np.transpose(x[:, idx], (1, 0, 2))


class PeriodicAutoencoder(Module):

    def __init__(self, in_channels, rng, channels=5, window=61, hidden=32, kernel=15):
        super(PeriodicAutoencoder, self).__init__()
        self.in_channels = in_channels
        self.channels = channels
        self.window = window
        self.hidden = hidden
        self.kernel = kernel
        self.enc1 = Conv1d(in_channels, hidden, kernel, rng, padding='same', pad_mode='replicate')
        self.enc2 = Conv1d(hidden, channels, kernel, rng, padding='same', pad_mode='replicate')
        bound = 1.0 / np.sqrt(window)
        self.shift_weight = Parameter(rng.uniform(-bound, bound, size=(channels, window, 2)))
        self.shift_bias = Parameter(rng.uniform(-bound, bound, size=(channels, 2)))
        self.dec1 = ConvTranspose1d(channels, hidden, kernel, rng, padding='same')
        self.dec2 = ConvTranspose1d(hidden, in_channels, kernel, rng, padding='same')
        cos_b, sin_b = dft_basis(window)
        self._cos = cos_b
        self._sin = sin_b
        self._freqs = bin_frequencies(window)[1:]
        self._tau = np.arange(window) - (window - 1) / 2.0

    def encode(self, x):
        """
        :param x: ``(B, C, W)`` normalized velocities
        :returns: latent curves ``(B, N_p, W)``
        """
        x = T.as_tensor(x)
        if x.ndim != 3 or x.shape[1] != self.in_channels or x.shape[2] != self.window:
            raise ShapeError('phase encoder expects (B, %d, %d)' % (self.in_channels, self.window),
                             x.shape)
        return self.enc2(T.elu(self.enc1(x)))

    def spectral(self, curves):
        re = T.matmul(curves, self._cos)[..., 1:]
        im = T.matmul(curves, self._sin)[..., 1:]
        power = re * re + im * im
        total = T.sum_(power, axis=-1, keepdims=True)
        F = T.sum_(power * self._freqs, axis=-1, keepdims=True) / (total + _EPS)
        A = 2.0 * T.sqrt(total + _EPS) / self.window
        b = T.mean(curves, axis=-1, keepdims=True)
        B = curves.shape[0]
        sxy = T.matmul(T.reshape(curves, (B, self.channels, 1, self.window)), self.shift_weight)
        sxy = T.reshape(sxy, (B, self.channels, 2)) + self.shift_bias
        sx, sy = sxy[..., 0:1], sxy[..., 1:2]
        r = T.sqrt(sx * sx + sy * sy + _EPS)
        return {'A': A, 'F': F, 'b': b, 'sx': sx / r, 'sy': sy / r}

    def reconstruct(self, params):
        angle = (2.0 * np.pi) * params['F'] * self._tau
        wave = T.sin(angle) * params['sx'] + T.cos(angle) * params['sy']
        return params['A'] * wave + params['b']

    def decode(self, latent):
        return self.dec2(T.elu(self.dec1(latent)))

    def forward(self, x):
        params = self.spectral(self.encode(x))
        return self.decode(self.reconstruct(params)), params

    def loss(self, x):
        output, _ = self.forward(x)
        return T.mse(output, x)


def pae_encode(pae, window):
    """
    Latent curves of one window ``(C, W)`` or a batch ``(B, C, W)``.
    """
    window = np.asarray(window, dtype=np.float64)
    single = window.ndim == 2
    if single:
        window = window[None]
    with no_grad():
        curves = pae.encode(Tensor(window)).data
    return curves[0] if single else curves


def _windows_for(clips, normalizer, window, rng, count):
    inputs = [normalizer.normalize(pae_inputs(c).T).T for c in clips]
    picks = rng.integers(0, len(inputs), size=count)
    batch = []
    for i in picks:
        x = inputs[i]
        centre = int(rng.integers(0, x.shape[1]))
        batch.append(centered_windows(x, window, [centre])[0])
    return np.stack(batch)


def fit_normalizer(clips):
    return Normalizer.fit(np.concatenate([pae_inputs(c).T for c in clips], axis=0), axis=0)


def train_pae(clips, config, seed=0, validation=None, progress=True):
    """
    Train the periodic autoencoder.

    :param clips: training clips
    :param config: :class:`styletween.config.PhaseConfig`
    :param validation: optional held-out clips, scored every epoch
    :returns: ``(pae, normalizer, loss_curve)``
    :raises: :exc:`EmptyDataset`
    """
    clips = [c for c in clips if c.n_frames >= 2]
    if not clips:
        raise EmptyDataset('phase training needs at least one clip with 2 or more frames')
    rng = np.random.default_rng(seed)
    normalizer = fit_normalizer(clips)
    in_channels = 3 * clips[0].skeleton.num_joints
    pae = PeriodicAutoencoder(in_channels, rng, channels=config.channels, window=config.window,
                              hidden=config.hidden)
    optimizer = Amsgrad(pae.parameters(), lr=config.lr, betas=(config.beta1, config.beta2))
    val_batch = None
    if validation:
        val_batch = _windows_for(validation, normalizer, config.window,
                                 np.random.default_rng(seed + 1), config.batch)
    curve = LossCurve('phase')
    step = 0
    for epoch in tqdm(range(config.epochs), desc='phase', disable=not progress):
        total = 0.0
        for _ in range(config.steps_per_epoch):
            batch = _windows_for(clips, normalizer, config.window, rng, config.batch)
            optimizer.zero_grad()
            loss = pae.loss(Tensor(batch))
            check_finite('phase', step, {'rec': loss.item()})
            T.backward(loss)
            optimizer.step()
            total += loss.item()
            step += 1
        row = {'loss': total / max(config.steps_per_epoch, 1)}
        if val_batch is not None:
            row['val_loss'] = evaluate_pae(pae, val_batch)
        curve.append(epoch, **row)
    return pae, normalizer, curve


def evaluate_pae(pae, batch):
    with no_grad():
        return pae.loss(Tensor(batch)).item()


def extract_phase_track(pae, normalizer, clip, batch=64):
    """
    Per-frame phase parameters of a clip.

    :returns: :class:`PhaseTrack` with ``(N_p, T)`` components
    """
    x = normalizer.normalize(pae_inputs(clip).T).T
    A = np.zeros((pae.channels, clip.n_frames))
    S = np.zeros_like(A)
    F = np.zeros_like(A)
    for start in range(0, clip.n_frames, batch):
        centers = np.arange(start, min(start + batch, clip.n_frames))
        curves = pae_encode(pae, centered_windows(x, pae.window, centers))
        for n, t in enumerate(centers):
            for i in range(pae.channels):
                a, f, _, s = fit_spectral_params(curves[n, i], refine=True)
                A[i, t], F[i, t], S[i, t] = a, f, s
    return PhaseTrack(A, S, F)


def save_pae(path, pae, normalizer):
    save_module(path, pae, {
        'stage': 'phase',
        'in_channels': pae.in_channels,
        'channels': pae.channels,
        'window': pae.window,
        'hidden': pae.hidden,
        'kernel': pae.kernel,
    }, extra=normalizer.to_tensors('norm/'))


def load_pae(path):
    """
    :returns: ``(pae, normalizer)``
    """
    state, meta = load_module_state(path, stage='train-phase')
    pae = PeriodicAutoencoder(meta['in_channels'], np.random.default_rng(0),
                              channels=meta['channels'], window=meta['window'],
                              hidden=meta['hidden'], kernel=meta['kernel'])
    pae.load_state_dict(state)
    return pae, Normalizer.from_tensors(state, 'norm/')

