# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Motion quality metrics.  Every function is pure and works on numpy
arrays; global positions are ``(..., T, J, 3)`` in centimeters.
"""

import itertools
import logging

import numpy as np
from scipy import linalg

from .common import ShapeError
from .skeleton import feature_slices
from .spectral import power_spectrum

logger = logging.getLogger(__name__)

FOOT_HEIGHT_THRESHOLD = 2.5
FMD_SHRINKAGE = 1e-3


class InsufficientSamples(ValueError):
    pass


def _positions(x):
    return np.asarray(getattr(x, 'positions', x), dtype=np.float64)


def l2_global(generated, reference):
    """
    Mean over frames of the L2 norm of the per-frame global-position
    difference, averaged over any leading sample axes.

    :raises: :exc:`ShapeError`
    """
    a, b = _positions(generated), _positions(reference)
    if a.shape != b.shape or a.ndim < 3:
        raise ShapeError('l2_global needs equal (..., T, J, 3) arrays', a.shape, b.shape)
    per_frame = np.sqrt(np.sum((a - b) ** 2, axis=(-2, -1)))
    return float(np.mean(per_frame))


def last_frame_error(generated, target):
    """
    L2 norm of the global-position difference at the final frame.

    :param generated: ``(T, J, 3)``
    :param target: target frame ``(J, 3)``, or a sequence whose last
      frame is the target
    """
    a, b = _positions(generated), _positions(target)
    if b.ndim == a.ndim:
        b = b[-1]
    a = a[-1]
    if a.shape != b.shape:
        raise ShapeError('last frame and target differ in shape', a.shape, b.shape)
    return float(np.sqrt(np.sum((a - b) ** 2)))


def rotation_channels(frames):
    """
    Joint-angle channels of frame vectors: the 6D rotation features of
    every joint, ``(..., T, J * 6)``.
    """
    frames = np.asarray(frames, dtype=np.float64)
    _, _, rot = feature_slices(frames.shape[-1] // 12)
    return frames[..., rot]


def npss(reference, generated):
    """
    Normalized power spectrum similarity.

    Per channel the DC-free power spectrum is normalized to unit mass,
    the earth mover's distance between the two spectra is the L1
    distance of their cumulative sums, and the channel distances are
    averaged with weights proportional to the reference channel power.
    Channels of zero reference power get zero weight.

    :param reference: ground truth channels ``(..., T, C)``
    :param generated: same shape
    :raises: :exc:`ShapeError`
    """
    gt = np.asarray(reference, dtype=np.float64)
    pred = np.asarray(generated, dtype=np.float64)
    if gt.shape != pred.shape or gt.ndim < 2:
        raise ShapeError('npss needs equal (..., T, C) arrays', gt.shape, pred.shape)
    p_gt = power_spectrum(gt, axis=-2)[..., 1:, :]
    p_pred = power_spectrum(pred, axis=-2)[..., 1:, :]
    total_gt = p_gt.sum(axis=-2)
    total_pred = p_pred.sum(axis=-2)
    with np.errstate(invalid='ignore', divide='ignore'):
        cdf_gt = np.cumsum(np.where(total_gt[..., None, :] > 0, p_gt / total_gt[..., None, :], 0.0),
                           axis=-2)
        cdf_pred = np.cumsum(np.where(total_pred[..., None, :] > 0,
                                      p_pred / total_pred[..., None, :], 0.0), axis=-2)
    emd = np.abs(cdf_gt - cdf_pred).sum(axis=-2)
    weight = total_gt.sum()
    if weight <= 0:
        logger.warning('npss: every reference channel has zero power')
        return 0.0
    excluded = int(np.count_nonzero(total_gt <= 0))
    if excluded:
        logger.debug('npss: %d zero-power channels excluded', excluded)
    return float(np.sum(emd * total_gt) / weight)


def foot_skate(positions, foot_indices, threshold=FOOT_HEIGHT_THRESHOLD):
    """
    Mean over frames and foot joints of ``v * clamp(2 - 2^(h/H), 0, 1)``
    with ``v`` the horizontal foot speed in cm/frame and ``h`` the foot
    height.

    :param positions: ``(T, J, 3)`` or a clip
    :param foot_indices: joint indices of the feet
    """
    p = _positions(positions)[..., list(foot_indices), :]
    if p.shape[-3] < 2:
        return 0.0
    v = np.zeros(p.shape[:-1])
    step = p[..., 1:, :, :] - p[..., :-1, :, :]
    v[..., 1:, :] = np.hypot(step[..., 0], step[..., 2])
    v[..., 0, :] = v[..., 1, :]
    weight = np.clip(2.0 - np.power(2.0, p[..., 1] / threshold), 0.0, 1.0)
    return float(np.mean(v * weight))


def diversity(samples):
    """
    Mean :func:`l2_global` over all unordered pairs of samples.

    :raises: :exc:`InsufficientSamples` with fewer than two samples
    """
    samples = [_positions(s) for s in samples]
    if len(samples) < 2:
        raise InsufficientSamples('diversity needs at least 2 samples, got %d' % len(samples))
    return float(np.mean([l2_global(a, b) for a, b in itertools.combinations(samples, 2)]))


def _gaussian(latents, shrinkage):
    x = np.asarray(latents, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InsufficientSamples('a Gaussian fit needs at least 2 latent vectors, got shape %s'
                                  % (x.shape,))
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    if x.shape[0] <= x.shape[1]:
        cov = cov + shrinkage * np.eye(cov.shape[0])
    return x.mean(axis=0), cov


def _psd_sqrt(matrix):
    w, v = linalg.eigh(0.5 * (matrix + matrix.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(mu1, cov1, mu2, cov2):
    """
    ``|mu1 - mu2|^2 + tr(cov1 + cov2 - 2 (cov1 cov2)^(1/2))``.  The trace
    of the product root is taken from the symmetric matrix
    ``cov1^(1/2) cov2 cov1^(1/2)``.
    """
    root = _psd_sqrt(cov1)
    w = linalg.eigh(root @ cov2 @ root, eigvals_only=True)
    trace_root = float(np.sum(np.sqrt(np.clip(w, 0.0, None))))
    diff = np.asarray(mu1) - np.asarray(mu2)
    d = float(diff @ diff + np.trace(cov1) + np.trace(cov2) - 2.0 * trace_root)
    return max(d, 0.0)


def fmd(generated, reference, shrinkage=FMD_SHRINKAGE):
    """
    Frechet distance between Gaussians fitted to two sets of latent
    vectors ``(N, d)``.  With no more samples than dimensions the
    covariances are shrunk by ``shrinkage * I``.

    :raises: :exc:`InsufficientSamples`
    """
    mu1, cov1 = _gaussian(generated, shrinkage)
    mu2, cov2 = _gaussian(reference, shrinkage)
    if mu1.shape != mu2.shape:
        raise ShapeError('latent sets differ in width', mu1.shape, mu2.shape)
    return frechet_distance(mu1, cov1, mu2, cov2)
