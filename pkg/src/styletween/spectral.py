# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Spectral primitives used by phase extraction and the NPSS metric.
"""

import numpy as np


class SignalTooShort(ValueError):
    pass


def power_spectrum(signal, axis=-1):
    """
    Per-bin power ``|DFT(signal)[j]|^2`` for ``j`` in ``0..n//2``.

    The transform is exact-length, so no padding bias enters the metric.

    :param signal: real array, transformed along *axis*
    :returns: array with ``n//2 + 1`` bins along *axis*
    :raises: :exc:`SignalTooShort` when fewer than 2 samples are given
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim == 0 or signal.shape[axis] < 2:
        raise SignalTooShort('power spectrum needs at least 2 samples')
    return np.abs(np.fft.rfft(signal, axis=axis)) ** 2


def bin_frequencies(n):
    """
    :returns: frequency of every real-DFT bin in cycles per sample
    """
    return np.fft.rfftfreq(n)


def dft_basis(n):
    """
    Real and imaginary DFT basis for the non-negative bins, so that a
    signal ``x`` of length *n* has ``Re X = x @ cos_basis`` and
    ``Im X = x @ sin_basis``.  Used where the transform has to run on
    the gradient tape.

    :returns: ``(cos_basis, sin_basis)``, each of shape ``(n, n//2 + 1)``
    """
    t = np.arange(n)[:, None]
    k = np.arange(n // 2 + 1)[None, :]
    angle = 2.0 * np.pi * t * k / n
    return np.cos(angle), -np.sin(angle)


def refine_peak(magnitude, k):
    """
    Fractional position of the spectral peak at integer bin *k* by a
    parabola through the magnitudes of bins ``k-1``, ``k`` and ``k+1``.
    """
    n = len(magnitude)
    if k <= 0 or k >= n - 1:
        return float(k)
    a, b, c = magnitude[k - 1], magnitude[k], magnitude[k + 1]
    denom = a - 2.0 * b + c
    if denom >= 0:
        return float(k)
    return float(k + np.clip(0.5 * (a - c) / denom, -0.5, 0.5))


def dominant_bin(power):
    """
    Index of the strongest non-DC bin along the last axis; 0 if every
    non-DC bin is empty.
    """
    power = np.asarray(power, dtype=np.float64)
    if power.shape[-1] < 2:
        return np.zeros(power.shape[:-1], dtype=int)
    idx = np.argmax(power[..., 1:], axis=-1) + 1
    empty = np.max(power[..., 1:], axis=-1) <= 0
    return np.where(empty, 0, idx)
