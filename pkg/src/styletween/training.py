# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Utilities shared by the training stages: feature normalization, loss
curves, divergence checks and the rollout-length curriculum.
"""

import csv
import logging
import math

import numpy as np

from .common import ShapeError, TrainingDiverged

logger = logging.getLogger(__name__)


class Normalizer(object):
    """
    Per-channel standardization, ``(x - mean) / std``.  Channels with
    zero spread keep unit scale.
    """

    def __init__(self, mean, std):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)
        if self.mean.shape != self.std.shape:
            raise ShapeError('normalizer mean and std differ', self.mean.shape, self.std.shape)

    @classmethod
    def fit(cls, data, axis=0, floor=1e-6):
        """
        :param data: array whose statistics are taken over *axis*
        """
        data = np.asarray(data, dtype=np.float64)
        mean = data.mean(axis=axis)
        std = data.std(axis=axis)
        std = np.where(std < floor, 1.0, std)
        return cls(mean, std)

    def normalize(self, x):
        return (x - self.mean) / self.std

    def denormalize(self, x):
        return x * self.std + self.mean

    def to_tensors(self, prefix):
        return {prefix + 'mean': self.mean, prefix + 'std': self.std}

    @classmethod
    def from_tensors(cls, tensors, prefix):
        return cls(np.asarray(tensors[prefix + 'mean'], dtype=np.float64),
                   np.asarray(tensors[prefix + 'std'], dtype=np.float64))


class LossCurve(object):
    """
    Per-epoch loss components, written as CSV with one row per epoch.
    """

    def __init__(self, stage):
        self.stage = stage
        self.rows = []

    def append(self, epoch, **components):
        row = dict(components)
        row['epoch'] = epoch
        self.rows.append(row)
        logger.info('%s epoch %d: %s', self.stage, epoch,
                    ' '.join('%s=%.6g' % (k, v) for k, v in sorted(components.items())))

    def column(self, name):
        return [r[name] for r in self.rows]

    def write(self, path):
        keys = ['epoch']
        for r in self.rows:
            for k in sorted(r):
                if k not in keys:
                    keys.append(k)
        with open(path, 'w', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=keys, lineterminator='\n')
            writer.writeheader()
            for r in self.rows:
                writer.writerow(r)


def check_finite(stage, step, components):
    """
    :raises: :exc:`TrainingDiverged` if any component is not finite
    """
    values = dict((k, float(v)) for k, v in components.items())
    if not all(math.isfinite(v) for v in values.values()):
        logger.error('%s diverged at step %d: %s', stage, step, values)
        raise TrainingDiverged(stage, step, values)
    return values


def curriculum_length(epoch, epochs, start=20, end=40):
    """
    Rollout length growing linearly from *start* at the first epoch to
    *end* at the last one.
    """
    if epochs <= 1:
        return end
    return int(round(start + (end - start) * float(epoch) / (epochs - 1)))


def sample_indices(rng, n, batch):
    """
    Draw *batch* indices in ``[0, n)``, without replacement when possible.
    """
    if n <= 0:
        return np.zeros(0, dtype=int)
    return rng.choice(n, size=batch, replace=batch > n)
