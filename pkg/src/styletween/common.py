# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Common definitions for styletween modules.
"""

FPS = 30
NUM_JOINTS = 23
JOINT_FEATURES = 12

CONTAINER_MAGIC = b'RSMT'
CONTAINER_VERSION = 1

CLIP_CACHE_FILE = 'clips.bin'
SPLITS_FILE = 'splits.yaml'
PHASE_CHECKPOINT = 'phase.ckpt'
MANIFOLD_CHECKPOINT = 'manifold.ckpt'
SAMPLER_CHECKPOINT = 'sampler.ckpt'
CLASSIFIER_CHECKPOINT = 'classifier.ckpt'
LATENCY_FILE = 'latency.csv'

# left/right ankle and toe
FOOT_JOINTS = ('LeftFoot', 'LeftToe', 'RightFoot', 'RightToe')
HIP_JOINT = 'Hips'


class ShapeError(ValueError):
    """
    Tensor or array shapes are incompatible.
    """

    def __init__(self, msg, *shapes):
        if shapes:
            msg = '%s: %s' % (msg, ' vs '.join(str(tuple(s)) for s in shapes))
        super(ShapeError, self).__init__(msg)
        self.shapes = shapes


class ConfigError(ValueError):
    """
    Run configuration is invalid (unknown key or bad value).
    """
    pass


class CheckpointError(Exception):
    """
    A checkpoint or cache file is missing, corrupt or incompatible.
    """

    def __init__(self, msg, path=None, stage=None):
        super(CheckpointError, self).__init__(msg)
        self.path = path
        self.stage = stage

    def __str__(self):
        s = self.args[0]
        if self.stage:
            s = s + '\nstage [%s]' % self.stage
        if self.path:
            s = s + '\npath [%s]' % self.path
        return s


class EmptyDataset(ValueError):
    """
    A training or fine-tuning stage received no data.
    """
    pass


class TrainingDiverged(ArithmeticError):
    """
    A training loss became non-finite.
    """

    def __init__(self, stage, step, components):
        self.stage = stage
        self.step = step
        self.components = dict(components)
        detail = ', '.join('%s=%r' % (k, v) for k, v in sorted(self.components.items()))
        super(TrainingDiverged, self).__init__(
            '%s training diverged at step %d (%s)' % (stage, step, detail))
