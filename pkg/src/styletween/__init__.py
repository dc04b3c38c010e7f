# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Stylized in-between motion synthesis: a phase-conditioned motion
manifold driven toward a target frame by a style-conditioned sampler.
"""

from .common import CheckpointError, ConfigError, EmptyDataset, ShapeError, TrainingDiverged
from .config import RunConfig, load_config
from .environment import get_log_level, get_output_dir, get_styletween_home
from .skeleton import MotionClip, PhaseTrack, Skeleton

# same version as in:
# - setup.py
# - CHANGELOG.rst
__version__ = '0.1.0'

__all__ = (
    'CheckpointError', 'ConfigError', 'EmptyDataset', 'ShapeError', 'TrainingDiverged',
    'RunConfig', 'load_config',
    'get_log_level', 'get_output_dir', 'get_styletween_home',
    'MotionClip', 'PhaseTrack', 'Skeleton',
)
