# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Run configuration.

A run configuration file holds ``key = value`` lines.  Keys of a
pipeline stage are written ``section.key``; ``seed`` and ``output_dir``
stand alone.  Values follow YAML scalar rules::

    # first run
    seed = 7
    manifold.experts = 4
    manifold.beta = 0.001   # KL weight
    evaluation.frames = [10, 20, 40]

Every key has a default held in the section dataclasses below. Unknown
sections or keys are rejected with :exc:`ConfigError`.
"""

import dataclasses
import os
from dataclasses import dataclass, field

import yaml

from .common import ConfigError
from .environment import get_output_dir


@dataclass
class DataConfig:
    synthetic: bool = True
    bvh_dir: str = None
    styles: int = 10
    clips: int = 8
    frames: int = 600
    clip_length: int = 60
    clip_overlap: int = 20
    style_clip_length: int = 120
    # joints whose name contains one of these are removed on ingestion
    drop_joints: list = field(default_factory=lambda: ['Wrist', 'Thumb'])
    mirror: bool = True


@dataclass
class PhaseConfig:
    channels: int = 5
    window: int = 61
    hidden: int = 32
    epochs: int = 20
    steps_per_epoch: int = 20
    batch: int = 32
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.9


@dataclass
class ManifoldConfig:
    experts: int = 4
    latent: int = 32
    hidden: int = 128
    gate_hidden: int = 64
    window: int = 25
    epochs: int = 10
    steps_per_epoch: int = 50
    batch: int = 16
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.9
    beta: float = 0.001


@dataclass
class SamplerConfig:
    hidden: int = 128
    style_channels: int = 64
    use_attention: bool = True
    curriculum_start: int = 20
    curriculum_end: int = 40
    epochs: int = 10
    steps_per_epoch: int = 20
    batch: int = 8
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.9
    weight_decay: float = 1e-4
    t_zero: float = 5.0
    t_period: float = 30.0
    noise_var: float = 0.5
    max_duration: int = 120


@dataclass
class FinetuneConfig:
    epochs: int = 5
    steps_per_epoch: int = 10
    batch: int = 4
    lr: float = 1e-3
    weight_decay: float = 1e-4
    curriculum_start: int = 20
    curriculum_end: int = 40
    augment: bool = True
    groups: list = field(default_factory=lambda: ['style_encoder', 'film_linear', 'atn_linear'])


@dataclass
class ClassifierConfig:
    frames: int = 40
    epochs: int = 10
    steps_per_epoch: int = 20
    batch: int = 16
    lr: float = 1e-3


@dataclass
class EvalConfig:
    frames: list = field(default_factory=lambda: [10, 20, 40])
    d: list = field(default_factory=lambda: [2.0, -1.0])
    dt: list = field(default_factory=lambda: [2.0, 0.5])
    samples: int = 10
    pairs: int = 8
    repetitions: int = 5
    warmup: int = 2


_SECTIONS = {
    'data': DataConfig,
    'phase': PhaseConfig,
    'manifold': ManifoldConfig,
    'sampler': SamplerConfig,
    'finetune': FinetuneConfig,
    'classifier': ClassifierConfig,
    'evaluation': EvalConfig,
}


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: str = None
    data: DataConfig = field(default_factory=DataConfig)
    phase: PhaseConfig = field(default_factory=PhaseConfig)
    manifold: ManifoldConfig = field(default_factory=ManifoldConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)

    def resolve_output_dir(self, env=None):
        """
        :returns: configured output directory, or the environment default
        """
        if self.output_dir:
            return os.path.expanduser(self.output_dir)
        return get_output_dir(env)

    def to_dict(self):
        return dataclasses.asdict(self)


def _coerce(section, key, default, value):
    if value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError('%s.%s must be true or false, got [%r]' % (section, key, value))
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError('%s.%s must be an integer, got [%r]' % (section, key, value))
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError('%s.%s must be a number, got [%r]' % (section, key, value))
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            value = [value]
        return value
    return value


def _apply(section_name, obj, values):
    if not isinstance(values, dict):
        raise ConfigError('section [%s] must be a mapping' % section_name)
    names = {f.name for f in dataclasses.fields(obj)}
    for key, value in values.items():
        if key not in names:
            raise ConfigError('unknown configuration key [%s.%s]' % (section_name, key))
        setattr(obj, key, _coerce(section_name, key, getattr(obj, key), value))


def parse_override(text):
    """
    Parse a ``section.key=value`` override.  The value follows YAML
    scalar rules, so ``true``, ``3`` and ``[10, 20]`` keep their types.

    :returns: ``(section, key, value)``
    :raises: :exc:`ConfigError` on malformed text
    """
    if '=' not in text:
        raise ConfigError('override must look like section.key=value, got [%s]' % text)
    name, raw = text.split('=', 1)
    name = name.strip()
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError('cannot parse value of [%s]: %s' % (name, e))
    if '.' in name:
        section, key = name.split('.', 1)
    else:
        section, key = None, name
    return section, key, value


def parse_config_text(text, path='<config>'):
    """
    Parse a configuration file: one ``section.key = value`` (or
    top-level ``key = value``) per line.  Blank lines and lines starting
    with ``#`` are skipped; a ``#`` after a value starts a comment.

    :returns: list of ``(section, key, value)``
    :raises: :exc:`ConfigError` naming the file and line
    """
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith('#'):
            continue
        try:
            entries.append(parse_override(stripped))
        except ConfigError as e:
            raise ConfigError('%s:%d: %s' % (path, lineno, e))
    return entries


def load_config(path=None, overrides=()):
    """
    Build a :class:`RunConfig` from defaults, an optional configuration
    file and ``section.key=value`` overrides, in that order of priority.

    :param path: path of a ``key = value`` file, or ``None`` for defaults only
    :param overrides: iterable of override strings
    :raises: :exc:`ConfigError`
    """
    config = RunConfig()
    entries = []
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError('configuration file [%s] does not exist' % path)
        with open(path, encoding='utf-8') as f:
            entries = parse_config_text(f.read(), path)
    entries.extend(parse_override(text) for text in overrides or ())
    data = {}
    for section, key, value in entries:
        if section is None:
            data[key] = value
        else:
            current = data.setdefault(section, {})
            if not isinstance(current, dict):
                raise ConfigError('section [%s] must be a mapping' % section)
            current[key] = value
    for key, value in data.items():
        if key in _SECTIONS:
            _apply(key, getattr(config, key), value)
        elif key == 'seed':
            config.seed = _coerce('run', key, 0, value)
        elif key == 'output_dir':
            config.output_dir = None if value is None else str(value)
        else:
            raise ConfigError('unknown configuration section [%s]' % key)
    data_config = config.data
    if not 0 <= data_config.clip_overlap < data_config.clip_length:
        raise ConfigError('data.clip_overlap must be in [0, data.clip_length), got %d and %d'
                          % (data_config.clip_overlap, data_config.clip_length))
    return config
