# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
``styletween`` command-line tool.

Every subcommand reads and writes artifacts in one output directory::

    clips.bin        clip cache (features, style labels, phase tracks)
    splits.yaml      style subsets and test splits
    phase.ckpt       periodic autoencoder
    manifold.ckpt    motion manifold
    sampler.ckpt     sampler
    classifier.ckpt  style classifier used for FMD

Exit codes: 0 success, 1 unexpected error, 2 missing prerequisite, 3
invalid configuration, 4 invalid input data, 5 training diverged.
"""

import argparse
import logging
import os
import sys
import traceback

import numpy as np
import yaml

from . import __version__
from .bvh import ParseError, load_bvh, save_bvh
from .classifier import load_classifier, save_classifier, train_style_classifier
from .common import (CLASSIFIER_CHECKPOINT, CLIP_CACHE_FILE, LATENCY_FILE, MANIFOLD_CHECKPOINT,
                     PHASE_CHECKPOINT, SAMPLER_CHECKPOINT, SPLITS_FILE, CheckpointError, ConfigError,
                     EmptyDataset, ShapeError, TrainingDiverged)
from .config import load_config
from .environment import get_log_level
from .evaluation import (REFERENCE_MS_PER_FRAME, InsufficientRepetitions, Task, benchmark_latency,
                         evaluate, make_tasks)
from .manifold import MissingLabels, MissingPhase, load_manifold, save_manifold, train_manifold
from .motion import (MirrorError, ResampleError, RetargetError, SplitError, DatasetSplit,
                     load_clip_cache, make_splits, orient_to_x, prepare_clips, save_clip_cache)
from .phase import extract_phase_track, load_pae, save_pae, train_pae
from .rotations import SkeletonMismatch
from .sampler import (DurationError, StateError, StyleClipTooShort, finetune_style, load_sampler,
                      save_sampler, synthesize_transition, train_sampler)
from .skeleton import InvalidSkeleton
from .synthetic import ParameterError, synth_catalog

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_MISSING = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_DIVERGED = 5

DATA_ERRORS = (ParseError, InvalidSkeleton, SkeletonMismatch, RetargetError, ResampleError,
               MirrorError, SplitError, ShapeError, EmptyDataset, MissingLabels, ParameterError,
               StyleClipTooShort, DurationError, StateError, InsufficientRepetitions)


class Run(object):
    """
    Resolved configuration and artifact paths of one invocation.
    """

    def __init__(self, args):
        overrides = list(args.set or [])
        if args.seed is not None:
            overrides.append('seed=%d' % args.seed)
        if args.output_dir:
            overrides.append('output_dir=%s' % args.output_dir)
        self.config = load_config(args.config, overrides)
        self.seed = self.config.seed
        self.output_dir = self.config.resolve_output_dir()
        self.progress = not args.quiet

    def path(self, name):
        return os.path.join(self.output_dir, name)

    def clips(self, stage='prepare'):
        clips, meta = load_clip_cache(self.path(CLIP_CACHE_FILE), stage=stage)
        return clips, meta

    def split(self):
        path = self.path(SPLITS_FILE)
        if not os.path.isfile(path):
            raise CheckpointError('split file does not exist', path=path, stage='prepare')
        with open(path) as f:
            return DatasetSplit.from_dict(yaml.safe_load(f))

    def write_split(self, split):
        with open(self.path(SPLITS_FILE), 'w') as f:
            yaml.safe_dump(split.to_dict(), f, default_flow_style=False)

    def write_curve(self, curve):
        path = self.path('%s_loss.csv' % curve.stage)
        curve.write(path)
        logger.info('wrote loss curve [%s]', path)


def _key_values(items):
    """
    Parse ``key=value`` command-line items into a dict of YAML scalars.
    """
    values = {}
    for item in items or ():
        if '=' not in item:
            raise ConfigError('expected key=value, got [%s]' % item)
        key, raw = item.split('=', 1)
        values[key.strip()] = yaml.safe_load(raw)
    return values


def _int_list(text):
    try:
        return [int(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise ConfigError('expected comma-separated integers, got [%s]' % text)


def _controls(items):
    """
    ``d=2,-1 dt=2,0.5`` to ``{'d': [2.0, -1.0], 'dt': [2.0, 0.5]}``
    """
    controls = {}
    for item in items or ():
        if '=' not in item:
            raise ConfigError('control must look like d=... or dt=..., got [%s]' % item)
        key, raw = item.split('=', 1)
        if key not in ('d', 'dt'):
            raise ConfigError('unknown control [%s]' % key)
        try:
            controls[key] = [float(v) for v in raw.split(',') if v.strip()]
        except ValueError:
            raise ConfigError('control [%s] needs numbers, got [%s]' % (key, raw))
    return controls


def _style_of(path):
    # 100STYLE naming: <Style>_<Content>.bvh
    return os.path.basename(path).split('_')[0].split('.')[0]


def _read_bvh_dir(path):
    if not os.path.isdir(path):
        raise ConfigError('BVH directory [%s] does not exist' % path)
    clips = []
    for root, dirs, files in os.walk(path):
        dirs.sort()
        for name in sorted(files):
            if name.lower().endswith('.bvh'):
                full = os.path.join(root, name)
                clips.append(load_bvh(full, style=_style_of(full)))
    if not clips:
        raise EmptyDataset('no BVH files under [%s]' % path)
    return clips


def _select(clips, indices):
    return [clips[i] for i in indices]


def cmd_prepare(run, args):
    data = run.config.data
    bvh_dir = args.bvh_dir
    if bvh_dir is None and args.synthetic is None and not data.synthetic:
        bvh_dir = data.bvh_dir
        if not bvh_dir:
            raise ConfigError('data.synthetic is false but data.bvh_dir is not set')
    if bvh_dir:
        raw = _read_bvh_dir(bvh_dir)
        styles = sorted(set(c.style for c in raw))
    else:
        params = _key_values(args.synthetic)
        unknown = set(params) - {'styles', 'clips', 'frames'}
        if unknown:
            raise ConfigError('unknown synthetic parameters %s' % sorted(unknown))
        gaits, raw = synth_catalog(params.get('styles', data.styles),
                                   params.get('clips', data.clips),
                                   params.get('frames', data.frames), seed=run.seed)
        styles = [g.name for g in gaits]
    clips, sources = prepare_clips(raw, drop_patterns=data.drop_joints, mirror=data.mirror)
    clips = [orient_to_x(c) for c in clips]
    split = make_splits(styles, [c.style for c in clips], run.seed, sources)
    if not os.path.isdir(run.output_dir):
        os.makedirs(run.output_dir)
    save_clip_cache(run.path(CLIP_CACHE_FILE), clips,
                    {'sources': sources, 'catalog': list(styles), 'seed': run.seed})
    run.write_split(split)
    logger.info('prepared %d clips of %d styles in [%s]', len(clips), len(styles), run.output_dir)
    return EXIT_OK


def cmd_train_phase(run, args):
    clips, meta = run.clips('prepare')
    split = run.split()
    pae, normalizer, curve = train_pae(_select(clips, split.train_indices('all')), run.config.phase,
                                       seed=run.seed,
                                       validation=_select(clips, split.test_indices('overlap')),
                                       progress=run.progress)
    save_pae(run.path(PHASE_CHECKPOINT), pae, normalizer)
    run.write_curve(curve)
    tracked = [c.copy(phase=extract_phase_track(pae, normalizer, c)) for c in clips]
    save_clip_cache(run.path(CLIP_CACHE_FILE), tracked, meta)
    logger.info('stored phase tracks of %d clips', len(tracked))
    return EXIT_OK


def _phased(clips):
    if any(c.phase is None for c in clips):
        raise CheckpointError('clip cache has no phase tracks', stage='train-phase')
    return clips


def cmd_train_manifold(run, args):
    clips, _ = run.clips('prepare')
    split = run.split()
    train = _phased(_select(clips, split.train_indices(args.subset)))
    model, curve = train_manifold(train, run.config.manifold, seed=run.seed,
                                  clip_length=run.config.data.clip_length,
                                  clip_overlap=run.config.data.clip_overlap,
                                  validation=_select(clips, split.test_indices('overlap')),
                                  progress=run.progress)
    save_manifold(run.path(MANIFOLD_CHECKPOINT), model)
    run.write_curve(curve)
    return EXIT_OK


def cmd_train_sampler(run, args):
    manifold = load_manifold(run.path(MANIFOLD_CHECKPOINT))
    clips, _ = run.clips('prepare')
    train = _phased(_select(clips, run.split().train_indices(args.subset)))
    sampler, curve = train_sampler(train, manifold, run.config.sampler, seed=run.seed,
                                   style_length=run.config.data.style_clip_length,
                                   progress=run.progress)
    save_sampler(run.path(SAMPLER_CHECKPOINT), sampler)
    run.write_curve(curve)
    return EXIT_OK


def cmd_finetune(run, args):
    manifold = load_manifold(run.path(MANIFOLD_CHECKPOINT))
    sampler = load_sampler(run.path(SAMPLER_CHECKPOINT))
    phase_model = load_pae(run.path(PHASE_CHECKPOINT))
    clips, _ = run.clips('prepare')
    split = run.split()
    style = args.style or split.styles_c[0]
    pool = [clips[i] for i in split.test_indices('C') + split.train if clips[i].style == style]
    if not pool:
        raise EmptyDataset('no clips of style [%s]' % style)
    config = run.config.finetune
    if args.augment is not None:
        config.augment = args.augment
    chosen = pool[:args.clips]
    sampler, curve = finetune_style(sampler, manifold, chosen, config, seed=run.seed,
                                    phase_model=phase_model, progress=run.progress)
    output = args.output or run.path('sampler_%s.ckpt' % style)
    save_sampler(output, sampler, stage='finetune')
    run.write_curve(curve)
    logger.info('fine-tuned on %d clips of [%s], wrote [%s]', len(chosen), style, output)
    return EXIT_OK


def _models(run, args):
    manifold = load_manifold(run.path(MANIFOLD_CHECKPOINT))
    sampler = load_sampler(args.sampler or run.path(SAMPLER_CHECKPOINT))
    return manifold, sampler


def cmd_synthesize(run, args):
    manifold, sampler = _models(run, args)
    clips, _ = run.clips('prepare')
    for i in (args.clip, args.style_clip):
        if not 0 <= i < len(clips):
            raise ConfigError('clip index [%d] out of range [0, %d)' % (i, len(clips)))
    clip = clips[args.clip]
    target = args.target if args.target is not None else min(args.start + 30, clip.n_frames - 1)
    if not 0 <= args.start < target < clip.n_frames:
        raise DurationError('frames [%d, %d] do not lie in clip [%d] of %d frames'
                            % (args.start, target, args.clip, clip.n_frames))
    window = orient_to_x(clip.slice(args.start, target + 1))
    task = Task.from_clip(window)
    duration = args.duration or task.duration
    style_clip = clips[args.style_clip]
    result = synthesize_transition(manifold, sampler, task.start, task.target, duration,
                                   style_clip, seed=run.seed, start_phase=task.start_phase,
                                   max_duration=run.config.sampler.max_duration)
    name = args.name or 'transition_%d_%d_%d' % (args.clip, args.start, target)
    out = result.to_clip(style=style_clip.style, name=name)
    save_bvh(run.path(name + '.bvh'), out)
    save_clip_cache(run.path(name + '.bin'), [out], {'seed': run.seed})
    logger.info('synthesized %d frames in style [%s]: [%s]', duration, style_clip.style,
                run.path(name + '.bvh'))
    return EXIT_OK


def cmd_train_classifier(run, args):
    clips, _ = run.clips('prepare')
    classifier, curve = train_style_classifier(clips, run.config.classifier, seed=run.seed,
                                               progress=run.progress)
    save_classifier(run.path(CLASSIFIER_CHECKPOINT), classifier)
    run.write_curve(curve)
    return EXIT_OK


def cmd_evaluate(run, args):
    manifold, sampler = _models(run, args)
    clips, _ = run.clips('prepare')
    config = run.config.evaluation
    if args.frames:
        config.frames = _int_list(args.frames)
    controls = _controls(args.control)
    config.d = controls.get('d', config.d)
    config.dt = controls.get('dt', config.dt)
    classifier = None
    if os.path.isfile(run.path(CLASSIFIER_CHECKPOINT)):
        classifier = load_classifier(run.path(CLASSIFIER_CHECKPOINT))
    test = _select(clips, run.split().test_indices(args.on))
    report = evaluate(manifold, sampler, test, clips, config, classifier=classifier,
                      seed=run.seed, progress=run.progress)
    output = args.output or run.path('report_%s.csv' % args.on)
    report.write(output)
    logger.info('wrote %d metric rows to [%s]', len(report.rows), output)
    return EXIT_OK


def cmd_bench(run, args):
    manifold, sampler = _models(run, args)
    clips, _ = run.clips('prepare')
    config = run.config.evaluation
    test = _select(clips, run.split().test_indices(args.on))
    tasks = make_tasks(test, clips, args.frames, 1, np.random.default_rng(run.seed),
                       sampler.style_length)
    if not tasks:
        raise EmptyDataset('no test clip holds a %d-frame transition' % args.frames)
    task, _, style_clip = tasks[0]
    report = benchmark_latency(manifold, sampler, task, style_clip,
                               repetitions=config.repetitions, warmup=config.warmup, seed=run.seed)
    print('frames: %d' % report.duration)
    print('mean: %.3f ms/frame' % report.mean_ms)
    print('p95: %.3f ms/frame' % report.p95_ms)
    print('max run mean: %.3f ms/frame' % report.max_ms)
    print('reference: %.1f ms/frame (GPU, report-only)' % REFERENCE_MS_PER_FRAME)
    report.write(run.path(LATENCY_FILE))
    return EXIT_OK


def _bool(text):
    value = yaml.safe_load(text)
    if not isinstance(value, bool):
        raise argparse.ArgumentTypeError('expected true or false, got [%s]' % text)
    return value


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='run configuration file of key = value lines')
    common.add_argument('--set', action='append', metavar='SECTION.KEY=VALUE',
                        help='override one configuration value (repeatable)')
    common.add_argument('--seed', type=int, help='seed of every random draw')
    common.add_argument('--output-dir', help='artifact directory')
    common.add_argument('-v', '--verbose', action='store_true', help='log debug messages')
    common.add_argument('-q', '--quiet', action='store_true', help='hide progress bars')

    parser = argparse.ArgumentParser(
        prog='styletween',
        description='Stylized in-between motion: data preparation, training, synthesis '
        'and evaluation')
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    p = sub.add_parser('prepare', parents=[common], help='build the clip cache and splits')
    source = p.add_mutually_exclusive_group()
    source.add_argument('--synthetic', nargs='*', metavar='KEY=VALUE',
                        help='synthetic gait catalog, e.g. styles=10 clips=8 frames=600')
    source.add_argument('--bvh-dir', help='directory of <Style>_<Content>.bvh files')
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser('train-phase', parents=[common], help='train the periodic autoencoder')
    p.set_defaults(func=cmd_train_phase)

    for name, func, helptext in (
            ('train-manifold', cmd_train_manifold, 'train the motion manifold'),
            ('train-sampler', cmd_train_sampler, 'train the sampler')):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument('--subset', choices=('A', 'B', 'all'), default='all',
                       help='style subset of the training clips')
        p.set_defaults(func=func)

    p = sub.add_parser('finetune', parents=[common], help='few-shot fine-tune to a new style')
    p.add_argument('--style', help='style label (default: first style of subset C)')
    p.add_argument('--clips', type=int, default=8, help='number of clips of the style')
    p.add_argument('--augment', type=_bool, metavar='{true,false}',
                   help='triple the clips with mirrored and cropped copies')
    p.add_argument('--output', help='fine-tuned sampler checkpoint')
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser('synthesize', parents=[common], help='generate one in-between')
    p.add_argument('--clip', type=int, default=0, help='clip holding start and target frames')
    p.add_argument('--start', type=int, default=0, help='start frame index')
    p.add_argument('--target', type=int, help='target frame index')
    p.add_argument('--duration', type=int, help='frames to generate (default target - start)')
    p.add_argument('--style-clip', type=int, default=0, help='clip used as style exemplar')
    p.add_argument('--sampler', help='sampler checkpoint (default sampler.ckpt)')
    p.add_argument('--name', help='output base name')
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser('train-classifier', parents=[common],
                       help='train the style classifier used for FMD')
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser('evaluate', parents=[common], help='write the metric report')
    p.add_argument('--frames', help='missing-frame counts, e.g. 10,20,40')
    p.add_argument('--control', nargs='*', metavar='d=...|dt=...',
                   help='control perturbations, e.g. d=2,-1 dt=2,0.5')
    p.add_argument('--on', choices=('overlap', 'A', 'B', 'C'), default='overlap',
                   help='test split')
    p.add_argument('--sampler', help='sampler checkpoint (default sampler.ckpt)')
    p.add_argument('--output', help='report CSV')
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser('bench', parents=[common], help='measure synthesis latency')
    p.add_argument('--frames', type=int, default=40, help='transition length')
    p.add_argument('--on', choices=('overlap', 'A', 'B', 'C'), default='overlap',
                   help='test split')
    p.add_argument('--sampler', help='sampler checkpoint (default sampler.ckpt)')
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else get_log_level()
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')
    try:
        return args.func(Run(args), args)
    except CheckpointError as e:
        sys.stderr.write('missing or invalid prerequisite: %s\n' % e)
        return EXIT_MISSING
    except MissingPhase as e:
        sys.stderr.write('missing prerequisite: %s\nstage [train-phase]\n' % e)
        return EXIT_MISSING
    except ConfigError as e:
        sys.stderr.write('invalid configuration: %s\n' % e)
        return EXIT_CONFIG
    except TrainingDiverged as e:
        sys.stderr.write('%s\n' % e)
        return EXIT_DIVERGED
    except DATA_ERRORS as e:
        sys.stderr.write('invalid data: %s\n' % e)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_UNEXPECTED


if __name__ == '__main__':
    sys.exit(main())
