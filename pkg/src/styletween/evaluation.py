# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Evaluation protocol: in-betweening tasks cut from test clips, spatial
and temporal control perturbations, the metric report and latency
benchmarking.
"""

import csv
import logging
import math

import numpy as np
from tqdm import tqdm

from .common import JOINT_FEATURES
from .metrics import (diversity, fmd, foot_skate, l2_global, last_frame_error, npss,
                      rotation_channels)
from .motion import orient_to_x, random_crop
from .sampler import DurationError, synthesize_transition
from .skeleton import MotionClip, feature_slices

logger = logging.getLogger(__name__)

REPORT_HEADER = ('metric', 'frames', 'd', 'dt', 'value', 'n')
LATENCY_HEADER = ('run', 'frames', 'mean_ms', 'reference_ms')

# published per-frame figure on a desktop GPU; comparisons are report-only
REFERENCE_MS_PER_FRAME = 1.7


class InsufficientRepetitions(ValueError):
    pass


class Task(object):
    """
    One in-betweening problem: start and target frame vectors, the
    number of frames to generate and the start phase.
    """

    def __init__(self, start, target, duration, start_phase=None, style=''):
        self.start = np.asarray(start, dtype=np.float64)
        self.target = np.asarray(target, dtype=np.float64)
        self.duration = int(duration)
        self.start_phase = start_phase
        self.style = style

    @classmethod
    def from_clip(cls, clip):
        """
        Task spanning a whole clip: frame 0 to the last frame.
        """
        frames = clip.frame_vectors()
        phase = clip.phase.vectors()[0] if clip.phase is not None else None
        return cls(frames[0], frames[-1], clip.n_frames - 1, phase, clip.style)


def frame_positions(frames):
    """
    Global joint positions ``(..., J, 3)`` held in frame vectors.
    """
    frames = np.asarray(frames, dtype=np.float64)
    J = frames.shape[-1] // JOINT_FEATURES
    pos, _, _ = feature_slices(J)
    return frames[..., pos].reshape(frames.shape[:-1] + (J, 3))


def control_transform(task, d=1.0, dt=1.0, hip_index=0):
    """
    Move the target on the ground plane to ``x0 + d (xT - x0)``, measured
    at the hip, and scale the duration by *dt*, rounded to the nearest
    frame.  The target pose is otherwise unchanged.

    :returns: :class:`Task`
    :raises: :exc:`DurationError` if fewer than 2 frames remain
    """
    if dt <= 0:
        raise DurationError('duration scale must be positive, got %s' % dt)
    duration = int(math.floor(task.duration * dt + 0.5))
    if duration < 2:
        raise DurationError('scaled duration %d is shorter than 2 frames' % duration)
    x0 = frame_positions(task.start)[hip_index]
    xT = frame_positions(task.target)[hip_index]
    shift = (x0 + d * (xT - x0)) - xT
    shift[1] = 0.0
    J = task.target.shape[-1] // JOINT_FEATURES
    pos, _, _ = feature_slices(J)
    target = task.target.copy()
    target[pos] += np.tile(shift, J)
    return Task(task.start, target, duration, task.start_phase, task.style)


class MetricReport(object):
    """
    Rows of ``(metric, frames, d, dt, value, n)``.
    """

    def __init__(self):
        self.rows = []

    def add(self, metric, frames, d, dt, value, n):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError('metric [%s] is not finite: %r' % (metric, value))
        if n <= 0:
            raise ValueError('metric [%s] has no samples' % metric)
        self.rows.append((metric, int(frames), float(d), float(dt), value, int(n)))

    def value(self, metric, frames=None, d=1.0, dt=1.0):
        for row in self.rows:
            if row[0] == metric and (frames is None or row[1] == frames) and \
                    row[2] == d and row[3] == dt:
                return row[4]
        raise KeyError('no row for metric [%s] frames [%s] d [%s] dt [%s]' % (metric, frames, d, dt))

    def write(self, path):
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(REPORT_HEADER)
            for metric, frames, d, dt, value, n in self.rows:
                writer.writerow([metric, frames, '%g' % d, '%g' % dt, '%.9g' % value, n])


def score_reconstruction(report, frames, generated, references, foot_indices):
    """
    Reconstruction rows for tasks with ground truth.

    :param generated: per task, a list of sampled frame arrays ``(T+1, D)``
    :param references: per task, the ground-truth frames ``(T+1, D)``
    """
    samples = sum(len(g) for g in generated)
    l2 = [l2_global(frame_positions(s), frame_positions(r))
          for gen, r in zip(generated, references) for s in gen]
    gen_rot = np.stack([rotation_channels(s) for gen in generated for s in gen])
    ref_rot = np.stack([rotation_channels(r) for gen, r in zip(generated, references) for _ in gen])
    value = npss(ref_rot, gen_rot)
    report.add('l2_global', frames, 1, 1, np.mean(l2), samples)
    report.add('npss', frames, 1, 1, value, samples)
    report.add('npss_x100', frames, 1, 1, 100.0 * value, samples)
    report.add('foot_skate_gt', frames, 1, 1,
               np.mean([foot_skate(frame_positions(r), foot_indices) for r in references]),
               len(references))


def score_control(report, frames, d, dt, generated, targets, foot_indices):
    samples = sum(len(g) for g in generated)
    report.add('last_frame_error', frames, d, dt,
               np.mean([last_frame_error(frame_positions(s), frame_positions(t))
                        for gen, t in zip(generated, targets) for s in gen]), samples)
    report.add('foot_skate', frames, d, dt,
               np.mean([foot_skate(frame_positions(s), foot_indices)
                        for gen in generated for s in gen]), samples)
    multi = [gen for gen in generated if len(gen) >= 2]
    if multi:
        report.add('diversity', frames, d, dt,
                   np.mean([diversity([frame_positions(s) for s in gen]) for gen in multi]),
                   sum(len(g) for g in multi))


def _style_exemplar(clip, pool, length):
    others = [c for c in pool if c.style == clip.style and c.n_frames >= length]
    different = [c for c in others if c.name != clip.name]
    chosen = (different or others or [None])[0]
    return chosen


def make_tasks(clips, pool, frames, count, rng, style_length=120):
    """
    Cut up to *count* tasks of *frames* missing frames from test clips,
    each with a style exemplar of the clip's style.

    :returns: list of ``(task, reference_frames, style_clip)``
    """
    tasks = []
    order = rng.permutation(len(clips)) if clips else []
    for i in order:
        if len(tasks) >= count:
            break
        clip = clips[i]
        style_clip = _style_exemplar(clip, pool, style_length)
        if style_clip is None or clip.n_frames < frames + 1:
            continue
        window = orient_to_x(random_crop(clip, frames + 1, rng))
        tasks.append((Task.from_clip(window), window.frame_vectors(), style_clip))
    return tasks


def _sample(manifold, sampler, task, style_clip, samples, seed):
    return [synthesize_transition(manifold, sampler, task.start, task.target, task.duration,
                                  style_clip, seed=seed + s, start_phase=task.start_phase).frames
            for s in range(samples)]


def evaluate(manifold, sampler, clips, pool, config, classifier=None, seed=0, progress=True):
    """
    Run the metric suite on test clips.

    :param clips: test clips, with phase tracks where available
    :param pool: clips that style exemplars are drawn from
    :param config: :class:`styletween.config.EvalConfig`
    :param classifier: optional :class:`styletween.classifier.StyleClassifier`
      enabling the FMD row
    :returns: :class:`MetricReport`
    """
    rng = np.random.default_rng(seed)
    report = MetricReport()
    feet = manifold.skeleton.foot_indices
    hip = manifold.skeleton.hip_index
    longest = max(config.frames)
    for frames in tqdm(config.frames, desc='evaluate', disable=not progress):
        tasks = make_tasks(clips, pool, frames, config.pairs, rng, sampler.style_length)
        if not tasks:
            logger.warning('no test clip is long enough for %d missing frames', frames)
            continue
        generated = [_sample(manifold, sampler, t, s, config.samples, seed) for t, _, s in tasks]
        references = [r for _, r, _ in tasks]
        score_reconstruction(report, frames, generated, references, feet)
        score_control(report, frames, 1, 1, generated, [t.target for t, _, _ in tasks], feet)
        if classifier is not None and frames == longest:
            gen = [s for g in generated for s in g]
            skel = manifold.skeleton
            latents_gen = classifier.latents([MotionClip.from_frame_vectors(skel, s) for s in gen])
            latents_ref = classifier.latents([MotionClip.from_frame_vectors(skel, r)
                                              for r in references])
            if len(latents_gen) >= 2 and len(latents_ref) >= 2:
                report.add('fmd', frames, 1, 1, fmd(latents_gen, latents_ref), len(gen))
        controls = [(d, 1.0) for d in config.d] + [(1.0, dt) for dt in config.dt]
        for d, dt in controls:
            moved, styles = [], []
            for task, _, style_clip in tasks:
                try:
                    moved.append(control_transform(task, d, dt, hip))
                    styles.append(style_clip)
                except DurationError as e:
                    logger.warning('skipping control d=%s dt=%s: %s', d, dt, e)
            if not moved:
                continue
            generated = [_sample(manifold, sampler, t, s, config.samples, seed)
                         for t, s in zip(moved, styles)]
            score_control(report, frames, d, dt, generated, [t.target for t in moved], feet)
    return report


class LatencyReport(object):

    def __init__(self, per_frame, per_run, duration):
        self.per_frame = np.asarray(per_frame, dtype=np.float64)
        self.per_run = np.asarray(per_run, dtype=np.float64)
        self.duration = duration

    @property
    def mean_ms(self):
        return float(np.mean(self.per_frame))

    @property
    def p95_ms(self):
        return float(np.percentile(self.per_frame, 95))

    @property
    def max_ms(self):
        return float(np.max(self.per_run))

    def write(self, path):
        """
        One row per timed run, then the mean and p95 over every frame.
        """
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(LATENCY_HEADER)
            for i, ms in enumerate(self.per_run):
                writer.writerow([i, self.duration, '%.6f' % ms, REFERENCE_MS_PER_FRAME])
            writer.writerow(['mean', self.duration, '%.6f' % self.mean_ms, REFERENCE_MS_PER_FRAME])
            writer.writerow(['p95', self.duration, '%.6f' % self.p95_ms, REFERENCE_MS_PER_FRAME])


def benchmark_latency(manifold, sampler, task, style_clip, repetitions=5, warmup=2, seed=0):
    """
    Wall-clock milliseconds per synthesized frame.  Warm-up runs are
    discarded.

    :raises: :exc:`InsufficientRepetitions` if *repetitions* < 1
    """
    if repetitions < 1:
        raise InsufficientRepetitions('latency benchmark needs at least one repetition')
    for r in range(warmup):
        synthesize_transition(manifold, sampler, task.start, task.target, task.duration,
                              style_clip, seed=seed + r, start_phase=task.start_phase)
    per_frame, per_run = [], []
    for r in range(repetitions):
        result = synthesize_transition(manifold, sampler, task.start, task.target, task.duration,
                                       style_clip, seed=seed + warmup + r,
                                       start_phase=task.start_phase)
        ms = 1000.0 * result.times
        per_frame.extend(ms)
        per_run.append(float(np.mean(ms)))
    report = LatencyReport(per_frame, per_run, task.duration)
    logger.info('latency over %d runs of %d frames: mean %.3f ms/frame, p95 %.3f ms/frame',
                repetitions, task.duration, report.mean_ms, report.p95_ms)
    return report
