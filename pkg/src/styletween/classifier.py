# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

"""
Style classifier whose pooled latent space is used for the Frechet
motion distance.  It reuses the style-encoder topology, pools away the
temporal axis and adds a softmax over the style labels.
"""

import logging

import numpy as np
from tqdm import tqdm

from . import tensor as T
from .common import EmptyDataset
from .container import load_module_state, save_module
from .layers import Linear, Module
from .motion import orient_to_x, random_crop
from .optim import Amsgrad
from .sampler import StyleEncoder
from .tensor import Tensor, no_grad
from .training import LossCurve, Normalizer, check_finite

logger = logging.getLogger(__name__)


class StyleClassifier(Module):

    def __init__(self, frame_width, styles, rng, channels=64):
        super(StyleClassifier, self).__init__()
        self.frame_width = frame_width
        self.styles = list(styles)
        self.channels = channels
        self.encoder = StyleEncoder(frame_width, channels, rng)
        self.encoder.set_group(None)
        self.output = Linear(channels, len(self.styles), rng)
        self.norm = Normalizer(np.zeros(frame_width), np.ones(frame_width))

    def inputs(self, clips):
        return np.stack([self.norm.normalize(orient_to_x(c).frame_vectors()).T for c in clips])

    def pooled(self, x):
        """
        :param x: normalized windows ``(B, D, T)``
        :returns: latents ``(B, C)``
        """
        return T.mean(self.encoder(x), axis=-1)

    def forward(self, x):
        return self.output(self.pooled(x))

    def probabilities(self, clips):
        with no_grad():
            return T.softmax(self.forward(Tensor(self.inputs(clips))), axis=-1).data

    def latents(self, clips):
        """
        Pooled latent vector of every clip, ``(N, C)``.
        """
        with no_grad():
            return self.pooled(Tensor(self.inputs(clips))).data

    def predict(self, clips):
        return [self.styles[i] for i in np.argmax(self.probabilities(clips), axis=-1)]


def cross_entropy(logits, labels):
    logp = T.log_softmax(logits, axis=-1)
    picked = logp[np.arange(len(labels)), np.asarray(labels)]
    return -T.mean(picked)


def accuracy(classifier, clips):
    if not clips:
        return 0.0
    predicted = classifier.predict(clips)
    return float(np.mean([p == c.style for p, c in zip(predicted, clips)]))


def train_style_classifier(clips, config, seed=0, progress=True):
    """
    :param clips: labelled clips of at least ``config.frames`` frames
    :param config: :class:`styletween.config.ClassifierConfig`
    :returns: ``(classifier, loss_curve)``
    :raises: :exc:`EmptyDataset`
    """
    clips = [c for c in clips if c.n_frames >= config.frames]
    if not clips:
        raise EmptyDataset('classifier training needs clips of at least %d frames' % config.frames)
    styles = sorted(set(c.style for c in clips))
    rng = np.random.default_rng(seed)
    classifier = StyleClassifier(clips[0].frame_vectors().shape[1], styles, rng)
    classifier.norm = Normalizer.fit(np.concatenate([orient_to_x(c).frame_vectors() for c in clips]))
    optimizer = Amsgrad(classifier.parameters(), lr=config.lr)
    index = dict((s, i) for i, s in enumerate(styles))
    curve = LossCurve('classifier')
    step = 0
    for epoch in tqdm(range(config.epochs), desc='classifier', disable=not progress):
        total = 0.0
        for _ in range(config.steps_per_epoch):
            picks = [clips[i] for i in rng.integers(0, len(clips), size=config.batch)]
            windows = [random_crop(c, config.frames, rng) for c in picks]
            optimizer.zero_grad()
            loss = cross_entropy(classifier(Tensor(classifier.inputs(windows))),
                                 [index[c.style] for c in picks])
            check_finite('classifier', step, {'loss': loss.item()})
            T.backward(loss)
            optimizer.step()
            total += loss.item()
            step += 1
        curve.append(epoch, loss=total / max(config.steps_per_epoch, 1))
    return classifier, curve


def save_classifier(path, classifier):
    save_module(path, classifier, {
        'stage': 'classifier',
        'frame_width': classifier.frame_width,
        'styles': classifier.styles,
        'channels': classifier.channels,
    }, extra=classifier.norm.to_tensors('norm/'))


def load_classifier(path):
    state, meta = load_module_state(path, stage='evaluate')
    classifier = StyleClassifier(meta['frame_width'], meta['styles'], np.random.default_rng(0),
                                 channels=meta['channels'])
    classifier.load_state_dict(state)
    classifier.norm = Normalizer.from_tensors(state, 'norm/')
    return classifier
