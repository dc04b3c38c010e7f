# Copyright (c) 2024, styletween contributors
# Licensed under the BSD 3-Clause License; see LICENSE.

import os
import tempfile

import numpy as np
import pytest


def _clips():
    from styletween.synthetic import GaitStyle, synth_gait
    slow = [synth_gait(GaitStyle(name='slow', cadence=0.7), 20, s) for s in range(2)]
    fast = [synth_gait(GaitStyle(name='fast', cadence=1.3, arm=30.0), 20, s) for s in range(2)]
    return slow + fast


def _config(**kwargs):
    from styletween.config import ClassifierConfig
    values = dict(frames=8, epochs=2, steps_per_epoch=2, batch=4)
    values.update(kwargs)
    return ClassifierConfig(**values)


def test_cross_entropy():
    from styletween.classifier import cross_entropy
    from styletween.tensor import Tensor
    loss = cross_entropy(Tensor(np.zeros((2, 3))), [0, 2])
    assert abs(loss.item() - np.log(3.0)) < 1e-12


def test_train_style_classifier():
    from styletween.classifier import accuracy, train_style_classifier
    clips = _clips()
    classifier, curve = train_style_classifier(clips, _config(), seed=0, progress=False)
    assert ['fast', 'slow'] == classifier.styles
    assert 2 == len(curve.rows)
    assert all(np.isfinite(curve.column('loss')))
    probabilities = classifier.probabilities(clips)
    assert (4, 2) == probabilities.shape
    assert np.allclose(1.0, probabilities.sum(axis=-1))
    assert (4, 64) == classifier.latents(clips).shape
    assert 0.0 <= accuracy(classifier, clips) <= 1.0
    assert 0.0 == accuracy(classifier, [])


def test_train_style_classifier_empty():
    from styletween.classifier import train_style_classifier
    from styletween.common import EmptyDataset
    with pytest.raises(EmptyDataset):
        train_style_classifier(_clips(), _config(frames=30), progress=False)


def test_latents_are_heading_invariant():
    from styletween.classifier import StyleClassifier
    from styletween.synthetic import GaitStyle, synth_gait
    classifier = StyleClassifier(276, ['walk'], np.random.default_rng(0), channels=4)
    a = synth_gait(GaitStyle(), 12, 0, heading=0.0, phase=0.3)
    b = synth_gait(GaitStyle(), 12, 0, heading=2.0, phase=0.3)
    assert np.allclose(classifier.latents([a]), classifier.latents([b]), atol=1e-6)


def test_save_load_classifier():
    from styletween.classifier import StyleClassifier, load_classifier, save_classifier
    from styletween.common import CheckpointError
    from styletween.training import Normalizer
    clips = _clips()
    classifier = StyleClassifier(276, ['fast', 'slow'], np.random.default_rng(0), channels=4)
    classifier.norm = Normalizer.fit(np.concatenate([c.frame_vectors() for c in clips]))
    d = tempfile.mkdtemp()
    path = os.path.join(d, 'classifier.ckpt')
    save_classifier(path, classifier)
    loaded = load_classifier(path)
    assert ['fast', 'slow'] == loaded.styles
    assert 4 == loaded.channels
    assert np.allclose(classifier.norm.mean, loaded.norm.mean, rtol=1e-6, atol=1e-6)
    assert np.allclose(classifier.latents(clips), loaded.latents(clips), rtol=1e-2, atol=1e-2)
    with pytest.raises(CheckpointError):
        load_classifier(os.path.join(d, 'missing.ckpt'))
