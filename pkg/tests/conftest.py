"""Shared fixtures: a trained blob classifier and its reference statistics.

Session-scoped because training, while fast, is reused by many tests and the
model must be byte-identical everywhere for determinism checks.
"""
from types import SimpleNamespace

import pytest

from gradcf import data, net


@pytest.fixture(scope="session")
def blobs():
    train, test = data.synth_gaussian(10, 2, 100, 6.0, seed=7)
    model = net.init_mlp([10, 16, 2], seed=0)
    report = net.train(
        model,
        train.matrix,
        train.labels,
        epochs=40,
        batch_size=16,
        seed=0,
        lr=0.01,
        test=(test.matrix, test.labels),
    )
    refs = {c: data.sample_reference_set(train, model, c, n=100, seed=11) for c in (0, 1)}
    return SimpleNamespace(train=train, test=test, model=model, report=report, refs=refs)


@pytest.fixture(scope="session")
def digits():
    """Rendered-digit corpus and a trained image classifier."""
    train, test = data.synth_digits(2000, 1000, seed=0)
    model = net.init_mlp([784, 64, 32, 10], seed=0)
    model.image_shape = (28, 28)
    report = net.train(
        model,
        train.matrix,
        train.labels,
        epochs=15,
        batch_size=32,
        seed=0,
        lr=0.01,
        test=(test.matrix, test.labels),
    )
    return SimpleNamespace(train=train, test=test, model=model, report=report)
