"""Scikit-learn facade: params, clone, joint fit, online partial_fit."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fgat.estimator import FgatClassifier, check_sample_list
from fgat.exceptions import ContractError
from fgat.featio import FeatureSample, gen_synthetic


def dataset(num_classes=3, per_class=10, seed=0, sep=4.0):
    return gen_synthetic(num_classes, per_class, [(2, 4, 4)], sep, seed=seed)


def fast_params(**overrides):
    params = dict(
        heads=2, channels=4, k=3, pool="wmean", rehearsal_per_class=0,
        lwf_alpha=0.0, batch_size=8, epochs=30, lr=0.01, seed=1,
    )
    params.update(overrides)
    return params


def test_get_set_params_round_trip():
    clf = FgatClassifier(heads=3, channels=16, duplication=4)
    params = clf.get_params()
    assert params["heads"] == 3
    assert params["duplication"] == 4
    twin = FgatClassifier().set_params(**params)
    assert twin.get_params() == params


def test_clone_preserves_configuration():
    clf = FgatClassifier(**fast_params())
    twin = clone(clf)
    assert twin.get_params() == clf.get_params()


def test_unfitted_predict_raises():
    with pytest.raises(NotFittedError):
        FgatClassifier().predict(dataset())


def test_fit_learns_separable_clusters():
    samples = dataset()
    clf = FgatClassifier(**fast_params()).fit(samples)
    assert clf.score(samples) == 1.0
    assert list(clf.classes_) == [0, 1, 2]


def test_fit_is_deterministic():
    samples = dataset()
    a = FgatClassifier(**fast_params()).fit(samples)
    b = FgatClassifier(**fast_params()).fit(samples)
    np.testing.assert_array_equal(a.decision_function(samples), b.decision_function(samples))


def test_predict_proba_is_a_distribution():
    samples = dataset()
    clf = FgatClassifier(**fast_params()).fit(samples)
    proba = clf.predict_proba(samples[:5])
    assert proba.shape == (5, 3)
    assert (proba >= 0).all()
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)


def test_partial_fit_requires_classes_up_front():
    samples = dataset()
    with pytest.raises(ContractError, match="classes"):
        FgatClassifier(**fast_params()).partial_fit(samples)


def test_partial_fit_runs_task_sequence():
    samples = dataset(num_classes=4, per_class=8)
    task1 = [s for s in samples if s.label < 2]
    task2 = [s for s in samples if s.label >= 2]
    clf = FgatClassifier(**fast_params(epochs=15, rehearsal_per_class=3, duplication=3, lwf_alpha=1.0))
    clf.partial_fit(task1, classes=[0, 1, 2, 3])
    assert clf.task_count_ == 1
    first_acc = clf.score(task1)
    clf.partial_fit(task2)
    assert clf.task_count_ == 2
    assert len(clf.buffer_) == 2 * 3 * 2  # two tasks, two classes each, quota 3
    assert clf.score(task2) > 0.5
    assert first_acc == 1.0


def test_y_override_relabels_samples():
    samples = dataset(num_classes=2, per_class=6)
    flipped = 1 - np.array([s.label for s in samples])
    relabelled, labels = check_sample_list(samples, flipped)
    assert [s.label for s in relabelled] == list(flipped)
    np.testing.assert_array_equal(labels, flipped)


def test_check_sample_list_rejects_bad_input():
    with pytest.raises(ContractError):
        check_sample_list([])
    with pytest.raises(ContractError):
        check_sample_list([1, 2, 3])
    mixed = [
        FeatureSample(scales=[np.zeros((1, 2, 2))], label=0),
        FeatureSample(scales=[np.zeros((2, 2, 2))], label=1),
    ]
    with pytest.raises(ContractError, match="dims"):
        check_sample_list(mixed)


def test_decision_function_shape():
    samples = dataset()
    clf = FgatClassifier(**fast_params()).fit(samples)
    logits = clf.decision_function(samples[:4])
    assert logits.shape == (4, 3)
