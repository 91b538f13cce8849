"""Scikit-learn style classifier facade over the continual-learning core.

``fit`` trains jointly on everything it is given; each ``partial_fit``
call is one online task and wires in the rehearsal buffer, duplication and
distillation exactly as the functional harness does. Inputs are lists of
``FeatureSample``; labels default to the ones carried by the samples.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from fgat.diffcore import Adam, no_grad
from fgat.exceptions import ContractError
from fgat.featio import FeatureSample
from fgat.harness import GraphCache, RehearsalBuffer, TrainPlan, train_task, update_buffer
from fgat.model import ModelConfig, forward, init_model, snapshot

__all__ = ["FgatClassifier", "check_sample_list"]


def check_sample_list(X, y=None) -> tuple[list[FeatureSample], np.ndarray]:
    """Validate a FeatureSample list and resolve labels.

    Returns samples with labels overridden by ``y`` when given. All samples
    must share dims (the dataset invariant the file format also enforces).
    """
    if not isinstance(X, (list, tuple)) or not X:
        raise ContractError("X must be a non-empty list of FeatureSample")
    for i, s in enumerate(X):
        if not isinstance(s, FeatureSample):
            raise ContractError(f"X[{i}] is not a FeatureSample")
    dims = X[0].dims
    for i, s in enumerate(X):
        if s.dims != dims:
            raise ContractError(f"X[{i}] dims {s.dims} differ from X[0] dims {dims}")
    if y is None:
        labels = np.array([s.label for s in X], dtype=np.int64)
        return list(X), labels
    labels = np.asarray(y, dtype=np.int64)
    if labels.shape != (len(X),):
        raise ContractError(f"y has shape {labels.shape}, expected ({len(X)},)")
    if (labels < 0).any():
        raise ContractError("labels must be non-negative")
    relabelled = [
        s if s.label == lbl else FeatureSample(scales=[sc.copy() for sc in s.scales], label=int(lbl))
        for s, lbl in zip(X, labels)
    ]
    return relabelled, labels


class FgatClassifier(BaseEstimator, ClassifierMixin):
    """Feature-graph attention classifier with online task updates.

    Parameters mirror the experiment config: attention heads and channel
    width, spatial k, pooling mode, rehearsal quota, duplication level and
    distillation strength. ``partial_fit`` treats each call as the next
    task in the sequence.
    """

    def __init__(
        self,
        heads: int = 4,
        channels: int = 128,
        k: int = 8,
        pool: str = "wmean",
        tessellated: bool = False,
        duplication: int = 1,
        rehearsal_per_class: int = 5,
        lwf_alpha: float = 1.0,
        lwf_temperature: float = 2.0,
        lr: float = 0.001,
        batch_size: int = 32,
        epochs: int = 1,
        normalize_coords: bool = False,
        seed: int = 0,
    ):
        self.heads = heads
        self.channels = channels
        self.k = k
        self.pool = pool
        self.tessellated = tessellated
        self.duplication = duplication
        self.rehearsal_per_class = rehearsal_per_class
        self.lwf_alpha = lwf_alpha
        self.lwf_temperature = lwf_temperature
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.normalize_coords = normalize_coords
        self.seed = seed

    # internal -------------------------------------------------------------

    def _plan(self) -> TrainPlan:
        return TrainPlan(
            duplication=self.duplication,
            lwf_alpha=self.lwf_alpha,
            lwf_temperature=self.lwf_temperature,
            lr=self.lr,
            batch_size=self.batch_size,
            epochs_per_task=self.epochs,
            seed=self.seed,
        )

    def _init_state(self, sample: FeatureSample, num_classes: int) -> None:
        in_dim = sum(s.shape[0] for s in sample.scales) + 2
        grid = tuple(sample.scales[0].shape[1:])
        config = ModelConfig(
            in_dim=in_dim,
            num_classes=num_classes,
            grid=grid,
            heads=self.heads,
            channels=self.channels,
            pool=self.pool,
            tessellated=self.tessellated,
            k=self.k,
            normalize_coords=self.normalize_coords,
        )
        self._rng = np.random.default_rng(self.seed)
        self.state_ = init_model(config, self._rng)
        self.optimizer_ = Adam(self.state_.parameters(), lr=self.lr)
        self.buffer_ = RehearsalBuffer(samples_per_class=self.rehearsal_per_class)
        self.cache_ = GraphCache(self.k, self.normalize_coords)
        self.snapshot_ = None
        self.task_count_ = 0
        self.classes_ = np.arange(num_classes)

    def _check_fitted(self) -> None:
        if not hasattr(self, "state_"):
            raise NotFittedError("this FgatClassifier instance is not fitted yet")

    # sklearn surface --------------------------------------------------------

    def fit(self, X, y=None):
        """Single joint training pass over all provided samples."""
        samples, labels = check_sample_list(X, y)
        self._init_state(samples[0], int(labels.max()) + 1)
        self.task_count_ = 1
        train_task(
            self.state_,
            self.optimizer_,
            samples,
            1,
            self._plan(),
            self.buffer_,
            None,
            self.cache_,
            self._rng,
        )
        self.snapshot_ = snapshot(self.state_)
        if self.rehearsal_per_class > 0:
            update_buffer(self.buffer_, samples, 1, self._rng)
        return self

    def partial_fit(self, X, y=None, classes=None):
        """Train on the next task. ``classes`` (all class ids that will ever
        appear) is required on the first call."""
        samples, labels = check_sample_list(X, y)
        if not hasattr(self, "state_"):
            if classes is None:
                raise ContractError("partial_fit: classes is required on the first call")
            self._init_state(samples[0], int(np.max(classes)) + 1)
        self.task_count_ += 1
        task_id = self.task_count_
        train_task(
            self.state_,
            self.optimizer_,
            samples,
            task_id,
            self._plan(),
            self.buffer_,
            self.snapshot_,
            self.cache_,
            self._rng,
        )
        self.snapshot_ = snapshot(self.state_)
        if self.rehearsal_per_class > 0:
            update_buffer(self.buffer_, samples, task_id, self._rng)
        return self

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        samples, _ = check_sample_list(X)
        out = np.empty((len(samples), len(self.classes_)))
        with no_grad():
            for i, s in enumerate(samples):
                out[i] = forward(self.cache_.get(s), self.state_).data
        return out

    def predict_proba(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)

    def score(self, X, y=None) -> float:
        samples, labels = check_sample_list(X, y)
        return float(np.mean(self.predict(samples) == labels))
