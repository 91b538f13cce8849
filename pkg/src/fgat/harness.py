"""Online class-incremental training loop.

Each task is seen once. Stored rehearsal samples are duplicated ``d``
times into the current task's training multiset (the stored buffer never
grows with ``d``), and from the second task onward the previous task's
frozen model provides tempered soft targets for a distillation term.
"""

from __future__ import annotations

import json
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from fgat.diffcore import (
    Adam,
    Tensor,
    add,
    backward,
    log_softmax,
    mul,
    reshape,
    softmax,
    tmean,
    tsum,
)
from fgat.exceptions import ContractError, ShapeError
from fgat.featio import FeatureSample
from fgat.graphbuild import FeatureGraph, build_graph, build_graphs
from fgat.model import ModelState, forward

__all__ = [
    "TrainPlan",
    "RehearsalBuffer",
    "BatchRecord",
    "build_task_train_set",
    "ce_loss",
    "lwf_loss",
    "train_task",
    "update_buffer",
    "GraphCache",
]


@dataclass
class TrainPlan:
    """Hyper-parameters of one continual-learning run."""

    duplication: int = 1
    lwf_alpha: float = 1.0
    lwf_temperature: float = 2.0
    lr: float = 0.001
    batch_size: int = 32
    epochs_per_task: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.duplication < 1:
            raise ContractError(f"duplication must be >= 1, got {self.duplication}")
        if self.lwf_alpha < 0:
            raise ContractError(f"lwf_alpha must be >= 0, got {self.lwf_alpha}")
        if self.lwf_temperature <= 0:
            raise ContractError(f"lwf_temperature must be > 0, got {self.lwf_temperature}")
        if self.batch_size < 1 or self.epochs_per_task < 1:
            raise ContractError("batch_size and epochs_per_task must be positive")


@dataclass
class RehearsalBuffer:
    """Bounded per-class store of past-task samples."""

    samples_per_class: int
    entries: list[tuple[FeatureSample, int]] = field(default_factory=list)

    def __post_init__(self):
        if self.samples_per_class < 0:
            raise ContractError("samples_per_class must be >= 0")

    def __len__(self) -> int:
        return len(self.entries)

    def samples(self) -> list[FeatureSample]:
        return [s for s, _ in self.entries]

    def class_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for s, _ in self.entries:
            counts[s.label] = counts.get(s.label, 0) + 1
        return counts


@dataclass
class BatchRecord:
    """One JSON-lines event emitted per gradient step."""

    task: int
    batch: int
    l_ce: float
    l_dl: float
    loss: float

    def to_json(self) -> str:
        return json.dumps(
            {"task": self.task, "batch": self.batch, "l_ce": self.l_ce, "l_dl": self.l_dl, "loss": self.loss}
        )


class GraphCache:
    """Sample-identity keyed graph store; construction is pure, so graphs
    for repeated (duplicated) samples are built once. ``max_items`` bounds
    memory on large datasets via least-recently-used eviction."""

    def __init__(self, k: int, normalize_coords: bool = False, max_items: int | None = None):
        self.k = k
        self.normalize_coords = normalize_coords
        self.max_items = max_items
        self._graphs: "OrderedDict[int, tuple[FeatureSample, FeatureGraph]]" = OrderedDict()

    def get(self, sample: FeatureSample) -> FeatureGraph:
        key = id(sample)
        hit = self._graphs.get(key)
        if hit is not None:
            self._graphs.move_to_end(key)
            return hit[1]
        graph = build_graph(sample, self.k, self.normalize_coords)
        # the sample is pinned alongside its graph so the id key stays valid
        self._graphs[key] = (sample, graph)
        if self.max_items is not None and len(self._graphs) > self.max_items:
            self._graphs.popitem(last=False)
        return graph

    def get_many(self, samples: list[FeatureSample]) -> list[FeatureGraph]:
        return [self.get(s) for s in samples]

    def prewarm(self, samples: list[FeatureSample], threads: int | None = None) -> None:
        """Bulk-build graphs (honours the FGAT_THREADS worker cap)."""
        fresh = [s for s in samples if id(s) not in self._graphs]
        for s, g in zip(fresh, build_graphs(fresh, self.k, self.normalize_coords, threads)):
            self._graphs[id(s)] = (s, g)
        if self.max_items is not None:
            while len(self._graphs) > self.max_items:
                self._graphs.popitem(last=False)


def build_task_train_set(
    current: list[FeatureSample],
    buffer: RehearsalBuffer,
    duplication: int,
    rng: np.random.Generator,
) -> list[FeatureSample]:
    """Current samples plus each buffer entry repeated ``duplication`` times,
    in seeded uniform shuffle order."""
    if duplication < 1:
        raise ContractError(f"duplication must be >= 1, got {duplication}")
    combined = list(current)
    for entry, _ in buffer.entries:
        combined.extend([entry] * duplication)
    order = rng.permutation(len(combined))
    return [combined[i] for i in order]


def ce_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of softmax(logits) against integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"ce_loss: logits {logits.shape} vs labels {labels.shape}")
    num_classes = logits.shape[1]
    if labels.min() < 0 or labels.max() >= num_classes:
        bad = labels[(labels < 0) | (labels >= num_classes)][0]
        raise ContractError(f"ce_loss: label {bad} outside [0, {num_classes})")
    onehot = np.zeros(logits.shape)
    onehot[np.arange(labels.shape[0]), labels] = 1.0
    picked = tsum(mul(log_softmax(logits, axis=1), Tensor(onehot)), axis=1)
    return -tmean(picked)


def lwf_loss(logits_new: Tensor, logits_old: Tensor, temperature: float) -> Tensor:
    """Mean KL from the frozen model's tempered softmax to the current one."""
    if temperature <= 0:
        raise ContractError(f"lwf_loss: temperature must be > 0, got {temperature}")
    if logits_new.shape != logits_old.shape:
        raise ShapeError(f"lwf_loss: shapes {logits_new.shape} vs {logits_old.shape}")
    p_old = softmax(logits_old * (1.0 / temperature), axis=1)
    log_p_old = log_softmax(logits_old * (1.0 / temperature), axis=1)
    log_p_new = log_softmax(logits_new * (1.0 / temperature), axis=1)
    per_sample = tsum(mul(p_old, log_p_old - log_p_new), axis=1)
    return tmean(per_sample)


def _batches(items: list, batch_size: int):
    for start in range(0, len(items), batch_size):
        yield items[start : start + batch_size]


def train_task(
    state: ModelState,
    optimizer: Adam,
    task_samples: list[FeatureSample],
    task_id: int,
    plan: TrainPlan,
    buffer: RehearsalBuffer,
    prev_snapshot: ModelState | None,
    cache: GraphCache,
    rng: np.random.Generator | None = None,
) -> list[BatchRecord]:
    """One online pass over the duplicated task multiset.

    The distillation term requires the previous task's frozen model and is
    therefore absent on the first task; with ``lwf_alpha == 0`` the
    distillation forward is skipped entirely, so such a run is bit-identical
    to a plain cross-entropy run.
    """
    if task_id < 1:
        raise ContractError(f"train_task: task ids are 1-based, got {task_id}")
    if (prev_snapshot is None) != (task_id == 1):
        raise ContractError("train_task: a previous-task snapshot must be given iff task_id > 1")
    if rng is None:
        rng = np.random.default_rng(plan.seed)

    distill = prev_snapshot is not None and plan.lwf_alpha > 0.0
    records: list[BatchRecord] = []
    batch_index = 0
    for _ in range(plan.epochs_per_task):
        train_set = build_task_train_set(task_samples, buffer, plan.duplication, rng)
        for batch in _batches(train_set, plan.batch_size):
            graphs = cache.get_many(batch)
            labels = np.array([s.label for s in batch], dtype=np.int64)
            logits = _as_matrix(forward(graphs, state))
            loss_ce = ce_loss(logits, labels)
            if distill:
                old_logits = _as_matrix(forward(graphs, prev_snapshot))
                loss_dl = lwf_loss(logits, old_logits, plan.lwf_temperature)
                loss = add(loss_ce, loss_dl * plan.lwf_alpha)
                l_dl = loss_dl.item()
            else:
                loss = loss_ce
                l_dl = 0.0
            backward(loss)
            optimizer.step()
            records.append(
                BatchRecord(
                    task=task_id,
                    batch=batch_index,
                    l_ce=loss_ce.item(),
                    l_dl=l_dl,
                    loss=loss.item(),
                )
            )
            batch_index += 1
    return records


def _as_matrix(logits: Tensor) -> Tensor:
    if logits.data.ndim == 1:
        return reshape(logits, (1, logits.shape[0]))
    return logits


def update_buffer(
    buffer: RehearsalBuffer,
    task_samples: list[FeatureSample],
    task_id: int,
    seed: int | np.random.Generator,
) -> RehearsalBuffer:
    """Store a seeded uniform subset of each finished class, up to quota."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    by_class: dict[int, list[FeatureSample]] = {}
    for s in task_samples:
        by_class.setdefault(s.label, []).append(s)
    for label in sorted(by_class):
        pool = by_class[label]
        quota = buffer.samples_per_class
        if len(pool) < quota:
            warnings.warn(
                f"class {label}: only {len(pool)} samples for a quota of {quota}; storing all",
                stacklevel=2,
            )
            chosen = list(pool)
        else:
            idx = rng.choice(len(pool), size=quota, replace=False)
            chosen = [pool[i] for i in sorted(idx)]
        buffer.entries.extend((s, task_id) for s in chosen)
    return buffer
