"""End-to-end continual-learning runs driven by a config and a manifest."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from fgat.diffcore import Adam
from fgat.exceptions import ContractError
from fgat.featio import FeatureSample, TaskManifest, read_fmap
from fgat.harness import BatchRecord, GraphCache, RehearsalBuffer, TrainPlan, train_task, update_buffer
from fgat.metrics import AccuracyMatrix, evaluate_task
from fgat.model import ModelConfig, ModelState, init_model, snapshot

__all__ = ["ExperimentConfig", "RunResult", "run_sequence", "model_config_for"]


@dataclass
class ExperimentConfig:
    """Everything one run needs; serialisable to/from a flat JSON object."""

    manifest: str
    heads: int = 4
    channels: int = 128
    k: int = 8
    pool: str = "wmean"
    tessellated: bool = False
    duplication: int = 1
    rehearsal_per_class: int = 5
    lwf_alpha: float = 1.0
    lwf_temperature: float = 2.0
    lr: float = 0.001
    batch_size: int = 32
    epochs_per_task: int = 1
    seeds: list[int] = field(default_factory=lambda: [0])
    out: str = "results"
    normalize_coords: bool = False
    separate_value_weights: bool = False

    def __post_init__(self):
        if not self.seeds:
            raise ContractError("seed list must be non-empty")
        if self.heads < 1 or self.channels < 1 or self.k < 1:
            raise ContractError("heads, channels and k must be positive")
        if self.rehearsal_per_class < 0:
            raise ContractError("rehearsal_per_class must be >= 0")
        # duplication/alpha/temperature ranges are enforced by TrainPlan
        TrainPlan(
            duplication=self.duplication,
            lwf_alpha=self.lwf_alpha,
            lwf_temperature=self.lwf_temperature,
            lr=self.lr,
            batch_size=self.batch_size,
            epochs_per_task=self.epochs_per_task,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        if "manifest" not in raw:
            raise ContractError("config must name a manifest")
        return cls(**raw)


@dataclass
class RunResult:
    seed: int
    matrix: AccuracyMatrix
    records: list[BatchRecord]
    state: ModelState


def model_config_for(
    config: ExperimentConfig, sample: FeatureSample, num_classes: int
) -> ModelConfig:
    """Derive the architecture from the data dims and the experiment config."""
    in_dim = sum(s.shape[0] for s in sample.scales) + 2
    grid = tuple(sample.scales[0].shape[1:])
    return ModelConfig(
        in_dim=in_dim,
        num_classes=num_classes,
        grid=grid,
        heads=config.heads,
        channels=config.channels,
        pool=config.pool,
        tessellated=config.tessellated,
        leaky_slope=0.2,
        separate_value_weights=config.separate_value_weights,
        k=config.k,
        normalize_coords=config.normalize_coords,
    )


def _split_by_task(
    samples: list[FeatureSample], manifest: TaskManifest, kind: str
) -> list[list[FeatureSample]]:
    covered = manifest.all_classes()
    labels = {s.label for s in samples}
    stray = labels - covered
    if stray:
        raise ContractError(f"{kind} samples contain classes {sorted(stray)} missing from the manifest")
    per_task = []
    for task in manifest.tasks:
        members = set(task)
        per_task.append([s for s in samples if s.label in members])
    return per_task


def run_sequence(
    config: ExperimentConfig,
    seed: int,
    manifest: TaskManifest,
    train_samples: list[FeatureSample],
    test_samples: list[FeatureSample],
) -> RunResult:
    """Train sequentially over the manifest's tasks, evaluating all seen
    tasks after each one. Deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    train_by_task = _split_by_task(train_samples, manifest, "train")
    test_by_task = _split_by_task(test_samples, manifest, "test")
    for i, chunk in enumerate(test_by_task):
        if not chunk:
            raise ContractError(f"task {i + 1} has an empty test set")

    num_classes = max(manifest.all_classes()) + 1
    model_cfg = model_config_for(config, train_samples[0], num_classes)
    state = init_model(model_cfg, rng)
    optimizer = Adam(state.parameters(), lr=config.lr)
    plan = TrainPlan(
        duplication=config.duplication,
        lwf_alpha=config.lwf_alpha,
        lwf_temperature=config.lwf_temperature,
        lr=config.lr,
        batch_size=config.batch_size,
        epochs_per_task=config.epochs_per_task,
        seed=seed,
    )
    buffer = RehearsalBuffer(samples_per_class=config.rehearsal_per_class)
    cache = GraphCache(config.k, config.normalize_coords)

    matrix = AccuracyMatrix()
    records: list[BatchRecord] = []
    prev: ModelState | None = None
    for task_id, task_train in enumerate(train_by_task, start=1):
        records.extend(
            train_task(state, optimizer, task_train, task_id, plan, buffer, prev, cache, rng)
        )
        prev = snapshot(state)
        if buffer.samples_per_class > 0:
            update_buffer(buffer, task_train, task_id, rng)
        matrix.add_row(
            [evaluate_task(state, test_by_task[j], cache) for j in range(task_id)]
        )
    return RunResult(seed=seed, matrix=matrix, records=records, state=state)


def load_manifest_data(
    manifest_path,
) -> tuple[TaskManifest, list[FeatureSample], list[FeatureSample]]:
    """Load manifest plus its train/test containers, relative to its directory."""
    manifest_path = Path(manifest_path)
    manifest = TaskManifest.load(manifest_path)
    base = manifest_path.parent

    def resolve(p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else base / candidate

    train_path = resolve(manifest.train_fmap)
    test_path = resolve(manifest.test_fmap)
    for p in (train_path, test_path):
        if not p.exists():
            raise FileNotFoundError(f"feature container not found: {p}")
    return manifest, read_fmap(train_path), read_fmap(test_path)
