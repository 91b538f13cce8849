"""Binary multi-scale feature container, task manifests, synthetic data.

On-disk layout of a ``.fmap`` file (all integers little-endian):

    bytes 0..3   magic "FGFM"
    u16          version (currently 1)
    u16          number of scales S
    u32          number of samples N
    S * (u32 C, u32 H, u32 W)
    N records: u32 label, then for each scale the (C, H, W) array as
               float32, channel-major row-major

Features are widened to float64 in memory; writing narrows back to
float32, so data that is float32-representable round-trips bit-exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fgat.exceptions import ContractError, FmapFormatError

__all__ = [
    "FeatureSample",
    "TaskManifest",
    "read_fmap",
    "write_fmap",
    "fmap_file_size",
    "gen_synthetic",
]

MAGIC = b"FGFM"
VERSION = 1

ScaleDims = tuple[int, int, int]


@dataclass
class FeatureSample:
    """Multi-scale feature maps plus a class label for one image.

    ``scales`` is ordered finest first; every coarser scale must divide the
    finest resolution so repetition upsampling is exact.
    """

    scales: list[np.ndarray]
    label: int

    def __post_init__(self):
        if not self.scales:
            raise ContractError("FeatureSample: need at least one scale")
        if self.label < 0:
            raise ContractError(f"FeatureSample: label must be non-negative, got {self.label}")
        self.scales = [np.asarray(s, dtype=np.float64) for s in self.scales]
        for i, s in enumerate(self.scales):
            if s.ndim != 3:
                raise ContractError(f"FeatureSample: scale {i} must be (C, H, W), got {s.shape}")
        _, h0, w0 = self.scales[0].shape
        prev_h, prev_w = h0, w0
        for i, s in enumerate(self.scales[1:], start=1):
            _, h, w = s.shape
            if h > prev_h or w > prev_w:
                raise ContractError(
                    f"FeatureSample: scale {i} ({h}x{w}) is finer than scale {i - 1}"
                )
            if h0 % h != 0 or w0 % w != 0:
                raise ContractError(
                    f"FeatureSample: scale {i} ({h}x{w}) does not divide finest ({h0}x{w0})"
                )
            prev_h, prev_w = h, w

    @property
    def dims(self) -> list[ScaleDims]:
        return [s.shape for s in self.scales]


@dataclass
class TaskManifest:
    """Ordered class-id splits plus the train/test container paths."""

    dataset: str
    tasks: list[list[int]]
    train_fmap: str
    test_fmap: str

    def __post_init__(self):
        seen: set[int] = set()
        for i, task in enumerate(self.tasks):
            overlap = seen.intersection(task)
            if overlap:
                raise ContractError(f"TaskManifest: classes {sorted(overlap)} repeat in task {i}")
            seen.update(task)

    def all_classes(self) -> set[int]:
        return {c for task in self.tasks for c in task}

    def save(self, path) -> None:
        payload = {
            "dataset": self.dataset,
            "tasks": self.tasks,
            "train_fmap": self.train_fmap,
            "test_fmap": self.test_fmap,
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "TaskManifest":
        raw = json.loads(Path(path).read_text())
        return cls(
            dataset=raw["dataset"],
            tasks=[[int(c) for c in task] for task in raw["tasks"]],
            train_fmap=raw["train_fmap"],
            test_fmap=raw["test_fmap"],
        )


def _check_homogeneous(samples: list[FeatureSample]) -> list[ScaleDims]:
    dims = samples[0].dims
    for i, s in enumerate(samples[1:], start=1):
        if s.dims != dims:
            raise ContractError(f"write_fmap: sample {i} dims {s.dims} != sample 0 dims {dims}")
    return dims


def fmap_file_size(dims: list[ScaleDims], num_samples: int) -> int:
    """Exact byte size of a container with the given per-sample dims."""
    header = 4 + 2 + 2 + 4 + 12 * len(dims)
    record = 4 + sum(4 * c * h * w for c, h, w in dims)
    return header + num_samples * record


def write_fmap(samples: list[FeatureSample], path, dims: list[ScaleDims] | None = None) -> None:
    """Write samples to ``path``; ``dims`` is required only for empty lists."""
    if samples:
        dims = _check_homogeneous(samples)
    elif dims is None:
        raise ContractError("write_fmap: empty sample list needs explicit dims")

    parts = [MAGIC, struct.pack("<HHI", VERSION, len(dims), len(samples))]
    for c, h, w in dims:
        parts.append(struct.pack("<III", c, h, w))
    for s in samples:
        parts.append(struct.pack("<I", s.label))
        for scale in s.scales:
            parts.append(np.ascontiguousarray(scale, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_fmap(path) -> list[FeatureSample]:
    """Parse a container, failing closed on any structural damage."""
    blob = Path(path).read_bytes()
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise FmapFormatError(f"{path}: bad magic at byte 0")
    if len(blob) < 12:
        raise FmapFormatError(f"{path}: truncated header at byte {len(blob)}")
    version, num_scales, num_samples = struct.unpack_from("<HHI", blob, 4)
    if version != VERSION:
        raise FmapFormatError(f"{path}: unsupported version {version} at byte 4")
    offset = 12
    dims: list[ScaleDims] = []
    for _ in range(num_scales):
        if offset + 12 > len(blob):
            raise FmapFormatError(f"{path}: truncated scale table at byte {offset}")
        dims.append(struct.unpack_from("<III", blob, offset))
        offset += 12

    samples: list[FeatureSample] = []
    for _ in range(num_samples):
        if offset + 4 > len(blob):
            raise FmapFormatError(f"{path}: truncated record at byte {offset}")
        (label,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        scales = []
        for c, h, w in dims:
            nbytes = 4 * c * h * w
            if offset + nbytes > len(blob):
                raise FmapFormatError(f"{path}: truncated scale data at byte {offset}")
            arr = np.frombuffer(blob, dtype="<f4", count=c * h * w, offset=offset)
            scales.append(arr.astype(np.float64).reshape(c, h, w))
            offset += nbytes
        samples.append(FeatureSample(scales=scales, label=int(label)))
    if offset != len(blob):
        raise FmapFormatError(f"{path}: {len(blob) - offset} trailing bytes at byte {offset}")
    return samples


def gen_synthetic(
    num_classes: int,
    samples_per_class: int,
    dims_per_scale: list[ScaleDims],
    cluster_separation: float,
    seed: int,
) -> list[FeatureSample]:
    """Gaussian clusters in feature space, one fixed random mean per class.

    Each sample is its class mean (scaled by ``cluster_separation``) plus
    unit Gaussian noise. Values are rounded to float32 precision so the
    generated data survives a container round trip bit-exactly.
    """
    if cluster_separation <= 0:
        raise ContractError("gen_synthetic: cluster_separation must be positive")
    if num_classes < 1 or samples_per_class < 1:
        raise ContractError("gen_synthetic: class and sample counts must be positive")
    rng = np.random.default_rng(seed)
    means = [
        [cluster_separation * rng.standard_normal(d) for d in dims_per_scale]
        for _ in range(num_classes)
    ]
    samples = []
    for label in range(num_classes):
        for _ in range(samples_per_class):
            scales = [
                (m + rng.standard_normal(m.shape)).astype(np.float32).astype(np.float64)
                for m in means[label]
            ]
            samples.append(FeatureSample(scales=scales, label=label))
    return samples
