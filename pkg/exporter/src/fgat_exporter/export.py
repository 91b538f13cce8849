"""Run the frozen backbone over a dataset and write FMAP + manifest."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader, Subset

from fgat.featio import FeatureSample, TaskManifest, write_fmap

from fgat_exporter.backbone import FeatureBackbone
from fgat_exporter.datasets import load_dataset, task_split

__all__ = ["ExportJob", "export"]

EXPECTED_SCALES = ((256, 14, 14), (512, 7, 7))


@dataclass
class ExportJob:
    dataset: str
    split: str
    out: str
    root: str = "data"
    backbone: str = "resnet18"
    pretrained: bool = True
    tasks: int | None = None
    batch_size: int = 32
    limit: int | None = None  # cap on exported images, dataset order preserved
    seed: int = 0


def export(job: ExportJob) -> Path:
    """Write ``<out>/<split>.fmap`` plus ``<out>/manifest.json``.

    One record per source image, labels preserved, deterministic given the
    dataset and backbone (inference mode, no augmentation). Aborts if the
    backbone's activation shapes deviate from the declared scale dims.
    """
    spec = load_dataset(job.dataset, job.split, job.root, job.tasks)
    data = spec.data
    if job.limit is not None:
        data = Subset(data, range(min(job.limit, len(data))))
    net = FeatureBackbone(job.backbone, pretrained=job.pretrained, seed=job.seed)
    loader = DataLoader(data, batch_size=job.batch_size, shuffle=False, num_workers=0)

    samples: list[FeatureSample] = []
    with torch.no_grad():
        for images, labels in loader:
            penultimate, final = net(images)
            for scale, expected in zip((penultimate, final), EXPECTED_SCALES):
                got = tuple(scale.shape[1:])
                if got != expected:
                    raise RuntimeError(
                        f"backbone produced scale {got}, expected {expected}; "
                        f"check the input resize policy"
                    )
            coarse = penultimate.numpy().astype(np.float32)
            fine = final.numpy().astype(np.float32)
            for i, label in enumerate(labels.tolist()):
                samples.append(FeatureSample(scales=[coarse[i], fine[i]], label=int(label)))

    out = Path(job.out)
    out.mkdir(parents=True, exist_ok=True)
    fmap_path = out / f"{job.split}.fmap"
    write_fmap(samples, fmap_path, dims=list(EXPECTED_SCALES) if not samples else None)
    TaskManifest(
        dataset=job.dataset,
        tasks=task_split(spec.num_classes, spec.tasks),
        train_fmap="train.fmap",
        test_fmap="test.fmap",
    ).save(out / "manifest.json")
    return fmap_path
