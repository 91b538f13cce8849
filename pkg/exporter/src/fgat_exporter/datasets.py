"""Dataset loading and per-dataset preprocessing policies."""

from __future__ import annotations

from dataclasses import dataclass

from torch.utils.data import Dataset
from torchvision import datasets as tvd
from torchvision import transforms

from fgat_exporter.backbone import IMAGENET_MEAN, IMAGENET_STD

__all__ = ["DATASET_IDS", "DatasetSpec", "load_dataset", "task_split"]

DATASET_IDS = ("svhn", "cifar10", "cifar100", "mini-imagenet", "image-folder")


@dataclass
class DatasetSpec:
    data: Dataset
    num_classes: int
    tasks: int


def _to_backbone_input(resize_policy: str) -> transforms.Compose:
    steps = []
    if resize_policy == "direct":
        steps.append(transforms.Resize((224, 224)))
    elif resize_policy == "fidelity-84":
        # keep the intended level of detail: shrink first, then upscale
        steps.append(transforms.Resize((84, 84)))
        steps.append(transforms.Resize((224, 224)))
    else:
        raise ValueError(f"unknown resize policy {resize_policy!r}")
    steps.append(transforms.ToTensor())
    steps.append(transforms.Normalize(IMAGENET_MEAN, IMAGENET_STD))
    return transforms.Compose(steps)


def load_dataset(dataset: str, split: str, root: str, tasks: int | None = None) -> DatasetSpec:
    """Instantiate a dataset with its benchmark task count and resize policy.

    SVHN and the CIFARs are upscaled straight to 224; the 84x84 policy
    applies to mini-imagenet style folders. ``image-folder`` expects one
    subdirectory per class under ``root/<split>``.
    """
    if split not in ("train", "test"):
        raise ValueError(f"split must be train or test, got {split!r}")
    train = split == "train"
    if dataset == "svhn":
        data = tvd.SVHN(root, split="train" if train else "test",
                        transform=_to_backbone_input("direct"))
        return DatasetSpec(data, num_classes=10, tasks=tasks or 5)
    if dataset == "cifar10":
        data = tvd.CIFAR10(root, train=train, transform=_to_backbone_input("direct"))
        return DatasetSpec(data, num_classes=10, tasks=tasks or 5)
    if dataset == "cifar100":
        data = tvd.CIFAR100(root, train=train, transform=_to_backbone_input("direct"))
        return DatasetSpec(data, num_classes=100, tasks=tasks or 20)
    if dataset == "mini-imagenet":
        data = tvd.ImageFolder(f"{root}/{split}", transform=_to_backbone_input("fidelity-84"))
        return DatasetSpec(data, num_classes=len(data.classes), tasks=tasks or 20)
    if dataset == "image-folder":
        data = tvd.ImageFolder(f"{root}/{split}", transform=_to_backbone_input("direct"))
        num_classes = len(data.classes)
        if tasks is None:
            tasks = 5 if num_classes <= 10 else 20
        return DatasetSpec(data, num_classes=num_classes, tasks=tasks)
    raise ValueError(f"unknown dataset {dataset!r}, expected one of {DATASET_IDS}")


def task_split(num_classes: int, tasks: int) -> list[list[int]]:
    if num_classes % tasks != 0:
        raise ValueError(f"{num_classes} classes do not split into {tasks} equal tasks")
    per = num_classes // tasks
    return [list(range(t * per, (t + 1) * per)) for t in range(tasks)]
