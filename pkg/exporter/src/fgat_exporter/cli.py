"""Command-line exporter: images -> multi-scale feature containers."""

from __future__ import annotations

import argparse
import sys

from fgat_exporter.datasets import DATASET_IDS
from fgat_exporter.export import ExportJob, export


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fgat-export", description=__doc__)
    parser.add_argument("command", choices=["export"])
    parser.add_argument("--dataset", required=True, choices=DATASET_IDS)
    parser.add_argument("--split", required=True, choices=["train", "test"])
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--root", default="data", help="dataset root directory")
    parser.add_argument("--backbone", default="resnet18")
    parser.add_argument(
        "--no-pretrained", action="store_true",
        help="randomly initialised backbone (deterministic in --seed)",
    )
    parser.add_argument("--tasks", type=int, default=None, help="override the task count")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--limit", type=int, default=None, help="export at most N images")
    parser.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    job = ExportJob(
        dataset=args.dataset,
        split=args.split,
        out=args.out,
        root=args.root,
        backbone=args.backbone,
        pretrained=not args.no_pretrained,
        tasks=args.tasks,
        batch_size=args.batch_size,
        limit=args.limit,
        seed=args.seed,
    )
    try:
        path = export(job)
    except (ValueError, RuntimeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
