"""Command-line entry point.

Subcommands: ``run`` (full multi-seed experiment from a JSON config),
``gradcheck`` (finite-difference release gate), ``gen-synth`` (synthetic
dataset + manifest) and ``eval`` (checkpoint accuracy on one container).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from fgat.exceptions import ContractError, FmapFormatError, ShapeError
from fgat.experiment import ExperimentConfig, load_manifest_data, run_sequence
from fgat.featio import TaskManifest, gen_synthetic, read_fmap, write_fmap
from fgat.gradcheck import run_all
from fgat.harness import GraphCache
from fgat.metrics import average_accuracy, average_forgetting, evaluate_task
from fgat.model import load_checkpoint, save_checkpoint

__all__ = ["main"]

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_BAD_INPUT = 2


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fgat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a multi-seed continual-learning experiment")
    run.add_argument("--config", required=True, help="JSON experiment config")
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--seed", type=int, nargs="+", help="seed list (overrides the config)")

    check = sub.add_parser("gradcheck", help="finite-difference check of all components")
    check.add_argument(
        "--self-test-fault",
        action="store_true",
        help="inject a wrong-sign gradient to prove the checker catches it",
    )

    synth = sub.add_parser("gen-synth", help="generate a synthetic dataset and manifest")
    synth.add_argument("--classes", type=int, required=True)
    synth.add_argument("--tasks", type=int, required=True)
    synth.add_argument("--per-class", type=int, required=True, help="training samples per class")
    synth.add_argument(
        "--test-per-class", type=int, default=None, help="test samples per class (default: per-class / 4)"
    )
    synth.add_argument(
        "--scales", required=True, help="per-scale dims as 'C,H,W;C,H,W;...', finest first"
    )
    synth.add_argument("--sep", type=float, required=True, help="cluster separation")
    synth.add_argument("--seed", type=int, required=True)
    synth.add_argument("--out", required=True, help="output directory")

    ev = sub.add_parser("eval", help="accuracy of a checkpoint on one container")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--fmap", required=True)
    return parser


def _write_run_outputs(out_dir: Path, config: ExperimentConfig, results) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    per_seed = []
    for res in results:
        acc = average_accuracy(res.matrix)
        fgt = average_forgetting(res.matrix) if res.matrix.num_tasks >= 2 else None
        seed_dir = out_dir / str(res.seed)
        seed_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "seed": res.seed,
            "matrix": res.matrix.rows,
            "average_accuracy": acc,
            "average_forgetting": fgt,
        }
        (seed_dir / "matrix.json").write_text(json.dumps(payload, indent=2) + "\n")
        with open(seed_dir / "events.jsonl", "w") as fh:
            for record in res.records:
                fh.write(record.to_json() + "\n")
        save_checkpoint(res.state, seed_dir / "model.ckpt")
        per_seed.append(payload)

    accs = [p["average_accuracy"] for p in per_seed]
    fgts = [p["average_forgetting"] for p in per_seed if p["average_forgetting"] is not None]

    def agg(values):
        if not values:
            return None
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        return {"mean": float(np.mean(values)), "std": std}

    results_payload = {
        "per_seed": per_seed,
        "aggregate": {"average_accuracy": agg(accs), "average_forgetting": agg(fgts)},
    }
    (out_dir / "results.json").write_text(json.dumps(results_payload, indent=2) + "\n")

    with open(out_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["seed", "average_accuracy", "average_forgetting", "std_accuracy", "std_forgetting"]
        )
        for p in per_seed:
            fgt = "" if p["average_forgetting"] is None else f"{p['average_forgetting']:.6f}"
            writer.writerow([p["seed"], f"{p['average_accuracy']:.6f}", fgt, "", ""])
        a, f = agg(accs), agg(fgts)
        writer.writerow(
            [
                "aggregate",
                f"{a['mean']:.6f}",
                "" if f is None else f"{f['mean']:.6f}",
                f"{a['std']:.6f}",
                "" if f is None else f"{f['std']:.6f}",
            ]
        )

    (out_dir / "config.echo.json").write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"
    )


def cmd_run(args) -> int:
    config_path = Path(args.config)
    if not config_path.exists():
        print(f"config not found: {config_path}", file=sys.stderr)
        return EXIT_BAD_INPUT
    config = ExperimentConfig.from_dict(json.loads(config_path.read_text()))
    if args.out is not None:
        config.out = args.out
    if args.seed is not None:
        config.seeds = list(args.seed)

    manifest_path = Path(config.manifest)
    if not manifest_path.is_absolute():
        manifest_path = config_path.parent / manifest_path
    if not manifest_path.exists():
        print(f"manifest not found: {manifest_path}", file=sys.stderr)
        return EXIT_BAD_INPUT
    try:
        manifest, train_samples, test_samples = load_manifest_data(manifest_path)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_BAD_INPUT

    results = [
        run_sequence(config, seed, manifest, train_samples, test_samples)
        for seed in config.seeds
    ]
    _write_run_outputs(Path(config.out), config, results)
    return EXIT_OK


def cmd_gradcheck(include_fault: bool = False) -> int:
    reports = run_all(include_fault=include_fault)
    worst_failure = None
    for report in reports:
        status = "ok" if report.passed else "FAIL"
        print(f"{report.name:28s} max_rel_err={report.max_rel_error:.3e}  {status}")
        if not report.passed and worst_failure is None:
            worst_failure = report.name
    if worst_failure is not None:
        print(f"gradient check failed: {worst_failure}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def _parse_scales(spec: str) -> list[tuple[int, int, int]]:
    dims = []
    for part in spec.split(";"):
        pieces = part.strip().split(",")
        if len(pieces) != 3:
            raise ContractError(f"bad scale spec {part!r}, expected C,H,W")
        dims.append(tuple(int(p) for p in pieces))
    return dims


def cmd_gen_synth(args) -> int:
    if args.classes % args.tasks != 0:
        print(
            f"{args.classes} classes cannot be split into {args.tasks} equal tasks",
            file=sys.stderr,
        )
        return EXIT_BAD_INPUT
    dims = _parse_scales(args.scales)
    test_per_class = args.test_per_class
    if test_per_class is None:
        test_per_class = max(1, args.per_class // 4)

    # one generator call so train and test share the per-class cluster means
    total = args.per_class + test_per_class
    samples = gen_synthetic(args.classes, total, dims, args.sep, args.seed)
    train, test = [], []
    for c in range(args.classes):
        block = samples[c * total : (c + 1) * total]
        train.extend(block[: args.per_class])
        test.extend(block[args.per_class :])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_fmap(train, out / "train.fmap")
    write_fmap(test, out / "test.fmap")
    per_task = args.classes // args.tasks
    manifest = TaskManifest(
        dataset=f"synthetic-{args.classes}c-{args.tasks}t-seed{args.seed}",
        tasks=[
            list(range(t * per_task, (t + 1) * per_task)) for t in range(args.tasks)
        ],
        train_fmap="train.fmap",
        test_fmap="test.fmap",
    )
    manifest.save(out / "manifest.json")
    print(f"wrote {len(train)} train / {len(test)} test samples to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt_path, fmap_path = Path(args.checkpoint), Path(args.fmap)
    for p in (ckpt_path, fmap_path):
        if not p.exists():
            print(f"file not found: {p}", file=sys.stderr)
            return EXIT_BAD_INPUT
    state = load_checkpoint(ckpt_path)
    samples = read_fmap(fmap_path)
    cache = GraphCache(state.config.k, state.config.normalize_coords)
    cache.prewarm(samples)
    accuracy = evaluate_task(state, samples, cache)
    print(json.dumps({"accuracy": accuracy, "num_samples": len(samples)}))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "gradcheck":
            return cmd_gradcheck(include_fault=args.self_test_fault)
        if args.command == "gen-synth":
            return cmd_gen_synth(args)
        if args.command == "eval":
            return cmd_eval(args)
    except (ContractError, ShapeError, FmapFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
