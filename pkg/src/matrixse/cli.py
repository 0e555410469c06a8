"""Command-line entry point: ``matrixse {train,eval,bench,gen,ablate}``.

Settings resolve as flags > ``--config`` file > defaults. The effective
configuration is echoed to ``<out>/config.txt``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Sequence

from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, TrainConfig, read_config_file
from .harness import NumericFailure, benchmark_speed, evaluate, format_table, loglog_slope, train
from .tasks import TASKS, SudokuFormatError, make_instance, sudoku_synthesize, write_instances

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# flag -> TrainConfig field
_TRAIN_FLAGS = {
    "task": ("--task", str),
    "m": ("--maps", int),
    "B": ("--blocks", int),
    "flatten_kind": ("--flatten", str),
    "min_train_size": ("--min-size", int),
    "max_train_size": ("--max-size", int),
    "eval_sizes": ("--eval-sizes", str),
    "steps": ("--steps", int),
    "batch_size": ("--batch-size", int),
    "learning_rate": ("--lr", float),
    "seed": ("--seed", int),
    "recurrent_steps": ("--recurrent-steps", int),
    "eval_recurrent_steps": ("--eval-recurrent-steps", int),
    "eval_instances": ("--eval-instances", int),
    "eval_seed": ("--eval-seed", int),
    "log_every": ("--log-every", int),
    "checkpoint_every": ("--checkpoint-every", int),
    "patience": ("--patience", int),
    "data_path": ("--data", str),
    "augment": ("--augment", str),
    "workers": ("--workers", int),
}


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", default=None, help="output directory")
    for key, (flag, kind) in _TRAIN_FLAGS.items():
        p.add_argument(flag, dest=key, type=kind, default=None, help=f"config key '{key}'")


def _resolve(args: argparse.Namespace) -> TrainConfig:
    items = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key in _TRAIN_FLAGS:
        value = getattr(args, key, None)
        if value is not None:
            items[key] = str(value)
    return TrainConfig.from_items(items)


def _parse_sizes(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad size list {text!r}") from None


def _out_dir(args, default: str) -> str:
    out = args.out or default
    os.makedirs(out, exist_ok=True)
    return out


def _train_and_report(config: TrainConfig, out: str) -> list[dict]:
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.txt"), "w") as fh:
        fh.write(config.dumps())
    result = train(config, out_dir=out)
    rows = evaluate(result.checkpoint, config.task, config.eval_sizes, config.eval_instances,
                    config.eval_seed, config.eval_recurrent_steps, data_path=config.data_path)
    table = format_table(config.task, rows, train_size=max(config.train_sizes))
    with open(os.path.join(out, "accuracy.md"), "w") as fh:
        fh.write(table)
    print(table)
    return rows


def cmd_train(args) -> int:
    config = _resolve(args)
    _train_and_report(config, _out_dir(args, os.path.join("runs", config.task)))
    return EXIT_OK


def cmd_ablate(args) -> int:
    base = _resolve(args)
    out = _out_dir(args, os.path.join("runs", f"{base.task}-ablation"))
    results = {}
    for kind in ("zorder", "raster"):
        config = TrainConfig.from_items({"flatten_kind": kind}, base=base)
        results[kind] = _train_and_report(config, os.path.join(out, kind))
    lines = ["| flatten | " + " | ".join(f"{r['size']}x{r['size']}" for r in results["zorder"]) + " |",
             "|---|" + "---|" * len(results["zorder"])]
    for kind, rows in results.items():
        lines.append(f"| {kind} | " + " | ".join(f"{r['per_element_acc']:.3f}" for r in rows) + " |")
    table = "\n".join(lines) + "\n"
    with open(os.path.join(out, "ablation.md"), "w") as fh:
        fh.write(table)
    print(table)
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    config = ckpt.config
    sizes = _parse_sizes(args.sizes) if args.sizes else list(config.eval_sizes)
    rows = evaluate(ckpt, config.task, sizes, args.instances or config.eval_instances,
                    config.eval_seed if args.seed is None else args.seed,
                    args.recurrent_steps or config.eval_recurrent_steps, data_path=args.data or config.data_path)
    table = format_table(config.task, rows, train_size=max(config.train_sizes))
    if args.out:
        out = _out_dir(args, args.out)
        with open(os.path.join(out, "accuracy.md"), "w") as fh:
            fh.write(table)
    print(table)
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _resolve(args)
    sizes = _parse_sizes(args.sizes)
    rows = benchmark_speed(config, sizes, steps=args.bench_steps, warmup=args.warmup)
    lines = ["| size | inference ms | train ms |", "|---|---|---|"]
    lines += [f"| {r['size']}x{r['size']} | {r['inference_ms']:.2f} | {r['train_ms']:.2f} |" for r in rows]
    if len(rows) > 1:
        slope = loglog_slope([r["size"] for r in rows], [r["train_ms"] for r in rows])
        lines.append(f"\nlog-log slope of train time vs n: {slope:.3f}")
    table = "\n".join(lines) + "\n"
    if args.out:
        out = _out_dir(args, args.out)
        with open(os.path.join(out, "config.txt"), "w") as fh:
            fh.write(config.dumps())
        with open(os.path.join(out, "bench.md"), "w") as fh:
            fh.write(table)
        with open(os.path.join(out, "bench.jsonl"), "w") as fh:
            fh.writelines(json.dumps(r) + "\n" for r in rows)
    print(table)
    return EXIT_OK


def cmd_gen(args) -> int:
    out = sys.stdout if args.output in (None, "-") else open(args.output, "w")
    try:
        if args.task == "sudoku":
            out.writelines(line + "\n" for line in sudoku_synthesize(args.count, args.seed))
        else:
            write_instances((make_instance(args.task, args.size, args.seed + i) for i in range(args.count)), out)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="matrixse", description="Matrix Shuffle-Exchange experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="curriculum training + accuracy table")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="Z-order vs raster flatten, otherwise identical runs")
    _add_train_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("eval", help="per-size accuracy of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sizes")
    p.add_argument("--instances", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--recurrent-steps", type=int)
    p.add_argument("--data")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="ms per single-instance step")
    _add_train_flags(p)
    p.add_argument("--sizes", required=True)
    p.add_argument("--bench-steps", type=int, default=300)
    p.add_argument("--warmup", type=int, default=10)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", help="write task instances (or Sudoku CSV lines)")
    p.add_argument("--task", required=True, choices=sorted(TASKS))
    p.add_argument("--size", type=int, default=8)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_gen)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, SudokuFormatError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())
