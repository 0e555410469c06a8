"""Curriculum training, size-stratified evaluation and speed benchmarking."""

from __future__ import annotations

import json
import logging
import math
import os
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence, TextIO

import numpy as np

from . import autodiff as ad
from .checkpoint import Checkpoint, save_checkpoint
from .config import TrainConfig
from .model import ModelParams, init_params, matrix_se_forward, recurrent_apply
from .optim import RAdamState, radam_step
from .tasks import TASKS, TaskInstance, make_instance, sudoku_augment, sudoku_load

logger = logging.getLogger(__name__)

# larger = more mass on the smallest size early in training
SCHEDULE_SHARPNESS = 3.0
LOSS_AVERAGE_WINDOW = 1000


class NumericFailure(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, last_checkpoint: str | None = None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


# ---------------------------------------------------------------------------
# batches


def size_distribution(n_sizes: int, progress: float) -> np.ndarray:
    """Sampling probabilities over size ranks (smallest first).

    Weight of rank ``r`` is ``exp(-SHARPNESS * max(0, r - progress * n_sizes))``;
    it starts concentrated on rank 0 and is uniform once
    ``progress >= (n_sizes - 1) / n_sizes``.
    """
    ranks = np.arange(n_sizes)
    w = np.exp(-SCHEDULE_SHARPNESS * np.maximum(0.0, ranks - progress * n_sizes))
    return w / w.sum()


def batch_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng([seed, step])


_sudoku_cache: dict[str, list[TaskInstance]] = {}


def _sudoku_pool(path: str) -> list[TaskInstance]:
    if path not in _sudoku_cache:
        if not path or not os.path.exists(path):
            raise FileNotFoundError(f"Sudoku dataset not found: {path!r}")
        _sudoku_cache[path] = sudoku_load(path)
    return _sudoku_cache[path]


def curriculum_sample(config: TrainConfig, step: int, rng: np.random.Generator | None = None) -> list[TaskInstance]:
    """One training batch; all sizes share the same parameters."""
    rng = rng if rng is not None else batch_rng(config.seed, step)
    if config.task == "sudoku":
        pool = _sudoku_pool(config.data_path)
        picks = rng.integers(len(pool), size=config.batch_size)
        seeds = rng.integers(2**31, size=config.batch_size)
        return [sudoku_augment(pool[i], int(s)) if config.augment else pool[i] for i, s in zip(picks, seeds)]
    sizes = config.train_sizes
    progress = step / config.steps if config.steps else 1.0
    chosen = rng.choice(sizes, size=config.batch_size, p=size_distribution(len(sizes), progress))
    seeds = rng.integers(2**31, size=config.batch_size)
    return [make_instance(config.task, int(s), int(seed)) for s, seed in zip(chosen, seeds)]


def group_by_size(instances: Sequence[TaskInstance]) -> dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    groups: dict[int, list[TaskInstance]] = {}
    for inst in instances:
        groups.setdefault(inst.side, []).append(inst)
    return {
        side: (
            np.stack([i.input for i in items]),
            np.stack([i.target for i in items]),
            np.stack([i.mask for i in items]),
        )
        for side, items in sorted(groups.items())
    }


# ---------------------------------------------------------------------------
# loss / prediction


@dataclass
class BatchStats:
    correct: int = 0
    total: int = 0
    instances_correct: int = 0
    instances: int = 0

    def add(self, pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> None:
        hit = (pred == target) | (mask == 0)
        self.correct += int(((pred == target) & (mask == 1)).sum())
        self.total += int(mask.sum())
        self.instances_correct += int(hit.reshape(len(hit), -1).all(axis=1).sum())
        self.instances += len(hit)

    @property
    def per_element(self) -> float:
        return self.correct / self.total if self.total else float("nan")

    @property
    def per_instance(self) -> float:
        return self.instances_correct / self.instances if self.instances else float("nan")


def batch_loss(params: ModelParams, instances: Sequence[TaskInstance], recurrent_steps: int = 1):
    """Masked softmax cross-entropy summed over recurrent steps.

    Within a step the loss is the mean over every masked position of the
    batch, whatever its size group.
    """
    groups = group_by_size(instances)
    total_mask = sum(int(g[2].sum()) for g in groups.values())
    loss = None
    stats = BatchStats()
    for inputs, targets, masks in groups.values():
        if recurrent_steps == 1:
            outputs = [matrix_se_forward(inputs, params)]
        else:
            outputs = recurrent_apply(inputs, params, recurrent_steps)
        weight = float(masks.sum()) / total_mask
        for logits in outputs:
            flat = ad.reshape(logits, (-1, params.vocab_out))
            part = ad.mul(ad.softmax_xent_loss(flat, targets.reshape(-1), masks.reshape(-1)), weight)
            loss = part if loss is None else ad.add(loss, part)
        stats.add(outputs[-1].data.argmax(axis=-1), targets, masks)
    return loss, stats


def predict(params: ModelParams, inputs: np.ndarray, recurrent_steps: int = 1) -> np.ndarray:
    if recurrent_steps == 1:
        logits = matrix_se_forward(inputs, params)
    else:
        logits = recurrent_apply(inputs, params, recurrent_steps)[-1]
    return logits.data.argmax(axis=-1)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    metrics: list[dict] = field(default_factory=list)
    stopped_early: bool = False


def _batches(config: TrainConfig, start: int, stop: int) -> Iterator[list[TaskInstance]]:
    if config.workers <= 0:
        for step in range(start, stop):
            yield curriculum_sample(config, step)
        return
    # batches depend only on (seed, step), so a producer thread keeps determinism
    q: queue.Queue = queue.Queue(maxsize=2 * config.workers)
    done = threading.Event()

    def produce():
        for step in range(start, stop):
            if done.is_set():
                return
            q.put(curriculum_sample(config, step))

    threading.Thread(target=produce, daemon=True).start()
    try:
        for _ in range(start, stop):
            yield q.get()
    finally:
        done.set()


def train(
    config: TrainConfig,
    out_dir: str | os.PathLike | None = None,
    resume: Checkpoint | None = None,
    metrics_stream: TextIO | None = None,
    callback: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Run ``config.steps`` optimisation steps (continuing from ``resume``).

    Writes ``metrics.jsonl`` and ``checkpoint.ckpt`` into ``out_dir`` when
    given. A non-finite loss raises :class:`NumericFailure` without touching
    the last written checkpoint.
    """
    spec = TASKS[config.task]
    if resume is not None:
        params, opt, start = resume.params, resume.optimizer, resume.step
    else:
        params = init_params(config.m, config.B, spec.vocab_in, spec.vocab_out, seed=config.seed,
                             flatten_kind=config.flatten_kind)
        opt = RAdamState(learning_rate=config.learning_rate)
        start = 0
    named = params.named_arrays()
    ckpt_path = os.path.join(out_dir, "checkpoint.ckpt") if out_dir else None
    own_stream = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        if metrics_stream is None:
            own_stream = metrics_stream = open(os.path.join(out_dir, "metrics.jsonl"), "a")

    def snapshot(step: int) -> Checkpoint:
        return Checkpoint(config=config, params=params, optimizer=opt, step=step)

    metrics: list[dict] = []
    window: deque[float] = deque(maxlen=LOSS_AVERAGE_WINDOW)
    best_avg, best_step = math.inf, start
    interval = BatchStats()
    interval_loss, interval_steps, interval_t0 = 0.0, 0, time.perf_counter()
    stopped_early = False
    step = start
    try:
        for step, batch in enumerate(_batches(config, start, config.steps), start=start):
            params.zero_grad()
            loss, stats = batch_loss(params, batch, config.recurrent_steps)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericFailure(f"non-finite loss {value} at step {step}", ckpt_path)
            ad.backward(loss)
            radam_step(named, params.gradients(), opt)

            interval_loss += value
            interval_steps += 1
            interval.correct += stats.correct
            interval.total += stats.total
            interval.instances += stats.instances
            interval.instances_correct += stats.instances_correct
            done = step + 1
            if done % config.log_every == 0 or done == config.steps:
                now = time.perf_counter()
                record = {
                    "step": done,
                    "task": config.task,
                    "loss": interval_loss / interval_steps,
                    "per_element_acc": interval.per_element,
                    "per_instance_acc": interval.per_instance,
                    "ms_per_step": 1000.0 * (now - interval_t0) / interval_steps,
                }
                metrics.append(record)
                if metrics_stream is not None:
                    metrics_stream.write(json.dumps(record) + "\n")
                    metrics_stream.flush()
                if callback is not None:
                    callback(record)
                logger.info("step %d loss %.4f acc %.4f", done, record["loss"], record["per_element_acc"])
                interval = BatchStats()
                interval_loss, interval_steps, interval_t0 = 0.0, 0, now
            if ckpt_path and done % config.checkpoint_every == 0:
                save_checkpoint(ckpt_path, snapshot(done))
            if config.patience > 0:
                window.append(value)
                if len(window) == window.maxlen:
                    avg = sum(window) / len(window)
                    if avg < best_avg:
                        best_avg, best_step = avg, done
                    elif done - best_step >= config.patience:
                        stopped_early = True
                        step = done
                        break
            step = done
    finally:
        if own_stream is not None:
            own_stream.close()
    result = snapshot(step)
    if ckpt_path:
        save_checkpoint(ckpt_path, result)
    return TrainResult(result, metrics, stopped_early)


# ---------------------------------------------------------------------------
# evaluation


def eval_instances(task: str, size: int, count: int, seed: int, data_path: str = "") -> list[TaskInstance]:
    if task == "sudoku":
        return _sudoku_pool(data_path)[:count]
    seeds = np.random.default_rng([seed, size]).integers(2**31, size=count)
    return [make_instance(task, size, int(s)) for s in seeds]


def evaluate(
    model,
    task: str,
    sizes: Sequence[int],
    instances_per_size: int = 64,
    seed: int = 1234,
    recurrent_steps: int = 1,
    batch_size: int = 16,
    data_path: str = "",
) -> list[dict]:
    """Per-size accuracy on freshly generated instances.

    ``model`` is a :class:`ModelParams`, a :class:`Checkpoint`, or any
    callable mapping an input batch ``[N, n, n]`` to predicted symbols.
    """
    if isinstance(model, Checkpoint):
        model = model.params
    if isinstance(model, ModelParams):
        params = model

        def model(inputs):
            return predict(params, inputs, recurrent_steps)

    rows = []
    for size in sizes:
        stats = BatchStats()
        instances = eval_instances(task, size, instances_per_size, seed, data_path)
        for lo in range(0, len(instances), batch_size):
            chunk = instances[lo : lo + batch_size]
            inputs = np.stack([i.input for i in chunk])
            stats.add(np.asarray(model(inputs)), np.stack([i.target for i in chunk]), np.stack([i.mask for i in chunk]))
        rows.append({
            "size": int(size),
            "per_element_acc": stats.per_element,
            "per_instance_acc": stats.per_instance,
            "instances": stats.instances,
        })
    return rows


def format_table(task: str, rows: Sequence[dict], train_size: int | None = None) -> str:
    """Markdown accuracy table; sizes above ``train_size`` are generalisation columns."""

    def head(r):
        mark = "" if train_size is None or r["size"] <= train_size else "*"
        return f"{r['size']}x{r['size']}{mark}"

    lines = [
        "| task | metric | " + " | ".join(head(r) for r in rows) + " |",
        "|---|---|" + "---|" * len(rows),
    ]
    for key, label in (("per_element_acc", "per-element"), ("per_instance_acc", "per-instance")):
        lines.append(f"| {task} | {label} | " + " | ".join(f"{r[key]:.3f}" for r in rows) + " |")
    if train_size is not None and any(r["size"] > train_size for r in rows):
        lines.append("")
        lines.append(f"`*` size not seen in training (trained up to {train_size}x{train_size})")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# speed


def benchmark_speed(config: TrainConfig, sizes: Sequence[int], steps: int = 300, warmup: int = 10) -> list[dict]:
    """Mean wall-clock ms per single-instance step, inference and training."""
    spec = TASKS[config.task]
    params = init_params(config.m, config.B, spec.vocab_in, spec.vocab_out, seed=config.seed,
                         flatten_kind=config.flatten_kind)
    named = params.named_arrays()
    opt = RAdamState(learning_rate=config.learning_rate)
    rows = []
    for size in sizes:
        inst = [make_instance(config.task, size, config.seed)]
        inputs = inst[0].input[None]

        for _ in range(warmup):
            predict(params, inputs)
        t0 = time.perf_counter()
        for _ in range(steps):
            predict(params, inputs)
        infer = (time.perf_counter() - t0) / steps

        def train_step():
            params.zero_grad()
            loss, _ = batch_loss(params, inst)
            ad.backward(loss)
            radam_step(named, params.gradients(), opt)

        for _ in range(warmup):
            train_step()
        t0 = time.perf_counter()
        for _ in range(steps):
            train_step()
        train_ms = (time.perf_counter() - t0) / steps
        rows.append({"size": int(size), "inference_ms": 1000.0 * infer, "train_ms": 1000.0 * train_ms})
    return rows


def loglog_slope(sizes: Sequence[float], times: Sequence[float]) -> float:
    """Least-squares slope of log(time) against log(size)."""
    return float(np.polyfit(np.log(np.asarray(sizes, float)), np.log(np.asarray(times, float)), 1)[0])
