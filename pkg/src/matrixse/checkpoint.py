"""Checkpoint files.

Layout: a UTF-8 text header terminated by a line ``end``, then the raw
little-endian float32 payload. Header lines::

    matrixse-checkpoint
    version 1
    step <global step>
    config <key>=<value>            (one line per TrainConfig field)
    optimizer <key>=<value>         (RAdam scalars)
    array <name> <d0,d1,...> <byte offset> <element count>
    end

Offsets are relative to the first payload byte. Parameter arrays come first,
followed by the optimizer moments named ``opt.m.<param>`` / ``opt.v.<param>``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .model import ModelParams, init_params
from .optim import RAdamState
from .tasks import TASKS

FORMAT_VERSION = 1
MAGIC = "matrixse-checkpoint"
_LE_F32 = np.dtype("<f4")


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointManifestError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    config: TrainConfig
    params: ModelParams
    optimizer: RAdamState
    step: int
    version: int = FORMAT_VERSION


def _payload(ckpt: Checkpoint) -> list[tuple[str, np.ndarray]]:
    items = [(name, arr.data) for name, arr in ckpt.params.named_arrays().items()]
    for name, _ in list(items):
        if name in ckpt.optimizer.first_moment:
            items.append((f"opt.m.{name}", ckpt.optimizer.first_moment[name]))
            items.append((f"opt.v.{name}", ckpt.optimizer.second_moment[name]))
    return items


def save_checkpoint(path: str | os.PathLike, ckpt: Checkpoint) -> None:
    opt = ckpt.optimizer
    lines = [MAGIC, f"version {ckpt.version}", f"step {ckpt.step}"]
    lines += [f"config {k}={v}" for k, v in ckpt.config.to_items()]
    lines += [
        f"optimizer {k}={getattr(opt, k)!r}"
        for k in ("learning_rate", "beta1", "beta2", "epsilon", "step", "skipped")
    ]
    offset = 0
    blobs = []
    for name, arr in _payload(ckpt):
        shape = ",".join(str(d) for d in arr.shape) or "-"
        lines.append(f"array {name} {shape} {offset} {arr.size}")
        blob = np.ascontiguousarray(arr, dtype=_LE_F32).tobytes()
        blobs.append(blob)
        offset += len(blob)
    lines.append("end")
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode())
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    marker = b"\nend\n"
    cut = raw.find(marker)
    if not raw.startswith(MAGIC.encode()) or cut < 0:
        raise CheckpointManifestError(f"{path}: not a checkpoint file (missing header)")
    header = raw[:cut].decode().split("\n")
    payload = memoryview(raw)[cut + len(marker) :]

    version = None
    step = 0
    config_items: dict[str, str] = {}
    opt_items: dict[str, str] = {}
    manifest: list[tuple[str, tuple[int, ...], int, int]] = []
    for line in header[1:]:
        key, _, rest = line.partition(" ")
        if key == "version":
            version = int(rest)
        elif key == "step":
            step = int(rest)
        elif key in ("config", "optimizer"):
            k, _, v = rest.partition("=")
            (config_items if key == "config" else opt_items)[k] = v
        elif key == "array":
            try:
                name, shape, offset, count = rest.split(" ")
                dims = () if shape == "-" else tuple(int(d) for d in shape.split(","))
                manifest.append((name, dims, int(offset), int(count)))
            except ValueError:
                raise CheckpointManifestError(f"{path}: malformed manifest line {line!r}") from None
        else:
            raise CheckpointManifestError(f"{path}: unexpected header line {line!r}")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")

    config = TrainConfig.from_items(config_items)
    spec = TASKS[config.task]
    params = init_params(config.m, config.B, spec.vocab_in, spec.vocab_out, seed=0,
                         flatten_kind=config.flatten_kind, dtype=np.float32)
    named = params.named_arrays()
    opt = RAdamState(
        learning_rate=float(opt_items["learning_rate"]),
        beta1=float(opt_items["beta1"]),
        beta2=float(opt_items["beta2"]),
        epsilon=float(opt_items["epsilon"]),
        step=int(opt_items["step"]),
        skipped=int(opt_items.get("skipped", 0)),
    )
    seen = set()
    for name, dims, offset, count in manifest:
        if name.startswith("opt."):
            target_name = name[6:]
            target = named.get(target_name)
        else:
            target = named.get(name)
        if target is None:
            raise CheckpointManifestError(f"{path}: unknown array {name!r}")
        if dims != target.shape or count != int(np.prod(dims, dtype=np.int64)):
            raise CheckpointManifestError(
                f"{path}: array {name!r} has manifest shape {dims} (count {count}), model expects {target.shape}"
            )
        end = offset + 4 * count
        if end > len(payload):
            raise CheckpointTruncatedError(f"{path}: payload ends before array {name!r}")
        values = np.frombuffer(payload[offset:end], dtype=_LE_F32).astype(np.float32).reshape(dims)
        if name.startswith("opt.m."):
            opt.first_moment[target_name] = values
        elif name.startswith("opt.v."):
            opt.second_moment[target_name] = values
        else:
            target.data = values
        seen.add(name)
    missing = set(named) - seen
    if missing:
        raise CheckpointManifestError(f"{path}: missing arrays {sorted(missing)}")
    return Checkpoint(config=config, params=params, optimizer=opt, step=step, version=version)
