"""Matrix Shuffle-Exchange network.

Hidden state travels as ``[batch, 4**k, m]`` sequences. A QSwitch layer
regroups four consecutive positions into one ``4m`` vector and applies the
shared Quaternary Switch Unit; QShuffle layers rotate the base-4 position
digits. One Benes block is ``k-1`` switch+right-shuffle layers with one
shared weight set, ``k-1`` switch+left-shuffle layers with a second shared
set, and a final unshared switch layer.
"""

from __future__ import annotations

import contextlib
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Array
from .routing import build_flatten_table, build_qshuffle_table, unflatten_kind

RESIDUAL_INIT = 0.9
S_INIT = math.log(RESIDUAL_INIT / (1.0 - RESIDUAL_INIT))
H_INIT = math.sqrt(1.0 - RESIDUAL_INIT**2) * 0.25

_counter: Counter | None = None


@contextlib.contextmanager
def count_layers() -> Iterator[Counter]:
    """Count QSwitch and QShuffle applications made inside the block."""
    global _counter
    previous, _counter = _counter, Counter()
    try:
        yield _counter
    finally:
        _counter = previous


def _tick(key: str) -> None:
    if _counter is not None:
        _counter[key] += 1


@dataclass
class QSUWeights:
    Z: Array  # maps 4m -> 8m
    rms_gain: Array
    W: Array  # maps 8m -> 4m
    b: Array
    s: Array
    h: Array

    def named(self, prefix: str) -> dict[str, Array]:
        return {f"{prefix}.{k}": getattr(self, k) for k in ("Z", "rms_gain", "W", "b", "s", "h")}


@dataclass
class BenesBlockWeights:
    forward_shared: QSUWeights
    mirror_shared: QSUWeights
    final: QSUWeights

    def named(self, prefix: str) -> dict[str, Array]:
        out = {}
        for part in ("forward_shared", "mirror_shared", "final"):
            out.update(getattr(self, part).named(f"{prefix}.{part}"))
        return out


@dataclass
class ModelParams:
    m: int
    B: int
    vocab_in: int
    vocab_out: int
    embedding: Array
    blocks: list[BenesBlockWeights]
    head_hidden_w: Array
    head_hidden_b: Array
    head_out_w: Array
    head_out_b: Array
    flatten_kind: str = "zorder"
    _named: dict[str, Array] | None = field(default=None, repr=False, compare=False)

    def named_arrays(self) -> dict[str, Array]:
        if self._named is None:
            named = {"embedding": self.embedding}
            for i, block in enumerate(self.blocks):
                named.update(block.named(f"block{i}"))
            named["head.hidden.weight"] = self.head_hidden_w
            named["head.hidden.bias"] = self.head_hidden_b
            named["head.out.weight"] = self.head_out_w
            named["head.out.bias"] = self.head_out_b
            self._named = named
        return self._named

    def zero_grad(self) -> None:
        for p in self.named_arrays().values():
            p.grad = None

    def gradients(self) -> dict[str, np.ndarray | None]:
        return {name: p.grad for name, p in self.named_arrays().items()}


def _uniform(rng: np.random.Generator, shape, fan_in: int, scale: float, dtype) -> Array:
    limit = scale * math.sqrt(3.0 / fan_in)
    return Array(rng.uniform(-limit, limit, size=shape).astype(dtype), requires_grad=True)


def _init_qsu(m: int, rng, scale: float, dtype) -> QSUWeights:
    return QSUWeights(
        Z=_uniform(rng, (4 * m, 8 * m), 4 * m, scale, dtype),
        rms_gain=Array(np.ones(8 * m, dtype=dtype), requires_grad=True),
        W=_uniform(rng, (8 * m, 4 * m), 8 * m, scale, dtype),
        b=Array(np.zeros(4 * m, dtype=dtype), requires_grad=True),
        s=Array(np.full(4 * m, S_INIT, dtype=dtype), requires_grad=True),
        h=Array(np.full(1, H_INIT, dtype=dtype), requires_grad=True),
    )


def init_params(
    m: int,
    B: int,
    vocab_in: int,
    vocab_out: int,
    seed: int = 0,
    flatten_kind: str = "zorder",
    init_scale: float = 1.0,
    dtype=None,
) -> ModelParams:
    """Fresh parameters; Z, W, embedding and head use fan-in scaled uniform init.

    ``init_scale`` multiplies the Z/W limits only (used to start near the
    residual-only identity map).
    """
    if m < 1 or B < 1:
        raise ValueError("m and B must be at least 1")
    if flatten_kind not in ("zorder", "raster"):
        raise ValueError(f"flatten_kind must be 'zorder' or 'raster', got {flatten_kind!r}")
    dtype = np.dtype(dtype or ad.default_dtype())
    rng = np.random.default_rng(seed)
    embedding = _uniform(rng, (vocab_in, m), 1, 1.0, dtype)
    blocks = [
        BenesBlockWeights(*(_init_qsu(m, rng, init_scale, dtype) for _ in range(3))) for _ in range(B)
    ]
    params = ModelParams(
        m=m,
        B=B,
        vocab_in=vocab_in,
        vocab_out=vocab_out,
        embedding=embedding,
        blocks=blocks,
        head_hidden_w=_uniform(rng, (m, m), m, 1.0, dtype),
        head_hidden_b=Array(np.zeros(m, dtype=dtype), requires_grad=True),
        head_out_w=_uniform(rng, (m, vocab_out), m, 1.0, dtype),
        head_out_b=Array(np.zeros(vocab_out, dtype=dtype), requires_grad=True),
        flatten_kind=flatten_kind,
    )
    for name, arr in params.named_arrays().items():
        arr.name = name
    return params


def qsu_params(m: int) -> int:
    return 64 * m * m + 16 * m + 1


def param_count(params: ModelParams | None = None, *, m=None, B=None, vocab_in=0, vocab_out=0,
                blocks_only: bool = False) -> int:
    """Closed-form learnable scalar count; independent of the input size."""
    if params is not None:
        m, B, vocab_in, vocab_out = params.m, params.B, params.vocab_in, params.vocab_out
    total = 3 * B * qsu_params(m)
    if not blocks_only:
        total += vocab_in * m + (m * m + m) + (m * vocab_out + vocab_out)
    return total


# ---------------------------------------------------------------------------
# forward pass


def qsu_forward(i: Array, w: QSUWeights) -> Array:
    """``sigmoid(s) * i + h * (W gelu(rmsnorm(Z i)) + b)`` over the trailing 4m features."""
    if i.shape[-1] != w.Z.shape[0]:
        raise ValueError(f"qsu_forward: trailing extent {i.shape[-1]} != 4m = {w.Z.shape[0]}")
    g = ad.apply_gelu(ad.apply_rmsnorm(ad.apply_linear(i, w.Z), w.rms_gain))
    c = ad.apply_linear(g, w.W, w.b)
    return ad.add(ad.mul(ad.apply_sigmoid(w.s), i), ad.mul(w.h, c))


def qswitch_layer(seq: Array, w: QSUWeights) -> Array:
    *lead, length, m = seq.shape
    if length % 4:
        raise ValueError(f"qswitch_layer: sequence length {length} is not divisible by 4")
    _tick("qswitch")
    grouped = ad.reshape(seq, (*lead, length // 4, 4 * m))
    return ad.reshape(qsu_forward(grouped, w), seq.shape)


def qshuffle(seq: Array, k: int, direction: str) -> Array:
    _tick("qshuffle")
    return ad.permute_select(seq, build_qshuffle_table(k, direction), axis=seq.data.ndim - 2)


def benes_block(seq: Array, w: BenesBlockWeights, k: int) -> Array:
    if seq.shape[-2] != 4**k:
        raise ValueError(f"benes_block: sequence length {seq.shape[-2]} != 4**{k}")
    for _ in range(k - 1):
        seq = qshuffle(qswitch_layer(seq, w.forward_shared), k, "right")
    for _ in range(k - 1):
        seq = qshuffle(qswitch_layer(seq, w.mirror_shared), k, "left")
    return qswitch_layer(seq, w.final)


def _check_grid(grid, params: ModelParams) -> tuple[np.ndarray, int]:
    grid = np.asarray(grid)
    if grid.ndim == 2:
        grid = grid[None]
    if grid.ndim != 3 or grid.shape[1] != grid.shape[2]:
        raise ValueError(f"expected square grid(s) [batch, n, n], got shape {grid.shape}")
    side = grid.shape[1]
    if side < 2 or side & (side - 1):
        raise ValueError(f"grid side {side} is not a power of two >= 2; pad it first")
    if not np.issubdtype(grid.dtype, np.integer):
        raise TypeError("grid must hold integer symbols")
    if grid.min() < 0 or grid.max() >= params.vocab_in:
        raise ValueError(f"symbol out of vocabulary [0, {params.vocab_in})")
    return grid, side.bit_length() - 1


def embed_grid(grid: np.ndarray, params: ModelParams, k: int) -> Array:
    batch = grid.shape[0]
    e = ad.embed(params.embedding, grid.reshape(batch, 4**k))
    return ad.permute_select(e, build_flatten_table(k, params.flatten_kind), axis=1)


def run_blocks(seq: Array, params: ModelParams, k: int) -> Array:
    for block in params.blocks:
        seq = benes_block(seq, block, k)
    return seq


def head(seq: Array, params: ModelParams, k: int) -> Array:
    batch = seq.shape[0]
    side = 1 << k
    cells = ad.permute_select(seq, build_flatten_table(k, unflatten_kind(params.flatten_kind)), axis=1)
    hidden = ad.apply_gelu(ad.apply_linear(cells, params.head_hidden_w, params.head_hidden_b))
    logits = ad.apply_linear(hidden, params.head_out_w, params.head_out_b)
    return ad.reshape(logits, (batch, side, side, params.vocab_out))


def matrix_se_forward(grid, params: ModelParams) -> Array:
    """Logits ``[batch, n, n, vocab_out]`` for integer grid(s) of side ``n = 2**k``."""
    grid, k = _check_grid(grid, params)
    return head(run_blocks(embed_grid(grid, params, k), params, k), params, k)


def recurrent_apply(grid, params: ModelParams, steps: int) -> list[Array]:
    """Apply the block stack ``steps`` times, reading logits out after each step.

    The hidden state is carried forward and the embedded input is added back
    before every step after the first.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    grid, k = _check_grid(grid, params)
    given = embed_grid(grid, params, k)
    state = given
    outputs = []
    for t in range(steps):
        state = run_blocks(state if t == 0 else ad.add(state, given), params, k)
        outputs.append(head(state, params, k))
    return outputs
