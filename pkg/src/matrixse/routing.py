"""Index permutations for the Matrix-SE wiring.

Z-order (Morton) interleaving puts the row bit in the more significant slot
of each base-4 digit, so the finest 2x2 quad is visited as
``(0,0), (0,1), (1,0), (1,1)``. A flattened ``2**k x 2**k`` grid therefore
has ``4**k`` positions and every base-4 digit of a position addresses one
level of the quadtree.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PermKind",
    "PermTable",
    "build_flatten_table",
    "build_qshuffle_table",
    "compose",
    "grid_exponent",
    "pad_grid",
    "qrotate",
    "zorder_index",
]


class PermKind(str, enum.Enum):
    ZORDER_FLATTEN = "zorder_flatten"
    ZORDER_UNFLATTEN = "zorder_unflatten"
    RASTER_FLATTEN = "raster_flatten"
    RASTER_UNFLATTEN = "raster_unflatten"
    QSHUFFLE_RIGHT = "qshuffle_right"
    QSHUFFLE_LEFT = "qshuffle_left"


@dataclass(frozen=True, eq=False)
class PermTable:
    """Bijection on ``range(4**k)``; apply with ``out[j] = x[table[j]]``."""

    k: int
    kind: PermKind
    table: np.ndarray
    inverse: np.ndarray

    def __post_init__(self):
        n = 4**self.k
        if self.table.shape != (n,):
            raise ValueError(f"{self.kind.value} table for k={self.k} must have length {n}")
        seen = np.zeros(n, dtype=bool)
        seen[self.table] = True
        if not seen.all():
            raise ValueError(f"{self.kind.value} table is not a bijection")

    def __len__(self) -> int:
        return len(self.table)

    def __array__(self, dtype=None, copy=None):
        return self.table if dtype is None else self.table.astype(dtype)


def _make(k: int, kind: PermKind, table: np.ndarray) -> PermTable:
    table = np.ascontiguousarray(table, dtype=np.intp)
    inverse = np.empty_like(table)
    inverse[table] = np.arange(len(table))
    table.setflags(write=False)
    inverse.setflags(write=False)
    return PermTable(k, kind, table, inverse)


def compose(first, second) -> np.ndarray:
    """Table equivalent to applying ``first`` then ``second`` via permute_select."""
    return np.asarray(first)[np.asarray(second)]


def zorder_index(row: int, col: int, k: int) -> int:
    side = 1 << k
    if not (0 <= row < side and 0 <= col < side):
        raise ValueError(f"coordinates ({row}, {col}) outside a {side}x{side} grid")
    idx = 0
    for b in range(k):
        idx |= ((col >> b) & 1) << (2 * b)
        idx |= ((row >> b) & 1) << (2 * b + 1)
    return idx


def _zorder_grid(k: int) -> np.ndarray:
    """``z[r, c]`` = Z-order position of cell (r, c), vectorised."""
    side = 1 << k
    coord = np.arange(side)
    spread = np.zeros(side, dtype=np.intp)
    for b in range(k):
        spread |= ((coord >> b) & 1) << (2 * b)
    return (spread[:, None] << 1) | spread[None, :]


def qrotate(x: int, k: int, direction: str = "right") -> int:
    """Rotate the ``k`` base-4 digits of ``x`` by one position."""
    if not 0 <= x < 4**k:
        raise ValueError(f"{x} is not a {k}-digit base-4 number")
    top = 2 * (k - 1)
    if direction == "right":
        return (x >> 2) | ((x & 3) << top)
    if direction == "left":
        return ((x << 2) & (4**k - 1)) | (x >> top)
    raise ValueError(f"direction must be 'right' or 'left', got {direction!r}")


def build_flatten_table(k: int, kind: str | PermKind = PermKind.ZORDER_FLATTEN) -> PermTable:
    """Flatten tables map sequence position -> row-major cell; unflatten the reverse.

    ``kind`` may also be the short names ``"zorder"`` / ``"raster"`` (flatten).
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    return _flatten_table(k, PermKind({"zorder": "zorder_flatten", "raster": "raster_flatten"}.get(kind, kind)))


@functools.lru_cache(maxsize=None)
def _flatten_table(k: int, kind: PermKind) -> PermTable:
    n = 4**k
    if kind in (PermKind.RASTER_FLATTEN, PermKind.RASTER_UNFLATTEN):
        return _make(k, kind, np.arange(n))
    z = _zorder_grid(k).ravel()
    if kind is PermKind.ZORDER_FLATTEN:
        table = np.empty(n, dtype=np.intp)
        table[z] = np.arange(n)
        return _make(k, kind, table)
    if kind is PermKind.ZORDER_UNFLATTEN:
        return _make(k, kind, z)
    raise ValueError(f"{kind.value} is not a flatten kind")


def unflatten_kind(kind: str | PermKind) -> PermKind:
    kind = PermKind({"zorder": "zorder_flatten", "raster": "raster_flatten"}.get(kind, kind))
    return {
        PermKind.ZORDER_FLATTEN: PermKind.ZORDER_UNFLATTEN,
        PermKind.RASTER_FLATTEN: PermKind.RASTER_UNFLATTEN,
    }[kind]


@functools.lru_cache(maxsize=None)
def build_qshuffle_table(k: int, direction: str = "right") -> PermTable:
    if k < 0:
        raise ValueError("k must be non-negative")
    x = np.arange(4**k, dtype=np.intp)
    top = 2 * (k - 1) if k else 0
    if direction == "right":
        table = (x >> 2) | ((x & 3) << top)
        kind = PermKind.QSHUFFLE_RIGHT
    elif direction == "left":
        table = ((x << 2) & (4**k - 1)) | (x >> top)
        kind = PermKind.QSHUFFLE_LEFT
    else:
        raise ValueError(f"direction must be 'right' or 'left', got {direction!r}")
    return _make(k, kind, table)


def grid_exponent(size: int) -> int:
    """Smallest ``k >= 1`` with ``2**k >= size``."""
    if size < 1:
        raise ValueError("grid size must be positive")
    return max(1, (size - 1).bit_length())


def pad_grid(grid, pad_symbol: int, side: int | None = None) -> np.ndarray:
    """Pad a 2D grid bottom/right to ``side`` (default: next power of two)."""
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ValueError(f"expected a 2D grid, got shape {grid.shape}")
    if side is None:
        side = 1 << grid_exponent(max(grid.shape))
    if side < max(grid.shape):
        raise ValueError(f"grid of shape {grid.shape} does not fit in {side}x{side}")
    out = np.full((side, side), pad_symbol, dtype=grid.dtype)
    out[: grid.shape[0], : grid.shape[1]] = grid
    return out
