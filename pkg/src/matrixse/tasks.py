"""Instance generators for the matrix, graph and Sudoku tasks.

Every grid uses integer symbols. Binary inputs are stored as ``bit + 1`` so
that ``0`` stays free for padding; binary targets are the raw bits. Targets
are computed here with vectorised numpy; :mod:`matrixse.oracles` recomputes
them with brute-force loops for cross-checking.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import Callable, Iterable, TextIO

import numpy as np
from scipy.sparse.csgraph import connected_components

from .routing import grid_exponent, pad_grid

__all__ = [
    "TASKS",
    "TaskInstance",
    "TaskSpec",
    "SudokuFormatError",
    "gen_component_labeling",
    "gen_rotate90",
    "gen_square_mod2",
    "gen_transitivity",
    "gen_transpose",
    "gen_triangle_finding",
    "gen_xor",
    "make_instance",
    "read_instances",
    "sudoku_augment",
    "sudoku_load",
    "sudoku_synthesize",
    "sudoku_valid",
    "write_instances",
]

ALPHABET = (1, 11)  # matrix symbols 1..11 inclusive
LABELS = (2, 100)  # component-labeling edge labels inclusive
BIT_OFFSET = 1
SEP = 3
# "a few random edges" for triangle finding
TRIANGLE_EXTRA_EDGES_MEAN = 3.0
# expected out-degree of random digraphs for transitivity
TRANSITIVITY_DEGREE = 1.5
# expected degree of random graphs for component labeling
COMPONENT_DEGREE = 1.2


@dataclass(frozen=True)
class TaskSpec:
    name: str
    vocab_in: int
    vocab_out: int
    pad: int
    graph: bool = False


TASKS: dict[str, TaskSpec] = {
    "transpose": TaskSpec("transpose", 12, 12, 0),
    "rotate90": TaskSpec("rotate90", 12, 12, 0),
    "xor": TaskSpec("xor", 4, 2, 0),
    "square_mod2": TaskSpec("square_mod2", 3, 2, 0),
    "component_labeling": TaskSpec("component_labeling", 101, 101, 1, graph=True),
    "transitivity": TaskSpec("transitivity", 3, 2, 0, graph=True),
    "triangle_finding": TaskSpec("triangle_finding", 3, 2, 0, graph=True),
    "sudoku": TaskSpec("sudoku", 11, 10, 10),
}


@dataclass
class TaskInstance:
    input: np.ndarray
    target: np.ndarray
    mask: np.ndarray
    task: str
    n: int
    seed: int

    @property
    def side(self) -> int:
        return self.input.shape[0]


def _finish(task: str, n: int, seed: int, inp, target, footprint, side) -> TaskInstance:
    spec = TASKS[task]
    side = side or 1 << grid_exponent(max(inp.shape))
    mask = np.zeros(inp.shape, dtype=np.int64)
    mask[footprint] = 1
    return TaskInstance(
        input=pad_grid(inp.astype(np.int64), spec.pad, side),
        target=pad_grid(np.where(mask == 1, target, 0).astype(np.int64), 0, side),
        mask=pad_grid(mask, 0, side),
        task=task,
        n=n,
        seed=seed,
    )


def _full(shape) -> tuple[slice, slice]:
    return slice(0, shape[0]), slice(0, shape[1])


# ---------------------------------------------------------------------------
# matrix tasks


def gen_transpose(n: int, seed: int, side: int | None = None) -> TaskInstance:
    rng = np.random.default_rng(seed)
    a = rng.integers(ALPHABET[0], ALPHABET[1] + 1, size=(n, n))
    return _finish("transpose", n, seed, a, a.T, _full(a.shape), side)


def gen_rotate90(n: int, seed: int, side: int | None = None) -> TaskInstance:
    """Clockwise rotation."""
    rng = np.random.default_rng(seed)
    a = rng.integers(ALPHABET[0], ALPHABET[1] + 1, size=(n, n))
    return _finish("rotate90", n, seed, a, np.rot90(a, k=-1), _full(a.shape), side)


def gen_xor(n: int, seed: int, rows: int | None = None, side: int | None = None) -> TaskInstance:
    """``A | SEP | B`` laid side by side; the target is ``A ^ B`` on A's footprint.

    ``A`` and ``B`` are ``rows x n`` bit matrices (``rows`` defaults to ``n``).
    """
    rows = n if rows is None else rows
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 2, size=(rows, n))
    b = rng.integers(0, 2, size=(rows, n))
    inp = np.empty((rows, 2 * n + 1), dtype=np.int64)
    inp[:, :n] = a + BIT_OFFSET
    inp[:, n] = SEP
    inp[:, n + 1 :] = b + BIT_OFFSET
    target = np.zeros_like(inp)
    target[:, :n] = a ^ b
    return _finish("xor", n, seed, inp, target, (slice(0, rows), slice(0, n)), side)


def gen_square_mod2(n: int, seed: int, side: int | None = None) -> TaskInstance:
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 2, size=(n, n))
    return _finish("square_mod2", n, seed, a + BIT_OFFSET, (a @ a) % 2, _full(a.shape), side)


# ---------------------------------------------------------------------------
# graph tasks


def _random_undirected(v: int, degree: float, rng: np.random.Generator) -> np.ndarray:
    p = min(1.0, degree / max(v - 1, 1))
    upper = np.triu(rng.random((v, v)) < p, k=1)
    return (upper | upper.T).astype(np.int64)


def gen_component_labeling(v: int, seed: int, side: int | None = None) -> TaskInstance:
    """Every edge gets the smallest label among the edges of its component."""
    if v < 2:
        raise ValueError("component labeling needs at least 2 vertices")
    rng = np.random.default_rng(seed)
    adj = _random_undirected(v, COMPONENT_DEGREE, rng)
    labels = np.triu(rng.integers(LABELS[0], LABELS[1] + 1, size=(v, v)), k=1)
    labels = (labels + labels.T) * adj
    _, comp = connected_components(adj, directed=False)
    big = LABELS[1] + 1
    comp_min = np.full(comp.max() + 1, big)
    np.minimum.at(comp_min, comp, np.where(adj == 1, labels, big).min(axis=1))
    target = np.where(adj == 1, comp_min[comp][:, None], 0)
    return _finish("component_labeling", v, seed, labels, target, _full(adj.shape), side)


def gen_transitivity(v: int, seed: int, side: int | None = None) -> TaskInstance:
    """Target is ``A or (A @ A > 0)`` for a random digraph without self loops."""
    if v < 2:
        raise ValueError("transitivity needs at least 2 vertices")
    rng = np.random.default_rng(seed)
    p = min(1.0, TRANSITIVITY_DEGREE / (v - 1))
    adj = (rng.random((v, v)) < p).astype(np.int64)
    np.fill_diagonal(adj, 0)
    target = ((adj + (adj @ adj)) > 0).astype(np.int64)
    return _finish("transitivity", v, seed, adj + BIT_OFFSET, target, _full(adj.shape), side)


def gen_triangle_finding(v: int, seed: int, side: int | None = None) -> TaskInstance:
    """Complete bipartite graph plus a few random edges; mark edges lying on a triangle."""
    if v < 3:
        raise ValueError("triangle finding needs at least 3 vertices")
    rng = np.random.default_rng(seed)
    part = np.zeros(v, dtype=bool)
    part[rng.permutation(v)[: v // 2]] = True
    adj = (part[:, None] != part[None, :]).astype(np.int64)
    free = np.argwhere(np.triu(adj == 0, k=1))
    extra = min(int(rng.poisson(TRIANGLE_EXTRA_EDGES_MEAN)), len(free))
    for i, j in free[rng.choice(len(free), size=extra, replace=False)] if extra else ():
        adj[i, j] = adj[j, i] = 1
    target = (((adj @ adj) * adj) > 0).astype(np.int64)
    return _finish("triangle_finding", v, seed, adj + BIT_OFFSET, target, _full(adj.shape), side)


GENERATORS: dict[str, Callable[..., TaskInstance]] = {
    "transpose": gen_transpose,
    "rotate90": gen_rotate90,
    "xor": gen_xor,
    "square_mod2": gen_square_mod2,
    "component_labeling": gen_component_labeling,
    "transitivity": gen_transitivity,
    "triangle_finding": gen_triangle_finding,
}


def make_instance(task: str, side: int, seed: int) -> TaskInstance:
    """Instance whose padded grid is exactly ``side x side``.

    For XOR the two operands are ``side x (side - 1) // 2`` so the whole
    layout fits; every other task uses an ``n = side`` matrix or graph.
    """
    if task == "xor":
        return gen_xor((side - 1) // 2, seed, rows=side, side=side)
    try:
        gen = GENERATORS[task]
    except KeyError:
        raise ValueError(f"unknown task {task!r}") from None
    return gen(side, seed, side=side)


# ---------------------------------------------------------------------------
# Sudoku


class SudokuFormatError(ValueError):
    pass


SUDOKU_SIDE = 16


def sudoku_valid(grid) -> bool:
    """True if a 9x9 grid is a complete, constraint-satisfying solution."""
    g = np.asarray(grid).reshape(9, 9)
    want = set(range(1, 10))
    for i in range(9):
        if set(g[i].tolist()) != want or set(g[:, i].tolist()) != want:
            return False
    for r in range(0, 9, 3):
        for c in range(0, 9, 3):
            if set(g[r : r + 3, c : c + 3].ravel().tolist()) != want:
                return False
    return True


def _sudoku_instance(puzzle: np.ndarray, solution: np.ndarray, seed: int = 0) -> TaskInstance:
    pad = TASKS["sudoku"].pad
    mask = np.zeros((SUDOKU_SIDE, SUDOKU_SIDE), dtype=np.int64)
    mask[:9, :9] = 1
    return TaskInstance(
        input=pad_grid(puzzle.astype(np.int64), pad, SUDOKU_SIDE),
        target=pad_grid(solution.astype(np.int64), 0, SUDOKU_SIDE),
        mask=mask,
        task="sudoku",
        n=9,
        seed=seed,
    )


def _parse_sudoku_line(line: str, lineno: int) -> TaskInstance:
    parts = line.split(",")
    if len(parts) != 2 or len(parts[0]) != 81 or len(parts[1]) != 81:
        raise SudokuFormatError(f"line {lineno}: expected '<81 digits>,<81 digits>'")
    if not (parts[0].isdigit() and parts[1].isdigit()):
        raise SudokuFormatError(f"line {lineno}: non-digit character")
    puzzle = np.array([int(c) for c in parts[0]]).reshape(9, 9)
    solution = np.array([int(c) for c in parts[1]]).reshape(9, 9)
    if not sudoku_valid(solution):
        raise SudokuFormatError(f"line {lineno}: solution violates Sudoku constraints")
    givens = puzzle != 0
    if np.any(puzzle[givens] != solution[givens]):
        raise SudokuFormatError(f"line {lineno}: puzzle givens disagree with the solution")
    return _sudoku_instance(puzzle, solution, seed=lineno)


def sudoku_load(path: str | os.PathLike, limit: int | None = None) -> list[TaskInstance]:
    """Read ``puzzle,solution`` lines (81 digits each, 0 = blank).

    A first line without digits is treated as a column header and skipped.
    """
    out = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or (lineno == 1 and not any(c.isdigit() for c in line)):
                continue
            out.append(_parse_sudoku_line(line, lineno))
            if limit is not None and len(out) >= limit:
                break
    return out


def sudoku_transform(
    grid9: np.ndarray, transpose: bool, stack_order: Iterable[int], band_order: Iterable[int]
) -> np.ndarray:
    """Transpose, then reorder the 3-row stacks and 3-column bands."""
    g = np.asarray(grid9).reshape(9, 9)
    if transpose:
        g = g.T
    rows = [3 * s + i for s in stack_order for i in range(3)]
    cols = [3 * b + i for b in band_order for i in range(3)]
    return g[np.ix_(rows, cols)]


def sudoku_augment(instance: TaskInstance, seed: int) -> TaskInstance:
    rng = np.random.default_rng(seed)
    transpose = bool(rng.integers(2))
    stacks = rng.permutation(3)
    bands = rng.permutation(3)
    puzzle = sudoku_transform(instance.input[:9, :9], transpose, stacks, bands)
    solution = sudoku_transform(instance.target[:9, :9], transpose, stacks, bands)
    return _sudoku_instance(puzzle, solution, seed=instance.seed)


def sudoku_synthesize(count: int, seed: int, givens: tuple[int, int] = (17, 36)) -> list[str]:
    """Random ``puzzle,solution`` lines built from a canonical grid.

    Solutions come from the cyclic base pattern under validity-preserving
    shuffles (digit relabelling, row/column moves within stacks/bands, stack
    and band moves, transposition). Puzzles keep a random subset of cells
    and are not guaranteed to have a unique solution.
    """
    rng = np.random.default_rng(seed)
    base = np.array([[(3 * (r % 3) + r // 3 + c) % 9 + 1 for c in range(9)] for r in range(9)])
    lines = []
    for _ in range(count):
        relabel = np.concatenate([[0], rng.permutation(9) + 1])
        g = relabel[base]
        rows = [3 * s + i for s in rng.permutation(3) for i in rng.permutation(3)]
        cols = [3 * b + i for b in rng.permutation(3) for i in rng.permutation(3)]
        g = g[np.ix_(rows, cols)]
        if rng.integers(2):
            g = g.T
        keep = rng.integers(givens[0], givens[1] + 1)
        puzzle = np.zeros(81, dtype=np.int64)
        idx = rng.choice(81, size=keep, replace=False)
        puzzle[idx] = g.ravel()[idx]
        lines.append("".join(map(str, puzzle)) + "," + "".join(map(str, g.ravel())))
    return lines


# ---------------------------------------------------------------------------
# text serialisation


def write_instances(instances: Iterable[TaskInstance], fh: TextIO) -> None:
    """Header ``task n seed`` followed by the input, target and mask grids."""
    for inst in instances:
        fh.write(f"{inst.task} {inst.n} {inst.seed}\n")
        for grid in (inst.input, inst.target, inst.mask):
            for row in grid:
                fh.write(" ".join(str(int(v)) for v in row) + "\n")


def read_instances(fh: TextIO | str) -> list[TaskInstance]:
    if isinstance(fh, str):
        fh = io.StringIO(fh)
    lines = [ln for ln in (raw.strip() for raw in fh) if ln]
    out, pos = [], 0
    while pos < len(lines):
        header = lines[pos].split()
        if len(header) != 3 or header[0] not in TASKS:
            raise ValueError(f"bad instance header {lines[pos]!r}")
        task, n, seed = header[0], int(header[1]), int(header[2])
        side = len(lines[pos + 1].split())
        block = lines[pos + 1 : pos + 1 + 3 * side]
        if len(block) != 3 * side:
            raise ValueError(f"truncated instance after header {lines[pos]!r}")
        grids = np.array([[int(v) for v in row.split()] for row in block]).reshape(3, side, side)
        out.append(TaskInstance(grids[0], grids[1], grids[2], task, n, seed))
        pos += 1 + 3 * side
    return out
