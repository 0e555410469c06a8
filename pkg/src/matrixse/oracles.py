"""Brute-force reference solvers.

Each solver reads an encoded (padded) input grid and rebuilds the target with
plain Python loops straight from the task definition. None of them share code
with the vectorised generators in :mod:`matrixse.tasks`, so agreement between
the two is a meaningful check.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .tasks import SEP, TASKS


def _extent(grid: list[list[int]], pad: int) -> tuple[int, int]:
    """Rows and columns of the unpadded top-left region."""
    rows = cols = 0
    for r in range(len(grid)):
        for c in range(len(grid[r])):
            if grid[r][c] != pad:
                rows = max(rows, r + 1)
                cols = max(cols, c + 1)
    return rows, cols


def transpose(a: list[list[int]]) -> list[list[int]]:
    n = len(a)
    return [[a[j][i] for j in range(n)] for i in range(n)]


def rotate90(a: list[list[int]]) -> list[list[int]]:
    n = len(a)
    return [[a[n - 1 - j][i] for j in range(n)] for i in range(n)]


def square_mod2(a: list[list[int]]) -> list[list[int]]:
    n = len(a)
    out = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            acc = 0
            for k in range(n):
                acc += a[i][k] * a[k][j]
            out[i][j] = acc % 2
    return out


def transitivity(a: list[list[int]]) -> list[list[int]]:
    n = len(a)
    out = [row[:] for row in a]
    for i in range(n):
        for k in range(n):
            if not a[i][k]:
                continue
            for j in range(n):
                if a[k][j]:
                    out[i][j] = 1
    return out


def triangle_edges(a: list[list[int]]) -> list[list[int]]:
    n = len(a)
    out = [[0] * n for _ in range(n)]
    for x, y, z in combinations(range(n), 3):
        if a[x][y] and a[y][z] and a[x][z]:
            for u, v in ((x, y), (y, z), (x, z)):
                out[u][v] = out[v][u] = 1
    return out


def component_labels(labels: list[list[int]]) -> list[list[int]]:
    """Union-find over edges; each edge takes its component's minimum label."""
    n = len(labels)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(n):
        for j in range(n):
            if labels[i][j]:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    best: dict[int, int] = {}
    for i in range(n):
        for j in range(n):
            if labels[i][j]:
                root = find(i)
                best[root] = min(best.get(root, labels[i][j]), labels[i][j])
    return [[best[find(i)] if labels[i][j] else 0 for j in range(n)] for i in range(n)]


def xor(a: list[list[int]], b: list[list[int]]) -> list[list[int]]:
    return [[x ^ y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def solve(task: str, grid) -> np.ndarray:
    """Target grid (padded like ``grid``) for an encoded input grid."""
    grid = np.asarray(grid)
    spec = TASKS[task]
    side = grid.shape[0]
    g = grid.tolist()
    rows, cols = _extent(g, spec.pad)
    out = np.zeros((side, side), dtype=np.int64)
    if task == "xor":
        width = next(c for c in range(cols) if g[0][c] == SEP)
        a = [[g[r][c] - 1 for c in range(width)] for r in range(rows)]
        b = [[g[r][c] - 1 for c in range(width + 1, 2 * width + 1)] for r in range(rows)]
        res = xor(a, b)
    else:
        n = max(rows, cols)
        region = [row[:n] for row in g[:n]]
        if task in ("transpose", "rotate90"):
            res = transpose(region) if task == "transpose" else rotate90(region)
        elif task == "component_labeling":
            res = component_labels(region)
        else:
            bits = [[v - 1 for v in row] for row in region]
            res = {"square_mod2": square_mod2, "transitivity": transitivity,
                   "triangle_finding": triangle_edges}[task](bits)
    res = np.array(res, dtype=np.int64).reshape(len(res), -1) if res else np.zeros((0, 0), np.int64)
    out[: res.shape[0], : res.shape[1]] = res
    return out
