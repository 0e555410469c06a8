"""Input checks for the estimator API."""

from __future__ import annotations

import numpy as np

from .routing import grid_exponent, pad_grid


def check_grids(X, *, name: str = "X", pad_symbol: int | None = None, min_value: int = 0) -> list[np.ndarray]:
    """Return ``X`` as a list of square integer grids with power-of-two sides.

    ``X`` may be a 3D array ``[N, n, n]`` or a sequence of 2D grids of mixed
    sizes. Non power-of-two grids are padded bottom/right with ``pad_symbol``;
    without one they are rejected.
    """
    if isinstance(X, np.ndarray) and X.ndim == 2:
        raise ValueError(f"{name} must be a batch of grids; got a single 2D array, wrap it in a list")
    grids = [np.asarray(g) for g in X]
    if not grids:
        raise ValueError(f"{name} is empty")
    out = []
    for i, g in enumerate(grids):
        if g.ndim != 2:
            raise ValueError(f"{name}[{i}] has {g.ndim} dimensions, expected 2")
        if g.size and not np.issubdtype(g.dtype, np.integer):
            if not np.all(np.equal(np.mod(g, 1), 0)):
                raise ValueError(f"{name}[{i}] holds non-integer symbols")
            g = g.astype(np.int64)
        if g.size and g.min() < min_value:
            raise ValueError(f"{name}[{i}] holds symbols below {min_value}")
        side = 1 << grid_exponent(max(g.shape))
        if g.shape != (side, side):
            if pad_symbol is None:
                raise ValueError(f"{name}[{i}] has shape {g.shape}; sides must be equal powers of two")
            g = pad_grid(g, pad_symbol, side)
        out.append(g.astype(np.int64, copy=False))
    return out


def check_matching(X: list[np.ndarray], y: list[np.ndarray], name: str = "y") -> None:
    if len(X) != len(y):
        raise ValueError(f"X has {len(X)} grids but {name} has {len(y)}")
    for i, (a, b) in enumerate(zip(X, y)):
        if a.shape != b.shape:
            raise ValueError(f"X[{i}] has shape {a.shape} but {name}[{i}] has shape {b.shape}")
