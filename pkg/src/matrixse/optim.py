"""Rectified Adam."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .autodiff import Array

logger = logging.getLogger(__name__)


@dataclass
class RAdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)
    skipped: int = 0

    def init_buffers(self, params: Mapping[str, Array]) -> None:
        for name, p in params.items():
            if name not in self.first_moment:
                self.first_moment[name] = np.zeros_like(p.data)
                self.second_moment[name] = np.zeros_like(p.data)


def rectification(step: int, beta2: float) -> float | None:
    """Variance rectification factor, or None while the SMA length is <= 4."""
    rho_inf = 2.0 / (1.0 - beta2) - 1.0
    beta2_t = beta2**step
    rho_t = rho_inf - 2.0 * step * beta2_t / (1.0 - beta2_t)
    if rho_t <= 4.0:
        return None
    return math.sqrt(
        (rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)
    )


def radam_step(
    params: Mapping[str, Array],
    grads: Mapping[str, np.ndarray | None],
    state: RAdamState,
) -> tuple[Mapping[str, Array], RAdamState]:
    """Apply one RAdam update in place.

    A step with any non-finite gradient is skipped entirely (parameters,
    moments and step counter untouched) and logged.
    """
    state.init_buffers(params)
    for name, g in grads.items():
        if g is None:
            continue
        if g.shape != params[name].shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, parameter has {params[name].shape}")
        if not np.all(np.isfinite(g)):
            state.skipped += 1
            logger.warning("non-finite gradient in %r at step %d; update skipped", name, state.step + 1)
            return params, state

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    rect = rectification(t, b2)
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if rect is None:
            update = (state.learning_rate / bias1) * m
        else:
            denom = np.sqrt(v / bias2) + state.epsilon
            update = (state.learning_rate * rect / bias1) * m / denom
        p.data -= update.astype(p.dtype, copy=False)
    return params, state
