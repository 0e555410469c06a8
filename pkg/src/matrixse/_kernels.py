"""Fused elementwise kernels for the float32 training path.

float32 GELU uses a clamped rational erf approximation accurate to a few
ulp in single precision; float64 (gradient checking) uses ``math.erf``.
"""

import math

import numba
import numpy as np

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT2PI = 0.3989422804014327


@numba.njit(cache=True, inline="always")
def _erf32(x):
    x = min(max(x, np.float32(-4.0)), np.float32(4.0))
    x2 = x * x
    p = np.float32(-2.72614225801306e-10)
    p = p * x2 + np.float32(2.77068142495902e-08)
    p = p * x2 + np.float32(-2.10102402082508e-06)
    p = p * x2 + np.float32(-5.69250639462346e-05)
    p = p * x2 + np.float32(-7.34990630326855e-04)
    p = p * x2 + np.float32(-2.95459980854025e-03)
    p = p * x2 + np.float32(-1.60960333262415e-02)
    q = np.float32(-1.45660718464996e-05)
    q = q * x2 + np.float32(-2.13374055278905e-04)
    q = q * x2 + np.float32(-1.68282697438203e-03)
    q = q * x2 + np.float32(-7.37332916720468e-03)
    q = q * x2 + np.float32(-1.42647390514189e-02)
    return x * p / q


@numba.vectorize(["float32(float32)"], cache=True)
def _gelu_f32(x):
    return np.float32(0.5) * x * (np.float32(1.0) + _erf32(x * np.float32(_INV_SQRT2)))


@numba.vectorize(["float64(float64)"], cache=True)
def _gelu_f64(x):
    return 0.5 * x * (1.0 + math.erf(x * _INV_SQRT2))


@numba.vectorize(["float32(float32, float32, float32)"], cache=True)
def _gelu_grad_f32(x, gauss, g):
    cdf = np.float32(0.5) * (np.float32(1.0) + _erf32(x * np.float32(_INV_SQRT2)))
    return g * (cdf + x * gauss * np.float32(_INV_SQRT2PI))


@numba.vectorize(["float64(float64, float64)"], cache=True)
def _gelu_grad_f64(x, g):
    cdf = 0.5 * (1.0 + math.erf(x * _INV_SQRT2))
    pdf = math.exp(-0.5 * x * x) * _INV_SQRT2PI
    return g * (cdf + x * pdf)


def gelu(x: np.ndarray) -> np.ndarray:
    return _gelu_f32(x) if x.dtype == np.float32 else _gelu_f64(x)


def gelu_grad(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    if x.dtype != np.float32:
        return _gelu_grad_f64(x, g)
    # numpy's float32 exp is SIMD-vectorised; a scalar exp inside the ufunc is not
    gauss = np.exp(np.float32(-0.5) * x * x)
    return _gelu_grad_f32(x, gauss, g)


@numba.njit(cache=True)
def _rmsnorm_rows(x, gain, eps, out, inv):
    rows, d = x.shape
    for r in range(rows):
        acc = 0.0
        for j in range(d):
            acc += x[r, j] * x[r, j]
        s = 1.0 / math.sqrt(acc / d + eps)
        inv[r] = s
        for j in range(d):
            out[r, j] = x[r, j] * s * gain[j]


@numba.njit(cache=True)
def _rmsnorm_rows_grad(x, gain, inv, g, gx, ggain):
    rows, d = x.shape
    for r in range(rows):
        s = inv[r]
        dot = 0.0
        for j in range(d):
            n = x[r, j] * s
            dot += g[r, j] * gain[j] * n
            ggain[j] += g[r, j] * n
        dot /= d
        for j in range(d):
            gx[r, j] = s * (g[r, j] * gain[j] - x[r, j] * s * dot)


def rmsnorm(x2: np.ndarray, gain: np.ndarray, eps: float):
    out = np.empty_like(x2)
    inv = np.empty(x2.shape[0], dtype=x2.dtype)
    _rmsnorm_rows(x2, gain, eps, out, inv)
    return out, inv


def rmsnorm_grad(x2, gain, inv, g2):
    gx = np.empty_like(x2)
    ggain = np.zeros(x2.shape[1], dtype=np.float64)
    _rmsnorm_rows_grad(x2, gain, inv, g2, gx, ggain)
    return gx, ggain.astype(x2.dtype)
