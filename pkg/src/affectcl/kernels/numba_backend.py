"""Numba-jitted implementation of the hot kernels.

Loops are written scalar-first so numba fuses them; the summation order per
output element matches the numpy backend (ascending feature index), keeping
results bit-compatible in practice for well-scaled inputs.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def _batch_logits(weights, indptr, indices, values, out):
    n_rows = len(indptr) - 1
    n_slots, arity, _ = weights.shape
    for b in range(n_rows):
        for s in range(n_slots):
            for v in range(arity):
                acc = 0.0
                for k in range(indptr[b], indptr[b + 1]):
                    acc += weights[s, v, indices[k]] * values[k]
                out[b, s, v] = acc


@njit(cache=True)
def _scatter_grad(grad, coef, indptr, indices, values):
    n_rows = len(indptr) - 1
    n_slots, arity, _ = grad.shape
    for b in range(n_rows):
        for k in range(indptr[b], indptr[b + 1]):
            d = indices[k]
            x = values[k]
            for s in range(n_slots):
                for v in range(arity):
                    grad[s, v, d] += coef[b, s, v] * x


def batch_logits(weights: np.ndarray, indptr: np.ndarray, indices: np.ndarray,
                 values: np.ndarray) -> np.ndarray:
    out = np.zeros((len(indptr) - 1, weights.shape[0], weights.shape[1]),
                   dtype=np.float64)
    _batch_logits(weights, indptr, indices, values, out)
    return out


def scatter_grad(grad: np.ndarray, coef: np.ndarray, indptr: np.ndarray,
                 indices: np.ndarray, values: np.ndarray) -> None:
    _scatter_grad(grad, coef, indptr, indices, values)
