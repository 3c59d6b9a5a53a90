"""Pure-numpy reference implementation of the hot kernels."""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def batch_logits(weights: np.ndarray, indptr: np.ndarray, indices: np.ndarray,
                 values: np.ndarray) -> np.ndarray:
    n_rows = len(indptr) - 1
    n_slots, arity, _ = weights.shape
    out = np.zeros((n_rows, n_slots, arity), dtype=np.float64)
    for b in range(n_rows):
        lo, hi = indptr[b], indptr[b + 1]
        out[b] = weights[:, :, indices[lo:hi]] @ values[lo:hi]
    return out


def scatter_grad(grad: np.ndarray, coef: np.ndarray, indptr: np.ndarray,
                 indices: np.ndarray, values: np.ndarray) -> None:
    n_rows = len(indptr) - 1
    for b in range(n_rows):
        lo, hi = indptr[b], indptr[b + 1]
        # indices within one row are unique, so fancy-index += is safe
        grad[:, :, indices[lo:hi]] += coef[b][:, :, None] * values[lo:hi]
