"""Hot numeric kernels with selectable backends.

Two implementations of the same two kernels exist: a numba-jitted one and a
pure-numpy fallback.  Selection order:

1. env var ``AFFECTCL_BACKEND`` set to ``numba`` or ``numpy``;
2. otherwise numba when it imports, numpy when it does not.

Both backends compute identical quantities; ``benchmarks/bench_backends.py``
compares their throughput.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import numpy_backend


def _resolve() -> ModuleType:
    choice = os.environ.get("AFFECTCL_BACKEND", "").strip().lower()
    if choice == "numpy":
        return numpy_backend
    if choice == "numba":
        from . import numba_backend
        return numba_backend
    if choice:
        raise ValueError(f"AFFECTCL_BACKEND must be 'numba' or 'numpy', got {choice!r}")
    try:
        from . import numba_backend
        return numba_backend
    except ImportError:
        return numpy_backend


_BACKEND = _resolve()


def backend_name() -> str:
    return _BACKEND.NAME


def batch_logits(weights, indptr, indices, values):
    """Per-slot logits for a sparse batch: (B, S, V) from W (S, V, D)."""
    return _BACKEND.batch_logits(weights, indptr, indices, values)


def scatter_grad(grad, coef, indptr, indices, values):
    """In-place grad[s, v, d] += coef[b, s, v] * x[b, d] over the sparse batch."""
    _BACKEND.scatter_grad(grad, coef, indptr, indices, values)
