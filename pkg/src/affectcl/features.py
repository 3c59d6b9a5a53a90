"""Sparse hashed text features for the surrogate scorer.

Texts map to bags of lowercase word unigrams hashed with crc32 into a fixed
dimension, plus an always-present bias feature at index 0.  The hash is stable
across runs and platforms, so feature vectors (and therefore trained weights)
are reproducible byte for byte.
"""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass

import numpy as np

from .corpus import CANONICAL_EMOTIONS

DEFAULT_DIM = 1 << 16

_WORD_RE = re.compile(r"\w+", re.UNICODE)


@dataclass(frozen=True)
class FeatureVector:
    """Sorted sparse vector: parallel index/value arrays plus the dimension."""

    indices: np.ndarray  # int64, strictly increasing
    values: np.ndarray   # float64
    dim: int

    @property
    def nnz(self) -> int:
        return len(self.indices)


def featurize(text: str, dim: int = DEFAULT_DIM) -> FeatureVector:
    """Hashed unigram counts with bias at index 0; tokens occupy 1..dim-1."""
    counts: dict[int, float] = {0: 1.0}
    for token in _WORD_RE.findall(text.lower()):
        idx = 1 + zlib.crc32(token.encode("utf-8")) % (dim - 1)
        counts[idx] = counts.get(idx, 0.0) + 1.0
    indices = np.array(sorted(counts), dtype=np.int64)
    values = np.array([counts[i] for i in indices], dtype=np.float64)
    return FeatureVector(indices=indices, values=values, dim=dim)


def crc_feature_dim(text_dim: int) -> int:
    return 2 * text_dim + len(CANONICAL_EMOTIONS)


def crc_features(text1: str, text2: str, focus: str,
                 text_dim: int = DEFAULT_DIM) -> FeatureVector:
    """Concatenate both conversations' features plus a one-hot focus block."""
    f1 = featurize(text1, text_dim)
    f2 = featurize(text2, text_dim)
    focus_idx = 2 * text_dim + CANONICAL_EMOTIONS.index(focus)
    indices = np.concatenate([f1.indices, f2.indices + text_dim,
                              np.array([focus_idx], dtype=np.int64)])
    values = np.concatenate([f1.values, f2.values, np.array([1.0])])
    return FeatureVector(indices=indices, values=values,
                         dim=crc_feature_dim(text_dim))


@dataclass(frozen=True)
class SparseBatch:
    """CSR-style stack of feature vectors sharing one dimension."""

    indptr: np.ndarray   # int64, len B+1
    indices: np.ndarray  # int64
    values: np.ndarray   # float64
    dim: int

    @property
    def n_rows(self) -> int:
        return len(self.indptr) - 1

    def row(self, b: int) -> FeatureVector:
        lo, hi = self.indptr[b], self.indptr[b + 1]
        return FeatureVector(indices=self.indices[lo:hi],
                             values=self.values[lo:hi], dim=self.dim)

    def take(self, order: np.ndarray) -> "SparseBatch":
        """Rows reordered/subset per ``order``."""
        lengths = np.diff(self.indptr)[order]
        indptr = np.zeros(len(order) + 1, dtype=np.int64)
        np.cumsum(lengths, out=indptr[1:])
        indices = np.empty(indptr[-1], dtype=np.int64)
        values = np.empty(indptr[-1], dtype=np.float64)
        for new_b, old_b in enumerate(order):
            lo, hi = self.indptr[old_b], self.indptr[old_b + 1]
            indices[indptr[new_b]:indptr[new_b + 1]] = self.indices[lo:hi]
            values[indptr[new_b]:indptr[new_b + 1]] = self.values[lo:hi]
        return SparseBatch(indptr=indptr, indices=indices, values=values,
                           dim=self.dim)


def stack_features(rows: list[FeatureVector]) -> SparseBatch:
    if not rows:
        raise ValueError("cannot stack zero feature vectors")
    dim = rows[0].dim
    if any(r.dim != dim for r in rows):
        raise ValueError("mixed feature dimensions")
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    np.cumsum([r.nnz for r in rows], out=indptr[1:])
    return SparseBatch(
        indptr=indptr,
        indices=np.concatenate([r.indices for r in rows]),
        values=np.concatenate([r.values for r in rows]),
        dim=dim)
