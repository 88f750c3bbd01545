"""Map regression outputs back to labels.

Multiclass decoding returns the smallest class index whose embedding is
nearest to the output. It is computed as the argmax of
``<p, g_i> - |g_i|^2 / 2``, which has the same winners as the distance argmin.
Ties are exact bit-equality of that key; there is no epsilon band.

Multilabel decoding searches binary label vectors with at most K ones. Ties
among them go to the lexicographically smallest vector, where ``y < y'`` when
``y`` has a 1 at the first coordinate where they differ. This matches the
multiclass rule on one-hot vectors (``e_1 < e_2``) and ranks the empty label
set last.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Tuple

import numpy as np

from labelembed import _kernels
from labelembed.errors import BudgetExceededError, DimensionError, DomainError

__all__ = [
    "DecodeResult", "MultilabelDecodeResult", "decode", "decode_batch",
    "decode_labels", "decode_multilabel_exact", "decode_multilabel_greedy",
    "decode_multilabel", "MultilabelCodebook", "lex_key", "DEFAULT_BUDGET",
]

DEFAULT_BUDGET = 10 ** 6


@dataclass(frozen=True)
class DecodeResult:
    """Decoded class (0-based), squared distance, and the runner-up."""

    label: int
    distance_sq: float
    runner_up: Optional[Tuple[int, float]] = None


@dataclass(frozen=True, eq=False)
class MultilabelDecodeResult:
    labelvec: np.ndarray
    distance_sq: float

    @property
    def active(self):
        return tuple(int(c) for c in np.flatnonzero(self.labelvec))

    def __eq__(self, other):
        if not isinstance(other, MultilabelDecodeResult):
            return NotImplemented
        return (np.array_equal(self.labelvec, other.labelvec)
                and self.distance_sq == other.distance_sq)

    __hash__ = None


def _as_queries(P, matrix):
    P = np.ascontiguousarray(P, dtype=np.float64)
    if P.ndim == 1:
        P = P[None, :]
    if P.ndim != 2 or P.shape[1] != matrix.embed_dim:
        raise DimensionError("queries must have length n=%d" % matrix.embed_dim)
    return P


def _decode_block(P, matrix):
    cols = matrix.columns
    best, _, second, _ = _kernels.decode_keys(P, cols, matrix.half_sq_norms)
    return (best, _kernels.sq_dist_rows(P, cols, best),
            second, _kernels.sq_dist_rows(P, cols, second))


def _decode_arrays(P, matrix, workers):
    P = _as_queries(P, matrix)
    m = P.shape[0]
    if workers <= 1 or m < 2 * workers:
        return _decode_block(P, matrix)
    bounds = np.linspace(0, m, workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda ab: _decode_block(P[ab[0]:ab[1]], matrix),
                              zip(bounds[:-1], bounds[1:])))
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(4))


def decode(p, matrix):
    """Nearest embedding column to ``p`` (smallest index on ties)."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise DimensionError("decode expects a single vector")
    best, dist, second, dist2 = _decode_arrays(p, matrix, 1)
    runner = None if second[0] < 0 else (int(second[0]), float(dist2[0]))
    return DecodeResult(int(best[0]), float(dist[0]), runner)


def decode_batch(P, matrix, workers=1):
    """``[decode(p) for p in P]``, data-parallel over queries."""
    if len(P) == 0:
        return []
    best, dist, second, dist2 = _decode_arrays(P, matrix, workers)
    return [DecodeResult(int(b), float(d), None if s < 0 else (int(s), float(d2)))
            for b, d, s, d2 in zip(best, dist, second, dist2)]


def decode_labels(P, matrix, workers=1):
    """Array form of :func:`decode_batch`: ``(labels, distance_sq)``."""
    if len(P) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    best, dist, _, _ = _decode_arrays(P, matrix, workers)
    return best, dist


# -- multilabel --------------------------------------------------------------

def lex_key(active, num_classes):
    """Sort key realising the label-vector order used for tie-breaking."""
    return tuple(sorted(active)) + (num_classes,)


def candidate_count(num_classes, max_labels):
    return sum(math.comb(num_classes, k) for k in range(0, max_labels + 1))


class MultilabelCodebook:
    """All label vectors with at most K ones, in tie-breaking order.

    ``points[r]`` is ``G y_r``; ``indicators[r]`` is the binary vector ``y_r``.
    """

    def __init__(self, matrix, max_labels, budget=DEFAULT_BUDGET):
        C = matrix.num_classes
        if max_labels < 0:
            raise DomainError("K must be non-negative")
        K = min(int(max_labels), C)
        total = candidate_count(C, K)
        if total > budget:
            raise BudgetExceededError(
                "%d candidate label vectors exceed the enumeration budget %d; "
                "use the greedy decoder" % (total, budget))
        sets = [s for k in range(K + 1) for s in combinations(range(C), k)]
        sets.sort(key=lambda s: lex_key(s, C))
        self.matrix = matrix
        self.max_labels = int(max_labels)
        self.sets = sets
        self.indicators = np.zeros((len(sets), C), dtype=np.int8)
        for r, s in enumerate(sets):
            self.indicators[r, list(s)] = 1
        self.points = self.indicators.astype(np.float64) @ matrix.columns

    def __len__(self):
        return len(self.sets)

    def nearest(self, p):
        """Row index of the first candidate at minimal distance, and distance."""
        d = np.sum((self.points - p) ** 2, axis=1)
        r = int(np.argmin(d))
        return r, float(d[r])

    def nearest_batch(self, P):
        out = np.empty(P.shape[0], dtype=np.int64)
        dist = np.empty(P.shape[0])
        for q in range(P.shape[0]):
            out[q], dist[q] = self.nearest(P[q])
        return out, dist


def _check_query(p, matrix):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] != matrix.embed_dim:
        raise DimensionError("query must have length n=%d" % matrix.embed_dim)
    return p


def decode_multilabel_exact(p, matrix, max_labels, budget=DEFAULT_BUDGET,
                            codebook=None):
    """Exhaustive nearest ``G y`` over label vectors with at most K ones."""
    p = _check_query(p, matrix)
    if codebook is None:
        codebook = MultilabelCodebook(matrix, max_labels, budget)
    r, dist = codebook.nearest(p)
    return MultilabelDecodeResult(codebook.indicators[r].copy(), dist)


def decode_multilabel_greedy(p, matrix, max_labels):
    """Greedy forward selection of label columns.

    Adds the column that most reduces ``|p - G y|`` until K labels are active
    or no column reduces it further. Never better than the exact decoder.
    """
    p = _check_query(p, matrix)
    cols = matrix.columns
    C = matrix.num_classes
    y = np.zeros(C, dtype=np.int8)
    resid = p.copy()
    current = float(resid @ resid)
    for _ in range(min(max_labels, C)):
        trial = current - 2.0 * (cols @ resid) + 2.0 * matrix.half_sq_norms
        trial[y == 1] = np.inf
        c = int(np.argmin(trial))
        if not trial[c] < current:
            break
        y[c] = 1
        resid = resid - cols[c]
        current = float(resid @ resid)
    return MultilabelDecodeResult(y, current)


def decode_multilabel(p, matrix, max_labels, budget=DEFAULT_BUDGET):
    """Exact decoder within the enumeration budget, greedy beyond it."""
    if candidate_count(matrix.num_classes, min(max_labels, matrix.num_classes)) <= budget:
        return decode_multilabel_exact(p, matrix, max_labels, budget)
    return decode_multilabel_greedy(p, matrix, max_labels)
