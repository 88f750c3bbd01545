"""Sparse classification datasets: svmlight I/O, synthetic data, splits.

Labels and feature indices are 1-based in files and 0-based in memory; the
parser and the writers are the only places that convert between the two.
"""

import io
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from labelembed.errors import DataError, DimensionError, DomainError, LabelRangeError

logger = logging.getLogger(__name__)

__all__ = [
    "SparseDataset", "MultilabelDataset", "RegressionDataset",
    "parse_svmlight", "parse_multilabel", "load_svmlight", "write_svmlight",
    "synth_blobs", "split", "evaluate_accuracy", "class_counts", "dataset_stats",
    "atomic_write_bytes", "atomic_write_text",
]


def _empty_csr(num_features):
    return sparse.csr_matrix((0, num_features), dtype=np.float64)


@dataclass(frozen=True, eq=False)
class SparseDataset:
    """Rows of sparse features with one class label each.

    ``X`` is an ``N x D`` CSR matrix with sorted indices; ``labels`` holds
    0-based class ids.
    """

    X: sparse.csr_matrix
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or labels.shape[0] != self.X.shape[0]:
            raise DimensionError("need one label per row")
        bad = np.flatnonzero((labels < 0) | (labels >= self.num_classes))
        if bad.size:
            r = int(bad[0])
            raise LabelRangeError("label %d outside 1..%d"
                                  % (labels[r] + 1, self.num_classes), row=r)
        object.__setattr__(self, "labels", labels)

    @property
    def num_rows(self):
        return self.X.shape[0]

    @property
    def num_features(self):
        return self.X.shape[1]

    def rows(self):
        """Yield ``(label, [(index, value), ...])`` with 0-based ids."""
        X = self.X
        for i in range(X.shape[0]):
            lo, hi = X.indptr[i], X.indptr[i + 1]
            yield int(self.labels[i]), list(zip(X.indices[lo:hi].tolist(),
                                                X.data[lo:hi].tolist()))

    def take(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return SparseDataset(self.X[idx], self.labels[idx], self.num_classes)

    def __eq__(self, other):
        if not isinstance(other, SparseDataset):
            return NotImplemented
        return (self.num_classes == other.num_classes
                and self.X.shape == other.X.shape
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.X.indptr, other.X.indptr)
                and np.array_equal(self.X.indices, other.X.indices)
                and np.array_equal(self.X.data, other.X.data))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class MultilabelDataset:
    """Rows of sparse features, each with a sorted set of at most K labels."""

    X: sparse.csr_matrix
    labelsets: tuple
    num_classes: int
    max_labels: int

    def __post_init__(self):
        sets = tuple(tuple(int(c) for c in s) for s in self.labelsets)
        if len(sets) != self.X.shape[0]:
            raise DimensionError("need one label set per row")
        for i, s in enumerate(sets):
            if any(b <= a for a, b in zip(s, s[1:])):
                raise DataError("row %d: label indices must be strictly "
                                "increasing" % i)
            if len(s) > self.max_labels:
                raise DataError("row %d: %d labels exceed K=%d"
                                % (i, len(s), self.max_labels))
            if s and (s[0] < 0 or s[-1] >= self.num_classes):
                raise LabelRangeError("label outside 1..%d" % self.num_classes,
                                      row=i)
        object.__setattr__(self, "labelsets", sets)

    @property
    def num_rows(self):
        return self.X.shape[0]

    @property
    def num_features(self):
        return self.X.shape[1]

    def take(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return MultilabelDataset(self.X[idx],
                                 tuple(self.labelsets[i] for i in idx),
                                 self.num_classes, self.max_labels)

    def label_matrix(self):
        """Dense ``N x C`` binary indicator matrix."""
        Y = np.zeros((self.num_rows, self.num_classes), dtype=np.int8)
        for i, s in enumerate(self.labelsets):
            Y[i, list(s)] = 1
        return Y


@dataclass(frozen=True, eq=False)
class RegressionDataset:
    """Features (shared, not copied) and real-valued targets ``N x n``."""

    X: sparse.csr_matrix
    targets: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.targets, dtype=np.float64)
        if T.ndim != 2 or T.shape[0] != self.X.shape[0]:
            raise DimensionError("targets must be an (N, n) array matching X")
        object.__setattr__(self, "targets", T)

    @property
    def num_rows(self):
        return self.X.shape[0]

    @property
    def output_dim(self):
        return self.targets.shape[1]


# -- parsing -----------------------------------------------------------------

def _parse_features(tokens, lineno):
    idx, val = [], []
    prev = 0
    for tok in tokens:
        k, sep, v = tok.partition(":")
        if not sep:
            raise DataError("expected <index>:<value>, got %r" % tok, lineno)
        try:
            k = int(k)
            v = float(v)
        except ValueError:
            raise DataError("bad feature token %r" % tok, lineno) from None
        if k < 1:
            raise DataError("feature index must be >= 1, got %d" % k, lineno)
        if k <= prev:
            raise DataError("feature indices must be strictly increasing "
                            "(%d after %d)" % (k, prev), lineno)
        if not np.isfinite(v):
            raise DataError("non-finite feature value %r" % tok, lineno)
        prev = k
        idx.append(k - 1)
        val.append(v)
    return idx, val


def _parse_lines(lines, first_lineno, multilabel):
    labels, indptr, indices, values = [], [0], [], []
    for offset, raw in enumerate(lines):
        lineno = first_lineno + offset
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if multilabel:
            if line[0].isspace():
                head, rest = "", line
            else:
                head, _, rest = line.partition(" ")
            if ":" in head:
                head, rest = "", line
            try:
                lab = [int(t) for t in head.split(",")] if head else []
            except ValueError:
                raise DataError("bad label list %r" % head, lineno) from None
            if any(c < 1 for c in lab):
                raise DataError("labels must be >= 1", lineno)
            if any(b <= a for a, b in zip(lab, lab[1:])):
                raise DataError("label list must be strictly increasing", lineno)
            labels.append(tuple(c - 1 for c in lab))
            tokens = rest.split()
        else:
            tokens = line.split()
            try:
                lab = int(tokens[0])
            except ValueError:
                raise DataError("label must be an integer, got %r" % tokens[0],
                                lineno) from None
            if lab < 1:
                raise DataError("label must be >= 1, got %d" % lab, lineno)
            labels.append(lab - 1)
            tokens = tokens[1:]
        idx, val = _parse_features(tokens, lineno)
        indices.extend(idx)
        values.extend(val)
        indptr.append(len(indices))
    return labels, indptr, indices, values


def _parse_chunk(args):
    return _parse_lines(*args)


def _parse(text, multilabel, workers):
    if hasattr(text, "read"):
        text = text.read()
    lines = text.splitlines()
    if workers > 1 and len(lines) > 20000:
        bounds = np.linspace(0, len(lines), workers + 1).astype(int)
        jobs = [(lines[a:b], a + 1, multilabel)
                for a, b in zip(bounds[:-1], bounds[1:])]
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_parse_chunk, jobs))
    else:
        parts = [_parse_lines(lines, 1, multilabel)]
    labels, indptr, indices, values = [], [0], [], []
    for lab, ptr, idx, val in parts:
        base = indptr[-1]
        labels.extend(lab)
        indptr.extend(base + p for p in ptr[1:])
        indices.extend(idx)
        values.extend(val)
    return labels, indptr, indices, values


def _build_csr(indptr, indices, values, num_rows, num_features):
    D = (max(indices) + 1) if indices else 0
    if num_features is not None:
        if D > num_features:
            raise DataError("feature index %d exceeds num_features=%d"
                            % (D, num_features))
        D = num_features
    X = sparse.csr_matrix(
        (np.asarray(values, dtype=np.float64),
         np.asarray(indices, dtype=np.int32),
         np.asarray(indptr, dtype=np.int64)),
        shape=(num_rows, D))
    X.has_sorted_indices = True
    return X


def parse_svmlight(text, num_features=None, num_classes=None, workers=1):
    """Parse single-label svmlight/libsvm text.

    Each non-empty line is ``<label> <idx>:<val> ...`` with 1-based label and
    strictly increasing 1-based feature indices; ``#`` starts a comment.
    D defaults to the largest feature index and C to the largest label.
    """
    labels, indptr, indices, values = _parse(text, False, workers)
    C = max(labels) + 1 if labels else 0
    if num_classes is not None:
        if C > num_classes:
            raise LabelRangeError("label %d exceeds num_classes=%d"
                                  % (C, num_classes))
        C = num_classes
    X = _build_csr(indptr, indices, values, len(labels), num_features)
    return SparseDataset(X, np.asarray(labels, dtype=np.int64), C)


def parse_multilabel(text, max_labels=None, num_features=None,
                     num_classes=None, workers=1):
    """Parse multilabel svmlight text (``1,4,9 <idx>:<val> ...``)."""
    labels, indptr, indices, values = _parse(text, True, workers)
    C = max((s[-1] + 1 for s in labels if s), default=0)
    if num_classes is not None:
        if C > num_classes:
            raise LabelRangeError("label %d exceeds num_classes=%d"
                                  % (C, num_classes))
        C = num_classes
    K = max((len(s) for s in labels), default=0)
    if max_labels is not None:
        if K > max_labels:
            raise DataError("a row has %d labels, more than K=%d"
                            % (K, max_labels))
        K = max_labels
    X = _build_csr(indptr, indices, values, len(labels), num_features)
    return MultilabelDataset(X, tuple(labels), C, K)


def load_svmlight(path, multilabel=False, workers=1, **kwargs):
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if multilabel:
        return parse_multilabel(text, workers=workers, **kwargs)
    return parse_svmlight(text, workers=workers, **kwargs)


def _format_row(head, X, i):
    lo, hi = X.indptr[i], X.indptr[i + 1]
    feats = " ".join("%d:%r" % (k + 1, float(v))
                     for k, v in zip(X.indices[lo:hi], X.data[lo:hi]))
    return head + (" " + feats if feats else "")


def write_svmlight(data, fh=None):
    """Serialise a dataset; returns the text when ``fh`` is None.

    Values are written with ``repr`` so parsing the output reproduces the
    dataset exactly.
    """
    X = data.X.tocsr()
    X.sort_indices()
    out = io.StringIO() if fh is None else fh
    if isinstance(data, MultilabelDataset):
        for i, s in enumerate(data.labelsets):
            out.write(_format_row(",".join(str(c + 1) for c in s), X, i) + "\n")
    else:
        for i in range(X.shape[0]):
            out.write(_format_row(str(int(data.labels[i]) + 1), X, i) + "\n")
    if fh is None:
        return out.getvalue()
    return None


# -- synthetic data ----------------------------------------------------------

def synth_blobs(num_classes, num_features, per_class, noise=0.1, seed=0,
                density=0.02, threshold=None):
    """Gaussian blobs around sparse random class centres.

    Each class centre has ``max(1, round(density * D))`` nonzero coordinates
    drawn from N(0, 1). An example is its centre plus ``noise * N(0, I_D)``,
    and coordinates with magnitude at most ``threshold`` (default
    ``3 * noise``) are dropped to keep the rows sparse. Rows are ordered by
    class.
    """
    C, D = int(num_classes), int(num_features)
    if C < 2:
        raise DomainError("synth_blobs needs at least 2 classes")
    if D < 1 or per_class < 0 or noise < 0:
        raise DomainError("invalid synth_blobs parameters")
    if threshold is None:
        threshold = 3.0 * noise
    rng = np.random.Generator(np.random.Philox(int(seed)))
    active = max(1, int(round(density * D)))
    centres = np.zeros((C, D))
    for c in range(C):
        support = np.sort(rng.choice(D, size=active, replace=False))
        centres[c, support] = rng.standard_normal(active)
    labels = np.repeat(np.arange(C, dtype=np.int64), per_class)
    N = labels.size
    if N == 0:
        return SparseDataset(_empty_csr(D), labels, C)
    blocks = []
    chunk = 1024
    for start in range(0, N, chunk):
        lab = labels[start:start + chunk]
        rows = centres[lab]
        if noise > 0:
            rows = rows + noise * rng.standard_normal(rows.shape)
        rows[np.abs(rows) <= threshold] = 0.0
        blocks.append(sparse.csr_matrix(rows))
    X = sparse.vstack(blocks, format="csr")
    X.sort_indices()
    return SparseDataset(X, labels, C)


def split(data, test_fraction, seed=0):
    """Seeded disjoint partition into ``(train, test)``; row order is kept."""
    if not 0.0 <= test_fraction < 1.0:
        raise DomainError("test_fraction must lie in [0, 1)")
    N = data.num_rows
    n_test = int(np.floor(test_fraction * N + 0.5))
    rng = np.random.Generator(np.random.Philox(int(seed)))
    perm = rng.permutation(N)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    train, test = data.take(train_idx), data.take(test_idx)
    if isinstance(data, SparseDataset):
        logger.info("split: train class counts %s, test class counts %s",
                    class_counts(train).tolist(), class_counts(test).tolist())
    return train, test


def class_counts(data):
    return np.bincount(data.labels, minlength=data.num_classes)


def evaluate_accuracy(predictions, truth, num_classes=None):
    """Fraction of exact matches between predicted and true labels.

    With ``num_classes`` given, true labels at or beyond it (classes never
    seen in training) are rejected instead of being scored as errors.
    """
    p = np.asarray(predictions)
    t = np.asarray(truth)
    if p.shape != t.shape:
        raise DimensionError("predictions and truth differ in length "
                             "(%d vs %d)" % (p.size, t.size))
    if t.size == 0:
        raise DomainError("accuracy of an empty set is undefined")
    if num_classes is not None:
        unknown = np.flatnonzero(t >= num_classes)
        if unknown.size:
            r = int(unknown[0])
            raise LabelRangeError("test label %d unknown to a %d-class model"
                                  % (int(t[r]) + 1, num_classes), row=r)
    return float(np.mean(p == t))


def dataset_stats(data):
    N, D = data.X.shape
    nnz = data.X.nnz
    return {
        "rows": N, "features": D, "classes": data.num_classes,
        "nnz": int(nnz), "density": float(nnz / (N * D)) if N * D else 0.0,
    }


# -- atomic writes -----------------------------------------------------------

def atomic_write_bytes(path, payload):
    """Write via a temporary file in the target directory and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))
