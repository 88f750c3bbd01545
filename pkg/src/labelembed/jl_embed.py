"""Johnson-Lindenstrauss label embeddings.

Class ``i`` (0-based internally) is represented by the column ``g_i`` of an
``n x C`` random matrix. The columns are stored row-wise as a ``(C, n)`` array
so ``matrix.columns[i]`` is always the embedding of class ``i``.
"""

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from labelembed import _kernels
from labelembed.errors import (ArtifactError, DimensionError, DomainError,
                               LabelRangeError, SparsityError)

__all__ = [
    "EmbeddingMatrix", "JlpReport", "sample_matrix", "sample_gram_matrix",
    "suggest_dim", "verify_jlp", "verify_jlp_family", "embed_dataset",
    "embed_labelvec", "save_matrix", "load_matrix", "matrix_to_json",
    "matrix_from_json", "KINDS",
]

KINDS = ("gaussian", "rademacher", "gram")
_KIND_CODE = {k: i for i, k in enumerate(KINDS)}

MAGIC = b"JLEM"
VERSION = 1
_HEADER = struct.Struct("<4sIQQBQ")

# Above this many classes the full Gram matrix is not formed; pairs are sampled.
EXHAUSTIVE_CLASS_LIMIT = 20000


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Immutable set of C label embeddings in R^n.

    Attributes
    ----------
    columns : ndarray of shape (C, n)
        ``columns[i]`` embeds class ``i``.
    kind : str
        One of ``KINDS``.
    seed : int
        Unsigned 64-bit seed the columns were generated from.
    """

    columns: np.ndarray
    kind: str
    seed: int
    _half_norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cols = np.ascontiguousarray(self.columns, dtype=np.float64)
        if cols.ndim != 2 or cols.shape[0] < 1 or cols.shape[1] < 1:
            raise DimensionError("columns must be a non-empty (C, n) array")
        if self.kind not in _KIND_CODE:
            raise DomainError("unknown matrix kind %r" % (self.kind,))
        if not np.all(np.isfinite(cols)):
            raise DomainError("embedding entries must be finite")
        if cols is self.columns:
            cols = cols.copy()
        cols.setflags(write=False)
        half = _kernels.half_sq_norms(cols)
        half.setflags(write=False)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "seed", int(self.seed) & 0xFFFFFFFFFFFFFFFF)
        object.__setattr__(self, "_half_norms", half)

    @property
    def num_classes(self):
        return self.columns.shape[0]

    @property
    def embed_dim(self):
        return self.columns.shape[1]

    @property
    def G(self):
        """The ``n x C`` matrix whose columns are the embeddings."""
        return self.columns.T

    @property
    def half_sq_norms(self):
        return self._half_norms

    def __eq__(self, other):
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return (self.kind == other.kind and self.seed == other.seed
                and self.columns.shape == other.columns.shape
                and np.array_equal(self.columns, other.columns))

    __hash__ = None


@dataclass(frozen=True)
class JlpReport:
    epsilon_observed: float
    pairs_tested: int
    epsilon_target: float
    exhaustive: bool = True

    @property
    def passed(self):
        return self.epsilon_observed <= self.epsilon_target


def _rng(seed):
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def _gaussian(rng, size):
    # Box-Muller on the generator's uniforms; u1 in (0, 1] keeps log finite.
    u1 = 1.0 - rng.random(size)
    u2 = rng.random(size)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def sample_matrix(num_classes, embed_dim, kind="rademacher", seed=0):
    """Draw a random C x n embedding with i.i.d. entries.

    Parameters
    ----------
    num_classes : int
        Number of classes C (>= 2).
    embed_dim : int
        Embedding dimension n (>= 1).
    kind : {"gaussian", "rademacher"}
        Gaussian entries have mean 0 and variance 1/n. Rademacher entries are
        +-1/sqrt(n) with equal probability, so every column has unit norm.
    seed : int
        Seed for a counter-based (Philox) generator. The output is a pure
        function of ``(num_classes, embed_dim, kind, seed)``.
    """
    num_classes, embed_dim = int(num_classes), int(embed_dim)
    if num_classes < 2:
        raise DimensionError("num_classes must be >= 2, got %d" % num_classes)
    if embed_dim < 1:
        raise DimensionError("embed_dim must be >= 1, got %d" % embed_dim)
    kind = kind.lower()
    rng = _rng(seed)
    scale = 1.0 / math.sqrt(embed_dim)
    shape = (num_classes, embed_dim)
    if kind == "gaussian":
        cols = _gaussian(rng, shape) * scale
    elif kind == "rademacher":
        signs = rng.integers(0, 2, size=shape, dtype=np.int8)
        cols = np.where(signs == 1, scale, -scale)
    else:
        raise DomainError("sample_matrix kind must be gaussian or rademacher, "
                          "got %r" % (kind,))
    return EmbeddingMatrix(cols, kind, seed)


def sample_gram_matrix(num_classes, embed_dim, coherence, seed=0):
    """Random embedding whose Gram matrix is prescribed to be ``I + E``.

    ``E`` is symmetric with zero diagonal and off-diagonal entries uniform in
    ``[-coherence, coherence]``; the columns are ``Q L^T`` for a random
    orthonormal ``Q`` and the Cholesky factor ``L`` of ``I + E``. The observed
    JLP epsilon on the standard basis is therefore ``max |E|`` (up to
    rounding), which lets bounds that need a small epsilon be exercised at
    embedding dimensions where i.i.d. draws would not qualify. Needs C <= n.
    """
    num_classes, embed_dim = int(num_classes), int(embed_dim)
    if num_classes < 2:
        raise DimensionError("num_classes must be >= 2, got %d" % num_classes)
    if embed_dim < num_classes:
        raise DimensionError("gram construction needs embed_dim >= num_classes "
                             "(%d < %d)" % (embed_dim, num_classes))
    if not 0.0 <= coherence < 1.0:
        raise DomainError("coherence must lie in [0, 1)")
    rng = _rng(seed)
    Z = _gaussian(rng, (embed_dim, num_classes))
    Q, R = np.linalg.qr(Z)
    Q = Q * np.where(np.diag(R) < 0, -1.0, 1.0)
    U = rng.uniform(-coherence, coherence, size=(num_classes, num_classes))
    E = np.triu(U, 1)
    E = E + E.T
    # keep I + E comfortably positive definite
    lam = np.linalg.eigvalsh(E)[0]
    if 1.0 + lam < 0.1:
        E *= 0.9 / -lam
    L = np.linalg.cholesky(np.eye(num_classes) + E)
    cols = (Q @ L.T).T
    return EmbeddingMatrix(cols, "gram", seed)


def suggest_dim(num_classes, epsilon, delta, c0=4.0):
    """Embedding dimension ``ceil(c0 / epsilon^2 * ln(C / delta))``, at least 1."""
    if not 0.0 < epsilon <= 1.0:
        raise DomainError("epsilon must lie in (0, 1], got %r" % (epsilon,))
    if not 0.0 < delta <= 1.0:
        raise DomainError("delta must lie in (0, 1], got %r" % (delta,))
    if not c0 > 0.0:
        raise DomainError("c0 must be positive, got %r" % (c0,))
    if not num_classes > 0:
        raise DomainError("num_classes must be positive")
    value = (c0 / (epsilon * epsilon)) * math.log(num_classes / delta)
    return max(1, int(math.ceil(value)))


def verify_jlp(matrix, epsilon_target, sample_pairs=200000, seed=0):
    """Check approximate orthonormality of the embedding columns.

    ``epsilon_observed = max(max_i | |g_i|^2 - 1 |, max_{i<j} |<g_i, g_j>|)``.
    The check is exhaustive (blockwise Gram matrix) for up to
    ``EXHAUSTIVE_CLASS_LIMIT`` classes and samples ``sample_pairs`` off-diagonal
    pairs beyond that.
    """
    cols = matrix.columns
    C = cols.shape[0]
    norms = 2.0 * matrix.half_sq_norms
    worst = float(np.max(np.abs(norms - 1.0)))
    if C <= EXHAUSTIVE_CLASS_LIMIT:
        block = 2048
        for start in range(0, C, block):
            stop = min(C, start + block)
            gram = cols[start:stop] @ cols[start:].T
            # zero the diagonal and the lower triangle within the block
            gram[np.tril_indices(stop - start, 0, gram.shape[1])] = 0.0
            if gram.size:
                worst = max(worst, float(np.max(np.abs(gram))))
        pairs = C + C * (C - 1) // 2
        exhaustive = True
    else:
        rng = _rng(seed)
        i = rng.integers(0, C, size=sample_pairs)
        j = rng.integers(0, C - 1, size=sample_pairs)
        j = j + (j >= i)
        dots = np.einsum("ij,ij->i", cols[i], cols[j])
        worst = max(worst, float(np.max(np.abs(dots))))
        pairs = C + sample_pairs
        exhaustive = False
    return JlpReport(worst, pairs, float(epsilon_target), exhaustive)


def verify_jlp_family(matrix, vectors, epsilon_target):
    """JLP check on an arbitrary finite family of vectors in R^C.

    Returns the smallest epsilon with
    ``|<Gv, Gv'> - <v, v'>| <= epsilon |v| |v'|`` for all pairs (including
    ``v = v'``) of nonzero rows of ``vectors``.
    """
    V = np.asarray(vectors, dtype=np.float64)
    if V.ndim != 2 or V.shape[1] != matrix.num_classes:
        raise DimensionError("family vectors must have length C")
    lengths = np.linalg.norm(V, axis=1)
    V = V[lengths > 0]
    lengths = lengths[lengths > 0]
    if V.shape[0] == 0:
        return JlpReport(0.0, 0, float(epsilon_target))
    GV = V @ matrix.columns
    dev = np.abs(GV @ GV.T - V @ V.T) / np.outer(lengths, lengths)
    m = V.shape[0]
    return JlpReport(float(dev.max()), m * (m + 1) // 2, float(epsilon_target))


def embed_dataset(data, matrix):
    """Replace every class label by its embedding column.

    The feature matrix of ``data`` is shared with the returned dataset.
    """
    from labelembed.dataio import RegressionDataset

    y = np.asarray(data.labels, dtype=np.int64)
    bad = np.flatnonzero((y < 0) | (y >= matrix.num_classes))
    if bad.size:
        r = int(bad[0])
        raise LabelRangeError("label %d outside 1..%d"
                              % (int(y[r]) + 1, matrix.num_classes), row=r)
    targets = matrix.columns[y] if y.size else np.zeros((0, matrix.embed_dim))
    return RegressionDataset(data.X, np.ascontiguousarray(targets))


def embed_labelvec(labelvec, matrix, max_labels=None):
    """Sum of the embedding columns of the active labels, ``G @ labelvec``."""
    v = np.asarray(labelvec)
    if v.ndim != 1 or v.shape[0] != matrix.num_classes:
        raise DimensionError("label vector must have length C=%d"
                             % matrix.num_classes)
    active = np.flatnonzero(v)
    if max_labels is not None and active.size > max_labels:
        raise SparsityError("label vector has %d active labels, K=%d"
                            % (active.size, max_labels))
    if not np.all((v == 0) | (v == 1)):
        raise DomainError("label vector must be binary")
    out = np.zeros(matrix.embed_dim)
    for c in active:
        out += matrix.columns[c]
    return out


def embed_multilabel_dataset(data, matrix):
    """Targets ``G y_i`` for a ``MultilabelDataset``."""
    from labelembed.dataio import RegressionDataset

    targets = np.zeros((data.num_rows, matrix.embed_dim))
    for i, active in enumerate(data.labelsets):
        if len(active) > data.max_labels:
            raise SparsityError("row %d has %d labels, K=%d"
                                % (i, len(active), data.max_labels))
        for c in active:
            if not 0 <= c < matrix.num_classes:
                raise LabelRangeError("label %d outside 1..%d"
                                      % (c + 1, matrix.num_classes), row=i)
            targets[i] += matrix.columns[c]
    return RegressionDataset(data.X, targets)


# -- persistence -------------------------------------------------------------

def matrix_to_bytes(matrix):
    header = _HEADER.pack(MAGIC, VERSION, matrix.num_classes, matrix.embed_dim,
                          _KIND_CODE[matrix.kind], matrix.seed)
    return header + matrix.columns.astype("<f8").tobytes(order="C")


def matrix_from_bytes(buf):
    if len(buf) < _HEADER.size:
        raise ArtifactError("matrix file truncated (no header)")
    magic, version, C, n, kind, seed = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ArtifactError("not a matrix file (magic %r)" % (magic,))
    if version != VERSION:
        raise ArtifactError("unsupported matrix file version %d" % version)
    if kind >= len(KINDS):
        raise ArtifactError("unknown matrix kind code %d" % kind)
    expected = _HEADER.size + 8 * C * n
    if len(buf) != expected:
        raise ArtifactError("matrix file has %d bytes, expected %d"
                            % (len(buf), expected))
    cols = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size).reshape(C, n)
    return EmbeddingMatrix(cols.astype(np.float64), KINDS[kind], seed)


def save_matrix(matrix, path):
    from labelembed.dataio import atomic_write_bytes
    atomic_write_bytes(path, matrix_to_bytes(matrix))


def load_matrix(path):
    with open(path, "rb") as fh:
        return matrix_from_bytes(fh.read())


def matrix_to_json(matrix):
    return json.dumps({
        "magic": "JLEM", "version": VERSION,
        "num_classes": matrix.num_classes, "embed_dim": matrix.embed_dim,
        "kind": matrix.kind, "seed": matrix.seed,
        "columns": matrix.columns.tolist(),
    })


def matrix_from_json(text):
    d = json.loads(text)
    if d.get("magic") != "JLEM" or d.get("version") != VERSION:
        raise ArtifactError("not a version-%d JLEM json export" % VERSION)
    cols = np.asarray(d["columns"], dtype=np.float64)
    if cols.shape != (d["num_classes"], d["embed_dim"]):
        raise ArtifactError("column block does not match header dimensions")
    return EmbeddingMatrix(cols, d["kind"], d["seed"])


def standard_basis_matrix(num_classes):
    """Identity embedding (one-vs-all)."""
    return EmbeddingMatrix(np.eye(num_classes), "gram", 0)
