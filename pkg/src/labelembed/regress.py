"""Multi-output elastic-net regression by cyclic coordinate descent.

Each of the n output columns is an independent problem

    1/2 sum_i (<w_j, x_i> + b_j - t_ij)^2 + l1 |w_j|_1 + l2 |w_j|_2^2

so the columns are solved in a fork-join pool with no shared mutable state.
A column's result depends only on its own inputs, hence the fitted model is
bitwise identical for every worker count.
"""

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np
from scipy import sparse

from labelembed import _kernels
from labelembed.errors import ArtifactError, DimensionError, DomainError, NonFiniteError

__all__ = [
    "TrainConfig", "LinearModel", "Regressor", "train", "predict",
    "predict_batch", "surrogate_risk", "save_model", "load_model",
    "model_to_json", "TRAINERS",
]

MAGIC = b"JLLM"
VERSION = 1
_HEADER = struct.Struct("<4sIQQI")
_PARAMS = struct.Struct("<ddQ")
FLAG_BIAS = 1
FLAG_SCALED = 2


@dataclass(frozen=True)
class TrainConfig:
    lambda1: float = 0.0
    lambda2: float = 0.0
    max_iters: int = 50
    tolerance: float = 1e-5
    workers: int = 1
    fit_bias: bool = False
    normalize: bool = False

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise DomainError("penalties must be non-negative")
        if not self.tolerance > 0:
            raise DomainError("tolerance must be positive")
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")
        if self.workers < 1:
            raise DomainError("workers must be >= 1")


class Regressor(Protocol):
    """What the pipeline needs from a trained regressor."""

    num_features: int
    output_dim: int

    def predict(self, features) -> np.ndarray: ...

    def predict_batch(self, X) -> np.ndarray: ...


@dataclass(eq=False)
class LinearModel:
    """Linear map R^D -> R^n, ``x -> W^T x + b``.

    ``weights`` has shape ``(D, n)`` and lives in the original feature space
    even when training used per-feature scaling; ``feature_scale`` then
    records the column norms that were divided out.
    """

    weights: np.ndarray
    bias: Optional[np.ndarray] = None
    lambda1: float = 0.0
    lambda2: float = 0.0
    iterations_run: int = 0
    feature_scale: Optional[np.ndarray] = None
    objective_traces: Optional[list] = field(default=None, repr=False)

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise DimensionError("weights must be a (D, n) array")
        if not np.all(np.isfinite(self.weights)):
            raise NonFiniteError("model weights must be finite")
        if self.bias is not None:
            self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.output_dim,):
                raise DimensionError("bias must have length n")

    @property
    def num_features(self):
        return self.weights.shape[0]

    @property
    def output_dim(self):
        return self.weights.shape[1]

    def predict(self, features):
        return predict(self, features)

    def predict_batch(self, X):
        return predict_batch(self, X)

    def __eq__(self, other):
        if not isinstance(other, LinearModel):
            return NotImplemented
        return model_to_bytes(self) == model_to_bytes(other)

    __hash__ = None


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("%s contains NaN or infinite values" % name)


def train(data, config=None, record_objective=False):
    """Fit one elastic-net column per output dimension.

    Parameters
    ----------
    data : RegressionDataset
    config : TrainConfig
    record_objective : bool
        Keep the per-sweep objective of every column in
        ``model.objective_traces`` (used to check monotone descent).
    """
    config = config or TrainConfig()
    X = sparse.csc_matrix(data.X, dtype=np.float64)
    X.sort_indices()
    T = np.asarray(data.targets, dtype=np.float64)
    if X.shape[0] == 0:
        raise DimensionError("cannot train on an empty dataset")
    if T.ndim != 2 or T.shape[0] != X.shape[0]:
        raise DimensionError("targets must be (N, n) with N = %d" % X.shape[0])
    _check_finite("features", X.data)
    _check_finite("targets", T)

    indptr = X.indptr.astype(np.int64)
    indices = X.indices.astype(np.int64)
    data_ = X.data.copy()
    sqnorm = np.asarray(X.multiply(X).sum(axis=0)).ravel()
    scale = None
    if config.normalize:
        scale = np.sqrt(sqnorm)
        scale[scale == 0] = 1.0
        data_ = data_ / np.repeat(scale, np.diff(indptr))
        sqnorm = np.zeros_like(sqnorm)
        np.add.at(sqnorm, np.repeat(np.arange(X.shape[1]), np.diff(indptr)),
                  data_ * data_)
    D, n = X.shape[1], T.shape[1]
    columns = [np.ascontiguousarray(T[:, j]) for j in range(n)]

    def solve(j):
        return _kernels.cd_elastic_net(
            indptr, indices, data_, sqnorm, columns[j], float(config.lambda1),
            float(config.lambda2), int(config.max_iters),
            float(config.tolerance), bool(config.fit_bias),
            bool(record_objective))

    if config.workers == 1 or n == 1:
        results = [solve(j) for j in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(solve, range(n)))

    W = np.empty((D, n))
    b = np.empty(n)
    sweeps = 0
    traces = [] if record_objective else None
    for j, (w, bj, it, trace) in enumerate(results):
        W[:, j] = w
        b[j] = bj
        sweeps = max(sweeps, int(it))
        if record_objective:
            traces.append(trace)
    if scale is not None:
        W /= scale[:, None]
    return LinearModel(W, b if config.fit_bias else None, config.lambda1,
                       config.lambda2, sweeps, scale, traces)


def _as_csr_rows(model, X):
    X = sparse.csr_matrix(X, dtype=np.float64)
    if X.shape[1] > model.num_features:
        extra = X.indices[X.indices >= model.num_features] if X.nnz else []
        if len(extra):
            raise DimensionError("feature index %d out of range for D=%d"
                                 % (int(np.max(extra)), model.num_features))
        X = X[:, :model.num_features]
    elif X.shape[1] < model.num_features:
        X = sparse.csr_matrix((X.data, X.indices, X.indptr),
                              shape=(X.shape[0], model.num_features))
    X.sort_indices()
    return X


def predict_batch(model, X):
    """``W^T x_i (+ b)`` for every row of a sparse or dense matrix."""
    X = _as_csr_rows(model, X)
    bias = model.bias if model.bias is not None else np.zeros(model.output_dim)
    return _kernels.sparse_matmul_rows(
        X.indptr.astype(np.int64), X.indices.astype(np.int64), X.data,
        model.weights, bias, model.bias is not None)


def predict(model, features):
    """Prediction for one example.

    ``features`` is a sparse row, a dense vector of length D, or a sequence
    of ``(index, value)`` pairs with 0-based indices.
    """
    if sparse.issparse(features):
        row = features
    elif isinstance(features, np.ndarray) and features.ndim == 1:
        if features.shape[0] != model.num_features:
            raise DimensionError("dense feature vector must have length D=%d"
                                 % model.num_features)
        row = sparse.csr_matrix(features[None, :])
    else:
        pairs = list(features)
        idx = np.array([int(k) for k, _ in pairs], dtype=np.int64)
        val = np.array([float(v) for _, v in pairs], dtype=np.float64)
        if idx.size and (idx.min() < 0 or idx.max() >= model.num_features):
            raise DimensionError("feature index out of range for D=%d"
                                 % model.num_features)
        order = np.argsort(idx, kind="stable")
        row = sparse.csr_matrix((val[order], idx[order], [0, idx.size]),
                                shape=(1, model.num_features))
    return predict_batch(model, row)[0]


def surrogate_risk(model, data):
    """Empirical mean of ``1/2 |f(x_i) - t_i|^2``."""
    if data.num_rows == 0:
        raise DomainError("surrogate risk of an empty dataset is undefined")
    if data.targets.shape[1] != model.output_dim:
        raise DimensionError("target dimension %d != model output %d"
                             % (data.targets.shape[1], model.output_dim))
    P = predict_batch(model, data.X)
    return float(0.5 * np.mean(np.sum((P - data.targets) ** 2, axis=1)))


TRAINERS = {"linear": train}


# -- persistence -------------------------------------------------------------

def model_to_bytes(model):
    flags = 0
    if model.bias is not None:
        flags |= FLAG_BIAS
    if model.feature_scale is not None:
        flags |= FLAG_SCALED
    parts = [
        _HEADER.pack(MAGIC, VERSION, model.num_features, model.output_dim, flags),
        _PARAMS.pack(float(model.lambda1), float(model.lambda2),
                     int(model.iterations_run)),
        model.weights.astype("<f8").tobytes(order="C"),
    ]
    if model.bias is not None:
        parts.append(model.bias.astype("<f8").tobytes())
    if model.feature_scale is not None:
        parts.append(np.asarray(model.feature_scale).astype("<f8").tobytes())
    return b"".join(parts)


def model_from_bytes(buf):
    if len(buf) < _HEADER.size + _PARAMS.size:
        raise ArtifactError("model file truncated (incomplete header)")
    magic, version, D, n, flags = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ArtifactError("not a model file (magic %r)" % (magic,))
    if version != VERSION:
        raise ArtifactError("unsupported model file version %d" % version)
    l1, l2, iters = _PARAMS.unpack_from(buf, _HEADER.size)
    offset = _HEADER.size + _PARAMS.size
    expected = offset + 8 * D * n
    if flags & FLAG_BIAS:
        expected += 8 * n
    if flags & FLAG_SCALED:
        expected += 8 * D
    if len(buf) != expected:
        raise ArtifactError("model file has %d bytes, expected %d"
                            % (len(buf), expected))
    W = np.frombuffer(buf, "<f8", D * n, offset).reshape(D, n).astype(np.float64)
    offset += 8 * D * n
    bias = scale = None
    if flags & FLAG_BIAS:
        bias = np.frombuffer(buf, "<f8", n, offset).astype(np.float64)
        offset += 8 * n
    if flags & FLAG_SCALED:
        scale = np.frombuffer(buf, "<f8", D, offset).astype(np.float64)
    return LinearModel(W, bias, l1, l2, int(iters), scale)


def save_model(model, path):
    from labelembed.dataio import atomic_write_bytes
    atomic_write_bytes(path, model_to_bytes(model))


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())


def model_to_json(model):
    return json.dumps({
        "magic": "JLLM", "version": VERSION,
        "num_features": model.num_features, "output_dim": model.output_dim,
        "lambda1": model.lambda1, "lambda2": model.lambda2,
        "iterations_run": model.iterations_run,
        "weights": model.weights.tolist(),
        "bias": None if model.bias is None else model.bias.tolist(),
    })
