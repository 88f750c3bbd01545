"""Embed labels, fit the regressor, decode predictions."""

import numpy as np

from labelembed.dataio import MultilabelDataset
from labelembed.decode import MultilabelCodebook, decode_labels, decode_multilabel_greedy
from labelembed.errors import BudgetExceededError
from labelembed.jl_embed import (
    embed_dataset, embed_multilabel_dataset, standard_basis_matrix,
)
from labelembed.regress import TRAINERS, TrainConfig, predict_batch

__all__ = ["fit", "fit_one_vs_all", "predict_labels", "predict_labelsets"]


def fit(data, matrix, config=None, trainer="linear"):
    """Regress features onto the embedded labels of ``data``."""
    config = config or TrainConfig()
    if isinstance(data, MultilabelDataset):
        targets = embed_multilabel_dataset(data, matrix)
    else:
        targets = embed_dataset(data, matrix)
    return TRAINERS[trainer](targets, config)


def fit_one_vs_all(data, config=None):
    """Least-squares one-vs-all baseline: the embedding is the identity.

    Decoding the identity embedding picks the largest score, so the same
    decoder serves both pipelines.
    """
    matrix = standard_basis_matrix(data.num_classes)
    return matrix, fit(data, matrix, config)


def predict_labels(model, matrix, X, workers=1):
    """0-based class predictions and their squared decode distances."""
    P = predict_batch(model, X)
    return decode_labels(P, matrix, workers)


def predict_labelsets(model, matrix, X, max_labels, budget=10 ** 6):
    """Label sets from the exact decoder, or greedy beyond the budget.

    Returns a list of sorted 0-based label tuples and the squared distances.
    """
    P = predict_batch(model, X)
    try:
        book = MultilabelCodebook(matrix, max_labels, budget)
    except BudgetExceededError:
        book = None
    out, dist = [], np.empty(P.shape[0])
    for i, p in enumerate(P):
        if book is not None:
            r, dist[i] = book.nearest(p)
            out.append(tuple(book.sets[r]))
        else:
            res = decode_multilabel_greedy(p, matrix, max_labels)
            out.append(res.active)
            dist[i] = res.distance_sq
    return out, dist
