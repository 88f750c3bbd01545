"""Exact conditional and integrated risks on finite-support distributions.

A model ``f`` is given as a table of shape ``(M, n)`` (one output per support
point) or as a callable ``point_index -> vector``.
"""

import numpy as np

from labelembed.decode import MultilabelCodebook, decode
from labelembed.errors import DimensionError, DomainError

__all__ = [
    "d_noise", "d_noise_all", "conditional_excess_01", "conditional_excess_sq",
    "conditional_sq_risk", "bayes_optimal_model", "model_table",
    "excess_01_risk", "excess_sq_risk", "bayes_risk_01", "hamming_loss",
    "multilabel_bayes_model", "multilabel_conditional_risks", "d_multilabel",
    "hamming_excess_risk",
]

_CLOSED_FORM_RTOL = 1e-9


def _point(dist, i):
    if not -dist.num_points <= i < dist.num_points:
        raise IndexError("point index %d out of range for M=%d" % (i, dist.num_points))
    return dist.eta[i]


def _query(p, matrix):
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (matrix.embed_dim,):
        raise DimensionError("output must have length n=%d" % matrix.embed_dim)
    return p


def _check_classes(dist, matrix):
    if dist.num_classes != matrix.num_classes:
        raise DimensionError("distribution has C=%d classes, matrix has %d"
                             % (dist.num_classes, matrix.num_classes))


def d_noise(dist, point_index):
    """Gap between the largest and second-largest class probability at a point.

    Zero when two or more classes share the maximum.
    """
    eta = _point(dist, point_index)
    top2 = np.sort(eta)[-2:]
    return float(top2[1] - top2[0])


def d_noise_all(dist):
    top2 = np.sort(dist.eta, axis=1)[:, -2:]
    return top2[:, 1] - top2[:, 0]


def conditional_excess_01(dist, point_index, p, matrix):
    """``max_i eta_i - eta_{decode(p)}`` at one support point."""
    _check_classes(dist, matrix)
    eta = _point(dist, point_index)
    label = decode(_query(p, matrix), matrix).label
    return float(eta.max() - eta[label])


def conditional_sq_risk(dist, point_index, p, matrix):
    """``1/2 sum_i eta_i |p - g_i|^2`` by direct expectation over labels."""
    eta = _point(dist, point_index)
    p = _query(p, matrix)
    return float(0.5 * eta @ np.sum((matrix.columns - p) ** 2, axis=1))


def conditional_excess_sq(dist, point_index, p, matrix, check=True):
    """Excess squared-loss conditional risk, ``1/2 |p - G eta(x)|^2``.

    With ``check`` the closed form is compared against the difference of two
    direct expectations and a mismatch raises ``ArithmeticError``.
    """
    _check_classes(dist, matrix)
    eta = _point(dist, point_index)
    p = _query(p, matrix)
    p_star = eta @ matrix.columns
    closed = float(0.5 * np.sum((p - p_star) ** 2))
    if check:
        risk_p = conditional_sq_risk(dist, point_index, p, matrix)
        risk_star = conditional_sq_risk(dist, point_index, p_star, matrix)
        direct = risk_p - risk_star
        if abs(direct - closed) > _CLOSED_FORM_RTOL * (1.0 + risk_p):
            raise ArithmeticError("closed-form excess %r disagrees with direct %r"
                                  % (closed, direct))
    return closed


def bayes_optimal_model(dist, matrix):
    """Table ``x -> G eta(x)`` of shape (M, n)."""
    _check_classes(dist, matrix)
    return dist.eta @ matrix.columns


def model_table(f, num_points, embed_dim):
    """Normalise a model given as a table or a callable to an (M, n) array."""
    if callable(f):
        rows = []
        for i in range(num_points):
            try:
                rows.append(np.asarray(f(i), dtype=np.float64))
            except (KeyError, IndexError) as exc:
                raise DomainError("model undefined at point %d" % i) from exc
        table = np.array(rows)
    else:
        table = np.asarray(f, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] < num_points:
        raise DomainError("model must be defined on all %d support points" % num_points)
    if table.shape != (num_points, embed_dim):
        raise DimensionError("model table must be (M, n) = (%d, %d)"
                             % (num_points, embed_dim))
    return table


def _excess_01_per_point(F, dist, matrix):
    labels = np.array([decode(F[i], matrix).label for i in range(dist.num_points)])
    rows = np.arange(dist.num_points)
    return dist.eta.max(axis=1) - dist.eta[rows, labels]


def excess_01_risk(f, dist, matrix):
    """``sum_x pi_x (max_i eta_i(x) - eta_{decode(f(x))}(x))``."""
    _check_classes(dist, matrix)
    F = model_table(f, dist.num_points, matrix.embed_dim)
    return float(dist.marginal @ _excess_01_per_point(F, dist, matrix))


def excess_sq_risk(f, dist, matrix):
    """``sum_x pi_x 1/2 |f(x) - G eta(x)|^2``."""
    _check_classes(dist, matrix)
    F = model_table(f, dist.num_points, matrix.embed_dim)
    diff = F - bayes_optimal_model(dist, matrix)
    return float(dist.marginal @ (0.5 * np.sum(diff * diff, axis=1)))


def bayes_risk_01(dist):
    return float(dist.marginal @ (1.0 - dist.eta.max(axis=1)))


def hamming_loss(yhat, y):
    """Fraction of coordinates where two binary label vectors differ."""
    yhat = np.asarray(yhat)
    y = np.asarray(y)
    if yhat.shape != y.shape or yhat.ndim != 1:
        raise DimensionError("label vectors must have equal length")
    if y.size == 0:
        raise DimensionError("label vectors must be non-empty")
    return float(np.count_nonzero(yhat != y)) / y.size


# -- multilabel --------------------------------------------------------------

def multilabel_bayes_model(dist, matrix):
    """Table ``x -> G eta^M(x)`` minimising the squared-loss conditional risk."""
    if dist.num_classes != matrix.num_classes:
        raise DimensionError("class count mismatch")
    return dist.eta @ matrix.columns


def multilabel_conditional_risks(dist, codebook):
    """``(1/C) |y - eta^M(x)|_1`` for every point and candidate; shape (M, R)."""
    Y = codebook.indicators.astype(np.float64)
    C = dist.num_classes
    return np.abs(Y[None, :, :] - dist.eta[:, None, :]).sum(axis=2) / C


def achievable_mask(codebook):
    """Candidates ``y`` that the exact decoder returns for the query ``G y``."""
    winners, _ = codebook.nearest_batch(codebook.points)
    return winners == np.arange(len(codebook))


def d_multilabel(dist, codebook, risks=None):
    """Per-point gap between the best and second-best achievable Hamming risk.

    Infinite where every achievable decode has the same risk.
    """
    if risks is None:
        risks = multilabel_conditional_risks(dist, codebook)
    achievable = achievable_mask(codebook)
    out = np.empty(dist.num_points)
    for x in range(dist.num_points):
        vals = risks[x, achievable]
        best = vals.min()
        above = vals[vals > best]
        out[x] = above.min() - best if above.size else np.inf
    return out


def hamming_excess_risk(f, dist, matrix, codebook=None):
    """Exact Hamming excess risk of ``decode_multilabel_exact . f``.

    The Bayes value at each point is the least conditional risk among
    achievable decodes.
    """
    if codebook is None:
        codebook = MultilabelCodebook(matrix, dist.max_labels)
    F = model_table(f, dist.num_points, matrix.embed_dim)
    risks = multilabel_conditional_risks(dist, codebook)
    achievable = achievable_mask(codebook)
    winners, _ = codebook.nearest_batch(F)
    rows = np.arange(dist.num_points)
    bayes = np.where(achievable[None, :], risks, np.inf).min(axis=1)
    return float(dist.marginal @ (risks[rows, winners] - bayes))
