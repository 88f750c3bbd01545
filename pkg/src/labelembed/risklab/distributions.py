"""Finite-support label distributions with known conditional probabilities."""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from labelembed.errors import ConditionViolatedError, DimensionError, DomainError

__all__ = [
    "SyntheticDistribution", "MultilabelSyntheticDistribution",
    "random_distribution", "massart_distribution", "random_multilabel_distribution",
]

_SUM_TOL = 1e-12


def _normalise(v):
    v = np.asarray(v, dtype=np.float64)
    return v / v.sum(axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class SyntheticDistribution:
    """P over M support points and C classes.

    Attributes
    ----------
    marginal : ndarray (M,)
        Probability of each support point.
    eta : ndarray (M, C)
        ``eta[x, i] = P(Y = i | X = x)``.
    points : ndarray (M, d), optional
        Feature coordinates; risks never depend on them.
    """

    marginal: np.ndarray
    eta: np.ndarray
    points: np.ndarray = None

    def __post_init__(self):
        pi = np.asarray(self.marginal, dtype=np.float64)
        eta = np.asarray(self.eta, dtype=np.float64)
        if eta.ndim != 2 or pi.shape != (eta.shape[0],):
            raise DimensionError("eta must be (M, C) and marginal (M,)")
        if eta.shape[1] < 2:
            raise DimensionError("need at least two classes")
        if np.any(eta < 0) or np.any(np.abs(eta.sum(axis=1) - 1.0) > _SUM_TOL):
            raise DomainError("each eta row must be a probability vector")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > _SUM_TOL:
            raise DomainError("marginal must be a probability vector")
        pi.setflags(write=False)
        eta.setflags(write=False)
        object.__setattr__(self, "marginal", pi)
        object.__setattr__(self, "eta", eta)
        if self.points is None:
            object.__setattr__(self, "points",
                               np.arange(eta.shape[0], dtype=np.float64)[:, None])

    @property
    def num_points(self):
        return self.eta.shape[0]

    @property
    def num_classes(self):
        return self.eta.shape[1]


@dataclass(frozen=True, eq=False)
class MultilabelSyntheticDistribution:
    """P over M support points and label vectors with at most K ones.

    ``outcomes[x]`` is a tuple of ``(active_labels, probability)`` pairs with
    0-based, strictly increasing label tuples.
    """

    marginal: np.ndarray
    outcomes: tuple
    num_classes: int
    max_labels: int

    def __post_init__(self):
        pi = np.asarray(self.marginal, dtype=np.float64)
        if pi.shape != (len(self.outcomes),):
            raise DimensionError("one outcome table per support point")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > _SUM_TOL:
            raise DomainError("marginal must be a probability vector")
        tables = []
        for x, table in enumerate(self.outcomes):
            rows = []
            total = 0.0
            for active, prob in table:
                active = tuple(int(c) for c in active)
                if len(active) > self.max_labels:
                    raise DomainError("point %d: outcome %r has more than K=%d "
                                      "labels" % (x, active, self.max_labels))
                if any(b <= a for a, b in zip(active, active[1:])):
                    raise DomainError("outcome labels must be strictly increasing")
                if active and (active[0] < 0 or active[-1] >= self.num_classes):
                    raise DomainError("outcome label out of range")
                if prob < 0:
                    raise DomainError("negative outcome probability")
                rows.append((active, float(prob)))
                total += prob
            if abs(total - 1.0) > _SUM_TOL:
                raise DomainError("point %d: outcome probabilities sum to %r"
                                  % (x, total))
            tables.append(tuple(rows))
        pi.setflags(write=False)
        object.__setattr__(self, "marginal", pi)
        object.__setattr__(self, "outcomes", tuple(tables))
        eta = np.zeros((len(tables), self.num_classes))
        for x, table in enumerate(tables):
            for active, prob in table:
                eta[x, list(active)] += prob
        eta.setflags(write=False)
        object.__setattr__(self, "_eta", eta)

    @property
    def num_points(self):
        return len(self.outcomes)

    @property
    def eta(self):
        """Per-label marginals ``P(Y_c = 1 | x)``, shape (M, C)."""
        return self._eta

    def marginal_sparsity_holds(self):
        """True when every ``eta[x]`` has at most K nonzero entries."""
        return bool(np.all(np.count_nonzero(self._eta, axis=1) <= self.max_labels))

    def require_marginal_sparsity(self):
        if not self.marginal_sparsity_holds():
            raise ConditionViolatedError(
                "label marginals have more than K=%d nonzero entries at some "
                "point" % self.max_labels)


# -- generators --------------------------------------------------------------

def _random_eta_row(rng, C):
    style = rng.integers(0, 4)
    if style == 0:
        alpha = np.exp(rng.uniform(np.log(0.05), np.log(5.0)))
        row = rng.dirichlet(np.full(C, alpha))
    elif style == 1:
        # two nearly tied leaders
        row = rng.dirichlet(np.full(C, 0.3)) * 0.2
        a, b = rng.choice(C, size=2, replace=False)
        top = rng.uniform(0.3, 0.4)
        row[a] += top
        row[b] += top + rng.uniform(-0.02, 0.02)
    elif style == 2:
        row = np.zeros(C)
        row[rng.integers(C)] = 1.0
    else:
        row = rng.dirichlet(np.ones(C))
    row = np.clip(row, 0.0, None)
    return _normalise(row)


def random_distribution(num_points, num_classes, rng):
    """Mixture of diffuse, near-tied, deterministic and flat conditionals."""
    eta = np.array([_random_eta_row(rng, num_classes) for _ in range(num_points)])
    pi = _normalise(rng.dirichlet(np.ones(num_points)))
    return SyntheticDistribution(pi, eta)


def massart_distribution(num_points, num_classes, rng, min_gap=0.3):
    """Conditionals whose top probability beats the runner-up by ``min_gap``."""
    if not 0 < min_gap < 1:
        raise DomainError("min_gap must lie in (0, 1)")
    C = num_classes
    eta = np.empty((num_points, C))
    for x in range(num_points):
        for _ in range(200):
            top = rng.uniform(min_gap, 1.0)
            rest = rng.dirichlet(np.full(C - 1, np.exp(rng.uniform(-2, 1)))) * (1 - top)
            if rest.max() <= top - min_gap:
                break
        else:
            top = rng.uniform((1 + min_gap) / 2, 1.0)
            rest = rng.dirichlet(np.ones(C - 1)) * (1 - top)
        row = np.insert(rest, rng.integers(C), top)
        eta[x] = _normalise(row)
    d = np.sort(eta, axis=1)
    if np.any(d[:, -1] - d[:, -2] < min_gap - 1e-12):
        raise ConditionViolatedError("generator failed to reach the margin")
    pi = _normalise(rng.dirichlet(np.ones(num_points)))
    return SyntheticDistribution(pi, eta)


def random_multilabel_distribution(num_points, num_classes, max_labels, rng):
    """Each point draws a label set S of size <= K; outcomes are subsets of S.

    The label marginals at every point are therefore supported on at most K
    classes.
    """
    C, K = num_classes, max_labels
    tables = []
    for _ in range(num_points):
        size = int(rng.integers(1, min(K, C) + 1))
        S = sorted(rng.choice(C, size=size, replace=False).tolist())
        subsets = [s for k in range(size + 1) for s in combinations(S, k)]
        alpha = np.exp(rng.uniform(np.log(0.1), np.log(3.0)))
        probs = _normalise(rng.dirichlet(np.full(len(subsets), alpha)))
        tables.append(tuple((s, float(p)) for s, p in zip(subsets, probs)))
    pi = _normalise(rng.dirichlet(np.ones(num_points)))
    return MultilabelSyntheticDistribution(pi, tuple(tables), C, K)
