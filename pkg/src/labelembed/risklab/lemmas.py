"""Randomised checks of the implications the transfer bounds are built from.

Each oracle draws inputs that satisfy an implication's premise and counts how
often its conclusion fails. Draws whose premise cannot be met (for example a
margin smaller than epsilon) are tallied as vacuous, not as checks.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from labelembed.decode import MultilabelCodebook, decode
from labelembed.errors import DomainError
from labelembed.jl_embed import verify_jlp_family
from labelembed.risklab import risk
from labelembed.risklab.bounds import (
    _require_jlp, theorem2_family, theorem2_parameter,
)
from labelembed.risklab.distributions import _random_eta_row

__all__ = ["LemmaTally", "LemmaReport", "lemma_oracles", "multilabel_lemma_oracles"]

_TOL = 1e-12
_FD_STEP = 1e-5
_FD_TOL = 1e-6


@dataclass
class LemmaTally:
    checked: int = 0
    violated: int = 0
    vacuous: int = 0

    def record(self, ok):
        self.checked += 1
        self.violated += 0 if ok else 1


@dataclass
class LemmaReport:
    """Per-lemma tallies plus informational counters that never fail."""

    tallies: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def tally(self, name):
        return self.tallies.setdefault(name, LemmaTally())

    @property
    def violations(self):
        return sum(t.violated for t in self.tallies.values())

    @property
    def passed(self):
        return self.violations == 0

    def to_dict(self):
        out = {k: vars(v).copy() for k, v in self.tallies.items()}
        out.update({k: v for k, v in self.info.items()})
        return out


def _unit(rng, n):
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def _toward(a, b, rng):
    """Unit vector from ``a`` to ``b``, or a random one if they coincide."""
    d = b - a
    norm = np.linalg.norm(d)
    return d / norm if norm > 0 else _unit(rng, a.shape[0])


def _near_one(rng):
    # radii concentrated just inside the admissible ball
    return 1.0 - rng.uniform() ** 3


def _margin_pair(eta, epsilon, rng):
    """A leader k and a class j trailing it by more than epsilon, if any."""
    k = int(np.argmax(eta))
    trailing = np.flatnonzero(eta[k] - eta > epsilon)
    if trailing.size == 0:
        return k, None
    if rng.uniform() < 0.5:
        # the closest admissible competitor is the hardest case
        return k, int(trailing[np.argmax(eta[trailing])])
    return k, int(rng.choice(trailing))


def _fd_gradient(func, p):
    g = np.empty_like(p)
    for i in range(p.shape[0]):
        e = np.zeros_like(p)
        e[i] = _FD_STEP
        g[i] = (func(p + e) - func(p - e)) / (2 * _FD_STEP)
    return g


def _check_convex_inverse(report, rng, draws):
    tally = report.tally("convex_inverse")
    attempts = 0
    while tally.checked < draws and attempts < 20 * draws:
        attempts += 1
        dim = int(rng.integers(1, 7))
        B = rng.standard_normal((dim, dim))
        A = B @ B.T + rng.uniform(0.01, 1.0) * np.eye(dim)
        quartic = rng.uniform(0, 1) if rng.uniform() < 0.5 else 0.0
        x_star = rng.standard_normal(dim)

        def h(x):
            z = x - x_star
            return 0.5 * z @ A @ z + quartic * (z @ z) ** 2

        delta0 = math.exp(rng.uniform(math.log(1e-3), math.log(10.0)))
        lam_min = float(np.linalg.eigvalsh(A)[0])
        delta = 0.5 * lam_min * delta0 ** 2 + quartic * delta0 ** 4
        # the closed-form infimum must not exceed h anywhere on the sphere
        sphere = x_star + delta0 * _unit(rng, dim)
        if h(sphere) < delta * (1 - 1e-9):
            tally.record(False)
            continue
        x = x_star + delta0 * rng.uniform(0, 1.5) * _unit(rng, dim)
        if h(x) < delta:
            tally.record(np.linalg.norm(x - x_star) < delta0)
        else:
            tally.vacuous += 1


def lemma_oracles(matrix, epsilon, dist=None, draws=10000, seed=0,
                  jlp_report=None):
    """Check the multiclass lemmas on ``draws`` random inputs each.

    Parameters
    ----------
    matrix : EmbeddingMatrix
        Must pass the JLP check at ``epsilon / 4``.
    epsilon : float
    dist : SyntheticDistribution, optional
        Its conditionals are mixed into the sampled ones.
    draws : int
    seed : int

    Returns
    -------
    LemmaReport
        Tallies for ``random_projection``, ``distance_preservation``,
        ``conditional_risk``, ``convex_inverse``, ``c1_formula`` and
        ``c2_minimizer``.
    """
    if not 0 < epsilon < 1:
        raise DomainError("epsilon must lie in (0, 1)")
    _require_jlp(matrix, epsilon / 4, jlp_report)
    rng = np.random.Generator(np.random.Philox(seed))
    cols = matrix.columns
    C, n = matrix.num_classes, matrix.embed_dim
    report = LemmaReport()
    sq_root = 2 * math.sqrt(2 + epsilon)

    def draw_eta(t):
        if dist is not None and t % 2 == 0:
            return np.asarray(dist.eta[(t // 2) % dist.num_points])
        return _random_eta_row(rng, C)

    proj = report.tally("random_projection")
    dpres = report.tally("distance_preservation")
    crisk = report.tally("conditional_risk")
    c1 = report.tally("c1_formula")
    for t in range(draws):
        eta = draw_eta(t)
        p_star = eta @ cols

        j = int(rng.integers(C))
        v = eta.copy()
        v[j] -= 1.0
        gap = float(np.sum((v @ cols) ** 2) - v @ v)
        proj.record(abs(gap) <= epsilon + _TOL)

        k, j = _margin_pair(eta, epsilon, rng)
        if j is None:
            # redraw until some pair clears the margin
            for _ in range(50):
                eta_m = _random_eta_row(rng, C)
                k, j = _margin_pair(eta_m, epsilon, rng)
                if j is not None:
                    break
        else:
            eta_m = eta
        if j is not None:
            radius = (eta_m[k] - eta_m[j] - epsilon) / sq_root
            centre = eta_m @ cols
            direction = _toward(cols[k], cols[j], rng) if t % 2 else _unit(rng, n)
            p = centre + radius * _near_one(rng) * direction
            dj = np.sum((p - cols[j]) ** 2)
            dk = np.sum((p - cols[k]) ** 2)
            dpres.record(dj > dk)
        else:
            dpres.vacuous += 1

        r = rng.uniform(epsilon, 1.0)
        if r <= epsilon:
            crisk.vacuous += 1
        else:
            threshold = (r - epsilon) ** 2 / (16 + 8 * epsilon)
            target = int(rng.integers(C))
            direction = _toward(p_star, cols[target], rng) if t % 2 else _unit(rng, n)
            p = p_star + math.sqrt(2 * threshold) * _near_one(rng) * direction
            c2 = 0.5 * np.sum((p - p_star) ** 2)
            if c2 < threshold:
                label = decode(p, matrix).label
                crisk.record(eta.max() - eta[label] < r)
            else:
                crisk.vacuous += 1

        # C1 as an expectation of the 0-1 loss over labels
        p = p_star + rng.exponential(0.5) * _unit(rng, n)
        label = decode(p, matrix).label
        expected_loss = float(np.sum(eta[np.arange(C) != label]))
        direct = expected_loss - (1.0 - eta.max())
        c1.record(abs(direct - (eta.max() - eta[label])) <= 1e-12)

    grad = report.tally("c2_minimizer")
    for t in range(min(draws, 50)):
        eta = draw_eta(t)
        tmp = _point_dist(eta)
        g = _fd_gradient(lambda q: risk.conditional_sq_risk(tmp, 0, q, matrix),
                         eta @ cols)
        grad.record(np.linalg.norm(g) <= _FD_TOL)

    _check_convex_inverse(report, rng, draws)
    return report


def _point_dist(eta):
    from labelembed.risklab.distributions import SyntheticDistribution
    return SyntheticDistribution(np.ones(1), np.asarray(eta)[None, :])


def multilabel_lemma_oracles(matrix, dist, epsilon, draws=2000, seed=0,
                             codebook=None):
    """Check the multilabel lemmas on one distribution.

    ``epsilon`` is the bound-level accuracy; the lemmas are exercised at the
    JLP parameter ``epsilon / (2 + 2 sqrt 2)``, certified on the vectors the
    lemmas touch. The conditional-risk tally uses the threshold
    ``(Cr - eps K)^2 / (64 (1 + eps') K)``; how often the threshold with 32
    in place of 64 would have been violated is reported under ``info``.
    """
    C, K = dist.num_classes, dist.max_labels
    if codebook is None:
        codebook = MultilabelCodebook(matrix, K)
    ep = theorem2_parameter(epsilon)
    _require_jlp(matrix, ep,
                 verify_jlp_family(matrix, theorem2_family(dist, codebook), ep))
    rng = np.random.Generator(np.random.Philox(seed))
    cols = matrix.columns
    n = matrix.embed_dim
    Y = codebook.indicators.astype(np.float64)
    risks = risk.multilabel_conditional_risks(dist, codebook)
    report = LemmaReport()
    stated_violations = 0
    scale = 4 * math.sqrt(2 * K * (1 + ep))

    hamming = report.tally("ml_hamming_formula")
    dpres = report.tally("ml_distance_preservation")
    crisk = report.tally("ml_conditional_risk")
    for t in range(draws):
        x = int(rng.integers(dist.num_points))
        eta = dist.eta[x]
        s_star = eta @ cols

        s = s_star + rng.exponential(0.5) * _unit(rng, n)
        r_idx, _ = codebook.nearest(s)
        yhat = codebook.indicators[r_idx]
        direct = 0.0
        for active, prob in dist.outcomes[x]:
            y = np.zeros(C, dtype=np.int8)
            y[list(active)] = 1
            direct += prob * risk.hamming_loss(yhat, y)
        hamming.record(abs(direct - risks[x, r_idx]) <= 1e-12)

        a, b = rng.integers(len(Y), size=2)
        margin = C * (risks[x, b] - risks[x, a])
        radius = (margin - epsilon * K) / scale
        if a != b and radius > 0:
            direction = _toward(Y[b] @ cols, Y[a] @ cols, rng) if t % 2 else _unit(rng, n)
            s = s_star + radius * _near_one(rng) * direction
            dpres.record(np.sum((s - Y[b] @ cols) ** 2) > np.sum((s - Y[a] @ cols) ** 2))
        else:
            dpres.vacuous += 1

        lower = epsilon * K / C
        r = rng.uniform(lower, 1.0)
        if r <= lower:
            crisk.vacuous += 1
            continue
        threshold = (C * r - epsilon * K) ** 2 / (64 * (1 + ep) * K)
        target = int(rng.integers(len(Y)))
        direction = _toward(s_star, Y[target] @ cols, rng) if t % 2 else _unit(rng, n)
        step = math.sqrt(2 * threshold) * _near_one(rng)
        s = s_star + step * direction
        r_idx, _ = codebook.nearest(s)
        crisk.record(risks[x, r_idx] - risks[x].min() < r)
        # same draw pushed out to the larger stated threshold
        s = s_star + math.sqrt(2) * step * direction
        r_idx, _ = codebook.nearest(s)
        if not risks[x, r_idx] - risks[x].min() < r:
            stated_violations += 1

    grad = report.tally("ml_c2_minimizer")
    for x in range(dist.num_points):
        pts = [(np.asarray(Y[codebook.sets.index(tuple(active))]) @ cols, prob)
               for active, prob in dist.outcomes[x]]

        def c2(q):
            return 0.5 * sum(prob * np.sum((q - g) ** 2) for g, prob in pts)

        grad.record(np.linalg.norm(_fd_gradient(c2, dist.eta[x] @ cols)) <= _FD_TOL)

    report.info["stated_threshold_violations"] = stated_violations
    return report
