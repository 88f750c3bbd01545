"""Excess-risk transfer bounds evaluated on finite-support distributions.

Every bound takes the 0-1 (or Hamming) excess risk of the decoded model on
the left and a function of the squared-loss excess risk on the right. The
infimum over the free radius ``r`` is realised on a finite grid and the
inequality is checked at every grid point, so a coarse grid can only make the
reported minimum larger, never hide a violation.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from labelembed.decode import DEFAULT_BUDGET, MultilabelCodebook
from labelembed.errors import ConditionViolatedError, DomainError, JLPViolationError
from labelembed.jl_embed import verify_jlp, verify_jlp_family
from labelembed.risklab import risk

__all__ = [
    "RiskReport", "radius_grid", "theorem1_terms", "theorem1_bound",
    "massart_rhs", "massart_corollary_bound", "theorem2_parameter",
    "theorem2_terms", "theorem2_family", "theorem2_bound", "GRID_POINTS",
]

GRID_POINTS = 64
_ROUNDOFF = 1e-12


@dataclass(frozen=True)
class RiskReport:
    """Both sides of an excess-risk bound at the minimising grid radius.

    ``holds`` is true when the left side is at most the right side at every
    grid radius. ``details`` carries the per-radius right-hand sides and any
    bound-specific extras.
    """

    excess_01: float
    excess_sq: float
    r: float
    term1: float
    term2: float
    term3: float
    holds: bool
    details: dict = field(default_factory=dict, compare=False)

    @property
    def rhs(self):
        return self.term1 + self.term2 + self.term3

    def to_dict(self, with_grid=False):
        out = asdict(self)
        out["rhs"] = self.rhs
        details = dict(out.pop("details"))
        if not with_grid:
            details.pop("r_grid", None)
            details.pop("rhs_grid", None)
            details.pop("rhs_grid_corrected", None)
        out.update(details)
        return out


def radius_grid(lower, points=GRID_POINTS, upper=1.0):
    """Geometric grid of ``points`` radii in ``(lower, upper]``."""
    if not 0 < lower < upper:
        raise DomainError("need 0 < lower < upper for the radius grid")
    k = np.arange(1, points + 1)
    grid = lower * (upper / lower) ** (k / points)
    grid[-1] = upper
    return grid


def _check_grid(r_grid, lower):
    r = np.asarray(r_grid, dtype=np.float64)
    if r.ndim != 1 or r.size == 0:
        raise DomainError("radius grid must be a non-empty list")
    if np.any(r <= lower):
        raise DomainError("every radius must exceed %r" % lower)
    return r


def _mass_below(marginal, d, r_grid):
    return np.array([float(marginal @ (d < r)) for r in r_grid])


def theorem1_terms(epsilon, r, mass_below, excess_sq):
    """The three right-hand terms for one radius (vectorised over arrays)."""
    r = np.asarray(r, dtype=np.float64)
    t1 = epsilon * mass_below
    t2 = np.sqrt((8 * epsilon + 16) * mass_below * excess_sq)
    t3 = (16 + 8 * epsilon) / (r - epsilon) ** 2 * excess_sq
    return t1, t2, t3


def _require_jlp(matrix, target, jlp_report):
    report = jlp_report if jlp_report is not None else verify_jlp(matrix, target)
    if report.epsilon_target > target + _ROUNDOFF:
        raise DomainError("supplied JLP report targets %r, need %r"
                          % (report.epsilon_target, target))
    if not report.passed:
        raise JLPViolationError(
            "matrix fails the JLP check at %.6g (observed %.6g); the bound is "
            "not asserted" % (target, report.epsilon_observed))
    return report


def _summarise(lhs, excess_sq, r_grid, terms, extra):
    t1, t2, t3 = terms
    rhs = t1 + t2 + t3
    k = int(np.argmin(rhs))
    holds = bool(np.all(lhs <= rhs + _ROUNDOFF))
    details = {"r_grid": r_grid.tolist(), "rhs_grid": rhs.tolist(),
               "min_rhs": float(rhs[k])}
    details.update(extra)
    return RiskReport(float(lhs), float(excess_sq), float(r_grid[k]),
                      float(t1[k]), float(t2[k]), float(t3[k]), holds, details)


def theorem1_bound(dist, matrix, f, epsilon, r_grid=None, jlp_report=None):
    """Multiclass transfer bound from squared-loss to 0-1 excess risk.

    Parameters
    ----------
    dist : SyntheticDistribution
    matrix : EmbeddingMatrix
        Must pass the JLP check at ``epsilon / 4``.
    f : (M, n) array or callable
    epsilon : float in (0, 1)
    r_grid : sequence of float, optional
        Radii strictly above ``epsilon``; defaults to :func:`radius_grid`.
    jlp_report : JlpReport, optional
        Reuse an existing check instead of recomputing it.
    """
    if not 0 < epsilon < 1:
        raise DomainError("epsilon must lie in (0, 1)")
    report = _require_jlp(matrix, epsilon / 4, jlp_report)
    r_grid = _check_grid(radius_grid(epsilon) if r_grid is None else r_grid, epsilon)
    lhs = risk.excess_01_risk(f, dist, matrix)
    excess_sq = risk.excess_sq_risk(f, dist, matrix)
    mass = _mass_below(dist.marginal, risk.d_noise_all(dist), r_grid)
    terms = theorem1_terms(epsilon, r_grid, mass, excess_sq)
    return _summarise(lhs, excess_sq, r_grid, terms,
                      {"epsilon": epsilon,
                       "epsilon_observed": report.epsilon_observed,
                       "mass_below": mass.tolist()})


def massart_rhs(epsilon, essinf_d, excess_sq):
    return (16 + 8 * epsilon) / (essinf_d - epsilon) ** 2 * excess_sq


def massart_corollary_bound(dist, matrix, f, epsilon, jlp_report=None):
    """Single-term bound at ``r = essinf d`` when the noise gap exceeds epsilon."""
    if not 0 < epsilon < 1:
        raise DomainError("epsilon must lie in (0, 1)")
    d = risk.d_noise_all(dist)
    essinf = float(d[dist.marginal > 0].min())
    if not essinf > epsilon:
        raise ConditionViolatedError(
            "essential infimum of the noise gap (%r) must exceed epsilon (%r)"
            % (essinf, epsilon))
    report = _require_jlp(matrix, epsilon / 4, jlp_report)
    lhs = risk.excess_01_risk(f, dist, matrix)
    excess_sq = risk.excess_sq_risk(f, dist, matrix)
    rhs = massart_rhs(epsilon, essinf, excess_sq)
    return RiskReport(float(lhs), float(excess_sq), essinf, 0.0, 0.0, float(rhs),
                      bool(lhs <= rhs + _ROUNDOFF),
                      {"epsilon": epsilon, "essinf_d": essinf,
                       "epsilon_observed": report.epsilon_observed,
                       "min_rhs": float(rhs)})


# -- multilabel --------------------------------------------------------------

def theorem2_parameter(epsilon):
    """JLP accuracy needed by the multilabel bound."""
    return epsilon / (2 + 2 * math.sqrt(2))


def theorem2_terms(epsilon, K, C, r, mass_below, excess_sq, corrected=False):
    """Right-hand terms of the multilabel bound.

    ``corrected`` doubles the constant inside the square root and in the last
    term. That version is what the conditional-risk step yields when the
    convex-inverse threshold ``delta_0^2 / 2`` is carried through; the
    uncorrected version uses the constants as usually stated.
    """
    r = np.asarray(r, dtype=np.float64)
    ep = theorem2_parameter(epsilon)
    scale = 2 if corrected else 1
    t1 = epsilon * (K / C) * mass_below
    t2 = (4 / C) * np.sqrt(2 * scale * K * (1 + ep) * mass_below * excess_sq)
    t3 = 32 * scale * K * (1 + ep) / (C * r - K * epsilon) ** 2 * excess_sq
    return t1, t2, t3


def theorem2_family(dist, codebook):
    """Vectors on which the multilabel bound relies on the JLP.

    Candidates ``y``, pairwise differences ``y - y'``, label marginals
    ``eta(x)`` and residuals ``eta(x) - y``.
    """
    Y = codebook.indicators.astype(np.float64)
    iu, ju = np.triu_indices(len(Y), 1)
    eta = np.asarray(dist.eta)
    resid = (eta[:, None, :] - Y[None, :, :]).reshape(-1, Y.shape[1])
    return np.vstack([Y, Y[iu] - Y[ju], eta, resid])


def theorem2_bound(dist, matrix, f, epsilon, r_grid=None, budget=DEFAULT_BUDGET,
                   codebook=None, jlp_report=None):
    """Multilabel Hamming-loss transfer bound with exact enumeration.

    The reported terms use the constants as usually stated; ``details``
    also carries the right-hand side with the corrected constants
    (``min_rhs_corrected``, ``holds_corrected``).
    """
    if not 0 < epsilon < 1:
        raise DomainError("epsilon must lie in (0, 1)")
    dist.require_marginal_sparsity()
    if dist.num_classes != matrix.num_classes:
        raise DomainError("class count mismatch")
    C, K = dist.num_classes, dist.max_labels
    if codebook is None:
        codebook = MultilabelCodebook(matrix, K, budget)
    target = theorem2_parameter(epsilon)
    if jlp_report is None:
        jlp_report = verify_jlp_family(matrix, theorem2_family(dist, codebook), target)
    report = _require_jlp(matrix, target, jlp_report)

    lower = epsilon * K / C
    r_grid = _check_grid(radius_grid(lower) if r_grid is None else r_grid, lower)
    risks = risk.multilabel_conditional_risks(dist, codebook)
    d = risk.d_multilabel(dist, codebook, risks)
    lhs = risk.hamming_excess_risk(f, dist, matrix, codebook)
    F = risk.model_table(f, dist.num_points, matrix.embed_dim)
    diff = F - risk.multilabel_bayes_model(dist, matrix)
    excess_sq = float(dist.marginal @ (0.5 * np.sum(diff * diff, axis=1)))
    mass = _mass_below(dist.marginal, d, r_grid)

    fixed = theorem2_terms(epsilon, K, C, r_grid, mass, excess_sq, corrected=True)
    rhs_fixed = sum(fixed)
    extra = {"epsilon": epsilon, "jlp_parameter": target,
             "epsilon_observed": report.epsilon_observed,
             "mass_below": mass.tolist(),
             "d_multilabel": [float(v) for v in d],
             "rhs_grid_corrected": rhs_fixed.tolist(),
             "min_rhs_corrected": float(rhs_fixed.min()),
             "holds_corrected": bool(np.all(lhs <= rhs_fixed + _ROUNDOFF))}
    return _summarise(lhs, excess_sq, r_grid,
                      theorem2_terms(epsilon, K, C, r_grid, mass, excess_sq), extra)
