"""Seeded verification campaigns over random instances.

Every trial is reproducible from its own seed. A trial whose embedding
matrix cannot be certified at the accuracy a bound needs is recorded as
``skipped-jlp`` and never counted as a pass or a violation.
"""

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from labelembed.decode import MultilabelCodebook
from labelembed.errors import DomainError
from labelembed.jl_embed import (
    sample_gram_matrix, sample_matrix, standard_basis_matrix, verify_jlp,
    verify_jlp_family,
)
from labelembed.risklab import bounds, lemmas, risk
from labelembed.risklab.distributions import (
    massart_distribution, random_distribution, random_multilabel_distribution,
)

__all__ = [
    "MatrixDraw", "CampaignResult", "acquire_matrix", "theorem1_campaign",
    "massart_campaign", "theorem2_campaign", "lemma_campaign", "SOURCES",
]

SOURCES = ("iid", "gram", "iid-then-gram")
SKIPPED = "skipped-jlp"
ASSERTED = "asserted"
_GRAM_SLACK = 0.95
_MAX_HALVINGS = 30


@dataclass
class MatrixDraw:
    matrix: object
    source: str
    epsilon_observed: float
    report: object = None


def _rng(seed):
    return np.random.Generator(np.random.Philox(int(seed) & (2 ** 64 - 1)))


def _sub_seed(seed, k):
    return int(np.random.SeedSequence([int(seed) & (2 ** 64 - 1), k])
               .generate_state(1, np.uint64)[0])


def acquire_matrix(num_classes, embed_dim, target, seed, source="iid-then-gram",
                   kind="rademacher", attempts=3, check=None):
    """Find an embedding matrix that passes a JLP check at ``target``.

    ``check(matrix, target)`` defaults to :func:`verify_jlp`. Independent
    draws of ``kind`` are tried first (``attempts`` of them); with the
    ``gram`` fallback a matrix with prescribed column coherence is built and
    its coherence halved until the check passes. That fallback needs
    ``embed_dim >= num_classes``.
    """
    if source not in SOURCES:
        raise DomainError("matrix source must be one of %s" % (SOURCES,))
    check = check or verify_jlp
    best = math.inf
    if source in ("iid", "iid-then-gram"):
        for a in range(attempts if source == "iid-then-gram" else 1):
            m = sample_matrix(num_classes, embed_dim, kind, _sub_seed(seed, a))
            rep = check(m, target)
            if rep.passed:
                return MatrixDraw(m, "iid-" + kind, rep.epsilon_observed, rep)
            best = min(best, rep.epsilon_observed)
    if source in ("gram", "iid-then-gram") and embed_dim >= num_classes:
        coherence = _GRAM_SLACK * target
        for _ in range(_MAX_HALVINGS):
            m = sample_gram_matrix(num_classes, embed_dim, coherence,
                                   _sub_seed(seed, 1000))
            rep = check(m, target)
            if rep.passed:
                return MatrixDraw(m, "gram", rep.epsilon_observed, rep)
            best = min(best, rep.epsilon_observed)
            coherence /= 2
    return MatrixDraw(None, SKIPPED, best)


@dataclass
class CampaignResult:
    """Per-trial records of one campaign plus its parameters."""

    name: str
    params: dict
    records: list
    lemma_report: dict = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def asserted(self):
        return sum(r["status"] == ASSERTED for r in self.records)

    @property
    def skipped(self):
        return sum(r["status"] == SKIPPED for r in self.records)

    @property
    def violating_seeds(self):
        return [r["seed"] for r in self.records
                if r["status"] == ASSERTED and not r["holds"]]

    @property
    def lemma_violations(self):
        return sum(v.get("violated", 0) for v in self.lemma_report.values()
                   if isinstance(v, dict))

    @property
    def passed(self):
        return not self.violating_seeds and self.lemma_violations == 0

    def summary(self):
        return {"campaign": self.name, "trials": len(self.records),
                "asserted": self.asserted, "skipped_jlp": self.skipped,
                "violations": len(self.violating_seeds),
                "violating_seeds": self.violating_seeds,
                "lemma_violations": self.lemma_violations,
                "elapsed_seconds": round(self.elapsed, 3)}

    def to_json(self):
        return json.dumps({"summary": self.summary(), "params": self.params,
                           "lemmas": self.lemma_report, "trials": self.records},
                          indent=1, default=_json_default)

    def to_csv(self):
        columns = ["trial", "seed", "status", "holds", "matrix_source",
                   "epsilon_observed", "excess_01", "excess_sq", "r", "term1",
                   "term2", "term3", "min_rhs", "holds_corrected",
                   "min_rhs_corrected"]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, columns, extrasaction="ignore",
                                lineterminator="\n")
        writer.writeheader()
        for rec in self.records:
            writer.writerow(rec)
        return buf.getvalue()


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def _run(fn, seeds, workers):
    if workers <= 1 or len(seeds) <= 1:
        return [fn(s) for s in seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seeds))


def _perturb(rng, table, columns):
    """Random model near the Bayes table with occasional gross errors."""
    M, n = table.shape
    sigma = math.exp(rng.uniform(math.log(1e-3), 0.0))
    scale = sigma * np.exp(rng.uniform(-1, 1, size=M))[:, None]
    F = table + scale * rng.standard_normal((M, n)) / math.sqrt(n)
    wild = rng.uniform(size=M) < 0.1
    if wild.any():
        F[wild] = columns[rng.integers(columns.shape[0], size=int(wild.sum()))]
    return F


def _base_record(trial, seed, draw):
    return {"trial": trial, "seed": seed, "matrix_source": draw.source,
            "epsilon_observed": draw.epsilon_observed}


# -- theorem 1 ---------------------------------------------------------------

def _theorem1_trial(seed, trial0, C, n, M, epsilon, source, kind):
    rng = _rng(seed)
    dist = random_distribution(M, C, rng)
    draw = acquire_matrix(C, n, epsilon / 4, seed, source, kind)
    rec = _base_record(seed - trial0, seed, draw)
    if draw.matrix is None:
        rec.update(status=SKIPPED, holds=None)
        return rec
    F = _perturb(rng, risk.bayes_optimal_model(dist, draw.matrix), draw.matrix.columns)
    report = bounds.theorem1_bound(dist, draw.matrix, F, epsilon,
                                   jlp_report=draw.report)
    rec.update(status=ASSERTED, **report.to_dict(with_grid=True))
    return rec


def theorem1_campaign(trials=100, num_classes=32, embed_dim=256, num_points=20,
                      epsilon=0.2, seed=0, source="iid-then-gram",
                      kind="rademacher", workers=1):
    """Random (distribution, matrix, perturbed model) triples, seeds
    ``seed .. seed + trials - 1``."""
    start = time.perf_counter()
    params = dict(trials=trials, num_classes=num_classes, embed_dim=embed_dim,
                  num_points=num_points, epsilon=epsilon, seed=seed,
                  source=source, kind=kind)
    fn = partial(_theorem1_trial, trial0=seed, C=num_classes, n=embed_dim,
                 M=num_points, epsilon=epsilon, source=source, kind=kind)
    records = _run(fn, list(range(seed, seed + trials)), workers)
    return CampaignResult("theorem1", params, records,
                          elapsed=time.perf_counter() - start)


# -- massart corollary -------------------------------------------------------

def _massart_trial(seed, trial0, C, n, M, epsilon, min_gap, source, kind, steps):
    rng = _rng(seed)
    dist = massart_distribution(M, C, rng, min_gap)
    draw = acquire_matrix(C, n, epsilon / 4, seed, source, kind)
    rec = _base_record(seed - trial0, seed, draw)
    if draw.matrix is None:
        rec.update(status=SKIPPED, holds=None)
        return rec
    matrix = draw.matrix
    p_star = risk.bayes_optimal_model(dist, matrix)
    essinf = float(risk.d_noise_all(dist)[dist.marginal > 0].min())
    threshold = (essinf - epsilon) ** 2 / (16 + 8 * epsilon)

    exact = bounds.massart_corollary_bound(dist, matrix, p_star, epsilon,
                                           jlp_report=draw.report)
    lossless = exact.excess_01 == 0.0
    holds = exact.holds and lossless
    start = p_star + 2.0 * rng.standard_normal(p_star.shape) / math.sqrt(n)
    path = []
    point_checks = point_violations = 0
    for k in range(steps + 1):
        t = 10.0 ** (-k / 2)
        F = p_star + t * (start - p_star)
        rep = bounds.massart_corollary_bound(dist, matrix, F, epsilon,
                                             jlp_report=draw.report)
        per_point = 0.5 * np.sum((F - p_star) ** 2, axis=1)
        for x in np.flatnonzero(per_point < threshold):
            point_checks += 1
            if risk.conditional_excess_01(dist, int(x), F[x], matrix) != 0.0:
                point_violations += 1
        all_close = bool(np.all(per_point < threshold))
        step_ok = rep.holds and (rep.excess_01 == 0.0 or not all_close)
        holds = holds and step_ok
        path.append({"t": t, "excess_sq": rep.excess_sq, "excess_01": rep.excess_01,
                     "rhs": rep.rhs, "all_points_below_threshold": all_close,
                     "holds": step_ok})
    holds = holds and point_violations == 0
    rec.update(status=ASSERTED, holds=bool(holds), lossless=bool(lossless),
               essinf_d=essinf, threshold=threshold, excess_01=path[0]["excess_01"],
               excess_sq=path[0]["excess_sq"], min_rhs=path[0]["rhs"], r=essinf,
               term1=0.0, term2=0.0, term3=path[0]["rhs"],
               point_checks=point_checks, point_violations=point_violations,
               path=path)
    return rec


def massart_campaign(trials=50, num_classes=8, embed_dim=64, num_points=20,
                     epsilon=0.1, min_gap=0.3, seed=0, source="iid-then-gram",
                     kind="rademacher", steps=8, workers=1):
    """Lossless reduction under a noise margin.

    Each trial checks that the Bayes table decodes with zero excess and
    walks a random model toward it, shrinking the squared excess by
    ``10^-1`` per two steps.
    """
    if not min_gap > epsilon:
        raise DomainError("min_gap must exceed epsilon")
    start = time.perf_counter()
    params = dict(trials=trials, num_classes=num_classes, embed_dim=embed_dim,
                  num_points=num_points, epsilon=epsilon, min_gap=min_gap,
                  seed=seed, source=source, kind=kind, steps=steps)
    fn = partial(_massart_trial, trial0=seed, C=num_classes, n=embed_dim,
                 M=num_points, epsilon=epsilon, min_gap=min_gap, source=source,
                 kind=kind, steps=steps)
    records = _run(fn, list(range(seed, seed + trials)), workers)
    return CampaignResult("massart", params, records,
                          elapsed=time.perf_counter() - start)


# -- theorem 2 ---------------------------------------------------------------

def _theorem2_trial(seed, trial0, max_classes, max_labels, max_dim, M, epsilon,
                    source, kind):
    rng = _rng(seed)
    C = int(rng.integers(3, max_classes + 1))
    K = int(rng.integers(1, min(max_labels, C) + 1))
    n = int(rng.integers(min(C, max_dim), max_dim + 1))
    dist = random_multilabel_distribution(M, C, K, rng)
    family = bounds.theorem2_family(
        dist, MultilabelCodebook(standard_basis_matrix(C), K))
    draw = acquire_matrix(C, n, bounds.theorem2_parameter(epsilon), seed, source,
                          kind, check=lambda m, t: verify_jlp_family(m, family, t))
    rec = _base_record(seed - trial0, seed, draw)
    rec.update(num_classes=C, max_labels=K, embed_dim=n)
    if draw.matrix is None:
        rec.update(status=SKIPPED, holds=None)
        return rec
    codebook = MultilabelCodebook(draw.matrix, K)
    s_star = risk.multilabel_bayes_model(dist, draw.matrix)
    F = _perturb(rng, s_star, codebook.points)
    report = bounds.theorem2_bound(dist, draw.matrix, F, epsilon,
                                   codebook=codebook, jlp_report=draw.report)
    rec.update(status=ASSERTED, **report.to_dict(with_grid=True))
    return rec


def theorem2_campaign(trials=50, max_classes=6, max_labels=2, max_dim=16,
                      num_points=6, epsilon=0.5, seed=0, source="iid-then-gram",
                      kind="rademacher", workers=1):
    """Tiny multilabel instances with exhaustive enumeration."""
    start = time.perf_counter()
    params = dict(trials=trials, max_classes=max_classes, max_labels=max_labels,
                  max_dim=max_dim, num_points=num_points, epsilon=epsilon,
                  seed=seed, source=source, kind=kind)
    fn = partial(_theorem2_trial, trial0=seed, max_classes=max_classes,
                 max_labels=max_labels, max_dim=max_dim, M=num_points,
                 epsilon=epsilon, source=source, kind=kind)
    records = _run(fn, list(range(seed, seed + trials)), workers)
    return CampaignResult("theorem2", params, records,
                          elapsed=time.perf_counter() - start)


# -- lemmas ------------------------------------------------------------------

def lemma_campaign(draws=10000, num_classes=32, embed_dim=256, epsilon=0.2,
                   seed=0, source="iid-then-gram", kind="rademacher",
                   multilabel_instances=5):
    """Multiclass lemma oracles on one certified matrix, and the multilabel
    oracles on a few tiny instances."""
    start = time.perf_counter()
    params = dict(draws=draws, num_classes=num_classes, embed_dim=embed_dim,
                  epsilon=epsilon, seed=seed, source=source, kind=kind,
                  multilabel_instances=multilabel_instances)
    draw = acquire_matrix(num_classes, embed_dim, epsilon / 4, seed, source, kind)
    records = []
    tallies = {}
    if draw.matrix is None:
        rec = _base_record(0, seed, draw)
        rec.update(status=SKIPPED, holds=None)
        records.append(rec)
    else:
        rng = _rng(seed)
        dist = random_distribution(20, num_classes, rng)
        rep = lemmas.lemma_oracles(draw.matrix, epsilon, dist, draws, seed,
                                   jlp_report=draw.report)
        tallies.update(rep.to_dict())
        rec = _base_record(0, seed, draw)
        rec.update(status=ASSERTED, holds=rep.passed)
        records.append(rec)
    for k in range(multilabel_instances):
        s = _sub_seed(seed, 2000 + k)
        rng = _rng(s)
        C = int(rng.integers(3, 7))
        K = int(rng.integers(1, 3))
        dist = random_multilabel_distribution(6, C, K, rng)
        ml_eps = 0.5
        family = bounds.theorem2_family(
            dist, MultilabelCodebook(standard_basis_matrix(C), K))
        mdraw = acquire_matrix(C, 16, bounds.theorem2_parameter(ml_eps), s, source,
                               kind, check=lambda m, t: verify_jlp_family(m, family, t))
        rec = _base_record(k + 1, s, mdraw)
        if mdraw.matrix is None:
            rec.update(status=SKIPPED, holds=None)
        else:
            rep = lemmas.multilabel_lemma_oracles(mdraw.matrix, dist, ml_eps,
                                                  max(draws // 5, 1), s)
            for name, val in rep.to_dict().items():
                if isinstance(val, dict):
                    agg = tallies.setdefault(name, {"checked": 0, "violated": 0,
                                                    "vacuous": 0})
                    for key in agg:
                        agg[key] += val[key]
                else:
                    tallies[name] = tallies.get(name, 0) + val
            rec.update(status=ASSERTED, holds=rep.passed)
        records.append(rec)
    return CampaignResult("lemmas", params, records, tallies,
                          elapsed=time.perf_counter() - start)
