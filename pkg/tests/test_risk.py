import numpy as np
import pytest
from hypothesis import given, strategies as st

from labelembed.decode import MultilabelCodebook, decode
from labelembed.errors import ConditionViolatedError, DimensionError, DomainError
from labelembed.jl_embed import sample_gram_matrix, sample_matrix, standard_basis_matrix
from labelembed.risklab.distributions import (
    MultilabelSyntheticDistribution, SyntheticDistribution, massart_distribution,
    random_distribution, random_multilabel_distribution,
)
from labelembed.risklab.risk import (
    bayes_optimal_model, bayes_risk_01, conditional_excess_01, conditional_excess_sq,
    conditional_sq_risk, d_multilabel, d_noise, d_noise_all, excess_01_risk,
    excess_sq_risk, hamming_excess_risk, hamming_loss, model_table,
    multilabel_bayes_model, multilabel_conditional_risks,
)


def _single(eta):
    return SyntheticDistribution(np.array([1.0]), np.array([eta], dtype=float))


# -- distributions -----------------------------------------------------------

def test_distribution_validation():
    with pytest.raises(DomainError):
        SyntheticDistribution(np.array([1.0]), np.array([[0.5, 0.6]]))
    with pytest.raises(DomainError):
        SyntheticDistribution(np.array([0.5, 0.4]), np.full((2, 2), 0.5))
    with pytest.raises(DomainError):
        SyntheticDistribution(np.array([1.0]), np.array([[1.2, -0.2]]))
    d = random_distribution(4, 3, np.random.default_rng(0))
    with pytest.raises(ValueError):
        d.eta[0, 0] = 1.0


def test_multilabel_distribution_enforces_sparsity():
    with pytest.raises(DomainError):
        MultilabelSyntheticDistribution(np.array([1.0]), ((((0, 1, 2), 1.0),),), 4, 2)
    # per-outcome sparsity holds but the union of outcomes has three labels
    d = MultilabelSyntheticDistribution(
        np.array([1.0]), ((((0, 1), 0.5), ((2,), 0.5)),), 4, 2)
    assert not d.marginal_sparsity_holds()
    with pytest.raises(ConditionViolatedError):
        d.require_marginal_sparsity()


@given(seed=st.integers(0, 10 ** 6))
def test_generators_respect_invariants(seed):
    rng = np.random.default_rng(seed)
    d = random_distribution(6, 5, rng)
    np.testing.assert_allclose(d.eta.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(d.eta >= 0)
    m = massart_distribution(6, 5, rng, min_gap=0.25)
    assert d_noise_all(m).min() >= 0.25 - 1e-12
    ml = random_multilabel_distribution(4, 6, 2, rng)
    assert ml.marginal_sparsity_holds()
    for table in ml.outcomes:
        assert sum(p for _, p in table) == pytest.approx(1.0, abs=1e-12)


# -- noise gap ---------------------------------------------------------------

def test_d_noise_examples():
    assert d_noise(_single([0.5, 0.3, 0.2]), 0) == pytest.approx(0.2, abs=1e-15)
    assert d_noise(_single([0.25] * 4), 0) == 0.0
    assert d_noise(_single([0.0, 1.0, 0.0]), 0) == 1.0
    assert d_noise(_single([0.4, 0.4, 0.2]), 0) == 0.0


def test_d_noise_index_error():
    with pytest.raises(IndexError):
        d_noise(_single([0.5, 0.5]), 3)


# -- conditional risks -------------------------------------------------------

def test_conditional_excess_01_examples():
    m = standard_basis_matrix(3)
    dist = _single([0.5, 0.3, 0.2])
    assert conditional_excess_01(dist, 0, m.columns[0], m) == 0.0
    assert conditional_excess_01(dist, 0, m.columns[1], m) == pytest.approx(0.2, abs=1e-15)


def test_conditional_excess_01_direct_expectation():
    rng = np.random.default_rng(1)
    m = sample_matrix(6, 4, "gaussian", seed=1)
    dist = random_distribution(10, 6, rng)
    for x in range(10):
        p = rng.standard_normal(4)
        yhat = decode(p, m).label
        eta = dist.eta[x]
        risk = sum(eta[y] * (yhat != y) for y in range(6))
        best = min(sum(eta[y] * (c != y) for y in range(6)) for c in range(6))
        assert conditional_excess_01(dist, x, p, m) == pytest.approx(risk - best, abs=1e-12)


def test_conditional_excess_sq_examples():
    m = sample_matrix(5, 7, "gaussian", seed=2)
    dist = random_distribution(3, 5, np.random.default_rng(2))
    p_star = bayes_optimal_model(dist, m)[1]
    assert conditional_excess_sq(dist, 1, p_star, m) == pytest.approx(0.0, abs=1e-15)
    e = np.zeros(7)
    e[3] = 1.0
    assert conditional_excess_sq(dist, 1, p_star + e, m) == pytest.approx(0.5, abs=1e-12)


@given(seed=st.integers(0, 10 ** 6))
def test_conditional_excess_sq_closed_form_matches_expectation(seed):
    rng = np.random.default_rng(seed)
    C, n = int(rng.integers(2, 8)), int(rng.integers(1, 9))
    m = sample_matrix(C, n, "gaussian", seed=seed)
    dist = random_distribution(2, C, rng)
    p = rng.standard_normal(n)
    direct = 0.0
    for y in range(C):
        direct += dist.eta[0, y] * 0.5 * np.sum((p - m.columns[y]) ** 2)
    p_star = dist.eta[0] @ m.columns
    floor = sum(dist.eta[0, y] * 0.5 * np.sum((p_star - m.columns[y]) ** 2)
                for y in range(C))
    assert conditional_excess_sq(dist, 0, p, m) == pytest.approx(direct - floor, abs=1e-12)


def test_sq_risk_gradient_vanishes_at_minimiser():
    rng = np.random.default_rng(3)
    m = sample_matrix(8, 6, "gaussian", seed=3)
    dist = random_distribution(5, 8, rng)
    h = 1e-5
    for x in range(5):
        p = bayes_optimal_model(dist, m)[x]
        grad = np.array([
            (conditional_sq_risk(dist, x, p + h * e, m)
             - conditional_sq_risk(dist, x, p - h * e, m)) / (2 * h)
            for e in np.eye(6)])
        assert np.linalg.norm(grad) <= 1e-6


def test_dimension_mismatch():
    m = sample_matrix(3, 4, seed=0)
    dist = _single([0.5, 0.3, 0.2])
    with pytest.raises(DimensionError):
        conditional_excess_01(dist, 0, np.zeros(5), m)
    with pytest.raises(DimensionError):
        conditional_excess_sq(dist, 0, np.zeros(3), m)
    with pytest.raises(DimensionError):
        excess_sq_risk(np.zeros((1, 4)), _single([0.5, 0.5]), m)


# -- Bayes model and integrated risks ----------------------------------------

def test_bayes_model_examples():
    m = sample_matrix(4, 5, "gaussian", seed=4)
    one_hot = SyntheticDistribution(np.full(4, 0.25), np.eye(4))
    np.testing.assert_allclose(bayes_optimal_model(one_hot, m), m.columns, atol=1e-15)
    uniform = _single([0.25] * 4)
    np.testing.assert_allclose(bayes_optimal_model(uniform, m)[0], m.columns.mean(axis=0),
                               atol=1e-15)


@given(seed=st.integers(0, 10 ** 6))
def test_bayes_model_has_zero_sq_excess(seed):
    rng = np.random.default_rng(seed)
    m = sample_matrix(5, 6, "gaussian", seed=seed)
    dist = random_distribution(7, 5, rng)
    assert excess_sq_risk(bayes_optimal_model(dist, m), dist, m) <= 1e-12


def test_bayes_model_lossless_under_large_margin():
    eps = 0.2
    m = sample_gram_matrix(8, 16, 0.9 * eps / 4, seed=5)
    dist = massart_distribution(20, 8, np.random.default_rng(5), min_gap=2 * eps + 0.01)
    assert excess_01_risk(bayes_optimal_model(dist, m), dist, m) == 0.0


def test_constant_model_single_point():
    m = standard_basis_matrix(3)
    dist = _single([0.0, 1.0, 0.0])
    f = lambda i: m.columns[1]
    assert excess_01_risk(f, dist, m) == 0.0
    assert excess_sq_risk(f, dist, m) == 0.0


def test_risks_match_enumeration_oracle_m5_c4():
    rng = np.random.default_rng(6)
    m = sample_matrix(4, 3, "gaussian", seed=6)
    dist = random_distribution(5, 4, rng)
    F = rng.standard_normal((5, 3))
    r01 = sq = bayes01 = bayes_sq = 0.0
    p_star = dist.eta @ m.columns
    for x in range(5):
        yhat = int(np.argmin([np.sum((F[x] - g) ** 2) for g in m.columns]))
        for y in range(4):
            w = dist.marginal[x] * dist.eta[x, y]
            r01 += w * (yhat != y)
            sq += w * 0.5 * np.sum((F[x] - m.columns[y]) ** 2)
            bayes_sq += w * 0.5 * np.sum((p_star[x] - m.columns[y]) ** 2)
        bayes01 += dist.marginal[x] * (1 - dist.eta[x].max())
    assert bayes_risk_01(dist) == pytest.approx(bayes01, abs=1e-12)
    assert excess_01_risk(F, dist, m) == pytest.approx(r01 - bayes01, abs=1e-12)
    assert excess_sq_risk(F, dist, m) == pytest.approx(sq - bayes_sq, abs=1e-12)


def test_model_table_errors():
    with pytest.raises(DomainError):
        model_table({0: np.zeros(2)}.__getitem__, 2, 2)
    with pytest.raises(DomainError):
        model_table(np.zeros((1, 2)), 2, 2)
    with pytest.raises(DimensionError):
        model_table(np.zeros((2, 3)), 2, 2)


# -- multilabel --------------------------------------------------------------

def test_hamming_loss_examples():
    assert hamming_loss([1, 0, 1], [1, 0, 1]) == 0.0
    assert hamming_loss([1, 0, 1, 0], [1, 1, 0, 0]) == 0.5
    assert hamming_loss([1, 0, 0, 1], [0, 1, 1, 0]) == 1.0
    with pytest.raises(DimensionError):
        hamming_loss([1, 0], [1, 0, 0])


def test_conditional_hamming_risk_matches_outcome_enumeration():
    rng = np.random.default_rng(7)
    dist = random_multilabel_distribution(5, 5, 2, rng)
    book = MultilabelCodebook(standard_basis_matrix(5), 2)
    risks = multilabel_conditional_risks(dist, book)
    for x, table in enumerate(dist.outcomes):
        for r, yhat in enumerate(book.indicators):
            expected = 0.0
            for active, prob in table:
                y = np.zeros(5, dtype=int)
                y[list(active)] = 1
                expected += prob * hamming_loss(yhat, y)
            assert risks[x, r] == pytest.approx(expected, abs=1e-12)


def test_d_multilabel_examples():
    book = MultilabelCodebook(standard_basis_matrix(2), 1)
    dist = MultilabelSyntheticDistribution(
        np.array([1.0]), ((((0,), 0.7), ((1,), 0.2), ((), 0.1)),), 2, 1)
    assert d_multilabel(dist, book)[0] == pytest.approx(0.2, abs=1e-12)
    flat = MultilabelSyntheticDistribution(
        np.array([1.0]), ((((0,), 0.5), ((1,), 0.5)),), 2, 2)
    assert d_multilabel(flat, MultilabelCodebook(standard_basis_matrix(2), 2))[0] == np.inf


def test_multilabel_bayes_model_zero_excess():
    m = standard_basis_matrix(4)
    dist = MultilabelSyntheticDistribution(
        np.full(4, 0.25), tuple((((c,), 1.0),) for c in range(4)), 4, 1)
    f = multilabel_bayes_model(dist, m)
    assert hamming_excess_risk(f, dist, m) == 0.0


def test_k1_one_hot_consistency_with_multiclass():
    rng = np.random.default_rng(8)
    C = 5
    m = sample_gram_matrix(C, 8, 0.05, seed=8)
    for _ in range(20):
        eta = []
        for _ in range(6):
            row = rng.dirichlet(np.ones(C)) * 0.4
            row[rng.integers(C)] += 0.6
            eta.append(row / row.sum())
        eta = np.array(eta)
        pi = rng.dirichlet(np.ones(6))
        mc = SyntheticDistribution(pi, eta)
        ml = MultilabelSyntheticDistribution(
            pi, tuple(tuple(((c,), float(row[c])) for c in range(C)) for row in eta), C, 1)
        # f near a random column: the exact decoder never prefers the empty set
        F = m.columns[rng.integers(C, size=6)] + 0.05 * rng.standard_normal((6, 8))
        book = MultilabelCodebook(m, 1)
        winners, _ = book.nearest_batch(F)
        assert all(len(book.sets[w]) == 1 for w in winners)
        assert hamming_excess_risk(F, ml, m, book) == pytest.approx(
            2.0 / C * excess_01_risk(F, mc, m), abs=1e-12)
