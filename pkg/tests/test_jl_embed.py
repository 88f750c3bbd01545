import math
import struct

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import sparse

from labelembed.dataio import MultilabelDataset, SparseDataset
from labelembed.errors import (
    ArtifactError, DimensionError, DomainError, LabelRangeError, SparsityError,
)
from labelembed.jl_embed import (
    EmbeddingMatrix, embed_dataset, embed_labelvec, embed_multilabel_dataset,
    load_matrix, matrix_from_bytes, matrix_from_json, matrix_to_bytes,
    matrix_to_json, sample_gram_matrix, sample_matrix, save_matrix,
    standard_basis_matrix, suggest_dim, verify_jlp, verify_jlp_family,
)


def gram_oracle(cols):
    """Dense JLP epsilon straight from the definition."""
    C = cols.shape[0]
    worst = 0.0
    for i in range(C):
        worst = max(worst, abs(float(np.dot(cols[i], cols[i])) - 1.0))
        for j in range(i + 1, C):
            worst = max(worst, abs(float(np.dot(cols[i], cols[j]))))
    return worst


# -- sampling ----------------------------------------------------------------

def test_rademacher_entries_and_norms():
    m = sample_matrix(4, 9, "rademacher", seed=7)
    assert m.columns.shape == (4, 9)
    assert np.all(np.abs(m.columns) == 1 / 3)
    np.testing.assert_allclose(np.linalg.norm(m.columns, axis=1), 1.0, rtol=1e-12)


def test_gaussian_shape_contract():
    m = sample_matrix(2, 1, "gaussian", seed=0)
    assert m.columns.shape == (2, 1)
    assert m.num_classes == 2 and m.embed_dim == 1
    assert m.G.shape == (1, 2)


def test_gaussian_moments_over_seeds():
    norms = [np.sum(sample_matrix(50, 64, "gaussian", seed=s).columns ** 2, axis=1)
             for s in range(20)]
    norms = np.concatenate(norms)
    # E|g|^2 = 1 and Var|g|^2 = 2/n, so the mean of 1000 norms is within ~5 s.e.
    assert abs(norms.mean() - 1.0) < 5 * math.sqrt(2 / 64 / norms.size)
    entries = sample_matrix(200, 200, "gaussian", seed=3).columns.ravel()
    assert abs(entries.mean()) < 5 * math.sqrt(1 / 200 / entries.size)
    assert abs(entries.var() * 200 - 1.0) < 0.03


@pytest.mark.parametrize("kind", ["gaussian", "rademacher"])
def test_sampling_is_deterministic(kind):
    a = sample_matrix(30, 17, kind, seed=2 ** 64 - 1)
    b = sample_matrix(30, 17, kind, seed=2 ** 64 - 1)
    c = sample_matrix(30, 17, kind, seed=5)
    assert a == b
    assert a.columns.tobytes() == b.columns.tobytes()
    assert not np.array_equal(a.columns, c.columns)


@pytest.mark.parametrize("C,n", [(1, 4), (0, 4), (3, 0)])
def test_sample_rejects_bad_dimensions(C, n):
    with pytest.raises(DimensionError):
        sample_matrix(C, n)


def test_sample_rejects_unknown_kind():
    with pytest.raises(DomainError):
        sample_matrix(3, 3, "sparse")


def test_columns_are_read_only():
    m = sample_matrix(3, 4)
    with pytest.raises(ValueError):
        m.columns[0, 0] = 1.0


def test_gram_matrix_prescribed_coherence():
    m = sample_gram_matrix(20, 32, 0.05, seed=1)
    gram = m.columns @ m.columns.T
    np.testing.assert_allclose(np.diag(gram), 1.0, atol=1e-12)
    off = gram - np.eye(20)
    assert np.max(np.abs(off)) <= 0.05 + 1e-12
    assert verify_jlp(m, 0.05).passed
    with pytest.raises(DimensionError):
        sample_gram_matrix(10, 5, 0.1)


# -- suggest_dim -------------------------------------------------------------

def _mp_dim(C, eps, delta, c0):
    mpmath.mp.dps = 50
    val = mpmath.mpf(c0) / mpmath.mpf(eps) ** 2 * mpmath.log(mpmath.mpf(C) / mpmath.mpf(delta))
    return max(1, int(mpmath.ceil(val)))


def test_suggest_dim_examples():
    assert suggest_dim(math.e, 1.0, 1.0, 1.0) == 1
    assert suggest_dim(1000, 0.25, 0.1, 4) == 590
    assert suggest_dim(2, 0.9, 0.5, 1) == 2
    assert _mp_dim(1000, 0.25, 0.1, 4) == 590
    assert _mp_dim(2, 0.9, 0.5, 1) == 2


@given(C=st.integers(2, 10 ** 6), eps=st.floats(0.05, 0.99), delta=st.floats(0.001, 0.99),
       c0=st.floats(0.5, 8))
def test_suggest_dim_matches_arbitrary_precision(C, eps, delta, c0):
    exact = (mpmath.mpf(c0) / mpmath.mpf(eps) ** 2
             * mpmath.log(mpmath.mpf(C) / mpmath.mpf(delta)))
    got = suggest_dim(C, eps, delta, c0)
    # agree unless the exact value sits within rounding of an integer
    if abs(exact - mpmath.nint(exact)) > 1e-9:
        assert got == max(1, int(mpmath.ceil(exact)))


@pytest.mark.parametrize("eps,delta,c0", [(0, 0.1, 4), (1.5, 0.1, 4), (0.5, 0, 4),
                                          (0.5, 2, 4), (0.5, 0.1, 0)])
def test_suggest_dim_domain(eps, delta, c0):
    with pytest.raises(DomainError):
        suggest_dim(10, eps, delta, c0)


# -- verify_jlp --------------------------------------------------------------

def test_verify_standard_basis_is_exact():
    rep = verify_jlp(EmbeddingMatrix(np.eye(6), "gram", 0), 0.0)
    assert rep.epsilon_observed == 0.0
    assert rep.passed
    assert rep.pairs_tested == 6 + 15


def test_verify_single_scaled_column():
    cols = np.eye(3)
    cols[1] *= math.sqrt(2)
    rep = verify_jlp(EmbeddingMatrix(cols, "gram", 0), 0.5)
    assert rep.epsilon_observed == pytest.approx(1.0, abs=1e-15)
    assert not rep.passed


def test_verify_matches_dense_gram_oracle():
    m = sample_matrix(100, 512, "rademacher", seed=11)
    rep = verify_jlp(m, 0.3)
    assert abs(rep.epsilon_observed - gram_oracle(m.columns)) <= 1e-12
    assert rep.pairs_tested == 100 + 100 * 99 // 2
    assert rep.exhaustive


@given(C=st.integers(2, 40), n=st.integers(1, 40), seed=st.integers(0, 2 ** 32))
def test_verify_property_against_oracle(C, n, seed):
    m = sample_matrix(C, n, "gaussian", seed)
    assert abs(verify_jlp(m, 1.0).epsilon_observed - gram_oracle(m.columns)) <= 1e-12


def test_verify_family_on_basis_vectors_equals_verify_jlp():
    m = sample_matrix(12, 30, "rademacher", seed=4)
    fam = verify_jlp_family(m, np.eye(12), 1.0)
    assert fam.epsilon_observed == pytest.approx(verify_jlp(m, 1.0).epsilon_observed,
                                                 abs=1e-12)


# -- embedding datasets ------------------------------------------------------

def _dataset(labels, C, D=3):
    X = sparse.random(len(labels), D, density=0.5, format="csr", random_state=0)
    return SparseDataset(X, np.asarray(labels, dtype=np.int64), C)


def test_embed_single_example():
    m = sample_matrix(5, 7, seed=1)
    reg = embed_dataset(_dataset([2], 5), m)
    np.testing.assert_array_equal(reg.targets[0], m.columns[2])


def test_embed_empty_dataset():
    m = sample_matrix(5, 7, seed=1)
    reg = embed_dataset(_dataset([], 5), m)
    assert reg.targets.shape == (0, 7)


def test_embed_rows_match_columns():
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 20, size=100)
    m = sample_matrix(20, 16, seed=9)
    data = _dataset(labels, 20)
    reg = embed_dataset(data, m)
    assert reg.X is data.X
    for i, y in enumerate(labels):
        assert np.array_equal(reg.targets[i], m.columns[y])


def test_embed_reports_offending_row():
    m = sample_matrix(3, 4)
    data = _dataset([0, 1, 2], 4)
    data_bad = SparseDataset(data.X, np.array([0, 3, 1]), 4)
    with pytest.raises(LabelRangeError, match="row 1"):
        embed_dataset(data_bad, m)


@given(seed=st.integers(0, 1000))
def test_embedding_commutes_with_label_permutation(seed):
    rng = np.random.default_rng(seed)
    C = 8
    labels = rng.integers(0, C, size=30)
    perm = rng.permutation(C)
    m = sample_matrix(C, 5, seed=seed)
    permuted = EmbeddingMatrix(m.columns[np.argsort(perm)], m.kind, m.seed)
    a = embed_dataset(_dataset(labels, C), m).targets
    b = embed_dataset(_dataset(perm[labels], C), permuted).targets
    assert np.array_equal(a, b)


def test_embed_labelvec_examples():
    m = sample_matrix(6, 5, seed=3)
    assert np.array_equal(embed_labelvec(np.zeros(6, int), m), np.zeros(5))
    e = np.zeros(6, int)
    e[4] = 1
    np.testing.assert_array_equal(embed_labelvec(e, m), m.columns[4])
    y = np.array([1, 0, 1, 0, 0, 0])
    np.testing.assert_allclose(embed_labelvec(y, m), m.G @ y, rtol=0, atol=1e-15)
    with pytest.raises(SparsityError):
        embed_labelvec(np.ones(6, int), m, max_labels=2)
    with pytest.raises(DimensionError):
        embed_labelvec(np.ones(5, int), m)


@given(a=st.sets(st.integers(0, 9), max_size=3), b=st.sets(st.integers(0, 9), max_size=3))
def test_embed_labelvec_linear_on_disjoint_supports(a, b):
    b = b - a
    m = sample_matrix(10, 6, seed=0)
    ya = np.zeros(10, int)
    ya[list(a)] = 1
    yb = np.zeros(10, int)
    yb[list(b)] = 1
    np.testing.assert_allclose(embed_labelvec(ya + yb, m, 6),
                               embed_labelvec(ya, m) + embed_labelvec(yb, m), atol=1e-14)


def test_embed_multilabel_dataset():
    m = sample_matrix(5, 4, seed=2)
    X = sparse.csr_matrix(np.ones((2, 3)))
    data = MultilabelDataset(X, ((0, 3), ()), 5, 2)
    reg = embed_multilabel_dataset(data, m)
    np.testing.assert_allclose(reg.targets[0], m.columns[0] + m.columns[3])
    assert np.array_equal(reg.targets[1], np.zeros(4))


# -- persistence -------------------------------------------------------------

@pytest.mark.parametrize("kind", ["gaussian", "rademacher"])
def test_binary_round_trip(tmp_path, kind):
    m = sample_matrix(7, 5, kind, seed=2 ** 63 + 5)
    path = tmp_path / "g.bin"
    save_matrix(m, path)
    assert load_matrix(path) == m
    raw = path.read_bytes()
    magic, version, C, n, code, seed = struct.unpack_from("<4sIQQBQ", raw)
    assert (magic, version, C, n, seed) == (b"JLEM", 1, 7, 5, 2 ** 63 + 5)
    # columns stored one after another, little-endian f64
    first = np.frombuffer(raw, "<f8", 5, struct.calcsize("<4sIQQBQ"))
    assert np.array_equal(first, m.columns[0])


def test_binary_rejects_corruption():
    buf = matrix_to_bytes(sample_matrix(3, 2))
    with pytest.raises(ArtifactError):
        matrix_from_bytes(buf[:-1])
    with pytest.raises(ArtifactError):
        matrix_from_bytes(b"XXXX" + buf[4:])
    with pytest.raises(ArtifactError):
        matrix_from_bytes(buf[:4] + struct.pack("<I", 9) + buf[8:])
    with pytest.raises(ArtifactError):
        matrix_from_bytes(buf[:10])


def test_json_round_trip():
    m = sample_matrix(4, 3, "gaussian", seed=8)
    assert matrix_from_json(matrix_to_json(m)) == m


def test_standard_basis():
    m = standard_basis_matrix(4)
    assert np.array_equal(m.columns, np.eye(4))
