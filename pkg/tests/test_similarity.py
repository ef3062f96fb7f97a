import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from outline_usage.similarity import (
    AlignmentMatrix,
    EmbeddingKeyError,
    EmbeddingTable,
    SimilarityBackend,
    alignment_matrix,
    normalize_rows,
    similarity,
)
from outline_usage.text_core import Sentence

UNI = SimilarityBackend("unigram-f1")
LCS = SimilarityBackend("rouge-l-f1")


def S(text, i=0):
    return Sentence.from_text(i, text)


def test_identical_is_one():
    assert similarity(UNI, S("the cat sat"), S("the cat sat")) == 1.0
    assert similarity(LCS, S("the cat sat"), S("the cat sat")) == 1.0


def test_disjoint_is_zero():
    assert similarity(UNI, S("red fox"), S("blue whale")) == 0.0


def test_unigram_f1_hand_value():
    # P = 1, R = 2/3  ->  F1 = 0.8
    assert similarity(UNI, S("the cat"), S("the cat sat")) == pytest.approx(0.8, abs=1e-12)


def test_punctuation_ignored():
    assert similarity(UNI, S("Storm hits."), S("storm hits")) == 1.0


def test_rouge_l_backend_uses_order():
    a, b = S("a b c d"), S("a c b d")
    assert similarity(UNI, a, b) == 1.0
    assert similarity(LCS, a, b) == pytest.approx(0.75)


def test_unknown_backend():
    with pytest.raises(ValueError):
        SimilarityBackend("bm25")


def _table(tmp_path, rows):
    f = tmp_path / "emb.jsonl"
    f.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    return f


def test_embedding_cosine(tmp_path):
    f = _table(tmp_path, [
        {"key": "a.", "vector": [1.0, 0.0]},
        {"key": "b.", "vector": [0.0, 1.0]},
        {"key": "c.", "vector": [-1.0, 0.0]},
    ])
    be = SimilarityBackend("embedding-cosine", EmbeddingTable.load(f))
    assert similarity(be, S("a."), S("a.")) == pytest.approx(1.0)
    assert similarity(be, S("a."), S("b.")) == pytest.approx(0.5)
    assert similarity(be, S("a."), S("c.")) == pytest.approx(0.0)


def test_embedding_missing_key_names_it(tmp_path):
    be = SimilarityBackend("embedding-cosine", EmbeddingTable.load(_table(tmp_path, [{"key": "a.", "vector": [1.0]}])))
    with pytest.raises(EmbeddingKeyError, match="nowhere"):
        similarity(be, S("a."), S("nowhere"))


def test_embedding_dimension_mismatch(tmp_path):
    f = _table(tmp_path, [{"key": "a", "vector": [1.0, 2.0]}, {"key": "b", "vector": [1.0]}])
    with pytest.raises(ValueError, match="line 2"):
        EmbeddingTable.load(f)


def test_embedding_rejects_nan(tmp_path):
    f = tmp_path / "e.jsonl"
    f.write_text('{"key": "a", "vector": [NaN, 1.0]}\n', encoding="utf-8")
    with pytest.raises(ValueError):
        EmbeddingTable.load(f)


def test_zero_row_is_uniform():
    d = normalize_rows(np.array([[0.0, 0.0, 0.0]]), 1e-6)
    assert d.tolist() == [[1 / 3, 1 / 3, 1 / 3]]


def test_equal_row():
    assert normalize_rows(np.array([[1.0, 1.0]]), 0.3).tolist() == [[0.5, 0.5]]


def test_smoothed_row_close_to_raw():
    # (0.8 + 1e-6) / (1 + 2e-6) differs from 0.8 by about 6e-7
    d = normalize_rows(np.array([[0.8, 0.2]]), 1e-6)
    assert np.allclose(d, [[0.8, 0.2]], atol=1e-5)


def test_alignment_rejects_empty():
    with pytest.raises(ValueError):
        alignment_matrix(UNI, [], [S("x")])
    with pytest.raises(ValueError):
        alignment_matrix(UNI, [S("x")], [])
    with pytest.raises(ValueError):
        alignment_matrix(UNI, [S("x")], [S("x")], epsilon=0)


def test_alignment_shape_and_rows():
    outline = [S("storm floods coast"), S("governor declares emergency")]
    text = [S("A storm floods the coast.", 0), S("Crews work.", 1), S("The governor declares an emergency.", 2)]
    m = alignment_matrix(UNI, outline, text)
    assert isinstance(m, AlignmentMatrix)
    assert m.raw.shape == m.distributions.shape == (2, 3)
    assert m.sentence_count == 3
    assert np.argmax(m.distributions[0]) == 0 and np.argmax(m.distributions[1]) == 2


matrices = hnp.arrays(
    float,
    st.tuples(st.integers(1, 6), st.integers(1, 12)),
    elements=st.one_of(st.just(0.0), st.floats(0, 1)),
)


@given(matrices, st.sampled_from([1e-9, 1e-6, 1e-3, 0.5]))
def test_rows_are_distributions(raw, eps):
    d = normalize_rows(raw, eps)
    assert d.shape == raw.shape
    assert np.all(d > 0)
    assert np.allclose(d.sum(axis=1), 1.0, atol=1e-9, rtol=0)


@given(matrices, st.randoms())
def test_permutation_equivariance(raw, rnd):
    perm = list(range(raw.shape[1]))
    rnd.shuffle(perm)
    assert np.allclose(normalize_rows(raw[:, perm]), normalize_rows(raw)[:, perm], atol=1e-15)


words = st.lists(st.sampled_from(["storm", "coast", "flood", "mayor", "river", "."]), max_size=8).map(" ".join)


@given(words, words)
def test_lexical_backends_symmetric(a, b):
    for be in (UNI, LCS):
        assert similarity(be, S(a), S(b)) == similarity(be, S(b), S(a))
        assert 0.0 <= similarity(be, S(a), S(b)) <= 1.0


@given(st.lists(words, min_size=1, max_size=3), st.lists(words, min_size=1, max_size=6))
def test_alignment_deterministic(outline, text):
    o = [S(t, i) for i, t in enumerate(outline)]
    y = [S(t, i) for i, t in enumerate(text)]
    a, b = alignment_matrix(UNI, o, y), alignment_matrix(UNI, o, y)
    assert a.raw.tobytes() == b.raw.tobytes()
    assert a.distributions.tobytes() == b.distributions.tobytes()
