import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from descadapt.formats import Document
from descadapt.lexical_index import bm25_score, build_index, search, tokenize
from oracles import brute_force_bm25


@pytest.fixture
def toy_index():
    return build_index([Document("d1", "cat cat dog"), Document("d2", "dog bird")])


@pytest.mark.parametrize(
    "text,tokens",
    [("Cat, cat! dog", ["cat", "cat", "dog"]), ("", []), ("COVID-19 pandemic", ["covid", "19", "pandemic"])],
)
def test_tokenize(text, tokens):
    assert tokenize(text) == tokens


def test_build_index_stats(toy_index):
    assert toy_index.num_docs == 2
    assert toy_index.avg_doc_length == 2.5
    assert {d for d, _ in toy_index.postings["dog"]} == {"d1", "d2"}
    for doc_id, length in toy_index.doc_lengths.items():
        assert sum(tf for plist in toy_index.postings.values() for d, tf in plist if d == doc_id) == length


def test_empty_index():
    ix = build_index([])
    assert ix.num_docs == 0 and ix.avg_doc_length == 0
    assert search(ix, "anything", 5) == []


def test_duplicate_id_rejected():
    with pytest.raises(ValueError, match="d1"):
        build_index([Document("d1", "a"), Document("d1", "b")])


def test_bm25_hand_value(toy_index):
    # idf = ln 2, tf = 2, len = 3, denominator = 2.972
    assert bm25_score(toy_index, ["cat"], "d1") == pytest.approx(0.8862, abs=1e-4)
    assert bm25_score(toy_index, ["zebra"], "d1") == 0.0
    assert bm25_score(toy_index, [], "d2") == 0.0


def test_bm25_unknown_doc(toy_index):
    with pytest.raises(ValueError):
        bm25_score(toy_index, ["cat"], "nope")


def test_search_examples(toy_index):
    hits = search(toy_index, "cat", 10)
    assert [d for d, _ in hits] == ["d1"]
    assert hits[0][1] == pytest.approx(0.8862, abs=1e-4)
    assert search(toy_index, "cat", 0) == []


def test_ties_by_doc_id():
    ix = build_index([Document("b", "x y"), Document("a", "x y"), Document("c", "z")])
    assert [d for d, _ in search(ix, "x", 5)] == ["a", "b"]


def _random_corpus(rng, n=20, vocab=12):
    words = [f"w{i}" for i in range(vocab)]
    return [Document(f"d{i:02d}", " ".join(rng.choices(words, k=rng.randint(0, 15)))) for i in range(n)]


def test_search_matches_brute_force():
    rng = random.Random(7)
    for _ in range(50):
        docs = _random_corpus(rng)
        ix = build_index(docs)
        query = " ".join(rng.choices([f"w{i}" for i in range(14)], k=rng.randint(1, 4)))
        expected = [(d.id, brute_force_bm25(docs, query, d.id)) for d in docs]
        expected = sorted((e for e in expected if e[1] > 0), key=lambda e: (-e[1], e[0]))
        got = search(ix, query, 20)
        assert [d for d, _ in got] == [d for d, _ in expected]
        for (_, s1), (_, s2) in zip(got, expected):
            assert s1 == pytest.approx(s2, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 19))
def test_search_prefix_property(seed, k):
    rng = random.Random(seed)
    ix = build_index(_random_corpus(rng))
    q = " ".join(rng.choices([f"w{i}" for i in range(12)], k=3))
    assert search(ix, q, k) == search(ix, q, k + 1)[:k]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_scores_non_negative_and_finite(seed):
    rng = random.Random(seed)
    docs = _random_corpus(rng)
    ix = build_index(docs)
    q = " ".join(rng.choices([f"w{i}" for i in range(12)], k=4))
    for d in docs:
        s = bm25_score(ix, tokenize(q), d.id)
        assert s >= 0 and math.isfinite(s)


def test_adding_unrelated_doc_only_moves_stats():
    rng = random.Random(3)
    docs = _random_corpus(rng)
    q = "w1 w2"
    extra = Document("zz", "unrelated words only")
    bigger = build_index(docs + [extra])
    for d in docs:
        assert bm25_score(bigger, tokenize(q), d.id) == pytest.approx(brute_force_bm25(docs + [extra], q, d.id))
    assert bm25_score(bigger, tokenize(q), "zz") == 0.0
