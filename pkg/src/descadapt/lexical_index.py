"""Tokenizer and BM25 inverted index."""

import math
import re
from collections import Counter
from typing import Iterable, Optional

from .formats import Document

_TOKEN = re.compile(r"[a-z0-9]+")

DEFAULT_K1 = 0.9
DEFAULT_B = 0.4


def tokenize(text: str) -> list:
    """Lowercase and split on anything that is not an ASCII letter or digit."""
    return _TOKEN.findall((text or "").lower())


class InvertedIndex:
    """BM25 index over a fixed list of documents. Immutable after construction.

    Documents are kept so retrieved ids can be turned back into text.
    """

    def __init__(self, corpus: Iterable[Document], k1: float = DEFAULT_K1, b: float = DEFAULT_B):
        self.k1 = k1
        self.b = b
        self.docs: dict = {}
        self.doc_lengths: dict = {}
        self.postings: dict = {}
        for doc in corpus:
            if doc.id in self.docs:
                raise ValueError(f"duplicate document id: {doc.id!r}")
            self.docs[doc.id] = doc
            tokens = tokenize(doc.text)
            self.doc_lengths[doc.id] = len(tokens)
            for term, tf in Counter(tokens).items():
                self.postings.setdefault(term, []).append((doc.id, tf))
        self.num_docs = len(self.docs)
        self.avg_doc_length = (sum(self.doc_lengths.values()) / self.num_docs) if self.num_docs else 0.0
        self._norm = {d: self._length_norm(n) for d, n in self.doc_lengths.items()}
        self._tf = None

    def _length_norm(self, length: int) -> float:
        if self.avg_doc_length == 0:
            return self.k1 * (1 - self.b)
        return self.k1 * (1 - self.b + self.b * length / self.avg_doc_length)

    def __len__(self) -> int:
        return self.num_docs

    def __contains__(self, doc_id) -> bool:
        return doc_id in self.docs

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        df = self.df(term)
        return math.log(1 + (self.num_docs - df + 0.5) / (df + 0.5))

    def term_frequency(self, term: str, doc_id: str) -> int:
        if self._tf is None:
            self._tf = {(t, d): tf for t, plist in self.postings.items() for d, tf in plist}
        return self._tf.get((term, doc_id), 0)

    def score_counts(self, query_terms: Iterable[str], counts: Counter, length: int) -> float:
        """BM25 of an arbitrary text (given as term counts) using this index's statistics."""
        norm = self._length_norm(length)
        total = 0.0
        for term in sorted(set(query_terms)):
            tf = counts.get(term, 0)
            if tf and term in self.postings:
                total += self.idf(term) * tf * (self.k1 + 1) / (tf + norm)
        return total


def build_index(corpus: Iterable[Document], k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> InvertedIndex:
    return InvertedIndex(corpus, k1=k1, b=b)


def bm25_score(index: InvertedIndex, query_tokens: Iterable[str], doc_id: str) -> float:
    if doc_id not in index.docs:
        raise ValueError(f"unknown document id: {doc_id!r}")
    norm = index._norm[doc_id]
    total = 0.0
    for term in sorted(set(query_tokens)):
        tf = index.term_frequency(term, doc_id)
        if tf:
            total += index.idf(term) * tf * (index.k1 + 1) / (tf + norm)
    return total


def search(index: InvertedIndex, query_text: str, top_k: int, max_query_tokens: Optional[int] = None) -> list:
    """Top-k ``(doc_id, score)`` over documents sharing at least one query term.

    Ties are broken by ascending doc id.
    """
    if top_k <= 0:
        return []
    tokens = tokenize(query_text)
    if max_query_tokens is not None:
        tokens = tokens[:max_query_tokens]
    scores: dict = {}
    k1p = index.k1 + 1
    for term in sorted(set(tokens)):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        norm = index._norm
        for doc_id, tf in plist:
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * k1p / (tf + norm[doc_id])
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:top_k]
