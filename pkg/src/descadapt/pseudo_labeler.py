"""Candidate-set construction and teacher soft labels for generated queries."""

import random
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Protocol

from .dense_model import DenseIndex, EncoderParams
from .formats import Query
from .gen_client import GenerationError, GeneratorClient, GenRequest
from .lexical_index import InvertedIndex, search, tokenize

SAMPLES_PER_RETRIEVER = 25
POOL_DEPTH = 100


class TeacherScorer(Protocol):
    def score(self, query: str, relevance_notion: str, doc_text: str) -> float: ...


class LabelingError(RuntimeError):
    def __init__(self, query_id: str, message: str):
        super().__init__(f"labeling query {query_id} failed: {message}")
        self.query_id = query_id


@dataclass
class CandidateSet:
    query_id: str
    doc_ids: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def add(self, doc_id: str, source: str) -> None:
        if doc_id not in self.provenance:
            self.doc_ids.append(doc_id)
            self.provenance[doc_id] = source

    def __len__(self):
        return len(self.doc_ids)

    def __contains__(self, doc_id):
        return doc_id in self.provenance


class BM25Teacher:
    """Offline teacher: BM25 of the query against the document text, using the
    collection statistics of ``index``. The relevance notion is ignored."""

    def __init__(self, index: InvertedIndex):
        self.index = index

    def score(self, query: str, relevance_notion: str, doc_text: str) -> float:
        tokens = tokenize(doc_text)
        return self.index.score_counts(tokenize(query), Counter(tokens), len(tokens))


class ConstantTeacher:
    def __init__(self, value: float):
        self.value = value

    def score(self, query, relevance_notion, doc_text) -> float:
        return self.value


class RemoteTeacher:
    """Teacher served through a generation endpoint that answers with a number."""

    def __init__(self, client: GeneratorClient):
        self.client = client

    def score(self, query: str, relevance_notion: str, doc_text: str) -> float:
        prompt = (
            "Score how relevant the Document is to the Query under the given relevance notion. "
            "Answer with a single number.\n"
            f"Relevance notion: {relevance_notion}\nQuery: {query}\nDocument: {doc_text}\nScore:"
        )
        text = self.client.complete(GenRequest(prompt, max_tokens=8)).text
        m = re.search(r"-?\d+(?:\.\d+)?(?:[eE]-?\d+)?", text)
        if not m:
            raise GenerationError(f"teacher reply is not numeric: {text!r}")
        return float(m.group())


def query_rng(rng_seed: int, query_id: str) -> random.Random:
    return random.Random(f"{rng_seed}:{query_id}")


def _sample(rng: random.Random, pool: list, n: int) -> list:
    return list(pool) if len(pool) <= n else rng.sample(pool, n)


def build_candidates(
    q: Query,
    bm25_index: InvertedIndex,
    student: Optional[EncoderParams] = None,
    rng_seed: int = 0,
    dense_index: Optional[DenseIndex] = None,
) -> CandidateSet:
    """Source document, then 25 random picks from the BM25 top-100, then 25
    random picks from the student's dense top-100 (the whole pool if smaller).

    The RNG is seeded by ``(rng_seed, query id)`` so results do not depend on
    the order in which queries are processed.
    """
    if q.source_doc_id not in bm25_index.docs:
        raise ValueError(f"source document {q.source_doc_id!r} of query {q.id!r} is not in the corpus")
    rng = query_rng(rng_seed, q.id)
    cands = CandidateSet(q.id)
    cands.add(q.source_doc_id, "source")
    bm25_pool = [d for d, _ in search(bm25_index, q.text, POOL_DEPTH)]
    for d in _sample(rng, bm25_pool, SAMPLES_PER_RETRIEVER):
        cands.add(d, "bm25_sample")
    if dense_index is None and student is not None:
        dense_index = DenseIndex(student, bm25_index.docs.values())
    if dense_index is not None:
        dense_pool = [d for d, _ in dense_index.search(q.text, POOL_DEPTH)]
        for d in _sample(rng, dense_pool, SAMPLES_PER_RETRIEVER):
            cands.add(d, "dense_sample")
    return cands


def label(q: Query, cands: CandidateSet, r_attr: Optional[str], teacher: TeacherScorer, docs: dict) -> dict:
    """``{doc_id: teacher score}`` for every candidate, in candidate order."""
    notion = r_attr or ""
    out = {}
    for doc_id in cands.doc_ids:
        try:
            out[doc_id] = float(teacher.score(q.text, notion, docs[doc_id].text))
        except Exception as exc:
            raise LabelingError(q.id, f"{type(exc).__name__}: {exc}") from exc
    return out


def label_all(queries, bm25_index: InvertedIndex, student, r_attr, teacher: TeacherScorer, rng_seed: int = 0):
    """Candidates and labels for every query. Returns ``(candidates, labels)`` dicts keyed by qid."""
    dense_index = DenseIndex(student, bm25_index.docs.values()) if student is not None else None
    candidates, labels = {}, {}
    for q in queries:
        cands = build_candidates(q, bm25_index, rng_seed=rng_seed, dense_index=dense_index)
        candidates[q.id] = cands
        labels[q.id] = label(q, cands, r_attr, teacher, bm25_index.docs)
    return candidates, labels


def label_rows(candidates: dict, labels: dict) -> list:
    rows = []
    for qid, cands in candidates.items():
        for doc_id in cands.doc_ids:
            rows.append({"qid": qid, "docid": doc_id, "score": labels[qid][doc_id], "provenance": cands.provenance[doc_id]})
    return rows


def from_label_rows(rows) -> tuple:
    candidates, labels = {}, {}
    for row in rows:
        qid = str(row["qid"])
        cands = candidates.setdefault(qid, CandidateSet(qid))
        cands.add(str(row["docid"]), row.get("provenance", "source"))
        labels.setdefault(qid, {})[str(row["docid"])] = float(row["score"])
    return candidates, labels
