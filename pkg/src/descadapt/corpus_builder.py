"""Seed-document generation and iterative corpus construction from a large collection."""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .formats import Document
from .gen_client import GenerationError, GeneratorClient, GenRequest
from .lexical_index import InvertedIndex, search
from .taxonomy import DOCUMENT_KEYS, serialize_attributes

log = logging.getLogger(__name__)

SEED_INSTRUCTION = "Write one passage that could appear in a document collection with the following attributes."


@dataclass
class BuildConfig:
    N: int = 10_000
    k: int = 30
    num_seeds: int = 1
    max_iterations: int = 100_000
    rng_seed: int = 0
    max_query_tokens: int = 512

    def __post_init__(self):
        if self.N < 0:
            raise ValueError("N must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.num_seeds < 1:
            raise ValueError("num_seeds must be >= 1")


@dataclass
class SyntheticCorpus:
    docs: list = field(default_factory=list)
    # doc id -> (iteration, parent id)
    provenance: dict = field(default_factory=dict)
    iterations: int = 0
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.docs)

    def __iter__(self):
        return iter(self.docs)

    @property
    def ids(self) -> list:
        return [d.id for d in self.docs]

    def provenance_rows(self) -> list:
        return [{"id": d.id, "iteration": self.provenance[d.id][0], "parent": self.provenance[d.id][1]} for d in self.docs]


def seed_prompt(d_attr: dict) -> str:
    attrs = serialize_attributes(d_attr, keys=DOCUMENT_KEYS, skip_na=True)
    return f"{SEED_INSTRUCTION}\nAttributes:\n{attrs}\nPassage:"


def fallback_seed_text(d_attr: dict) -> str:
    return " ".join(d_attr[k] for k in DOCUMENT_KEYS if d_attr.get(k))


def generate_seed(
    d_attr: dict,
    client: Optional[GeneratorClient] = None,
    index: int = 0,
    warnings: Optional[list] = None,
    max_tokens: int = 512,
) -> Document:
    """Ask the generator for one passage with the given document attributes.

    Without a client, or when the client fails or answers with nothing, the
    seed is the concatenation of the specified attribute values.
    """
    warnings = warnings if warnings is not None else []
    first_new = len(warnings)
    doc_id = f"seed-{index}"
    if client is not None:
        try:
            text = client.complete(GenRequest(seed_prompt(d_attr), max_tokens=max_tokens)).text.strip()
            if text:
                return Document(doc_id, text, source_tag="seed")
            warnings.append("seed generation returned empty text; using attribute fallback")
        except GenerationError as exc:
            warnings.append(f"seed generation failed ({exc}); using attribute fallback")
    text = fallback_seed_text(d_attr)
    if client is None:
        warnings.append("no generator client; seed document built from attribute values")
    for w in warnings[first_new:]:
        log.warning(w)
    return Document(doc_id, text, source_tag="seed")


def build_corpus(
    seeds: Sequence[Document],
    w_index: InvertedIndex,
    cfg: BuildConfig,
    reranker: Optional[Callable[[str, str], float]] = None,
) -> SyntheticCorpus:
    """Breadth-first growth of the corpus from the seed documents.

    Each popped document is used (truncated to ``cfg.max_query_tokens``) as a
    BM25 query against the collection; unseen retrieved documents join both
    the corpus and the back of the queue. Stops once ``cfg.N`` documents are
    collected, the queue empties, or ``cfg.max_iterations`` is hit.
    """
    if not seeds:
        raise ValueError("at least one seed document is required")
    out = SyntheticCorpus()
    if cfg.N == 0:
        return out
    queue = deque(seeds[: cfg.num_seeds])
    enqueued = {d.id for d in queue}
    in_corpus = set()
    while len(out.docs) < cfg.N and queue and out.iterations < cfg.max_iterations:
        d = queue.popleft()
        out.iterations += 1
        hits = search(w_index, d.text, cfg.k, max_query_tokens=cfg.max_query_tokens)
        if reranker is not None:
            rescored = [(doc_id, reranker(d.text, w_index.docs[doc_id].text)) for doc_id, _ in hits]
            hits = sorted(rescored, key=lambda kv: (-kv[1], kv[0]))
        for doc_id, _ in hits:
            if doc_id in in_corpus:
                continue
            doc = w_index.docs[doc_id]
            in_corpus.add(doc_id)
            out.docs.append(doc)
            out.provenance[doc_id] = (out.iterations, d.id)
            if doc_id not in enqueued:
                enqueued.add(doc_id)
                queue.append(doc)
    if len(out.docs) < cfg.N:
        reason = "queue exhausted" if not queue else "max_iterations reached"
        out.warnings.append(f"{reason}: collected {len(out.docs)} of {cfg.N} documents")
        log.warning(out.warnings[-1])
    del out.docs[cfg.N :]
    kept = set(out.ids)
    out.provenance = {k: v for k, v in out.provenance.items() if k in kept}
    return out


def reconstruction_accuracy(corpus, target_ids) -> float:
    docs = list(corpus)
    if not docs:
        return 0.0
    target_ids = set(target_ids)
    return sum(1 for d in docs if d.id in target_ids) / len(docs)
