"""Attribute-conditioned query generation, k' queries per corpus document."""

import logging
import math
import re
from collections import Counter
from typing import Optional, Sequence

from .formats import Document, Query
from .gen_client import GenerationError, GeneratorClient, GenRequest
from .lexical_index import tokenize
from .taxonomy import QUERY_KEYS, display_key

log = logging.getLogger(__name__)

QG_INSTRUCTION = "Generate a query for the following Passage based on the given Attributes."
WINDOW = 3
_LINE_PREFIX = re.compile(r"^\s*(?:[-*•]|\d+[.)]|q\d*[:.)])\s*", re.IGNORECASE)


def _specified_attributes(q_attr: dict, r_attr: Optional[str]) -> str:
    pairs = [f"{display_key(k)}: {q_attr[k]}" for k in QUERY_KEYS if q_attr.get(k)]
    if r_attr:
        pairs.append(f"relevance notion: {r_attr}")
    return "; ".join(pairs)


def build_qg_prompt(doc: Document, q_attr: dict, r_attr: Optional[str]) -> str:
    text = doc.text.strip().rstrip(".")
    return f"{QG_INSTRUCTION} Passage: {text}. Attributes: {_specified_attributes(q_attr, r_attr)}."


class FallbackGenerator:
    """Keyword queries from a document's highest tf-idf terms.

    Terms are ranked by ``tf * ln(1 + n/df)`` against the corpus (ties by first
    occurrence) and queries are sliding windows over that ranking, widest
    windows first. A question-format domain gets an interrogative prefix.
    """

    def __init__(self, corpus: Sequence[Document], q_attr: Optional[dict] = None):
        self.n = len(corpus)
        self.df = Counter()
        for d in corpus:
            self.df.update(set(tokenize(d.text)))
        fmt = (q_attr or {}).get("query_format") or ""
        self.question = "question" in fmt

    def ranked_terms(self, text: str) -> list:
        tokens = tokenize(text)
        tf = Counter(tokens)
        first = {}
        for i, t in enumerate(tokens):
            first.setdefault(t, i)
        n = max(self.n, 1)

        def weight(t):
            return tf[t] * math.log(1 + n / max(self.df.get(t, 0), 1))

        return sorted(tf, key=lambda t: (-weight(t), first[t]))

    def candidates(self, text: str):
        terms = self.ranked_terms(text)
        for width in range(WINDOW, 0, -1):
            for start in range(0, max(len(terms) - width + 1, 0)):
                words = " ".join(terms[start : start + width])
                yield f"what is {words}?" if self.question else words

    def generate(self, text: str, k: int, exclude=()) -> list:
        out, seen = [], set(exclude)
        for cand in self.candidates(text):
            if cand not in seen:
                seen.add(cand)
                out.append(cand)
                if len(out) == k:
                    break
        return out


def _parse_lines(text: str) -> list:
    lines = []
    for raw in text.splitlines():
        line = _LINE_PREFIX.sub("", raw).strip()
        if line:
            lines.append(line)
    return lines


def generate_queries(
    corpus: Sequence[Document],
    q_attr: dict,
    r_attr: Optional[str],
    k_prime: int,
    client: Optional[GeneratorClient] = None,
    rng_seed: int = 0,
    warnings: Optional[list] = None,
    temperature: float = 0.7,
) -> list:
    """``k_prime`` distinct queries per document, in corpus order.

    With a client, one request per document asks for ``k_prime`` lines; empty
    or duplicate lines and failed requests are made up from the fallback.
    ``rng_seed`` is accepted for interface symmetry; the fallback is
    deterministic on its own.
    """
    if k_prime < 1:
        raise ValueError("k_prime must be >= 1")
    warnings = warnings if warnings is not None else []
    first_new = len(warnings)
    docs = list(corpus)
    fallback = FallbackGenerator(docs, q_attr)
    queries = []
    for doc in docs:
        texts: list = []
        if client is not None:
            prompt = build_qg_prompt(doc, q_attr, r_attr) + f"\nWrite {k_prime} queries, one per line."
            try:
                reply = client.complete(GenRequest(prompt, max_tokens=64 * k_prime, temperature=temperature)).text
                for line in _parse_lines(reply):
                    if line not in texts:
                        texts.append(line)
                texts = texts[:k_prime]
            except GenerationError as exc:
                warnings.append(f"query generation failed for {doc.id}: {exc}")
        if len(texts) < k_prime:
            texts += fallback.generate(doc.text, k_prime - len(texts), exclude=texts)
        if len(texts) < k_prime:
            warnings.append(f"only {len(texts)} distinct queries for document {doc.id}")
        queries.extend(Query(f"q-{doc.id}-{j}", t, doc.id) for j, t in enumerate(texts))
    new = warnings[first_new:]
    for w in new[:3]:
        log.warning(w)
    if len(new) > 3:
        log.warning("%d more query generation warnings suppressed", len(new) - 3)
    return queries
