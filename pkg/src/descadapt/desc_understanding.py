"""Turn a free-text domain description into taxonomy attributes.

A few-shot prompt is built from an instruction, up to three annotated
descriptions of other domains (picked by TF-IDF similarity to the target), and
the target description. The generator's answer is parsed with
``parse_attributes``.
"""

import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .eval_metrics import exact_match, rouge_l
from .gen_client import GenerationError, GeneratorClient, GenRequest, prompt_hash
from .lexical_index import tokenize
from .taxonomy import ATTRIBUTE_KEYS, NA, DomainAttributes, parse_attributes, serialize_attributes

DEFAULT_INSTRUCTION = (
    "For each defined retrieval task in the Passage, find the values related to the relevance notion "
    "(e.g., topically relevant, contains the answer, references of a paper, paraphrase, evidence for the "
    "claim, etc.) as well as the following query and document attributes: query topic (e.g., medical, "
    "scientific, financial, mathematical, adult, etc.); query linguistic features (e.g., formal, informal, "
    "etc.); query language (e.g., english, french, etc.); query structure (e.g., unstructured, "
    "semi-structured, structured, etc.); query modality (e.g., text, image, video, etc.); query format "
    "(e.g., keyword query, tail query, question, claim, argument, passage, etc.); document topic (e.g., "
    "medical, scientific, financial, mathematical, adult, etc.); document linguistic features (e.g., formal, "
    "informal, etc.); document language (e.g., english, french, etc.); document structure (e.g., "
    "unstructured, semi-structured, structured, etc.); document modality (e.g., text, image, video, etc.); "
    "document format (e.g., passage, long document, question, etc.); document source (e.g., StackExchange, "
    "wikipedia, reddit, youtube, twitter, facebook, quora, etc.).\n"
    "If the value of each attribute cannot be inferred, return NA"
)


@dataclass(frozen=True)
class DescriptionExample:
    name: str
    description: str
    gold: DomainAttributes

    def __post_init__(self):
        if not self.description.strip():
            raise ValueError(f"example {self.name!r} has an empty description")


class ExampleBank:
    def __init__(self, examples: Sequence[DescriptionExample] = ()):
        self.examples = list(examples)
        names = [e.name for e in self.examples]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise ValueError(f"duplicate example names: {sorted(dupes)}")

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @classmethod
    def load(cls, path) -> "ExampleBank":
        with open(path, encoding="utf-8") as fh:
            rows = json.load(fh)
        return cls(
            DescriptionExample(r["name"], r["description"], DomainAttributes.from_json(r.get("attributes", {})))
            for r in rows
        )

    def dump(self, path) -> None:
        rows = [{"name": e.name, "description": e.description, "attributes": e.gold.to_json()} for e in self]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)


@dataclass(frozen=True)
class PromptBundle:
    instruction: str
    examples: tuple
    target_description: str
    rendered: str


def tfidf_cosine(target: str, descriptions: Sequence[str]) -> list:
    """Cosine similarity of raw-tf x smoothed-idf unigram vectors.

    idf is ``ln((1 + n) / (1 + df)) + 1`` over the ``n`` descriptions.
    """
    n = len(descriptions)
    counts = [Counter(tokenize(d)) for d in descriptions]
    df = Counter(t for c in counts for t in c)
    idf = {t: math.log((1 + n) / (1 + f)) + 1 for t, f in df.items()}

    def vec(c):
        return {t: tf * idf[t] for t, tf in c.items() if t in idf}

    def norm(v):
        return math.sqrt(sum(x * x for x in v.values()))

    q = vec(Counter(tokenize(target)))
    qn = norm(q)
    sims = []
    for c in counts:
        v = vec(c)
        vn = norm(v)
        if qn == 0 or vn == 0:
            sims.append(0.0)
            continue
        sims.append(sum(w * v.get(t, 0.0) for t, w in q.items()) / (qn * vn))
    return sims


def select_examples(
    target: str, bank: ExampleBank, m: int = 3, scorer: Optional[Callable] = None
) -> list:
    """The ``m`` most similar bank entries, best first; ties keep bank order."""
    if m < 0:
        raise ValueError("m must be >= 0")
    if m == 0 or len(bank) == 0:
        return []
    scorer = scorer or tfidf_cosine
    sims = scorer(target, [e.description for e in bank])
    order = sorted(range(len(bank)), key=lambda i: (-sims[i], i))
    return [bank.examples[i] for i in order[:m]]


def build_prompt(target: str, examples: Sequence[DescriptionExample] = (), instruction: str = DEFAULT_INSTRUCTION):
    parts = [instruction.strip()]
    for ex in examples:
        parts.append(f"Passage: {ex.description.strip()}\nAttributes:\n{serialize_attributes(ex.gold)}")
    parts.append(f"Passage: {target.strip()}\nAttributes:")
    return PromptBundle(instruction, tuple(examples), target, "\n\n".join(parts))


def understand(
    target: str,
    bank: ExampleBank,
    client: GeneratorClient,
    m: int = 3,
    warnings: Optional[list] = None,
    max_tokens: int = 512,
) -> DomainAttributes:
    bundle = build_prompt(target, select_examples(target, bank, m))
    try:
        text = client.complete(GenRequest(bundle.rendered, max_tokens=max_tokens)).text
    except GenerationError as exc:
        raise GenerationError(f"description understanding failed (prompt {prompt_hash(bundle.rendered)}): {exc}") from exc
    return parse_attributes(text, warnings)


def _scored_text(value) -> str:
    return NA.lower() if value is None else value


def evaluate_extraction(preds: Sequence[DomainAttributes], golds: Sequence[DomainAttributes]) -> dict:
    """Mean ROUGE-L and EM per attribute plus an ``"average"`` row over attributes.

    NA participates as the literal token ``"na"``.
    """
    if len(preds) != len(golds):
        raise ValueError(f"got {len(preds)} predictions for {len(golds)} gold annotations")
    if not preds:
        raise ValueError("nothing to evaluate")
    table = {}
    for key in ATTRIBUTE_KEYS:
        rl = [rouge_l(_scored_text(g[key]), _scored_text(p[key])) for p, g in zip(preds, golds)]
        em = [exact_match(_scored_text(g[key]), _scored_text(p[key])) for p, g in zip(preds, golds)]
        table[key] = {"rouge_l": sum(rl) / len(rl), "exact_match": sum(em) / len(em)}
    table["average"] = {
        metric: sum(table[k][metric] for k in ATTRIBUTE_KEYS) / len(ATTRIBUTE_KEYS)
        for metric in ("rouge_l", "exact_match")
    }
    return table


def write_extraction_report(path, table: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("attribute\trouge_l\texact_match\n")
        for key, row in table.items():
            fh.write(f"{key}\t{row['rouge_l']:.4f}\t{row['exact_match']:.4f}\n")
