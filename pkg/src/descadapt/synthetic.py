"""Generated collections with planted topics.

Words are random consonant-vowel strings. Each topic owns a vocabulary and
optionally borrows a share of its neighbour's words; every document mixes
topic words (Zipf-distributed), a shared background vocabulary and a small set
of very frequent function words. Because topic membership is known, these
collections give exact targets for corpus reconstruction and retrieval.
"""

from dataclasses import dataclass, field

import numpy as np

from .formats import Document, Query
from .taxonomy import DomainAttributes

_CONSONANTS = list("bcdfghjklmnprstvwz")
_VOWELS = list("aeiou")


def make_words(rng: np.random.Generator, n: int, taken: set, syllables=(2, 4)) -> list:
    words = []
    while len(words) < n:
        k = rng.integers(syllables[0], syllables[1] + 1)
        w = "".join(rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(k))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def _zipf_probs(n: int, s: float = 1.0) -> np.ndarray:
    p = 1.0 / np.arange(1, n + 1) ** s
    return p / p.sum()


@dataclass
class TopicModel:
    topics: list
    background: list
    function_words: list
    topic_share: float = 0.5
    background_share: float = 0.2
    doc_length: tuple = (30, 60)
    _probs: dict = field(default_factory=dict, repr=False)

    def _p(self, n: int) -> np.ndarray:
        if n not in self._probs:
            self._probs[n] = _zipf_probs(n)
        return self._probs[n]

    def document_tokens(self, rng: np.random.Generator, topic: int) -> list:
        length = int(rng.integers(self.doc_length[0], self.doc_length[1] + 1))
        vocab, fw = self.topics[topic], self.function_words
        source = rng.random(length)
        topic_draws = rng.choice(len(vocab), size=length, p=self._p(len(vocab)))
        background_draws = rng.integers(len(self.background), size=length)
        function_draws = rng.choice(len(fw), size=length, p=self._p(len(fw)))
        out = []
        for i, u in enumerate(source):
            if u < self.topic_share:
                out.append(vocab[topic_draws[i]])
            elif u < self.topic_share + self.background_share:
                out.append(self.background[background_draws[i]])
            else:
                out.append(fw[function_draws[i]])
        return out

    def document(self, rng: np.random.Generator, topic: int, doc_id: str, tag=None) -> Document:
        return Document(doc_id, " ".join(self.document_tokens(rng, topic)), source_tag=tag)


def topic_model(
    rng: np.random.Generator,
    num_topics: int,
    topic_vocab: int = 150,
    background_vocab: int = 300,
    function_vocab: int = 30,
    overlap: float = 0.0,
    **kwargs,
) -> TopicModel:
    """``overlap`` is the fraction of each topic's vocabulary copied from topic ``t - 1``."""
    taken: set = set()
    function_words = make_words(rng, function_vocab, taken, syllables=(1, 1))
    background = make_words(rng, background_vocab, taken)
    topics = []
    for t in range(num_topics):
        own = make_words(rng, topic_vocab, taken)
        if t and overlap > 0:
            n_shared = int(round(overlap * topic_vocab))
            borrowed = list(rng.choice(topics[t - 1], size=n_shared, replace=False))
            own = own[: topic_vocab - n_shared] + borrowed
            rng.shuffle(own)
        topics.append(own)
    return TopicModel(topics, background, function_words, **kwargs)


@dataclass
class PlantedCollection:
    model: TopicModel
    docs: list
    target_ids: set
    seed_docs: list


def planted_collection(
    seed: int = 0,
    n_target: int = 200,
    n_distractors: int = 2000,
    num_distractor_topics: int = 10,
    overlap: float = 0.6,
    num_seeds: int = 1,
    topic_share: float = 0.25,
    background_share: float = 0.4,
) -> PlantedCollection:
    """Topic 0 is the target; distractors are spread evenly over the other topics.

    Seed documents are fresh topic-0 documents that are not part of the collection.
    """
    rng = np.random.default_rng(seed)
    model = topic_model(
        rng, num_distractor_topics + 1, overlap=overlap, topic_share=topic_share, background_share=background_share
    )
    docs = [model.document(rng, 0, f"t{i:05d}", "target") for i in range(n_target)]
    for i in range(n_distractors):
        topic = 1 + i % num_distractor_topics
        docs.append(model.document(rng, topic, f"x{i:05d}", f"topic{topic}"))
    order = rng.permutation(len(docs))
    docs = [docs[i] for i in order]
    seeds = [model.document(rng, 0, f"seed-{i}", "seed") for i in range(num_seeds)]
    return PlantedCollection(model, docs, {f"t{i:05d}" for i in range(n_target)}, seeds)


TARGET_ATTRIBUTES = DomainAttributes(
    query_topic="planted topic",
    query_language="synthetic",
    query_structure="unstructured",
    query_modality="unimodal",
    query_format="keyword query",
    document_topic="planted topic",
    document_language="synthetic",
    document_structure="unstructured",
    document_modality="unimodal",
    document_format="passage",
    document_source="generated collection",
    relevance_notion="topical relevance",
)

TARGET_DESCRIPTION = (
    "Given a short keyword query about the planted topic, retrieve the generated passage "
    "from which the keywords were taken."
)


@dataclass
class DomainModel:
    """Domains split into subtopics.

    A document of ``(domain, subtopic)`` draws tokens from the subtopic
    vocabulary, the domain vocabulary, a background vocabulary shared by all
    domains, and function words, in the given proportions.
    """

    domains: list  # [(domain_vocab, [subtopic_vocab, ...]), ...]
    background: list
    function_words: list
    subtopic_share: float = 0.15
    domain_share: float = 0.35
    background_share: float = 0.2
    doc_length: tuple = (30, 60)

    def document(self, rng: np.random.Generator, domain: int, subtopic: int, doc_id: str, tag=None) -> Document:
        domain_vocab, subtopics = self.domains[domain]
        sub_vocab, fw, bg = subtopics[subtopic], self.function_words, self.background
        length = int(rng.integers(self.doc_length[0], self.doc_length[1] + 1))
        u = rng.random(length)
        sub = rng.choice(len(sub_vocab), size=length, p=_zipf_probs(len(sub_vocab)))
        dom = rng.choice(len(domain_vocab), size=length, p=_zipf_probs(len(domain_vocab)))
        back = rng.integers(len(bg), size=length)
        func = rng.choice(len(fw), size=length, p=_zipf_probs(len(fw)))
        c1 = self.subtopic_share
        c2 = c1 + self.domain_share
        c3 = c2 + self.background_share
        words = [
            sub_vocab[sub[i]] if x < c1 else domain_vocab[dom[i]] if x < c2 else bg[back[i]] if x < c3 else fw[func[i]]
            for i, x in enumerate(u)
        ]
        return Document(doc_id, " ".join(words), source_tag=tag)


def domain_model(
    rng: np.random.Generator,
    num_domains: int,
    num_subtopics: int = 8,
    domain_vocab: int = 100,
    subtopic_vocab: int = 60,
    background_vocab: int = 300,
    function_vocab: int = 30,
    **kwargs,
) -> DomainModel:
    taken: set = set()
    function_words = make_words(rng, function_vocab, taken, syllables=(1, 1))
    background = make_words(rng, background_vocab, taken)
    domains = [
        (make_words(rng, domain_vocab, taken), [make_words(rng, subtopic_vocab, taken) for _ in range(num_subtopics)])
        for _ in range(num_domains)
    ]
    return DomainModel(domains, background, function_words, **kwargs)


@dataclass
class AdaptationBenchmark:
    """A toy adaptation task.

    ``collection`` plays the heterogeneous collection (target domain 0 mixed
    with other domains); ``test_docs`` are fresh target-domain documents.
    Each test query is a few words of one subtopic's vocabulary and every test
    document of that subtopic is relevant, so exact term overlap alone is not
    enough and a model has to learn which words belong together.
    """

    model: DomainModel
    collection: list
    test_docs: list
    test_queries: list
    qrels: dict
    seed_passage: str
    attributes: DomainAttributes = TARGET_ATTRIBUTES
    description: str = TARGET_DESCRIPTION


def adaptation_benchmark(
    seed: int = 0,
    n_collection_target: int = 300,
    n_distractors: int = 900,
    num_other_domains: int = 6,
    num_subtopics: int = 8,
    n_test_docs: int = 300,
    n_test_queries: int = 50,
    query_terms: int = 3,
) -> AdaptationBenchmark:
    rng = np.random.default_rng(seed)
    model = domain_model(rng, num_other_domains + 1, num_subtopics=num_subtopics)
    collection = [
        model.document(rng, 0, i % num_subtopics, f"w-t{i:05d}", "target") for i in range(n_collection_target)
    ]
    for i in range(n_distractors):
        domain = 1 + i % num_other_domains
        collection.append(model.document(rng, domain, (i // num_other_domains) % num_subtopics, f"w-x{i:05d}"))
    order = rng.permutation(len(collection))
    collection = [collection[i] for i in order]
    test_docs = [model.document(rng, 0, i % num_subtopics, f"test-{i:05d}", "test") for i in range(n_test_docs)]
    queries, qrels = [], {}
    for j in range(n_test_queries):
        s = j % num_subtopics
        words = rng.choice(model.domains[0][1][s], size=query_terms, replace=False)
        qid = f"tq{j:03d}"
        queries.append(Query(qid, " ".join(words), ""))
        qrels[qid] = {d.id: 1 for i, d in enumerate(test_docs) if i % num_subtopics == s}
    seed_passage = model.document(rng, 0, 0, "seed", "seed").text
    return AdaptationBenchmark(model, collection, test_docs, queries, qrels, seed_passage)
