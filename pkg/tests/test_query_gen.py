import pytest

from descadapt.formats import Document
from descadapt.gen_client import GenerationError, GeneratorClient, StaticClient
from descadapt.query_gen import FallbackGenerator, build_qg_prompt, generate_queries
from descadapt.taxonomy import DomainAttributes

CAT = Document("d1", "the cat sat on the mat near the cat door")
NONE = DomainAttributes().query


def test_prompt_format():
    q_attr = DomainAttributes(query_format="question").query
    prompt = build_qg_prompt(Document("d", "Some text."), q_attr, "topical")
    assert prompt == (
        "Generate a query for the following Passage based on the given Attributes. "
        "Passage: Some text. Attributes: query format: question; relevance notion: topical."
    )
    assert "query format: question" in prompt.split("Attributes:")[1]


def test_prompt_without_attributes():
    prompt = build_qg_prompt(CAT, NONE, None)
    assert prompt.startswith("Generate a query for the following Passage based on the given Attributes.")
    assert prompt.endswith("Attributes: .")


def test_fallback_single_doc():
    # alone in its corpus every term has df=1, so tf decides: the(3) > cat(2) > first occurrence order
    gen = FallbackGenerator([CAT])
    assert gen.ranked_terms(CAT.text)[:4] == ["the", "cat", "sat", "on"]
    queries = generate_queries([CAT], NONE, None, 1)
    assert [q.text for q in queries] == ["the cat sat"]
    assert queries[0].id == "q-d1-0" and queries[0].source_doc_id == "d1"


def test_fallback_question_prefix():
    q_attr = DomainAttributes(query_format="question").query
    assert generate_queries([CAT], q_attr, None, 1)[0].text == "what is the cat sat?"


def test_fallback_uses_corpus_idf():
    other = Document("d2", "the the the the dog")
    gen = FallbackGenerator([CAT, other])
    assert gen.ranked_terms(CAT.text)[0] == "cat"


def test_cardinality_and_distinctness():
    docs = [CAT, Document("d2", "dogs chase red balls in the park"), Document("d3", "stock prices fell sharply")]
    queries = generate_queries(docs, NONE, None, 3)
    assert len(queries) == 9
    for d in docs:
        texts = [q.text for q in queries if q.source_doc_id == d.id]
        assert len(texts) == len(set(texts)) == 3 and all(texts)
    assert [q.source_doc_id for q in queries] == ["d1"] * 3 + ["d2"] * 3 + ["d3"] * 3
    assert queries == generate_queries(docs, NONE, None, 3)


def test_client_lines_pass_through():
    client = StaticClient("1. how do cats sit\n2. cat door mats\n")
    queries = generate_queries([CAT], NONE, "topical", 2, client=client)
    assert [q.text for q in queries] == ["how do cats sit", "cat door mats"]


def test_client_duplicates_and_blanks_refilled():
    client = StaticClient("cat door\n\ncat door\n")
    texts = [q.text for q in generate_queries([CAT], NONE, None, 3, client=client)]
    assert texts == ["cat door", "the cat sat", "cat sat on"]


class Broken(GeneratorClient):
    def _complete(self, req):
        raise GenerationError("boom")


def test_client_failure_falls_back():
    warnings = []
    queries = generate_queries([CAT], NONE, None, 2, client=Broken(), warnings=warnings)
    assert [q.text for q in queries] == ["the cat sat", "cat sat on"]
    assert len(warnings) == 1 and "d1" in warnings[0]


def test_k_prime_validated():
    with pytest.raises(ValueError):
        generate_queries([CAT], NONE, None, 0)


def test_tiny_doc_yields_fewer_and_warns():
    warnings = []
    queries = generate_queries([Document("x", "solo")], NONE, None, 3, warnings=warnings)
    assert [q.text for q in queries] == ["solo"]
    assert warnings
