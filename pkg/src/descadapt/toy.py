"""Self-contained toy workspaces for offline pipeline runs.

A workspace holds a generated collection W, a domain description, an example
bank, canned generator replies for the description and seed prompts, a
held-out test set with programmatic qrels, and a ``config.ini`` tying them
together. Query generation has no canned replies, so it falls back to the
offline keyword generator.
"""

import shutil
from pathlib import Path

from .corpus_builder import seed_prompt
from .desc_understanding import ExampleBank, build_prompt, select_examples
from .formats import write_documents, write_qrels, write_queries
from .gen_client import GenRequest, GenResponse, record_response
from .synthetic import adaptation_benchmark
from .taxonomy import serialize_attributes

SIZES = {
    # W of 200 documents, small encoder; finishes in seconds
    "smoke": dict(
        bench=dict(n_collection_target=60, n_distractors=140, n_test_docs=80, n_test_queries=20),
        build=dict(n=50, k=5),
        genq=dict(k_prime=2),
        encoder=dict(num_buckets=4096, dim=32),
        train=dict(peak_lr=1e-3, warmup_steps=5, total_steps=60, batch_size=8),
    ),
    "bench": dict(
        bench=dict(),
        build=dict(n=300, k=10),
        genq=dict(k_prime=2),
        encoder=dict(num_buckets=2**14, dim=64),
        train=dict(peak_lr=1e-3, warmup_steps=30, total_steps=300, batch_size=8),
    ),
}


def _section(name, values) -> str:
    return f"[{name}]\n" + "".join(f"{k} = {v}\n" for k, v in values.items()) + "\n"


def write_toy_workspace(out_dir, size: str = "smoke", seed: int = 0, examples: int = 3) -> Path:
    """Write a toy workspace into ``out_dir``; returns the config path."""
    if size not in SIZES:
        raise ValueError(f"unknown toy size {size!r}; choose from {sorted(SIZES)}")
    preset = SIZES[size]
    out = Path(out_dir)
    (out / "eval").mkdir(parents=True, exist_ok=True)
    bench = adaptation_benchmark(seed=seed, **preset["bench"])

    write_documents(out / "collection.jsonl", bench.collection)
    (out / "description.txt").write_text(bench.description + "\n", encoding="utf-8")
    bank_path = out / "bank.json"
    shutil.copyfile(Path(__file__).parent / "data" / "example_bank.json", bank_path)
    write_documents(out / "eval" / "docs.jsonl", bench.test_docs)
    write_queries(out / "eval" / "queries.jsonl", bench.test_queries)
    write_qrels(out / "eval" / "qrels.tsv", bench.qrels)

    # canned replies for the two prompts the pipeline will send
    mocks = out / "mocks"
    bank = ExampleBank.load(bank_path)
    prompt = build_prompt(bench.description, select_examples(bench.description, bank, examples)).rendered
    record_response(mocks, GenRequest(prompt), GenResponse(serialize_attributes(bench.attributes), "toy"))
    record_response(mocks, GenRequest(seed_prompt(bench.attributes.document)), GenResponse(bench.seed_passage, "toy"))

    config = (
        _section("paths", dict(collection="collection.jsonl", description="description.txt", bank="bank.json", output="out"))
        + _section("client", dict(mode="mock", mock_dir="mocks"))
        + _section("understand", dict(examples=examples))
        + _section("build", preset["build"])
        + _section("genq", preset["genq"])
        + _section("label", dict(teacher="bm25"))
        + _section("encoder", dict(preset["encoder"], init_seed=0, hash_seed=0))
        + _section("train", dict(profile="desk", **preset["train"]))
        + _section("pipeline", dict(rng_seed=seed))
        + _section("eval", dict(docs="eval/docs.jsonl", queries="eval/queries.jsonl", qrels="eval/qrels.tsv", metrics="ndcg@10, recall@100, mrr"))
    )
    path = out / "config.ini"
    path.write_text(config, encoding="utf-8")
    return path
