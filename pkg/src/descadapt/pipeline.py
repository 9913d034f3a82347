"""End-to-end adaptation pipeline over files in one output directory.

Stages run in order: understand, seed, build-corpus, genq, label, train and,
when the config has an ``[eval]`` section, eval. Each stage reads the files of
earlier stages and writes its own; with ``resume=True`` a stage whose outputs
all exist is skipped.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from . import plots
from .config import PipelineConfig
from .corpus_builder import build_corpus, generate_seed
from .dense_model import DenseIndex, init_params, load_params, save_params
from .desc_understanding import ExampleBank, understand
from .eval_metrics import bonferroni, compute_metric, paired_t_test, parse_metric
from .formats import read_documents, read_jsonl, read_qrels, read_queries, write_documents, write_jsonl, write_queries, write_run
from .gen_client import GenerationError, client_from_env
from .lexical_index import build_index, search
from .pseudo_labeler import BM25Teacher, RemoteTeacher, from_label_rows, label_all, label_rows
from .query_gen import generate_queries
from .taxonomy import DomainAttributes
from .trainer import make_groups, train, write_training_log

log = logging.getLogger(__name__)

DEFAULT_BANK = Path(__file__).parent / "data" / "example_bank.json"

# output file names, relative to the output directory
ATTRIBUTES = "attributes.json"
SEEDS = "seeds.jsonl"
CORPUS = "corpus.jsonl"
PROVENANCE = "provenance.jsonl"
QUERIES = "queries.jsonl"
LABELS = "labels.jsonl"
STUDENT = "student.bin"
ADAPTED = "adapted.bin"
TRAIN_LOG = "train_log.tsv"
LOSS_PLOT = "loss.png"
METRICS = "metrics.tsv"
COMPARISON = "comparison.tsv"
PER_QUERY = "per_query.tsv"
METRICS_PLOT = "metrics.png"


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


def load_attributes(path) -> DomainAttributes:
    with open(path, encoding="utf-8") as fh:
        return DomainAttributes.from_json(json.load(fh))


def write_attributes(path, attrs: DomainAttributes) -> None:
    Path(path).write_text(attrs.dumps() + "\n", encoding="utf-8")


def new_student(cfg: PipelineConfig):
    e = cfg.encoder
    return init_params(e.num_buckets, e.dim, seed=e.init_seed, hash_seed=e.hash_seed)


def make_teacher(kind: str, index, client):
    if kind == "bm25":
        return BM25Teacher(index)
    if kind == "remote":
        if client is None:
            raise ValueError("remote teacher needs a generator client")
        return RemoteTeacher(client)
    raise ValueError(f"unknown teacher {kind!r}")


def evaluate_runs(runs: dict, qrels: dict, metrics, reference: str) -> tuple:
    """Mean metric table, significance rows of ``reference`` vs every other run, per-query rows."""
    table, per_query = {}, {}
    for name, run in runs.items():
        for metric in metrics:
            pq, mean = compute_metric(metric, run, qrels)
            table[(name, metric)] = mean
            per_query[(name, metric)] = pq
    others = [n for n in runs if n != reference]
    comparisons = []
    m = max(1, len(others) * len(metrics))
    for other in others:
        for metric in metrics:
            a, b = per_query[(reference, metric)], per_query[(other, metric)]
            qids = sorted(a)
            t, p = paired_t_test([a[q] for q in qids], [b[q] for q in qids]) if len(qids) >= 2 else (0.0, 1.0)
            comparisons.append({"run": reference, "baseline": other, "metric": metric, "t": t, "p": p, "p_bonferroni": bonferroni([p], m)[0]})
    return table, comparisons, per_query


def write_metric_table(path, table: dict, runs, metrics) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("run\t" + "\t".join(metrics) + "\n")
        for name in runs:
            fh.write(name + "\t" + "\t".join(f"{table[(name, m)]:.4f}" for m in metrics) + "\n")


def write_comparisons(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("run\tbaseline\tmetric\tt\tp\tp_bonferroni\n")
        for r in rows:
            fh.write(f"{r['run']}\t{r['baseline']}\t{r['metric']}\t{r['t']:.4f}\t{r['p']:.4g}\t{r['p_bonferroni']:.4g}\n")


def write_per_query(path, per_query: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("run\tmetric\tqid\tvalue\n")
        for (name, metric), values in per_query.items():
            for qid in sorted(values):
                fh.write(f"{name}\t{metric}\t{qid}\t{values[qid]:.6f}\n")


@dataclass
class Stage:
    name: str
    outputs: tuple
    run: Callable


class Pipeline:
    def __init__(self, cfg: PipelineConfig, client=None):
        self.cfg = cfg
        self.out = Path(cfg.output)
        self._client = client
        self._client_ready = client is not None

    def path(self, name) -> Path:
        return self.out / name

    @property
    def client(self):
        if not self._client_ready:
            self._client = client_from_env(self.cfg.client_mode, self.cfg.mock_dir)
            self._client_ready = True
        return self._client

    # stages

    def understand(self):
        cfg = self.cfg
        description = Path(cfg.description).read_text(encoding="utf-8").strip()
        if not description:
            raise ValueError(f"{cfg.description} is empty")
        bank = ExampleBank.load(cfg.bank or DEFAULT_BANK)
        client = self.client
        if client is None:
            raise GenerationError("description understanding needs a generator client (client.mode)")
        warnings = []
        attrs = understand(description, bank, client, m=cfg.examples, warnings=warnings)
        for w in warnings:
            log.warning("ignored attribute key in generator output: %s", w)
        write_attributes(self.path(ATTRIBUTES), attrs)

    def seed(self):
        attrs = load_attributes(self.path(ATTRIBUTES))
        seeds = [generate_seed(attrs.document, self.client, index=i) for i in range(self.cfg.build.num_seeds)]
        write_documents(self.path(SEEDS), seeds)

    def build_corpus(self):
        seeds = read_documents(self.path(SEEDS))
        w_index = build_index(read_documents(self.cfg.collection))
        corpus = build_corpus(seeds, w_index, self.cfg.build)
        write_documents(self.path(CORPUS), corpus.docs)
        write_jsonl(self.path(PROVENANCE), corpus.provenance_rows())

    def genq(self):
        attrs = load_attributes(self.path(ATTRIBUTES))
        corpus = read_documents(self.path(CORPUS))
        queries = generate_queries(
            corpus, attrs.query, attrs.relevance_notion, self.cfg.k_prime, self.client,
            rng_seed=self.cfg.rng_seed, temperature=self.cfg.genq_temperature,
        )
        write_queries(self.path(QUERIES), queries)

    def label(self):
        attrs = load_attributes(self.path(ATTRIBUTES))
        corpus = read_documents(self.path(CORPUS))
        queries = read_queries(self.path(QUERIES))
        save_params(new_student(self.cfg), self.path(STUDENT))
        # the student is reloaded so labeling and training see the same float32 table
        student = load_params(self.path(STUDENT))
        index = build_index(corpus)
        teacher = make_teacher(self.cfg.teacher, index, self.client if self.cfg.teacher == "remote" else None)
        cands, labels = label_all(queries, index, student, attrs.relevance_notion, teacher, rng_seed=self.cfg.rng_seed)
        write_jsonl(self.path(LABELS), label_rows(cands, labels))

    def train(self):
        corpus = {d.id: d for d in read_documents(self.path(CORPUS))}
        queries = read_queries(self.path(QUERIES))
        _, labels = from_label_rows(read_jsonl(self.path(LABELS)))
        groups = make_groups([q for q in queries if q.id in labels], corpus, labels)
        student = load_params(self.path(STUDENT))
        result = train(student, groups, self.cfg.train)
        write_training_log(self.path(TRAIN_LOG), result.log)
        plots.plot_training_log(result.log, self.path(LOSS_PLOT))
        save_params(result.params, self.path(ADAPTED))

    def eval(self):
        cfg = self.cfg
        for m in cfg.metrics:
            parse_metric(m)
        docs = read_documents(cfg.eval_docs)
        queries = read_queries(cfg.eval_queries)
        qrels = read_qrels(cfg.eval_qrels)
        depth = 100
        bm25 = build_index(docs)
        runs = {"adapted": None, "student": None, "bm25": {q.id: search(bm25, q.text, depth) for q in queries}}
        for name, ckpt in (("adapted", ADAPTED), ("student", STUDENT)):
            index = DenseIndex(load_params(self.path(ckpt)), docs)
            runs[name] = {q.id: index.search(q.text, depth) for q in queries}
        (self.out / "runs").mkdir(exist_ok=True)
        for name, run in runs.items():
            write_run(self.out / "runs" / f"{name}.run", run, tag=name)
        table, comparisons, per_query = evaluate_runs(runs, qrels, cfg.metrics, reference="adapted")
        write_metric_table(self.path(METRICS), table, runs, cfg.metrics)
        write_comparisons(self.path(COMPARISON), comparisons)
        write_per_query(self.path(PER_QUERY), per_query)
        first = cfg.metrics[0]
        plots.plot_metric_comparison({n: table[(n, first)] for n in runs}, self.path(METRICS_PLOT), first)

    def stages(self) -> list:
        stages = [
            Stage("understand", (ATTRIBUTES,), self.understand),
            Stage("seed", (SEEDS,), self.seed),
            Stage("build-corpus", (CORPUS, PROVENANCE), self.build_corpus),
            Stage("genq", (QUERIES,), self.genq),
            Stage("label", (LABELS, STUDENT), self.label),
            Stage("train", (ADAPTED, TRAIN_LOG, LOSS_PLOT), self.train),
        ]
        if self.cfg.has_eval:
            stages.append(Stage("eval", (METRICS, COMPARISON, PER_QUERY, METRICS_PLOT), self.eval))
        return stages

    def run(self, resume: bool = False, on_stage: Optional[Callable[[str, str], None]] = None) -> list:
        """Run every stage; returns ``[(stage, "ran" | "skipped")]``."""
        self.cfg.check_inputs()
        self.out.mkdir(parents=True, exist_ok=True)
        done = []
        for stage in self.stages():
            if resume and all(self.path(o).exists() for o in stage.outputs):
                status = "skipped"
            else:
                log.info("stage %s", stage.name)
                try:
                    stage.run()
                except Exception as exc:
                    raise StageError(stage.name, exc) from exc
                status = "ran"
            done.append((stage.name, status))
            if on_stage is not None:
                on_stage(stage.name, status)
        return done
