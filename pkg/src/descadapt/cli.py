"""Command-line entry point.

Exit codes: 0 success, 1 usage or IO error, 2 generator/teacher service failure.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import plots
from .config import ConfigError, load_config
from .corpus_builder import BuildConfig, build_corpus, generate_seed, reconstruction_accuracy
from .dense_model import DenseIndex, init_params, load_params, save_params
from .desc_understanding import ExampleBank, understand
from .eval_metrics import bonferroni, compute_metric, paired_t_test, parse_metric
from .formats import FormatError, read_documents, read_jsonl, read_qrels, read_queries, read_run, write_documents, write_jsonl, write_queries, write_run
from .gen_client import GenerationError, client_from_env
from .lexical_index import build_index, search
from .pipeline import DEFAULT_BANK, Pipeline, StageError, load_attributes, make_teacher, write_attributes
from .pseudo_labeler import LabelingError, from_label_rows, label_all, label_rows
from .query_gen import generate_queries
from .synthetic import planted_collection
from .toy import SIZES, write_toy_workspace
from .trainer import PROFILES, TrainingError, config_with, make_groups, train, write_training_log

log = logging.getLogger("descadapt")

EXIT_OK, EXIT_IO, EXIT_SERVICE = 0, 1, 2


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_IO, f"{self.prog}: error: {message}\n")


def _need(path, what="file"):
    if not Path(path).exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return Path(path)


def _client(args):
    return client_from_env(args.client, args.mock_dir)


def _add_client(p):
    p.add_argument("--client", choices=["http", "mock", "record", "echo", "none"], help="generator client (default: mock if a mock dir is set, else none)")
    p.add_argument("--mock-dir", help="canned responses directory (default: $GEN_MOCK_DIR)")


def cmd_understand(args):
    description = _need(args.description, "description").read_text(encoding="utf-8").strip()
    bank = ExampleBank.load(_need(args.bank or DEFAULT_BANK, "example bank"))
    client = _client(args)
    if client is None:
        raise GenerationError("no generator client configured (use --client or GEN_MOCK_DIR)")
    warnings = []
    attrs = understand(description, bank, client, m=args.examples, warnings=warnings)
    for w in warnings:
        log.warning("ignored attribute key: %s", w)
    write_attributes(args.out, attrs)
    print(attrs.dumps())


def cmd_seed(args):
    attrs = load_attributes(_need(args.attributes, "attributes"))
    client = _client(args)
    seeds = [generate_seed(attrs.document, client, index=i) for i in range(args.num_seeds)]
    write_documents(args.out, seeds)
    print(f"wrote {len(seeds)} seed document(s) to {args.out}")


def cmd_build_corpus(args):
    seeds = read_documents(_need(args.seeds, "seeds"))
    w_index = build_index(read_documents(_need(args.collection, "collection")))
    cfg = BuildConfig(N=args.N, k=args.k, num_seeds=args.num_seeds, max_iterations=args.max_iterations, max_query_tokens=args.max_query_tokens)
    corpus = build_corpus(seeds, w_index, cfg)
    write_documents(args.out, corpus.docs)
    if args.provenance:
        write_jsonl(args.provenance, corpus.provenance_rows())
    print(f"collected {len(corpus)} documents in {corpus.iterations} iterations")
    for w in corpus.warnings:
        print(f"warning: {w}", file=sys.stderr)


def cmd_genq(args):
    attrs = load_attributes(_need(args.attributes, "attributes"))
    corpus = read_documents(_need(args.corpus, "corpus"))
    queries = generate_queries(corpus, attrs.query, attrs.relevance_notion, args.k_prime, _client(args), rng_seed=args.seed)
    write_queries(args.out, queries)
    print(f"wrote {len(queries)} queries to {args.out}")


def _student(args):
    if args.student:
        return load_params(_need(args.student, "student checkpoint"))
    return init_params(args.num_buckets, args.dim, seed=args.init_seed)


def cmd_label(args):
    attrs = load_attributes(_need(args.attributes, "attributes"))
    corpus = read_documents(_need(args.corpus, "corpus"))
    queries = read_queries(_need(args.queries, "queries"))
    index = build_index(corpus)
    teacher = make_teacher(args.teacher, index, _client(args) if args.teacher == "remote" else None)
    cands, labels = label_all(queries, index, _student(args), attrs.relevance_notion, teacher, rng_seed=args.seed)
    write_jsonl(args.out, label_rows(cands, labels))
    print(f"labeled {sum(len(c) for c in cands.values())} pairs for {len(cands)} queries")


def cmd_train(args):
    corpus = {d.id: d for d in read_documents(_need(args.corpus, "corpus"))}
    queries = read_queries(_need(args.queries, "queries"))
    _, labels = from_label_rows(read_jsonl(_need(args.labels, "labels")))
    groups = make_groups([q for q in queries if q.id in labels], corpus, labels)
    overrides = {k: getattr(args, k) for k in ("peak_lr", "warmup_steps", "total_steps", "batch_size", "inbatch_weight", "temperature") if getattr(args, k) is not None}
    cfg = config_with(PROFILES[args.profile], rng_seed=args.seed, **overrides)
    result = train(_student(args), groups, cfg)
    save_params(result.params, args.out)
    if args.log:
        write_training_log(args.log, result.log)
    if args.plot:
        plots.plot_training_log(result.log, args.plot)
    first, last = result.log[0], result.log[-1]
    print(f"step\ttotal\n{first.step}\t{first.total:.6f}\n{last.step}\t{last.total:.6f}")


def cmd_search(args):
    docs = read_documents(_need(args.corpus, "corpus"))
    queries = read_queries(_need(args.queries, "queries"))
    if args.model:
        index = DenseIndex(load_params(_need(args.model, "model checkpoint")), docs)
        run = {q.id: index.search(q.text, args.top_k) for q in queries}
    else:
        bm25 = build_index(docs)
        run = {q.id: search(bm25, q.text, args.top_k) for q in queries}
    write_run(args.out, run, tag=args.tag)
    print(f"wrote run for {len(run)} queries to {args.out}")


def cmd_eval(args):
    metrics = args.metrics or ["ndcg@10", "recall@100", "mrr"]
    for m in metrics:
        parse_metric(m)
    qrels = read_qrels(_need(args.qrels, "qrels"))
    run = read_run(_need(args.run, "run"))
    other = read_run(_need(args.compare, "comparison run")) if args.compare else None
    rows = []
    per_query = {}
    for m in metrics:
        pq, mean = compute_metric(m, run, qrels)
        per_query[m] = pq
        row = {"metric": m, "run": mean}
        if other is not None:
            pq_b, mean_b = compute_metric(m, other, qrels)
            qids = sorted(pq)
            t, p = paired_t_test([pq[q] for q in qids], [pq_b[q] for q in qids]) if len(qids) >= 2 else (0.0, 1.0)
            row.update(compare=mean_b, t=t, p=p, p_bonferroni=bonferroni([p], len(metrics))[0])
        rows.append(row)
    lines = []
    if other is None:
        lines.append("metric\tvalue")
        lines += [f"{r['metric']}\t{r['run']:.4f}" for r in rows]
    else:
        lines.append("metric\trun\tcompare\tt\tp\tp_bonferroni")
        lines += [f"{r['metric']}\t{r['run']:.4f}\t{r['compare']:.4f}\t{r['t']:.4f}\t{r['p']:.4g}\t{r['p_bonferroni']:.4g}" for r in rows]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.per_query:
        with open(args.per_query, "w", encoding="utf-8") as fh:
            fh.write("qid\t" + "\t".join(metrics) + "\n")
            for qid in sorted(per_query[metrics[0]]):
                fh.write(qid + "\t" + "\t".join(f"{per_query[m][qid]:.6f}" for m in metrics) + "\n")
            fh.write("mean\t" + "\t".join(f"{r['run']:.6f}" for r in rows) + "\n")
    if args.plot:
        means = {"run": rows[0]["run"]}
        if other is not None:
            means["compare"] = rows[0]["compare"]
        plots.plot_metric_comparison(means, args.plot, metrics[0])


def cmd_pipeline(args):
    cfg = load_config(_need(args.config, "config"))
    Pipeline(cfg).run(resume=args.resume, on_stage=lambda name, status: print(f"{name}\t{status}", flush=True))
    print(f"outputs in {cfg.output}")


def cmd_reconstruct(args):
    """Reconstruction accuracy on planted collections while varying N, k and the number of seeds."""
    grid = [("N", n, dict(N=n)) for n in args.N] + [("k", k, dict(k=k)) for k in args.k] + [("seeds", s, dict(num_seeds=s)) for s in args.num_seeds]
    base = dict(N=args.base_N, k=args.base_k, num_seeds=1)
    collections = []
    for s in range(args.repeats):
        pc = planted_collection(seed=s, num_seeds=max(args.num_seeds + [1]))
        collections.append((pc, build_index(pc.docs)))
    rows = []
    for param, value, override in grid:
        accs = []
        for pc, index in collections:
            cfg = BuildConfig(**dict(base, **override))
            accs.append(reconstruction_accuracy(build_corpus(pc.seed_docs, index, cfg), pc.target_ids))
        rows.append({"param": param, "value": value, "mean": float(np.mean(accs)), "std": float(np.std(accs))})
    text = "param\tvalue\tmean_accuracy\tstd\n" + "".join(f"{r['param']}\t{r['value']}\t{r['mean']:.4f}\t{r['std']:.4f}\n" for r in rows)
    sys.stdout.write(text)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "reconstruction.tsv").write_text(text, encoding="utf-8")
    plots.plot_reconstruction(rows, out / "reconstruction.png")


def cmd_toy(args):
    path = write_toy_workspace(args.out, args.size, seed=args.seed)
    print(path)


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser():
    parser = Parser(prog="descadapt", description="Adapt a dense retriever to a domain described in plain text.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("understand", help="extract taxonomy attributes from a description")
    p.add_argument("--description", required=True)
    p.add_argument("--bank", help="example bank JSON (default: bundled bank)")
    p.add_argument("--out", required=True)
    p.add_argument("--examples", type=int, default=3, help="few-shot examples, 0 for instruction only")
    _add_client(p)
    p.set_defaults(func=cmd_understand)

    p = sub.add_parser("seed", help="generate seed documents from document attributes")
    p.add_argument("--attributes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--num-seeds", type=int, default=1)
    _add_client(p)
    p.set_defaults(func=cmd_seed)

    p = sub.add_parser("build-corpus", help="grow a synthetic corpus from the collection")
    p.add_argument("--collection", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--provenance")
    p.add_argument("--N", type=int, default=10_000)
    p.add_argument("--k", type=int, default=30)
    p.add_argument("--num-seeds", type=int, default=1)
    p.add_argument("--max-iterations", type=int, default=100_000)
    p.add_argument("--max-query-tokens", type=int, default=512)
    p.set_defaults(func=cmd_build_corpus)

    p = sub.add_parser("genq", help="generate queries for every corpus document")
    p.add_argument("--corpus", required=True)
    p.add_argument("--attributes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k-prime", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    _add_client(p)
    p.set_defaults(func=cmd_genq)

    def student_args(p):
        p.add_argument("--student", help="student checkpoint (default: fresh random init)")
        p.add_argument("--num-buckets", type=int, default=2**15)
        p.add_argument("--dim", type=int, default=64)
        p.add_argument("--init-seed", type=int, default=0)

    p = sub.add_parser("label", help="candidate sets and teacher labels")
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--attributes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--teacher", choices=["bm25", "remote"], default="bm25")
    p.add_argument("--seed", type=int, default=0)
    student_args(p)
    _add_client(p)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", help="distill labels into the dual encoder")
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True, help="adapted checkpoint")
    p.add_argument("--log", help="training log TSV")
    p.add_argument("--plot", help="loss curve image")
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--seed", type=int, default=0)
    for name, typ in (("peak-lr", float), ("warmup-steps", int), ("total-steps", int), ("batch-size", int), ("inbatch-weight", float), ("temperature", float)):
        p.add_argument(f"--{name}", type=typ)
    student_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("search", help="retrieve with BM25 or a dense checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", help="dense checkpoint; BM25 when omitted")
    p.add_argument("--top-k", type=int, default=100)
    p.add_argument("--tag", default="descadapt")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="score a run against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--metrics", nargs="+")
    p.add_argument("--compare", help="second run for a paired t-test")
    p.add_argument("--out", help="summary TSV")
    p.add_argument("--per-query", help="per-query TSV with a mean row")
    p.add_argument("--plot", help="bar chart of the first metric")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="run all stages from a config file")
    p.add_argument("config")
    p.add_argument("--resume", action="store_true", help="skip stages whose outputs exist")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("reconstruct", help="corpus reconstruction sensitivity on planted collections")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--N", type=_ints, default=[50, 100, 150, 200])
    p.add_argument("--k", type=_ints, default=[5, 10, 20, 30])
    p.add_argument("--num-seeds", type=_ints, default=[1, 2, 3])
    p.add_argument("--base-N", type=int, default=100)
    p.add_argument("--base-k", type=int, default=10)
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("toy", help="write a self-contained toy workspace")
    p.add_argument("--out", required=True)
    p.add_argument("--size", choices=sorted(SIZES), default="smoke")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_toy)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except StageError as exc:
        code = EXIT_SERVICE if isinstance(exc.cause, (GenerationError, LabelingError)) else EXIT_IO
        print(f"error: {exc}", file=sys.stderr)
        return code
    except (GenerationError, LabelingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SERVICE
    except (OSError, FormatError, ConfigError, ValueError, KeyError, TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
