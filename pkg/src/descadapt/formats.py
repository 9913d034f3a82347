"""Documents and the on-disk formats shared by the pipeline stages.

* corpus / seeds: JSONL, one ``{"id", "text", "title"?, "source_tag"?}`` per line
* queries: JSONL ``{"id", "text", "source_doc_id"}``
* labels: JSONL ``{"qid", "docid", "score", "provenance"}``
* runs: TREC run format ``qid Q0 docid rank score tag``
* qrels: TREC qrels ``qid<TAB>0<TAB>docid<TAB>rel``
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional


class FormatError(ValueError):
    """A malformed input file. Carries the path and 1-based line number."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    title: Optional[str] = None
    source_tag: Optional[str] = None

    def to_json(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    source_doc_id: str

    def to_json(self) -> dict:
        return asdict(self)


def _dump_line(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=False) + "\n"


def write_jsonl(path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(_dump_line(row))


def read_jsonl(path) -> list:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(path, line_no, f"invalid JSON ({exc.msg})") from None
    return rows


def read_documents(path) -> list:
    docs = []
    for line_no, row in enumerate(read_jsonl(path), 1):
        if "id" not in row or "text" not in row:
            raise FormatError(path, line_no, "document needs 'id' and 'text'")
        docs.append(Document(str(row["id"]), row["text"] or "", row.get("title"), row.get("source_tag")))
    return docs


def write_documents(path, docs: Iterable[Document]) -> None:
    write_jsonl(path, (d.to_json() for d in docs))


def read_queries(path) -> list:
    out = []
    for line_no, row in enumerate(read_jsonl(path), 1):
        try:
            out.append(Query(str(row["id"]), row["text"], str(row.get("source_doc_id", ""))))
        except KeyError as exc:
            raise FormatError(path, line_no, f"query missing field {exc}") from None
    return out


def write_queries(path, queries: Iterable[Query]) -> None:
    write_jsonl(path, (q.to_json() for q in queries))


def write_run(path, run: dict, tag: str = "descadapt") -> None:
    """``run`` maps qid to a list of ``(docid, score)`` sorted best first."""
    with open(path, "w", encoding="utf-8") as fh:
        for qid, ranked in run.items():
            for rank, (docid, score) in enumerate(ranked, 1):
                fh.write(f"{qid} Q0 {docid} {rank} {score:.6f} {tag}\n")


def read_run(path) -> dict:
    rows: dict = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise FormatError(path, line_no, f"expected 6 fields, got {len(parts)}")
            qid, _, docid, rank, score, _ = parts
            try:
                rows.setdefault(qid, []).append((int(rank), docid, float(score)))
            except ValueError:
                raise FormatError(path, line_no, "rank/score not numeric") from None
    run = {}
    for qid, entries in rows.items():
        entries.sort(key=lambda e: (e[0], e[1]))
        seen, ranked = set(), []
        for _, docid, score in entries:
            if docid not in seen:
                seen.add(docid)
                ranked.append((docid, score))
        run[qid] = ranked
    return run


def read_qrels(path) -> dict:
    qrels: dict = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise FormatError(path, line_no, f"expected 4 fields, got {len(parts)}")
            qid, _, docid, rel = parts
            try:
                grade = int(rel)
            except ValueError:
                raise FormatError(path, line_no, f"relevance grade {rel!r} is not an integer") from None
            if grade < 0:
                raise FormatError(path, line_no, "relevance grade must be >= 0")
            qrels.setdefault(qid, {})[docid] = grade
    return qrels


def write_qrels(path, qrels: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid, docs in qrels.items():
            for docid, grade in docs.items():
                fh.write(f"{qid}\t0\t{docid}\t{grade}\n")


def ensure_parent(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path
