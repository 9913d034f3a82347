"""Ranking metrics, text-overlap metrics and significance testing.

Runs map ``qid -> [(docid, score), ...]`` (best first); qrels map
``qid -> {docid: grade}``. Per-query results are dicts keyed by qid; the mean is
taken over queries that have at least one relevant document in the qrels.
Run queries absent from the qrels are skipped with a logged warning.
"""

import logging
import math
import re

from .lexical_index import tokenize

log = logging.getLogger(__name__)


def _judged_queries(run: dict, qrels: dict) -> list:
    for qid in run:
        if qid not in qrels:
            log.warning("query %s has no qrels; excluded", qid)
    return [qid for qid, judged in qrels.items() if any(g > 0 for g in judged.values())]


def _mean(per_query: dict) -> float:
    return sum(per_query.values()) / len(per_query) if per_query else 0.0


def ndcg_at_k(run: dict, qrels: dict, k: int = 10):
    """Returns ``(per_query, mean)``. Gain is ``2**rel - 1``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    per_query = {}
    for qid in _judged_queries(run, qrels):
        judged = qrels[qid]
        ranked = [d for d, _ in run.get(qid, [])][:k]
        dcg = sum((2 ** judged.get(d, 0) - 1) / math.log2(i + 2) for i, d in enumerate(ranked))
        ideal = sorted(judged.values(), reverse=True)[:k]
        idcg = sum((2**g - 1) / math.log2(i + 2) for i, g in enumerate(ideal))
        per_query[qid] = dcg / idcg
    return per_query, _mean(per_query)


def recall_at_k(run: dict, qrels: dict, k: int = 100):
    if k < 1:
        raise ValueError("k must be >= 1")
    per_query = {}
    for qid in _judged_queries(run, qrels):
        relevant = {d for d, g in qrels[qid].items() if g > 0}
        top = {d for d, _ in run.get(qid, [])[:k]}
        per_query[qid] = len(relevant & top) / len(relevant)
    return per_query, _mean(per_query)


def mrr(run: dict, qrels: dict):
    per_query = {}
    for qid in _judged_queries(run, qrels):
        judged = qrels[qid]
        per_query[qid] = 0.0
        for rank, (d, _) in enumerate(run.get(qid, []), 1):
            if judged.get(d, 0) > 0:
                per_query[qid] = 1.0 / rank
                break
    return per_query, _mean(per_query)


def parse_metric(name: str):
    """``"ndcg@10"`` -> ``("ndcg", 10)``; ``"mrr"`` -> ``("mrr", None)``."""
    m = re.fullmatch(r"(ndcg|recall|mrr)(?:@(\d+))?", name.strip().lower())
    if not m:
        raise ValueError(f"unknown metric {name!r}")
    base, k = m.group(1), m.group(2)
    if base == "mrr":
        return base, None
    return base, int(k) if k else (10 if base == "ndcg" else 100)


def compute_metric(name: str, run: dict, qrels: dict):
    base, k = parse_metric(name)
    if base == "ndcg":
        return ndcg_at_k(run, qrels, k)
    if base == "recall":
        return recall_at_k(run, qrels, k)
    return mrr(run, qrels)


def _lcs_length(a: list, b: list) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(reference: str, hypothesis: str) -> float:
    ref, hyp = tokenize(reference), tokenize(hypothesis)
    if not ref or not hyp:
        return 0.0
    lcs = _lcs_length(ref, hyp)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(hyp), lcs / len(ref)
    return 2 * p * r / (p + r)


def _normalize_answer(text: str) -> str:
    return " ".join(text.lower().split()).rstrip(".,;:!?").strip()


def exact_match(reference: str, hypothesis: str) -> int:
    return int(_normalize_answer(reference) == _normalize_answer(hypothesis))


# Student's t distribution via the regularized incomplete beta function
# (continued fraction, modified Lentz).


def _betacf(a: float, b: float, x: float, eps: float = 1e-12, max_iter: int = 10_000) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x in (0.0, 1.0):
        return x
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def t_sf_two_tailed(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


def paired_t_test(a, b):
    """Two-tailed paired t-test on ``a - b``. Returns ``(t, p)``."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    diffs = [x - y for x, y in zip(a, b)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        t = math.copysign(math.inf, mean)
        return t, 0.0
    t = mean / math.sqrt(var / n)
    return t, t_sf_two_tailed(t, n - 1)


def bonferroni(p_values, m: int) -> list:
    if m < len(p_values):
        raise ValueError("m must be at least the number of p-values")
    return [min(1.0, p * m) for p in p_values]
