"""Listwise distillation of teacher labels into the dual encoder.

Per query, every teacher-ordered pair ``(d, d')`` (teacher prefers ``d``)
contributes ``|1/pi(d) - 1/pi(d')| * log(1 + exp(s(d') - s(d)))`` where ``pi``
is the student's rank within the candidate list and ``s`` the student score.
Ranks are treated as constants. An optional in-batch term is a softmax
cross-entropy of each query against the teacher-top documents of all queries in
the batch.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .dense_model import EncoderParams, backprop_embedding, encode, encode_many

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    def __init__(self, step: int, query_id: Optional[str], message: str):
        super().__init__(f"step {step}, query {query_id}: {message}")
        self.step = step
        self.query_id = query_id


@dataclass
class TrainConfig:
    peak_lr: float = 1e-5
    warmup_steps: int = 100
    total_steps: int = 1000
    batch_size: int = 8
    inbatch_weight: float = 1.0
    temperature: float = 1.0
    rng_seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.total_steps < 1 or self.batch_size < 1:
            raise ValueError("total_steps and batch_size must be positive")
        if not 0 <= self.warmup_steps <= self.total_steps:
            raise ValueError("warmup_steps must lie in [0, total_steps]")
        if self.peak_lr < 0 or self.inbatch_weight < 0:
            raise ValueError("peak_lr and inbatch_weight must be >= 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")


FULL_PROFILE = TrainConfig(peak_lr=1e-5, warmup_steps=4000, total_steps=40_000, batch_size=128)
DESK_PROFILE = TrainConfig(peak_lr=1e-3, warmup_steps=30, total_steps=300, batch_size=8)
PROFILES = {"desk": DESK_PROFILE, "full": FULL_PROFILE}


@dataclass
class TrainingGroup:
    query_id: str
    query_text: str
    doc_ids: list
    doc_texts: list
    teacher_scores: np.ndarray

    def __post_init__(self):
        self.teacher_scores = np.asarray(self.teacher_scores, dtype=np.float64)
        if not (len(self.doc_ids) == len(self.doc_texts) == len(self.teacher_scores)):
            raise ValueError(f"group {self.query_id}: misaligned candidate lists")

    @property
    def positive(self) -> int:
        """Index of the teacher-top document (first on ties)."""
        return int(np.argmax(self.teacher_scores))


def make_groups(queries, docs: dict, labels: dict) -> list:
    groups = []
    for q in queries:
        if q.id not in labels or not labels[q.id]:
            raise ValueError(f"query {q.id} has no labels")
        ids = list(labels[q.id])
        groups.append(TrainingGroup(q.id, q.text, ids, [docs[i].text for i in ids], [labels[q.id][i] for i in ids]))
    return groups


def rank_in_list(scores) -> np.ndarray:
    """1-based ranks, highest score first, ties by lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    ranks = np.empty(len(scores), dtype=np.int64)
    ranks[order] = np.arange(1, len(scores) + 1)
    return ranks


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _pair_weights(y_t, y_s):
    y_t = np.asarray(y_t, dtype=np.float64)
    y_s = np.asarray(y_s, dtype=np.float64)
    if y_t.shape != y_s.shape or y_t.ndim != 1:
        raise ValueError(f"teacher/student score shapes differ: {y_t.shape} vs {y_s.shape}")
    if len(y_t) == 0:
        raise ValueError("empty score lists")
    inv = 1.0 / rank_in_list(y_s)
    fired = y_t[:, None] > y_t[None, :]
    weights = np.where(fired, np.abs(inv[:, None] - inv[None, :]), 0.0)
    # margin[d, d'] = s(d') - s(d)
    margin = y_s[None, :] - y_s[:, None]
    return weights, margin


def listwise_loss(y_t, y_s) -> float:
    weights, margin = _pair_weights(y_t, y_s)
    return float(np.sum(weights * np.logaddexp(0.0, margin)))


def listwise_loss_grad(y_t, y_s) -> np.ndarray:
    weights, margin = _pair_weights(y_t, y_s)
    g = weights * _sigmoid(margin)
    return g.sum(axis=0) - g.sum(axis=1)


def _inbatch(q_emb: np.ndarray, p_emb: np.ndarray, temperature: float):
    """Loss and gradients w.r.t. query and positive embeddings."""
    n = len(q_emb)
    logits = q_emb @ p_emb.T / temperature
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    loss = float(-np.mean(np.log(np.diag(probs))))
    d_logits = (probs - np.eye(n)) / (n * temperature)
    return loss, d_logits @ p_emb, d_logits.T @ q_emb


def inbatch_loss(groups, params: EncoderParams, temperature: float = 1.0) -> float:
    if not groups:
        raise ValueError("empty batch")
    q = encode_many(params, [g.query_text for g in groups])
    p = encode_many(params, [g.doc_texts[g.positive] for g in groups])
    return _inbatch(q, p, temperature)[0]


def lr_schedule(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to ``peak_lr`` then linear decay to 0 at ``total_steps``."""
    if step <= cfg.warmup_steps:
        return cfg.peak_lr * step / cfg.warmup_steps if cfg.warmup_steps else cfg.peak_lr
    remaining = cfg.total_steps - cfg.warmup_steps
    return cfg.peak_lr * max(0.0, (cfg.total_steps - step) / remaining)


@dataclass
class StepLog:
    step: int
    lr: float
    listwise_loss: float
    inbatch_loss: float
    total: float

    def tsv(self) -> str:
        return f"{self.step}\t{self.lr:.6g}\t{self.listwise_loss:.6f}\t{self.inbatch_loss:.6f}\t{self.total:.6f}"


LOG_HEADER = "step\tlr\tlistwise_loss\tinbatch_loss\ttotal"


def batch_loss_and_grad(params: EncoderParams, batch, cfg: TrainConfig, step: int = 0):
    """Mean listwise loss (+ weighted in-batch loss) and its table gradient."""
    grad_units: dict = {}

    def push(text, g):
        if text in grad_units:
            grad_units[text] = grad_units[text] + g
        else:
            grad_units[text] = g

    n = len(batch)
    listwise_total = 0.0
    q_embs, p_embs = [], []
    for group in batch:
        q = encode(params, group.query_text)
        docs = encode_many(params, group.doc_texts)
        y_s = docs @ q
        loss = listwise_loss(group.teacher_scores, y_s)
        if not math.isfinite(loss):
            raise TrainingError(step, group.query_id, "non-finite listwise loss")
        listwise_total += loss
        g = listwise_loss_grad(group.teacher_scores, y_s) / n
        push(group.query_text, g @ docs)
        for j, text in enumerate(group.doc_texts):
            if g[j] != 0.0:
                push(text, g[j] * q)
        q_embs.append(q)
        p_embs.append(docs[group.positive])
    listwise_mean = listwise_total / n

    inbatch = 0.0
    if cfg.inbatch_weight > 0 and n > 1:
        inbatch, dq, dp = _inbatch(np.array(q_embs), np.array(p_embs), cfg.temperature)
        if not math.isfinite(inbatch):
            raise TrainingError(step, batch[0].query_id, "non-finite in-batch loss")
        for i, group in enumerate(batch):
            push(group.query_text, cfg.inbatch_weight * dq[i])
            push(group.doc_texts[group.positive], cfg.inbatch_weight * dp[i])

    grad = params.zeros_like()
    for text, g in grad_units.items():
        backprop_embedding(params, text, g, grad)
    total = listwise_mean + cfg.inbatch_weight * inbatch
    return StepLog(step, 0.0, listwise_mean, inbatch, total), grad


class Adam:
    def __init__(self, shape, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def update(self, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m *= self.beta1
        self.m += (1 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainResult:
    params: EncoderParams
    log: list = field(default_factory=list)
    best_step: Optional[int] = None
    best_metric: Optional[float] = None


def _batches(n_groups: int, batch_size: int, rng: np.random.Generator):
    size = min(batch_size, n_groups)
    while True:
        order = rng.permutation(n_groups)
        for start in range(0, n_groups - size + 1, size):
            yield order[start : start + size]


def train(
    student: EncoderParams,
    groups: list,
    cfg: TrainConfig,
    eval_fn: Optional[Callable[[EncoderParams], float]] = None,
    eval_every: int = 100,
    patience: Optional[int] = None,
    on_step: Optional[Callable[[StepLog], None]] = None,
) -> TrainResult:
    """Run ``cfg.total_steps`` Adam steps and return the adapted parameters.

    ``student`` is not modified. When ``eval_fn`` is given (e.g. MRR on a
    held-out set) it is evaluated every ``eval_every`` steps and the best
    parameters are returned; ``patience`` evaluations without improvement stop
    training early.
    """
    if not groups:
        raise ValueError("no training groups")
    params = student.copy()
    rng = np.random.default_rng(cfg.rng_seed)
    opt = Adam(params.table.shape, cfg.beta1, cfg.beta2, cfg.eps)
    result = TrainResult(params)
    best, stale = None, 0
    batches = _batches(len(groups), cfg.batch_size, rng)
    for step in range(1, cfg.total_steps + 1):
        batch = [groups[i] for i in next(batches)]
        entry, grad = batch_loss_and_grad(params, batch, cfg, step)
        entry.lr = lr_schedule(step, cfg)
        params.table -= opt.update(grad, entry.lr)
        params.version += 1
        result.log.append(entry)
        if on_step is not None:
            on_step(entry)
        if eval_fn is not None and step % eval_every == 0:
            metric = eval_fn(params)
            log.info("step %d: held-out metric %.4f", step, metric)
            if best is None or metric > best[0]:
                best, stale = (metric, step, params.copy()), 0
            else:
                stale += 1
                if patience is not None and stale >= patience:
                    break
    if best is not None:
        result.best_metric, result.best_step, result.params = best
    return result


def write_training_log(path, entries) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(LOG_HEADER + "\n")
        for e in entries:
            fh.write(e.tsv() + "\n")


def read_training_log(path) -> list:
    rows = []
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            s, lr, lw, ib, tot = line.rstrip("\n").split("\t")
            rows.append(StepLog(int(s), float(lr), float(lw), float(ib), float(tot)))
    return rows


def config_with(cfg: TrainConfig, **overrides) -> TrainConfig:
    return replace(cfg, **overrides)
