"""Hashed character n-gram dual encoder.

Text is lowercased and tokenized; each token is wrapped in ``<`` ``>``
boundary markers and every character n-gram of length 3..5 is hashed into one
of ``num_buckets`` rows of the embedding table. A text's embedding is the mean
of its n-gram rows (with multiplicity), L2-normalized. Query and document share
the same table, and relevance is the dot product of the two embeddings.
"""

import hashlib
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .lexical_index import tokenize

DEFAULT_NUM_BUCKETS = 2**15
DEFAULT_DIM = 64
DEFAULT_NGRAM_RANGE = (3, 5)

CHECKPOINT_MAGIC = b"DAENC"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<5sHIIHHq")


@dataclass
class EncoderParams:
    table: np.ndarray
    ngram_range: tuple = DEFAULT_NGRAM_RANGE
    hash_seed: int = 0
    # bumped on every in-place update so cached corpus embeddings can be invalidated
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=np.float64)
        if self.table.ndim != 2 or self.table.shape[0] < 1 or self.table.shape[1] < 1:
            raise ValueError(f"embedding table must be 2-D and non-empty, got shape {self.table.shape}")
        self.ngram_range = tuple(int(n) for n in self.ngram_range)
        if not 1 <= self.ngram_range[0] <= self.ngram_range[1]:
            raise ValueError(f"bad ngram_range {self.ngram_range}")

    @property
    def num_buckets(self) -> int:
        return self.table.shape[0]

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.table.copy(), self.ngram_range, self.hash_seed)

    def zeros_like(self) -> np.ndarray:
        return np.zeros_like(self.table)


def init_params(
    num_buckets: int = DEFAULT_NUM_BUCKETS,
    dim: int = DEFAULT_DIM,
    seed: int = 0,
    ngram_range: tuple = DEFAULT_NGRAM_RANGE,
    hash_seed: int = 0,
) -> EncoderParams:
    """Random init, uniform in +-1/sqrt(dim)."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(dim)
    return EncoderParams(rng.uniform(-bound, bound, size=(num_buckets, dim)), ngram_range, hash_seed)


def char_ngrams(text: str, ngram_range: tuple = DEFAULT_NGRAM_RANGE) -> list:
    lo, hi = ngram_range
    grams = []
    for token in tokenize(text):
        marked = f"<{token}>"
        for n in range(lo, hi + 1):
            grams.extend(marked[i : i + n] for i in range(len(marked) - n + 1))
    return grams


@lru_cache(maxsize=1 << 20)
def _bucket(gram: str, num_buckets: int, hash_seed: int) -> int:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=str(hash_seed).encode()).digest()
    return int.from_bytes(digest, "little") % num_buckets


@lru_cache(maxsize=1 << 18)
def _features(text: str, num_buckets: int, ngram_range: tuple, hash_seed: int):
    grams = char_ngrams(text, ngram_range)
    if not grams:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    buckets = np.fromiter((_bucket(g, num_buckets, hash_seed) for g in grams), dtype=np.int64, count=len(grams))
    idx, counts = np.unique(buckets, return_counts=True)
    return idx, counts / len(grams)


def features(params: EncoderParams, text: str):
    """``(bucket_ids, weights)`` with unique bucket ids and weights summing to 1."""
    return _features(text or "", params.num_buckets, params.ngram_range, params.hash_seed)


def _pooled(params: EncoderParams, text: str) -> np.ndarray:
    idx, w = features(params, text)
    if len(idx) == 0:
        return np.zeros(params.dim)
    return w @ params.table[idx]


def encode(params: EncoderParams, text: str) -> np.ndarray:
    pooled = _pooled(params, text)
    norm = np.linalg.norm(pooled)
    if norm == 0.0:
        return np.zeros(params.dim)
    return pooled / norm


def encode_many(params: EncoderParams, texts) -> np.ndarray:
    out = np.zeros((len(texts), params.dim))
    for i, text in enumerate(texts):
        out[i] = encode(params, text)
    return out


def score(params: EncoderParams, query_text: str, doc_text: str) -> float:
    return float(encode(params, query_text) @ encode(params, doc_text))


def backprop_embedding(params: EncoderParams, text: str, grad_unit: np.ndarray, grad_accum: np.ndarray) -> None:
    """Accumulate the table gradient given dL/d(normalized embedding of ``text``)."""
    idx, w = features(params, text)
    if len(idx) == 0:
        return
    pooled = w @ params.table[idx]
    norm = np.linalg.norm(pooled)
    if norm == 0.0:
        return
    unit = pooled / norm
    grad_pooled = (grad_unit - unit * (unit @ grad_unit)) / norm
    grad_accum[idx] += np.outer(w, grad_pooled)


def backprop_score(
    params: EncoderParams, query_text: str, doc_text: str, upstream: float, grad_accum: np.ndarray
) -> None:
    """Add ``upstream * d score(query, doc) / d table`` into ``grad_accum``."""
    if upstream == 0.0:
        return
    q = encode(params, query_text)
    d = encode(params, doc_text)
    backprop_embedding(params, query_text, upstream * d, grad_accum)
    backprop_embedding(params, doc_text, upstream * q, grad_accum)


def _rank_order(scores: np.ndarray, ids: list) -> np.ndarray:
    id_rank = np.empty(len(ids), dtype=np.int64)
    id_rank[sorted(range(len(ids)), key=ids.__getitem__)] = np.arange(len(ids))
    return np.lexsort((id_rank, -scores))


class DenseIndex:
    """Exhaustive dense retrieval over a fixed corpus.

    Document embeddings are cached and recomputed whenever ``params.version``
    or the table object changes.
    """

    def __init__(self, params: EncoderParams, corpus):
        self.params = params
        self.docs = list(corpus)
        self.ids = [d.id for d in self.docs]
        self._key = None
        self._matrix = None

    def matrix(self) -> np.ndarray:
        key = (id(self.params.table), self.params.version)
        if key != self._key:
            self._matrix = encode_many(self.params, [d.text for d in self.docs])
            self._key = key
        return self._matrix

    def search(self, query_text: str, top_k: int) -> list:
        if top_k <= 0 or not self.docs:
            return []
        scores = self.matrix() @ encode(self.params, query_text)
        order = _rank_order(scores, self.ids)[:top_k]
        return [(self.ids[i], float(scores[i])) for i in order]


def dense_search(params: EncoderParams, corpus, query_text: str, top_k: int) -> list:
    return DenseIndex(params, corpus).search(query_text, top_k)


def save_params(params: EncoderParams, path) -> None:
    lo, hi = params.ngram_range
    header = _HEADER.pack(
        CHECKPOINT_MAGIC, CHECKPOINT_VERSION, params.num_buckets, params.dim, lo, hi, params.hash_seed
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(params.table.astype("<f4").tobytes(order="C"))


def load_params(path) -> EncoderParams:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint header")
    magic, version, num_buckets, dim, lo, hi, hash_seed = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an encoder checkpoint")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    body = raw[_HEADER.size :]
    if len(body) != num_buckets * dim * 4:
        raise ValueError(f"{path}: table size does not match header")
    table = np.frombuffer(body, dtype="<f4").reshape(num_buckets, dim).astype(np.float64)
    return EncoderParams(table, (lo, hi), hash_seed)
