"""Pipeline configuration: a flat INI file with one section per stage.

Relative paths are resolved against the directory of the config file. Any
value can be overridden from the environment as ``DESCADAPT_<SECTION>_<KEY>``,
e.g. ``DESCADAPT_BUILD_N=500``.
"""

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .corpus_builder import BuildConfig
from .trainer import DESK_PROFILE, PROFILES, TrainConfig, config_with

ENV_PREFIX = "DESCADAPT_"


class ConfigError(ValueError):
    pass


@dataclass
class EncoderConfig:
    num_buckets: int = 2**15
    dim: int = 64
    init_seed: int = 0
    hash_seed: int = 0


@dataclass
class PipelineConfig:
    collection: Path
    description: Path
    output: Path
    bank: Optional[Path] = None
    client_mode: str = "none"
    mock_dir: Optional[Path] = None
    examples: int = 3
    build: BuildConfig = field(default_factory=BuildConfig)
    k_prime: int = 5
    genq_temperature: float = 0.7
    teacher: str = "bm25"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    train: TrainConfig = field(default_factory=lambda: DESK_PROFILE)
    rng_seed: int = 0
    eval_docs: Optional[Path] = None
    eval_queries: Optional[Path] = None
    eval_qrels: Optional[Path] = None
    metrics: tuple = ("ndcg@10", "recall@100", "mrr")

    @property
    def has_eval(self) -> bool:
        return self.eval_docs is not None

    def check_inputs(self) -> None:
        """Every referenced input must exist before any stage runs."""
        required = [("paths.collection", self.collection), ("paths.description", self.description)]
        if self.bank is not None:
            required.append(("paths.bank", self.bank))
        if self.client_mode in ("mock", "record"):
            if self.mock_dir is None:
                raise ConfigError(f"client mode {self.client_mode} needs client.mock_dir")
            if self.client_mode == "mock":
                required.append(("client.mock_dir", self.mock_dir))
        if self.has_eval:
            required += [("eval.docs", self.eval_docs), ("eval.queries", self.eval_queries), ("eval.qrels", self.eval_qrels)]
        for name, path in required:
            if path is None or not Path(path).exists():
                raise ConfigError(f"{name}: {path} does not exist")


def _read(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str.lower
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    for name, value in os.environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        section, _, key = name[len(ENV_PREFIX) :].lower().partition("_")
        if section and key:
            if not parser.has_section(section):
                parser.add_section(section)
            parser.set(section, key, value)
    return parser


def load_config(path) -> PipelineConfig:
    path = Path(path)
    cp = _read(path)
    base = path.parent

    def get(section, key, default=None, cast=str):
        if not cp.has_option(section, key):
            return default
        raw = cp.get(section, key).strip()
        try:
            return cast(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from None

    def p(section, key):
        value = get(section, key)
        if value is None or value == "":
            return None
        q = Path(value).expanduser()
        return q if q.is_absolute() else base / q

    for key in ("collection", "description", "output"):
        if p("paths", key) is None:
            raise ConfigError(f"paths.{key} is required")

    rng_seed = get("pipeline", "rng_seed", 0, int)
    try:
        build = BuildConfig(
            N=get("build", "n", 10_000, int),
            k=get("build", "k", 30, int),
            num_seeds=get("build", "num_seeds", 1, int),
            max_iterations=get("build", "max_iterations", 100_000, int),
            max_query_tokens=get("build", "max_query_tokens", 512, int),
            rng_seed=rng_seed,
        )
        profile = get("train", "profile", "desk").lower()
        if profile not in PROFILES:
            raise ConfigError(f"train.profile must be one of {sorted(PROFILES)}")
        base_train = PROFILES[profile]
        overrides = {}
        for key, cast in (
            ("peak_lr", float),
            ("warmup_steps", int),
            ("total_steps", int),
            ("batch_size", int),
            ("inbatch_weight", float),
            ("temperature", float),
        ):
            value = get("train", key, None, cast)
            if value is not None:
                overrides[key] = value
        train = config_with(base_train, rng_seed=rng_seed, **overrides)
        encoder = EncoderConfig(
            num_buckets=get("encoder", "num_buckets", 2**15, int),
            dim=get("encoder", "dim", 64, int),
            init_seed=get("encoder", "init_seed", 0, int),
            hash_seed=get("encoder", "hash_seed", 0, int),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    k_prime = get("genq", "k_prime", 5, int)
    if k_prime < 1:
        raise ConfigError("genq.k_prime must be >= 1")
    examples = get("understand", "examples", 3, int)
    if not 0 <= examples:
        raise ConfigError("understand.examples must be >= 0")
    metrics = tuple(m.strip() for m in get("eval", "metrics", "ndcg@10, recall@100, mrr").split(",") if m.strip())
    return PipelineConfig(
        collection=p("paths", "collection"),
        description=p("paths", "description"),
        output=p("paths", "output"),
        bank=p("paths", "bank"),
        client_mode=get("client", "mode", "none").lower(),
        mock_dir=p("client", "mock_dir"),
        examples=examples,
        build=build,
        k_prime=k_prime,
        genq_temperature=get("genq", "temperature", 0.7, float),
        teacher=get("label", "teacher", "bm25").lower(),
        encoder=encoder,
        train=train,
        rng_seed=rng_seed,
        eval_docs=p("eval", "docs"),
        eval_queries=p("eval", "queries"),
        eval_qrels=p("eval", "qrels"),
        metrics=metrics,
    )
