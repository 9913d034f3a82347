"""The fifteen-attribute retrieval-domain taxonomy.

A domain is described by seven query attributes, seven document attributes
and one relevance attribute. Each value is either a free-form lowercase string
or ``None`` (rendered as ``NA``).
"""

import json
import re
from collections.abc import Mapping
from typing import Iterator, Optional

QUERY_KEYS = (
    "query_topic",
    "query_linguistic_features",
    "query_language",
    "query_structure",
    "query_modality",
    "query_format",
    "query_context",
)
DOCUMENT_KEYS = (
    "document_topic",
    "document_linguistic_features",
    "document_language",
    "document_structure",
    "document_modality",
    "document_format",
    "document_source",
)
RELEVANCE_KEYS = ("relevance_notion",)
ATTRIBUTE_KEYS = QUERY_KEYS + DOCUMENT_KEYS + RELEVANCE_KEYS

NA = "NA"
_NA_SPELLINGS = {"na", "n/a", "none", "null", "not applicable", "not available"}
_SEPARATORS = re.compile(r"[\n■▪⬛]")
_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


def normalize_value(value: Optional[str]) -> Optional[str]:
    """Lowercase, trim and collapse whitespace; NA spellings become ``None``."""
    if value is None:
        return None
    text = " ".join(value.split()).lower().strip(" .;")
    if not text or text in _NA_SPELLINGS:
        return None
    return text


def _key_form(name: str) -> str:
    return " ".join(re.sub(r"[_\-]+", " ", name).lower().split())


_KEY_LOOKUP = {_key_form(k): k for k in ATTRIBUTE_KEYS}
# Table headings use plural "topics"
_KEY_LOOKUP.update({"query topics": "query_topic", "document topics": "document_topic"})


def canonical_key(name: str) -> Optional[str]:
    """Map ``"Query Topic"``, ``"query_topic"`` etc. to the snake_case key."""
    return _KEY_LOOKUP.get(_key_form(name))


def display_key(key: str) -> str:
    return key.replace("_", " ")


class DomainAttributes(Mapping):
    """Immutable, total mapping from the 15 attribute keys to values.

    Missing keys are filled with ``None``. Values are normalized on the way in,
    so two instances compare equal whenever their normalized values agree.
    """

    __slots__ = ("_values",)

    def __init__(self, values: Optional[Mapping] = None, **kwargs):
        merged = dict(values or {})
        merged.update(kwargs)
        unknown = set(merged) - set(ATTRIBUTE_KEYS)
        if unknown:
            raise KeyError(f"unknown attribute keys: {sorted(unknown)}")
        self._values = {k: normalize_value(merged.get(k)) for k in ATTRIBUTE_KEYS}

    def __getitem__(self, key: str) -> Optional[str]:
        return self._values[key]

    def __iter__(self) -> Iterator[str]:
        return iter(ATTRIBUTE_KEYS)

    def __len__(self) -> int:
        return len(ATTRIBUTE_KEYS)

    def __eq__(self, other) -> bool:
        if isinstance(other, DomainAttributes):
            return self._values == other._values
        return NotImplemented

    def __hash__(self) -> int:
        return hash(tuple(self._values.items()))

    def __repr__(self) -> str:
        specified = {k: v for k, v in self._values.items() if v is not None}
        return f"DomainAttributes({specified})"

    def replace(self, **changes) -> "DomainAttributes":
        return DomainAttributes({**self._values, **changes})

    def subset(self, keys) -> dict:
        return {k: self._values[k] for k in keys}

    @property
    def query(self) -> dict:
        return self.subset(QUERY_KEYS)

    @property
    def document(self) -> dict:
        return self.subset(DOCUMENT_KEYS)

    @property
    def relevance_notion(self) -> Optional[str]:
        return self._values["relevance_notion"]

    def to_json(self) -> dict:
        return dict(self._values)

    @classmethod
    def from_json(cls, obj: Mapping) -> "DomainAttributes":
        return cls({k: obj.get(k) for k in ATTRIBUTE_KEYS})

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def parse_attributes(text: str, warnings: Optional[list] = None) -> DomainAttributes:
    """Parse ``key: value`` segments separated by newlines or ``■``.

    Never raises. Unrecognized keys are appended to ``warnings`` when given.
    The first occurrence of a key wins.
    """
    found: dict = {}
    for segment in _SEPARATORS.split(text or ""):
        segment = _BULLET.sub("", segment).strip()
        if ":" not in segment:
            continue
        name, value = segment.split(":", 1)
        key = canonical_key(name)
        if key is None:
            if warnings is not None and name.strip():
                warnings.append(name.strip())
            continue
        found.setdefault(key, value)
    return DomainAttributes(found)


def serialize_attributes(attrs: Mapping, keys=ATTRIBUTE_KEYS, skip_na: bool = False) -> str:
    lines = []
    for key in keys:
        value = attrs.get(key)
        if value is None and skip_na:
            continue
        lines.append(f"{display_key(key)}: {NA if value is None else value}")
    return "\n".join(lines)


def diff_domains(a: DomainAttributes, b: DomainAttributes) -> list:
    """Keys whose values differ. An empty list means no domain shift."""
    return [k for k in ATTRIBUTE_KEYS if a[k] != b[k]]
