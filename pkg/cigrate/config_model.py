"""
config_model.py
===============
Parse, represent and serialize CI configuration documents (Travis CI and
GitHub Actions), plus dialect detection.

Parsing goes through PyYAML's composer so that we keep scalar text and
style instead of constructed Python values: `python: 3.10` stays the text
"3.10" rather than becoming the float 3.1. Anchors, aliases and merge keys
are expanded while converting, comments are dropped.

Scalar resolution follows YAML 1.1 except that only true/false spellings are
booleans. A bare `on:` key therefore reads as the string "on".

Canonical output
----------------
- block style, 2-space indent, sequences indented under their key
- keys in stored order
- strings quoted (double quotes) only when plain style would change their
  meaning for a YAML 1.1 reader; the mapping key `on` is always bare
- multi-line strings as literal blocks
- LF line endings, trailing newline
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Optional, Tuple, Union

import yaml

from .errors import CigrateError, ParseError

logger = logging.getLogger("cigrate.config_model")

ROOT_PATH = "."

STR_TAG = "tag:yaml.org,2002:str"
INT_TAG = "tag:yaml.org,2002:int"
FLOAT_TAG = "tag:yaml.org,2002:float"
BOOL_TAG = "tag:yaml.org,2002:bool"
NULL_TAG = "tag:yaml.org,2002:null"
SEQ_TAG = "tag:yaml.org,2002:seq"
MAP_TAG = "tag:yaml.org,2002:map"
MERGE_TAG = "tag:yaml.org,2002:merge"

# Long shell commands must never be folded.
_LINE_WIDTH = 1_000_000

TRAVIS_SIGNAL_KEYS = ("language", "script", "install", "dist", "addons", "branches")


# -----------------------------
# Dialects
# -----------------------------
class CiDialect(Enum):
    TRAVIS = "travis"
    GHA = "gha"

    @property
    def label(self) -> str:
        return "Travis CI" if self is CiDialect.TRAVIS else "GitHub Actions"


_DIALECT_ALIASES = {
    "travis": CiDialect.TRAVIS,
    "travisci": CiDialect.TRAVIS,
    "travis-ci": CiDialect.TRAVIS,
    "gha": CiDialect.GHA,
    "github": CiDialect.GHA,
    "githubactions": CiDialect.GHA,
    "github-actions": CiDialect.GHA,
}


def ensure_dialect(value: Union[str, CiDialect]) -> CiDialect:
    """Boundary check: accepts a CiDialect or one of its spellings."""
    if isinstance(value, CiDialect):
        return value
    if isinstance(value, str):
        found = _DIALECT_ALIASES.get(value.strip().lower())
        if found is not None:
            return found
    raise CigrateError("E_BAD_DIALECT", f"unknown CI dialect: {value!r}")


# -----------------------------
# Node tree
# -----------------------------
class ScalarKind(Enum):
    STRING = "string"
    INT = "int"
    FLOAT = "float"
    BOOL = "bool"
    NULL = "null"


_KIND_BY_TAG = {
    STR_TAG: ScalarKind.STRING,
    INT_TAG: ScalarKind.INT,
    FLOAT_TAG: ScalarKind.FLOAT,
    BOOL_TAG: ScalarKind.BOOL,
    NULL_TAG: ScalarKind.NULL,
}
_TAG_BY_KIND = {kind: tag for tag, kind in _KIND_BY_TAG.items()}


@dataclass(frozen=True)
class YamlScalar:
    text: str
    kind: ScalarKind = ScalarKind.STRING
    # plain (None), "'", '"', "|" or ">"; presentation only
    style: Optional[str] = field(default=None, compare=False)


@dataclass(frozen=True)
class YamlSequence:
    items: Tuple["YamlNode", ...] = ()
    flow: bool = field(default=False, compare=False)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator["YamlNode"]:
        return iter(self.items)


@dataclass(frozen=True)
class YamlMapping:
    entries: Tuple[Tuple[str, "YamlNode"], ...] = ()
    flow: bool = field(default=False, compare=False)

    def __post_init__(self):
        keys = [key for key, _ in self.entries]
        if len(set(keys)) != len(keys):
            dup = next(k for k in keys if keys.count(k) > 1)
            raise ParseError("E_DUP_KEY", f"duplicate key '{dup}'")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: object) -> bool:
        return any(k == key for k, _ in self.entries)

    def get(self, key: str, default: Optional["YamlNode"] = None) -> Optional["YamlNode"]:
        for k, value in self.entries:
            if k == key:
                return value
        return default

    def keys(self) -> List[str]:
        return [k for k, _ in self.entries]

    def items(self) -> List[Tuple[str, "YamlNode"]]:
        return list(self.entries)


YamlNode = Union[YamlScalar, YamlSequence, YamlMapping]


@dataclass(frozen=True)
class RawConfig:
    dialect: CiDialect
    document: YamlMapping
    source_path: str = "<memory>"
    byte_length: int = 0


# -----------------------------
# Node helpers
# -----------------------------
def join_path(path: str, key: str) -> str:
    return key if path == ROOT_PATH else f"{path}.{key}"


def index_path(path: str, index: int) -> str:
    return f"{path}[{index}]"


def as_text(node: Optional[YamlNode]) -> Optional[str]:
    """Scalar text, or None for collections / missing nodes / nulls."""
    if isinstance(node, YamlScalar) and node.kind is not ScalarKind.NULL:
        return node.text
    return None


def as_text_list(node: Optional[YamlNode]) -> List[str]:
    """A scalar or a sequence of scalars as a list of texts."""
    if node is None:
        return []
    if isinstance(node, YamlSequence):
        return [text for text in (as_text(item) for item in node.items) if text is not None]
    text = as_text(node)
    return [] if text is None else [text]


def is_true(node: Optional[YamlNode]) -> bool:
    return isinstance(node, YamlScalar) and node.text.lower() == "true"


def from_python(value) -> YamlNode:
    """Build a node tree from plain Python values (dict order is kept)."""
    if isinstance(value, (YamlScalar, YamlSequence, YamlMapping)):
        return value
    if value is None:
        return YamlScalar("null", ScalarKind.NULL)
    if isinstance(value, bool):
        return YamlScalar("true" if value else "false", ScalarKind.BOOL)
    if isinstance(value, int):
        return YamlScalar(str(value), ScalarKind.INT)
    if isinstance(value, float):
        return YamlScalar(repr(value), ScalarKind.FLOAT)
    if isinstance(value, str):
        return YamlScalar(value, ScalarKind.STRING)
    if isinstance(value, dict):
        return YamlMapping(tuple((str(k), from_python(v)) for k, v in value.items()))
    if isinstance(value, (list, tuple)):
        return YamlSequence(tuple(from_python(v) for v in value))
    raise TypeError(f"cannot represent {type(value).__name__} as YAML")


# -----------------------------
# Parsing
# -----------------------------
class _CiLoader(yaml.SafeLoader):
    """SafeLoader whose booleans are only true/false (yes/no/on/off stay strings)."""


_CiLoader.yaml_implicit_resolvers = {
    first: [(tag, regexp) for tag, regexp in resolvers if tag != BOOL_TAG]
    for first, resolvers in yaml.SafeLoader.yaml_implicit_resolvers.items()
}
_CiLoader.add_implicit_resolver(
    BOOL_TAG,
    re.compile(r"^(?:true|True|TRUE|false|False|FALSE)$"),
    list("tTfF"),
)


def _mark_position(mark) -> Tuple[Optional[int], Optional[int]]:
    if mark is None:
        return None, None
    return mark.line + 1, mark.column + 1


def _compose_all(text: str) -> List[yaml.Node]:
    try:
        return list(yaml.compose_all(text, Loader=_CiLoader))
    except yaml.MarkedYAMLError as exc:
        line, column = _mark_position(exc.problem_mark or exc.context_mark)
        problem = exc.problem or exc.context or "malformed YAML"
        raise ParseError("E_YAML_SYNTAX", problem, line=line, column=column) from exc
    except yaml.YAMLError as exc:
        raise ParseError("E_YAML_SYNTAX", str(exc)) from exc


def _convert(node: yaml.Node, active: set) -> YamlNode:
    if id(node) in active:
        line, column = _mark_position(node.start_mark)
        raise ParseError("E_YAML_SYNTAX", "recursive alias", line=line, column=column)

    if isinstance(node, yaml.ScalarNode):
        kind = _KIND_BY_TAG.get(node.tag, ScalarKind.STRING)
        return YamlScalar(node.value, kind, style=node.style or None)

    active.add(id(node))
    try:
        if isinstance(node, yaml.SequenceNode):
            return YamlSequence(
                tuple(_convert(item, active) for item in node.value),
                flow=bool(node.flow_style),
            )
        return _convert_mapping(node, active)
    finally:
        active.discard(id(node))


def _convert_mapping(node: yaml.MappingNode, active: set) -> YamlMapping:
    explicit: List[Tuple[str, YamlNode]] = []
    seen = set()
    merged: List[Tuple[str, YamlNode]] = []

    for key_node, value_node in node.value:
        if key_node.tag == MERGE_TAG:
            for key, value in _merge_sources(value_node, active):
                if key not in {k for k, _ in merged}:
                    merged.append((key, value))
            continue
        line, column = _mark_position(key_node.start_mark)
        if not isinstance(key_node, yaml.ScalarNode):
            raise ParseError("E_YAML_SYNTAX", "complex mapping keys are not supported", line=line, column=column)
        key = key_node.value
        if key in seen:
            raise ParseError("E_DUP_KEY", f"duplicate key '{key}'", line=line, column=column)
        seen.add(key)
        explicit.append((key, _convert(value_node, active)))

    entries = [(k, v) for k, v in merged if k not in seen] + explicit
    return YamlMapping(tuple(entries), flow=bool(node.flow_style))


def _merge_sources(node: yaml.Node, active: set) -> List[Tuple[str, YamlNode]]:
    sources = node.value if isinstance(node, yaml.SequenceNode) else [node]
    out: List[Tuple[str, YamlNode]] = []
    for source in sources:
        converted = _convert(source, active)
        if not isinstance(converted, YamlMapping):
            line, column = _mark_position(source.start_mark)
            raise ParseError("E_YAML_SYNTAX", "merge key expects a mapping", line=line, column=column)
        out.extend(converted.entries)
    return out


def _decode(data: bytes) -> str:
    try:
        return data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise ParseError("E_UTF8", f"input is not valid UTF-8 at byte {exc.start}") from exc


def compose_document(text: str) -> Optional[YamlNode]:
    """Single YAML document as a node tree; None for an empty stream."""
    documents = _compose_all(text)
    if len(documents) > 1:
        raise ParseError("E_MULTI_DOC", f"expected one YAML document, found {len(documents)}")
    if not documents:
        return None
    return _convert(documents[0], set())


def parse_config(data: bytes, dialect: Union[str, CiDialect], source_path: str = "<memory>") -> RawConfig:
    dialect = ensure_dialect(dialect)
    document = compose_document(_decode(data))

    if not isinstance(document, YamlMapping):
        found = "empty document" if document is None else type(document).__name__
        raise ParseError("E_ROOT_NOT_MAPPING", f"root must be a mapping, found {found}")

    if dialect is CiDialect.TRAVIS and "import" in document:
        logger.warning(f"{source_path}: Travis 'import:' is not supported; imported files are ignored.")

    logger.debug(f"Parsed {source_path} as {dialect.label}: {len(document)} root keys.")
    return RawConfig(dialect=dialect, document=document, source_path=source_path, byte_length=len(data))


def read_config(path, dialect: Union[str, CiDialect, None] = None) -> RawConfig:
    """Read a file from disk; the dialect is detected when not given."""
    file_path = Path(path)
    data = file_path.read_bytes()
    if dialect is None:
        dialect = detect_dialect(data)
    return parse_config(data, dialect, source_path=str(file_path))


# -----------------------------
# Dialect detection
# -----------------------------
def _has_key_anywhere(node: YamlNode, key: str) -> bool:
    if isinstance(node, YamlMapping):
        return any(k == key or _has_key_anywhere(v, key) for k, v in node.entries)
    if isinstance(node, YamlSequence):
        return any(_has_key_anywhere(item, key) for item in node.items)
    return False


def detect_dialect(data: bytes) -> CiDialect:
    document = compose_document(_decode(data))
    if not isinstance(document, YamlMapping):
        raise ParseError("E_ROOT_NOT_MAPPING", "root must be a mapping")

    jobs = document.get("jobs")
    job_has_runner = isinstance(jobs, YamlMapping) and any(
        isinstance(job, YamlMapping) and "runs-on" in job for _, job in jobs.entries
    )
    if "jobs" in document and ("on" in document or job_has_runner):
        return CiDialect.GHA

    if any(key in document for key in TRAVIS_SIGNAL_KEYS) and not _has_key_anywhere(document, "runs-on"):
        return CiDialect.TRAVIS

    raise CigrateError("E_AMBIGUOUS_DIALECT", "no Travis CI or GitHub Actions signal keys found")


# -----------------------------
# Serialization
# -----------------------------
class _CanonicalDumper(yaml.SafeDumper):
    def increase_indent(self, flow=False, indentless=False):
        return super().increase_indent(flow, False)

    def choose_scalar_style(self):
        style = super().choose_scalar_style()
        return '"' if style == "'" else style


def _key_node(key: str) -> yaml.ScalarNode:
    # Tagging `on` as a bool makes it implicit for the emitter, so it stays bare.
    tag = BOOL_TAG if key == "on" else STR_TAG
    return yaml.ScalarNode(tag, key)


def _to_yaml_node(node: YamlNode) -> yaml.Node:
    if isinstance(node, YamlMapping):
        return yaml.MappingNode(
            MAP_TAG,
            [(_key_node(key), _to_yaml_node(value)) for key, value in node.entries],
            flow_style=False,
        )
    if isinstance(node, YamlSequence):
        return yaml.SequenceNode(SEQ_TAG, [_to_yaml_node(item) for item in node.items], flow_style=False)
    if node.kind is ScalarKind.STRING:
        style = "|" if "\n" in node.text else None
        return yaml.ScalarNode(STR_TAG, node.text, style=style)
    return yaml.ScalarNode(_TAG_BY_KIND[node.kind], node.text)


def serialize_document(document: YamlMapping) -> str:
    return yaml.serialize(
        _to_yaml_node(document),
        Dumper=_CanonicalDumper,
        indent=2,
        width=_LINE_WIDTH,
        allow_unicode=True,
        line_break="\n",
    )


def serialize_config(config: RawConfig) -> bytes:
    return serialize_document(config.document).encode("utf-8")
