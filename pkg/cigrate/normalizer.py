"""
normalizer.py
=============
Canonical form of a CI config, the token stream the metrics work on, and
the CI feature categories a config uses.

Normalization
-------------
- flow collections become block collections, scalar quoting is forgotten
- null spellings collapse to `null`, booleans to lowercase
- mapping entries whose value is null, {} or [] are pruned (bottom-up);
  event entries under a GHA `on:` mapping are kept (`push:` means "on push")
  and a null event becomes {}
- root keys are sorted into a fixed per-dialect order, everything else keeps
  its order
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import FrozenSet, Iterator, List, Set, Tuple, Union

from .config_model import (
    CiDialect,
    RawConfig,
    ScalarKind,
    YamlMapping,
    YamlNode,
    YamlScalar,
    YamlSequence,
    as_text,
    serialize_document,
)

logger = logging.getLogger("cigrate.normalizer")

TRAVIS_KEY_ORDER = (
    "language",
    "os",
    "dist",
    "env",
    "cache",
    "before_install",
    "install",
    "before_script",
    "script",
    "after_success",
    "after_failure",
    "after_script",
    "jobs",
    "matrix",
    "branches",
    "addons",
    "services",
    "notifications",
    "deploy",
)
GHA_KEY_ORDER = ("name", "on", "env", "jobs")

TOKEN_PATTERN = re.compile(r"[A-Za-z0-9_.$/-]+")

DEPLOYMENT_MARKERS = ("deploy", "publish", "release", "pages")
CACHE_ACTION = "actions/cache"


class FeatureCategory(Enum):
    MATRIX_BUILD = "MatrixBuild"
    ENVIRONMENT_VARIABLES = "EnvironmentVariables"
    DEPLOYMENT_STEPS = "DeploymentSteps"
    CACHING = "Caching"
    SCRIPTS = "Scripts"
    TRIGGERS = "Triggers"
    OS_TARGETS = "OsTargets"
    SERVICES = "Services"
    ADDONS = "Addons"
    NOTIFICATIONS = "Notifications"
    STAGES = "Stages"
    OTHER = "Other"


_TRAVIS_CATEGORIES = {
    "matrix": FeatureCategory.MATRIX_BUILD,
    "jobs": FeatureCategory.MATRIX_BUILD,
    "env": FeatureCategory.ENVIRONMENT_VARIABLES,
    "deploy": FeatureCategory.DEPLOYMENT_STEPS,
    "cache": FeatureCategory.CACHING,
    "before_install": FeatureCategory.SCRIPTS,
    "install": FeatureCategory.SCRIPTS,
    "before_script": FeatureCategory.SCRIPTS,
    "script": FeatureCategory.SCRIPTS,
    "after_script": FeatureCategory.SCRIPTS,
    "after_success": FeatureCategory.SCRIPTS,
    "after_failure": FeatureCategory.SCRIPTS,
    "branches": FeatureCategory.TRIGGERS,
    "os": FeatureCategory.OS_TARGETS,
    "dist": FeatureCategory.OS_TARGETS,
    "services": FeatureCategory.SERVICES,
    "addons": FeatureCategory.ADDONS,
    "notifications": FeatureCategory.NOTIFICATIONS,
    "stages": FeatureCategory.STAGES,
}

_GHA_CATEGORIES = {
    "on": FeatureCategory.TRIGGERS,
    "env": FeatureCategory.ENVIRONMENT_VARIABLES,
    "runs-on": FeatureCategory.OS_TARGETS,
    "services": FeatureCategory.SERVICES,
    "strategy": FeatureCategory.MATRIX_BUILD,
    "run": FeatureCategory.SCRIPTS,
}


@dataclass(frozen=True)
class TokenSequence:
    tokens: Tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self) -> Iterator[str]:
        return iter(self.tokens)


@dataclass(frozen=True)
class NormalizedConfig:
    dialect: CiDialect
    document: YamlMapping
    feature_set: FrozenSet[FeatureCategory] = frozenset()

    def serialize(self) -> str:
        return serialize_document(self.document)

    def as_raw(self, source_path: str = "<normalized>") -> RawConfig:
        data = self.serialize().encode("utf-8")
        return RawConfig(self.dialect, self.document, source_path=source_path, byte_length=len(data))


# -----------------------------
# normalize
# -----------------------------
def _canonical_scalar(node: YamlScalar) -> YamlScalar:
    if node.kind is ScalarKind.NULL:
        return YamlScalar("null", ScalarKind.NULL)
    if node.kind is ScalarKind.BOOL:
        return YamlScalar(node.text.lower(), ScalarKind.BOOL)
    return YamlScalar(node.text, node.kind)


def _is_inert(node: YamlNode) -> bool:
    if isinstance(node, YamlScalar):
        return node.kind is ScalarKind.NULL
    return len(node) == 0


def _canonical(node: YamlNode, keep_entries: bool = False) -> YamlNode:
    if isinstance(node, YamlScalar):
        return _canonical_scalar(node)
    if isinstance(node, YamlSequence):
        return YamlSequence(tuple(_canonical(item) for item in node.items))

    entries: List[Tuple[str, YamlNode]] = []
    for key, value in node.entries:
        value = _canonical(value)
        if keep_entries:
            if _is_inert(value):
                value = YamlMapping()
            entries.append((key, value))
        elif not _is_inert(value):
            entries.append((key, value))
    return YamlMapping(tuple(entries))


def _root_sort_key(dialect: CiDialect):
    order = TRAVIS_KEY_ORDER if dialect is CiDialect.TRAVIS else GHA_KEY_ORDER
    rank = {key: position for position, key in enumerate(order)}
    return lambda key: (rank.get(key, len(order)), key if key not in rank else "")


def normalize_document(document: YamlMapping, dialect: CiDialect) -> YamlMapping:
    entries: List[Tuple[str, YamlNode]] = []
    for key, value in document.entries:
        if dialect is CiDialect.GHA and key == "on":
            if isinstance(value, YamlMapping):
                entries.append((key, _canonical(value, keep_entries=True)))
            else:
                entries.append((key, _canonical(value)))
            continue
        value = _canonical(value)
        if not _is_inert(value):
            entries.append((key, value))

    sort_key = _root_sort_key(dialect)
    entries.sort(key=lambda entry: sort_key(entry[0]))
    return YamlMapping(tuple(entries))


def normalize(config: Union[RawConfig, NormalizedConfig]) -> NormalizedConfig:
    document = normalize_document(config.document, config.dialect)
    features = _categorize(document, config.dialect)
    logger.debug(f"Normalized {config.dialect.label} config: {len(document)} root keys, features={sorted(f.value for f in features)}")
    return NormalizedConfig(config.dialect, document, frozenset(features))


# -----------------------------
# tokenize
# -----------------------------
def tokenize(text: str) -> TokenSequence:
    return TokenSequence(tuple(TOKEN_PATTERN.findall(text)))


# -----------------------------
# categorize_features
# -----------------------------
def classify_key(dialect: CiDialect, key: str) -> FeatureCategory:
    table = _TRAVIS_CATEGORIES if dialect is CiDialect.TRAVIS else _GHA_CATEGORIES
    return table.get(key, FeatureCategory.OTHER)


def _step_categories(step: YamlNode) -> Set[FeatureCategory]:
    found: Set[FeatureCategory] = set()
    if not isinstance(step, YamlMapping):
        return found
    if "run" in step:
        found.add(FeatureCategory.SCRIPTS)
    if "env" in step:
        found.add(FeatureCategory.ENVIRONMENT_VARIABLES)
    uses = (as_text(step.get("uses")) or "").lower()
    if uses.startswith(CACHE_ACTION):
        found.add(FeatureCategory.CACHING)
    elif uses and any(marker in uses for marker in DEPLOYMENT_MARKERS):
        found.add(FeatureCategory.DEPLOYMENT_STEPS)
    return found


def _gha_categories(document: YamlMapping) -> Set[FeatureCategory]:
    found: Set[FeatureCategory] = set()
    for key in ("on", "env"):
        if key in document:
            found.add(classify_key(CiDialect.GHA, key))

    jobs = document.get("jobs")
    if not isinstance(jobs, YamlMapping):
        return found
    for _, job in jobs.entries:
        if not isinstance(job, YamlMapping):
            continue
        for key in ("runs-on", "env", "services"):
            if key in job:
                found.add(classify_key(CiDialect.GHA, key))
        strategy = job.get("strategy")
        if isinstance(strategy, YamlMapping) and "matrix" in strategy:
            found.add(FeatureCategory.MATRIX_BUILD)
        steps = job.get("steps")
        if isinstance(steps, YamlSequence):
            for step in steps.items:
                found |= _step_categories(step)
    return found


def _categorize(document: YamlMapping, dialect: CiDialect) -> Set[FeatureCategory]:
    if dialect is CiDialect.TRAVIS:
        found = {classify_key(dialect, key) for key in document.keys()}
    else:
        found = _gha_categories(document)
    found.discard(FeatureCategory.OTHER)
    return found


def categorize_features(config: Union[RawConfig, NormalizedConfig]) -> FrozenSet[FeatureCategory]:
    """Categories of the canonical document, so keys holding only empty values never count."""
    return frozenset(_categorize(normalize_document(config.document, config.dialect), config.dialect))
