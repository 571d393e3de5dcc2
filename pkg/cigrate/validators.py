"""
validators.py
=============
Structural linters for GitHub Actions workflows and .travis.yml files.

Only Error diagnostics fail a report; Warnings (unknown keys) are advisory.
Known-key lists live in Rules/<dialect>_keys.txt so they can follow schema
changes without touching code.

Rules
-----
GHA001  root has `on`                                   Error
GHA002  root has a non-empty `jobs` mapping             Error
GHA003  every job has `runs-on`                         Error
GHA004  every job has a non-empty `steps` sequence      Error
GHA005  every step has exactly one of run/uses          Error
GHA006  job ids match [A-Za-z_][A-Za-z0-9_-]*           Error
GHA007  `needs` targets exist                           Error
GHA008  unknown top-level key                           Warning
GHA009  unknown job-level key                           Warning
GHA010  strategy.matrix values are lists (include/exclude lists of mappings)  Error

TRV001  root has one of language/script/install/jobs/matrix   Error
TRV002  unknown top-level key                                 Warning
TRV003  phase values are scalars or lists of scalars          Error
TRV004  env.global entries are NAME=value strings or single-key maps  Error
TRV005  os values are linux/osx/windows                       Error
TRV006  cache.directories is a list of strings                Error
TRV007  build-matrix include/exclude entries are mappings     Error
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Dict, FrozenSet, List, Tuple

from .config_model import (
    ROOT_PATH,
    CiDialect,
    RawConfig,
    ScalarKind,
    YamlMapping,
    YamlNode,
    YamlScalar,
    YamlSequence,
    as_text,
    as_text_list,
    index_path,
    join_path,
)
from .errors import CigrateError

logger = logging.getLogger("cigrate.validators")

RULES_DIR = Path(__file__).resolve().parent / "Rules"
KEY_TABLE_FILES = {CiDialect.TRAVIS: "travis_keys.txt", CiDialect.GHA: "gha_keys.txt"}

JOB_ID_PATTERN = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*$")
ENV_ASSIGNMENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*=")
TRAVIS_OS_VALUES = ("linux", "osx", "windows")
TRAVIS_REQUIRED_ANY = ("language", "script", "install", "jobs", "matrix")
TRAVIS_PHASES = (
    "before_install",
    "install",
    "before_script",
    "script",
    "after_success",
    "after_failure",
    "after_script",
    "before_cache",
    "before_deploy",
    "after_deploy",
)


class Severity(Enum):
    ERROR = "Error"
    WARNING = "Warning"


@dataclass(frozen=True)
class LintDiagnostic:
    severity: Severity
    rule_id: str
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity.value} {self.rule_id} {self.path} {self.message}"


@dataclass(frozen=True)
class LintReport:
    dialect: CiDialect
    diagnostics: Tuple[LintDiagnostic, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.errors

    @property
    def errors(self) -> Tuple[LintDiagnostic, ...]:
        return tuple(d for d in self.diagnostics if d.severity is Severity.ERROR)


# -----------------------------
# Key tables
# -----------------------------
@lru_cache(maxsize=None)
def load_key_table(dialect: CiDialect) -> Dict[str, FrozenSet[str]]:
    """Sections of a Rules/*.txt table: `[section]` headers, one key per line."""
    path = RULES_DIR / KEY_TABLE_FILES[dialect]
    sections: Dict[str, set] = {}
    current = None
    for raw_line in path.read_text(encoding="utf-8").splitlines():
        line = raw_line.strip()
        if not line or line.startswith("#") or line.startswith("version:"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections.setdefault(current, set())
        elif current is not None:
            sections[current].add(line)
    logger.debug(f"Loaded {path.name}: {', '.join(f'{k}={len(v)}' for k, v in sections.items())}")
    return {name: frozenset(keys) for name, keys in sections.items()}


class _Collector:
    def __init__(self):
        self.diagnostics: List[LintDiagnostic] = []

    def error(self, rule_id: str, path: str, message: str) -> None:
        self.diagnostics.append(LintDiagnostic(Severity.ERROR, rule_id, path, message))

    def warning(self, rule_id: str, path: str, message: str) -> None:
        self.diagnostics.append(LintDiagnostic(Severity.WARNING, rule_id, path, message))

    def report(self, dialect: CiDialect) -> LintReport:
        ordered = sorted(self.diagnostics, key=lambda d: (d.path, d.rule_id))
        return LintReport(dialect, tuple(ordered))


def _expect(config: RawConfig, dialect: CiDialect) -> None:
    if config.dialect is not dialect:
        raise CigrateError("E_WRONG_DIALECT", f"expected a {dialect.label} config, got {config.dialect.label}")


def _is_expression(node: YamlNode) -> bool:
    text = as_text(node)
    return text is not None and text.strip().startswith("${{")


# -----------------------------
# GitHub Actions
# -----------------------------
def _lint_gha_matrix(matrix: YamlNode, path: str, out: _Collector) -> None:
    if _is_expression(matrix):
        return
    if not isinstance(matrix, YamlMapping):
        out.error("GHA010", path, "strategy.matrix must be a mapping")
        return
    for key, value in matrix.entries:
        key_path = join_path(path, key)
        if _is_expression(value):
            continue
        if key in ("include", "exclude"):
            if not isinstance(value, YamlSequence) or not all(isinstance(e, YamlMapping) for e in value.items):
                out.error("GHA010", key_path, f"matrix {key} must be a list of mappings")
        elif not isinstance(value, YamlSequence):
            out.error("GHA010", key_path, f"matrix dimension '{key}' must be a list")


def _lint_gha_job(job_id: str, job: YamlNode, job_ids: List[str], known: FrozenSet[str], out: _Collector) -> None:
    path = join_path("jobs", job_id)
    if not JOB_ID_PATTERN.match(job_id):
        out.error("GHA006", path, f"job id '{job_id}' is not a valid identifier")
    if not isinstance(job, YamlMapping):
        out.error("GHA003", path, "job must be a mapping with runs-on")
        return

    for key in job.keys():
        if key not in known:
            out.warning("GHA009", join_path(path, key), f"unknown job key '{key}'")

    for need in as_text_list(job.get("needs")):
        if need not in job_ids:
            out.error("GHA007", join_path(path, "needs"), f"needs unknown job '{need}'")

    strategy = job.get("strategy")
    if isinstance(strategy, YamlMapping) and "matrix" in strategy:
        _lint_gha_matrix(strategy.get("matrix"), join_path(join_path(path, "strategy"), "matrix"), out)

    # reusable workflow calls carry neither runs-on nor steps
    if "uses" in job:
        return
    if "runs-on" not in job:
        out.error("GHA003", path, "job has no runs-on")

    steps = job.get("steps")
    if not isinstance(steps, YamlSequence) or len(steps) == 0:
        out.error("GHA004", join_path(path, "steps") if steps is not None else path, "job needs a non-empty steps list")
        return
    for index, step in enumerate(steps.items):
        step_path = index_path(join_path(path, "steps"), index)
        if not isinstance(step, YamlMapping):
            out.error("GHA005", step_path, "step must be a mapping")
        elif ("run" in step) == ("uses" in step):
            out.error("GHA005", step_path, "step needs exactly one of run/uses")


def lint_gha(config: RawConfig) -> LintReport:
    _expect(config, CiDialect.GHA)
    document = config.document
    table = load_key_table(CiDialect.GHA)
    out = _Collector()

    if "on" not in document:
        out.error("GHA001", ROOT_PATH, "workflow has no 'on' trigger")
    for key in document.keys():
        if key not in table["top"]:
            out.warning("GHA008", key, f"unknown top-level key '{key}'")

    jobs = document.get("jobs")
    if not isinstance(jobs, YamlMapping) or len(jobs) == 0:
        out.error("GHA002", "jobs" if jobs is not None else ROOT_PATH, "workflow needs a non-empty jobs mapping")
    else:
        job_ids = jobs.keys()
        for job_id, job in jobs.entries:
            _lint_gha_job(job_id, job, job_ids, table["job"], out)

    return out.report(CiDialect.GHA)


# -----------------------------
# Travis CI
# -----------------------------
def _lint_phases(container: YamlMapping, base: str, out: _Collector) -> None:
    for phase in TRAVIS_PHASES:
        if phase not in container:
            continue
        value = container.get(phase)
        path = join_path(base, phase) if base != ROOT_PATH else phase
        if isinstance(value, YamlScalar):
            if value.kind is ScalarKind.NULL:
                out.error("TRV003", path, "phase value is empty")
        elif isinstance(value, YamlSequence):
            for index, item in enumerate(value.items):
                if not isinstance(item, YamlScalar) or item.kind is ScalarKind.NULL:
                    out.error("TRV003", index_path(path, index), "phase entries must be strings")
        else:
            out.error("TRV003", path, "phase must be a string or a list of strings")


def _lint_os(container: YamlMapping, base: str, out: _Collector) -> None:
    value = container.get("os")
    if value is None:
        return
    path = join_path(base, "os") if base != ROOT_PATH else "os"
    items = value.items if isinstance(value, YamlSequence) else (value,)
    for item in items:
        text = as_text(item)
        if text not in TRAVIS_OS_VALUES:
            out.error("TRV005", path, f"os '{text}' is not one of {', '.join(TRAVIS_OS_VALUES)}")


def _lint_env_global(env: YamlNode, out: _Collector) -> None:
    if not isinstance(env, YamlMapping) or "global" not in env:
        return
    node = env.get("global")
    items = node.items if isinstance(node, YamlSequence) else (node,)
    for index, item in enumerate(items):
        path = index_path("env.global", index) if isinstance(node, YamlSequence) else "env.global"
        if isinstance(item, YamlMapping):
            if len(item) != 1:
                out.error("TRV004", path, "env map entries must have exactly one key")
            continue
        text = as_text(item)
        if text is None or not ENV_ASSIGNMENT.match(text):
            out.error("TRV004", path, "env entries must look like NAME=value")


def _lint_cache(cache: YamlNode, out: _Collector) -> None:
    if not isinstance(cache, YamlMapping) or "directories" not in cache:
        return
    directories = cache.get("directories")
    if not isinstance(directories, YamlSequence) or not all(
        isinstance(item, YamlScalar) and item.kind is ScalarKind.STRING for item in directories.items
    ):
        out.error("TRV006", "cache.directories", "cache.directories must be a list of strings")


def _lint_build_matrix(document: YamlMapping, out: _Collector) -> None:
    for container in ("jobs", "matrix"):
        node = document.get(container)
        if isinstance(node, YamlSequence):
            node = YamlMapping((("include", node),))
        if not isinstance(node, YamlMapping):
            continue
        for section in ("include", "exclude"):
            entries = node.get(section)
            if entries is None:
                continue
            section_path = join_path(container, section)
            if not isinstance(entries, YamlSequence):
                out.error("TRV007", section_path, f"{section} must be a list of mappings")
                continue
            for index, entry in enumerate(entries.items):
                entry_path = index_path(section_path, index)
                if not isinstance(entry, YamlMapping):
                    out.error("TRV007", entry_path, f"{section} entries must be mappings")
                elif section == "include":
                    _lint_phases(entry, entry_path, out)
                    _lint_os(entry, entry_path, out)


def lint_travis(config: RawConfig) -> LintReport:
    _expect(config, CiDialect.TRAVIS)
    document = config.document
    table = load_key_table(CiDialect.TRAVIS)
    out = _Collector()

    if not any(key in document for key in TRAVIS_REQUIRED_ANY):
        out.error("TRV001", ROOT_PATH, f"config needs one of {', '.join(TRAVIS_REQUIRED_ANY)}")
    for key in document.keys():
        if key not in table["top"]:
            out.warning("TRV002", key, f"unknown top-level key '{key}'")

    _lint_phases(document, ROOT_PATH, out)
    _lint_env_global(document.get("env"), out)
    _lint_os(document, ROOT_PATH, out)
    _lint_cache(document.get("cache"), out)
    _lint_build_matrix(document, out)

    return out.report(CiDialect.TRAVIS)


def lint(config: RawConfig) -> LintReport:
    if config.dialect is CiDialect.GHA:
        return lint_gha(config)
    return lint_travis(config)
