"""
translator.py
=============
Rule-based Travis CI <-> GitHub Actions migration through a dialect-neutral
pipeline model (PipelineIR).

    Travis / GHA document --lower--> PipelineIR --raise--> GHA / Travis document

This is a hand-written rule table, not a mined one. It is the deterministic
baseline engine next to the LLM backend.

Travis lowering rules
---------------------
- language + version key (jdk, node_js, python, go, rust) -> SetupLanguage;
  a version list becomes a matrix dimension named after the key
- os / dist / osx_image -> runner OS (dist and osx_image are approximated)
- env.global -> workflow env; an env list -> matrix dimension `env`
- before_install, install, before_script, script -> unconditioned Run steps
- after_success / after_failure / after_script -> Run steps with a condition
- cache -> one Cache step with a static key per job
- addons.apt.packages -> PackageInstall
- jobs/matrix include/exclude/allow_failures -> jobs or matrix entries,
  stages -> `needs` chains
- services, deploy, notifications and anything unknown -> warnings

Every source key that does not survive gets exactly one warning at its path.
"""

from __future__ import annotations

import itertools
import logging
import re
import shlex
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple, Union

from .config_model import (
    CiDialect,
    RawConfig,
    ScalarKind,
    YamlMapping,
    YamlNode,
    YamlScalar,
    YamlSequence,
    as_text,
    as_text_list,
    ensure_dialect,
    from_python,
    index_path,
    is_true,
    join_path,
)
from .errors import CigrateError
from .normalizer import NormalizedConfig, normalize, normalize_document, categorize_features
from .validators import lint

logger = logging.getLogger("cigrate.translator")

CHECKOUT_ACTION = "actions/checkout@v4"
CACHE_ACTION = "actions/cache@v4"
APT_INSTALL_PREFIX = "sudo apt-get update && sudo apt-get install -y "
# Only steps carrying this name are read back as PackageInstall; any other run stays a Run.
APT_STEP_NAME = "Install apt packages"
DEFAULT_WORKFLOW_NAME = "CI"
DEFAULT_JOB_ID = "build"
DEFAULT_STAGE = "test"

TRAVIS_PHASES = (
    "before_install",
    "install",
    "before_script",
    "script",
    "after_success",
    "after_failure",
    "after_script",
)
NO_SETUP_LANGUAGES = {"c", "cpp", "generic", "minimal", "shell", "bash", "sh"}

CACHE_SHORTCUTS = {
    "maven": "~/.m2",
    "gradle": "~/.gradle/caches",
    "npm": "~/.npm",
    "pip": "~/.cache/pip",
    "yarn": "~/.cache/yarn",
    "cargo": "~/.cargo",
    "bundler": "vendor/bundle",
    "ccache": "~/.ccache",
}

_MATRIX_REF = re.compile(r"^\$\{\{\s*matrix\.([A-Za-z0-9_-]+)\s*\}\}$")
_MATRIX_ENV_REF = re.compile(r"^\$\{\{\s*matrix\.env\.([A-Za-z0-9_]+)\s*\}\}$")
_ENV_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_JAVA_VERSION = re.compile(r"^(?:openjdk|oraclejdk)(\d+)$")
_APT_INSTALL = re.compile(
    r"^sudo apt-get update && sudo apt-get install -y ((?:[A-Za-z0-9][A-Za-z0-9.+:=~_-]*)(?: [A-Za-z0-9][A-Za-z0-9.+:=~_-]*)*)$"
)


# -----------------------------
# IR types
# -----------------------------
class RunnerOs(Enum):
    LINUX = "Linux"
    MACOS = "MacOS"
    WINDOWS = "Windows"


_GHA_RUNNER_LABEL = {RunnerOs.LINUX: "ubuntu-latest", RunnerOs.MACOS: "macos-latest", RunnerOs.WINDOWS: "windows-latest"}
_TRAVIS_OS = {"linux": RunnerOs.LINUX, "osx": RunnerOs.MACOS, "windows": RunnerOs.WINDOWS}
_TRAVIS_OS_NAME = {os_: name for name, os_ in _TRAVIS_OS.items()}


class StepCondition(Enum):
    ALWAYS = "always"
    ON_SUCCESS = "success"
    ON_FAILURE = "failure"


_PHASE_CONDITION = {
    "after_success": StepCondition.ON_SUCCESS,
    "after_failure": StepCondition.ON_FAILURE,
    "after_script": StepCondition.ALWAYS,
}
_TRAVIS_PHASE_FOR = {condition: phase for phase, condition in _PHASE_CONDITION.items()}


class WarningCode(Enum):
    NO_EQUIVALENT = "W_NO_EQUIVALENT"
    DROPPED_KEY = "W_DROPPED_KEY"
    APPROX_RUNNER = "W_APPROX_RUNNER"
    APPROX_VALUE = "W_APPROX_VALUE"
    UNKNOWN_ACTION = "W_UNKNOWN_ACTION"
    IMPORT_UNSUPPORTED = "W_IMPORT_UNSUPPORTED"
    PREINSTALLED = "W_PREINSTALLED"


@dataclass(frozen=True)
class MigrationWarning:
    code: WarningCode
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.code.value} {self.path}: {self.message}"


@dataclass(frozen=True)
class Run:
    command: str

    def __post_init__(self):
        if not self.command.strip():
            raise CigrateError("E_INVALID_IR", "run commands must be non-empty")


@dataclass(frozen=True)
class SetupLanguage:
    language: str
    version: Optional[str] = None
    # matrix dimension supplying the version when it is a build axis
    version_dimension: Optional[str] = None


@dataclass(frozen=True)
class Cache:
    paths: Tuple[str, ...]
    key: str


@dataclass(frozen=True)
class Checkout:
    pass


@dataclass(frozen=True)
class UnmappedAction:
    ref: str
    inputs: YamlMapping = YamlMapping()


@dataclass(frozen=True)
class PackageInstall:
    packages: Tuple[str, ...]


StepKind = Union[Run, SetupLanguage, Cache, Checkout, UnmappedAction, PackageInstall]


@dataclass
class StepIR:
    kind: StepKind
    # None means the step runs in the normal flow
    condition: Optional[StepCondition] = None
    name: Optional[str] = None
    source_path: str = ""


@dataclass
class MatrixIR:
    dimensions: Dict[str, List[YamlNode]] = field(default_factory=dict)
    include: List[YamlMapping] = field(default_factory=list)
    exclude: List[YamlMapping] = field(default_factory=list)
    allow_failures: List[YamlMapping] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (self.dimensions or self.include or self.exclude or self.allow_failures)


@dataclass
class JobIR:
    id: str
    runner_os: RunnerOs = RunnerOs.LINUX
    runner_version: Optional[str] = None
    matrix: MatrixIR = field(default_factory=MatrixIR)
    env: Dict[str, str] = field(default_factory=dict)
    steps: List[StepIR] = field(default_factory=list)
    needs: List[str] = field(default_factory=list)
    allow_failure: bool = False
    name: Optional[str] = None
    stage: Optional[str] = None


@dataclass
class TriggerSpec:
    branches: List[str] = field(default_factory=list)
    branches_ignore: List[str] = field(default_factory=list)
    events: List[str] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (self.branches or self.branches_ignore or self.events)


@dataclass
class PipelineIR:
    triggers: TriggerSpec = field(default_factory=TriggerSpec)
    global_env: Dict[str, str] = field(default_factory=dict)
    jobs: List[JobIR] = field(default_factory=list)
    warnings: List[MigrationWarning] = field(default_factory=list)
    name: Optional[str] = None

    def validate(self) -> None:
        if not self.jobs:
            raise CigrateError("E_EMPTY_PIPELINE", "pipeline has no jobs")
        ids = [job.id for job in self.jobs]
        if len(set(ids)) != len(ids):
            raise CigrateError("E_INVALID_IR", f"duplicate job ids: {ids}")
        for job in self.jobs:
            missing = [need for need in job.needs if need not in ids]
            if missing:
                raise CigrateError("E_INVALID_IR", f"job '{job.id}' needs unknown jobs {missing}")


@dataclass(frozen=True)
class MigrationResult:
    output: NormalizedConfig
    warnings: Tuple[MigrationWarning, ...] = ()


# -----------------------------
# Language setup table
# -----------------------------
@dataclass(frozen=True)
class LanguageSetup:
    language: str
    travis_language: str
    travis_key: str
    action: str
    version_input: str
    default_version: str


LANGUAGE_SETUPS = (
    LanguageSetup("java", "java", "jdk", "actions/setup-java@v4", "java-version", "17"),
    LanguageSetup("node", "node_js", "node_js", "actions/setup-node@v4", "node-version", "lts/*"),
    LanguageSetup("python", "python", "python", "actions/setup-python@v5", "python-version", "3.x"),
    LanguageSetup("go", "go", "go", "actions/setup-go@v5", "go-version", "stable"),
    LanguageSetup("rust", "rust", "rust", "dtolnay/rust-toolchain@master", "toolchain", "stable"),
)
_SETUP_BY_TRAVIS_LANGUAGE = {setup.travis_language: setup for setup in LANGUAGE_SETUPS}
_SETUP_BY_LANGUAGE = {setup.language: setup for setup in LANGUAGE_SETUPS}
_SETUP_BY_ACTION = {setup.action.split("@")[0]: setup for setup in LANGUAGE_SETUPS}
VERSION_KEYS = tuple(setup.travis_key for setup in LANGUAGE_SETUPS)
# Root keys whose lists expand the build matrix; an include job takes only the first value.
EXPANSION_KEYS = ("os",) + VERSION_KEYS
JAVA_DISTRIBUTION = "temurin"


def _warn(sink: List[MigrationWarning], code: WarningCode, path: str, message: str) -> None:
    sink.append(MigrationWarning(code, path, message))


def _expect_dialect(config, dialect: CiDialect) -> None:
    if config.dialect is not dialect:
        raise CigrateError(
            "E_WRONG_DIALECT", f"expected a {dialect.label} config, got {config.dialect.label}"
        )


def _dedupe(warnings: List[MigrationWarning]) -> List[MigrationWarning]:
    seen = set()
    out = []
    for warning in warnings:
        if warning.path not in seen:
            seen.add(warning.path)
            out.append(warning)
    return out


def slugify(text: str) -> str:
    slug = re.sub(r"[^A-Za-z0-9_-]+", "-", text.strip()).strip("-").lower()
    if not slug or not re.match(r"[A-Za-z_]", slug):
        slug = f"job-{slug}" if slug else "job"
    return slug


def _unique_id(base: str, taken: set) -> str:
    candidate, counter = base, 2
    while candidate in taken:
        candidate = f"{base}-{counter}"
        counter += 1
    taken.add(candidate)
    return candidate


def _string_scalar(text: str) -> YamlScalar:
    return YamlScalar(text, ScalarKind.STRING)


def _java_version(text: str) -> str:
    match = _JAVA_VERSION.match(text)
    return match.group(1) if match else text


# =====================================================================
# Travis -> IR
# =====================================================================
def _parse_assignments(text: str, path: str, sink: List[MigrationWarning]) -> Dict[str, str]:
    try:
        parts = shlex.split(text)
    except ValueError:
        parts = text.split()
    env: Dict[str, str] = {}
    for part in parts:
        name, sep, value = part.partition("=")
        if sep and _ENV_NAME.match(name):
            env[name] = value
        else:
            _warn(sink, WarningCode.DROPPED_KEY, path, f"'{part}' is not a NAME=value assignment")
    return env


def _parse_env_entries(node: YamlNode, path: str, sink: List[MigrationWarning]) -> Dict[str, str]:
    """env.global style: a string, a list of strings, or single-key maps."""
    env: Dict[str, str] = {}
    items = node.items if isinstance(node, YamlSequence) else (node,)
    for index, item in enumerate(items):
        item_path = index_path(path, index) if isinstance(node, YamlSequence) else path
        if isinstance(item, YamlMapping):
            if "secure" in item:
                _warn(sink, WarningCode.NO_EQUIVALENT, item_path, "encrypted variables must be recreated as repository secrets")
                continue
            for key, value in item.entries:
                text = as_text(value)
                if text is None or not _ENV_NAME.match(key):
                    _warn(sink, WarningCode.DROPPED_KEY, join_path(item_path, key), "unsupported env entry")
                else:
                    env[key] = text
            continue
        text = as_text(item)
        if text:
            env.update(_parse_assignments(text, item_path, sink))
    return env


def _parse_travis_env(
    node: YamlNode, path: str, sink: List[MigrationWarning]
) -> Tuple[Dict[str, str], List[Dict[str, str]]]:
    """Returns (global assignments, rows); each row is one env set of the build matrix."""
    global_env: Dict[str, str] = {}
    rows: List[Dict[str, str]] = []

    def add_rows(rows_node: YamlNode, rows_path: str) -> None:
        if isinstance(rows_node, YamlSequence):
            for index, item in enumerate(rows_node.items):
                row = _parse_env_entries(item, index_path(rows_path, index), sink)
                if row:
                    rows.append(row)
        else:
            row = _parse_env_entries(rows_node, rows_path, sink)
            if row:
                rows.append(row)

    if isinstance(node, YamlMapping):
        for key, value in node.entries:
            if key == "global":
                global_env.update(_parse_env_entries(value, join_path(path, key), sink))
            elif key in ("jobs", "matrix"):
                add_rows(value, join_path(path, key))
            else:
                _warn(sink, WarningCode.DROPPED_KEY, join_path(path, key), "unknown env section")
    else:
        add_rows(node, path)
    return global_env, rows


def _env_dimension(rows: List[Dict[str, str]]) -> List[YamlNode]:
    return [
        YamlMapping(tuple((key, _string_scalar(value)) for key, value in row.items()))
        for row in rows
    ]


def _travis_os(text: str, path: str, sink: List[MigrationWarning]) -> RunnerOs:
    found = _TRAVIS_OS.get(text.lower())
    if found is None:
        _warn(sink, WarningCode.APPROX_RUNNER, path, f"os '{text}' has no hosted runner; using Linux")
        return RunnerOs.LINUX
    return found


def _cache_paths(node: YamlNode, path: str, sink: List[MigrationWarning]) -> List[str]:
    paths: List[str] = []

    def shortcut(name: str, name_path: str) -> None:
        directory = CACHE_SHORTCUTS.get(name)
        if directory is None:
            _warn(sink, WarningCode.DROPPED_KEY, name_path, f"unknown cache shortcut '{name}'")
        elif directory not in paths:
            paths.append(directory)

    if isinstance(node, YamlScalar):
        text = as_text(node)
        if node.kind is not ScalarKind.BOOL and text:
            shortcut(text, path)
    elif isinstance(node, YamlSequence):
        for index, item in enumerate(node.items):
            text = as_text(item)
            if text:
                shortcut(text, index_path(path, index))
    else:
        for key, value in node.entries:
            key_path = join_path(path, key)
            if key == "directories":
                paths.extend(p for p in as_text_list(value) if p not in paths)
            elif key in CACHE_SHORTCUTS:
                if is_true(value):
                    shortcut(key, key_path)
            else:
                _warn(sink, WarningCode.DROPPED_KEY, key_path, f"cache option '{key}' has no equivalent")
    return paths


def _apt_packages(node: YamlNode, path: str, sink: List[MigrationWarning]) -> List[str]:
    if isinstance(node, YamlMapping):
        packages: List[str] = []
        for key, value in node.entries:
            if key == "packages":
                packages.extend(as_text_list(value))
            else:
                _warn(sink, WarningCode.DROPPED_KEY, join_path(path, key), f"apt option '{key}' is not migrated")
        return packages
    return as_text_list(node)


def _phase_commands(node: YamlNode, path: str, sink: List[MigrationWarning]) -> List[Tuple[str, str]]:
    """(command, source path) pairs; `true`/`skip` phases are no-ops."""
    if isinstance(node, YamlScalar):
        text = as_text(node)
        if node.kind is ScalarKind.BOOL or not text or text.strip() in ("skip", "true", "false"):
            return []
        return [(text, path)]
    if isinstance(node, YamlSequence):
        out = []
        for index, item in enumerate(node.items):
            text = as_text(item)
            item_path = index_path(path, index)
            if isinstance(item, YamlScalar) and text and text.strip():
                out.append((text, item_path))
            elif not isinstance(item, YamlScalar):
                _warn(sink, WarningCode.DROPPED_KEY, item_path, "phase entries must be strings")
        return out
    _warn(sink, WarningCode.DROPPED_KEY, path, "phase value must be a string or a list of strings")
    return []


def _travis_version(
    source: YamlMapping, setup: LanguageSetup, job: JobIR
) -> Tuple[Optional[str], Optional[str]]:
    values = as_text_list(source.get(setup.travis_key))
    if setup.language == "java":
        values = [_java_version(value) for value in values]
    if not values:
        return None, None
    if len(values) == 1:
        return values[0], None
    job.matrix.dimensions[setup.travis_key] = [_string_scalar(value) for value in values]
    return None, setup.travis_key


TRAVIS_JOB_KEYS = {"language", "os", "dist", "osx_image", "env", "cache", "addons", "services", "name", "stage"}
TRAVIS_JOB_KEYS.update(TRAVIS_PHASES)
TRAVIS_JOB_KEYS.update(VERSION_KEYS)

TRAVIS_PIPELINE_KEYS = {
    "branches", "jobs", "matrix", "stages", "deploy", "before_deploy", "after_deploy", "notifications", "import",
}
_INCLUDE_JOB_MARKERS = {"name", "stage", "language", "services", "addons", "cache"}
_INCLUDE_JOB_MARKERS.update(TRAVIS_PHASES)


def _lower_travis_job(
    source: YamlMapping,
    job_id: str,
    path_of: Callable[[str], str],
    sink: List[MigrationWarning],
) -> JobIR:
    job = JobIR(id=job_id)
    steps: List[StepIR] = [StepIR(Checkout())]

    language = as_text(source.get("language"))
    setup: Optional[LanguageSetup] = None
    if language is not None:
        setup = _SETUP_BY_TRAVIS_LANGUAGE.get(language.lower())
        if setup is not None:
            version, dimension = _travis_version(source, setup, job)
            key_path = path_of(setup.travis_key) if setup.travis_key in source else path_of("language")
            steps.append(StepIR(SetupLanguage(setup.language, version, dimension), source_path=key_path))
            if setup.language == "java":
                _warn(sink, WarningCode.APPROX_VALUE, key_path, f"setup-java needs a distribution; using {JAVA_DISTRIBUTION}")
        elif language.lower() not in NO_SETUP_LANGUAGES:
            _warn(sink, WarningCode.NO_EQUIVALENT, path_of("language"), f"no setup rule for language '{language}'")
    for other in LANGUAGE_SETUPS:
        if other.travis_key in source and other is not setup:
            _warn(sink, WarningCode.DROPPED_KEY, path_of(other.travis_key), f"'{other.travis_key}' does not match the job language")

    os_values = as_text_list(source.get("os"))
    if os_values:
        runners = [_travis_os(value, path_of("os"), sink) for value in os_values]
        job.runner_os = runners[0]
        if len(runners) > 1:
            job.matrix.dimensions["os"] = [_string_scalar(runner.value) for runner in runners]
    for key in ("dist", "osx_image"):
        hint = as_text(source.get(key))
        if hint:
            job.runner_version = hint
            _warn(sink, WarningCode.APPROX_RUNNER, path_of(key), f"'{key}: {hint}' mapped to the latest hosted image")

    cache_node = source.get("cache")
    if cache_node is not None:
        paths = _cache_paths(cache_node, path_of("cache"), sink)
        if paths:
            steps.append(StepIR(Cache(tuple(paths), f"cache-{job_id}"), source_path=path_of("cache")))
            _warn(sink, WarningCode.APPROX_VALUE, path_of("cache"), "cache key is static per job (no lockfile hash)")

    addons = source.get("addons")
    if isinstance(addons, YamlMapping):
        for key, value in addons.entries:
            key_path = join_path(path_of("addons"), key)
            if key == "apt":
                packages = _apt_packages(value, key_path, sink)
                if packages:
                    steps.append(StepIR(PackageInstall(tuple(packages)), source_path=key_path))
            else:
                _warn(sink, WarningCode.NO_EQUIVALENT, key_path, f"addon '{key}' has no equivalent")
    elif addons is not None:
        _warn(sink, WarningCode.DROPPED_KEY, path_of("addons"), "addons must be a mapping")

    services = source.get("services")
    if services is not None:
        items = services.items if isinstance(services, YamlSequence) else (services,)
        for index, item in enumerate(items):
            item_path = index_path(path_of("services"), index) if isinstance(services, YamlSequence) else path_of("services")
            name = as_text(item)
            if name == "docker":
                _warn(sink, WarningCode.PREINSTALLED, item_path, "docker is preinstalled on hosted runners")
            else:
                _warn(sink, WarningCode.NO_EQUIVALENT, item_path, f"service '{name}' needs a service container")

    for phase in TRAVIS_PHASES:
        node = source.get(phase)
        if node is None:
            continue
        for command, command_path in _phase_commands(node, path_of(phase), sink):
            steps.append(StepIR(Run(command), condition=_PHASE_CONDITION.get(phase), source_path=command_path))

    job.steps = steps
    return job


def _travis_matrix_entry(entry: YamlMapping, path: str, sink: List[MigrationWarning]) -> Optional[YamlMapping]:
    """A Travis include/exclude/allow_failures entry in IR (neutral) form."""
    entries: List[Tuple[str, YamlNode]] = []
    for key, value in entry.entries:
        key_path = join_path(path, key)
        text = as_text(value)
        if key in VERSION_KEYS and text is not None:
            entries.append((key, _string_scalar(_java_version(text) if key == "jdk" else text)))
        elif key == "os" and text is not None:
            entries.append((key, _string_scalar(_travis_os(text, key_path, sink).value)))
        elif key == "env" and value is not None:
            env = _parse_env_entries(value, key_path, sink)
            if env:
                entries.append((key, from_python(env)))
        else:
            _warn(sink, WarningCode.DROPPED_KEY, key_path, f"matrix key '{key}' is not migrated")
    return YamlMapping(tuple(entries)) if entries else None


def _travis_triggers(node: Optional[YamlNode], sink: List[MigrationWarning]) -> TriggerSpec:
    triggers = TriggerSpec()
    if node is None:
        return triggers
    if isinstance(node, YamlMapping):
        for key, value in node.entries:
            if key == "only":
                triggers.branches = as_text_list(value)
            elif key == "except":
                triggers.branches_ignore = as_text_list(value)
            else:
                _warn(sink, WarningCode.DROPPED_KEY, join_path("branches", key), "unknown branches filter")
    else:
        triggers.branches = as_text_list(node)
    return triggers


def _stage_order(document: YamlMapping) -> List[str]:
    stages = document.get("stages")
    names: List[str] = []
    if isinstance(stages, YamlSequence):
        for item in stages.items:
            name = as_text(item.get("name")) if isinstance(item, YamlMapping) else as_text(item)
            if name and name.lower() not in names:
                names.append(name.lower())
    return names


def _chain_stages(jobs: List[JobIR], declared: List[str]) -> None:
    order = list(declared)
    for job in jobs:
        stage = (job.stage or DEFAULT_STAGE).lower()
        if stage not in order:
            order.append(stage)
    previous: List[str] = []
    for stage in order:
        members = [job for job in jobs if (job.stage or DEFAULT_STAGE).lower() == stage]
        if not members:
            continue
        for job in members:
            job.needs = list(previous)
        previous = [job.id for job in members]


def lower_travis_to_ir(config: NormalizedConfig) -> PipelineIR:
    _expect_dialect(config, CiDialect.TRAVIS)
    document = config.document
    sink: List[MigrationWarning] = []
    ir = PipelineIR()

    ir.triggers = _travis_triggers(document.get("branches"), sink)

    env_rows: List[Dict[str, str]] = []
    if "env" in document:
        global_env, env_rows = _parse_travis_env(document.get("env"), "env", sink)
        ir.global_env.update(global_env)
        if len(env_rows) == 1:
            ir.global_env.update(env_rows.pop())

    for key, value in document.entries:
        if key in ("deploy", "before_deploy", "after_deploy", "notifications"):
            _warn(sink, WarningCode.NO_EQUIVALENT, key, f"'{key}' is not translated")
        elif key == "import":
            _warn(sink, WarningCode.IMPORT_UNSUPPORTED, key, "imported config files are not resolved")
        elif key not in TRAVIS_JOB_KEYS and key not in TRAVIS_PIPELINE_KEYS:
            _warn(sink, WarningCode.DROPPED_KEY, key, f"'{key}' has no equivalent")
    for key in ("name", "stage"):
        if key in document:
            _warn(sink, WarningCode.DROPPED_KEY, key, f"root '{key}' is ignored")

    container = "jobs" if "jobs" in document else "matrix"
    if "jobs" in document and "matrix" in document:
        _warn(sink, WarningCode.DROPPED_KEY, "matrix", "'jobs' takes precedence over 'matrix'")
    matrix_node = document.get(container)
    if isinstance(matrix_node, YamlSequence):
        matrix_node = YamlMapping((("include", matrix_node),))

    include_jobs: List[Tuple[int, YamlMapping]] = []
    matrix = MatrixIR()
    allow_failure_names: List[str] = []
    if isinstance(matrix_node, YamlMapping):
        for key, value in matrix_node.entries:
            key_path = join_path(container, key)
            entries = value.items if isinstance(value, YamlSequence) else ()
            if key == "include":
                for index, entry in enumerate(entries):
                    entry_path = index_path(key_path, index)
                    if not isinstance(entry, YamlMapping):
                        _warn(sink, WarningCode.DROPPED_KEY, entry_path, "include entries must be mappings")
                    elif any(marker in entry for marker in _INCLUDE_JOB_MARKERS):
                        include_jobs.append((index, entry))
                    else:
                        converted = _travis_matrix_entry(entry, entry_path, sink)
                        if converted is not None:
                            matrix.include.append(converted)
            elif key in ("exclude", "allow_failures"):
                for index, entry in enumerate(entries):
                    entry_path = index_path(key_path, index)
                    if not isinstance(entry, YamlMapping):
                        _warn(sink, WarningCode.DROPPED_KEY, entry_path, f"{key} entries must be mappings")
                        continue
                    name = as_text(entry.get("name"))
                    if key == "allow_failures" and name is not None:
                        allow_failure_names.append(name)
                        continue
                    converted = _travis_matrix_entry(entry, entry_path, sink)
                    if converted is not None:
                        (matrix.exclude if key == "exclude" else matrix.allow_failures).append(converted)
            else:
                _warn(sink, WarningCode.DROPPED_KEY, key_path, f"'{key}' is not migrated")
    elif matrix_node is not None:
        _warn(sink, WarningCode.DROPPED_KEY, container, "build matrix must be a mapping or a list")

    has_phases = any(phase in document for phase in TRAVIS_PHASES)
    if not has_phases and not include_jobs:
        raise CigrateError("E_EMPTY_PIPELINE", "no script, install or jobs content to migrate")

    taken: set = set()
    if has_phases or not include_jobs or not matrix.is_empty():
        base = _lower_travis_job(document, _unique_id(DEFAULT_JOB_ID, taken), lambda key: key, sink)
        base.stage = DEFAULT_STAGE
        if len(env_rows) > 1:
            base.matrix.dimensions["env"] = _env_dimension(env_rows)
        base.matrix.include = matrix.include
        base.matrix.exclude = matrix.exclude
        base.matrix.allow_failures = matrix.allow_failures
        ir.jobs.append(base)

    inherited = YamlMapping(
        tuple(
            (k, v.items[0] if k in EXPANSION_KEYS and isinstance(v, YamlSequence) and v.items else v)
            for k, v in document.entries
            if k in TRAVIS_JOB_KEYS and k not in ("env", "name", "stage")
        )
    )
    stage = DEFAULT_STAGE
    for index, entry in include_jobs:
        entry_path = index_path(join_path(container, "include"), index)
        merged_entries = [(k, v) for k, v in inherited.entries if k not in entry]
        merged_entries.extend((k, v) for k, v in entry.entries if k != "env")
        merged = YamlMapping(tuple(merged_entries))

        stage = as_text(entry.get("stage")) or stage
        name = as_text(entry.get("name"))
        job_id = _unique_id(slugify(name or stage), taken)

        def path_of(key: str, _entry=entry, _path=entry_path) -> str:
            return join_path(_path, key) if key in _entry else key

        for key in entry.keys():
            if key not in TRAVIS_JOB_KEYS:
                _warn(sink, WarningCode.DROPPED_KEY, join_path(entry_path, key), f"'{key}' has no equivalent")

        job = _lower_travis_job(merged, job_id, path_of, sink)
        job.stage = stage
        job.name = name
        if "env" in entry:
            job_global, rows = _parse_travis_env(entry.get("env"), join_path(entry_path, "env"), sink)
            job.env.update(job_global)
            if len(rows) == 1:
                job.env.update(rows[0])
            elif rows:
                job.matrix.dimensions["env"] = _env_dimension(rows)
        ir.jobs.append(job)

    for name in allow_failure_names:
        matched = [job for job in ir.jobs if job.name == name]
        if not matched:
            _warn(sink, WarningCode.DROPPED_KEY, join_path(container, "allow_failures"), f"no job named '{name}'")
        for job in matched:
            job.allow_failure = True

    _chain_stages(ir.jobs, _stage_order(document))
    ir.warnings = _dedupe(sink)
    ir.validate()
    logger.debug(f"Lowered Travis config: {len(ir.jobs)} job(s), {len(ir.warnings)} warning(s).")
    return ir


# =====================================================================
# GHA -> IR
# =====================================================================
def _runner_from_label(label: str) -> Tuple[Optional[RunnerOs], Optional[str]]:
    lowered = label.lower()
    for prefix, runner in (("ubuntu", RunnerOs.LINUX), ("macos", RunnerOs.MACOS), ("windows", RunnerOs.WINDOWS)):
        if lowered.startswith(prefix):
            version = lowered[len(prefix):].lstrip("-")
            return runner, (None if version in ("", "latest") else version)
    return None, None


def _neutral_os(node: YamlNode) -> YamlNode:
    text = as_text(node)
    if text is None:
        return node
    runner, _ = _runner_from_label(text)
    return _string_scalar(runner.value) if runner is not None else node


def _neutral_entry(entry: YamlMapping) -> YamlMapping:
    return YamlMapping(tuple((k, _neutral_os(v) if k == "os" else v) for k, v in entry.entries))


def _gha_triggers(node: Optional[YamlNode], sink: List[MigrationWarning]) -> TriggerSpec:
    triggers = TriggerSpec()
    if node is None:
        return triggers
    if not isinstance(node, YamlMapping):
        triggers.events = as_text_list(node)
    else:
        triggers.events = node.keys()
        for event, value in node.entries:
            event_path = join_path("on", event)
            if not isinstance(value, YamlMapping):
                continue
            for key, filter_node in value.entries:
                key_path = join_path(event_path, key)
                if event in ("push", "pull_request") and key == "branches":
                    triggers.branches.extend(b for b in as_text_list(filter_node) if b not in triggers.branches)
                elif event in ("push", "pull_request") and key == "branches-ignore":
                    triggers.branches_ignore.extend(b for b in as_text_list(filter_node) if b not in triggers.branches_ignore)
                else:
                    _warn(sink, WarningCode.DROPPED_KEY, key_path, f"'{event}.{key}' filter is not migrated")
    for index, event in enumerate(triggers.events):
        if event not in ("push", "pull_request"):
            path = join_path("on", event) if isinstance(node, YamlMapping) else (index_path("on", index) if isinstance(node, YamlSequence) else "on")
            _warn(sink, WarningCode.NO_EQUIVALENT, path, f"event '{event}' has no equivalent")
    return triggers


def _gha_condition(text: str) -> Optional[StepCondition]:
    expression = text.strip()
    if expression.startswith("${{") and expression.endswith("}}"):
        expression = expression[3:-2].strip()
    return {
        "success()": StepCondition.ON_SUCCESS,
        "failure()": StepCondition.ON_FAILURE,
        "always()": StepCondition.ALWAYS,
    }.get(expression)


def _lower_gha_step(step: YamlNode, path: str, sink: List[MigrationWarning]) -> Optional[StepIR]:
    if not isinstance(step, YamlMapping):
        _warn(sink, WarningCode.DROPPED_KEY, path, "steps must be mappings")
        return None
    run = as_text(step.get("run"))
    uses = as_text(step.get("uses"))
    if (run is None) == (uses is None):
        _warn(sink, WarningCode.DROPPED_KEY, path, "step needs exactly one of run/uses")
        return None

    ir_step = StepIR(kind=Checkout(), name=as_text(step.get("name")), source_path=path)
    condition_text = as_text(step.get("if"))
    if condition_text is not None:
        ir_step.condition = _gha_condition(condition_text)
        if ir_step.condition is None:
            _warn(sink, WarningCode.DROPPED_KEY, join_path(path, "if"), f"condition '{condition_text}' is not migrated")

    consumed = {"name", "if", "run", "uses", "with"}
    inputs = step.get("with") if isinstance(step.get("with"), YamlMapping) else YamlMapping()

    if run is not None:
        if not run.strip():
            _warn(sink, WarningCode.DROPPED_KEY, join_path(path, "run"), "empty run command")
            return None
        match = _APT_INSTALL.match(run.strip()) if ir_step.name == APT_STEP_NAME else None
        if match:
            ir_step.kind = PackageInstall(tuple(match.group(1).split()))
            ir_step.name = None
        else:
            ir_step.kind = Run(run)
    else:
        action = uses.split("@")[0].lower()
        setup = _SETUP_BY_ACTION.get(action)
        if action == "actions/checkout":
            ir_step.kind = Checkout()
            inputs_used: Tuple[str, ...] = ()
        elif setup is not None:
            version_text = as_text(inputs.get(setup.version_input))
            dimension = None
            if version_text is not None:
                ref = _MATRIX_REF.match(version_text.strip())
                if ref:
                    dimension, version_text = ref.group(1), None
            ir_step.kind = SetupLanguage(setup.language, version_text, dimension)
            inputs_used = (setup.version_input,)
        elif action == "actions/cache":
            paths = [line.strip() for text in as_text_list(inputs.get("path")) for line in text.splitlines() if line.strip()]
            ir_step.kind = Cache(tuple(paths), as_text(inputs.get("key")) or "cache")
            inputs_used = ("path", "key")
        else:
            ir_step.kind = UnmappedAction(uses, inputs)
            _warn(sink, WarningCode.UNKNOWN_ACTION, path, f"action '{uses}' has no rule")
            inputs_used = tuple(inputs.keys())
        for key in inputs.keys():
            if key not in inputs_used:
                _warn(sink, WarningCode.DROPPED_KEY, join_path(join_path(path, "with"), key), f"input '{key}' is not migrated")

    for key in step.keys():
        if key not in consumed:
            _warn(sink, WarningCode.DROPPED_KEY, join_path(path, key), f"step key '{key}' is not migrated")
    return ir_step


_GHA_JOB_CONSUMED = {"name", "runs-on", "needs", "strategy", "env", "steps", "continue-on-error"}


def _lower_gha_matrix(job: JobIR, strategy: YamlNode, path: str, sink: List[MigrationWarning]) -> bool:
    """Fills job.matrix; returns True when include entries mark experimental combinations."""
    if not isinstance(strategy, YamlMapping):
        _warn(sink, WarningCode.DROPPED_KEY, path, "strategy must be a mapping")
        return False
    experimental_entries = False
    for key, value in strategy.entries:
        key_path = join_path(path, key)
        if key != "matrix":
            _warn(sink, WarningCode.DROPPED_KEY, key_path, f"strategy option '{key}' is not migrated")
            continue
        if not isinstance(value, YamlMapping):
            _warn(sink, WarningCode.NO_EQUIVALENT, key_path, "dynamic matrices cannot be migrated")
            continue
        for dim, dim_value in value.entries:
            dim_path = join_path(key_path, dim)
            if dim in ("include", "exclude"):
                entries = [e for e in (dim_value.items if isinstance(dim_value, YamlSequence) else ()) if isinstance(e, YamlMapping)]
                for entry in entries:
                    entry = _neutral_entry(entry)
                    if dim == "include" and is_true(entry.get("experimental")):
                        experimental_entries = True
                        job.matrix.allow_failures.append(
                            YamlMapping(tuple((k, v) for k, v in entry.entries if k != "experimental"))
                        )
                    else:
                        (job.matrix.include if dim == "include" else job.matrix.exclude).append(entry)
            elif isinstance(dim_value, YamlSequence):
                values = list(dim_value.items)
                if dim == "os":
                    values = [_neutral_os(v) for v in values]
                job.matrix.dimensions[dim] = values
            else:
                _warn(sink, WarningCode.DROPPED_KEY, dim_path, "matrix dimension must be a list")
    return experimental_entries


def _lower_gha_job(job_id: str, node: YamlMapping, sink: List[MigrationWarning]) -> Optional[JobIR]:
    path = join_path("jobs", job_id)
    if "uses" in node:
        _warn(sink, WarningCode.NO_EQUIVALENT, path, "reusable workflows are not migrated")
        return None
    job = JobIR(id=job_id, name=as_text(node.get("name")))

    experimental = False
    if "strategy" in node:
        experimental = _lower_gha_matrix(job, node.get("strategy"), join_path(path, "strategy"), sink)

    runs_on = node.get("runs-on")
    runs_on_path = join_path(path, "runs-on")
    label = as_text(runs_on)
    ref = _MATRIX_REF.match(label.strip()) if label else None
    if ref and ref.group(1) == "os" and "os" in job.matrix.dimensions:
        os_values = job.matrix.dimensions["os"]
        first = as_text(os_values[0]) if os_values else None
        job.runner_os = RunnerOs(first) if first in {r.value for r in RunnerOs} else RunnerOs.LINUX
    elif label is not None:
        runner, version = _runner_from_label(label)
        if runner is None:
            _warn(sink, WarningCode.APPROX_RUNNER, runs_on_path, f"runner '{label}' mapped to Linux")
            runner = RunnerOs.LINUX
        elif version is not None:
            job.runner_version = version
            _warn(sink, WarningCode.APPROX_RUNNER, runs_on_path, f"pinned image '{label}' is not migrated")
        job.runner_os = runner
    elif runs_on is not None:
        _warn(sink, WarningCode.APPROX_RUNNER, runs_on_path, "runner label sets mapped to Linux")

    continue_on_error = node.get("continue-on-error")
    if continue_on_error is not None:
        text = as_text(continue_on_error) or ""
        if is_true(continue_on_error):
            job.allow_failure = True
        elif "matrix.experimental" in text and experimental:
            pass
        elif text.lower() != "false":
            _warn(sink, WarningCode.DROPPED_KEY, join_path(path, "continue-on-error"), "expression is not migrated")
    if experimental and "matrix.experimental" not in (as_text(continue_on_error) or ""):
        job.matrix.include.extend(
            YamlMapping(entry.entries + (("experimental", YamlScalar("true", ScalarKind.BOOL)),))
            for entry in job.matrix.allow_failures
        )
        job.matrix.allow_failures = []

    env = node.get("env")
    if isinstance(env, YamlMapping):
        env_dimension = "env" in job.matrix.dimensions
        for key, value in env.entries:
            text = as_text(value)
            if text is None:
                _warn(sink, WarningCode.DROPPED_KEY, join_path(join_path(path, "env"), key), "non-scalar env value")
            elif env_dimension and _MATRIX_ENV_REF.match(text.strip()):
                continue
            else:
                job.env[key] = text
    elif env is not None:
        _warn(sink, WarningCode.DROPPED_KEY, join_path(path, "env"), "env must be a mapping")

    job.needs = as_text_list(node.get("needs"))

    steps_node = node.get("steps")
    if isinstance(steps_node, YamlSequence):
        for index, step in enumerate(steps_node.items):
            lowered = _lower_gha_step(step, index_path(join_path(path, "steps"), index), sink)
            if lowered is not None:
                job.steps.append(lowered)

    for key in node.keys():
        if key == "services" or key == "container":
            _warn(sink, WarningCode.NO_EQUIVALENT, join_path(path, key), f"'{key}' is not migrated")
        elif key not in _GHA_JOB_CONSUMED:
            _warn(sink, WarningCode.DROPPED_KEY, join_path(path, key), f"job key '{key}' is not migrated")

    if not job.steps:
        _warn(sink, WarningCode.DROPPED_KEY, path, "job has no steps")
        return None
    return job


def lower_gha_to_ir(config: NormalizedConfig) -> PipelineIR:
    _expect_dialect(config, CiDialect.GHA)
    document = config.document
    sink: List[MigrationWarning] = []
    ir = PipelineIR(name=as_text(document.get("name")))

    jobs = document.get("jobs")
    if not isinstance(jobs, YamlMapping) or len(jobs) == 0:
        raise CigrateError("E_EMPTY_PIPELINE", "workflow has no jobs")

    ir.triggers = _gha_triggers(document.get("on"), sink)

    env = document.get("env")
    if isinstance(env, YamlMapping):
        for key, value in env.entries:
            text = as_text(value)
            if text is None:
                _warn(sink, WarningCode.DROPPED_KEY, join_path("env", key), "non-scalar env value")
            else:
                ir.global_env[key] = text

    for key in document.keys():
        if key not in ("name", "on", "env", "jobs"):
            _warn(sink, WarningCode.DROPPED_KEY, key, f"workflow key '{key}' is not migrated")

    for job_id, node in jobs.entries:
        if not isinstance(node, YamlMapping):
            _warn(sink, WarningCode.DROPPED_KEY, join_path("jobs", job_id), "job must be a mapping")
            continue
        job = _lower_gha_job(job_id, node, sink)
        if job is not None:
            ir.jobs.append(job)

    if not ir.jobs:
        raise CigrateError("E_EMPTY_PIPELINE", "no job could be migrated")
    ids = {job.id for job in ir.jobs}
    for job in ir.jobs:
        unknown = [need for need in job.needs if need not in ids]
        if unknown:
            _warn(sink, WarningCode.DROPPED_KEY, join_path(join_path("jobs", job.id), "needs"), f"unknown jobs {unknown}")
            job.needs = [need for need in job.needs if need in ids]

    ir.warnings = _dedupe(sink)
    ir.validate()
    logger.debug(f"Lowered GHA workflow: {len(ir.jobs)} job(s), {len(ir.warnings)} warning(s).")
    return ir


# =====================================================================
# IR -> GHA
# =====================================================================
def _gha_entry(entry: YamlMapping) -> YamlMapping:
    def convert(key: str, value: YamlNode) -> YamlNode:
        text = as_text(value)
        if key == "os" and text in {r.value for r in RunnerOs}:
            return _string_scalar(_GHA_RUNNER_LABEL[RunnerOs(text)])
        return value

    return YamlMapping(tuple((k, convert(k, v)) for k, v in entry.entries))


def _gha_step(step: StepIR) -> Dict[str, object]:
    out: Dict[str, object] = {}
    if step.name:
        out["name"] = step.name
    elif isinstance(step.kind, PackageInstall):
        out["name"] = APT_STEP_NAME
    if step.condition is not None:
        out["if"] = f"{step.condition.value}()"
    kind = step.kind
    if isinstance(kind, Checkout):
        out["uses"] = CHECKOUT_ACTION
    elif isinstance(kind, SetupLanguage):
        setup = _SETUP_BY_LANGUAGE[kind.language]
        if kind.version_dimension:
            version = f"${{{{ matrix.{kind.version_dimension} }}}}"
        else:
            version = kind.version or setup.default_version
        inputs: Dict[str, object] = {setup.version_input: _string_scalar(version)}
        if kind.language == "java":
            inputs["distribution"] = JAVA_DISTRIBUTION
        out["uses"] = setup.action
        out["with"] = inputs
    elif isinstance(kind, Cache):
        out["uses"] = CACHE_ACTION
        out["with"] = {"path": "\n".join(kind.paths), "key": kind.key}
    elif isinstance(kind, PackageInstall):
        out["run"] = APT_INSTALL_PREFIX + " ".join(kind.packages)
    elif isinstance(kind, UnmappedAction):
        out["uses"] = kind.ref
        if len(kind.inputs):
            out["with"] = kind.inputs
    else:
        out["run"] = kind.command
    return out


def _gha_job(job: JobIR) -> Dict[str, object]:
    out: Dict[str, object] = {}
    if job.name:
        out["name"] = job.name
    if job.needs:
        out["needs"] = list(job.needs)
    out["runs-on"] = "${{ matrix.os }}" if "os" in job.matrix.dimensions else _GHA_RUNNER_LABEL[job.runner_os]
    if job.allow_failure:
        out["continue-on-error"] = True
    elif job.matrix.allow_failures:
        out["continue-on-error"] = "${{ matrix.experimental || false }}"

    if not job.matrix.is_empty():
        matrix: Dict[str, object] = {}
        for dim, values in job.matrix.dimensions.items():
            if dim == "os":
                values = [_gha_entry(YamlMapping((("os", v),))).get("os") for v in values]
            matrix[dim] = list(values)
        include = [_gha_entry(entry) for entry in job.matrix.include]
        include.extend(
            YamlMapping(_gha_entry(entry).entries + (("experimental", YamlScalar("true", ScalarKind.BOOL)),))
            for entry in job.matrix.allow_failures
        )
        if include:
            matrix["include"] = include
        if job.matrix.exclude:
            matrix["exclude"] = [_gha_entry(entry) for entry in job.matrix.exclude]
        out["strategy"] = {"matrix": matrix}

    env: Dict[str, object] = {key: _string_scalar(value) for key, value in job.env.items()}
    for row in job.matrix.dimensions.get("env", []):
        if isinstance(row, YamlMapping):
            for key in row.keys():
                env.setdefault(key, f"${{{{ matrix.env.{key} }}}}")
    if env:
        out["env"] = env
    out["steps"] = [_gha_step(step) for step in job.steps]
    return out


def raise_ir_to_gha(ir: PipelineIR, warnings: Optional[List[MigrationWarning]] = None) -> NormalizedConfig:
    ir.validate()
    workflow: Dict[str, object] = {"name": ir.name or DEFAULT_WORKFLOW_NAME}

    if ir.triggers.is_empty():
        workflow["on"] = ["push", "pull_request"]
    else:
        events = list(ir.triggers.events) or ["push", "pull_request"]
        if "push" not in events and (ir.triggers.branches or ir.triggers.branches_ignore):
            events.insert(0, "push")
        on: Dict[str, object] = {}
        for event in events:
            filters: Dict[str, object] = {}
            if event == "push":
                if ir.triggers.branches:
                    filters["branches"] = list(ir.triggers.branches)
                if ir.triggers.branches_ignore:
                    filters["branches-ignore"] = list(ir.triggers.branches_ignore)
            on[event] = filters
        workflow["on"] = on

    if ir.global_env:
        workflow["env"] = {key: _string_scalar(value) for key, value in ir.global_env.items()}
    workflow["jobs"] = {job.id: _gha_job(job) for job in ir.jobs}

    document = normalize_document(from_python(workflow), CiDialect.GHA)
    features = categorize_features(NormalizedConfig(CiDialect.GHA, document))
    return NormalizedConfig(CiDialect.GHA, document, features)


# =====================================================================
# IR -> Travis
# =====================================================================
def _assignment(key: str, value: str) -> str:
    return f"{key}={shlex.quote(value) if value else value}"


def _assignments(env: Dict[str, str]) -> str:
    return " ".join(_assignment(key, value) for key, value in env.items())


def _travis_version_value(language: str, text: str) -> str:
    if language == "java" and text.isdigit():
        return f"openjdk{text}"
    return text


class _TravisJobRaiser:
    """Builds the Travis keys of one job; collects raise-side warnings."""

    def __init__(self, job: JobIR, sink: List[MigrationWarning], known_paths: set):
        self.job = job
        self.sink = sink
        self.known_paths = known_paths
        self.setup: Optional[SetupLanguage] = None
        self.version_dimension: Optional[str] = None
        self.env_rows: List[Dict[str, str]] = []

    def path(self, *parts: str) -> str:
        path = join_path("jobs", self.job.id)
        for part in parts:
            path = join_path(path, part)
        return path

    def warn_once(self, code: WarningCode, path: str, message: str) -> None:
        if path not in self.known_paths:
            self.known_paths.add(path)
            _warn(self.sink, code, path, message)

    def body(self) -> List[Tuple[str, object]]:
        job = self.job
        entries: List[Tuple[str, object]] = []
        phases: Dict[str, List[str]] = {phase: [] for phase in ("script", "after_success", "after_failure", "after_script")}
        cache_paths: List[str] = []
        packages: List[str] = []

        for step in job.steps:
            kind = step.kind
            if isinstance(kind, SetupLanguage):
                if self.setup is None:
                    self.setup = kind
                else:
                    self.warn_once(WarningCode.NO_EQUIVALENT, step.source_path or self.path("steps"), "only one language setup per Travis job")
            elif isinstance(kind, Cache):
                cache_paths.extend(p for p in kind.paths if p not in cache_paths)
            elif isinstance(kind, PackageInstall):
                packages.extend(p for p in kind.packages if p not in packages)
            elif isinstance(kind, UnmappedAction):
                self.warn_once(WarningCode.NO_EQUIVALENT, step.source_path or self.path("steps"), f"action '{kind.ref}' has no Travis equivalent")
            elif isinstance(kind, Run):
                phase = _TRAVIS_PHASE_FOR.get(step.condition, "script") if step.condition else "script"
                phases[phase].append(kind.command)

        dimensions = dict(job.matrix.dimensions)
        if self.setup is not None:
            setup = _SETUP_BY_LANGUAGE[self.setup.language]
            entries.append(("language", setup.travis_language))
            if self.setup.version_dimension and self.setup.version_dimension in dimensions:
                values = [as_text(v) or "" for v in dimensions.pop(self.setup.version_dimension)]
                entries.append((setup.travis_key, [_string_scalar(_travis_version_value(setup.language, v)) for v in values]))
            elif self.setup.version:
                entries.append((setup.travis_key, _string_scalar(_travis_version_value(setup.language, self.setup.version))))
        else:
            entries.append(("language", "shell"))

        if "os" in dimensions:
            names = [_TRAVIS_OS_NAME.get(RunnerOs(v.text), "linux") if as_text(v) in {r.value for r in RunnerOs} else "linux" for v in dimensions.pop("os")]
            entries.append(("os", list(dict.fromkeys(names))))
        elif job.runner_os is not RunnerOs.LINUX:
            entries.append(("os", _TRAVIS_OS_NAME[job.runner_os]))

        if cache_paths:
            entries.append(("cache", {"directories": cache_paths}))
        if packages:
            entries.append(("addons", {"apt": {"packages": packages}}))
        for phase, commands in phases.items():
            if commands:
                entries.append((phase, commands))

        self.env_rows = [
            {k: as_text(v) or "" for k, v in row.entries} for row in dimensions.pop("env", []) if isinstance(row, YamlMapping)
        ]
        for dim in dimensions:
            self.warn_once(WarningCode.NO_EQUIVALENT, self.path("strategy", "matrix", dim), f"matrix axis '{dim}' has no Travis equivalent")
        self.version_dimension = self.setup.version_dimension if self.setup else None
        return entries

    def matrix_entry(self, entry: YamlMapping, path: str) -> Optional[Dict[str, object]]:
        out: Dict[str, object] = {}
        for key, value in entry.entries:
            text = as_text(value)
            if self.setup is not None and key == self.version_dimension and text is not None:
                setup = _SETUP_BY_LANGUAGE[self.setup.language]
                out[setup.travis_key] = _string_scalar(_travis_version_value(setup.language, text))
            elif key == "os" and text in {r.value for r in RunnerOs}:
                out["os"] = _TRAVIS_OS_NAME[RunnerOs(text)]
            elif key == "env" and isinstance(value, YamlMapping):
                out["env"] = _assignments({k: as_text(v) or "" for k, v in value.entries})
            else:
                self.warn_once(WarningCode.NO_EQUIVALENT, join_path(path, key), f"matrix key '{key}' has no Travis equivalent")
        return out or None

    def matrix_sections(self) -> Dict[str, List[Dict[str, object]]]:
        sections: Dict[str, List[Dict[str, object]]] = {}
        matrix = self.job.matrix
        for name, entries in (("include", matrix.include), ("exclude", matrix.exclude), ("allow_failures", matrix.allow_failures)):
            converted = []
            for index, entry in enumerate(entries):
                item = self.matrix_entry(entry, index_path(self.path("strategy", "matrix", name), index))
                if item is not None:
                    converted.append(item)
            if converted:
                sections[name] = converted
        return sections


def _stage_levels(ir: PipelineIR) -> Dict[str, int]:
    by_id = {job.id: job for job in ir.jobs}
    levels: Dict[str, int] = {}

    def level(job_id: str, trail: Tuple[str, ...] = ()) -> int:
        if job_id in levels:
            return levels[job_id]
        if job_id in trail:
            raise CigrateError("E_INVALID_IR", f"needs cycle through '{job_id}'")
        needs = by_id[job_id].needs
        value = 0 if not needs else 1 + max(level(need, trail + (job_id,)) for need in needs)
        levels[job_id] = value
        return value

    for job in ir.jobs:
        level(job.id)
    return levels


def _env_section(global_env: Dict[str, str], rows: List[Dict[str, str]]) -> Optional[Dict[str, object]]:
    section: Dict[str, object] = {}
    if global_env:
        section["global"] = [_assignment(k, v) for k, v in global_env.items()]
    if rows:
        section["jobs"] = [_assignments(row) for row in rows]
    return section or None


def _expand_job_entry(
    entry: Dict[str, object], job_env: Dict[str, str], env_rows: List[Dict[str, str]]
) -> List[Dict[str, object]]:
    """One include entry per matrix combination; Travis include entries are single jobs."""
    axes = [(key, value) for key, value in entry.items() if key in VERSION_KEYS + ("os",) and isinstance(value, list)]
    env_axis: List[Optional[Dict[str, str]]] = [{**job_env, **row} for row in env_rows]
    if not env_axis:
        env_axis = [dict(job_env) if job_env else None]

    expanded = []
    for combination in itertools.product(*[values for _, values in axes], env_axis):
        item = dict(entry)
        for (key, _), value in zip(axes, combination[:-1]):
            item[key] = value
        if combination[-1]:
            item["env"] = _assignments(combination[-1])
        expanded.append(item)
    return expanded


def _has_travis_content(ir: PipelineIR) -> bool:
    return any(
        isinstance(step.kind, (Run, PackageInstall, SetupLanguage)) for job in ir.jobs for step in job.steps
    )


def raise_ir_to_travis(ir: PipelineIR, warnings: Optional[List[MigrationWarning]] = None) -> NormalizedConfig:
    ir.validate()
    if not _has_travis_content(ir):
        raise CigrateError("E_EMPTY_PIPELINE", "nothing in the pipeline can be expressed in Travis CI")

    sink: List[MigrationWarning] = warnings if warnings is not None else []
    known_paths = {warning.path for warning in ir.warnings} | {warning.path for warning in sink}
    root: Dict[str, object] = {}

    if len(ir.jobs) == 1:
        job = ir.jobs[0]
        raiser = _TravisJobRaiser(job, sink, known_paths)
        root.update(raiser.body())
        env = _env_section({**ir.global_env, **job.env}, raiser.env_rows)
        if env:
            root["env"] = env
        sections = raiser.matrix_sections()
        if job.allow_failure:
            sections.setdefault("allow_failures", []).append({"os": _TRAVIS_OS_NAME[job.runner_os]})
        if sections:
            root["jobs"] = sections
    else:
        levels = _stage_levels(ir)
        stage_names: Dict[int, str] = {}
        for job in ir.jobs:
            level = levels[job.id]
            if level not in stage_names:
                default = DEFAULT_STAGE if level == 0 else f"stage-{level + 1}"
                stage_names[level] = job.stage or default
        used = set()
        for level in sorted(stage_names):
            name = stage_names[level]
            if name.lower() in used:
                name = f"stage-{level + 1}"
                stage_names[level] = name
            used.add(name.lower())

        include: List[Dict[str, object]] = []
        allow_failures: List[Dict[str, object]] = []
        for job in ir.jobs:
            raiser = _TravisJobRaiser(job, sink, known_paths)
            entry: Dict[str, object] = {"stage": stage_names[levels[job.id]], "name": job.id}
            entry.update(raiser.body())
            for name in ("include", "exclude", "allow_failures"):
                if getattr(job.matrix, name):
                    raiser.warn_once(
                        WarningCode.NO_EQUIVALENT,
                        raiser.path("strategy", "matrix", name),
                        "per-job matrix entries have no Travis equivalent",
                    )
            if job.allow_failure:
                allow_failures.append({"name": job.id})
            include.extend(_expand_job_entry(entry, job.env, raiser.env_rows))
        if len(stage_names) > 1:
            root["stages"] = [stage_names[level] for level in sorted(stage_names)]
        env = _env_section(ir.global_env, [])
        if env:
            root["env"] = env
        jobs_section: Dict[str, object] = {"include": include}
        if allow_failures:
            jobs_section["allow_failures"] = allow_failures
        root["jobs"] = jobs_section

    if ir.triggers.branches or ir.triggers.branches_ignore:
        branches: Dict[str, object] = {}
        if ir.triggers.branches:
            branches["only"] = list(ir.triggers.branches)
        if ir.triggers.branches_ignore:
            branches["except"] = list(ir.triggers.branches_ignore)
        root["branches"] = branches

    document = normalize_document(from_python(root), CiDialect.TRAVIS)
    features = categorize_features(NormalizedConfig(CiDialect.TRAVIS, document))
    return NormalizedConfig(CiDialect.TRAVIS, document, features)


# =====================================================================
# Pipeline
# =====================================================================
def migrate_rules(config: Union[RawConfig, NormalizedConfig], target: Union[str, CiDialect]) -> MigrationResult:
    target = ensure_dialect(target)
    if config.dialect is target:
        raise CigrateError("E_SAME_DIALECT", f"source and target are both {target.label}")

    normalized = normalize(config)
    if normalized.dialect is CiDialect.TRAVIS:
        ir = lower_travis_to_ir(normalized)
    else:
        ir = lower_gha_to_ir(normalized)

    raise_warnings: List[MigrationWarning] = []
    if target is CiDialect.GHA:
        output = raise_ir_to_gha(ir, raise_warnings)
    else:
        output = raise_ir_to_travis(ir, raise_warnings)

    warnings = _dedupe(list(ir.warnings) + raise_warnings)
    report = lint(output.as_raw())
    if not report.passed:
        logger.error(f"Rule engine output failed the {target.label} linter: {[str(d) for d in report.errors]}")
    logger.info(f"Migrated {config.dialect.label} -> {target.label}: {len(ir.jobs)} job(s), {len(warnings)} warning(s).")
    return MigrationResult(output=output, warnings=tuple(warnings))
