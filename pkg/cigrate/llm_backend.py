"""
llm_backend.py
==============
LLM migration engine: prompt construction (zero-/few-shot), one top-1
completion per migration from any chat-completion HTTP endpoint, YAML
extraction, and chat-format fine-tune dataset export.

Wire format (one request per attempt):
    POST {base_url}/chat/completions
    Authorization: Bearer {CIGRATE_API_KEY}
    {"model": ..., "messages": [{"role": ..., "content": ...}], "temperature": 0, "max_tokens": 4096}
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, TextIO, Tuple, Union

import requests

from .config_model import CiDialect, RawConfig, compose_document, ensure_dialect, parse_config
from .corpus import MigrationCorpus, MigrationPair, Split, pairs_for_direction, split_corpus
from .errors import CigrateError, TransportError
from .normalizer import NormalizedConfig, categorize_features, normalize
from .translator import MigrationResult
from .validators import lint

logger = logging.getLogger("cigrate.llm_backend")

TEMPLATE_ID = "cigrate-v1"
API_KEY_ENV = "CIGRATE_API_KEY"
DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_OUTPUT_TOKENS = 4096
DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_BACKOFF_SECONDS = 1.0
DEFAULT_TIMEOUT_SECONDS = 60

SYSTEM_TEMPLATE = (
    "You are an expert in continuous integration configuration. "
    "Migrate the {source} configuration provided by the user into an equivalent {target} configuration. "
    "Keep every build command, the build matrix, environment variables, caching and branch filters. "
    "Answer with exactly one fenced ```yaml code block holding the complete {target} configuration "
    "and nothing else."
)
USER_TEMPLATE = "Migrate this {source} configuration to {target}:\n```yaml\n{config}```"
ASSISTANT_TEMPLATE = "```yaml\n{config}```"

_FENCE = re.compile(r"```[ \t]*[A-Za-z0-9_+-]*[ \t]*\r?\n(.*?)```", re.DOTALL)

Message = Dict[str, str]
Direction = Tuple[CiDialect, CiDialect]


# -----------------------------
# Data models
# -----------------------------
@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    api_key: str
    timeout_seconds: float = DEFAULT_TIMEOUT_SECONDS
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    backoff_seconds: float = DEFAULT_BACKOFF_SECONDS

    @classmethod
    def from_env(cls, base_url: str, env: Optional[Mapping[str, str]] = None, **overrides) -> "EndpointConfig":
        env = os.environ if env is None else env
        api_key = (env.get(API_KEY_ENV) or "").strip()
        if not api_key:
            raise TransportError("E_AUTH", f"missing credential: set {API_KEY_ENV}")
        if not base_url:
            raise CigrateError("E_BAD_PARAMETER", "an endpoint base URL is required")
        return cls(base_url=base_url.rstrip("/"), api_key=api_key, **overrides)

    @property
    def completions_url(self) -> str:
        return f"{self.base_url.rstrip('/')}/chat/completions"


@dataclass(frozen=True)
class PromptBundle:
    messages: Tuple[Message, ...]
    model_name: str = ""
    temperature: float = DEFAULT_TEMPERATURE
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    template_id: str = TEMPLATE_ID

    def request_body(self) -> Dict[str, object]:
        return {
            "model": self.model_name,
            "messages": [{"role": m["role"], "content": m["content"]} for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_output_tokens,
        }

    def fingerprint(self) -> str:
        payload = json.dumps(self.request_body(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Selection(Enum):
    FIRST = "first"
    RANDOM = "random"
    FEATURE_OVERLAP = "overlap"


@dataclass(frozen=True)
class FewShotPolicy:
    k: int
    selection: Selection = Selection.FIRST
    seed: int = 0
    source_split: Split = Split.TRAIN

    def __post_init__(self):
        if self.k < 0:
            raise CigrateError("E_BAD_PARAMETER", f"few-shot k must be >= 0, got {self.k}")
        if self.source_split is not Split.TRAIN:
            raise CigrateError("E_BAD_PARAMETER", "few-shot examples may only come from the train split")

    @classmethod
    def parse(cls, k: int, text: str = "first", seed: int = 0) -> "FewShotPolicy":
        """`first`, `overlap`, `random` or `random:<seed>`."""
        name, _, seed_text = text.strip().lower().partition(":")
        try:
            selection = Selection(name)
        except ValueError:
            raise CigrateError("E_BAD_PARAMETER", f"unknown few-shot selection '{text}'") from None
        if seed_text:
            seed = int(seed_text)
        return cls(k=k, selection=selection, seed=seed)

    def describe(self) -> str:
        if self.selection is Selection.RANDOM:
            return f"random:{self.seed}"
        return self.selection.value


@dataclass(frozen=True)
class CompletionResult:
    raw_text: str
    extracted_yaml: Optional[str]
    model_name: str
    request_fingerprint: str


# -----------------------------
# Prompts
# -----------------------------
def system_message(source: CiDialect, target: CiDialect) -> Message:
    return {"role": "system", "content": SYSTEM_TEMPLATE.format(source=source.label, target=target.label)}


def user_message(config: NormalizedConfig, target: CiDialect) -> Message:
    content = USER_TEMPLATE.format(source=config.dialect.label, target=target.label, config=config.serialize())
    return {"role": "user", "content": content}


def select_few_shot_examples(
    policy: FewShotPolicy,
    direction: Direction,
    corpus: MigrationCorpus,
    query: Optional[NormalizedConfig] = None,
) -> List[MigrationPair]:
    if policy.k == 0:
        return []

    candidates = pairs_for_direction(split_corpus(corpus, Split.TRAIN), direction)
    if len(candidates) < policy.k:
        raise CigrateError(
            "E_INSUFFICIENT_EXAMPLES",
            f"need {policy.k} train pairs for {direction[0].label} -> {direction[1].label}, found {len(candidates)}",
        )

    if policy.selection is Selection.FIRST:
        chosen = candidates[: policy.k]
    elif policy.selection is Selection.RANDOM:
        chosen = random.Random(policy.seed).sample(candidates, policy.k)
    else:
        wanted = query.feature_set if query is not None else frozenset()
        ranked = sorted(
            candidates,
            key=lambda pair: (-len(wanted & categorize_features(pair.source)), pair.pair_id),
        )
        chosen = ranked[: policy.k]

    if any(pair.split is not Split.TRAIN for pair in chosen):
        raise CigrateError("E_LEAKAGE", "few-shot selection returned a non-train pair")
    logger.debug(f"Few-shot ({policy.describe()}, k={policy.k}): {[pair.pair_id for pair in chosen]}")
    return chosen


def build_prompt(
    source: NormalizedConfig,
    target: Union[str, CiDialect],
    few_shot: Optional[FewShotPolicy] = None,
    corpus: Optional[MigrationCorpus] = None,
    model_name: str = "",
    temperature: float = DEFAULT_TEMPERATURE,
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
) -> PromptBundle:
    target = ensure_dialect(target)
    if source.dialect is target:
        raise CigrateError("E_SAME_DIALECT", f"source and target are both {target.label}")

    messages: List[Message] = [system_message(source.dialect, target)]
    if few_shot is not None and few_shot.k > 0:
        if corpus is None:
            raise CigrateError("E_INSUFFICIENT_EXAMPLES", f"k={few_shot.k} few-shot prompt needs a corpus")
        for pair in select_few_shot_examples(few_shot, (source.dialect, target), corpus, source):
            messages.append(user_message(normalize(pair.source), target))
            reference = normalize(pair.reference_target).serialize()
            messages.append({"role": "assistant", "content": ASSISTANT_TEMPLATE.format(config=reference)})
    messages.append(user_message(source, target))

    return PromptBundle(
        messages=tuple(messages),
        model_name=model_name,
        temperature=temperature,
        max_output_tokens=max_output_tokens,
    )


# -----------------------------
# Completion
# -----------------------------
def _first_choice_text(response) -> str:
    try:
        data = response.json()
        content = data["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError):
        raise TransportError("E_EMPTY_RESPONSE", "response carries no choice content", status=response.status_code)
    if not isinstance(content, str) or not content.strip():
        raise TransportError("E_EMPTY_RESPONSE", "first choice has empty content", status=response.status_code)
    return content


def complete(
    bundle: PromptBundle,
    endpoint: EndpointConfig,
    session: Optional[requests.Session] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> CompletionResult:
    post = session.post if session is not None else requests.post
    body = bundle.request_body()
    fingerprint = bundle.fingerprint()
    headers = {"Authorization": f"Bearer {endpoint.api_key}", "Content-Type": "application/json"}

    retry_delay = endpoint.backoff_seconds
    last_error: Optional[TransportError] = None
    for attempt in range(endpoint.max_attempts):
        try:
            response = post(endpoint.completions_url, json=body, headers=headers, timeout=endpoint.timeout_seconds)
        except requests.exceptions.Timeout as exc:
            last_error = TransportError("E_TIMEOUT", f"no response within {endpoint.timeout_seconds}s: {exc}")
        except requests.exceptions.RequestException as exc:
            last_error = TransportError("E_HTTP", f"request failed: {exc}")
        else:
            status = response.status_code
            if status in (401, 403):
                raise TransportError("E_AUTH", f"endpoint rejected the credential (HTTP {status})", status=status)
            if status == 429 or status >= 500:
                last_error = TransportError("E_HTTP", f"HTTP {status}: {response.text[:200]}", status=status)
            elif status >= 400:
                raise TransportError("E_HTTP", f"HTTP {status}: {response.text[:200]}", status=status)
            else:
                raw_text = _first_choice_text(response)
                logger.info(f"Completion from {bundle.model_name} on attempt {attempt + 1} ({len(raw_text)} chars).")
                try:
                    extracted: Optional[str] = extract_yaml(raw_text)
                except CigrateError:
                    extracted = None
                return CompletionResult(raw_text, extracted, bundle.model_name, fingerprint)

        if attempt < endpoint.max_attempts - 1:
            logger.warning(
                f"Attempt {attempt + 1} failed for {bundle.model_name}: {last_error}. Retrying in {retry_delay}s..."
            )
            sleep(retry_delay)
            retry_delay *= 2

    logger.error(f"Final failure for {bundle.model_name} after {endpoint.max_attempts} attempts: {last_error}")
    raise last_error


def extract_yaml(raw_text: str) -> str:
    """Content of the first fenced block, else the whole text; must parse as one YAML document."""
    match = _FENCE.search(raw_text)
    text = match.group(1).lstrip("\r\n").rstrip() if match else raw_text.strip()
    try:
        document = compose_document(text)
    except CigrateError as exc:
        raise CigrateError("E_UNPARSEABLE_OUTPUT", f"model output is not YAML ({exc.message})") from exc
    if document is None:
        raise CigrateError("E_UNPARSEABLE_OUTPUT", "model output is empty")
    return text


def migrate_llm(
    config: Union[RawConfig, NormalizedConfig],
    target: Union[str, CiDialect],
    endpoint: EndpointConfig,
    model_name: str,
    few_shot: Optional[FewShotPolicy] = None,
    corpus: Optional[MigrationCorpus] = None,
    session: Optional[requests.Session] = None,
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
) -> MigrationResult:
    """One top-1 completion, parsed back as a `target` config."""
    target = ensure_dialect(target)
    source = normalize(config)
    bundle = build_prompt(source, target, few_shot, corpus, model_name=model_name, max_output_tokens=max_output_tokens)
    result = complete(bundle, endpoint, session=session)
    text = result.extracted_yaml if result.extracted_yaml is not None else extract_yaml(result.raw_text)

    output = normalize(parse_config(text.encode("utf-8"), target, source_path=f"<{model_name}>"))
    report = lint(output.as_raw())
    if not report.passed:
        logger.warning(f"{model_name} output failed the {target.label} linter: {len(report.errors)} error(s).")
    return MigrationResult(output=output, warnings=())


# -----------------------------
# Fine-tune export
# -----------------------------
def finetune_record(pair: MigrationPair) -> Dict[str, object]:
    source = normalize(pair.source)
    target = pair.reference_target.dialect
    return {
        "messages": [
            system_message(source.dialect, target),
            user_message(source, target),
            {"role": "assistant", "content": normalize(pair.reference_target).serialize()},
        ]
    }


def export_finetune_dataset(corpus: MigrationCorpus, direction: Direction, out: TextIO) -> int:
    direction = (ensure_dialect(direction[0]), ensure_dialect(direction[1]))
    pairs = pairs_for_direction(split_corpus(corpus, Split.TRAIN), direction)
    if not pairs:
        raise CigrateError(
            "E_EMPTY_SPLIT", f"no train pairs for {direction[0].label} -> {direction[1].label}"
        )

    for pair in pairs:
        if pair.split is not Split.TRAIN:
            raise CigrateError("E_LEAKAGE", f"refusing to export non-train pair {pair.pair_id}")
        out.write(json.dumps(finetune_record(pair), ensure_ascii=False) + "\n")

    logger.info(f"Exported {len(pairs)} fine-tune record(s) for {direction[0].label} -> {direction[1].label}.")
    return len(pairs)
