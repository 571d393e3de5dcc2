"""
evaluation.py
=============
Corpus-level evaluation of a migration engine and paired comparison of two
evaluation reports.

Per test pair: migrate the source with the chosen engine, lint the output,
score it against the reference (cosine, CrystalBLEU, exact match). A pair
that fails to migrate gets a zero-score record carrying the error code; the
run itself only fails on corpus or IO errors.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import plotly.graph_objects as go
import requests

from .config_model import CiDialect, ensure_dialect
from .corpus import EvalReport, MigrationCorpus, MigrationPair, Split, pairs_for_direction, split_corpus
from .errors import CigrateError
from .llm_backend import (
    DEFAULT_MAX_OUTPUT_TOKENS,
    DEFAULT_TEMPERATURE,
    TEMPLATE_ID,
    EndpointConfig,
    FewShotPolicy,
    migrate_llm,
)
from .metrics import (
    DEFAULT_N_MAX,
    DEFAULT_TRIVIAL_K,
    SCORE_METRICS,
    ScoreRecord,
    TriviallySharedSet,
    WilcoxonResult,
    build_trivially_shared,
    cosine_similarity,
    crystal_bleu,
    exact_match,
    token_sequences,
    tokenize,
    wilcoxon_signed_rank,
)
from .normalizer import categorize_features, normalize
from .translator import MigrationResult, migrate_rules
from .validators import lint

logger = logging.getLogger("cigrate.evaluation")

DEFAULT_IN_FLIGHT = 4
RULES_ENGINE = "rules"
LLM_ENGINE = "llm"
RULES_TEMPLATE_ID = "none"

Direction = Tuple[CiDialect, CiDialect]


def parse_direction(text: str) -> Direction:
    """`travis->gha`, `travis:gha` or `travis,gha`."""
    for separator in ("->", ":", ","):
        if separator in text:
            source, target = text.split(separator, 1)
            break
    else:
        raise CigrateError("E_BAD_PARAMETER", f"direction must look like 'travis->gha', got '{text}'")
    direction = (ensure_dialect(source), ensure_dialect(target))
    if direction[0] is direction[1]:
        raise CigrateError("E_SAME_DIALECT", f"direction {text} has the same source and target")
    return direction


def direction_label(direction: Direction) -> str:
    return f"{direction[0].value}->{direction[1].value}"


def engine_name(engine: str, model: Optional[str] = None) -> str:
    if engine == RULES_ENGINE:
        return RULES_ENGINE
    if engine == LLM_ENGINE:
        if not model:
            raise CigrateError("E_BAD_PARAMETER", "the llm engine needs a model name")
        return f"{LLM_ENGINE}:{model}"
    raise CigrateError("E_BAD_PARAMETER", f"unknown engine '{engine}' (expected rules or llm)")


# -----------------------------
# Scoring
# -----------------------------
@dataclass
class EvalSettings:
    direction: Direction
    engine: str = RULES_ENGINE
    model: Optional[str] = None
    endpoint: Optional[EndpointConfig] = None
    few_shot: Optional[FewShotPolicy] = None
    n_max: int = DEFAULT_N_MAX
    trivial_k: int = DEFAULT_TRIVIAL_K
    smoothing: bool = False
    in_flight: int = DEFAULT_IN_FLIGHT
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS

    def parameters(self) -> Dict[str, object]:
        return {
            "direction": direction_label(self.direction),
            "few_shot_k": self.few_shot.k if self.few_shot else 0,
            "few_shot_selection": self.few_shot.describe() if self.few_shot else None,
            "n_max": self.n_max,
            "trivial_k": self.trivial_k,
            "smoothing": self.smoothing,
            "model": self.model if self.engine == LLM_ENGINE else None,
            "temperature": DEFAULT_TEMPERATURE if self.engine == LLM_ENGINE else None,
            "max_output_tokens": self.max_output_tokens if self.engine == LLM_ENGINE else None,
        }


def trivially_shared_for(corpus: MigrationCorpus, settings: EvalSettings) -> TriviallySharedSet:
    """Background n-grams from the train-split references of the evaluated direction."""
    if settings.trivial_k == 0:
        return TriviallySharedSet(k=0)
    train = pairs_for_direction(split_corpus(corpus, Split.TRAIN), settings.direction)
    if not train:
        logger.warning("No train pairs for the trivially shared n-grams; CrystalBLEU falls back to plain BLEU.")
        return TriviallySharedSet(k=settings.trivial_k)
    references = token_sequences(normalize(pair.reference_target) for pair in train)
    return build_trivially_shared(
        [seq.tokens for seq in references],
        k=settings.trivial_k,
        n_max=settings.n_max,
        source_corpus_id=corpus.manifest.fingerprint()[:16],
    )


def _migrate(pair: MigrationPair, settings: EvalSettings, corpus: MigrationCorpus, session) -> MigrationResult:
    target = settings.direction[1]
    if settings.engine == RULES_ENGINE:
        return migrate_rules(pair.source, target)
    if settings.endpoint is None:
        raise CigrateError("E_BAD_PARAMETER", "the llm engine needs an endpoint")
    return migrate_llm(
        pair.source,
        target,
        settings.endpoint,
        settings.model,
        few_shot=settings.few_shot,
        corpus=corpus,
        session=session,
        max_output_tokens=settings.max_output_tokens,
    )


def score_pair(
    pair: MigrationPair,
    settings: EvalSettings,
    corpus: MigrationCorpus,
    trivial: TriviallySharedSet,
    session: Optional[requests.Session] = None,
) -> ScoreRecord:
    engine = engine_name(settings.engine, settings.model)
    features = sorted(category.value for category in categorize_features(pair.source))
    try:
        result = _migrate(pair, settings, corpus, session)
    except CigrateError as exc:
        logger.warning(f"Pair {pair.pair_id}: migration failed with {exc}")
        return ScoreRecord.failed(pair.pair_id, engine, exc.code, features)

    candidate = result.output
    reference = normalize(pair.reference_target)
    lint_passed = lint(candidate.as_raw()).passed

    if exact_match(candidate, reference):
        cosine, bleu, exact = 1.0, 1.0, True
    else:
        cand_tokens = tokenize(candidate.serialize()).tokens
        ref_tokens = tokenize(reference.serialize()).tokens
        cosine = cosine_similarity(cand_tokens, ref_tokens)
        bleu = crystal_bleu(cand_tokens, ref_tokens, trivial, settings.n_max, settings.smoothing)
        exact = False

    logger.debug(f"Pair {pair.pair_id}: cosine={cosine:.4f} crystal_bleu={bleu:.4f} lint={lint_passed}")
    return ScoreRecord(
        pair_id=pair.pair_id,
        engine=engine,
        cosine=cosine,
        crystal_bleu=bleu,
        exact_match=exact,
        lint_passed=lint_passed,
        warnings_count=len(result.warnings),
        features=features,
    )


def run_eval(
    corpus: MigrationCorpus,
    settings: EvalSettings,
    session: Optional[requests.Session] = None,
) -> EvalReport:
    engine = engine_name(settings.engine, settings.model)
    test_pairs = pairs_for_direction(split_corpus(corpus, Split.TEST), settings.direction)
    if not test_pairs:
        raise CigrateError("E_EMPTY_SPLIT", f"no test pairs for {direction_label(settings.direction)}")

    trivial = trivially_shared_for(corpus, settings)
    logger.info(f"Evaluating {engine} on {len(test_pairs)} test pair(s), {direction_label(settings.direction)}.")

    records: List[ScoreRecord] = []
    with ThreadPoolExecutor(max_workers=max(1, settings.in_flight)) as executor:
        futures = {
            executor.submit(score_pair, pair, settings, corpus, trivial, session): pair.pair_id
            for pair in test_pairs
        }
        for future in as_completed(futures):
            records.append(future.result())

    failed = sum(1 for record in records if record.failure)
    if failed:
        logger.warning(f"{failed} of {len(records)} pair(s) failed to migrate and were scored 0.")

    template_id = TEMPLATE_ID if settings.engine == LLM_ENGINE else RULES_TEMPLATE_ID
    return EvalReport.build(engine, template_id, settings.parameters(), records, manifest=corpus.manifest)


# -----------------------------
# Comparison
# -----------------------------
@dataclass(frozen=True)
class Comparison:
    metric: str
    pair_ids: Tuple[str, ...]
    scores_a: Tuple[float, ...]
    scores_b: Tuple[float, ...]
    test: Optional[WilcoxonResult]

    @property
    def mean_a(self) -> float:
        return sum(self.scores_a) / len(self.scores_a)

    @property
    def mean_b(self) -> float:
        return sum(self.scores_b) / len(self.scores_b)

    @property
    def no_difference(self) -> bool:
        return self.test is None


def compare_reports(report_a: EvalReport, report_b: EvalReport, metric: str = "cosine", method: str = "auto") -> Comparison:
    if metric not in SCORE_METRICS:
        raise CigrateError("E_BAD_PARAMETER", f"metric must be one of {list(SCORE_METRICS)}, got '{metric}'")

    by_id_a = {record.pair_id: record for record in report_a.records}
    by_id_b = {record.pair_id: record for record in report_b.records}
    shared = tuple(sorted(set(by_id_a) & set(by_id_b)))
    if not shared:
        raise CigrateError("E_NO_OVERLAP", f"reports {report_a.run_id} and {report_b.run_id} share no pair ids")

    scores_a = tuple(float(getattr(by_id_a[pair_id], metric)) for pair_id in shared)
    scores_b = tuple(float(getattr(by_id_b[pair_id], metric)) for pair_id in shared)
    try:
        test: Optional[WilcoxonResult] = wilcoxon_signed_rank(scores_a, scores_b, method)
    except CigrateError as exc:
        if exc.code != "E_ALL_ZERO_DIFFS":
            raise
        test = None
    logger.info(f"Compared {report_a.engine} vs {report_b.engine} on {metric} over {len(shared)} pair(s).")
    return Comparison(metric, shared, scores_a, scores_b, test)


def plot_comparison(comparison: Comparison, label_a: str, label_b: str, out: Union[str, Path]) -> Path:
    out = Path(out)
    fig = go.Figure()
    fig.add_trace(go.Scatter(x=list(comparison.pair_ids), y=list(comparison.scores_a), name=label_a, mode="lines+markers"))
    fig.add_trace(go.Scatter(x=list(comparison.pair_ids), y=list(comparison.scores_b), name=label_b, mode="lines+markers"))
    fig.update_layout(
        title=f"Per-pair {comparison.metric}: {label_a} vs {label_b}",
        xaxis_title="Pair",
        yaxis_title=comparison.metric,
        height=520,
        template="plotly_white",
    )
    fig.update_yaxes(range=[0, 1.05], tickformat=",.2f")
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.write_html(str(out), include_plotlyjs="cdn")
    except OSError as exc:
        raise CigrateError("E_IO", f"failed to write plot {out}: {exc}") from exc
    logger.info(f"Comparison chart saved to: {out}")
    return out
