"""
metrics.py
==========
Similarity metrics between a migrated config and its reference, plus the
paired significance test used to compare two engines.

- cosine similarity over raw term-frequency vectors
- CrystalBLEU: BLEU after deleting the k most frequent ("trivially shared")
  n-grams of a background corpus from both sides
- exact match of canonical serializations
- Wilcoxon signed-rank test (exact enumeration for small n, normal
  approximation with tie and continuity correction otherwise)
- report-level aggregates (mean / median / population stddev)
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import norm, rankdata

from .errors import CigrateError
from .normalizer import FeatureCategory, NormalizedConfig, TokenSequence, tokenize

logger = logging.getLogger("cigrate.metrics")

DEFAULT_N_MAX = 4
DEFAULT_TRIVIAL_K = 500
EXACT_WILCOXON_MAX_N = 12
EXACT_WILCOXON_LIMIT = 20
ZERO_DIFF_TOLERANCE = 1e-12

NGram = Tuple[str, ...]


# -----------------------------
# Data models
# -----------------------------
@dataclass(frozen=True)
class NGramProfile:
    n_max: int
    counts: Dict[NGram, int]
    total_per_order: Dict[int, int]


@dataclass(frozen=True)
class TriviallySharedSet:
    ngrams: FrozenSet[NGram] = frozenset()
    k: int = 0
    source_corpus_id: str = ""

    def __contains__(self, ngram: object) -> bool:
        return ngram in self.ngrams

    def __len__(self) -> int:
        return len(self.ngrams)


@dataclass
class ScoreRecord:
    pair_id: str
    engine: str
    cosine: float = 0.0
    crystal_bleu: float = 0.0
    exact_match: bool = False
    lint_passed: bool = False
    warnings_count: int = 0
    features: List[str] = field(default_factory=list)
    failure: Optional[str] = None

    @classmethod
    def failed(cls, pair_id: str, engine: str, failure: str, features: Iterable[str] = ()) -> "ScoreRecord":
        return cls(pair_id=pair_id, engine=engine, features=sorted(features), failure=failure)

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "ScoreRecord":
        return cls(
            pair_id=str(data["pair_id"]),
            engine=str(data["engine"]),
            cosine=float(data["cosine"]),
            crystal_bleu=float(data["crystal_bleu"]),
            exact_match=bool(data["exact_match"]),
            lint_passed=bool(data["lint_passed"]),
            warnings_count=int(data["warnings_count"]),
            features=list(data.get("features", [])),
            failure=data.get("failure"),
        )


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    n_effective: int
    w_plus: float
    w_minus: float
    method: str


# -----------------------------
# Cosine
# -----------------------------
def cosine_similarity(a: Sequence[str], b: Sequence[str]) -> float:
    a_counts, b_counts = Counter(a), Counter(b)
    if not a_counts and not b_counts:
        return 1.0
    if not a_counts or not b_counts:
        return 0.0

    vocabulary = sorted(set(a_counts) | set(b_counts))
    va = np.array([a_counts[token] for token in vocabulary], dtype=float)
    vb = np.array([b_counts[token] for token in vocabulary], dtype=float)
    score = float(va @ vb / (np.linalg.norm(va) * np.linalg.norm(vb)))
    return min(1.0, max(0.0, score))


# -----------------------------
# N-grams / CrystalBLEU
# -----------------------------
def ngrams(tokens: Sequence[str], n: int) -> List[NGram]:
    tokens = tuple(tokens)
    return [tokens[i : i + n] for i in range(len(tokens) - n + 1)]


def ngram_profile(tokens: Sequence[str], n_max: int = DEFAULT_N_MAX) -> NGramProfile:
    counts: Counter = Counter()
    totals: Dict[int, int] = {}
    for n in range(1, n_max + 1):
        grams = ngrams(tokens, n)
        counts.update(grams)
        totals[n] = len(grams)
    return NGramProfile(n_max, dict(counts), totals)


def build_trivially_shared(
    corpus_token_seqs: Sequence[Sequence[str]],
    k: int = DEFAULT_TRIVIAL_K,
    n_max: int = DEFAULT_N_MAX,
    source_corpus_id: str = "",
) -> TriviallySharedSet:
    if not corpus_token_seqs:
        raise CigrateError("E_EMPTY_CORPUS", "no token sequences to extract trivially shared n-grams from")
    if k < 0:
        raise CigrateError("E_BAD_PARAMETER", f"k must be >= 0, got {k}")

    pooled: Counter = Counter()
    for tokens in corpus_token_seqs:
        pooled.update(ngram_profile(tokens, n_max).counts)

    ranked = sorted(pooled.items(), key=lambda item: (-item[1], item[0]))
    selected = frozenset(ngram for ngram, _ in ranked[:k])
    logger.debug(f"Trivially shared set: {len(selected)} of {len(pooled)} distinct n-grams (k={k}, n_max={n_max}).")
    return TriviallySharedSet(selected, k, source_corpus_id)


def matched_ngram_counts(
    candidate: Sequence[str],
    reference: Sequence[str],
    trivial: TriviallySharedSet,
    n_max: int = DEFAULT_N_MAX,
) -> Dict[int, Tuple[int, int]]:
    """Per order n: (clipped matches, candidate total) after deleting trivial n-grams."""
    out: Dict[int, Tuple[int, int]] = {}
    for n in range(1, n_max + 1):
        cand = Counter(g for g in ngrams(candidate, n) if g not in trivial)
        ref = Counter(g for g in ngrams(reference, n) if g not in trivial)
        matched = sum(min(count, ref[gram]) for gram, count in cand.items())
        out[n] = (matched, sum(cand.values()))
    return out


def crystal_bleu(
    candidate: Sequence[str],
    reference: Sequence[str],
    trivial: TriviallySharedSet = TriviallySharedSet(),
    n_max: int = DEFAULT_N_MAX,
    smoothing: bool = False,
) -> float:
    if n_max < 1:
        raise CigrateError("E_BAD_PARAMETER", f"n_max must be >= 1, got {n_max}")

    counts = matched_ngram_counts(candidate, reference, trivial, n_max)
    c = counts[1][1]
    r = sum(1 for g in ngrams(reference, 1) if g not in trivial)
    if c == 0:
        return 0.0

    log_sum = 0.0
    for n in range(1, n_max + 1):
        matched, total = counts[n]
        if smoothing and n >= 2:
            matched, total = matched + 1, total + 1
        if matched == 0 or total == 0:
            return 0.0
        log_sum += (1.0 / n_max) * math.log(matched / total)

    brevity_penalty = 1.0 if c > r else math.exp(1 - r / c)
    return min(1.0, max(0.0, brevity_penalty * math.exp(log_sum)))


# -----------------------------
# Exact match
# -----------------------------
def exact_match(a: NormalizedConfig, b: NormalizedConfig) -> bool:
    if a.dialect is not b.dialect:
        raise CigrateError("E_DIALECT_MISMATCH", f"cannot compare {a.dialect.label} with {b.dialect.label}")
    return a.serialize() == b.serialize()


# -----------------------------
# Wilcoxon signed-rank
# -----------------------------
def _exact_p(ranks: np.ndarray, w_plus: float) -> float:
    n = len(ranks)
    signs = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
    sums = signs @ ranks
    lower = np.mean(sums <= w_plus + 1e-9)
    upper = np.mean(sums >= w_plus - 1e-9)
    return float(min(1.0, 2 * min(lower, upper)))


def _approx_p(abs_diffs: np.ndarray, w_plus: float) -> float:
    n = len(abs_diffs)
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(abs_diffs, return_counts=True)
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    if variance <= 0:
        return 1.0
    z = max(0.0, abs(w_plus - mean) - 0.5) / math.sqrt(variance)
    return float(min(1.0, 2 * norm.sf(z)))


def wilcoxon_signed_rank(
    scores_a: Sequence[float], scores_b: Sequence[float], method: str = "auto"
) -> WilcoxonResult:
    if len(scores_a) != len(scores_b):
        raise CigrateError("E_LENGTH_MISMATCH", f"paired lists differ in length: {len(scores_a)} vs {len(scores_b)}")
    if method not in ("auto", "exact", "approx"):
        raise CigrateError("E_BAD_PARAMETER", f"unknown method '{method}'")

    diffs = np.asarray(scores_a, dtype=float) - np.asarray(scores_b, dtype=float)
    diffs = diffs[np.abs(diffs) > ZERO_DIFF_TOLERANCE]
    n = len(diffs)
    if n == 0:
        raise CigrateError("E_ALL_ZERO_DIFFS", "all paired differences are zero")

    abs_diffs = np.abs(diffs)
    ranks = rankdata(abs_diffs)
    w_plus = float(ranks[diffs > 0].sum())
    w_minus = float(ranks[diffs < 0].sum())

    use_exact = method == "exact" or (method == "auto" and n <= EXACT_WILCOXON_MAX_N)
    if use_exact and n > EXACT_WILCOXON_LIMIT:
        raise CigrateError("E_BAD_PARAMETER", f"exact enumeration is limited to n <= {EXACT_WILCOXON_LIMIT}, got {n}")
    if use_exact:
        p_value, used = _exact_p(ranks, w_plus), "exact"
    else:
        p_value, used = _approx_p(abs_diffs, w_plus), "approx"

    logger.debug(f"Wilcoxon: n={n}, W+={w_plus}, W-={w_minus}, p={p_value:.6f} ({used}).")
    return WilcoxonResult(min(w_plus, w_minus), p_value, n, w_plus, w_minus, used)


# -----------------------------
# Aggregates
# -----------------------------
SCORE_METRICS = ("cosine", "crystal_bleu")


def _summary(series: pd.Series) -> Dict[str, float]:
    return {
        "mean": float(series.mean()),
        "median": float(series.median()),
        "stddev": float(series.std(ddof=0)),
    }


def aggregate_scores(records: Sequence[ScoreRecord]) -> Dict[str, object]:
    if not records:
        raise CigrateError("E_EMPTY", "no score records to aggregate")
    df = pd.DataFrame([record.to_dict() for record in records])
    return {
        "per_metric": {metric: _summary(df[metric].astype(float)) for metric in SCORE_METRICS},
        "lint_pass_rate": float(df["lint_passed"].astype(bool).mean()),
        "exact_match_rate": float(df["exact_match"].astype(bool).mean()),
    }


def feature_breakdown(records: Sequence[ScoreRecord]) -> Dict[str, Dict[str, float]]:
    """Per FeatureCategory of the source configs: count and metric means."""
    breakdown: Dict[str, Dict[str, float]] = {}
    for category in FeatureCategory:
        members = [record for record in records if category.value in record.features]
        if not members:
            continue
        df = pd.DataFrame([record.to_dict() for record in members])
        breakdown[category.value] = {
            "count": int(len(members)),
            "cosine_mean": float(df["cosine"].astype(float).mean()),
            "crystal_bleu_mean": float(df["crystal_bleu"].astype(float).mean()),
            "lint_pass_rate": float(df["lint_passed"].astype(bool).mean()),
        }
    return breakdown


def token_sequences(configs: Iterable[NormalizedConfig]) -> List[TokenSequence]:
    return [tokenize(config.serialize()) for config in configs]
