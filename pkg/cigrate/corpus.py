"""
corpus.py
=========
Migration-pair datasets and evaluation reports.

Dataset layout
--------------
    <root>/manifest.json
    <root>/pairs/<pair_id>/travis.yml
    <root>/pairs/<pair_id>/gha.yml

manifest.json (schema "1"):
    {
      "schema_version": "1",
      "counts": {"travis_only": int, "gha_only": int, "dual": int},
      "split_assignment": {"<pair_id>": "train" | "test", ...},
      "sources": {"<pair_id>": "travis" | "gha", ...},   # optional, default travis
      "split_seed": int | null
    }

Reports are written as <name>.json (full EvalReport) plus <name>.csv (one
row per ScoreRecord).
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import shutil
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import pandas as pd

from .config_model import CiDialect, RawConfig, ensure_dialect, read_config
from .errors import CigrateError
from .metrics import ScoreRecord, aggregate_scores, feature_breakdown

logger = logging.getLogger("cigrate.corpus")

BASE_DIR = Path(__file__).resolve().parent.parent
FIXTURE_CORPUS_DIR = BASE_DIR / "Data" / "fixture_corpus"
REPORTS_DIR = BASE_DIR / "Reports"

MANIFEST_FILENAME = "manifest.json"
MANIFEST_SCHEMA_VERSION = "1"
PAIRS_DIRNAME = "pairs"
PAIR_FILES = {CiDialect.TRAVIS: "travis.yml", CiDialect.GHA: "gha.yml"}
DEFAULT_TEST_FRACTION = 0.2
DEFAULT_SPLIT_SEED = 0

REPORT_CSV_COLUMNS = ["pair_id", "engine", "cosine", "crystal_bleu", "exact_match", "lint_passed", "warnings_count"]

TRAVIS_FILE = ".travis.yml"
WORKFLOWS_DIR = Path(".github") / "workflows"
WORKFLOW_SUFFIXES = (".yml", ".yaml")


class Split(Enum):
    TRAIN = "train"
    TEST = "test"


def ensure_split(value: Union[str, Split]) -> Split:
    if isinstance(value, Split):
        return value
    try:
        return Split(str(value).strip().lower())
    except ValueError:
        raise CigrateError("E_BAD_SPLIT", f"unknown split '{value}' (expected train or test)") from None


# -----------------------------
# Data models
# -----------------------------
@dataclass(frozen=True)
class MigrationPair:
    pair_id: str
    source: RawConfig
    reference_target: RawConfig
    split: Split

    def __post_init__(self):
        if self.source.dialect is self.reference_target.dialect:
            raise CigrateError(
                "E_SAME_DIALECT",
                f"source and reference are both {self.source.dialect.label}",
                pair_id=self.pair_id,
            )

    @property
    def direction(self) -> Tuple[CiDialect, CiDialect]:
        return self.source.dialect, self.reference_target.dialect


@dataclass(frozen=True)
class CorpusManifest:
    counts: Dict[str, int]
    split_assignment: Dict[str, Split]
    sources: Dict[str, CiDialect] = field(default_factory=dict)
    split_seed: Optional[int] = None
    schema_version: str = MANIFEST_SCHEMA_VERSION

    def source_dialect(self, pair_id: str) -> CiDialect:
        return self.sources.get(pair_id, CiDialect.TRAVIS)

    def to_dict(self) -> Dict[str, object]:
        return {
            "schema_version": self.schema_version,
            "counts": {key: int(self.counts.get(key, 0)) for key in ("travis_only", "gha_only", "dual")},
            "split_assignment": {pair_id: split.value for pair_id, split in sorted(self.split_assignment.items())},
            "sources": {pair_id: dialect.value for pair_id, dialect in sorted(self.sources.items())},
            "split_seed": self.split_seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object], path: Path) -> "CorpusManifest":
        if not isinstance(data, dict):
            raise CigrateError("E_MANIFEST_INVALID", f"manifest must be a JSON object: {path}")
        if str(data.get("schema_version")) != MANIFEST_SCHEMA_VERSION:
            raise CigrateError(
                "E_MANIFEST_INVALID",
                f"unsupported manifest schema_version {data.get('schema_version')!r} (expected {MANIFEST_SCHEMA_VERSION})",
            )
        for key in ("counts", "split_assignment"):
            if not isinstance(data.get(key), dict):
                raise CigrateError("E_MANIFEST_INVALID", f"manifest '{key}' must be an object: {path}")

        return cls(
            counts={key: int(value) for key, value in data["counts"].items()},
            split_assignment={str(k): ensure_split(v) for k, v in data["split_assignment"].items()},
            sources={str(k): ensure_dialect(v) for k, v in (data.get("sources") or {}).items()},
            split_seed=data.get("split_seed"),
            schema_version=MANIFEST_SCHEMA_VERSION,
        )

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class MigrationCorpus:
    pairs: Tuple[MigrationPair, ...]
    manifest: CorpusManifest

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[MigrationPair]:
        return iter(self.pairs)

    def get(self, pair_id: str) -> MigrationPair:
        for pair in self.pairs:
            if pair.pair_id == pair_id:
                return pair
        raise CigrateError("E_UNKNOWN_PAIR", f"no pair '{pair_id}' in corpus")


# -----------------------------
# Loading / splitting
# -----------------------------
def manifest_path(root: Path) -> Path:
    return Path(root) / MANIFEST_FILENAME


def read_manifest(root: Path) -> CorpusManifest:
    path = manifest_path(root)
    if not path.is_file():
        raise CigrateError("E_MANIFEST_MISSING", f"manifest not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CigrateError("E_MANIFEST_INVALID", f"manifest is not valid JSON: {path} ({exc.msg})") from exc
    return CorpusManifest.from_dict(data, path)


def write_manifest(root: Path, manifest: CorpusManifest) -> Path:
    path = manifest_path(root)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise CigrateError("E_IO", f"failed to write manifest {path}: {exc}") from exc
    return path


def _load_pair(root: Path, pair_id: str, split: Split, source: CiDialect) -> MigrationPair:
    pair_dir = root / PAIRS_DIRNAME / pair_id
    target = CiDialect.GHA if source is CiDialect.TRAVIS else CiDialect.TRAVIS

    configs: Dict[CiDialect, RawConfig] = {}
    for dialect in (source, target):
        path = pair_dir / PAIR_FILES[dialect]
        if not path.is_file():
            raise CigrateError("E_PAIR_FILE_MISSING", f"missing {path}", pair_id=pair_id)
        try:
            configs[dialect] = read_config(path, dialect)
        except CigrateError as exc:
            raise exc.tagged(pair_id)
    return MigrationPair(pair_id, configs[source], configs[target], split)


def load_corpus(root: Union[str, Path]) -> MigrationCorpus:
    root = Path(root)
    manifest = read_manifest(root)

    pairs_dir = root / PAIRS_DIRNAME
    found = sorted(p.name for p in pairs_dir.iterdir() if p.is_dir()) if pairs_dir.is_dir() else []
    dual = manifest.counts.get("dual", 0)
    if dual != len(found) or dual != len(manifest.split_assignment):
        raise CigrateError(
            "E_COUNT_MISMATCH",
            f"manifest claims dual={dual}, split_assignment has {len(manifest.split_assignment)} "
            f"entries, {pairs_dir} has {len(found)} pair directories",
        )

    pairs = tuple(
        _load_pair(root, pair_id, split, manifest.source_dialect(pair_id))
        for pair_id, split in sorted(manifest.split_assignment.items())
    )
    n_train = sum(1 for pair in pairs if pair.split is Split.TRAIN)
    logger.info(f"Loaded corpus {root}: {len(pairs)} pairs ({n_train} train, {len(pairs) - n_train} test).")
    return MigrationCorpus(pairs, manifest)


def split_corpus(corpus: MigrationCorpus, which: Union[str, Split]) -> List[MigrationPair]:
    which = ensure_split(which)
    return sorted((pair for pair in corpus.pairs if pair.split is which), key=lambda pair: pair.pair_id)


def pairs_for_direction(
    pairs: Sequence[MigrationPair], direction: Tuple[CiDialect, CiDialect]
) -> List[MigrationPair]:
    """Pairs usable for `direction`: a pair is read in reverse when its source is the direction's target."""
    source, target = direction
    out: List[MigrationPair] = []
    for pair in pairs:
        if pair.direction == (source, target):
            out.append(pair)
        elif pair.direction == (target, source):
            out.append(MigrationPair(pair.pair_id, pair.reference_target, pair.source, pair.split))
    return out


# -----------------------------
# Reports
# -----------------------------
def _utc_now() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def make_run_id(engine: str, template_id: str, parameters: Dict[str, object], manifest_hash: str) -> str:
    payload = json.dumps(
        {"engine": engine, "template_id": template_id, "parameters": parameters, "manifest": manifest_hash},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass
class EvalReport:
    run_id: str
    engine: str
    template_id: str
    parameters: Dict[str, object]
    records: List[ScoreRecord]
    aggregates: Dict[str, object]
    created_at: str
    feature_breakdown: Dict[str, Dict[str, float]] = field(default_factory=dict)
    manifest_hash: str = ""

    @classmethod
    def build(
        cls,
        engine: str,
        template_id: str,
        parameters: Dict[str, object],
        records: Sequence[ScoreRecord],
        manifest: Optional[CorpusManifest] = None,
        created_at: Optional[str] = None,
    ) -> "EvalReport":
        manifest_hash = manifest.fingerprint() if manifest is not None else ""
        ordered = sorted(records, key=lambda record: record.pair_id)
        return cls(
            run_id=make_run_id(engine, template_id, parameters, manifest_hash),
            engine=engine,
            template_id=template_id,
            parameters=dict(parameters),
            records=ordered,
            aggregates=aggregate_scores(ordered),
            created_at=created_at or _utc_now(),
            feature_breakdown=feature_breakdown(ordered),
            manifest_hash=manifest_hash,
        )

    def to_dict(self) -> Dict[str, object]:
        return {
            "run_id": self.run_id,
            "engine": self.engine,
            "template_id": self.template_id,
            "parameters": self.parameters,
            "created_at": self.created_at,
            "manifest_hash": self.manifest_hash,
            "aggregates": self.aggregates,
            "feature_breakdown": self.feature_breakdown,
            "records": [record.to_dict() for record in sorted(self.records, key=lambda r: r.pair_id)],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "EvalReport":
        return cls(
            run_id=str(data["run_id"]),
            engine=str(data["engine"]),
            template_id=str(data["template_id"]),
            parameters=dict(data.get("parameters") or {}),
            records=[ScoreRecord.from_dict(item) for item in data.get("records", [])],
            aggregates=dict(data.get("aggregates") or {}),
            created_at=str(data["created_at"]),
            feature_breakdown=dict(data.get("feature_breakdown") or {}),
            manifest_hash=str(data.get("manifest_hash", "")),
        )

    def scores_frame(self) -> pd.DataFrame:
        rows = [record.to_dict() for record in sorted(self.records, key=lambda r: r.pair_id)]
        return pd.DataFrame(rows, columns=REPORT_CSV_COLUMNS)


def report_csv_path(out: Path) -> Path:
    return Path(out).with_suffix(".csv")


def write_report(report: EvalReport, out: Union[str, Path]) -> Path:
    """Write <out> as JSON and a sibling .csv; returns the JSON path."""
    json_path = Path(out)
    csv_path = report_csv_path(json_path)
    try:
        json_path.parent.mkdir(parents=True, exist_ok=True)
        json_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        report.scores_frame().to_csv(csv_path, index=False, encoding="utf-8", lineterminator="\n")
    except OSError as exc:
        raise CigrateError("E_IO", f"failed to write report {json_path}: {exc}") from exc

    logger.info(f"Report {report.run_id} saved to: {json_path} (+ {csv_path.name})")
    return json_path


def read_report(path: Union[str, Path]) -> EvalReport:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CigrateError("E_IO", f"cannot read report {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CigrateError("E_IO", f"report is not valid JSON: {path} ({exc.msg})") from exc
    return EvalReport.from_dict(data)


def write_workbook(report: EvalReport, out: Union[str, Path]) -> Path:
    """Scores sheet, metric summary block and a per-pair line chart."""
    out = Path(out)
    df = report.scores_frame()
    n = len(df)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        with pd.ExcelWriter(out, engine="xlsxwriter") as writer:
            df.to_excel(writer, sheet_name="Scores", index=False)
            workbook = writer.book
            worksheet = writer.sheets["Scores"]
            bold_format = workbook.add_format({"bold": True})

            worksheet.write("J1", "Engine", bold_format)
            worksheet.write("K1", report.engine)
            worksheet.write("J2", "Run", bold_format)
            worksheet.write("K2", report.run_id)
            worksheet.write("J4", "Metric", bold_format)
            worksheet.write("K4", "Mean", bold_format)
            worksheet.write("L4", "Median", bold_format)
            worksheet.write("M4", "Stddev", bold_format)
            per_metric = report.aggregates.get("per_metric", {})
            for row, metric in enumerate(("cosine", "crystal_bleu"), start=4):
                summary = per_metric.get(metric, {})
                worksheet.write(row, 9, metric, bold_format)
                worksheet.write(row, 10, summary.get("mean", 0.0))
                worksheet.write(row, 11, summary.get("median", 0.0))
                worksheet.write(row, 12, summary.get("stddev", 0.0))
            worksheet.write("J8", "Lint pass rate", bold_format)
            worksheet.write("K8", report.aggregates.get("lint_pass_rate", 0.0))
            worksheet.write("J9", "Exact match rate", bold_format)
            worksheet.write("K9", report.aggregates.get("exact_match_rate", 0.0))

            if n:
                chart = workbook.add_chart({"type": "line"})
                for column, label in ((2, "Cosine"), (3, "CrystalBLEU")):
                    chart.add_series({
                        "name": label,
                        "categories": ["Scores", 1, 0, n, 0],
                        "values": ["Scores", 1, column, n, column],
                    })
                chart.set_title({"name": f"{report.engine} per-pair scores"})
                chart.set_x_axis({"name": "Pair"})
                chart.set_y_axis({"name": "Score", "min": 0, "max": 1})
                worksheet.insert_chart("J12", chart)

            for i, col in enumerate(df.columns):
                width = max(df[col].astype(str).map(len).max() if n else 0, len(col)) + 2
                worksheet.set_column(i, i, width)
    except OSError as exc:
        raise CigrateError("E_IO", f"failed to write workbook {out}: {exc}") from exc

    logger.info(f"Workbook saved to: {out}")
    return out


# -----------------------------
# Ingest
# -----------------------------
def _workflow_files(project: Path) -> List[Path]:
    workflows = project / WORKFLOWS_DIR
    if not workflows.is_dir():
        return []
    return sorted(p for p in workflows.iterdir() if p.is_file() and p.suffix in WORKFLOW_SUFFIXES)


def _read_split_file(path: Path) -> Dict[str, Split]:
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise CigrateError("E_BAD_SPLIT", f"split file must map pair_id to split: {path}")
        return {str(k): ensure_split(v) for k, v in data.items()}

    df = pd.read_csv(path, dtype=str)
    missing = {"pair_id", "split"} - set(df.columns)
    if missing:
        raise CigrateError("E_BAD_SPLIT", f"split file {path} lacks column(s) {sorted(missing)}")
    return {row.pair_id: ensure_split(row.split) for row in df.itertuples(index=False)}


def seeded_split(pair_ids: Sequence[str], seed: int, test_fraction: float) -> Dict[str, Split]:
    if not 0.0 <= test_fraction <= 1.0:
        raise CigrateError("E_BAD_PARAMETER", f"test_fraction must be in [0, 1], got {test_fraction}")
    shuffled = sorted(pair_ids)
    random.Random(seed).shuffle(shuffled)
    n_test = round(test_fraction * len(shuffled))
    test = set(shuffled[:n_test])
    return {pair_id: Split.TEST if pair_id in test else Split.TRAIN for pair_id in sorted(pair_ids)}


def ingest(
    source_dir: Union[str, Path],
    out_dir: Union[str, Path],
    seed: int = DEFAULT_SPLIT_SEED,
    test_fraction: float = DEFAULT_TEST_FRACTION,
    split_file: Optional[Union[str, Path]] = None,
) -> CorpusManifest:
    """Build <out_dir> (manifest + pairs) from a tree with one directory per project."""
    source_dir, out_dir = Path(source_dir), Path(out_dir)
    if not source_dir.is_dir():
        raise CigrateError("E_IO", f"not a directory: {source_dir}")

    travis_only = gha_only = 0
    dual: Dict[str, Tuple[Path, Path]] = {}
    for project in sorted(p for p in source_dir.iterdir() if p.is_dir()):
        travis = project / TRAVIS_FILE
        workflows = _workflow_files(project)
        if travis.is_file() and workflows:
            dual[project.name] = (travis, workflows[0])
        elif travis.is_file():
            travis_only += 1
        elif workflows:
            gha_only += 1

    logger.info(f"Ingest {source_dir}: {travis_only} Travis-only, {gha_only} GHA-only, {len(dual)} dual.")

    if split_file is not None:
        assignment = _read_split_file(Path(split_file))
        unknown = sorted(set(dual) - set(assignment))
        if unknown:
            raise CigrateError("E_BAD_SPLIT", f"split file has no entry for {len(unknown)} pair(s), e.g. {unknown[0]}")
        assignment = {pair_id: assignment[pair_id] for pair_id in sorted(dual)}
        recorded_seed = None
    else:
        assignment = seeded_split(list(dual), seed, test_fraction)
        recorded_seed = seed

    try:
        for pair_id, (travis, workflow) in dual.items():
            pair_dir = out_dir / PAIRS_DIRNAME / pair_id
            pair_dir.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(travis, pair_dir / PAIR_FILES[CiDialect.TRAVIS])
            shutil.copyfile(workflow, pair_dir / PAIR_FILES[CiDialect.GHA])
    except OSError as exc:
        raise CigrateError("E_IO", f"failed to copy pairs into {out_dir}: {exc}") from exc

    manifest = CorpusManifest(
        counts={"travis_only": travis_only, "gha_only": gha_only, "dual": len(dual)},
        split_assignment=assignment,
        sources={pair_id: CiDialect.TRAVIS for pair_id in dual},
        split_seed=recorded_seed,
    )
    write_manifest(out_dir, manifest)
    return manifest
