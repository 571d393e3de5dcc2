import textwrap

import pytest
import requests

from cigrate.config_model import CiDialect, parse_config
from cigrate.corpus import EvalReport, load_corpus
from cigrate.errors import CigrateError
from cigrate.llm_backend import EndpointConfig
from cigrate.metrics import ScoreRecord, aggregate_scores
from cigrate.evaluation import (
    LLM_ENGINE,
    EvalSettings,
    compare_reports,
    direction_label,
    engine_name,
    parse_direction,
    plot_comparison,
    run_eval,
    trivially_shared_for,
)
from cigrate.translator import migrate_rules

TRAVIS_TO_GHA = (CiDialect.TRAVIS, CiDialect.GHA)
TRAVIS = """
language: node_js
node_js: "20"
script: npm test
"""


def _report(engine, scores, metric="cosine"):
    records = [ScoreRecord(pair_id, engine, **{metric: score}) for pair_id, score in scores.items()]
    return EvalReport.build(engine, "none", {}, records, created_at="2024-01-01T00:00:00+00:00")


def test_parse_direction():
    assert parse_direction("travis->gha") == TRAVIS_TO_GHA
    assert parse_direction("GHA:travis") == (CiDialect.GHA, CiDialect.TRAVIS)
    assert direction_label(parse_direction("travis,github-actions")) == "travis->gha"
    with pytest.raises(CigrateError) as excinfo:
        parse_direction("travis->travis")
    assert excinfo.value.code == "E_SAME_DIALECT"
    with pytest.raises(CigrateError):
        parse_direction("travis")


def test_engine_name():
    assert engine_name("rules") == "rules"
    assert engine_name("llm", "m1") == "llm:m1"
    with pytest.raises(CigrateError):
        engine_name("llm")
    with pytest.raises(CigrateError):
        engine_name("oracle")


def test_rules_eval_on_fixture_corpus(fixture_corpus_dir):
    corpus = load_corpus(fixture_corpus_dir)
    settings = EvalSettings(TRAVIS_TO_GHA)
    report = run_eval(corpus, settings)

    assert report.engine == "rules"
    assert report.template_id == "none"
    assert [record.pair_id for record in report.records] == [
        "p07-maven-after-success",
        "p08-gradle-os-matrix",
        "p09-node-stages",
        "p10-python-apt",
    ]
    assert all(record.failure is None and record.lint_passed for record in report.records)
    assert all(0.0 <= record.cosine <= 1.0 and 0.0 <= record.crystal_bleu <= 1.0 for record in report.records)
    assert report.aggregates == aggregate_scores(report.records)
    assert report.parameters["direction"] == "travis->gha"
    assert report.parameters["model"] is None
    assert report.manifest_hash == corpus.manifest.fingerprint()

    assert run_eval(corpus, settings).run_id == report.run_id


def test_exact_output_scores_one(make_corpus):
    reference = migrate_rules(
        parse_config(textwrap.dedent(TRAVIS).lstrip().encode("utf-8"), "travis"), "gha"
    ).output.serialize()
    corpus = load_corpus(make_corpus({"exact": (TRAVIS, reference, "test")}))

    record = run_eval(corpus, EvalSettings(TRAVIS_TO_GHA)).records[0]
    assert record.exact_match
    assert record.cosine == 1.0
    assert record.crystal_bleu == 1.0
    assert record.lint_passed


def test_unreachable_endpoint_scores_zero(mocker, fixture_corpus_dir):
    session = mocker.Mock()
    session.post.side_effect = requests.exceptions.ConnectionError("refused")
    endpoint = EndpointConfig("http://127.0.0.1:9", "key", max_attempts=2, backoff_seconds=0.0)
    settings = EvalSettings(TRAVIS_TO_GHA, engine=LLM_ENGINE, model="m1", endpoint=endpoint, in_flight=1)

    report = run_eval(load_corpus(fixture_corpus_dir), settings, session=session)

    assert report.engine == "llm:m1"
    assert report.template_id == "cigrate-v1"
    assert len(report.records) == 4
    assert {record.failure for record in report.records} == {"E_HTTP"}
    assert report.aggregates["per_metric"]["cosine"]["mean"] == 0.0
    assert session.post.call_count == 8


def test_no_test_pairs(make_corpus):
    corpus = load_corpus(make_corpus({"a": (TRAVIS, "on: push\njobs: {}\n", "train")}))
    with pytest.raises(CigrateError) as excinfo:
        run_eval(corpus, EvalSettings(TRAVIS_TO_GHA))
    assert excinfo.value.code == "E_EMPTY_SPLIT"


def test_trivially_shared_set(fixture_corpus_dir):
    corpus = load_corpus(fixture_corpus_dir)
    assert len(trivially_shared_for(corpus, EvalSettings(TRAVIS_TO_GHA, trivial_k=0))) == 0
    trivial = trivially_shared_for(corpus, EvalSettings(TRAVIS_TO_GHA, trivial_k=10))
    assert len(trivial) == 10
    assert ("-",) in trivial


# -----------------------------
# Comparison
# -----------------------------
def test_compare_small_example():
    a = _report("rules", {"p1": 0.9, "p2": 0.3, "p3": 0.8})
    b = _report("llm:m1", {"p1": 0.7, "p2": 0.4, "p3": 0.5, "p4": 1.0})
    comparison = compare_reports(a, b)

    assert comparison.pair_ids == ("p1", "p2", "p3")
    assert comparison.mean_a == pytest.approx(2.0 / 3)
    assert comparison.test.p_value == pytest.approx(0.5)
    assert comparison.test.n_effective == 3
    assert not comparison.no_difference


def test_self_comparison_has_no_difference(fixture_corpus_dir):
    report = run_eval(load_corpus(fixture_corpus_dir), EvalSettings(TRAVIS_TO_GHA))
    comparison = compare_reports(report, report, "crystal_bleu")
    assert comparison.no_difference
    assert comparison.mean_a == comparison.mean_b


def test_compare_errors():
    a = _report("rules", {"p1": 0.5})
    with pytest.raises(CigrateError) as excinfo:
        compare_reports(a, _report("rules", {"p2": 0.5}))
    assert excinfo.value.code == "E_NO_OVERLAP"
    with pytest.raises(CigrateError) as excinfo:
        compare_reports(a, a, metric="exact_match")
    assert excinfo.value.code == "E_BAD_PARAMETER"


def test_plot_comparison(tmp_path):
    comparison = compare_reports(_report("rules", {"p1": 0.9, "p2": 0.1}), _report("llm", {"p1": 0.2, "p2": 0.3}))
    path = plot_comparison(comparison, "rules", "llm", tmp_path / "plots" / "compare.html")
    assert "plotly" in path.read_text(encoding="utf-8").lower()
