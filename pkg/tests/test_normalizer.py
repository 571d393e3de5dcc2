import copy
import random

import pytest
import yaml

from cigrate.config_model import CiDialect, RawConfig, parse_config, serialize_document, from_python
from cigrate.metrics import cosine_similarity, crystal_bleu
from cigrate.normalizer import (
    FeatureCategory,
    categorize_features,
    classify_key,
    normalize,
    tokenize,
)

from .generators import random_gha_dict, random_travis_dict


def test_prunes_inert_values_and_sorts_root(travis):
    config = travis(
        """
        script: make test
        notifications: {}
        language: c
        addons:
          apt:
            packages: []
        env: ~
        """
    )
    normalized = normalize(config)
    assert normalized.document.keys() == ["language", "script"]
    assert normalized.serialize() == "language: c\nscript: make test\n"


def test_unknown_root_keys_sort_after_known_ones(travis):
    normalized = normalize(travis("zeta: 1\nscript: x\nalpha: 2\nlanguage: go\n"))
    assert normalized.document.keys() == ["language", "script", "alpha", "zeta"]


def test_gha_events_survive_with_empty_values(gha):
    normalized = normalize(
        gha(
            """
            jobs:
              b:
                runs-on: ubuntu-latest
                steps:
                  - run: make
            on:
              push:
              workflow_dispatch: {}
            name: CI
            """
        )
    )
    assert normalized.document.keys() == ["name", "on", "jobs"]
    assert normalized.serialize().startswith("name: CI\non:\n  push: {}\n  workflow_dispatch: {}\n")


def test_null_and_bool_spellings_collapse(travis):
    normalized = normalize(travis("language: java\nsudo: TRUE\nscript: [make]\ngroup: Null\n"))
    text = normalized.serialize()
    assert "sudo: true" in text
    assert "group" not in text


def test_tokenize():
    tokens = tokenize('script:\n  - "mvn -B verify"\n  - echo $HOME/.m2\n').tokens
    assert tokens == ("script", "-", "mvn", "-B", "verify", "-", "echo", "$HOME/.m2")


def test_travis_features(travis):
    features = categorize_features(
        travis(
            """
            language: java
            jdk: [openjdk11]
            env:
              - A=1
            cache: maven
            script: mvn test
            after_success: bash upload.sh
            deploy:
              provider: pages
            services: [mysql]
            """
        )
    )
    assert features == {
        FeatureCategory.ENVIRONMENT_VARIABLES,
        FeatureCategory.CACHING,
        FeatureCategory.SCRIPTS,
        FeatureCategory.DEPLOYMENT_STEPS,
        FeatureCategory.SERVICES,
    }


def test_gha_features(gha):
    features = categorize_features(
        gha(
            """
            on: push
            jobs:
              build:
                runs-on: ubuntu-latest
                strategy:
                  matrix:
                    java: ["11", "17"]
                steps:
                  - uses: actions/cache@v4
                    with:
                      path: ~/.m2
                      key: m2
                  - run: mvn verify
                  - uses: peaceiris/actions-gh-pages@v3
            """
        )
    )
    assert features == {
        FeatureCategory.TRIGGERS,
        FeatureCategory.OS_TARGETS,
        FeatureCategory.MATRIX_BUILD,
        FeatureCategory.CACHING,
        FeatureCategory.SCRIPTS,
        FeatureCategory.DEPLOYMENT_STEPS,
    }


def test_classify_key_defaults_to_other():
    assert classify_key(CiDialect.TRAVIS, "jdk") is FeatureCategory.OTHER
    assert classify_key(CiDialect.GHA, "strategy") is FeatureCategory.MATRIX_BUILD


def _generated_documents(count):
    rng = random.Random(20240611)
    for i in range(count):
        if i % 2:
            yield CiDialect.GHA, random_gha_dict(rng)
        else:
            yield CiDialect.TRAVIS, random_travis_dict(rng)


def test_normalize_is_idempotent():
    for dialect, doc in _generated_documents(1000):
        config = parse_config(serialize_document(from_python(doc)).encode("utf-8"), dialect)
        once = normalize(config)
        twice = normalize(once)
        assert twice.document == once.document
        assert twice.serialize() == once.serialize()


@pytest.mark.parametrize("seed", range(5))
def test_reformatting_changes_no_metric(seed):
    rng = random.Random(seed)
    for dialect, doc in _generated_documents(40):
        block = serialize_document(from_python(doc)).encode("utf-8")
        flow = yaml.safe_dump(doc, default_flow_style=True, sort_keys=False, width=10**6).encode("utf-8")
        a = normalize(parse_config(block, dialect))
        b = normalize(parse_config(flow, dialect))
        assert a.serialize() == b.serialize()

        reference = tokenize(normalize(parse_config(block, dialect)).serialize()).tokens
        other = list(reference)
        rng.shuffle(other)
        assert cosine_similarity(tokenize(a.serialize()).tokens, other) == cosine_similarity(
            tokenize(b.serialize()).tokens, other
        )
        assert crystal_bleu(tokenize(a.serialize()).tokens, other) == crystal_bleu(
            tokenize(b.serialize()).tokens, other
        )


def test_empty_keys_do_not_count_as_features(travis):
    config = travis("language: java\nscript: mvn test\nenv:\ncache: {}\nservices: []\n")
    assert categorize_features(config) == {FeatureCategory.SCRIPTS}
    assert categorize_features(normalize(config)) == {FeatureCategory.SCRIPTS}


def _with_empty_keys(dialect, doc):
    noisy = copy.deepcopy(doc)
    if dialect is CiDialect.TRAVIS:
        for key, empty in (("cache", {}), ("services", []), ("notifications", None), ("env", {"global": []})):
            noisy.setdefault(key, empty)
        noisy.setdefault("addons", {"apt": {"packages": []}})
    else:
        noisy.setdefault("env", {})
        first_job = next(iter(noisy["jobs"].values()))
        first_job.setdefault("services", {})
        first_job.setdefault("env", None)
    return noisy


def test_categories_ignore_formatting_and_empty_values():
    for dialect, doc in _generated_documents(600):
        raw = RawConfig(dialect, from_python(_with_empty_keys(dialect, doc)))
        normalized = normalize(raw)
        assert categorize_features(raw) == categorize_features(normalized) == normalized.feature_set
        assert categorize_features(raw) == categorize_features(RawConfig(dialect, from_python(doc)))


def test_tokens_survive_requoting():
    for dialect, doc in _generated_documents(400):
        canonical = normalize(parse_config(serialize_document(from_python(doc)).encode("utf-8"), dialect))
        ordered = {key: doc[key] for key in canonical.document.keys()}
        text = yaml.safe_dump(ordered, sort_keys=False, width=10**6)
        renormalized = normalize(parse_config(text.encode("utf-8"), dialect))
        assert tokenize(text) == tokenize(renormalized.serialize())
        assert tokenize(text) == tokenize(canonical.serialize())
