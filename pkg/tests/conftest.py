import json
import textwrap
from pathlib import Path

import pytest

from cigrate.config_model import CiDialect, parse_config
from cigrate.corpus import FIXTURE_CORPUS_DIR


def _parse(text: str, dialect: CiDialect):
    return parse_config(textwrap.dedent(text).lstrip("\n").encode("utf-8"), dialect)


@pytest.fixture
def travis():
    """Parse an indented Travis snippet."""
    return lambda text: _parse(text, CiDialect.TRAVIS)


@pytest.fixture
def gha():
    """Parse an indented GitHub Actions snippet."""
    return lambda text: _parse(text, CiDialect.GHA)


@pytest.fixture
def fixture_corpus_dir() -> Path:
    return FIXTURE_CORPUS_DIR


@pytest.fixture
def make_corpus(tmp_path):
    """Write a corpus directory: {pair_id: (travis_text, gha_text, split)} -> root path."""

    def build(pairs, root=None, counts=None):
        root = Path(root or tmp_path / "corpus")
        for pair_id, (travis_text, gha_text, _) in pairs.items():
            pair_dir = root / "pairs" / pair_id
            pair_dir.mkdir(parents=True, exist_ok=True)
            (pair_dir / "travis.yml").write_text(textwrap.dedent(travis_text).lstrip("\n"), encoding="utf-8")
            (pair_dir / "gha.yml").write_text(textwrap.dedent(gha_text).lstrip("\n"), encoding="utf-8")
        manifest = {
            "schema_version": "1",
            "counts": counts or {"travis_only": 0, "gha_only": 0, "dual": len(pairs)},
            "split_assignment": {pair_id: split for pair_id, (_, _, split) in pairs.items()},
            "sources": {},
            "split_seed": None,
        }
        root.mkdir(parents=True, exist_ok=True)
        (root / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
        return root

    return build
