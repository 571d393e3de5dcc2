import random

import pytest

from cigrate.config_model import (
    CiDialect,
    RawConfig,
    ScalarKind,
    YamlMapping,
    YamlScalar,
    YamlSequence,
    as_text,
    as_text_list,
    detect_dialect,
    ensure_dialect,
    from_python,
    parse_config,
    read_config,
    serialize_config,
    serialize_document,
)
from cigrate.errors import CigrateError, ParseError

from .generators import random_gha_dict, random_travis_dict


def test_versions_keep_their_text():
    config = parse_config(b"language: python\npython:\n  - 3.10\n  - 3.9\n", "travis")
    versions = config.document.get("python")
    assert [item.text for item in versions] == ["3.10", "3.9"]
    assert versions.items[0].kind is ScalarKind.FLOAT


def test_on_key_and_yes_are_strings():
    config = parse_config(b"on: push\nflag: yes\nreal: true\n", "gha")
    assert config.document.keys() == ["on", "flag", "real"]
    assert config.document.get("flag") == YamlScalar("yes", ScalarKind.STRING)
    assert config.document.get("real").kind is ScalarKind.BOOL


def test_anchors_and_merge_keys_are_expanded():
    text = b"base: &base\n  a: 1\n  b: 2\njob:\n  <<: *base\n  b: 3\n"
    job = parse_config(text, "travis").document.get("job")
    assert job.keys() == ["a", "b"]
    assert as_text(job.get("b")) == "3"


def test_style_is_presentation_only():
    a = parse_config(b"script: ['make', \"test\"]\n", "travis").document
    b = parse_config(b"script:\n  - make\n  - test\n", "travis").document
    assert a == b


def test_bom_is_accepted():
    config = parse_config(b"\xef\xbb\xbflanguage: java\n", "travis")
    assert config.document.keys() == ["language"]


@pytest.mark.parametrize(
    "data, code",
    [
        (b"a: 1\n---\nb: 2\n", "E_MULTI_DOC"),
        (b"- a\n- b\n", "E_ROOT_NOT_MAPPING"),
        (b"", "E_ROOT_NOT_MAPPING"),
        (b"a: 1\na: 2\n", "E_DUP_KEY"),
        (b"a: [1, 2\n", "E_YAML_SYNTAX"),
        (b"a: \xff\xfe\n", "E_UTF8"),
    ],
)
def test_parse_errors(data, code):
    with pytest.raises(ParseError) as excinfo:
        parse_config(data, "travis")
    assert excinfo.value.code == code


def test_syntax_error_carries_position():
    with pytest.raises(ParseError) as excinfo:
        parse_config(b"script:\n  - make\n  bad: [\n", "travis")
    assert excinfo.value.line is not None
    assert "line" in str(excinfo.value)


def test_duplicate_keys_rejected_in_node_tree():
    with pytest.raises(ParseError):
        YamlMapping((("a", YamlScalar("1")), ("a", YamlScalar("2"))))


def test_dialect_aliases():
    assert ensure_dialect("GitHub-Actions") is CiDialect.GHA
    assert ensure_dialect("travis-ci") is CiDialect.TRAVIS
    with pytest.raises(CigrateError) as excinfo:
        ensure_dialect("gitlab")
    assert excinfo.value.code == "E_BAD_DIALECT"


def test_detect_dialect():
    assert detect_dialect(b"on: push\njobs:\n  b:\n    runs-on: ubuntu-latest\n") is CiDialect.GHA
    assert detect_dialect(b"language: java\nscript: mvn test\n") is CiDialect.TRAVIS
    with pytest.raises(CigrateError) as excinfo:
        detect_dialect(b"foo: bar\n")
    assert excinfo.value.code == "E_AMBIGUOUS_DIALECT"


def test_read_config_detects_dialect(tmp_path):
    path = tmp_path / ".travis.yml"
    path.write_text("language: node_js\nnode_js: '20'\n", encoding="utf-8")
    config = read_config(path)
    assert config.dialect is CiDialect.TRAVIS
    assert config.source_path == str(path)
    assert config.byte_length == len(path.read_bytes())


def test_serialize_quotes_only_ambiguous_scalars():
    document = from_python({
        "on": {"push": {"branches": ["main"]}},
        "python": "3.10",
        "answer": "yes",
        "plain": "mvn -B verify",
        "flag": True,
    })
    text = serialize_document(document)
    assert text.startswith("on:\n")
    assert 'python: "3.10"' in text
    assert 'answer: "yes"' in text
    assert "plain: mvn -B verify" in text
    assert "flag: true" in text
    assert "  branches:\n      - main\n" in text


def test_serialize_multiline_as_literal_block():
    text = serialize_document(from_python({"run": "make\nmake test"}))
    assert text == "run: |-\n  make\n  make test\n"


def test_serialize_parse_keeps_document():
    original = parse_config(b"language: java\njdk: [openjdk11, openjdk17]\non: true\nx: 'on'\n", "travis")
    again = parse_config(serialize_config(original), "travis")
    assert again.document == original.document


def test_text_helpers():
    seq = YamlSequence((YamlScalar("a"), YamlScalar("null", ScalarKind.NULL), YamlScalar("b")))
    assert as_text_list(seq) == ["a", "b"]
    assert as_text_list(YamlScalar("x")) == ["x"]
    assert as_text(YamlMapping()) is None


AWKWARD_STRINGS = [
    "yes", "no", "on", "off", "~", "null", "true", "- x", "<<", " lead", "trail ", "3.10", "1e3", "0x1F",
    "#hash", "a: b", "{x}", "[y]", "*star", "&anchor", "!bang", "%pct", "@at", "multi\nline", "", "'single'", '"double"',
]


def test_serialize_then_parse_is_identity_on_generated_documents():
    rng = random.Random(31)
    for i in range(600):
        dialect = CiDialect.GHA if i % 2 else CiDialect.TRAVIS
        doc = random_gha_dict(rng) if dialect is CiDialect.GHA else random_travis_dict(rng)
        doc["x_awkward"] = rng.sample(AWKWARD_STRINGS, 4)
        doc["x_value"] = rng.choice(AWKWARD_STRINGS)
        config = RawConfig(dialect, from_python(doc))
        again = parse_config(serialize_config(config), dialect)
        assert again.document == config.document, serialize_config(config)
