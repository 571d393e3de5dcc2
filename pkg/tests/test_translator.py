import random

import pytest

from cigrate.config_model import CiDialect, RawConfig, as_text, as_text_list, from_python
from cigrate.errors import CigrateError
from cigrate.normalizer import normalize
from cigrate.translator import (
    PackageInstall,
    Run,
    SetupLanguage,
    StepCondition,
    WarningCode,
    lower_gha_to_ir,
    lower_travis_to_ir,
    migrate_rules,
    raise_ir_to_gha,
    slugify,
)
from cigrate.validators import lint_gha, lint_travis

from .generators import random_gha, random_gha_dict, random_travis, random_travis_dict


def _codes_by_path(result):
    return {warning.path: warning.code for warning in result.warnings}


def _step(job, index):
    return job.get("steps").items[index]


def _run_steps(ir):
    return {
        job.id: [
            (step.kind.command if isinstance(step.kind, Run) else step.kind.packages, step.condition)
            for step in job.steps
            if isinstance(step.kind, (Run, PackageInstall))
        ]
        for job in ir.jobs
    }


# -----------------------------
# Travis -> GHA
# -----------------------------
def test_java_project(travis):
    result = migrate_rules(
        travis(
            """
            language: java
            jdk: openjdk11
            script: mvn -B verify
            """
        ),
        "gha",
    )
    document = result.output.document
    assert as_text(document.get("name")) == "CI"
    assert as_text_list(document.get("on")) == ["push", "pull_request"]

    build = document.get("jobs").get("build")
    assert as_text(build.get("runs-on")) == "ubuntu-latest"
    assert "needs" not in build
    assert as_text(_step(build, 0).get("uses")) == "actions/checkout@v4"
    setup = _step(build, 1)
    assert as_text(setup.get("uses")) == "actions/setup-java@v4"
    assert as_text(setup.get("with").get("java-version")) == "11"
    assert as_text(setup.get("with").get("distribution")) == "temurin"
    assert as_text(_step(build, 2).get("run")) == "mvn -B verify"

    assert _codes_by_path(result) == {"jdk": WarningCode.APPROX_VALUE}
    assert 'java-version: "11"' in result.output.serialize()


def test_version_list_becomes_matrix(travis):
    result = migrate_rules(travis("language: node_js\nnode_js: ['18', '20']\nscript: npm test\n"), CiDialect.GHA)
    build = result.output.document.get("jobs").get("build")
    assert as_text_list(build.get("strategy").get("matrix").get("node_js")) == ["18", "20"]
    assert as_text(_step(build, 1).get("with").get("node-version")) == "${{ matrix.node_js }}"


def test_env_rows_become_matrix_env(travis):
    result = migrate_rules(
        travis(
            """
            language: python
            env:
              global:
                - CI_MODE=strict
              jobs:
                - DB=sqlite
                - DB=postgres
            script: pytest
            """
        ),
        "gha",
    )
    document = result.output.document
    assert as_text(document.get("env").get("CI_MODE")) == "strict"
    build = document.get("jobs").get("build")
    rows = build.get("strategy").get("matrix").get("env").items
    assert [as_text(row.get("DB")) for row in rows] == ["sqlite", "postgres"]
    assert as_text(build.get("env").get("DB")) == "${{ matrix.env.DB }}"
    assert lint_gha(result.output.as_raw()).passed


def test_after_phases_get_conditions(travis):
    result = migrate_rules(
        travis(
            """
            language: generic
            script: make
            after_success: bash upload.sh
            after_failure:
              - cat build.log
            after_script: make clean
            """
        ),
        "gha",
    )
    steps = result.output.document.get("jobs").get("build").get("steps").items
    conditions = {as_text(step.get("run")): as_text(step.get("if")) for step in steps if "run" in step}
    assert conditions == {
        "make": None,
        "bash upload.sh": "success()",
        "cat build.log": "failure()",
        "make clean": "always()",
    }


def test_cache_and_apt(travis):
    result = migrate_rules(
        travis(
            """
            language: java
            cache:
              directories:
                - $HOME/.m2
            addons:
              apt:
                packages: [graphviz]
            script: mvn test
            """
        ),
        "gha",
    )
    steps = result.output.document.get("jobs").get("build").get("steps").items
    cache = next(step for step in steps if as_text(step.get("uses")) == "actions/cache@v4")
    assert as_text(cache.get("with").get("path")) == "$HOME/.m2"
    assert as_text(cache.get("with").get("key")) == "cache-build"
    assert "sudo apt-get update && sudo apt-get install -y graphviz" in [as_text(step.get("run")) for step in steps]
    assert _codes_by_path(result)["cache"] is WarningCode.APPROX_VALUE


def test_untranslatable_keys_warn_once_each(travis):
    result = migrate_rules(
        travis(
            """
            language: ruby
            services:
              - mysql
              - docker
            script: rake
            deploy:
              provider: pages
            notifications:
              email: false
            import: shared/base.yml
            sudo: required
            """
        ),
        "gha",
    )
    assert _codes_by_path(result) == {
        "language": WarningCode.NO_EQUIVALENT,
        "services[0]": WarningCode.NO_EQUIVALENT,
        "services[1]": WarningCode.PREINSTALLED,
        "deploy": WarningCode.NO_EQUIVALENT,
        "notifications": WarningCode.NO_EQUIVALENT,
        "import": WarningCode.IMPORT_UNSUPPORTED,
        "sudo": WarningCode.DROPPED_KEY,
    }
    assert str(result.warnings[0]).startswith("W_")


def test_stages_chain_needs(travis):
    result = migrate_rules(
        travis(
            """
            language: shell
            stages: [test, publish]
            jobs:
              include:
                - stage: test
                  name: unit
                  script: make test
                - name: lint
                  script: make lint
                - stage: publish
                  name: pages
                  script: make docs
            """
        ),
        "gha",
    )
    jobs = result.output.document.get("jobs")
    assert jobs.keys() == ["unit", "lint", "pages"]
    assert "needs" not in jobs.get("unit")
    assert "needs" not in jobs.get("lint")
    assert as_text_list(jobs.get("pages").get("needs")) == ["unit", "lint"]


def test_named_allow_failure(travis):
    result = migrate_rules(
        travis(
            """
            language: shell
            jobs:
              include:
                - name: flaky
                  script: ./flaky.sh
              allow_failures:
                - name: flaky
            """
        ),
        "gha",
    )
    job = result.output.document.get("jobs").get("flaky")
    assert as_text(job.get("continue-on-error")) == "true"


def test_branches_become_push_filter(travis):
    result = migrate_rules(travis("language: go\nscript: go test ./...\nbranches:\n  only: [main]\n"), "gha")
    on = result.output.document.get("on")
    assert on.keys() == ["push", "pull_request"]
    assert as_text_list(on.get("push").get("branches")) == ["main"]
    assert len(on.get("pull_request")) == 0


def test_no_runnable_content(travis):
    with pytest.raises(CigrateError) as excinfo:
        migrate_rules(travis("language: java\njdk: openjdk17\n"), "gha")
    assert excinfo.value.code == "E_EMPTY_PIPELINE"


def test_same_dialect_rejected(travis, gha):
    with pytest.raises(CigrateError) as excinfo:
        migrate_rules(travis("script: make\n"), "travis")
    assert excinfo.value.code == "E_SAME_DIALECT"
    with pytest.raises(CigrateError):
        migrate_rules(gha("on: push\njobs: {}\n"), CiDialect.GHA)


# -----------------------------
# GHA -> Travis
# -----------------------------
def test_needs_become_stages(gha):
    result = migrate_rules(
        gha(
            """
            on: push
            jobs:
              lint:
                runs-on: ubuntu-latest
                steps:
                  - uses: actions/checkout@v4
                  - run: make lint
              test:
                needs: lint
                runs-on: macos-latest
                steps:
                  - run: make test
            """
        ),
        "travis",
    )
    document = result.output.document
    assert as_text_list(document.get("stages")) == ["test", "stage-2"]
    include = document.get("jobs").get("include").items
    assert [as_text(entry.get("name")) for entry in include] == ["lint", "test"]
    assert [as_text(entry.get("stage")) for entry in include] == ["test", "stage-2"]
    assert as_text(include[1].get("os")) == "osx"
    assert as_text_list(include[0].get("script")) == ["make lint"]
    assert "branches" not in document
    assert lint_travis(result.output.as_raw()).passed


def test_setup_and_matrix_to_travis(gha):
    result = migrate_rules(
        gha(
            """
            on:
              push:
                branches: [main]
            jobs:
              build:
                runs-on: ubuntu-latest
                continue-on-error: true
                strategy:
                  matrix:
                    version: ["11", "17"]
                steps:
                  - uses: actions/setup-java@v4
                    with:
                      java-version: ${{ matrix.version }}
                      distribution: temurin
                  - run: mvn verify
                  - if: failure()
                    run: cat target/*.log
            """
        ),
        "travis",
    )
    document = result.output.document
    assert as_text(document.get("language")) == "java"
    assert as_text_list(document.get("jdk")) == ["openjdk11", "openjdk17"]
    assert as_text_list(document.get("script")) == ["mvn verify"]
    assert as_text_list(document.get("after_failure")) == ["cat target/*.log"]
    assert as_text_list(document.get("branches").get("only")) == ["main"]
    allow = document.get("jobs").get("allow_failures").items
    assert as_text(allow[0].get("os")) == "linux"
    assert _codes_by_path(result) == {"jobs.build.steps[0].with.distribution": WarningCode.DROPPED_KEY}


def test_unknown_action_warns_once(gha):
    result = migrate_rules(
        gha(
            """
            on: [push]
            jobs:
              b:
                runs-on: ubuntu-latest
                steps:
                  - run: make
                  - uses: codecov/codecov-action@v4
            """
        ),
        "travis",
    )
    assert [str(w) for w in result.warnings if w.path == "jobs.b.steps[1]"] == [
        "W_UNKNOWN_ACTION jobs.b.steps[1]: action 'codecov/codecov-action@v4' has no rule"
    ]


def test_action_only_workflow_is_empty_for_travis(gha):
    config = gha(
        """
        on: push
        jobs:
          b:
            runs-on: ubuntu-latest
            steps:
              - uses: actions/checkout@v4
              - uses: github/codeql-action/init@v3
        """
    )
    with pytest.raises(CigrateError) as excinfo:
        migrate_rules(config, "travis")
    assert excinfo.value.code == "E_EMPTY_PIPELINE"


def test_pinned_runner_is_approximated(gha):
    result = migrate_rules(
        gha("on: push\njobs:\n  b:\n    runs-on: ubuntu-22.04\n    steps:\n      - run: make\n"), "travis"
    )
    assert _codes_by_path(result) == {"jobs.b.runs-on": WarningCode.APPROX_RUNNER}


def test_slugify():
    assert slugify("Unit Tests (JDK 17)") == "unit-tests-jdk-17"
    assert slugify("123") == "job-123"
    assert slugify("!!!") == "job"


# -----------------------------
# Generated configs
# -----------------------------
def test_generated_travis_migrates_to_valid_workflows():
    rng = random.Random(7)
    for _ in range(500):
        config = random_travis(rng)
        result = migrate_rules(config, "gha")
        report = lint_gha(result.output.as_raw())
        assert report.passed, (config.document, [str(d) for d in report.errors])
        paths = [warning.path for warning in result.warnings]
        assert len(paths) == len(set(paths))


def test_generated_workflows_migrate_to_valid_travis():
    rng = random.Random(11)
    for _ in range(500):
        config = random_gha(rng)
        result = migrate_rules(config, "travis")
        report = lint_travis(result.output.as_raw())
        assert report.passed, (config.document, [str(d) for d in report.errors])


def test_run_commands_survive_travis_gha_travis_lowering():
    rng = random.Random(3)
    for _ in range(300):
        ir = lower_travis_to_ir(normalize(random_travis(rng)))
        workflow = raise_ir_to_gha(ir)
        again = lower_gha_to_ir(workflow)
        assert _run_steps(again) == _run_steps(ir)


def test_setup_versions_survive_round_trip(travis):
    ir = lower_travis_to_ir(normalize(travis("language: python\npython: ['3.11', '3.12']\nscript: pytest\n")))
    again = lower_gha_to_ir(raise_ir_to_gha(ir))
    setup = next(step.kind for step in again.jobs[0].steps if isinstance(step.kind, SetupLanguage))
    assert setup == SetupLanguage("python", None, "python")
    assert [as_text(v) for v in again.jobs[0].matrix.dimensions["python"]] == ["3.11", "3.12"]
    assert again.jobs[0].steps[-1].condition is None
    assert StepCondition("failure") is StepCondition.ON_FAILURE


def test_apt_like_script_line_stays_a_command(travis):
    ir = lower_travis_to_ir(
        normalize(travis("language: python\nscript:\n  - sudo apt-get update && sudo apt-get install -y graphviz\n  - pytest\n"))
    )
    again = lower_gha_to_ir(raise_ir_to_gha(ir))
    assert _run_steps(again) == _run_steps(ir)
    assert [command for command, _ in _run_steps(again)["build"]] == [
        "sudo apt-get update && sudo apt-get install -y graphviz",
        "pytest",
    ]


def test_only_named_apt_steps_become_addons(gha):
    result = migrate_rules(
        gha(
            """
            on: push
            jobs:
              b:
                runs-on: ubuntu-latest
                steps:
                  - name: Install apt packages
                    run: sudo apt-get update && sudo apt-get install -y libssl-dev
                  - run: sudo apt-get update && sudo apt-get install -y graphviz
            """
        ),
        "travis",
    )
    document = result.output.document
    assert as_text_list(document.get("addons").get("apt").get("packages")) == ["libssl-dev"]
    assert as_text_list(document.get("script")) == ["sudo apt-get update && sudo apt-get install -y graphviz"]


def test_include_job_takes_first_value_of_root_lists(travis):
    result = migrate_rules(
        travis(
            """
            language: node_js
            node_js: ["18", "20"]
            os: [linux, osx]
            script: npm test
            jobs:
              include:
                - stage: deploy
                  script: npm publish
            """
        ),
        "gha",
    )
    jobs = result.output.document.get("jobs")
    build, deploy = jobs.get("build"), jobs.get("deploy")
    assert as_text_list(build.get("strategy").get("matrix").get("os")) == ["ubuntu-latest", "macos-latest"]
    assert "strategy" not in deploy
    assert as_text(deploy.get("runs-on")) == "ubuntu-latest"
    setup = next(step for step in deploy.get("steps").items if as_text(step.get("uses")) == "actions/setup-node@v4")
    assert as_text(setup.get("with").get("node-version")) == "18"


@pytest.mark.parametrize("labels", [["ubuntu-latest", "ubuntu-22.04"], ["ubuntu-latest", 3]])
def test_matrix_os_collapses_to_distinct_travis_names(gha, labels):
    result = migrate_rules(
        gha(
            f"""
            on: push
            jobs:
              b:
                runs-on: ${{{{ matrix.os }}}}
                strategy:
                  matrix:
                    os: {labels}
                steps:
                  - run: make
            """
        ),
        "travis",
    )
    assert as_text_list(result.output.document.get("os")) == ["linux"]


# -----------------------------
# Warning completeness
# -----------------------------
TRAVIS_MAPPED = {
    "language", "jdk", "node_js", "python", "go", "rust", "os", "env", "cache", "addons",
    "before_install", "install", "before_script", "script", "after_success", "after_failure", "after_script",
    "branches", "jobs", "stages",
}
TRAVIS_JOBS_MAPPED = {"include", "exclude", "allow_failures"}
GHA_INPUTS_MAPPED = {"java-version", "node-version", "python-version", "go-version", "path", "key"}
GHA_ACTIONS_MAPPED = {
    "actions/checkout", "actions/cache", "actions/setup-java", "actions/setup-node", "actions/setup-python", "actions/setup-go",
}


def _covered(paths, path):
    return path in paths or any(p.startswith(path + ".") or p.startswith(path + "[") for p in paths)


def test_every_unmapped_travis_key_has_one_warning():
    rng = random.Random(23)
    for _ in range(400):
        doc = random_travis_dict(rng)
        result = migrate_rules(RawConfig(CiDialect.TRAVIS, from_python(doc)), "gha")
        paths = [warning.path for warning in result.warnings]
        assert len(paths) == len(set(paths))
        for key in doc:
            if key not in TRAVIS_MAPPED:
                assert _covered(paths, key), (key, paths)
        for key in doc.get("jobs", {}):
            if key not in TRAVIS_JOBS_MAPPED:
                assert _covered(paths, f"jobs.{key}"), (key, paths)


def test_every_unmapped_workflow_part_has_one_warning():
    rng = random.Random(29)
    for _ in range(400):
        doc = random_gha_dict(rng)
        result = migrate_rules(RawConfig(CiDialect.GHA, from_python(doc)), "travis")
        paths = [warning.path for warning in result.warnings]
        assert len(paths) == len(set(paths))
        for job_id, job in doc["jobs"].items():
            for index, step in enumerate(job["steps"]):
                step_path = f"jobs.{job_id}.steps[{index}]"
                action = step.get("uses", "").split("@")[0]
                if action and action not in GHA_ACTIONS_MAPPED:
                    assert step_path in paths, (step_path, paths)
                for key in step.get("with", {}):
                    if key not in GHA_INPUTS_MAPPED:
                        assert _covered(paths, f"{step_path}.with.{key}"), (step_path, key, paths)
