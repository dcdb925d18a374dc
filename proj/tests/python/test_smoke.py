import os
import pathlib

import pytest

import envdeploy

FIXTURES = pathlib.Path(os.environ["ENVDEPLOY_FIXTURE_DIR"])
PYAPP = FIXTURES / "repos" / "pyapp"


def test_version_present():
    assert envdeploy.__version__


def test_classify_all_levels():
    assert envdeploy.classify("pip install -r requirements.txt")["level"] == "installable"
    assert envdeploy.classify("pytest")["level"] == "testable"
    assert envdeploy.classify("npm start")["level"] == "runnable"
    rejected = envdeploy.classify("ls -la")
    assert rejected["level"] is None
    assert rejected["reason"]


def test_generate_script_shape():
    out = envdeploy.generate_script(PYAPP)
    assert out["script"].startswith("#!/usr/bin/env bash")
    assert "pip install -r requirements.txt" in out["script"]
    assert out["dockerfile"].splitlines()[0] == "FROM ubuntu:22.04"
    assert "RUN bash ./setup.sh" in out["dockerfile"]
    assert "python" in out["profile"]
    assert out["rounds_used"] >= 1


def test_mine_pyramid_finds_documented_commands():
    out = envdeploy.mine_pyramid(PYAPP)
    install = [entry["cmd"] for entry in out["pyramid"]["installability"]]
    tests = [entry["cmd"] for entry in out["pyramid"]["testability"]]
    assert "pip install -r requirements.txt" in install
    assert "pytest" in tests


def test_deploy_clean_reaches_runnable():
    report = envdeploy.deploy(PYAPP, simulation=[])
    assert report["final_state"] == "runnable"
    assert report["repairs_applied"] == 0
    assert report["exhausted"] is False
    trace = envdeploy.render_trace(report)
    assert "final: runnable" in trace


def test_deploy_repairs_broken_script():
    simulation = [
        {
            "match": "#!*",
            "outcomes": [
                {"exit": 1, "stderr": "ModuleNotFoundError: No module named 'flask'"},
                {"exit": 0},
            ],
        }
    ]
    report = envdeploy.deploy(PYAPP, simulation=simulation)
    assert report["final_state"] == "runnable"
    assert report["repairs_applied"] == 1
    assert "pip install flask" in report["final_script"]


def test_summarize_counts_repos():
    report = envdeploy.deploy(PYAPP, simulation=[])
    summary = envdeploy.summarize([report])
    assert summary["runs"] == 1
    assert summary["repos"] == 1
    assert summary["repos_runnable"] == 1


def test_errors_surface_as_package_exception():
    with pytest.raises(envdeploy.Error):
        envdeploy.generate_script(FIXTURES / "repos" / "does-not-exist")
