"""Automated environment deployment for source repositories.

Derives a structured bootstrap script and a set of validation commands from
a repository's files, then deploys into a sandbox, repairing failures until
the environment installs, passes its tests and starts up.

The heavy lifting lives in the compiled extension; this module converts its
JSON surface into plain dicts.
"""

import json as _json

from ._core import Error, version as _version

from . import _core

__all__ = [
    "Error",
    "classify",
    "deploy",
    "emit_dockerfile",
    "generate_script",
    "mine_pyramid",
    "render_trace",
    "summarize",
]

__version__ = _version()


def _as_json_text(value, default=""):
    if value is None:
        return default
    if isinstance(value, str):
        return value
    return _json.dumps(value)


def classify(command):
    """Readiness level a shell command validates.

    Returns a dict with "level" ("installable", "testable", "runnable" or
    None when the command is not a validation command) and "reason".
    """
    return _json.loads(_core.classify(str(command)))


def generate_script(repo, base_image="ubuntu:22.04"):
    """Bootstrap script and Dockerfile for a local repository.

    Returns a dict with "script", "dockerfile", "profile" (detected stack
    traits), "marker_files", "files_consulted" and "rounds_used".
    """
    return _json.loads(_core.generate_script(str(repo), base_image))


def mine_pyramid(repo):
    """Validation commands for a local repository, grouped by level.

    Returns a dict with "pyramid" (three lists of command entries),
    "rounds_used", "refinement_reason", "mined" and "rejected".
    """
    return _json.loads(_core.mine_pyramid(str(repo)))


def deploy(repo, simulation=None, config=None, repo_id=""):
    """Full generate/mine/deploy pass against a simulated sandbox.

    simulation is a rule table (list of {"match", "outcomes"} dicts or JSON
    text); an empty table makes every command succeed. config is an
    orchestrator configuration dict or JSON text; None keeps the defaults.
    Returns the deployment report as a dict.
    """
    return _json.loads(
        _core.deploy(
            str(repo),
            _as_json_text(simulation),
            _as_json_text(config),
            repo_id,
        )
    )


def render_trace(report):
    """Stable line-per-step text rendering of a deployment report."""
    return _core.render_report_trace(_as_json_text(report))


def summarize(reports):
    """Cross-run rollup of deployment reports (best run per repository)."""
    return _json.loads(_core.summarize(_json.dumps(list(reports))))


def emit_dockerfile(script, base_image="ubuntu:22.04"):
    """Container recipe that bakes the given script text in."""
    return _core.emit_dockerfile(script, base_image)
