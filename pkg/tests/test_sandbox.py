"""Unit tests for the sandbox: policy validation, the approval proof token,
secret injection, environment scrubbing, and subprocess execution."""

from __future__ import annotations

import os
import sys
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import approved
from toolsmith.approvals import (
    VERDICT_APPROVE,
    VERDICT_APPROVE_EDITED,
    VERDICT_REJECT,
    ApprovalDecision,
    code_review_request,
    source_hash,
)
from toolsmith.errors import (
    ApprovalMissing,
    InterpreterNotFound,
    MissingSecret,
    PolicyViolation,
)
from toolsmith.sandbox import (
    NETWORK_DENIED,
    STATUS_FAILED,
    STATUS_OUTPUT_TRUNCATED,
    STATUS_SUCCEEDED,
    STATUS_TIMED_OUT,
    ApprovedScript,
    ExecutionOutcome,
    Sandbox,
    SandboxPolicy,
    inject_secrets,
    required_api_names,
)

# -- policy ---------------------------------------------------------------------------


def test_policy_validates_bounds(tmp_path):
    with pytest.raises(ValueError):
        SandboxPolicy(workspace_root=tmp_path, timeout=0)
    with pytest.raises(ValueError):
        SandboxPolicy(workspace_root=tmp_path, max_output_bytes=0)
    with pytest.raises(ValueError):
        SandboxPolicy(workspace_root=tmp_path, network="mesh")
    policy = SandboxPolicy(workspace_root=str(tmp_path))
    assert isinstance(policy.workspace_root, Path)


def test_interpreter_resolution(tmp_path, monkeypatch):
    policy = SandboxPolicy(workspace_root=tmp_path)
    assert Path(policy.resolve_interpreter()).exists()

    monkeypatch.setenv("TOOLSMITH_PYTHON", sys.executable)
    assert SandboxPolicy(workspace_root=tmp_path).resolve_interpreter() == str(
        Path(sys.executable)
    ) or Path(SandboxPolicy(workspace_root=tmp_path).resolve_interpreter()).exists()

    bad = SandboxPolicy(workspace_root=tmp_path, interpreter="/no/such/python")
    with pytest.raises(InterpreterNotFound):
        bad.resolve_interpreter()


# -- outcome invariants ------------------------------------------------------------------


def test_outcome_status_must_match_fields():
    with pytest.raises(ValueError):
        ExecutionOutcome(
            status=STATUS_SUCCEEDED, exit_code=1, stdout="", stderr="", duration=0.1
        )
    with pytest.raises(ValueError):
        ExecutionOutcome(
            status=STATUS_FAILED, exit_code=0, stdout="", stderr="", duration=0.1
        )
    with pytest.raises(ValueError):
        ExecutionOutcome(
            status=STATUS_SUCCEEDED,
            exit_code=0,
            stdout="",
            stderr="",
            duration=0.1,
            truncated=True,
        )


def test_truncated_success_still_counts_as_ok():
    outcome = ExecutionOutcome(
        status=STATUS_OUTPUT_TRUNCATED,
        exit_code=0,
        stdout="x",
        stderr="",
        duration=0.1,
        truncated=True,
    )
    assert outcome.ok
    timed = ExecutionOutcome(
        status=STATUS_TIMED_OUT, exit_code=None, stdout="", stderr="", duration=1.0
    )
    assert not timed.ok
    assert timed.to_dict()["exit_code"] is None
    assert timed.to_dict()["artifacts"] == []


# -- approval proof token -----------------------------------------------------------------


def test_approved_script_rejects_tampered_bytes():
    script = approved("print('ok')\n")
    with pytest.raises(ApprovalMissing):
        ApprovedScript(source="print('evil')\n", source_hash=script.source_hash)


def test_from_decision_requires_matching_approved_request():
    request = code_review_request("s1", "print('ok')\n")
    other = code_review_request("s1", "print('ok')\n")
    approve = ApprovalDecision(other.id, VERDICT_APPROVE)
    with pytest.raises(ApprovalMissing):
        ApprovedScript.from_decision(request, approve)
    with pytest.raises(ApprovalMissing):
        ApprovedScript.from_decision(
            request, ApprovalDecision(request.id, VERDICT_REJECT)
        )


def test_from_decision_binds_to_edited_source():
    request = code_review_request("s1", "print('draft')\n")
    decision = ApprovalDecision(
        request.id, VERDICT_APPROVE_EDITED, edited_source="print('edited')\n"
    )
    script = ApprovedScript.from_decision(request, decision)
    assert script.source == "print('edited')\n"
    assert script.source_hash == source_hash("print('edited')\n")


# -- key placeholders -------------------------------------------------------------------


def test_required_api_names_dedupes_case_insensitively():
    source = (
        'a = "<<API_KEY:SerpAPI>>"\n'
        'b = "<<API_KEY:weather>>"\n'
        'c = "<<API_KEY:serpapi>>"\n'
    )
    assert required_api_names(source) == ["SerpAPI", "weather"]


def test_inject_secrets_is_name_insensitive():
    source = 'key = "<<API_KEY:SerpAPI>>"\n'
    injected = inject_secrets(source, {"SERPAPI": "sk-123"})
    assert injected == 'key = "sk-123"\n'


def test_inject_secrets_reports_every_missing_name():
    source = 'a = "<<API_KEY:serpapi>>"\nb = "<<API_KEY:weather>>"\n'
    with pytest.raises(MissingSecret) as excinfo:
        inject_secrets(source, {"weather": "w"})
    assert excinfo.value.api_names == ["serpapi"]


@given(
    names=st.lists(
        st.from_regex(r"[A-Za-z][A-Za-z0-9_]{0,8}", fullmatch=True),
        min_size=1,
        max_size=4,
        unique_by=lambda name: name.lower(),
    ),
    filler=st.text(alphabet="abc \n", max_size=20),
)
def test_injection_removes_every_placeholder(names, filler):
    source = filler + "".join(f'k = "<<API_KEY:{name}>>"\n' for name in names)
    secrets = {name: f"secret-{index}" for index, name in enumerate(names)}
    injected = inject_secrets(source, secrets)
    assert "<<API_KEY:" not in injected
    for value in secrets.values():
        assert value in injected


def test_injection_without_placeholders_is_identity():
    source = "print('no keys here')\n"
    assert inject_secrets(source, {"serpapi": "sk"}) == source


# -- environment scrubbing ------------------------------------------------------------------


def test_child_env_drops_everything_off_allowlist(tmp_path, monkeypatch):
    monkeypatch.setenv("OPENAI_API_KEY", "sk-live-secret")
    monkeypatch.setenv("AWS_SECRET_ACCESS_KEY", "aws-secret")
    policy = SandboxPolicy(
        workspace_root=tmp_path / "runs",
        extra_env={"SEARCH_API_ENDPOINT": "http://127.0.0.1:9/search"},
    )
    sandbox = Sandbox("env-session", policy)
    env = sandbox.child_env()
    assert "OPENAI_API_KEY" not in env
    assert "AWS_SECRET_ACCESS_KEY" not in env
    assert env["SEARCH_API_ENDPOINT"] == "http://127.0.0.1:9/search"
    assert env["PYTHONPATH"] == str(sandbox.packages_dir)
    assert env["PIP_TARGET"] == str(sandbox.packages_dir)
    sandbox.close()


# -- materialization and shredding ------------------------------------------------------------


def test_materialized_secret_files_are_shredded_on_close(tmp_path):
    policy = SandboxPolicy(workspace_root=tmp_path / "runs")
    sandbox = Sandbox("shred-session", policy)
    plain = sandbox.materialize_script("print('hello')\n", "draft")
    secret = sandbox.materialize_script(
        'key = "<<API_KEY:serpapi>>"\n', "run", secrets={"serpapi": "sk-live-42"}
    )
    assert plain.name == "draft_001.py"
    assert secret.name == "run_002.py"
    assert "sk-live-42" in secret.read_text()
    sandbox.close()
    assert plain.exists()  # no secret inside; kept for audit
    assert not secret.exists()


# -- execution -------------------------------------------------------------------------------


def test_execute_captures_stdout_and_exit_code(sandbox):
    outcome = sandbox.execute(approved("print('hello from the box')\n"))
    assert outcome.status == STATUS_SUCCEEDED
    assert outcome.exit_code == 0
    assert outcome.ok
    assert "hello from the box" in outcome.stdout
    assert outcome.artifacts == ()


def test_execute_with_relative_workspace_root(tmp_path, monkeypatch):
    # The child runs with cwd=workspace; a workspace root given relative
    # to *our* cwd must still resolve to the same script file.
    monkeypatch.chdir(tmp_path)
    sandbox = Sandbox("rel-session", SandboxPolicy(workspace_root=Path("runs")))
    try:
        outcome = sandbox.execute(approved("print('anchored')\n"))
    finally:
        sandbox.close()
    assert outcome.status == STATUS_SUCCEEDED
    assert "anchored" in outcome.stdout
    assert (tmp_path / "runs" / "rel-session" / "workspace").is_dir()


def test_execute_reports_failures_with_stderr(sandbox):
    outcome = sandbox.execute(approved("raise RuntimeError('boom')\n"))
    assert outcome.status == STATUS_FAILED
    assert outcome.exit_code == 1
    assert not outcome.ok
    assert "RuntimeError: boom" in outcome.stderr


def test_execute_lists_files_created_in_workspace(sandbox):
    source = (
        "from pathlib import Path\n"
        "Path('result.txt').write_text('42')\n"
        "print('wrote it')\n"
    )
    outcome = sandbox.execute(approved(source))
    assert [Path(item).name for item in outcome.artifacts] == ["result.txt"]
    assert (sandbox.workspace / "result.txt").read_text() == "42"


def test_execute_runs_in_scrubbed_environment(sandbox, monkeypatch):
    monkeypatch.setenv("PROVIDER_CREDENTIAL", "sk-live-leaky")
    source = (
        "import os\n"
        "print(os.environ.get('PROVIDER_CREDENTIAL', 'scrubbed'))\n"
    )
    outcome = sandbox.execute(approved(source))
    assert outcome.stdout.strip() == "scrubbed"


def test_execute_injects_secrets_only_at_run_time(sandbox):
    source = 'print("using", "<<API_KEY:serpapi>>")\n'
    outcome = sandbox.execute(approved(source), secrets={"serpapi": "sk-run-7"})
    assert "sk-run-7" in outcome.stdout
    # the reviewed source still holds the placeholder
    assert "<<API_KEY:serpapi>>" in source


def test_bootstrap_respects_install_policy(tmp_path):
    frozen = SandboxPolicy(
        workspace_root=tmp_path / "a", allow_package_install=False
    )
    with pytest.raises(PolicyViolation):
        Sandbox("s1", frozen).bootstrap_environment(approved("print('x')\n"))

    offline = SandboxPolicy(workspace_root=tmp_path / "b", network=NETWORK_DENIED)
    with pytest.raises(PolicyViolation):
        Sandbox("s2", offline).bootstrap_environment(approved("print('x')\n"))

    open_policy = SandboxPolicy(workspace_root=tmp_path / "c")
    outcome = Sandbox("s3", open_policy).bootstrap_environment(
        approved("print('installing nothing')\n")
    )
    assert outcome.ok
