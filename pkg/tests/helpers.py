"""Test-only plumbing: scenario runner over replay fixtures, in-process CLI
invocation, approval shortcuts, and filesystem fingerprinting."""

from __future__ import annotations

import contextlib
import hashlib
import io
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from fixture_builders import write_fixture
from toolsmith import gateway
from toolsmith.approvals import (
    ApprovalDecision,
    ApprovalRequest,
    KIND_CODE_REVIEW,
    VERDICT_APPROVE,
    VERDICT_REJECT,
    code_review_request,
)
from toolsmith.config import AppConfig, SandboxSettings
from toolsmith.orchestrator import Orchestrator, Session
from toolsmith.sandbox import ApprovedScript
from toolsmith.trace import read_events

TEST_SANDBOX_TIMEOUT = 30.0
TEST_DECISION_TIMEOUT = 20.0


def make_app_config(
    base_dir: Path,
    fixture_path: Path,
    *,
    registry_dir: Path | None = None,
    auto_approve: bool = True,
    search_endpoint: str | None = None,
    search_key_name: str | None = None,
    secret_env: dict[str, str] | None = None,
    max_iterations: int = 5,
    max_steps: int = 10,
    continue_on_exhausted: bool = False,
    warn_tool_count: int = 5,
) -> AppConfig:
    return AppConfig(
        provider=gateway.ProviderConfig(kind="replay", fixture_path=str(fixture_path)),
        registry_path=registry_dir or (base_dir / "registry"),
        runs_root=base_dir / "runs",
        sandbox=SandboxSettings(timeout=TEST_SANDBOX_TIMEOUT),
        max_iterations=max_iterations,
        max_steps=max_steps,
        auto_approve=auto_approve,
        continue_on_exhausted=continue_on_exhausted,
        search_endpoint=search_endpoint,
        search_key_api_name=search_key_name,
        secret_env=secret_env or {},
        warn_tool_count=warn_tool_count,
        decision_timeout=TEST_DECISION_TIMEOUT,
    )


@dataclass
class ScenarioOutcome:
    """Everything a test wants to assert about one finished session."""

    session: Session
    orchestrator: Orchestrator
    report: dict[str, Any]
    events: list[dict[str, Any]]
    registry_dir: Path
    runs_root: Path
    wall_secs: float
    provider_calls: list[tuple[str, list, Any]] = field(default_factory=list)

    def events_of(self, kind: str) -> list[dict[str, Any]]:
        return [event for event in self.events if event["kind"] == kind]

    @property
    def run_dir(self) -> Path:
        return self.session.run_dir


@contextlib.contextmanager
def temp_env(extra: dict[str, str] | None):
    saved: dict[str, str | None] = {}
    extra = extra or {}
    for key, value in extra.items():
        saved[key] = os.environ.get(key)
        os.environ[key] = value
    try:
        yield
    finally:
        for key, value in saved.items():
            if value is None:
                os.environ.pop(key, None)
            else:
                os.environ[key] = value


@contextlib.contextmanager
def spy_on_provider(sink: list | None):
    """Temporarily wrap gateway.make_provider so every complete() call's
    (stage, messages, tool_schemas) lands in sink."""
    if sink is None:
        yield
        return
    real = gateway.make_provider

    def spying_make(config, secret_source=None):
        inner = real(config, secret_source)

        class _Spy:
            def complete(self, stage, messages, tool_schemas=None):
                sink.append((stage, list(messages), tool_schemas))
                return inner.complete(stage, messages, tool_schemas)

        return _Spy()

    gateway.make_provider = spying_make
    try:
        yield
    finally:
        gateway.make_provider = real


def run_orchestrated(
    base_dir: Path,
    task: str,
    entries: list[dict[str, Any]],
    *,
    registry_dir: Path | None = None,
    auto_approve: bool = True,
    decide_with: Callable[[ApprovalRequest], ApprovalDecision | None] | None = None,
    search_endpoint: str | None = None,
    search_key_name: str | None = None,
    secret_env: dict[str, str] | None = None,
    env: dict[str, str] | None = None,
    max_iterations: int = 5,
    max_steps: int = 10,
    continue_on_exhausted: bool = False,
    warn_tool_count: int = 5,
    spy_calls: list | None = None,
) -> ScenarioOutcome:
    """Drive one task to its terminal state against a replay fixture."""
    base_dir.mkdir(parents=True, exist_ok=True)
    fixture_path = write_fixture(base_dir / "fixture.json", entries)
    config = make_app_config(
        base_dir,
        fixture_path,
        registry_dir=registry_dir,
        auto_approve=auto_approve,
        search_endpoint=search_endpoint,
        search_key_name=search_key_name,
        secret_env=secret_env,
        max_iterations=max_iterations,
        max_steps=max_steps,
        continue_on_exhausted=continue_on_exhausted,
        warn_tool_count=warn_tool_count,
    )
    orchestrator = Orchestrator(config)
    if decide_with is not None:

        def _listener(request: ApprovalRequest) -> None:
            decision = decide_with(request)
            if decision is not None:
                with contextlib.suppress(Exception):
                    orchestrator.queue.decide(decision)

        orchestrator.queue.add_listener(_listener)
    started = time.monotonic()
    with temp_env(env), spy_on_provider(spy_calls):
        session = orchestrator.run_session(task)
    wall = time.monotonic() - started
    report = json.loads((session.run_dir / "report.json").read_text(encoding="utf-8"))
    events = read_events(session.run_dir / "trace.jsonl")
    return ScenarioOutcome(
        session=session,
        orchestrator=orchestrator,
        report=report,
        events=events,
        registry_dir=Path(config.registry_path),
        runs_root=Path(config.runs_root),
        wall_secs=wall,
        provider_calls=spy_calls if spy_calls is not None else [],
    )


def run_cli(argv: list[str], env: dict[str, str] | None = None) -> tuple[int, str]:
    """Invoke the CLI in-process, capturing stdout."""
    from toolsmith import cli

    buffer = io.StringIO()
    with temp_env(env), contextlib.redirect_stdout(buffer):
        code = cli.main(argv)
    return code, buffer.getvalue()


def approved(source: str, session_id: str = "test-session") -> ApprovedScript:
    """Shortest legitimate path to an ApprovedScript for direct sandbox use."""
    request = code_review_request(session_id, source)
    decision = ApprovalDecision(request.id, VERDICT_APPROVE)
    return ApprovedScript.from_decision(request, decision)


def reject_code_reviews(request: ApprovalRequest) -> ApprovalDecision | None:
    """decide_with hook that turns every code review down."""
    if request.kind == KIND_CODE_REVIEW:
        return ApprovalDecision(request.id, VERDICT_REJECT)
    return None


class FakeProvider:
    """Scripted provider for unit tests: replies are popped per stage."""

    def __init__(self, script: dict[str, list], usage: gateway.Usage | None = None):
        self.script = {stage: list(replies) for stage, replies in script.items()}
        self.usage = usage or gateway.Usage(10, 5, gateway.DEFAULT_PRICING.cost_of(10, 5))
        self.calls: list[tuple[str, list, Any]] = []

    def complete(self, stage, messages, tool_schemas=None):
        self.calls.append((stage, list(messages), tool_schemas))
        replies = self.script.get(stage)
        if not replies:
            raise AssertionError(f"FakeProvider has no reply queued for stage {stage!r}")
        return replies.pop(0), self.usage


def dir_state(root: Path) -> dict[str, tuple[int, str]]:
    """{relative path: (size, sha256)} for every file under root."""
    state: dict[str, tuple[int, str]] = {}
    if not root.exists():
        return state
    for path in sorted(root.rglob("*")):
        if path.is_file():
            data = path.read_bytes()
            state[str(path.relative_to(root))] = (
                len(data),
                hashlib.sha256(data).hexdigest(),
            )
    return state


def files_containing(root: Path, needle: str) -> list[str]:
    """Every file under root whose bytes contain the needle."""
    hits: list[str] = []
    needle_bytes = needle.encode("utf-8")
    if not root.exists():
        return hits
    for path in sorted(root.rglob("*")):
        if path.is_file() and needle_bytes in path.read_bytes():
            hits.append(str(path))
    return hits
