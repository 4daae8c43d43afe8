"""Session state machine: analysis → tool decision → selection →
generation → solving, with the approval gate, secret vault, trace log,
and terminal-state accounting.

One Orchestrator serves many sessions (each strictly sequential inside);
the approval queue is the only cross-thread rendezvous.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from toolsmith import gateway, solver as solver_mod, stages
from toolsmith.approvals import (
    ApprovalDecision,
    ApprovalQueue,
    ApprovalRequest,
    KIND_CODE_REVIEW,
    SecretVault,
    VERDICT_APPROVE,
    api_key_request,
    new_token,
    source_hash,
)
from toolsmith.config import AppConfig
from toolsmith.errors import (
    GenerationExhausted,
    GenerationRejected,
    ToolsmithError,
)
from toolsmith.generator import ToolGenerator
from toolsmith.registry import ToolRegistry
from toolsmith.sandbox import Sandbox, SandboxPolicy
from toolsmith.solver import SolveResult, TaskSolver, ToolHandle, make_handle
from toolsmith.trace import (
    EVENT_ANSWER,
    EVENT_APPROVAL_DECIDED,
    EVENT_APPROVAL_REQUESTED,
    EVENT_PHASE,
    EVENT_SELECTION,
    EVENT_SESSION_STARTED,
    EVENT_STAGE_USAGE,
    EVENT_SUBTASKS,
    EVENT_TERMINAL,
    EVENT_TOOL_REQUIREMENTS,
    EVENT_WARNING,
    TraceLog,
)
from toolsmith.webretrieval import SearchClient

log = logging.getLogger(__name__)

PHASE_ANALYZING = "analyzing"
PHASE_DECIDING_TOOLS = "deciding_tools"
PHASE_SELECTING = "selecting"
PHASE_GENERATING = "generating"
PHASE_SOLVING = "solving"
PHASE_DONE = "done"

TERMINAL_ANSWERED = "answered"
TERMINAL_NO_TOOL_ANSWERED = "no_tool_answered"
TERMINAL_REJECTED_BY_HUMAN = "rejected_by_human"
TERMINAL_GENERATION_EXHAUSTED = "generation_exhausted"
TERMINAL_ERROR = "error"

OK_TERMINALS = (TERMINAL_ANSWERED, TERMINAL_NO_TOOL_ANSWERED)


class MeteredProvider:
    """Wraps a provider so every call's Usage lands in the session ledger."""

    def __init__(self, inner, session: "Session"):
        self._inner = inner
        self._session = session

    def complete(self, stage, messages, tool_schemas=None):
        reply, usage = self._inner.complete(stage, messages, tool_schemas)
        self._session.record_usage(stage, usage)
        return reply, usage


@dataclass
class Session:
    id: str
    task: str
    run_dir: Path
    trace: TraceLog
    phase: str = PHASE_ANALYZING
    terminal: str | None = None
    usage_total: gateway.Usage = field(default_factory=gateway.Usage)
    answer: str = ""
    error: str | None = None
    created_at: float = field(default_factory=time.time)
    finished_at: float | None = None
    stage_usage: dict[str, list[gateway.Usage]] = field(default_factory=dict)
    tools_generated: list[str] = field(default_factory=list)
    tools_reused: list[str] = field(default_factory=list)
    generator_iterations: int = 0
    artifacts: tuple[str, ...] = ()
    solve_result: SolveResult | None = None

    def record_usage(self, stage: str, usage: gateway.Usage) -> None:
        self.stage_usage.setdefault(stage, []).append(usage)
        self.usage_total = self.usage_total + usage
        self.trace.append(
            EVENT_STAGE_USAGE,
            session_id=self.id,
            stage=stage,
            prompt_tokens=usage.prompt_tokens,
            completion_tokens=usage.completion_tokens,
            cost=str(usage.cost),
        )

    @property
    def provider_calls(self) -> int:
        return sum(len(calls) for calls in self.stage_usage.values())

    def set_phase(self, phase: str) -> None:
        self.phase = phase
        self.trace.append(EVENT_PHASE, session_id=self.id, phase=phase)

    def summary(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "task": self.task,
            "phase": self.phase,
            "terminal": self.terminal,
            "answer": self.answer,
            "error": self.error,
            "created_at": self.created_at,
            "finished_at": self.finished_at,
            "provider_calls": self.provider_calls,
            "usage": self.usage_total.to_dict(),
        }


def session_report(session: Session) -> dict[str, Any]:
    """Per-stage and total token/cost accounting for a finished session."""
    if session.terminal is None:
        raise ValueError("session has not reached a terminal state")
    stage_rows = {}
    for stage, usages in session.stage_usage.items():
        total = gateway.meter_session(usages)
        stage_rows[stage] = {
            "calls": len(usages),
            "prompt_tokens": total.prompt_tokens,
            "completion_tokens": total.completion_tokens,
            "total_tokens": total.prompt_tokens + total.completion_tokens,
            "cost_usd": str(total.cost),
        }
    wall = (session.finished_at or time.time()) - session.created_at
    return {
        "session_id": session.id,
        "task": session.task,
        "terminal": session.terminal,
        "answer": session.answer,
        "error": session.error,
        "wall_time_secs": wall,
        "stages": stage_rows,
        "totals": {
            "provider_calls": session.provider_calls,
            "prompt_tokens": session.usage_total.prompt_tokens,
            "completion_tokens": session.usage_total.completion_tokens,
            "total_tokens": session.usage_total.prompt_tokens
            + session.usage_total.completion_tokens,
            "cost_usd": str(session.usage_total.cost),
        },
        "tools": {
            "generated": list(session.tools_generated),
            "reused": list(session.tools_reused),
            "generator_iterations": session.generator_iterations,
        },
        "artifacts": list(session.artifacts),
        "steps": (
            [step.to_dict() for step in session.solve_result.steps]
            if session.solve_result
            else []
        ),
    }


class Orchestrator:
    def __init__(self, config: AppConfig, queue: ApprovalQueue | None = None):
        self.config = config
        self.queue = queue or ApprovalQueue()
        self.registry = ToolRegistry(config.registry_path)
        self.sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    # -- session lifecycle -------------------------------------------------

    def create_session(self, task: str) -> Session:
        if not task.strip():
            raise ValueError("task must be non-blank")
        session_id = new_token()
        run_dir = Path(self.config.runs_root) / session_id
        trace = TraceLog(run_dir / "trace.jsonl")
        session = Session(id=session_id, task=task, run_dir=run_dir, trace=trace)
        with self._lock:
            self.sessions[session_id] = session
        trace.append(EVENT_SESSION_STARTED, session_id=session_id, task=task)
        return session

    def get_session(self, session_id: str) -> Session | None:
        with self._lock:
            return self.sessions.get(session_id)

    def list_sessions(self) -> list[Session]:
        with self._lock:
            return sorted(self.sessions.values(), key=lambda s: s.created_at)

    def run_session(self, task: str) -> Session:
        """Create and drive a session to its terminal state (blocking)."""
        session = self.create_session(task)
        self._drive(session)
        return session

    def spawn_session(self, task: str) -> Session:
        """Create a session and drive it on a background thread."""
        session = self.create_session(task)
        thread = threading.Thread(
            target=self._drive, args=(session,), name=f"session-{session.id[:8]}"
        )
        thread.daemon = True
        thread.start()
        return session

    # -- approval gate ---------------------------------------------------

    def request_approval(
        self, session: Session, request: ApprovalRequest
    ) -> ApprovalDecision:
        """Block until a decision arrives. Auto-approve short-circuits code
        review only; key requests always need a real answer."""
        event: dict[str, Any] = {
            "session_id": session.id,
            "request_id": request.id,
            "request_kind": request.kind,
            "context": request.context,
        }
        if request.kind == KIND_CODE_REVIEW:
            event["source_hash"] = request.source_hash
        else:
            event["api_names"] = list(request.api_names)
        session.trace.append(EVENT_APPROVAL_REQUESTED, **event)

        self.queue.submit(request)
        if self.config.auto_approve and request.kind == KIND_CODE_REVIEW:
            try:
                self.queue.decide(ApprovalDecision(request.id, VERDICT_APPROVE))
            except Exception:
                pass  # a faster human decision wins; use whatever it was
        decision = self.queue.wait(request.id, timeout=self.config.decision_timeout)

        decided_event = decision.trace_dict()
        decided_event["session_id"] = session.id
        if request.kind == KIND_CODE_REVIEW and decision.approved:
            decided_event["source_hash"] = source_hash(
                decision.executable_source(request)
            )
        session.trace.append(EVENT_APPROVAL_DECIDED, **decided_event)
        return decision

    # -- phase machine ---------------------------------------------------------

    def _drive(self, session: Session) -> None:
        vault = SecretVault()
        self._preload_vault(vault)
        policy = SandboxPolicy(
            workspace_root=Path(self.config.runs_root),
            timeout=self.config.sandbox.timeout,
            max_output_bytes=self.config.sandbox.max_output_bytes,
            network=self.config.sandbox.network,
            allow_package_install=self.config.sandbox.allow_package_install,
            interpreter=self.config.sandbox.interpreter,
            extra_env=(
                {"SEARCH_API_ENDPOINT": self.config.search_endpoint}
                if self.config.search_endpoint
                else {}
            ),
        )
        sandbox = Sandbox(session.id, policy)
        provider = MeteredProvider(
            gateway.make_provider(self.config.provider, secret_source=vault.as_mapping),
            session,
        )
        try:
            self._run_phases(session, provider, sandbox, vault)
        except GenerationRejected as exc:
            self._finish(session, TERMINAL_REJECTED_BY_HUMAN, error=str(exc))
        except GenerationExhausted as exc:
            self._finish(session, TERMINAL_GENERATION_EXHAUSTED, error=str(exc))
        except ToolsmithError as exc:
            self._finish(session, TERMINAL_ERROR, error=f"{type(exc).__name__}: {exc}")
        except TimeoutError as exc:
            self._finish(session, TERMINAL_ERROR, error=f"approval timeout: {exc}")
        except Exception as exc:
            log.exception("session %s crashed", session.id)
            excerpt = traceback.format_exc()[-1500:]
            self._finish(
                session, TERMINAL_ERROR, error=f"unexpected {type(exc).__name__}: {exc}",
                detail=excerpt,
            )
        finally:
            sandbox.close()
            vault.zero()
            self._write_report(session)

    def _preload_vault(self, vault: SecretVault) -> None:
        """secret_env config: API keys read from named env vars, so
        unattended runs never raise key requests."""
        for api_name, env_name in self.config.secret_env.items():
            value = os.environ.get(env_name)
            if value:
                vault.put(api_name, value)

    def _run_phases(
        self, session: Session, provider: MeteredProvider, sandbox: Sandbox, vault: SecretVault
    ) -> None:
        session.set_phase(PHASE_ANALYZING)
        plan, _ = stages.analyze_task(session.task, provider)
        session.trace.append(
            EVENT_SUBTASKS, session_id=session.id, subtasks=list(plan.subtasks)
        )

        session.set_phase(PHASE_DECIDING_TOOLS)
        requirement, _ = stages.decide_tools(plan, provider)
        session.trace.append(
            EVENT_TOOL_REQUIREMENTS,
            session_id=session.id,
            tools=[{"name": t.name, "description": t.description} for t in requirement.tools],
        )
        if len(requirement.tools) > self.config.warn_tool_count:
            session.trace.append(
                EVENT_WARNING,
                session_id=session.id,
                message=(
                    f"tool master asked for {len(requirement.tools)} tools "
                    f"(threshold {self.config.warn_tool_count})"
                ),
            )

        handles: list[ToolHandle] = []
        if requirement.none_required:
            # Task needs no tools: selection/generation are skipped entirely.
            result = self._solve(session, provider, sandbox, vault, handles)
            self._conclude_from_solve(session, result, no_tools=True)
            return

        session.set_phase(PHASE_SELECTING)
        selection, _ = stages.select_tools(requirement, self.registry.snapshot(), provider)
        session.trace.append(
            EVENT_SELECTION,
            session_id=session.id,
            entries=[
                {
                    "name": entry.name,
                    "is_available": entry.is_available,
                    "function_name": entry.function_name,
                }
                for entry in selection.entries
            ],
        )

        generator = ToolGenerator(
            provider=provider,
            sandbox=sandbox,
            registry=self.registry,
            request_approval=lambda request: self.request_approval(session, request),
            vault=vault,
            trace=session.trace,
            session_id=session.id,
            search_client=(
                SearchClient(self.config.search_endpoint)
                if self.config.search_endpoint
                else None
            ),
            search_key_name=self.config.search_key_api_name,
            max_iterations=self.config.max_iterations,
        )

        to_generate: list[stages.ToolSpec] = []
        for entry in selection.entries:
            if not entry.is_available:
                to_generate.append(stages.ToolSpec(entry.name, entry.description))
                continue
            handle = self._load_reusable(session, sandbox, vault, entry)
            if handle is None:
                to_generate.append(stages.ToolSpec(entry.name, entry.description))
            else:
                handles.append(handle)
                session.tools_reused.append(handle.function_name)

        if to_generate:
            session.set_phase(PHASE_GENERATING)
            for spec in to_generate:
                try:
                    result = generator.generate(spec)
                except GenerationExhausted as exc:
                    if not self.config.continue_on_exhausted:
                        raise
                    session.trace.append(
                        EVENT_WARNING,
                        session_id=session.id,
                        message=f"generation exhausted for {spec.name!r}: {exc}; continuing",
                    )
                    session.generator_iterations += self.config.max_iterations
                    continue
                session.generator_iterations += result.iterations
                session.tools_generated.append(result.record.function_name)
                handles.append(
                    make_handle(sandbox, vault, result.record, schema=result.schema)
                )

        solve_result = self._solve(session, provider, sandbox, vault, handles)
        self._conclude_from_solve(session, solve_result, no_tools=False)

    def _load_reusable(
        self, session: Session, sandbox: Sandbox, vault: SecretVault, entry
    ) -> ToolHandle | None:
        """Fetch + validate a registry hit; rot degrades to regeneration."""
        try:
            record = self.registry.fetch(entry.function_name)
        except ToolsmithError as exc:
            session.trace.append(
                EVENT_WARNING,
                session_id=session.id,
                message=f"registry integrity: {entry.function_name!r}: {exc}",
            )
            return None
        missing = vault.missing(record.api_names)
        if missing:
            request = api_key_request(
                session.id,
                tuple(missing),
                context=f"stored tool {record.function_name!r} needs API key(s)",
            )
            decision = self.request_approval(session, request)
            if decision.keys:
                for name, secret in decision.keys.items():
                    if secret:
                        vault.put(name, secret)
        try:
            return make_handle(sandbox, vault, record)
        except ToolsmithError as exc:
            session.trace.append(
                EVENT_WARNING,
                session_id=session.id,
                message=(
                    f"stored tool {record.function_name!r} failed to load "
                    f"({exc}); regenerating"
                ),
            )
            return None

    def _solve(
        self,
        session: Session,
        provider: MeteredProvider,
        sandbox: Sandbox,
        vault: SecretVault,
        handles: list[ToolHandle],
    ) -> SolveResult:
        session.set_phase(PHASE_SOLVING)
        task_solver = TaskSolver(
            provider=provider,
            sandbox=sandbox,
            vault=vault,
            trace=session.trace,
            session_id=session.id,
            max_steps=self.config.max_steps,
        )
        return task_solver.solve(session.task, handles)

    def _conclude_from_solve(
        self, session: Session, result: SolveResult, no_tools: bool
    ) -> None:
        session.solve_result = result
        session.artifacts = result.artifacts
        if result.terminal == solver_mod.TERMINAL_ANSWERED:
            session.answer = result.answer
            session.trace.append(
                EVENT_ANSWER, session_id=session.id, answer=result.answer
            )
            self._finish(
                session,
                TERMINAL_NO_TOOL_ANSWERED if no_tools else TERMINAL_ANSWERED,
            )
        elif result.terminal == solver_mod.TERMINAL_STEP_BUDGET_EXHAUSTED:
            self._finish(
                session, TERMINAL_ERROR, error="solver_step_budget_exhausted"
            )
        else:
            self._finish(session, TERMINAL_ERROR, error="solver_tool_failure_abort")

    def _finish(
        self, session: Session, terminal: str, error: str | None = None, detail: str = ""
    ) -> None:
        if session.terminal is not None:
            return  # exactly one terminal state
        session.terminal = terminal
        session.error = error
        session.finished_at = time.time()
        session.set_phase(PHASE_DONE)
        event: dict[str, Any] = {"session_id": session.id, "terminal": terminal}
        if error:
            event["error"] = error
        if detail:
            event["detail"] = detail
        session.trace.append(EVENT_TERMINAL, **event)

    def _write_report(self, session: Session) -> None:
        try:
            report = session_report(session)
        except ValueError:
            return
        path = session.run_dir / "report.json"
        path.write_text(json.dumps(report, indent=2, default=str) + "\n", encoding="utf-8")
