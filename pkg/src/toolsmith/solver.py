"""Final-stage agent: answers directly when no tools exist, otherwise runs
a one-tool-per-step function-calling loop, validating each proposal against
the tool's schema before the harness executes it and feeding the harness
output back verbatim (capped)."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from toolsmith import gateway, prompts, stages
from toolsmith.approvals import SecretVault
from toolsmith.errors import HarnessProtocolError, HarnessUnavailable
from toolsmith.harness_client import HarnessClient
from toolsmith.registry import ToolRecord
from toolsmith.sandbox import Sandbox
from toolsmith.trace import EVENT_SOLVE_STEP, TraceLog

TERMINAL_ANSWERED = "answered"
TERMINAL_STEP_BUDGET_EXHAUSTED = "step_budget_exhausted"
TERMINAL_TOOL_FAILURE_ABORT = "tool_failure_abort"

DEFAULT_MAX_STEPS = 10
RESULT_CAP_BYTES = 16 * 1024

_JSON_TYPE_CHECKS = {
    "string": lambda v: isinstance(v, str),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
    "object": lambda v: isinstance(v, dict),
    "null": lambda v: v is None,
}


def _args_digest(arguments: dict[str, Any]) -> str:
    canonical = json.dumps(arguments, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _matches_fragment(value: Any, fragment: dict[str, Any]) -> str | None:
    """None when the value fits the schema fragment, else a reason."""
    if "anyOf" in fragment:
        reasons = []
        for option in fragment["anyOf"]:
            reason = _matches_fragment(value, option)
            if reason is None:
                return None
            reasons.append(reason)
        return " and ".join(reasons)
    expected = fragment.get("type")
    if expected is None:
        return None
    if expected == "array":
        if not isinstance(value, list):
            return f"expected array, got {type(value).__name__}"
        items = fragment.get("items")
        if items:
            for position, element in enumerate(value):
                reason = _matches_fragment(element, items)
                if reason is not None:
                    return f"item {position}: {reason}"
        return None
    check = _JSON_TYPE_CHECKS.get(expected)
    if check is None:
        return None  # unknown tag: do not block execution on it
    if not check(value):
        return f"expected {expected}, got {type(value).__name__}"
    return None


def validate_call(arguments: Any, schema: dict[str, Any]) -> str | None:
    """Validate a proposed call against a harness schema.

    Returns None when valid, else error text written for the model to act
    on (missing/unknown parameters, type mismatches).
    """
    if not isinstance(arguments, dict):
        return "arguments must be a JSON object"
    parameters = schema.get("parameters", {})
    properties = parameters.get("properties", {})
    required = parameters.get("required", [])
    problems = []
    for name in required:
        if name not in arguments:
            problems.append(f"missing required parameter {name!r}")
    for name in arguments:
        if name not in properties:
            problems.append(f"unknown parameter {name!r}")
    for name, value in arguments.items():
        fragment = properties.get(name)
        if fragment is None:
            continue
        reason = _matches_fragment(value, fragment)
        if reason is not None:
            problems.append(f"parameter {name!r}: {reason}")
    if problems:
        return "invalid call: " + "; ".join(problems)
    return None


def parse_text_proposal(text: str) -> gateway.ToolCall | None:
    """Fallback proposal encoding: a fenced JSON object naming the tool.

    Accepts {"tool"|"name"|"function": ..., "arguments"|"args": {...}}.
    """
    for block in re.finditer(r"```(?:json)?\s*\n(.*?)```", text, re.DOTALL):
        try:
            value = json.loads(block.group(1))
        except ValueError:
            continue
        if not isinstance(value, dict):
            continue
        name = value.get("tool") or value.get("name") or value.get("function")
        arguments = value.get("arguments", value.get("args"))
        if isinstance(name, str) and isinstance(arguments, dict):
            return gateway.ToolCall(name, arguments)
    return None


@dataclass(frozen=True)
class ToolHandle:
    """A registered tool made callable: schema plus a runnable module file
    (secrets already substituted into the sandbox copy when needed)."""

    record: ToolRecord
    schema: dict[str, Any]
    module_path: Path

    @property
    def function_name(self) -> str:
        return self.record.function_name


def make_handle(
    sandbox: Sandbox,
    vault: SecretVault,
    record: ToolRecord,
    schema: dict[str, Any] | None = None,
) -> ToolHandle:
    """Materialize a registry record into the session workspace.

    Secret placeholders are substituted here (execution boundary); the
    harness then imports a file that exists only inside the session dir.
    """
    path = sandbox.materialize_script(
        record.source, f"tool_{record.function_name}", secrets=vault.as_mapping()
    )
    if schema is None:
        client = HarnessClient(
            interpreter=sandbox.policy.resolve_interpreter(),
            env=sandbox.child_env(),
            cwd=sandbox.workspace,
            timeout=sandbox.policy.timeout,
        )
        response = client.schema(path, record.function_name)
        if not response.ok:
            raise HarnessProtocolError(
                f"schema extraction failed for {record.function_name!r}: "
                f"{response.error_code}: {response.error_message}"
            )
        schema = response.result
    return ToolHandle(record=record, schema=schema, module_path=path)


@dataclass
class SolveStep:
    index: int
    proposal: dict[str, Any]
    result: Any = None
    failed: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "proposal": self.proposal,
            "result": self.result,
            "failed": self.failed,
        }


@dataclass(frozen=True)
class SolveResult:
    answer: str
    steps: tuple[SolveStep, ...]
    terminal: str
    artifacts: tuple[str, ...] = ()
    usage: gateway.Usage = field(default_factory=gateway.Usage)

    @property
    def answered(self) -> bool:
        return self.terminal == TERMINAL_ANSWERED


class TaskSolver:
    def __init__(
        self,
        *,
        provider,
        sandbox: Sandbox,
        vault: SecretVault,
        trace: TraceLog,
        session_id: str,
        max_steps: int = DEFAULT_MAX_STEPS,
    ):
        if max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        self.provider = provider
        self.sandbox = sandbox
        self.vault = vault
        self.trace = trace
        self.session_id = session_id
        self.max_steps = max_steps

    def _redact(self, text: str) -> str:
        return gateway.redact_text(text, self.vault.as_mapping())

    def _harness(self) -> HarnessClient:
        return HarnessClient(
            interpreter=self.sandbox.policy.resolve_interpreter(),
            env=self.sandbox.child_env(),
            cwd=self.sandbox.workspace,
            timeout=self.sandbox.policy.timeout,
        )

    def _tools_preamble(self, handles: Sequence[ToolHandle]) -> str:
        sections = []
        for handle in handles:
            sections.append(
                "\n".join(
                    [
                        f"### Tool: {handle.record.name}",
                        f"Purpose: {handle.record.description}",
                        f"Function: {handle.function_name}",
                        f"Call schema: {json.dumps(handle.schema)}",
                        "Code:",
                        "```python",
                        handle.record.source.rstrip(),
                        "```",
                    ]
                )
            )
        return "\n\n".join(sections)

    def _trace_step(self, step: SolveStep, tool: str | None, outcome_status: str):
        self.trace.append(
            EVENT_SOLVE_STEP,
            session_id=self.session_id,
            index=step.index,
            tool=tool,
            args_digest=step.proposal.get("args_digest"),
            outcome_status=outcome_status,
        )

    def solve(self, task: str, handles: Sequence[ToolHandle]) -> SolveResult:
        by_function = {handle.function_name: handle for handle in handles}
        transcript: list[gateway.ChatMessage] = [
            gateway.system(prompts.load_template(prompts.STAGE_TASK_SOLVER)),
        ]
        if handles:
            transcript.append(
                gateway.user(
                    f"Task: {task}\n\nTools available:\n\n{self._tools_preamble(handles)}"
                )
            )
        else:
            transcript.append(gateway.user(f"Task: {task}"))
        schemas = [handle.schema for handle in handles] or None

        steps: list[SolveStep] = []
        usages: list[gateway.Usage] = []
        artifacts_before = self.sandbox.workspace_snapshot()
        last_text = ""
        last_invalid_tool: str | None = None  # consecutive-invalid tracking

        while len(steps) < self.max_steps:
            reply, usage = self.provider.complete(
                prompts.STAGE_TASK_SOLVER, transcript, tool_schemas=schemas
            )
            usages.append(usage)
            transcript.append(reply)
            call = reply.tool_call or parse_text_proposal(reply.content)

            if call is None:
                last_text = reply.content
                step = SolveStep(
                    index=len(steps) + 1,
                    proposal={"final_text": stages.strip_terminate(reply.content)},
                )
                steps.append(step)
                if stages.ends_with_terminate(reply.content):
                    self._trace_step(step, None, "final")
                    return SolveResult(
                        answer=stages.strip_terminate(reply.content),
                        steps=tuple(steps),
                        terminal=TERMINAL_ANSWERED,
                        artifacts=self.sandbox.new_files_since(artifacts_before),
                        usage=gateway.meter_session(usages),
                    )
                self._trace_step(step, None, "no_terminate")
                transcript.append(
                    gateway.user(
                        "Continue. If the task is complete, restate the final "
                        "answer and end with TERMINATE."
                    )
                )
                continue

            step = SolveStep(
                index=len(steps) + 1,
                proposal={
                    "tool_call": {"name": call.name, "arguments": call.arguments},
                    "args_digest": _args_digest(call.arguments),
                },
            )
            steps.append(step)

            handle = by_function.get(call.name)
            error = (
                f"invalid call: unknown tool {call.name!r}; available: "
                f"{sorted(by_function)}"
                if handle is None
                else validate_call(call.arguments, handle.schema)
            )
            if error is not None:
                # Second consecutive schema-invalid proposal for the same
                # tool counts as a failed step.
                step.failed = last_invalid_tool == call.name
                last_invalid_tool = call.name
                step.result = {"ok": False, "error": {"type": "VALIDATION", "message": error}}
                self._trace_step(step, call.name, "invalid")
                transcript.append(
                    gateway.tool_result(
                        json.dumps(step.result), tool_name=call.name
                    )
                )
                continue
            last_invalid_tool = None

            step_snapshot = self.sandbox.workspace_snapshot()
            try:
                response = self._harness().invoke(
                    handle.module_path, handle.function_name, call.arguments
                )
            except (HarnessProtocolError, HarnessUnavailable) as exc:
                step.result = {"ok": False, "error": {"type": "HARNESS", "message": str(exc)}}
                step.failed = True
                self._trace_step(step, call.name, "harness_failure")
                return SolveResult(
                    answer="",
                    steps=tuple(steps),
                    terminal=TERMINAL_TOOL_FAILURE_ABORT,
                    artifacts=self.sandbox.new_files_since(artifacts_before),
                    usage=gateway.meter_session(usages),
                )

            payload: dict[str, Any] = {"ok": response.ok}
            if response.ok:
                payload["result"] = response.result
                if response.stringified:
                    payload["stringified"] = True
            else:
                payload["error"] = response.error
                step.failed = True
            # Tools that save files instead of returning values: tell the
            # model what appeared in the workspace.
            created = self.sandbox.new_files_since(step_snapshot)
            if created:
                payload["files_created"] = [
                    str(Path(item).relative_to(self.sandbox.workspace.resolve()))
                    for item in created
                ]
            step.result = payload
            self._trace_step(step, call.name, "ok" if response.ok else "tool_error")
            feedback = self._redact(json.dumps(payload, default=str))[:RESULT_CAP_BYTES]
            transcript.append(gateway.tool_result(feedback, tool_name=call.name))

        return SolveResult(
            answer=stages.strip_terminate(last_text),
            steps=tuple(steps),
            terminal=TERMINAL_STEP_BUDGET_EXHAUSTED,
            artifacts=self.sandbox.new_files_since(artifacts_before),
            usage=gateway.meter_session(usages),
        )
