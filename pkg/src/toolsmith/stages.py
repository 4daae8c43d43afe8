"""The three analysis agents: task breakdown, tool-need decision, and
registry matching. Each is one prompt assembly plus one parser that
tolerates code fences and surrounding prose."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Any, Sequence

from toolsmith import gateway, prompts
from toolsmith.errors import StageParseError

log = logging.getLogger(__name__)

NO_TOOL_SENTINEL = "no tool required"
TERMINATE_TOKEN = "TERMINATE"

_LIST_ITEM = re.compile(r"^\s*(?:\d+[.)]\s+|[-*]\s+)(.*\S)\s*$")
_FENCE = re.compile(r"^```[a-zA-Z0-9_-]*\s*$")
_TERMINATE_TAIL = re.compile(r"\s*\bTERMINATE\b[\s.!]*$", re.IGNORECASE)


def ends_with_terminate(text: str) -> bool:
    return bool(_TERMINATE_TAIL.search(text))


def strip_terminate(text: str) -> str:
    """Remove the closing TERMINATE token (and trailing punctuation)."""
    return _TERMINATE_TAIL.sub("", text).rstrip()


@dataclass(frozen=True)
class SubtaskPlan:
    """Ordered task breakdown; order is the model's stated priority."""

    subtasks: tuple[str, ...]

    def __post_init__(self):
        if not self.subtasks or any(not item.strip() for item in self.subtasks):
            raise ValueError("subtasks must be non-empty and non-blank")

    def numbered(self) -> str:
        return "\n".join(f"{i}. {task}" for i, task in enumerate(self.subtasks, 1))


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str

    def __post_init__(self):
        if not self.name.strip():
            raise ValueError("tool name must be non-empty")
        if _is_sentinel(self.name):
            raise ValueError("the no-tool sentinel is not a tool name")


@dataclass(frozen=True)
class ToolRequirement:
    """Tools the task needs; empty means the model said none are needed."""

    tools: tuple[ToolSpec, ...] = ()

    @property
    def none_required(self) -> bool:
        return not self.tools


@dataclass(frozen=True)
class SelectionEntry:
    name: str
    description: str
    is_available: bool
    function_name: str | None = None  # registry key, set when available


@dataclass(frozen=True)
class SelectionResult:
    entries: tuple[SelectionEntry, ...] = ()

    def available(self) -> list[SelectionEntry]:
        return [entry for entry in self.entries if entry.is_available]

    def missing(self) -> list[SelectionEntry]:
        return [entry for entry in self.entries if not entry.is_available]


def _is_sentinel(name: str) -> bool:
    return re.sub(r"\s+", " ", name).strip().lower() == NO_TOOL_SENTINEL


def strip_fences(text: str) -> str:
    """Drop markdown code-fence lines, keeping their contents."""
    lines = [line for line in text.splitlines() if not _FENCE.match(line)]
    return "\n".join(lines)


def extract_json_value(text: str) -> Any:
    """Find and parse the first balanced JSON array or object in the text.

    Model outputs wrap JSON in fences and prose; the examples the agents
    are primed with are bare JSON, so scan for the first balanced bracket
    run that parses.
    """
    cleaned = strip_fences(text)
    decoder = json.JSONDecoder()
    for match in re.finditer(r"[\[{]", cleaned):
        try:
            value, _ = decoder.raw_decode(cleaned, match.start())
            return value
        except ValueError:
            continue
    raise ValueError("no balanced JSON value found")


def parse_subtasks(text: str) -> SubtaskPlan:
    """Numbered or bulleted lines become subtasks, in output order.

    A single non-blank line with no list marker is itself the plan: simple
    tasks are not broken down.
    """
    cleaned = strip_fences(text)
    items = [m.group(1) for m in map(_LIST_ITEM.match, cleaned.splitlines()) if m]
    if items:
        return SubtaskPlan(tuple(items))
    stripped = [line.strip() for line in cleaned.splitlines() if line.strip()]
    if len(stripped) == 1:
        return SubtaskPlan((stripped[0],))
    raise StageParseError(
        prompts.STAGE_TASK_ANALYZER, "no list-like lines in reply", raw_text=text
    )


def parse_tool_requirement(text: str) -> ToolRequirement:
    """Parse the tool-need reply: a JSON array of {name, description} or
    the no-tool sentinel (bare object or array-wrapped)."""
    try:
        value = extract_json_value(text)
    except ValueError as exc:
        raise StageParseError(prompts.STAGE_TOOL_MASTER, str(exc), raw_text=text)

    objects = value if isinstance(value, list) else [value]
    tools: list[ToolSpec] = []
    for item in objects:
        if not isinstance(item, dict) or "name" not in item:
            raise StageParseError(
                prompts.STAGE_TOOL_MASTER,
                "entries must be objects with a name",
                raw_text=text,
            )
        if _is_sentinel(str(item["name"])):
            continue
        tools.append(ToolSpec(str(item["name"]), str(item.get("description", ""))))
    return ToolRequirement(tuple(tools))


def parse_selection(
    text: str,
    required: ToolRequirement,
    snapshot_entries: Sequence[dict[str, Any]],
) -> SelectionResult:
    """Parse selector verdicts and rebind available ones to registry rows.

    A verdict claiming availability must name a real registry entry; when
    it does not, the verdict degrades to unavailable (worst case we
    regenerate a tool we already had) rather than aborting the session.
    """
    try:
        value = extract_json_value(text)
    except ValueError as exc:
        raise StageParseError(prompts.STAGE_TOOL_SELECTOR, str(exc), raw_text=text)
    if isinstance(value, dict):
        value = [value]
    if not isinstance(value, list):
        raise StageParseError(
            prompts.STAGE_TOOL_SELECTOR, "reply is not a JSON array", raw_text=text
        )
    if len(value) != len(required.tools):
        raise StageParseError(
            prompts.STAGE_TOOL_SELECTOR,
            f"{len(value)} verdicts for {len(required.tools)} required tools",
            raw_text=text,
        )

    by_name = {entry["name"]: entry for entry in snapshot_entries}
    by_name_folded = {entry["name"].lower(): entry for entry in snapshot_entries}

    entries: list[SelectionEntry] = []
    for verdict, spec in zip(value, required.tools):
        if not isinstance(verdict, dict):
            raise StageParseError(
                prompts.STAGE_TOOL_SELECTOR, "verdicts must be objects", raw_text=text
            )
        name = str(verdict.get("name", spec.name))
        description = str(verdict.get("description", spec.description))
        if not verdict.get("is_available"):
            entries.append(SelectionEntry(spec.name, spec.description, False))
            continue
        matched = by_name.get(name) or by_name_folded.get(name.lower())
        if matched is None:
            log.warning(
                "selector claimed %r is available but no registry entry matches; "
                "treating as unavailable",
                name,
            )
            entries.append(SelectionEntry(spec.name, spec.description, False))
            continue
        entries.append(
            SelectionEntry(
                matched["name"],
                matched["description"],
                True,
                function_name=matched["function-name"],
            )
        )
    return SelectionResult(tuple(entries))


def analyze_task(user_task: str, provider) -> tuple[SubtaskPlan, gateway.Usage]:
    """Break the user task into prioritized subtasks."""
    if not user_task.strip():
        raise ValueError("user_task must be non-blank")
    messages = [
        gateway.system(prompts.load_template(prompts.STAGE_TASK_ANALYZER)),
        gateway.user(user_task),
    ]
    reply, usage = provider.complete(prompts.STAGE_TASK_ANALYZER, messages)
    return parse_subtasks(reply.content), usage


def decide_tools(plan: SubtaskPlan, provider) -> tuple[ToolRequirement, gateway.Usage]:
    """Decide whether external tools are needed and name them."""
    messages = [
        gateway.system(prompts.load_template(prompts.STAGE_TOOL_MASTER)),
        gateway.user(plan.numbered()),
    ]
    reply, usage = provider.complete(prompts.STAGE_TOOL_MASTER, messages)
    return parse_tool_requirement(reply.content), usage


def select_tools(
    required: ToolRequirement,
    registry_snapshot: str,
    provider,
) -> tuple[SelectionResult, gateway.Usage]:
    """Match required tools against the registry by meaning, not name."""
    if required.none_required:
        raise ValueError("empty requirements never reach the selector")
    required_json = json.dumps(
        [{"name": spec.name, "description": spec.description} for spec in required.tools],
        indent=2,
    )
    messages = [
        gateway.system(prompts.selector_prompt(registry_snapshot)),
        gateway.user(f"Required Tools:\n{required_json}"),
    ]
    reply, usage = provider.complete(prompts.STAGE_TOOL_SELECTOR, messages)
    snapshot_entries = json.loads(registry_snapshot)
    return parse_selection(reply.content, required, snapshot_entries), usage
