"""Uniform chat-completion interface: live OpenAI-compatible HTTP and
deterministic replay from fixtures, with token usage and cost metering.

Costs are held as exact decimals so that session totals are reproducible
to the last digit; nothing is rounded until display.
"""

from __future__ import annotations

import copy
import json
import logging
import os
import time
from dataclasses import dataclass, field, replace
from decimal import Decimal
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import requests

from toolsmith.errors import ConfigError, ProviderError, ReplayError

log = logging.getLogger(__name__)

ROLE_SYSTEM = "system"
ROLE_USER = "user"
ROLE_ASSISTANT = "assistant"
ROLE_TOOL_RESULT = "tool-result"

_VALID_ROLES = (ROLE_SYSTEM, ROLE_USER, ROLE_ASSISTANT, ROLE_TOOL_RESULT)


@dataclass(frozen=True)
class ToolCall:
    """A structured function call proposed by the assistant."""

    name: str
    arguments: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str
    tool_call: ToolCall | None = None
    tool_name: str | None = None

    def __post_init__(self):
        if self.role not in _VALID_ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.tool_call is not None and self.role != ROLE_ASSISTANT:
            raise ValueError("tool_call is only valid on assistant messages")
        if (self.tool_name is not None) != (self.role == ROLE_TOOL_RESULT):
            raise ValueError("tool_name is set iff role is tool-result")


def system(content: str) -> ChatMessage:
    return ChatMessage(ROLE_SYSTEM, content)


def user(content: str) -> ChatMessage:
    return ChatMessage(ROLE_USER, content)


def assistant(content: str, tool_call: ToolCall | None = None) -> ChatMessage:
    return ChatMessage(ROLE_ASSISTANT, content, tool_call=tool_call)


def tool_result(content: str, tool_name: str) -> ChatMessage:
    return ChatMessage(ROLE_TOOL_RESULT, content, tool_name=tool_name)


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    cost: Decimal = Decimal("0")

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0 or self.cost < 0:
            raise ValueError("usage fields must be non-negative")

    def __add__(self, other: "Usage") -> "Usage":
        return Usage(
            self.prompt_tokens + other.prompt_tokens,
            self.completion_tokens + other.completion_tokens,
            self.cost + other.cost,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "cost": str(self.cost),
        }


@dataclass(frozen=True)
class PricingTable:
    """USD rates per 1000 tokens for one model."""

    model_id: str
    prompt_rate: Decimal
    completion_rate: Decimal

    def __post_init__(self):
        if not self.model_id:
            raise ValueError("model_id must be non-empty")
        if self.prompt_rate <= 0 or self.completion_rate <= 0:
            raise ValueError("rates must be positive")

    def cost_of(self, prompt_tokens: int, completion_tokens: int) -> Decimal:
        return (
            prompt_tokens * self.prompt_rate + completion_tokens * self.completion_rate
        ) / 1000

    def usage(self, prompt_tokens: int, completion_tokens: int) -> Usage:
        return Usage(prompt_tokens, completion_tokens, self.cost_of(prompt_tokens, completion_tokens))


DEFAULT_PRICING = PricingTable("gpt-4-0613", Decimal("0.03"), Decimal("0.06"))


@dataclass(frozen=True)
class ProviderConfig:
    kind: str  # "live" | "replay"
    endpoint: str | None = None
    credential_env: str | None = None
    fixture_path: str | Path | None = None
    model: str = DEFAULT_PRICING.model_id
    pricing: PricingTable = DEFAULT_PRICING

    def __post_init__(self):
        if self.kind == "live":
            if not self.endpoint or not self.credential_env or self.fixture_path:
                raise ConfigError("live provider needs endpoint + credential_env, no fixture")
        elif self.kind == "replay":
            if not self.fixture_path or self.endpoint or self.credential_env:
                raise ConfigError("replay provider needs fixture_path only")
        else:
            raise ConfigError(f"unknown provider kind {self.kind!r}")


def meter_session(usages: Sequence[Usage]) -> Usage:
    """Componentwise total of per-call usage; cost additivity is exact."""
    total = Usage()
    for usage in usages:
        total = total + usage
    return total


def redact(messages: Sequence[ChatMessage], secrets: Mapping[str, str]) -> list[ChatMessage]:
    """Replace every occurrence of a registered secret with a labeled marker.

    Applied to every outbound live payload and anything persisted, so no
    secret plaintext ever leaves the process or lands on disk.
    """
    live = {name: value for name, value in secrets.items() if value}
    if not live:
        return list(messages)
    return [_redact_message(message, live) for message in messages]


def redact_text(text: str, secrets: Mapping[str, str]) -> str:
    for name, value in secrets.items():
        if value:
            text = text.replace(value, f"<<REDACTED:{name}>>")
    return text


def _redact_message(message: ChatMessage, secrets: Mapping[str, str]) -> ChatMessage:
    content = redact_text(message.content, secrets)
    tool_call = message.tool_call
    if tool_call is not None:
        raw = redact_text(json.dumps(tool_call.arguments), secrets)
        tool_call = ToolCall(tool_call.name, json.loads(raw))
    if content is message.content and tool_call is message.tool_call:
        return message
    return replace(message, content=content, tool_call=tool_call)


def _check_preconditions(messages: Sequence[ChatMessage]):
    if not messages:
        raise ValueError("messages must be non-empty")
    if messages[0].role != ROLE_SYSTEM:
        raise ValueError("first message must have the system role")


class LiveProvider:
    """OpenAI-compatible chat-completions client.

    The credential comes from the environment variable named in the config,
    read at request time; it is never a flag and never logged. One retry
    with backoff on transport failure, then the session aborts.
    """

    RETRY_BACKOFF_SECS = 2.0

    def __init__(self, config: ProviderConfig, secret_source: Callable[[], Mapping[str, str]] | None = None):
        if config.kind != "live":
            raise ConfigError("LiveProvider requires a live ProviderConfig")
        self.config = config
        self._secret_source = secret_source or (lambda: {})

    def complete(
        self,
        stage: str,
        messages: Sequence[ChatMessage],
        tool_schemas: Sequence[dict[str, Any]] | None = None,
    ) -> tuple[ChatMessage, Usage]:
        _check_preconditions(messages)
        body = self._request_body(messages, tool_schemas)
        credential = os.environ.get(self.config.credential_env or "")
        if not credential:
            raise ProviderError(
                f"credential env var {self.config.credential_env!r} is not set", stage
            )
        headers = {
            "Authorization": f"Bearer {credential}",
            "Content-Type": "application/json",
        }
        last_error: Exception | None = None
        for attempt in (1, 2):
            try:
                response = requests.post(
                    self.config.endpoint, json=body, headers=headers, timeout=120
                )
                response.raise_for_status()
                return self._parse_response(response.json(), stage)
            except (requests.RequestException, ValueError, KeyError) as exc:
                last_error = exc
                log.warning("provider call failed (attempt %d): %s", attempt, exc)
                if attempt == 1:
                    time.sleep(self.RETRY_BACKOFF_SECS)
        raise ProviderError(f"transport failure after retry: {last_error}", stage)

    def _request_body(self, messages, tool_schemas) -> dict[str, Any]:
        redacted = redact(messages, self._secret_source())
        body: dict[str, Any] = {
            "model": self.config.model,
            "messages": [_to_wire(message) for message in redacted],
        }
        if tool_schemas:
            body["tools"] = [
                {"type": "function", "function": _schema_wire(schema)}
                for schema in tool_schemas
            ]
        return body

    def _parse_response(self, payload: dict[str, Any], stage: str) -> tuple[ChatMessage, Usage]:
        choice = payload["choices"][0]["message"]
        tool_call = None
        for raw_call in choice.get("tool_calls") or []:
            fn = raw_call.get("function", {})
            arguments = fn.get("arguments", {})
            if isinstance(arguments, str):
                try:
                    arguments = json.loads(arguments)
                except ValueError:
                    arguments = {"_raw": arguments}
            tool_call = ToolCall(fn.get("name", ""), arguments)
            break  # one tool per step; extra calls are ignored
        message = assistant(choice.get("content") or "", tool_call=tool_call)
        usage = payload.get("usage") or {}
        return message, self.config.pricing.usage(
            int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))
        )


def _schema_wire(schema: dict[str, Any]) -> dict[str, Any]:
    """Adapt a harness schema ("function" key, optional "returns") to the
    chat-completions tool shape ("name", no return section)."""
    wire = dict(schema)
    if "name" not in wire and "function" in wire:
        wire["name"] = wire.pop("function")
    wire.pop("returns", None)
    return wire


def _to_wire(message: ChatMessage) -> dict[str, Any]:
    if message.role == ROLE_TOOL_RESULT:
        return {"role": "tool", "name": message.tool_name, "content": message.content}
    wire: dict[str, Any] = {"role": message.role, "content": message.content}
    if message.tool_call is not None:
        wire["tool_calls"] = [
            {
                "type": "function",
                "function": {
                    "name": message.tool_call.name,
                    "arguments": json.dumps(message.tool_call.arguments),
                },
            }
        ]
    return wire


class ReplayProvider:
    """Deterministic provider that serves recorded fixture replies.

    Fixture entries are keyed by (stage label, per-stage ordinal); prompts
    legitimately embed volatile content, so prompt hashes are not part of
    the key. An instance is bound to one session: the ordinal cursors are
    instance-local.
    """

    def __init__(self, config: ProviderConfig):
        if config.kind != "replay":
            raise ConfigError("ReplayProvider requires a replay ProviderConfig")
        self.config = config
        self._entries = load_fixture(config.fixture_path)
        self._cursors: dict[str, int] = {}

    def complete(
        self,
        stage: str,
        messages: Sequence[ChatMessage],
        tool_schemas: Sequence[dict[str, Any]] | None = None,
    ) -> tuple[ChatMessage, Usage]:
        _check_preconditions(messages)
        ordinal = self._cursors.get(stage, 0)
        entry = next(
            (
                candidate
                for candidate in self._entries
                if candidate["stage"] == stage and candidate["ordinal"] == ordinal
            ),
            None,
        )
        if entry is None:
            raise ReplayError(
                f"fixture exhausted: no entry for stage {stage!r} ordinal {ordinal}",
                stage,
            )
        self._cursors[stage] = ordinal + 1
        message = _reply_to_message(entry["reply"])
        usage = entry.get("usage") or {}
        return message, self.config.pricing.usage(
            int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))
        )


def load_fixture(path: str | Path) -> list[dict[str, Any]]:
    """Load and structurally validate a replay fixture file."""
    try:
        entries = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ReplayError(f"fixture {path} unreadable: {exc}")
    validate_fixture(entries, source=str(path))
    return entries


def validate_fixture(entries: Any, source: str = "fixture") -> None:
    """Raise ReplayError when the fixture cannot drive a replay session."""
    if not isinstance(entries, list):
        raise ReplayError(f"{source}: top level must be a JSON array")
    ordinals: dict[str, list[int]] = {}
    for index, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ReplayError(f"{source}[{index}]: entry must be an object")
        for key in ("stage", "ordinal", "reply"):
            if key not in entry:
                raise ReplayError(f"{source}[{index}]: missing key {key!r}")
        reply = entry["reply"]
        if not isinstance(reply, dict) or "content" not in reply:
            raise ReplayError(f"{source}[{index}]: reply must be an object with content")
        usage = entry.get("usage", {})
        if not isinstance(usage, dict):
            raise ReplayError(f"{source}[{index}]: usage must be an object")
        ordinals.setdefault(entry["stage"], []).append(entry["ordinal"])
    for stage, seen in ordinals.items():
        if sorted(seen) != list(range(len(seen))):
            raise ReplayError(
                f"{source}: stage {stage!r} ordinals {sorted(seen)} are not contiguous from 0"
            )


def _reply_to_message(reply: dict[str, Any]) -> ChatMessage:
    tool_call = None
    raw_call = reply.get("tool_call")
    if raw_call:
        tool_call = ToolCall(raw_call["name"], copy.deepcopy(raw_call.get("arguments", {})))
    return assistant(reply.get("content", ""), tool_call=tool_call)


def make_provider(
    config: ProviderConfig, secret_source: Callable[[], Mapping[str, str]] | None = None
):
    if config.kind == "live":
        return LiveProvider(config, secret_source)
    return ReplayProvider(config)
