"""Human checkpoint plumbing: approval requests, blocking decisions, and
the in-memory secret vault.

The queue is the only rendezvous between a running session (producer,
blocks) and whoever answers (CLI prompt loop or HTTP console). The first
decision for a request wins; later ones are refused.
"""

from __future__ import annotations

import hashlib
import secrets as _secrets
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

KIND_CODE_REVIEW = "code_review"
KIND_API_KEY_REQUEST = "api_key_request"

VERDICT_APPROVE = "approve"
VERDICT_REJECT = "reject"
VERDICT_APPROVE_EDITED = "approve_edited"


def source_hash(source: str) -> str:
    return hashlib.sha256(source.encode("utf-8")).hexdigest()


def new_token() -> str:
    """Random 128-bit hex token; unguessable handle for the HTTP API."""
    return _secrets.token_hex(16)


@dataclass(frozen=True)
class ApprovalRequest:
    id: str
    session_id: str
    kind: str
    created_at: float
    source: str | None = None  # code_review: the exact bytes that would run
    source_hash: str | None = None
    api_names: tuple[str, ...] = ()  # api_key_request
    context: str = ""  # human-readable label, e.g. which draft of which tool

    def __post_init__(self):
        if self.kind == KIND_CODE_REVIEW:
            if self.source is None:
                raise ValueError("code_review requests carry the source text")
            expected = source_hash(self.source)
            if self.source_hash is None:
                object.__setattr__(self, "source_hash", expected)
            elif self.source_hash != expected:
                raise ValueError("source_hash does not match the source bytes")
        elif self.kind == KIND_API_KEY_REQUEST:
            if not self.api_names:
                raise ValueError("api_key_request requests name at least one API")
        else:
            raise ValueError(f"unknown approval kind {self.kind!r}")

    def to_public_dict(self) -> dict:
        """Wire shape for the CLI/HTTP consumers; never includes secrets."""
        payload: dict = {
            "id": self.id,
            "session_id": self.session_id,
            "kind": self.kind,
            "created_at": self.created_at,
            "context": self.context,
        }
        if self.kind == KIND_CODE_REVIEW:
            payload["source"] = self.source
            payload["source_hash"] = self.source_hash
        else:
            payload["api_names"] = list(self.api_names)
        return payload


def code_review_request(session_id: str, source: str, context: str = "") -> ApprovalRequest:
    return ApprovalRequest(
        id=new_token(),
        session_id=session_id,
        kind=KIND_CODE_REVIEW,
        created_at=time.time(),
        source=source,
        context=context,
    )


def api_key_request(
    session_id: str, api_names: tuple[str, ...], context: str = ""
) -> ApprovalRequest:
    return ApprovalRequest(
        id=new_token(),
        session_id=session_id,
        kind=KIND_API_KEY_REQUEST,
        created_at=time.time(),
        api_names=tuple(api_names),
        context=context,
    )


@dataclass(frozen=True)
class ApprovalDecision:
    request_id: str
    verdict: str
    decided_at: float = field(default_factory=time.time)
    edited_source: str | None = None  # approve_edited only
    keys: dict[str, str] | None = None  # api_key_request only; never logged

    def __post_init__(self):
        if self.verdict not in (VERDICT_APPROVE, VERDICT_REJECT, VERDICT_APPROVE_EDITED):
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.verdict == VERDICT_APPROVE_EDITED and not self.edited_source:
            raise ValueError("approve_edited requires edited_source")
        if self.verdict != VERDICT_APPROVE_EDITED and self.edited_source is not None:
            raise ValueError("edited_source only accompanies approve_edited")

    @property
    def approved(self) -> bool:
        return self.verdict in (VERDICT_APPROVE, VERDICT_APPROVE_EDITED)

    def executable_source(self, request: ApprovalRequest) -> str:
        """The bytes the decision authorizes: the edit replaces the draft."""
        if request.kind != KIND_CODE_REVIEW:
            raise ValueError("only code_review decisions authorize source")
        if not self.approved:
            raise ValueError("a rejection authorizes nothing")
        if self.verdict == VERDICT_APPROVE_EDITED:
            assert self.edited_source is not None
            return self.edited_source
        assert request.source is not None
        return request.source

    def trace_dict(self) -> dict:
        """Trace shape: secrets reduced to 'name: <provided>' markers."""
        payload: dict = {
            "request_id": self.request_id,
            "verdict": self.verdict,
            "decided_at": self.decided_at,
        }
        if self.edited_source is not None:
            payload["edited_source_hash"] = source_hash(self.edited_source)
        if self.keys is not None:
            payload["keys"] = {name: "<provided>" for name in self.keys}
        return payload


class DecisionConflict(Exception):
    """A second decision arrived for an already-decided request."""


class ApprovalQueue:
    """Thread-safe request/decision rendezvous; first decision wins."""

    def __init__(self):
        self._lock = threading.Lock()
        self._new_decision = threading.Condition(self._lock)
        self._requests: dict[str, ApprovalRequest] = {}
        self._decisions: dict[str, ApprovalDecision] = {}
        self._listeners: list[Callable[[ApprovalRequest], None]] = []

    def add_listener(self, callback: Callable[[ApprovalRequest], None]) -> None:
        """Called with each new request; lets surfaces prompt immediately."""
        with self._lock:
            self._listeners.append(callback)

    def submit(self, request: ApprovalRequest) -> None:
        with self._lock:
            if request.id in self._requests:
                raise ValueError(f"duplicate request id {request.id}")
            self._requests[request.id] = request
            listeners = list(self._listeners)
        for callback in listeners:
            callback(request)

    def pending(self, session_id: str | None = None) -> list[ApprovalRequest]:
        with self._lock:
            items = [
                request
                for request_id, request in self._requests.items()
                if request_id not in self._decisions
            ]
        if session_id is not None:
            items = [request for request in items if request.session_id == session_id]
        return sorted(items, key=lambda request: request.created_at)

    def get(self, request_id: str) -> ApprovalRequest:
        with self._lock:
            return self._requests[request_id]

    def decide(self, decision: ApprovalDecision) -> None:
        with self._lock:
            if decision.request_id not in self._requests:
                raise KeyError(decision.request_id)
            if decision.request_id in self._decisions:
                raise DecisionConflict(decision.request_id)
            self._decisions[decision.request_id] = decision
            self._new_decision.notify_all()

    def decision_for(self, request_id: str) -> ApprovalDecision | None:
        with self._lock:
            return self._decisions.get(request_id)

    def wait(self, request_id: str, timeout: float | None = None) -> ApprovalDecision:
        """Block until the request is decided. timeout=None blocks forever."""
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._lock:
            while request_id not in self._decisions:
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    raise TimeoutError(f"no decision for request {request_id}")
                self._new_decision.wait(remaining)
            return self._decisions[request_id]

    def ask(
        self, request: ApprovalRequest, timeout: float | None = None
    ) -> ApprovalDecision:
        self.submit(request)
        return self.wait(request.id, timeout=timeout)


class SecretVault:
    """In-memory API-name → secret map. Never serialized; zero it when the
    session ends. Lookups are case-insensitive on the API name."""

    def __init__(self):
        self._entries: dict[str, str] = {}
        self._lock = threading.Lock()

    @staticmethod
    def _norm(name: str) -> str:
        return name.strip().lower()

    def put(self, name: str, secret: str) -> None:
        if not secret:
            raise ValueError("refusing to store an empty secret")
        with self._lock:
            self._entries[self._norm(name)] = secret

    def get(self, name: str) -> str | None:
        with self._lock:
            return self._entries.get(self._norm(name))

    def has(self, name: str) -> bool:
        return self.get(name) is not None

    def missing(self, names: tuple[str, ...]) -> list[str]:
        return [name for name in names if not self.has(name)]

    def names(self) -> list[str]:
        with self._lock:
            return sorted(self._entries)

    def values(self) -> list[str]:
        """Secrets themselves — only redaction and injection may want these."""
        with self._lock:
            return list(self._entries.values())

    def as_mapping(self) -> dict[str, str]:
        with self._lock:
            return dict(self._entries)

    def zero(self) -> None:
        with self._lock:
            self._entries.clear()

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def __repr__(self) -> str:  # never echo contents
        return f"<SecretVault entries={len(self)}>"
