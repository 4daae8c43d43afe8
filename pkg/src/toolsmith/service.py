"""HTTP surface: sessions, approvals, registry, and per-session event
streams (server-sent events, resumable via Last-Event-ID). Consumed by the
web console and by anything else that can speak HTTP."""

from __future__ import annotations

import json
import queue as queue_mod
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Header, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from toolsmith.approvals import ApprovalDecision, DecisionConflict
from toolsmith.errors import ToolNotFound
from toolsmith.orchestrator import Orchestrator, session_report
from toolsmith.trace import EVENT_TERMINAL

_STREAM_POLL_SECS = 0.25
_STREAM_IDLE_LIMIT = 120  # polls with no event before giving up


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


def build_app(orchestrator: Orchestrator, console_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="toolsmith", docs_url=None, redoc_url=None)

    # -- sessions -----------------------------------------------------

    @app.post("/tasks")
    async def create_task(request: Request) -> Response:
        try:
            body = await request.json()
        except Exception:
            return _error(400, "body must be JSON")
        task = body.get("task") if isinstance(body, dict) else None
        if not isinstance(task, str) or not task.strip():
            return _error(400, "body needs a non-blank 'task' string")
        session = orchestrator.spawn_session(task)
        return JSONResponse({"session_id": session.id}, status_code=201)

    @app.get("/sessions")
    def list_sessions() -> Any:
        return {"sessions": [s.summary() for s in orchestrator.list_sessions()]}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> Any:
        session = orchestrator.get_session(session_id)
        if session is None:
            return _error(404, "unknown session")
        return session.summary()

    @app.get("/sessions/{session_id}/report")
    def get_report(session_id: str) -> Any:
        session = orchestrator.get_session(session_id)
        if session is None:
            return _error(404, "unknown session")
        if session.terminal is None:
            return _error(409, "session has not finished")
        return session_report(session)

    # -- event stream ----------------------------------------------------

    @app.get("/sessions/{session_id}/events")
    def stream_events(
        session_id: str,
        last_event_id: str | None = Header(default=None),
        after: int | None = None,
    ) -> Response:
        session = orchestrator.get_session(session_id)
        if session is None:
            return _error(404, "unknown session")
        try:
            resume_after = int(last_event_id) if last_event_id else int(after or 0)
        except ValueError:
            resume_after = 0

        def generate():
            live: queue_mod.Queue = queue_mod.Queue()
            unsubscribe = session.trace.subscribe(live.put)
            try:
                delivered = resume_after
                finished = False
                for event in session.trace.events(after_seq=resume_after):
                    delivered = max(delivered, event["seq"])
                    finished = finished or event["kind"] == EVENT_TERMINAL
                    yield _sse_frame(event)
                idle = 0
                while not finished and idle < _STREAM_IDLE_LIMIT:
                    try:
                        event = live.get(timeout=_STREAM_POLL_SECS)
                    except queue_mod.Empty:
                        idle += 1
                        if session.terminal is not None:
                            # Session ended while we waited; flush stragglers.
                            for event in session.trace.events(after_seq=delivered):
                                delivered = max(delivered, event["seq"])
                                yield _sse_frame(event)
                            finished = True
                        continue
                    idle = 0
                    if event["seq"] <= delivered:
                        continue
                    delivered = event["seq"]
                    finished = event["kind"] == EVENT_TERMINAL
                    yield _sse_frame(event)
            finally:
                unsubscribe()

        return StreamingResponse(
            generate(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-store", "X-Accel-Buffering": "no"},
        )

    # -- approvals ----------------------------------------------------------

    @app.get("/approvals")
    def list_approvals(pending: bool = True) -> Any:
        return {"approvals": [r.to_public_dict() for r in orchestrator.queue.pending()]}

    @app.post("/approvals/{request_id}")
    async def decide_approval(request_id: str, request: Request) -> Response:
        try:
            body = await request.json()
        except Exception:
            return _error(400, "body must be JSON")
        if not isinstance(body, dict) or "verdict" not in body:
            return _error(400, "body needs a 'verdict'")
        keys = body.get("keys")
        if keys is not None and not (
            isinstance(keys, dict) and all(isinstance(v, str) for v in keys.values())
        ):
            return _error(400, "'keys' must map API names to strings")
        try:
            decision = ApprovalDecision(
                request_id=request_id,
                verdict=str(body["verdict"]),
                edited_source=body.get("edited_source"),
                keys=keys,
            )
        except ValueError as exc:
            return _error(400, str(exc))
        try:
            orchestrator.queue.decide(decision)
        except KeyError:
            return _error(404, "unknown approval request")
        except DecisionConflict:
            return _error(409, "request already decided")
        return JSONResponse({"request_id": request_id, "verdict": decision.verdict})

    # -- registry -----------------------------------------------------------

    @app.get("/tools")
    def list_tools() -> Any:
        return {"tools": orchestrator.registry.entries()}

    @app.get("/tools/{function_name}")
    def get_tool(function_name: str) -> Any:
        try:
            record = orchestrator.registry.fetch(function_name)
        except ToolNotFound:
            return _error(404, "unknown tool")
        return {
            "name": record.name,
            "description": record.description,
            "function-name": record.function_name,
            "source": record.source,
            "origin": record.origin,
            "created_at": record.created_at,
            "api_names": list(record.api_names),
        }

    if console_dir and Path(console_dir).is_dir():
        app.mount("/console", StaticFiles(directory=str(console_dir), html=True), name="console")

    return app


def _sse_frame(event: dict[str, Any]) -> str:
    return (
        f"id: {event['seq']}\n"
        f"event: {event['kind']}\n"
        f"data: {json.dumps(event, default=str)}\n\n"
    )
