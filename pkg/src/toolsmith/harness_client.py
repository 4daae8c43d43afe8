"""Subprocess client for the tool-harness shim.

The shim is a separate package; this client talks to it only through its
CLI protocol (flags + one JSON document each way) so either side can be
swapped independently. The shim script is executed by path under the
sandbox interpreter, so tool imports resolve against the session's
package directory, not ours.
"""

from __future__ import annotations

import json
import os
import signal
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from toolsmith.errors import HarnessProtocolError, HarnessUnavailable


def locate_shim() -> Path:
    """Find the installed shim script; env override for odd layouts."""
    override = os.environ.get("TOOL_HARNESS_SHIM")
    if override:
        path = Path(override)
        if not path.exists():
            raise HarnessUnavailable(f"TOOL_HARNESS_SHIM points at missing {path}")
        return path
    try:
        import tool_harness
    except ImportError:
        raise HarnessUnavailable(
            "the tool-harness package is not installed; install it or set "
            "TOOL_HARNESS_SHIM to the shim script path"
        )
    return Path(tool_harness.SHIM_PATH)


@dataclass(frozen=True)
class HarnessResponse:
    """Parsed shim reply plus whatever the tool printed (on stderr)."""

    ok: bool
    result: Any = None
    error: dict[str, Any] | None = None
    stderr: str = ""
    stringified: bool = False

    @property
    def error_code(self) -> str | None:
        return None if self.error is None else self.error.get("type")

    @property
    def error_message(self) -> str:
        return "" if self.error is None else str(self.error.get("message", ""))


class HarnessClient:
    """Runs the shim under a given interpreter/env; one process per call."""

    def __init__(
        self,
        interpreter: str,
        env: Mapping[str, str] | None = None,
        cwd: str | Path | None = None,
        timeout: float = 120.0,
    ):
        self.shim_path = locate_shim()
        self.interpreter = interpreter
        self.env = dict(env) if env is not None else None
        self.cwd = str(cwd) if cwd is not None else None
        self.timeout = timeout

    def _call(
        self, mode: str, module_path: str | Path, function: str, request: dict
    ) -> HarnessResponse:
        command = [
            self.interpreter,
            str(self.shim_path),
            "--mode",
            mode,
            "--module",
            str(module_path),
            "--function",
            function,
        ]
        try:
            process = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                env=self.env,
                cwd=self.cwd,
                start_new_session=True,
            )
        except OSError as exc:
            raise HarnessUnavailable(f"cannot start harness process: {exc}")
        try:
            stdout, stderr = process.communicate(
                json.dumps(request).encode("utf-8"), timeout=self.timeout
            )
        except subprocess.TimeoutExpired:
            try:
                os.killpg(os.getpgid(process.pid), signal.SIGKILL)
            except (ProcessLookupError, PermissionError):
                process.kill()
            process.wait()
            raise HarnessProtocolError(
                f"harness call timed out after {self.timeout}s "
                f"({mode} {function})"
            )

        stderr_text = stderr.decode("utf-8", errors="replace")
        raw = stdout.decode("utf-8", errors="replace").strip()
        if not raw:
            raise HarnessProtocolError(
                f"harness produced no response (exit {process.returncode}); "
                f"stderr: {stderr_text[-500:]}"
            )
        try:
            payload = json.loads(raw.splitlines()[-1])
        except json.JSONDecodeError:
            raise HarnessProtocolError(
                f"harness response is not JSON: {raw[:500]!r}"
            )
        if not isinstance(payload, dict) or "ok" not in payload:
            raise HarnessProtocolError(
                f"harness response missing 'ok' field: {payload!r}"
            )
        return HarnessResponse(
            ok=bool(payload["ok"]),
            result=payload.get("result"),
            error=payload.get("error"),
            stderr=stderr_text,
            stringified=bool(payload.get("stringified", False)),
        )

    def schema(self, module_path: str | Path, function: str) -> HarnessResponse:
        """Extract the call schema; error codes explain validation failures."""
        return self._call("schema", module_path, function, {})

    def invoke(
        self, module_path: str | Path, function: str, args: dict[str, Any]
    ) -> HarnessResponse:
        """Call the tool with keyword arguments."""
        return self._call("invoke", module_path, function, {"args": args})
