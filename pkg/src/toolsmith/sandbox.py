"""Isolated execution of generated scripts.

Isolation boundary is a subprocess with its own working directory and a
scrubbed environment allowlist. Execution is gated structurally: the only
way to run code is via an ApprovedScript, which can only be built from an
approve/approve_edited decision whose hash matches the bytes that run.
Secrets are substituted at the execution boundary; the substituted text
exists only in the run file, which is shredded at session close.
"""

from __future__ import annotations

import os
import re
import shutil
import signal
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

from toolsmith.approvals import ApprovalDecision, ApprovalRequest, source_hash
from toolsmith.errors import (
    ApprovalMissing,
    InterpreterNotFound,
    MissingSecret,
    PolicyViolation,
)

STATUS_SUCCEEDED = "succeeded"
STATUS_FAILED = "failed"
STATUS_TIMED_OUT = "timed_out"
STATUS_OUTPUT_TRUNCATED = "output_truncated"

KEY_PLACEHOLDER = re.compile(r"<<API_KEY:([^<>]+)>>")

# Environment variables the sandboxed interpreter may inherit. Everything
# else (provider credentials above all) is dropped.
ENV_ALLOWLIST = (
    "PATH",
    "HOME",
    "LANG",
    "LANGUAGE",
    "LC_ALL",
    "LC_CTYPE",
    "TZ",
    "TMPDIR",
    "TEMP",
    "TMP",
    "SSL_CERT_FILE",
    "SSL_CERT_DIR",
    "REQUESTS_CA_BUNDLE",
    "CURL_CA_BUNDLE",
    "PIP_INDEX_URL",
    "PIP_EXTRA_INDEX_URL",
    "PIP_TRUSTED_HOST",
    "http_proxy",
    "https_proxy",
    "no_proxy",
    "HTTP_PROXY",
    "HTTPS_PROXY",
    "NO_PROXY",
)

NETWORK_ALLOWED = "allowed"
NETWORK_DENIED = "denied"


@dataclass(frozen=True)
class SandboxPolicy:
    workspace_root: Path
    timeout: float = 120.0
    max_output_bytes: int = 1024 * 1024
    network: str = NETWORK_ALLOWED
    allow_package_install: bool = True
    interpreter: str | None = None  # config path; fall back to this process's
    extra_env: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_output_bytes <= 0:
            raise ValueError("max_output_bytes must be > 0")
        if self.network not in (NETWORK_ALLOWED, NETWORK_DENIED):
            raise ValueError(f"unknown network mode {self.network!r}")
        object.__setattr__(self, "workspace_root", Path(self.workspace_root))

    def resolve_interpreter(self) -> str:
        candidate = self.interpreter or os.environ.get("TOOLSMITH_PYTHON") or sys.executable
        resolved = shutil.which(candidate) or (
            candidate if Path(candidate).exists() else None
        )
        if resolved is None:
            raise InterpreterNotFound(f"no interpreter at {candidate!r}")
        return resolved


@dataclass(frozen=True)
class ExecutionOutcome:
    status: str
    exit_code: int | None
    stdout: str
    stderr: str
    duration: float
    artifacts: tuple[str, ...] = ()
    truncated: bool = False

    def __post_init__(self):
        timed_out = self.status == STATUS_TIMED_OUT
        should_succeed = (
            self.exit_code == 0 and not timed_out and not self.truncated
        )
        if should_succeed != (self.status == STATUS_SUCCEEDED):
            raise ValueError(
                f"status {self.status!r} inconsistent with exit_code="
                f"{self.exit_code}, truncated={self.truncated}"
            )

    @property
    def ok(self) -> bool:
        """Did the run complete cleanly? Truncation alone doesn't fail it."""
        return self.exit_code == 0 and self.status != STATUS_TIMED_OUT

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "exit_code": self.exit_code,
            "stdout": self.stdout,
            "stderr": self.stderr,
            "duration": self.duration,
            "artifacts": list(self.artifacts),
            "truncated": self.truncated,
        }


def _classify(exit_code: int | None, timed_out: bool, truncated: bool) -> str:
    if timed_out:
        return STATUS_TIMED_OUT
    if truncated:
        return STATUS_OUTPUT_TRUNCATED
    return STATUS_SUCCEEDED if exit_code == 0 else STATUS_FAILED


@dataclass(frozen=True)
class ApprovedScript:
    """Proof token that a human (or auto-approve) signed off on exactly
    these bytes. Sandbox entry points accept nothing else."""

    source: str
    source_hash: str

    def __post_init__(self):
        if source_hash(self.source) != self.source_hash:
            raise ApprovalMissing("script bytes do not match the approved hash")

    @classmethod
    def from_decision(
        cls, request: ApprovalRequest, decision: ApprovalDecision
    ) -> "ApprovedScript":
        if decision.request_id != request.id:
            raise ApprovalMissing("decision answers a different request")
        if not decision.approved:
            raise ApprovalMissing("request was rejected")
        source = decision.executable_source(request)
        return cls(source=source, source_hash=source_hash(source))


def required_api_names(source: str) -> list[str]:
    """API names referenced by `<<API_KEY:NAME>>` placeholders, in order."""
    seen: list[str] = []
    for match in KEY_PLACEHOLDER.finditer(source):
        name = match.group(1).strip()
        if name.lower() not in (item.lower() for item in seen):
            seen.append(name)
    return seen


def inject_secrets(source: str, secrets: dict[str, str]) -> str:
    """Replace every `<<API_KEY:NAME>>` with its secret (name-insensitive).

    The result must never reach the registry, trace, or provider — only
    the ephemeral run file.
    """
    folded = {name.strip().lower(): value for name, value in secrets.items()}
    missing = [
        name for name in required_api_names(source) if name.lower() not in folded
    ]
    if missing:
        raise MissingSecret(missing)

    def _sub(match: re.Match) -> str:
        return folded[match.group(1).strip().lower()]

    return KEY_PLACEHOLDER.sub(_sub, source)


def _drain(stream: IO[bytes], cap: int, sink: list, flag: list) -> None:
    """Collect up to cap bytes; keep draining past the cap so the child
    never blocks on a full pipe."""
    collected = 0
    while True:
        chunk = stream.read(65536)
        if not chunk:
            return
        if collected < cap:
            take = chunk[: cap - collected]
            sink.append(take)
            collected += len(take)
            if len(take) < len(chunk):
                flag.append(True)
        else:
            flag.append(True)


class Sandbox:
    """One per session. Owns the workspace, the per-session package dir,
    and the list of secret-bearing run files to shred at close."""

    def __init__(self, session_id: str, policy: SandboxPolicy):
        self.session_id = session_id
        self.policy = policy
        # Children execute with cwd=workspace, so every path handed to
        # them must already be absolute, not relative to our own cwd.
        self.session_dir = (policy.workspace_root / session_id).resolve()
        self.workspace = self.session_dir / "workspace"
        self.scripts_dir = self.session_dir / "scripts"
        self.packages_dir = self.session_dir / "packages"
        for path in (self.workspace, self.scripts_dir, self.packages_dir):
            path.mkdir(parents=True, exist_ok=True)
        self._run_counter = 0
        self._secret_files: list[Path] = []
        self._lock = threading.Lock()

    # -- environment ----------------------------------------------------

    def child_env(self) -> dict[str, str]:
        """Scrubbed environment for anything that runs tool code."""
        env = {
            key: os.environ[key] for key in ENV_ALLOWLIST if key in os.environ
        }
        env.update(self.policy.extra_env)
        env["PYTHONPATH"] = str(self.packages_dir)
        env["PIP_TARGET"] = str(self.packages_dir)
        env["PYTHONUNBUFFERED"] = "1"
        env["PYTHONDONTWRITEBYTECODE"] = "1"
        return env

    def materialize_script(
        self,
        source: str,
        label: str,
        secrets: dict[str, str] | None = None,
    ) -> Path:
        """Write source (secrets substituted) to the scripts dir; files
        that received a secret are queued for shredding."""
        injected = inject_secrets(source, secrets or {})
        with self._lock:
            self._run_counter += 1
            path = self.scripts_dir / f"{label}_{self._run_counter:03d}.py"
        path.write_text(injected, encoding="utf-8")
        if injected != source:
            self._secret_files.append(path)
        return path

    # -- workspace bookkeeping -------------------------------------------

    def workspace_snapshot(self) -> set[Path]:
        """Current workspace files; pair with new_files_since for diffs."""
        return self._workspace_files()

    def new_files_since(self, before: set[Path]) -> tuple[str, ...]:
        return self._contained(self._workspace_files() - before)

    def _workspace_files(self) -> set[Path]:
        return {
            path
            for path in self.workspace.rglob("*")
            if path.is_file() and not path.name.startswith(".")
        }

    def _contained(self, paths: Iterable[Path]) -> tuple[str, ...]:
        root = self.workspace.resolve()
        kept = []
        for path in sorted(paths):
            resolved = path.resolve()
            if resolved.is_relative_to(root):
                kept.append(str(resolved))
        return tuple(kept)

    # -- execution --------------------------------------------------------

    def execute(
        self,
        script: ApprovedScript,
        secrets: dict[str, str] | None = None,
        label: str = "run",
    ) -> ExecutionOutcome:
        """Run approved source in the workspace; capture outcome.

        Secrets are injected here, after approval, so the human reviewed
        placeholder-bearing text and the secret-bearing file never leaves
        the workspace.
        """
        interpreter = self.policy.resolve_interpreter()
        run_path = self.materialize_script(script.source, label, secrets)

        before = self._workspace_files()
        cap = self.policy.max_output_bytes
        out_chunks: list[bytes] = []
        err_chunks: list[bytes] = []
        out_flag: list[bool] = []
        err_flag: list[bool] = []
        started = time.monotonic()
        process = subprocess.Popen(
            [interpreter, str(run_path)],
            cwd=self.workspace,
            env=self.child_env(),
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            stdin=subprocess.DEVNULL,
            start_new_session=True,
        )
        readers = [
            threading.Thread(
                target=_drain, args=(process.stdout, cap, out_chunks, out_flag)
            ),
            threading.Thread(
                target=_drain, args=(process.stderr, cap, err_chunks, err_flag)
            ),
        ]
        for reader in readers:
            reader.start()
        timed_out = False
        try:
            process.wait(timeout=self.policy.timeout)
        except subprocess.TimeoutExpired:
            timed_out = True
            self._kill_tree(process)
            process.wait()
        for reader in readers:
            reader.join()
        duration = time.monotonic() - started

        stdout = b"".join(out_chunks).decode("utf-8", errors="replace")
        stderr = b"".join(err_chunks).decode("utf-8", errors="replace")
        truncated = bool(out_flag or err_flag)
        exit_code = None if timed_out else process.returncode
        created = self._workspace_files() - before
        return ExecutionOutcome(
            status=_classify(exit_code, timed_out, truncated),
            exit_code=exit_code,
            stdout=stdout,
            stderr=stderr,
            duration=duration,
            artifacts=self._contained(created),
            truncated=truncated,
        )

    def bootstrap_environment(self, script: ApprovedScript) -> ExecutionOutcome:
        """Run a dependency-install script under the install policy."""
        if not self.policy.allow_package_install:
            raise PolicyViolation(
                "package install disabled by policy; provide dependencies "
                "offline or enable allow_package_install"
            )
        if self.policy.network == NETWORK_DENIED:
            raise PolicyViolation(
                "network denied by policy; package install needs network"
            )
        return self.execute(script, secrets={}, label="bootstrap")

    @staticmethod
    def _kill_tree(process: subprocess.Popen) -> None:
        try:
            os.killpg(os.getpgid(process.pid), signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            try:
                process.kill()
            except ProcessLookupError:
                pass

    # -- teardown ----------------------------------------------------------

    def shred_secret_files(self) -> None:
        """Overwrite then unlink every run file that has a secret in it."""
        for path in self._secret_files:
            try:
                size = path.stat().st_size
                path.write_bytes(b"\0" * size)
                path.unlink()
            except FileNotFoundError:
                pass
        self._secret_files.clear()

    def close(self) -> None:
        self.shred_secret_files()
