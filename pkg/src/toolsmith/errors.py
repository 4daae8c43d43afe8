"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class ToolsmithError(Exception):
    """Base class for all pipeline errors."""


class ProviderError(ToolsmithError):
    """Chat-completion transport or protocol failure."""

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage


class ReplayError(ProviderError):
    """Replay fixture exhausted or keyed to the wrong stage."""


class StageParseError(ToolsmithError):
    """An agent reply could not be parsed; carries the raw text for traces."""

    def __init__(self, stage: str, message: str, raw_text: str = ""):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.raw_text = raw_text


class RegistryError(ToolsmithError):
    """Base class for tool registry failures."""


class RecordInvalid(RegistryError):
    """A ToolRecord violated an invariant; names the violated invariant."""

    def __init__(self, invariant: str, message: str):
        super().__init__(f"{invariant}: {message}")
        self.invariant = invariant


class ToolNotFound(RegistryError):
    def __init__(self, function_name: str):
        super().__init__(f"no registered tool named {function_name!r}")
        self.function_name = function_name


class RegistryIntegrityError(RegistryError):
    """Manifest and script store diverged (e.g. manifest names a missing file)."""


class SandboxError(ToolsmithError):
    """Base class for sandbox failures."""


class ApprovalMissing(SandboxError):
    """Execution attempted without a matching approve decision; never runs."""


class PolicyViolation(SandboxError):
    """The sandbox policy forbids the requested operation."""


class MissingSecret(SandboxError):
    """Source contains key placeholders with no matching vault entries."""

    def __init__(self, api_names: list[str]):
        super().__init__(f"no secret on file for: {', '.join(api_names)}")
        self.api_names = api_names


class InterpreterNotFound(SandboxError):
    """The configured interpreter does not exist."""


class HarnessUnavailable(ToolsmithError):
    """The tool-harness shim is not installed or not locatable."""


class HarnessProtocolError(ToolsmithError):
    """The harness subprocess crashed or emitted a non-JSON response."""


class SearchAuthError(ToolsmithError):
    """Search endpoint rejected the API key; caller may re-prompt for one."""


class SearchError(ToolsmithError):
    """Search endpoint unreachable or returned malformed data."""


class GenerationRejected(ToolsmithError):
    """A human rejected the generated code; the session terminates."""


class GenerationExhausted(ToolsmithError):
    """The generate-execute-repair loop hit its iteration budget."""

    def __init__(self, tool_name: str, iterations: int):
        super().__init__(f"gave up on {tool_name!r} after {iterations} iterations")
        self.tool_name = tool_name
        self.iterations = iterations


class ConfigError(ToolsmithError):
    """Invalid or inconsistent configuration."""
