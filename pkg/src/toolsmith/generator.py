"""The generate-execute-repair loop.

Drives the code-writer agent: draft code, get human approval, run it in
the sandbox, feed failures back, repeat within an iteration budget. The
API branch detects the writer's key sentinel, collects the key into the
vault (never into the transcript), retrieves documentation, and re-prompts
with a placeholder convention instead of the key itself.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from typing import Any, Callable

from toolsmith import gateway, prompts, registry as registry_mod, stages
from toolsmith.approvals import (
    ApprovalDecision,
    ApprovalRequest,
    SecretVault,
    api_key_request,
    code_review_request,
)
from toolsmith.errors import (
    GenerationExhausted,
    GenerationRejected,
    MissingSecret,
)
from toolsmith.harness_client import HarnessClient
from toolsmith.registry import ToolRecord, ToolRegistry
from toolsmith.sandbox import (
    ApprovedScript,
    ExecutionOutcome,
    Sandbox,
    required_api_names,
)
from toolsmith.stages import ToolSpec
from toolsmith.trace import (
    EVENT_EXECUTION,
    EVENT_GENERATION_ITERATION,
    EVENT_TOOL_REGISTERED,
    TraceLog,
)
from toolsmith.webretrieval import ApiDocBundle, SearchClient

STATUS_DRAFTING = "drafting"
STATUS_AWAITING_APPROVAL = "awaiting_approval"
STATUS_AWAITING_KEYS = "awaiting_keys"
STATUS_EXECUTING = "executing"
STATUS_REPAIRED_RETRY = "repaired_retry"
STATUS_SUCCEEDED = "succeeded"
STATUS_EXHAUSTED = "exhausted"
STATUS_REJECTED = "rejected"

DEFAULT_MAX_ITERATIONS = 5
FEEDBACK_CAP_CHARS = 8 * 1024
_EXCERPT_CHARS = 500

_CODE_BLOCK = re.compile(r"```(?:[a-zA-Z0-9_-]*)\n(.*?)```", re.DOTALL)

# Both sentinel spellings from the writer's instructions, matched per line.
_SENTINEL_ASSIGN = re.compile(r"^\s*API_KEY_REQUIRED\s*=\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)
_SENTINEL_COLON = re.compile(r"^\s*API\s+KEY\s+REQUIRED\s*:\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)


def detect_api_sentinel(text: str) -> list[str]:
    """API names the writer asked a key for, normalized lowercase."""
    names: list[str] = []
    for pattern in (_SENTINEL_ASSIGN, _SENTINEL_COLON):
        for match in pattern.finditer(text):
            raw = match.group(1)
            for piece in raw.split(","):
                name = piece.strip().strip("\"'`<>.;")
                name = re.sub(r"\s+", " ", name).strip().lower()
                if name and name not in names:
                    names.append(name)
    return names


def extract_code_blocks(text: str) -> list[str]:
    return [match.group(1).strip() for match in _CODE_BLOCK.finditer(text)]


def extract_draft_source(text: str) -> str | None:
    """The executable unit for one writer reply.

    Install snippet and tool body run as one approved unit, so every
    fenced block that parses as Python is included (in order); if none
    parse, the last block is taken verbatim so its syntax error surfaces
    in the sandbox and feeds the repair loop.
    """
    blocks = extract_code_blocks(stages.strip_terminate(text))
    if not blocks:
        return None
    parsable = []
    for block in blocks:
        try:
            ast.parse(block)
        except SyntaxError:
            continue
        parsable.append(block)
    if parsable:
        return "\n\n".join(parsable) + "\n"
    return blocks[-1] + "\n"


def find_function_name(source: str, hint: str = "") -> str | None:
    """Pick the tool's public function from the draft.

    Preference order: exact match to the normalized hint, then the only
    public def, then the last public def.
    """
    try:
        tree = ast.parse(source)
    except SyntaxError:
        return None
    public = [
        node.name
        for node in tree.body
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef))
        and not node.name.startswith("_")
    ]
    if not public:
        return None
    normalized_hint = re.sub(r"[^a-z0-9]+", "_", hint.lower()).strip("_")
    for name in public:
        if name.lower() == normalized_hint:
            return name
    return public[0] if len(public) == 1 else public[-1]


def augment_with_docs(spec: ToolSpec, docs: ApiDocBundle, key_available: bool) -> str:
    """Build the re-prompt after an API sentinel: docs plus the placeholder
    instruction. The key itself never appears here."""
    lines = [
        f"You requested an API key for {docs.api_name}.",
    ]
    if key_available:
        lines.append(
            f"The user provided the key. Do NOT ask for it again and never "
            f"write the key itself. Wherever the code needs the key, use the "
            f"exact placeholder string <<API_KEY:{docs.api_name}>> — it is "
            f"substituted at run time."
        )
    else:
        lines.append(
            f"No key is available for {docs.api_name}. Implement the tool "
            f"without that API if possible, or fail gracefully with a clear "
            f"message."
        )
    if docs.empty:
        lines.append(
            "Documentation retrieval failed; rely on your own knowledge of "
            "the API."
        )
    else:
        lines.append(f"Current documentation for {docs.api_name}:")
        for snippet in docs.snippets:
            lines.append(f"- {snippet.title} ({snippet.link}): {snippet.snippet}")
        for page in docs.fetched_pages:
            lines.append(f"--- page: {page.url} ---")
            lines.append(page.extracted_text)
    lines.append(
        f"Now reply with the complete tool code for {spec.name!r} "
        f"({spec.description})."
    )
    return "\n".join(lines)


@dataclass
class GenerationLoopState:
    spec: ToolSpec
    iteration: int = 0  # 1-based once the loop starts
    transcript: list[gateway.ChatMessage] = field(default_factory=list)
    last_outcome: ExecutionOutcome | None = None
    api_needed: list[str] = field(default_factory=list)
    status: str = STATUS_DRAFTING


@dataclass(frozen=True)
class GenerationResult:
    record: ToolRecord
    schema: dict[str, Any]
    iterations: int
    usage: gateway.Usage


class ToolGenerator:
    """One instance per session; generates one tool per generate() call."""

    def __init__(
        self,
        *,
        provider,
        sandbox: Sandbox,
        registry: ToolRegistry,
        request_approval: Callable[[ApprovalRequest], ApprovalDecision],
        vault: SecretVault,
        trace: TraceLog,
        session_id: str,
        search_client: SearchClient | None = None,
        search_key_name: str | None = None,
        max_iterations: int = DEFAULT_MAX_ITERATIONS,
    ):
        if max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        self.provider = provider
        self.sandbox = sandbox
        self.registry = registry
        self.request_approval = request_approval
        self.vault = vault
        self.trace = trace
        self.session_id = session_id
        self.search_client = search_client
        self.search_key_name = search_key_name
        self.max_iterations = max_iterations

    # -- helpers -----------------------------------------------------------

    def _redact(self, text: str) -> str:
        return gateway.redact_text(text, self.vault.as_mapping())

    def _harness(self) -> HarnessClient:
        return HarnessClient(
            interpreter=self.sandbox.policy.resolve_interpreter(),
            env=self.sandbox.child_env(),
            cwd=self.sandbox.workspace,
            timeout=self.sandbox.policy.timeout,
        )

    def _feedback(self, state: GenerationLoopState, text: str) -> None:
        state.transcript.append(gateway.user(self._redact(text)[:FEEDBACK_CAP_CHARS]))

    def _trace_iteration(
        self,
        state: GenerationLoopState,
        draft_hash: str | None,
        outcome_status: str,
        stderr_excerpt: str = "",
    ) -> None:
        self.trace.append(
            EVENT_GENERATION_ITERATION,
            session_id=self.session_id,
            tool=state.spec.name,
            iteration=state.iteration,
            draft_hash=draft_hash,
            outcome_status=outcome_status,
            stderr_excerpt=self._redact(stderr_excerpt)[:_EXCERPT_CHARS],
        )

    # -- API branch ----------------------------------------------------------

    def _collect_keys(self, state: GenerationLoopState, names: list[str]) -> bool:
        """Ask the human for missing keys; True iff all names have secrets.

        Auto-approve never short-circuits this request kind, so unattended
        runs must preload the vault instead.
        """
        missing = self.vault.missing(tuple(names))
        if not missing:
            return True
        request = api_key_request(
            self.session_id,
            tuple(missing),
            context=f"tool {state.spec.name!r} needs API key(s)",
        )
        decision = self.request_approval(request)
        if decision.keys:
            for name, secret in decision.keys.items():
                if secret:
                    self.vault.put(name, secret)
        return not self.vault.missing(tuple(names))

    def _retrieve_docs(self, api_name: str) -> ApiDocBundle:
        if self.search_client is None:
            return ApiDocBundle(api_name=api_name, failures=("no search endpoint configured",))
        search_key = (
            self.vault.get(self.search_key_name) if self.search_key_name else None
        )
        try:
            results = self.search_client.search(
                f"{api_name} api documentation", api_key=search_key
            )
            return self.search_client.fetch_pages(api_name, results)
        except Exception as exc:  # retrieval is best-effort by contract
            return ApiDocBundle(api_name=api_name, failures=(str(exc),))

    def _handle_sentinel(self, state: GenerationLoopState, names: list[str]) -> None:
        state.status = STATUS_AWAITING_KEYS
        state.api_needed = list(names)
        key_available = self._collect_keys(state, names)
        prompt_parts = []
        for name in names:
            bundle = self._retrieve_docs(name)
            prompt_parts.append(augment_with_docs(state.spec, bundle, key_available))
        self._feedback(state, "\n\n".join(prompt_parts))
        self._trace_iteration(state, None, STATUS_AWAITING_KEYS)
        state.status = STATUS_DRAFTING

    # -- validation ------------------------------------------------------------

    def validate_tool(self, source: str, function_name: str) -> tuple[dict | None, str, str]:
        """Harness-validate the distilled draft.

        Returns (schema or None, error text for feedback, distilled source).
        """
        try:
            distilled = registry_mod.distill_source(source, function_name)
        except Exception as exc:
            return None, f"could not isolate the tool definition: {exc}", source
        path = self.sandbox.materialize_script(
            distilled, f"validate_{function_name}", secrets=self.vault.as_mapping()
        )
        response = self._harness().schema(path, function_name)
        if response.ok:
            return response.result, "", distilled
        return (
            None,
            f"{response.error_code}: {response.error_message}",
            distilled,
        )

    # -- the loop -----------------------------------------------------------------

    def generate(self, spec: ToolSpec) -> GenerationResult:
        state = GenerationLoopState(spec=spec)
        state.transcript = [
            gateway.system(prompts.load_template(prompts.STAGE_CODE_WRITER)),
            gateway.user(
                f"Create this tool:\nName: {spec.name}\nDescription: {spec.description}"
            ),
        ]
        usages: list[gateway.Usage] = []

        while state.iteration < self.max_iterations:
            state.iteration += 1
            state.status = STATUS_DRAFTING
            reply, usage = self.provider.complete(
                prompts.STAGE_CODE_WRITER, state.transcript
            )
            usages.append(usage)
            state.transcript.append(reply)
            text = reply.content

            source = extract_draft_source(text)
            sentinel = detect_api_sentinel(text)
            if sentinel and (source is None or "def " not in source):
                self._handle_sentinel(state, sentinel)
                continue

            if source is None:
                self._feedback(
                    state,
                    "Your reply contained no fenced code block. Reply with the "
                    "complete tool implementation in one ```python block.",
                )
                self._trace_iteration(state, None, "no_code")
                state.status = STATUS_REPAIRED_RETRY
                continue

            function_name = find_function_name(source, hint=spec.name)

            # Human gate: the exact bytes that would run.
            state.status = STATUS_AWAITING_APPROVAL
            request = code_review_request(
                self.session_id,
                source,
                context=f"tool {spec.name!r}, draft {state.iteration}",
            )
            decision = self.request_approval(request)
            if not decision.approved:
                state.status = STATUS_REJECTED
                self._trace_iteration(state, request.source_hash, STATUS_REJECTED)
                raise GenerationRejected(
                    f"human rejected draft {state.iteration} of {spec.name!r}"
                )
            approved = ApprovedScript.from_decision(request, decision)
            if decision.verdict == "approve_edited":
                function_name = find_function_name(approved.source, hint=spec.name)

            # Execution; a missing key here surfaces as a key request.
            state.status = STATUS_EXECUTING
            try:
                outcome = self._execute_approved(state, approved)
            except MissingSecret as exc:
                if self._collect_keys(state, list(exc.api_names)):
                    outcome = self._execute_approved(state, approved)
                else:
                    self._feedback(
                        state,
                        f"No API key is available for: {', '.join(exc.api_names)}. "
                        "Rewrite the tool so it does not require that key.",
                    )
                    self._trace_iteration(state, approved.source_hash, "missing_key")
                    state.status = STATUS_REPAIRED_RETRY
                    continue
            state.last_outcome = outcome

            if not outcome.ok:
                self._trace_iteration(
                    state, approved.source_hash, outcome.status, outcome.stderr
                )
                self._feedback(
                    state,
                    "The code failed when executed.\n"
                    f"status: {outcome.status}, exit code: {outcome.exit_code}\n"
                    f"stderr:\n{outcome.stderr}\n"
                    f"stdout:\n{outcome.stdout}\n"
                    "Analyze the error and reply with the complete corrected code.",
                )
                state.status = STATUS_REPAIRED_RETRY
                continue

            if not outcome.stdout.strip():
                self._trace_iteration(state, approved.source_hash, "no_output")
                self._feedback(
                    state,
                    "The code executed but printed nothing. Include an example "
                    "call of the tool function that prints its result, then "
                    "reply with the complete code.",
                )
                state.status = STATUS_REPAIRED_RETRY
                continue

            if function_name is None:
                self._trace_iteration(state, approved.source_hash, "no_function")
                self._feedback(
                    state,
                    "The code defines no public function. The tool must be a "
                    "named Python function; reply with the complete code.",
                )
                state.status = STATUS_REPAIRED_RETRY
                continue

            schema, validation_error, distilled = self.validate_tool(
                approved.source, function_name
            )
            if schema is None:
                self._trace_iteration(
                    state, approved.source_hash, "validation_failed", validation_error
                )
                self._feedback(
                    state,
                    f"The code ran, but the tool interface failed validation: "
                    f"{validation_error}\nFix the function signature/docstring "
                    "and reply with the complete code.",
                )
                state.status = STATUS_REPAIRED_RETRY
                continue

            state.status = STATUS_SUCCEEDED
            self._trace_iteration(state, approved.source_hash, outcome.status)
            record = self.registry.register(
                ToolRecord(
                    name=spec.name,
                    description=spec.description,
                    function_name=function_name,
                    source=distilled,
                    api_names=tuple(required_api_names(approved.source)),
                ),
                distill=False,
            )
            self.trace.append(
                EVENT_TOOL_REGISTERED,
                session_id=self.session_id,
                function_name=record.function_name,
                name=record.name,
            )
            return GenerationResult(
                record=record,
                schema=schema,
                iterations=state.iteration,
                usage=gateway.meter_session(usages),
            )

        state.status = STATUS_EXHAUSTED
        raise GenerationExhausted(spec.name, self.max_iterations)

    def _execute_approved(
        self, state: GenerationLoopState, approved: ApprovedScript
    ) -> ExecutionOutcome:
        outcome = self.sandbox.execute(
            approved,
            secrets=self.vault.as_mapping(),
            label=f"draft_{state.iteration}",
        )
        self.trace.append(
            EVENT_EXECUTION,
            session_id=self.session_id,
            source_hash=approved.source_hash,
            status=outcome.status,
            exit_code=outcome.exit_code,
            duration=outcome.duration,
            truncated=outcome.truncated,
        )
        return outcome
