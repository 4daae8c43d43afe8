"""Versioned system-prompt templates. Prompts are data, not code: each
agent's system message lives in a plain-text file under a version
directory, so prompt revisions are diffs, not code changes."""

from importlib import resources

PROMPT_VERSION = "v1"

STAGE_TASK_ANALYZER = "task_analyzer"
STAGE_TOOL_MASTER = "tool_master"
STAGE_TOOL_SELECTOR = "tool_selector"
STAGE_CODE_WRITER = "code_writer"
STAGE_TASK_SOLVER = "task_solver"

ALL_STAGES = (
    STAGE_TASK_ANALYZER,
    STAGE_TOOL_MASTER,
    STAGE_TOOL_SELECTOR,
    STAGE_CODE_WRITER,
    STAGE_TASK_SOLVER,
)

#: Placeholder in the selector template replaced by the registry manifest.
AVAILABLE_TOOLS_PLACEHOLDER = "{available_tools}"


def load_template(stage: str, version: str = PROMPT_VERSION) -> str:
    """Read the system prompt template for a stage."""
    package = resources.files(__package__) / version / f"{stage}.txt"
    return package.read_text(encoding="utf-8")


def selector_prompt(manifest_json: str, version: str = PROMPT_VERSION) -> str:
    """Selector system prompt with the registry manifest injected.

    Plain replace, not str.format: the manifest is arbitrary JSON and must
    not be brace-interpreted.
    """
    template = load_template(STAGE_TOOL_SELECTOR, version)
    return template.replace(AVAILABLE_TOOLS_PLACEHOLDER, manifest_json)
