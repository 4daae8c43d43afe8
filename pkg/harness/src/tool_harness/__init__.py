"""JSON stdin/stdout shim for annotated Python tool functions."""

from pathlib import Path

from tool_harness import shim
from tool_harness.shim import extract_schema, invoke, main, run

#: Path of the self-contained shim script; callers may exec it by path
#: under any interpreter without this package installed there.
SHIM_PATH = Path(shim.__file__).resolve()

__all__ = ["SHIM_PATH", "extract_schema", "invoke", "main", "run"]
