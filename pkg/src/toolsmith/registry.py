"""Persistent store of vetted tool scripts.

Layout on disk:

    <root>/manifest.json            catalog of entries, order preserved
    <root>/tools/<fn>.py            one distilled script per tool
    <root>/tools/<fn>.meta.json     provenance sidecar

The manifest entry keys are exactly "name", "description", and
"function-name" (hyphenated); every consumer, including the selector
prompt, sees that shape verbatim.
"""

from __future__ import annotations

import ast
import json
import os
import re
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from toolsmith.errors import RecordInvalid, RegistryIntegrityError, ToolNotFound

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class ToolRecord:
    """One registry entry: catalog fields plus the script source."""

    name: str
    description: str
    function_name: str
    source: str
    created_at: float = 0.0
    origin: str = "generated"  # generated | imported
    api_names: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.name.strip():
            raise RecordInvalid("non-blank-name", "name must be non-blank")
        if not self.description.strip():
            raise RecordInvalid("non-blank-description", "description must be non-blank")
        if not _IDENT.match(self.function_name):
            raise RecordInvalid(
                "identifier",
                f"function_name {self.function_name!r} is not a Python identifier",
            )
        if f"def {self.function_name}" not in self.source:
            raise RecordInvalid(
                "source-defines-function",
                f"source does not define {self.function_name!r}",
            )

    def manifest_entry(self) -> dict[str, str]:
        return {
            "name": self.name,
            "description": self.description,
            "function-name": self.function_name,
        }

    def meta(self) -> dict[str, Any]:
        return {
            "function-name": self.function_name,
            "created-at": self.created_at,
            "origin": self.origin,
            "api-names": list(self.api_names),
        }


def _is_effectful_assign(node: ast.stmt) -> bool:
    """An assignment whose right side calls something (example invocations
    like `result = tool(...)`); type aliases and constants stay."""
    value = getattr(node, "value", None)
    if value is None:
        return False
    return any(isinstance(child, ast.Call) for child in ast.walk(value))


def distill_source(source: str, function_name: str) -> str:
    """Strip module-level demo code so importing the script has no side
    effects.

    Keeps: the module docstring, imports, simple assignments (type
    aliases, constants), and def/class blocks. Drops: bare expression
    statements (example calls, prints), assignments that invoke anything,
    and module-level if/for/while/try blocks, which generated scripts use
    for smoke tests and dependency installs.
    """
    tree = ast.parse(source)
    kept: list[ast.stmt] = []
    for i, node in enumerate(tree.body):
        if i == 0 and isinstance(node, ast.Expr) and isinstance(node.value, ast.Constant):
            kept.append(node)  # module docstring
        elif isinstance(node, (ast.Assign, ast.AnnAssign)):
            if not _is_effectful_assign(node):
                kept.append(node)
        elif isinstance(
            node,
            (
                ast.Import,
                ast.ImportFrom,
                ast.FunctionDef,
                ast.AsyncFunctionDef,
                ast.ClassDef,
            ),
        ):
            kept.append(node)
    tree.body = kept
    distilled = ast.unparse(tree)
    # ast.unparse validated separately: the distilled text must still parse
    # and still define the function.
    check = ast.parse(distilled)
    names = {n.name for n in ast.walk(check) if isinstance(n, ast.FunctionDef)}
    if function_name not in names:
        raise RecordInvalid(
            "source-defines-function",
            f"distilled source lost the definition of {function_name!r}",
        )
    return distilled if distilled.endswith("\n") else distilled + "\n"


def rename_function(source: str, old: str, new: str) -> str:
    """Rename a module-level function and its in-module references.

    Scope is deliberately narrow: the def itself plus bare-name loads.
    Attribute accesses and strings are left alone.
    """
    tree = ast.parse(source)

    class _Renamer(ast.NodeTransformer):
        def visit_FunctionDef(self, node: ast.FunctionDef):
            if node.name == old:
                node.name = new
            self.generic_visit(node)
            return node

        def visit_Name(self, node: ast.Name):
            if node.id == old:
                node.id = new
            return node

    renamed = ast.unparse(_Renamer().visit(tree))
    return renamed if renamed.endswith("\n") else renamed + "\n"


def _write_atomic(path: Path, data: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


class ToolRegistry:
    """Catalog plus script store; all writes are atomic replaces."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.tools_dir = self.root / "tools"
        self.manifest_path = self.root / "manifest.json"
        self.tools_dir.mkdir(parents=True, exist_ok=True)
        if not self.manifest_path.exists():
            _write_atomic(self.manifest_path, "[]\n")

    # -- manifest -----------------------------------------------------

    def _load_manifest(self) -> list[dict[str, str]]:
        raw = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        if not isinstance(raw, list):
            raise RegistryIntegrityError("manifest.json is not a JSON array")
        for entry in raw:
            missing = {"name", "description", "function-name"} - set(entry)
            if missing:
                raise RegistryIntegrityError(
                    f"manifest entry missing keys: {sorted(missing)}"
                )
        return raw

    def _save_manifest(self, entries: list[dict[str, str]]) -> None:
        _write_atomic(self.manifest_path, json.dumps(entries, indent=2) + "\n")

    def snapshot(self) -> str:
        """The manifest as selector-ready JSON text."""
        return json.dumps(self._load_manifest(), indent=2)

    def entries(self) -> list[dict[str, str]]:
        return self._load_manifest()

    def __len__(self) -> int:
        return len(self._load_manifest())

    def __contains__(self, function_name: str) -> bool:
        return any(
            entry["function-name"] == function_name for entry in self._load_manifest()
        )

    # -- scripts ------------------------------------------------------

    def script_path(self, function_name: str) -> Path:
        return self.tools_dir / f"{function_name}.py"

    def fetch(self, function_name: str) -> ToolRecord:
        entry = next(
            (
                item
                for item in self._load_manifest()
                if item["function-name"] == function_name
            ),
            None,
        )
        if entry is None:
            raise ToolNotFound(function_name)
        path = self.script_path(function_name)
        if not path.exists():
            raise RegistryIntegrityError(
                f"manifest lists {function_name!r} but {path.name} is missing"
            )
        meta: dict[str, Any] = {}
        meta_path = self.tools_dir / f"{function_name}.meta.json"
        if meta_path.exists():
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        return ToolRecord(
            name=entry["name"],
            description=entry["description"],
            function_name=function_name,
            source=path.read_text(encoding="utf-8"),
            created_at=float(meta.get("created-at", 0.0)),
            origin=str(meta.get("origin", "generated")),
            api_names=tuple(meta.get("api-names", ())),
        )

    def _free_name(self, function_name: str, taken: set[str]) -> str:
        if function_name not in taken:
            return function_name
        suffix = 2
        while f"{function_name}_{suffix}" in taken:
            suffix += 1
        return f"{function_name}_{suffix}"

    def register(self, record: ToolRecord, *, distill: bool = True) -> ToolRecord:
        """Add a tool; returns the stored record (possibly renamed).

        Name collisions never overwrite: the newcomer gets a numeric
        suffix and its source is rewritten to define the new name, so
        the script and the catalog stay consistent.
        """
        entries = self._load_manifest()
        taken = {entry["function-name"] for entry in entries}
        final_name = self._free_name(record.function_name, taken)
        source = record.source
        if final_name != record.function_name:
            source = rename_function(source, record.function_name, final_name)
        if distill:
            source = distill_source(source, final_name)
        stored = ToolRecord(
            name=record.name,
            description=record.description,
            function_name=final_name,
            source=source,
            created_at=record.created_at or time.time(),
            origin=record.origin,
            api_names=record.api_names,
        )
        # Script first, then sidecar, then manifest: a crash mid-way
        # leaves an orphan script (harmless) rather than a manifest entry
        # pointing at nothing.
        _write_atomic(self.script_path(final_name), stored.source)
        _write_atomic(
            self.tools_dir / f"{final_name}.meta.json",
            json.dumps(stored.meta(), indent=2) + "\n",
        )
        entries.append(stored.manifest_entry())
        self._save_manifest(entries)
        return stored

    def remove(self, function_name: str) -> None:
        entries = self._load_manifest()
        remaining = [
            entry for entry in entries if entry["function-name"] != function_name
        ]
        if len(remaining) == len(entries):
            raise ToolNotFound(function_name)
        self._save_manifest(remaining)
        for path in (
            self.script_path(function_name),
            self.tools_dir / f"{function_name}.meta.json",
        ):
            try:
                path.unlink()
            except FileNotFoundError:
                pass

    # -- integrity ----------------------------------------------------

    def check(self) -> dict[str, list[str]]:
        """Report (never repair) catalog/script mismatches.

        Returns {"missing_scripts": [...], "orphan_scripts": [...]}.
        """
        entries = self._load_manifest()
        listed = {entry["function-name"] for entry in entries}
        on_disk = {
            path.stem
            for path in self.tools_dir.glob("*.py")
            if not path.name.startswith(".")
        }
        return {
            "missing_scripts": sorted(listed - on_disk),
            "orphan_scripts": sorted(on_disk - listed),
        }
