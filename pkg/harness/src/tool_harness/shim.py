"""Standalone shim that bridges annotated tool functions and JSON callers.

Runs as a subprocess inside the tool's own interpreter environment:

    python shim.py --mode schema --module /path/tool.py --function tool_fn
    python shim.py --mode invoke --module /path/tool.py --function tool_fn

The request remainder (``{"args": {...}}`` for invoke) arrives as one JSON
document on stdin; the response leaves as exactly one JSON document on
stdout.  Anything the tool prints is rerouted to stderr so stdout stays
machine-readable.

This file must stay self-contained (stdlib only): callers execute it by
path under arbitrary interpreters, without this package on sys.path.
"""

from __future__ import annotations

import argparse
import contextlib
import importlib.util
import inspect
import json
import sys
import traceback
import types
import typing
from typing import Annotated, Any, Union

# Distinct error codes, carried in the response's error.type field.
ERR_IMPORT = "IMPORT_ERROR"
ERR_FUNCTION_NOT_FOUND = "FUNCTION_NOT_FOUND"
ERR_VARIADIC = "VARIADIC_PARAM"
ERR_UNANNOTATED = "UNANNOTATED_PARAM"
ERR_MISSING_DOCSTRING = "MISSING_DOCSTRING"
ERR_MISSING_PARAM_DESCRIPTION = "MISSING_PARAM_DESCRIPTION"
ERR_ARRAY_ITEMS_MISSING = "ARRAY_ITEMS_MISSING"
ERR_UNSUPPORTED_ANNOTATION = "UNSUPPORTED_ANNOTATION"
ERR_MISSING_ARGUMENT = "MISSING_ARGUMENT"
ERR_BAD_REQUEST = "BAD_REQUEST"

_TRACEBACK_EXCERPT_CHARS = 1500


class SchemaError(Exception):
    """Raised when a tool function cannot be described as a call schema."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _load_module(path: str) -> types.ModuleType:
    """Import the tool module from a file path, prints diverted to stderr."""
    name = "_tool_under_harness"
    spec = importlib.util.spec_from_file_location(name, path)
    if spec is None or spec.loader is None:
        raise SchemaError(ERR_IMPORT, f"cannot load module from {path!r}")
    module = importlib.util.module_from_spec(spec)
    sys.modules[name] = module
    with contextlib.redirect_stdout(sys.stderr):
        spec.loader.exec_module(module)
    return module


def _resolve_function(module: types.ModuleType, function: str):
    fn = getattr(module, function, None)
    if fn is None or not callable(fn):
        raise SchemaError(
            ERR_FUNCTION_NOT_FOUND,
            f"module defines no callable named {function!r}",
        )
    return fn


def _unwrap_annotated(annotation: Any) -> tuple[Any, str | None]:
    """Peel Annotated layers, returning (inner type, first string metadata)."""
    description = None
    while typing.get_origin(annotation) is Annotated:
        args = typing.get_args(annotation)
        for meta in args[1:]:
            if isinstance(meta, str) and description is None:
                description = meta
        annotation = args[0]
    return annotation, description


def _find_description(annotation: Any) -> str | None:
    """Locate the Annotated description, tolerating the implicit Optional
    wrap that get_type_hints adds around None-default parameters."""
    inner, description = _unwrap_annotated(annotation)
    if description is not None:
        return description
    if typing.get_origin(inner) is Union:
        for member in typing.get_args(inner):
            _, description = _unwrap_annotated(member)
            if description is not None:
                return description
    return None


def _union_members(annotation: Any) -> list[Any]:
    """Flatten a Union into leaf member types (Annotated layers peeled)."""
    members: list[Any] = []
    for member in typing.get_args(annotation):
        inner, _ = _unwrap_annotated(member)
        if typing.get_origin(inner) is Union:
            members.extend(_union_members(inner))
        elif inner not in members:
            members.append(inner)
    return members


def _map_type(annotation: Any, param: str) -> dict[str, Any]:
    """Map a Python annotation to a JSON-schema fragment.

    Unknown annotations are an error rather than a guess: the caller feeds
    the message back to whoever wrote the tool so they simplify the types.
    """
    annotation, _ = _unwrap_annotated(annotation)

    if annotation is bool:
        return {"type": "boolean"}
    if annotation is int:
        return {"type": "integer"}
    if annotation is float:
        return {"type": "number"}
    if annotation is str:
        return {"type": "string"}
    if annotation is type(None):
        return {"type": "null"}
    if annotation in (dict, typing.Dict):
        return {"type": "object"}

    origin = typing.get_origin(annotation)
    if origin in (dict,):
        return {"type": "object"}
    if annotation in (list, typing.List, tuple, typing.Tuple, set, frozenset):
        raise SchemaError(
            ERR_ARRAY_ITEMS_MISSING,
            f"parameter {param!r} uses a bare sequence type; declare the "
            "item type, e.g. list[int]",
        )
    if origin in (list, set, frozenset):
        (item,) = typing.get_args(annotation) or (None,)
        if item is None:
            raise SchemaError(
                ERR_ARRAY_ITEMS_MISSING,
                f"parameter {param!r} declares an array without an item type",
            )
        return {"type": "array", "items": _map_type(item, param)}
    if origin is tuple:
        args = [a for a in typing.get_args(annotation) if a is not Ellipsis]
        if not args:
            raise SchemaError(
                ERR_ARRAY_ITEMS_MISSING,
                f"parameter {param!r} declares a tuple without item types",
            )
        mapped = []
        for a in args:
            fragment = _map_type(a, param)
            if fragment not in mapped:
                mapped.append(fragment)
        items = mapped[0] if len(mapped) == 1 else {"anyOf": mapped}
        return {"type": "array", "items": items}
    if origin is Union:
        members = _union_members(annotation)
        # int|float collapses to number: integers are numbers in JSON.
        if int in members and float in members:
            members.remove(int)
        mapped = []
        for member in members:
            fragment = _map_type(member, param)
            if fragment not in mapped:
                mapped.append(fragment)
        if len(mapped) == 1:
            return mapped[0]
        return {"anyOf": mapped}

    raise SchemaError(
        ERR_UNSUPPORTED_ANNOTATION,
        f"parameter {param!r} has annotation {annotation!r} that does not "
        "map to a JSON type; use int, float, str, bool, list[...], dict or "
        "unions of those",
    )


def extract_schema(module: types.ModuleType, function: str) -> dict[str, Any]:
    """Build the call schema for one annotated tool function."""
    fn = _resolve_function(module, function)
    doc = inspect.getdoc(fn)
    if not doc or not doc.strip():
        raise SchemaError(
            ERR_MISSING_DOCSTRING,
            f"function {function!r} has no docstring describing the tool",
        )
    try:
        hints = typing.get_type_hints(fn, include_extras=True)
    except Exception as exc:
        raise SchemaError(
            ERR_UNSUPPORTED_ANNOTATION,
            f"annotations on {function!r} did not resolve: {exc}",
        )
    signature = inspect.signature(fn)

    properties: dict[str, Any] = {}
    required: list[str] = []
    for name, param in signature.parameters.items():
        if param.kind in (param.VAR_POSITIONAL, param.VAR_KEYWORD):
            raise SchemaError(
                ERR_VARIADIC,
                f"parameter {name!r} is variadic (*args/**kwargs); variadic "
                "parameters cannot be annotated or validated",
            )
        if name not in hints:
            raise SchemaError(
                ERR_UNANNOTATED, f"parameter {name!r} has no type annotation"
            )
        annotation = hints[name]
        description = _find_description(annotation)
        if not description:
            raise SchemaError(
                ERR_MISSING_PARAM_DESCRIPTION,
                f"parameter {name!r} has no Annotated description string",
            )
        fragment = _map_type(annotation, name)
        fragment["description"] = description
        properties[name] = fragment
        if param.default is param.empty:
            required.append(name)

    schema: dict[str, Any] = {
        "function": function,
        "description": doc.strip().split("\n\n")[0].strip(),
        "parameters": {
            "type": "object",
            "properties": properties,
            "required": required,
        },
    }

    if "return" in hints:
        _, return_description = _unwrap_annotated(hints["return"])
        try:
            returns = _map_type(hints["return"], "return")
        except SchemaError:
            returns = None
        if returns is not None:
            if return_description:
                returns["description"] = return_description
            schema["returns"] = returns
    return schema


def invoke(module: types.ModuleType, function: str, args: dict[str, Any]) -> dict[str, Any]:
    """Call the tool function with keyword args, capturing the outcome.

    Only argument presence is re-checked here; type validation is the
    caller's job before the process is ever spawned.
    """
    fn = _resolve_function(module, function)
    signature = inspect.signature(fn)
    missing = [
        name
        for name, param in signature.parameters.items()
        if param.default is param.empty
        and param.kind not in (param.VAR_POSITIONAL, param.VAR_KEYWORD)
        and name not in args
    ]
    if missing:
        return _error(ERR_MISSING_ARGUMENT, f"missing required arguments: {', '.join(missing)}")

    try:
        with contextlib.redirect_stdout(sys.stderr):
            result = fn(**args)
    except Exception as exc:
        excerpt = traceback.format_exc()[-_TRACEBACK_EXCERPT_CHARS:]
        return {
            "ok": False,
            "error": {
                "type": type(exc).__name__,
                "message": str(exc),
                "traceback_excerpt": excerpt,
            },
        }

    try:
        json.dumps(result)
    except (TypeError, ValueError):
        return {"ok": True, "result": str(result), "stringified": True}
    return {"ok": True, "result": result}


def _error(code: str, message: str, excerpt: str | None = None) -> dict[str, Any]:
    error: dict[str, Any] = {"type": code, "message": message}
    if excerpt:
        error["traceback_excerpt"] = excerpt
    return {"ok": False, "error": error}


def _read_request() -> dict[str, Any]:
    raw = sys.stdin.read().strip()
    if not raw:
        return {}
    value = json.loads(raw)
    if not isinstance(value, dict):
        raise ValueError("request must be a JSON object")
    return value


def run(mode: str, module_path: str, function: str, request: dict[str, Any]) -> dict[str, Any]:
    try:
        module = _load_module(module_path)
    except SchemaError as exc:
        return _error(exc.code, str(exc))
    except BaseException:
        return _error(
            ERR_IMPORT,
            f"module {module_path!r} failed to import",
            traceback.format_exc()[-_TRACEBACK_EXCERPT_CHARS:],
        )

    if mode == "schema":
        try:
            return {"ok": True, "result": extract_schema(module, function)}
        except SchemaError as exc:
            return _error(exc.code, str(exc))
    args = request.get("args", {})
    if not isinstance(args, dict):
        return _error(ERR_BAD_REQUEST, "invoke request field 'args' must be an object")
    try:
        return invoke(module, function, args)
    except SchemaError as exc:
        return _error(exc.code, str(exc))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="tool-harness")
    parser.add_argument("--mode", choices=("schema", "invoke"), required=True)
    parser.add_argument("--module", required=True, help="path to the tool module file")
    parser.add_argument("--function", required=True, help="tool function name")
    options = parser.parse_args(argv)

    try:
        request = _read_request()
    except Exception as exc:
        response = _error(ERR_BAD_REQUEST, f"request is not a JSON object: {exc}")
    else:
        response = run(options.mode, options.module, options.function, request)

    sys.stdout.write(json.dumps(response))
    sys.stdout.write("\n")
    sys.stdout.flush()
    return 0 if response.get("ok") else 1


if __name__ == "__main__":
    sys.exit(main())
