"""Command-line surface: run a task end to end, serve the HTTP API, browse
the registry, and structurally check replay fixtures.

Exit codes for `run`: 0 answered (with or without tools), 3 rejected by
human, 4 generation exhausted, 5 error, 2 usage/config problems.
"""

from __future__ import annotations

import argparse
import getpass
import json
import sys
import tempfile
import os
import subprocess
from pathlib import Path

from toolsmith import config as config_mod
from toolsmith.approvals import (
    ApprovalDecision,
    ApprovalRequest,
    KIND_API_KEY_REQUEST,
    KIND_CODE_REVIEW,
    VERDICT_APPROVE,
    VERDICT_APPROVE_EDITED,
    VERDICT_REJECT,
)
from toolsmith.errors import ConfigError, ReplayError, ToolNotFound, ToolsmithError
from toolsmith.gateway import load_fixture
from toolsmith.orchestrator import (
    OK_TERMINALS,
    Orchestrator,
    TERMINAL_GENERATION_EXHAUSTED,
    TERMINAL_REJECTED_BY_HUMAN,
    session_report,
)
from toolsmith.registry import ToolRegistry

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_REJECTED = 3
EXIT_EXHAUSTED = 4
EXIT_ERROR = 5

_TERMINAL_EXIT = {
    TERMINAL_REJECTED_BY_HUMAN: EXIT_REJECTED,
    TERMINAL_GENERATION_EXHAUSTED: EXIT_EXHAUSTED,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toolsmith",
        description="Task-solving agent that retrieves or writes its own tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve one task end to end")
    run.add_argument("task", help="the task to solve")
    _add_shared_flags(run)
    run.add_argument(
        "--auto-approve",
        action="store_true",
        default=None,
        help="approve generated code without prompting (never skips API key prompts)",
    )
    run.add_argument(
        "--continue-on-exhausted",
        action="store_true",
        default=None,
        help="keep solving with whatever tools exist when generation gives up",
    )
    run.add_argument("--json", action="store_true", help="print the report as JSON")

    serve = sub.add_parser("serve", help="start the HTTP service")
    _add_shared_flags(serve)
    serve.add_argument("--bind", default="127.0.0.1:8756", help="host:port to listen on")
    serve.add_argument(
        "--auto-approve", action="store_true", default=None, help=argparse.SUPPRESS
    )
    serve.add_argument(
        "--console-dir", default=None, help="directory of built console assets"
    )

    tools = sub.add_parser("tools", help="list registered tools")
    tools.add_argument("function_name", nargs="?", help="show one tool's source")
    tools.add_argument("--registry", default=None, help="registry directory")
    tools.add_argument("--json", action="store_true", help="machine-readable output")

    check = sub.add_parser("replay-check", help="validate a replay fixture file")
    check.add_argument("fixture", help="fixture path")
    return parser


def _add_shared_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--registry", default=None, help="registry directory")
    parser.add_argument("--provider", choices=("live", "replay"), default=None)
    parser.add_argument("--replay-fixture", default=None, help="fixture for --provider replay")
    parser.add_argument("--search-endpoint", default=None, help="search API base URL")
    parser.add_argument("--max-iterations", type=int, default=None)
    parser.add_argument("--max-steps", type=int, default=None)
    parser.add_argument("--timeout-secs", type=float, default=None)
    parser.add_argument("--runs-root", default=None, help="directory for session run dirs")


def _assemble_config(args: argparse.Namespace) -> config_mod.AppConfig:
    if args.config:
        base = config_mod.load_config(args.config)
    else:
        if args.provider == "replay" and args.replay_fixture:
            base = config_mod.from_dict(
                {"provider": {"kind": "replay", "fixture_path": args.replay_fixture}}
            )
        else:
            raise ConfigError(
                "no config given: pass --config FILE, or --provider replay "
                "with --replay-fixture FILE"
            )
    return config_mod.apply_overrides(
        base,
        registry_path=args.registry,
        runs_root=getattr(args, "runs_root", None),
        provider_kind=args.provider,
        replay_fixture=args.replay_fixture,
        search_endpoint=args.search_endpoint,
        max_iterations=args.max_iterations,
        max_steps=args.max_steps,
        timeout_secs=args.timeout_secs,
        auto_approve=getattr(args, "auto_approve", None),
        continue_on_exhausted=getattr(args, "continue_on_exhausted", None),
    )


# -- interactive approval prompts ------------------------------------------


def _prompt_code_review(request: ApprovalRequest) -> ApprovalDecision:
    print(f"\n=== approval required: {request.context or request.id} ===")
    print(request.source)
    print("=== end of code ===")
    interactive = sys.stdin.isatty()
    while True:
        if interactive:
            answer = input("approve? [y]es / [n]o / [e]dit: ").strip().lower()
        else:
            line = sys.stdin.readline()
            if not line:
                answer = "n"  # closed stdin: refuse rather than hang
            else:
                answer = line.strip().lower()
        if answer in ("y", "yes", ""):
            return ApprovalDecision(request.id, VERDICT_APPROVE)
        if answer in ("n", "no"):
            return ApprovalDecision(request.id, VERDICT_REJECT)
        if answer in ("e", "edit") and interactive:
            edited = _edit_in_editor(request.source or "")
            if edited.strip():
                return ApprovalDecision(
                    request.id, VERDICT_APPROVE_EDITED, edited_source=edited
                )
            print("empty edit; try again")
        elif not interactive:
            return ApprovalDecision(request.id, VERDICT_REJECT)


def _edit_in_editor(source: str) -> str:
    editor = os.environ.get("EDITOR", "vi")
    with tempfile.NamedTemporaryFile(
        "w", suffix=".py", delete=False, encoding="utf-8"
    ) as handle:
        handle.write(source)
        path = handle.name
    try:
        subprocess.call([editor, path])
        return Path(path).read_text(encoding="utf-8")
    finally:
        os.unlink(path)


def _prompt_api_keys(request: ApprovalRequest) -> ApprovalDecision:
    print(f"\n=== API key(s) required: {', '.join(request.api_names)} ===")
    keys: dict[str, str] = {}
    interactive = sys.stdin.isatty()
    for name in request.api_names:
        if interactive:
            value = getpass.getpass(f"key for {name} (empty to decline): ")
        else:
            value = sys.stdin.readline().strip()
        if value:
            keys[name] = value
    return ApprovalDecision(request.id, VERDICT_APPROVE, keys=keys)


def _attach_prompt_loop(orchestrator: Orchestrator, auto_approve: bool) -> None:
    """Answer approval requests on stdin; submit() invokes this listener on
    the session thread, so prompts appear exactly when the session blocks."""

    def on_request(request: ApprovalRequest) -> None:
        if request.kind == KIND_CODE_REVIEW and auto_approve:
            return  # orchestrator decides these itself
        if request.kind == KIND_API_KEY_REQUEST:
            decision = _prompt_api_keys(request)
        else:
            decision = _prompt_code_review(request)
        try:
            orchestrator.queue.decide(decision)
        except Exception:
            pass  # someone else decided first

    orchestrator.queue.add_listener(on_request)


# -- commands ----------------------------------------------------------------


def _print_report(session, as_json: bool) -> None:
    report = session_report(session)
    if as_json:
        print(json.dumps(report, indent=2, default=str))
        return
    print(f"\nsession:  {report['session_id']}")
    print(f"terminal: {report['terminal']}")
    if report.get("error"):
        print(f"error:    {report['error']}")
    if report["answer"]:
        print(f"\nanswer:\n{report['answer']}")
    totals = report["totals"]
    print(
        f"\nusage: {totals['provider_calls']} calls, "
        f"{totals['total_tokens']} tokens, ${totals['cost_usd']}"
    )
    for stage, row in report["stages"].items():
        print(
            f"  {stage:15s} {row['calls']} calls, {row['total_tokens']} tokens, "
            f"${row['cost_usd']}"
        )
    tools = report["tools"]
    if tools["generated"] or tools["reused"]:
        print(
            f"tools: generated={tools['generated']} reused={tools['reused']} "
            f"iterations={tools['generator_iterations']}"
        )
    if report["artifacts"]:
        print("artifacts:")
        for path in report["artifacts"]:
            print(f"  {path}")


def cmd_run(args: argparse.Namespace) -> int:
    config = _assemble_config(args)
    orchestrator = Orchestrator(config)
    _attach_prompt_loop(orchestrator, auto_approve=config.auto_approve)
    session = orchestrator.run_session(args.task)
    _print_report(session, as_json=args.json)
    if session.terminal in OK_TERMINALS:
        return EXIT_OK
    return _TERMINAL_EXIT.get(session.terminal, EXIT_ERROR)


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from toolsmith.service import build_app

    config = _assemble_config(args)
    orchestrator = Orchestrator(config)
    host, _, port = args.bind.rpartition(":")
    if not host or not port.isdigit():
        print(f"--bind must be host:port, got {args.bind!r}", file=sys.stderr)
        return EXIT_USAGE
    app = build_app(orchestrator, console_dir=args.console_dir)
    uvicorn.run(app, host=host, port=int(port), log_level="warning")
    return EXIT_OK


def cmd_tools(args: argparse.Namespace) -> int:
    registry = ToolRegistry(args.registry or "registry")
    if args.function_name:
        try:
            record = registry.fetch(args.function_name)
        except ToolNotFound as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_ERROR
        if args.json:
            print(
                json.dumps(
                    {
                        "name": record.name,
                        "description": record.description,
                        "function-name": record.function_name,
                        "source": record.source,
                    },
                    indent=2,
                )
            )
        else:
            print(f"# {record.name}: {record.description}\n")
            print(record.source)
        return EXIT_OK
    entries = registry.entries()
    if args.json:
        print(json.dumps(entries, indent=2))
    elif not entries:
        print("registry is empty")
    else:
        for entry in entries:
            print(f"{entry['function-name']:30s} {entry['name']}: {entry['description']}")
    integrity = registry.check()
    for missing in integrity["missing_scripts"]:
        print(f"warning: manifest entry {missing!r} has no script", file=sys.stderr)
    for orphan in integrity["orphan_scripts"]:
        print(f"warning: orphan script {orphan!r} not in manifest", file=sys.stderr)
    return EXIT_OK


def cmd_replay_check(args: argparse.Namespace) -> int:
    try:
        entries = load_fixture(args.fixture)
    except ReplayError as exc:
        print(f"fixture invalid: {exc}", file=sys.stderr)
        return EXIT_ERROR
    stages_seen = sorted({entry["stage"] for entry in entries})
    print(f"fixture ok: {len(entries)} entries, stages: {', '.join(stages_seen)}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "serve":
            return cmd_serve(args)
        if args.command == "tools":
            return cmd_tools(args)
        if args.command == "replay-check":
            return cmd_replay_check(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ToolsmithError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    parser.error(f"unknown command {args.command!r}")
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
