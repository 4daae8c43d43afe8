"""Command-line behaviour: exit codes, report output, approval prompts on
stdin, registry browsing, fixture checking, and config assembly."""

from __future__ import annotations

import io
import json
import sys
from decimal import Decimal

import pytest

from fixture_builders import (
    REVERSE_STRING_SOURCE,
    analyzer,
    never_succeeds_fixture,
    no_tool_fixture,
    reject_fixture,
    sorting_miss_fixture,
    write_fixture,
)
from helpers import run_cli
from toolsmith import cli
from toolsmith import config as config_mod
from toolsmith.errors import ConfigError
from toolsmith.registry import ToolRecord, ToolRegistry


def replay_args(task: str, fixture, tmp_path, *extra: str) -> list[str]:
    """argv for `run` with everything confined to tmp_path."""
    return [
        "run",
        task,
        "--provider",
        "replay",
        "--replay-fixture",
        str(fixture),
        "--registry",
        str(tmp_path / "registry"),
        "--runs-root",
        str(tmp_path / "runs"),
        *extra,
    ]


# -- run: happy path ---------------------------------------------------------


def test_run_no_tool_answers_and_exits_zero(tmp_path):
    task, entries = no_tool_fixture()
    fixture = write_fixture(tmp_path / "fixture.json", entries)

    code, out = run_cli(replay_args(task, fixture, tmp_path))

    assert code == cli.EXIT_OK == 0
    assert "terminal: no_tool_answered" in out
    assert "A nimble fox leaps over an idle dog." in out
    assert "usage: 3 calls" in out
    # the run directory landed under --runs-root with its report and trace
    run_dirs = list((tmp_path / "runs").iterdir())
    assert len(run_dirs) == 1
    assert (run_dirs[0] / "report.json").exists()
    assert (run_dirs[0] / "trace.jsonl").exists()


def test_run_json_prints_machine_readable_report(tmp_path):
    task, entries = no_tool_fixture()
    fixture = write_fixture(tmp_path / "fixture.json", entries)

    code, out = run_cli(replay_args(task, fixture, tmp_path, "--json"))

    assert code == 0
    report = json.loads(out)
    assert report["terminal"] == "no_tool_answered"
    assert report["answer"] == "A nimble fox leaps over an idle dog."
    assert report["totals"]["provider_calls"] == 3


def test_run_generation_prints_tool_summary(tmp_path):
    task, entries = sorting_miss_fixture()
    fixture = write_fixture(tmp_path / "fixture.json", entries)

    code, out = run_cli(replay_args(task, fixture, tmp_path, "--auto-approve"))

    assert code == 0
    assert "terminal: answered" in out
    assert "tools: generated=['sort_numbers'] reused=[] iterations=1" in out
    assert "Sorted ascending: 3, 7, 19, 23, 42, 88." in out


# -- run: config errors ------------------------------------------------------


def test_run_without_any_config_is_usage_error(capsys):
    code, out = run_cli(["run", "do a thing"])
    assert code == cli.EXIT_USAGE == 2
    assert out == ""
    err = capsys.readouterr().err
    assert "config error:" in err
    assert "no config given" in err


def test_run_replay_without_fixture_is_usage_error(capsys):
    code, _ = run_cli(["run", "do a thing", "--provider", "replay"])
    assert code == 2
    assert "config error:" in capsys.readouterr().err


def test_unreadable_config_file_is_usage_error(tmp_path, capsys):
    code, _ = run_cli(["run", "task", "--config", str(tmp_path / "absent.json")])
    assert code == 2
    assert "unreadable" in capsys.readouterr().err


def test_provider_live_needs_endpoint_in_config(tmp_path, capsys):
    task, entries = no_tool_fixture()
    fixture = write_fixture(tmp_path / "fixture.json", entries)
    config_path = tmp_path / "config.json"
    config_path.write_text(
        json.dumps({"provider": {"kind": "replay", "fixture_path": str(fixture)}}),
        encoding="utf-8",
    )

    code, _ = run_cli(["run", task, "--config", str(config_path), "--provider", "live"])

    assert code == 2
    err = capsys.readouterr().err
    assert "endpoint and credential_env" in err


def test_config_file_drives_run(tmp_path):
    task, entries = no_tool_fixture()
    fixture = write_fixture(tmp_path / "fixture.json", entries)
    config_path = tmp_path / "config.json"
    config_path.write_text(
        json.dumps(
            {
                "provider": {"kind": "replay", "fixture_path": str(fixture)},
                "registry_path": str(tmp_path / "registry"),
                "runs_root": str(tmp_path / "runs"),
            }
        ),
        encoding="utf-8",
    )

    code, out = run_cli(["run", task, "--config", str(config_path)])

    assert code == 0
    assert "terminal: no_tool_answered" in out


def test_flag_overrides_config_fixture(tmp_path):
    """--replay-fixture beats the fixture_path in the config file."""
    task, entries = no_tool_fixture()
    good = write_fixture(tmp_path / "good.json", entries)
    config_path = tmp_path / "config.json"
    config_path.write_text(
        json.dumps(
            {
                "provider": {
                    "kind": "replay",
                    "fixture_path": str(tmp_path / "does-not-exist.json"),
                },
                "registry_path": str(tmp_path / "registry"),
                "runs_root": str(tmp_path / "runs"),
            }
        ),
        encoding="utf-8",
    )

    code, out = run_cli(
        ["run", task, "--config", str(config_path), "--replay-fixture", str(good)]
    )

    assert code == 0
    assert "terminal: no_tool_answered" in out


# -- run: approval prompts over stdin ----------------------------------------


def test_reject_on_stdin_exits_three(tmp_path, monkeypatch):
    task, entries = reject_fixture()
    fixture = write_fixture(tmp_path / "fixture.json", entries)
    monkeypatch.setattr(sys, "stdin", io.StringIO("n\n"))

    code, out = run_cli(replay_args(task, fixture, tmp_path))

    assert code == cli.EXIT_REJECTED == 3
    assert "=== approval required" in out
    assert "compute_factorial" in out  # the draft is shown before the verdict
    assert "terminal: rejected_by_human" in out


def test_closed_stdin_refuses_code(tmp_path, monkeypatch):
    """EOF on stdin must refuse the draft rather than hang or approve."""
    task, entries = reject_fixture()
    fixture = write_fixture(tmp_path / "fixture.json", entries)
    monkeypatch.setattr(sys, "stdin", io.StringIO(""))

    code, out = run_cli(replay_args(task, fixture, tmp_path))

    assert code == 3
    assert "terminal: rejected_by_human" in out


def test_approve_on_stdin_runs_the_tool(tmp_path, monkeypatch):
    task, entries = sorting_miss_fixture()
    fixture = write_fixture(tmp_path / "fixture.json", entries)
    monkeypatch.setattr(sys, "stdin", io.StringIO("y\n"))

    code, out = run_cli(replay_args(task, fixture, tmp_path))

    assert code == 0
    assert "=== approval required" in out
    assert "terminal: answered" in out
    assert "sort_numbers" in ToolRegistry(tmp_path / "registry")


def test_garbled_then_eof_stdin_rejects(tmp_path, monkeypatch):
    """Non-interactive input that is neither yes nor no refuses the draft."""
    task, entries = reject_fixture()
    fixture = write_fixture(tmp_path / "fixture.json", entries)
    monkeypatch.setattr(sys, "stdin", io.StringIO("maybe\n"))

    code, out = run_cli(replay_args(task, fixture, tmp_path))

    assert code == 3
    assert "terminal: rejected_by_human" in out


# -- run: failure terminals --------------------------------------------------


def test_generation_exhausted_exits_four(tmp_path):
    task, entries = never_succeeds_fixture(max_iterations=2)
    fixture = write_fixture(tmp_path / "fixture.json", entries)

    code, out = run_cli(
        replay_args(
            task, fixture, tmp_path, "--auto-approve", "--max-iterations", "2"
        )
    )

    assert code == cli.EXIT_EXHAUSTED == 4
    assert "terminal: generation_exhausted" in out


def test_replay_exhaustion_reports_error_and_exits_five(tmp_path):
    entries = [analyzer(0, ["Only one stage is scripted"])]
    fixture = write_fixture(tmp_path / "fixture.json", entries)

    code, out = run_cli(replay_args("an unscripted task", fixture, tmp_path))

    assert code == cli.EXIT_ERROR == 5
    assert "terminal: error" in out
    assert "fixture exhausted" in out


# -- replay-check ------------------------------------------------------------


def test_replay_check_reports_entry_count_and_stages(tmp_path):
    _, entries = no_tool_fixture()
    fixture = write_fixture(tmp_path / "fixture.json", entries)

    code, out = run_cli(["replay-check", str(fixture)])

    assert code == 0
    assert "fixture ok: 3 entries" in out
    assert "task_analyzer, task_solver, tool_master" in out


def test_replay_check_rejects_malformed_fixture(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"not": "a list"}', encoding="utf-8")

    code, out = run_cli(["replay-check", str(bad)])

    assert code == 5
    assert out == ""
    assert "fixture invalid:" in capsys.readouterr().err


# -- tools -------------------------------------------------------------------


def seeded_registry(tmp_path) -> ToolRegistry:
    registry = ToolRegistry(tmp_path / "registry")
    registry.register(
        ToolRecord(
            name="String_Reverser_Tool",
            description="Reverses the characters of a string",
            function_name="reverse_string",
            source=REVERSE_STRING_SOURCE,
        ),
        distill=False,
    )
    return registry


def test_tools_empty_registry(tmp_path):
    code, out = run_cli(["tools", "--registry", str(tmp_path / "registry")])
    assert code == 0
    assert "registry is empty" in out


def test_tools_lists_registered_functions(tmp_path):
    seeded_registry(tmp_path)
    code, out = run_cli(["tools", "--registry", str(tmp_path / "registry")])
    assert code == 0
    assert "reverse_string" in out
    assert "String_Reverser_Tool: Reverses the characters of a string" in out


def test_tools_json_listing(tmp_path):
    seeded_registry(tmp_path)
    code, out = run_cli(["tools", "--registry", str(tmp_path / "registry"), "--json"])
    assert code == 0
    entries = json.loads(out)
    assert entries[0]["function-name"] == "reverse_string"


def test_tools_shows_single_source(tmp_path):
    seeded_registry(tmp_path)
    code, out = run_cli(
        ["tools", "reverse_string", "--registry", str(tmp_path / "registry")]
    )
    assert code == 0
    assert out.startswith(
        "# String_Reverser_Tool: Reverses the characters of a string\n"
    )
    assert "def reverse_string(" in out


def test_tools_single_json_detail(tmp_path):
    seeded_registry(tmp_path)
    code, out = run_cli(
        ["tools", "reverse_string", "--registry", str(tmp_path / "registry"), "--json"]
    )
    assert code == 0
    detail = json.loads(out)
    assert detail["function-name"] == "reverse_string"
    assert "def reverse_string(" in detail["source"]


def test_tools_unknown_function_exits_five(tmp_path, capsys):
    seeded_registry(tmp_path)
    code, _ = run_cli(["tools", "nope", "--registry", str(tmp_path / "registry")])
    assert code == 5
    assert "nope" in capsys.readouterr().err


def test_tools_surfaces_integrity_warnings(tmp_path, capsys):
    registry = seeded_registry(tmp_path)
    registry.script_path("reverse_string").unlink()
    (registry.tools_dir / "mystery.py").write_text("x = 1\n", encoding="utf-8")

    code, _ = run_cli(["tools", "--registry", str(tmp_path / "registry")])

    assert code == 0  # warnings never fail the listing
    err = capsys.readouterr().err
    assert "warning: manifest entry 'reverse_string' has no script" in err
    assert "warning: orphan script 'mystery' not in manifest" in err


# -- serve -------------------------------------------------------------------


@pytest.mark.parametrize("bind", ["nonsense", "localhost:http", ":8080"])
def test_serve_rejects_bad_bind(tmp_path, capsys, bind):
    _, entries = no_tool_fixture()
    fixture = write_fixture(tmp_path / "fixture.json", entries)

    code, _ = run_cli(
        [
            "serve",
            "--provider",
            "replay",
            "--replay-fixture",
            str(fixture),
            "--registry",
            str(tmp_path / "registry"),
            "--runs-root",
            str(tmp_path / "runs"),
            "--bind",
            bind,
        ]
    )

    assert code == 2
    assert "--bind must be host:port" in capsys.readouterr().err


# -- config module -----------------------------------------------------------


def test_default_config_round_trips():
    config = config_mod.from_dict(config_mod.default_config())
    assert config.provider.kind == "live"
    assert config.provider.credential_env == "OPENAI_API_KEY"
    assert config.provider.pricing.prompt_rate == Decimal("0.03")
    assert config.max_iterations == config_mod.DEFAULT_MAX_ITERATIONS


def test_from_dict_requires_provider_object():
    with pytest.raises(ConfigError, match="provider"):
        config_mod.from_dict({"registry_path": "registry"})


def test_from_dict_validates_budgets():
    with pytest.raises(ConfigError, match="max_iterations"):
        config_mod.from_dict(
            {"provider": {"kind": "replay", "fixture_path": "f.json"}, "budgets": {"max_iterations": 0}}
        )


def test_from_dict_validates_pricing():
    with pytest.raises(ConfigError, match="pricing table invalid"):
        config_mod.from_dict(
            {
                "provider": {
                    "kind": "replay",
                    "fixture_path": "f.json",
                    "pricing": {"prompt_per_1k": "0.03"},
                }
            }
        )


def test_from_dict_validates_decision_timeout():
    with pytest.raises(ConfigError, match="decision_timeout"):
        config_mod.from_dict(
            {
                "provider": {"kind": "replay", "fixture_path": "f.json"},
                "decision_timeout": 0,
            }
        )


def test_sandbox_settings_validate():
    with pytest.raises(ConfigError, match="timeout"):
        config_mod.SandboxSettings(timeout=0)
    with pytest.raises(ConfigError, match="network"):
        config_mod.SandboxSettings(network="sometimes")


def test_apply_overrides_without_updates_returns_same_config():
    config = config_mod.from_dict(
        {"provider": {"kind": "replay", "fixture_path": "f.json"}}
    )
    assert config_mod.apply_overrides(config) is config


def test_apply_overrides_replay_requires_some_fixture():
    config = config_mod.from_dict(config_mod.default_config())
    with pytest.raises(ConfigError, match="--replay-fixture"):
        config_mod.apply_overrides(config, provider_kind="replay")


def test_apply_overrides_updates_sandbox_timeout():
    config = config_mod.from_dict(
        {"provider": {"kind": "replay", "fixture_path": "f.json"}}
    )
    updated = config_mod.apply_overrides(config, timeout_secs=7.5)
    assert updated.sandbox.timeout == 7.5
    assert config.sandbox.timeout == config_mod.DEFAULT_TIMEOUT_SECS
