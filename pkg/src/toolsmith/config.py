"""Application configuration: JSON file merged with CLI overrides.

Secrets never appear here — the config names *environment variables*
(credential_env, secret_env) and the values are read at use time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any

from toolsmith.errors import ConfigError
from toolsmith.gateway import DEFAULT_PRICING, PricingTable, ProviderConfig
from toolsmith.sandbox import NETWORK_ALLOWED, NETWORK_DENIED

DEFAULT_MAX_ITERATIONS = 5
DEFAULT_MAX_STEPS = 10
DEFAULT_TIMEOUT_SECS = 120.0
DEFAULT_WARN_TOOL_COUNT = 5


@dataclass(frozen=True)
class SandboxSettings:
    timeout: float = DEFAULT_TIMEOUT_SECS
    max_output_bytes: int = 1024 * 1024
    network: str = NETWORK_ALLOWED
    allow_package_install: bool = True
    interpreter: str | None = None

    def __post_init__(self):
        if self.timeout <= 0:
            raise ConfigError("sandbox.timeout must be > 0")
        if self.max_output_bytes <= 0:
            raise ConfigError("sandbox.max_output_bytes must be > 0")
        if self.network not in (NETWORK_ALLOWED, NETWORK_DENIED):
            raise ConfigError(f"sandbox.network must be allowed|denied, got {self.network!r}")


@dataclass(frozen=True)
class AppConfig:
    provider: ProviderConfig
    registry_path: Path = Path("registry")
    runs_root: Path = Path("runs")
    sandbox: SandboxSettings = field(default_factory=SandboxSettings)
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    max_steps: int = DEFAULT_MAX_STEPS
    auto_approve: bool = False
    continue_on_exhausted: bool = False
    search_endpoint: str | None = None
    search_key_api_name: str | None = None
    # API name -> environment variable holding its key; preloads the vault.
    secret_env: dict[str, str] = field(default_factory=dict)
    warn_tool_count: int = DEFAULT_WARN_TOOL_COUNT
    decision_timeout: float | None = None  # None: block forever (interactive)

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.decision_timeout is not None and self.decision_timeout <= 0:
            raise ConfigError("decision_timeout must be > 0 when set")
        object.__setattr__(self, "registry_path", Path(self.registry_path))
        object.__setattr__(self, "runs_root", Path(self.runs_root))


def _parse_pricing(raw: dict[str, Any]) -> PricingTable:
    try:
        return PricingTable(
            model_id=str(raw.get("model", DEFAULT_PRICING.model_id)),
            prompt_rate=Decimal(str(raw["prompt_per_1k"])),
            completion_rate=Decimal(str(raw["completion_per_1k"])),
        )
    except (KeyError, InvalidOperation) as exc:
        raise ConfigError(f"pricing table invalid: {exc}")


def _parse_provider(raw: dict[str, Any]) -> ProviderConfig:
    pricing = (
        _parse_pricing(raw["pricing"]) if isinstance(raw.get("pricing"), dict) else DEFAULT_PRICING
    )
    return ProviderConfig(
        kind=str(raw.get("kind", "replay")),
        endpoint=raw.get("endpoint"),
        credential_env=raw.get("credential_env"),
        fixture_path=raw.get("fixture_path"),
        model=str(raw.get("model", pricing.model_id)),
        pricing=pricing,
    )


def load_config(path: str | Path) -> AppConfig:
    """Parse a JSON config file into an AppConfig."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"config {path} unreadable: {exc}")
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return from_dict(raw)


def from_dict(raw: dict[str, Any]) -> AppConfig:
    if "provider" not in raw or not isinstance(raw["provider"], dict):
        raise ConfigError("config needs a 'provider' object")
    sandbox_raw = raw.get("sandbox", {})
    if not isinstance(sandbox_raw, dict):
        raise ConfigError("'sandbox' must be an object")
    budgets = raw.get("budgets", {})
    if not isinstance(budgets, dict):
        raise ConfigError("'budgets' must be an object")
    search = raw.get("search", {})
    if not isinstance(search, dict):
        raise ConfigError("'search' must be an object")
    secret_env = raw.get("secret_env", {})
    if not isinstance(secret_env, dict):
        raise ConfigError("'secret_env' must be an object mapping API name to env var")

    sandbox = SandboxSettings(
        timeout=float(sandbox_raw.get("timeout", DEFAULT_TIMEOUT_SECS)),
        max_output_bytes=int(sandbox_raw.get("max_output_bytes", 1024 * 1024)),
        network=str(sandbox_raw.get("network", NETWORK_ALLOWED)),
        allow_package_install=bool(sandbox_raw.get("allow_package_install", True)),
        interpreter=sandbox_raw.get("interpreter"),
    )
    return AppConfig(
        provider=_parse_provider(raw["provider"]),
        registry_path=Path(raw.get("registry_path", "registry")),
        runs_root=Path(raw.get("runs_root", "runs")),
        sandbox=sandbox,
        max_iterations=int(budgets.get("max_iterations", DEFAULT_MAX_ITERATIONS)),
        max_steps=int(budgets.get("max_steps", DEFAULT_MAX_STEPS)),
        auto_approve=bool(raw.get("auto_approve", False)),
        continue_on_exhausted=bool(raw.get("continue_on_exhausted", False)),
        search_endpoint=search.get("endpoint"),
        search_key_api_name=search.get("key_api_name"),
        secret_env={str(k): str(v) for k, v in secret_env.items()},
        warn_tool_count=int(raw.get("warn_tool_count", DEFAULT_WARN_TOOL_COUNT)),
        decision_timeout=(
            float(raw["decision_timeout"]) if raw.get("decision_timeout") is not None else None
        ),
    )


def apply_overrides(config: AppConfig, **overrides: Any) -> AppConfig:
    """CLI flags win over the file. None values mean 'not given'."""
    updates: dict[str, Any] = {}
    simple = (
        "registry_path",
        "runs_root",
        "max_iterations",
        "max_steps",
        "search_endpoint",
        "continue_on_exhausted",
        "auto_approve",
        "decision_timeout",
    )
    for name in simple:
        if overrides.get(name) is not None:
            updates[name] = overrides[name]

    provider_kind = overrides.get("provider_kind")
    fixture = overrides.get("replay_fixture")
    if provider_kind or fixture:
        current = config.provider
        kind = provider_kind or current.kind
        if kind == "replay":
            fixture_path = fixture or current.fixture_path
            if not fixture_path:
                raise ConfigError("--provider replay requires --replay-fixture")
            updates["provider"] = ProviderConfig(
                kind="replay", fixture_path=fixture_path, model=current.model,
                pricing=current.pricing,
            )
        else:
            if not current.endpoint or not current.credential_env:
                raise ConfigError(
                    "--provider live requires endpoint and credential_env in the config file"
                )
            updates["provider"] = ProviderConfig(
                kind="live",
                endpoint=current.endpoint,
                credential_env=current.credential_env,
                model=current.model,
                pricing=current.pricing,
            )

    if overrides.get("timeout_secs") is not None:
        updates["sandbox"] = replace(config.sandbox, timeout=float(overrides["timeout_secs"]))

    return replace(config, **updates) if updates else config


def default_config() -> dict[str, Any]:
    """Template config document for `--init` style bootstrapping/docs."""
    return {
        "provider": {
            "kind": "live",
            "endpoint": "https://api.openai.com/v1/chat/completions",
            "credential_env": "OPENAI_API_KEY",
            "model": DEFAULT_PRICING.model_id,
            "pricing": {
                "model": DEFAULT_PRICING.model_id,
                "prompt_per_1k": str(DEFAULT_PRICING.prompt_rate),
                "completion_per_1k": str(DEFAULT_PRICING.completion_rate),
            },
        },
        "registry_path": "registry",
        "runs_root": "runs",
        "sandbox": {
            "timeout": DEFAULT_TIMEOUT_SECS,
            "max_output_bytes": 1024 * 1024,
            "network": NETWORK_ALLOWED,
            "allow_package_install": True,
            "interpreter": None,
        },
        "budgets": {
            "max_iterations": DEFAULT_MAX_ITERATIONS,
            "max_steps": DEFAULT_MAX_STEPS,
        },
        "search": {"endpoint": None, "key_api_name": None},
        "secret_env": {},
        "auto_approve": False,
        "continue_on_exhausted": False,
    }
