from __future__ import annotations

from pathlib import Path

import pytest

from toolsmith.approvals import SecretVault
from toolsmith.sandbox import Sandbox, SandboxPolicy


@pytest.fixture
def sandbox(tmp_path: Path):
    policy = SandboxPolicy(workspace_root=tmp_path / "runs", timeout=20.0)
    box = Sandbox("unit-session", policy)
    try:
        yield box
    finally:
        box.close()


@pytest.fixture
def vault():
    store = SecretVault()
    try:
        yield store
    finally:
        store.zero()
