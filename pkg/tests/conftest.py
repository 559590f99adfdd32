from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vdbridge.mock_adapter import Scenario, bundled_scenario


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """One PASS/FAIL line per acceptance criterion."""
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.fspath.basename == "test_acceptance.py":
        status = "PASS" if report.passed else "FAIL"
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        print(f"\nACCEPTANCE {status}: {doc}", file=sys.stderr)


def run(coro):
    return asyncio.run(coro)


@pytest.fixture
def bst_scenario() -> Scenario:
    return Scenario.load(bundled_scenario("bst_insert"))


@pytest.fixture
def cyclic_scenario() -> Scenario:
    return Scenario.load(bundled_scenario("cyclic_list"))


@pytest.fixture
def null_scenario() -> Scenario:
    return Scenario.load(bundled_scenario("null_heavy"))


@pytest.fixture
def deep_scenario() -> Scenario:
    return Scenario.load(bundled_scenario("deep_nesting"))


def counter_scenario(stop_count: int) -> dict:
    """A scenario whose single local object changes value at every stop."""
    stops = []
    for i in range(stop_count):
        stops.append(
            {
                "location": {"file": "counter.py", "line": 10 + i, "method": "tick"},
                "reason": "step" if i else "breakpoint",
                "thread_id": 1,
                "scopes": [
                    {
                        "name": "Locals",
                        "expensive": False,
                        "variables": [
                            {
                                "name": "box",
                                "type": "Box",
                                "value": f"Box@{i}",
                                "memory": "0xb0",
                                "children": [
                                    {"name": "count", "type": "int", "value": str(i)}
                                ],
                            }
                        ],
                    }
                ],
            }
        )
    return {"capabilities": {"supportsConfigurationDoneRequest": True}, "stops": stops}


def write_scenario(tmp_path: Path, doc: dict, name: str = "scenario.json") -> Path:
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def mock_adapter_command(scenario_path: Path, transcript: Path | None = None) -> str:
    parts = [sys.executable, "-m", "vdbridge.mock_adapter", "--scenario", str(scenario_path)]
    if transcript is not None:
        parts += ["--transcript", str(transcript)]
    return " ".join(parts)
