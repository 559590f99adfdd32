from __future__ import annotations

import asyncio
import socket
import sys

import pytest

from vdbridge.cli import (
    EXIT_ADAPTER_FAILURE,
    EXIT_PORT_FAILURE,
    EXIT_USAGE,
    UsageError,
    main,
    parse_config,
)
from vdbridge.graph import DEFAULT_NULL_LITERALS
from vdbridge.mock_adapter import bundled_scenario
from vdbridge.session import AdapterSpec

from conftest import counter_scenario, mock_adapter_command, write_scenario
from harness import api_client, start_bridge

ADAPTER = ["--adapter", "mockcmd --flag"]


def parse(argv, env=None):
    return parse_config(argv, env or {})


def test_defaults():
    config = parse(ADAPTER)
    assert config.adapter == AdapterSpec(command=("mockcmd", "--flag"))
    assert config.depth == 2
    assert config.history == 10
    assert config.port == 8071
    assert config.identity == "auto"
    assert config.include_expensive is False
    assert config.null_literals == DEFAULT_NULL_LITERALS
    assert config.breakpoints == []


def test_flags_override_env_override_defaults():
    env = {"VDBRIDGE_DEPTH": "5", "VDBRIDGE_HISTORY": "3", "VDBRIDGE_PORT": "9000"}
    config = parse(ADAPTER, env)
    assert (config.depth, config.history, config.port) == (5, 3, 9000)
    config = parse(ADAPTER + ["--depth", "7"], env)
    assert (config.depth, config.history) == (7, 3)


def test_breakpoints_parse_and_repeat():
    config = parse(ADAPTER + ["--bp", "a.py:3", "--bp", "src/b.java:12"])
    assert config.breakpoints == [("a.py", 3), ("src/b.java", 12)]


def test_breakpoints_from_env():
    config = parse(ADAPTER, {"VDBRIDGE_BP": "a.py:3, b.py:9"})
    assert config.breakpoints == [("a.py", 3), ("b.py", 9)]


def test_malformed_breakpoint_is_usage_error():
    with pytest.raises(UsageError):
        parse(ADAPTER + ["--bp", "a.py:nine"])
    with pytest.raises(UsageError):
        parse(ADAPTER + ["--bp", "noline"])
    with pytest.raises(UsageError):
        parse(ADAPTER + ["--bp", "a.py:0"])


def test_negative_numbers_rejected():
    with pytest.raises(UsageError):
        parse(ADAPTER + ["--depth", "-1"])
    with pytest.raises(UsageError):
        parse(ADAPTER + ["--history", "-2"])


def test_adapter_xor_attach_required():
    with pytest.raises(UsageError):
        parse([])
    with pytest.raises(UsageError):
        parse(ADAPTER + ["--attach", "localhost:9000"])
    config = parse(["--attach", "localhost:9000"])
    assert config.adapter == AdapterSpec(host="localhost", port=9000)


def test_null_literals_replace_defaults_when_given():
    config = parse(ADAPTER + ["--null-literal", "NULL", "--null-literal", "~"])
    assert config.null_literals == ("NULL", "~")


def test_identity_choices():
    assert parse(ADAPTER + ["--identity", "path"]).identity == "path"
    with pytest.raises(UsageError):
        parse(ADAPTER + ["--identity", "psychic"])


def test_unknown_flag_exits_64(capsys):
    code = main(["--adapter", "x", "--wat"], environ={})
    assert code == EXIT_USAGE
    err = capsys.readouterr().err
    assert "usage:" in err


def test_launch_file_must_be_json_object(tmp_path):
    bad = tmp_path / "launch.json"
    bad.write_text("[1,2,3]")
    with pytest.raises(UsageError):
        parse(ADAPTER + ["--launch", str(bad)])
    good = tmp_path / "ok.json"
    good.write_text('{"program": "x"}')
    assert parse(ADAPTER + ["--launch", str(good)]).launch_arguments == {"program": "x"}


def test_adapter_spawn_failure_exits_2(tmp_path):
    code = main(
        ["--adapter", "definitely-not-a-real-binary-xyz", "--port", "0"], environ={}
    )
    assert code == EXIT_ADAPTER_FAILURE


def test_port_already_bound_exits_3(tmp_path):
    scenario = write_scenario(tmp_path, counter_scenario(0))
    with socket.create_server(("127.0.0.1", 0)) as blocker:
        port = blocker.getsockname()[1]
        code = main(
            ["--adapter", mock_adapter_command(scenario), "--port", str(port)], environ={}
        )
    assert code == EXIT_PORT_FAILURE


def test_zero_stop_run_exits_0(tmp_path):
    scenario = write_scenario(tmp_path, counter_scenario(0))

    async def scenario_run():
        async with start_bridge(scenario) as bridge:
            # a client connecting after termination still learns about it
            async with api_client(bridge.url) as client:
                notice = await client.recv_type("error")
                assert notice["code"] == "terminated"
            assert await bridge.wait() == 0

    asyncio.run(scenario_run())


def test_pipeline_snapshots_and_load_children(tmp_path):
    async def scenario_run():
        async with start_bridge(bundled_scenario("deep_nesting"), "--identity", "path") as bridge:
            async with api_client(bridge.url) as client:
                snap = await client.recv_type("snapshot")
                node_ids = {n["id"] for n in snap["graph"]["nodes"]}
                assert "path:chain/next/next" in node_ids
                frontier = next(
                    n for n in snap["graph"]["nodes"] if n["id"] == "path:chain/next/next"
                )
                assert frontier["expanded"] is False
                await client.load_children("path:chain/next/next")
                update = await client.recv_type("snapshot")
                assert update["stepSeq"] == snap["stepSeq"]
                assert "path:chain/next/next/next" in update["changes"]["addedNodes"]
                # unknown node errors back to the requester
                await client.load_children("path:ghost")
                error = await client.recv_type("error")
                assert error["code"] == "unknown-node"
        # leave the bridge running; context manager kills it

    asyncio.run(scenario_run())


def test_step_error_codes(tmp_path):
    scenario = write_scenario(tmp_path, counter_scenario(1))

    async def scenario_run():
        async with start_bridge(scenario) as bridge:
            async with api_client(bridge.url) as client:
                await client.recv_type("snapshot")
                await client.step("continue")
                notice = await client.recv_type("error")
                assert notice["code"] == "terminated"
                # stepping after termination is answered with terminated
                await client.step("next")
                again = await client.recv_type("error")
                assert again["code"] == "terminated"
            assert await bridge.wait() == 0

    asyncio.run(scenario_run())


def test_history_zero_disables_get_history(tmp_path):
    scenario = write_scenario(tmp_path, counter_scenario(2))

    async def scenario_run():
        async with start_bridge(scenario, "--history", "0") as bridge:
            async with api_client(bridge.url) as client:
                snap = await client.recv_type("snapshot")
                assert snap["historyLength"] == 0
                for index in (0, 1, 5):
                    await client.get_history(index)
                    error = await client.recv_type("error")
                    assert error["code"] == "range"

    asyncio.run(scenario_run())
