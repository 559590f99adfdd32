from __future__ import annotations

import asyncio
import json
import sys

import pytest

from vdbridge.mock_adapter import bundled_scenario
from vdbridge.session import (
    AdapterSpec,
    AdapterSpawnError,
    EmptyStackError,
    HandshakeError,
    SessionState,
    SessionStateError,
    StaleReferenceError,
    TransportError,
    start_session,
)

from conftest import counter_scenario, write_scenario


def adapter_spec(scenario_path, transcript=None) -> AdapterSpec:
    command = [sys.executable, "-m", "vdbridge.mock_adapter", "--scenario", str(scenario_path)]
    if transcript is not None:
        command += ["--transcript", str(transcript)]
    return AdapterSpec(command=tuple(command))


def run(coro):
    return asyncio.run(asyncio.wait_for(coro, 60))


def transcript_commands(path) -> list[str]:
    return [json.loads(line)["command"] for line in path.read_text().splitlines()]


def test_start_session_reaches_running_state():
    async def scenario():
        session = await start_session(
            adapter_spec(bundled_scenario("bst_insert")),
            {"program": "demo"},
            [("BinarySearchTree.java", 17)],
        )
        try:
            assert session.state is SessionState.RUNNING
            assert session.capabilities == {"supportsConfigurationDoneRequest": True}
        finally:
            await session.close()

    run(scenario())


def test_breakpoints_sent_during_handshake(tmp_path):
    transcript = tmp_path / "wire.jsonl"

    async def scenario():
        session = await start_session(
            adapter_spec(bundled_scenario("bst_insert"), transcript),
            {},
            [("BinarySearchTree.java", 17), ("BinarySearchTree.java", 24), ("Other.java", 3)],
        )
        await session.close()

    run(scenario())
    commands = transcript_commands(transcript)
    assert commands.count("setBreakpoints") == 2  # grouped per file
    assert commands.index("initialize") < commands.index("setBreakpoints")
    assert commands.index("setBreakpoints") < commands.index("configurationDone")


def test_await_stop_resolves_location():
    async def scenario():
        session = await start_session(adapter_spec(bundled_scenario("bst_insert")), {}, [])
        try:
            stop = await session.await_stop()
            assert stop is not None
            assert stop.reason == "breakpoint"
            assert stop.location.file == "BinarySearchTree.java"
            assert stop.location.line == 17
            assert stop.location.method == "insert"
            assert session.state is SessionState.STOPPED
        finally:
            await session.close()

    run(scenario())


def test_immediate_terminate_signals_session_end(tmp_path):
    path = write_scenario(tmp_path, counter_scenario(0))

    async def scenario():
        session = await start_session(adapter_spec(path), {}, [])
        try:
            assert await session.await_stop() is None
            assert session.state is SessionState.TERMINATED
        finally:
            await session.close()

    run(scenario())


def test_stop_without_thread_id_resolved_via_threads_request(tmp_path):
    transcript = tmp_path / "wire.jsonl"
    doc = counter_scenario(1)
    doc["stops"][0]["thread_id"] = 7
    doc["stops"][0]["omit_thread_id"] = True
    path = write_scenario(tmp_path, doc)

    async def scenario():
        session = await start_session(adapter_spec(path, transcript), {}, [])
        try:
            stop = await session.await_stop()
            assert stop is not None and stop.thread_id == 7
            assert stop.location.file == "counter.py"
        finally:
            await session.close()

    run(scenario())
    assert "threads" in transcript_commands(transcript)


def test_back_to_back_stops_returned_one_at_a_time(tmp_path):
    doc = counter_scenario(1)
    doc["stops"][0]["also_stopped_threads"] = [2]
    path = write_scenario(tmp_path, doc)

    async def scenario():
        session = await start_session(adapter_spec(path), {}, [])
        try:
            first = await session.await_stop()
            assert first is not None and first.thread_id == 1
            second = await session.poll_stop()
            assert second is not None and second.thread_id == 2
            assert await session.poll_stop() is None
        finally:
            await session.close()

    run(scenario())


def test_step_sends_wire_command_and_runs(tmp_path):
    transcript = tmp_path / "wire.jsonl"
    path = write_scenario(tmp_path, counter_scenario(3))

    async def scenario():
        session = await start_session(adapter_spec(path, transcript), {}, [])
        try:
            await session.await_stop()
            await session.step("next")
            assert session.state is SessionState.RUNNING
            await session.await_stop()
            await session.step("continue")
            await session.await_stop()
        finally:
            await session.close()

    run(scenario())
    commands = transcript_commands(transcript)
    assert "next" in commands and "continue" in commands


def test_step_while_running_rejected_locally(tmp_path):
    transcript = tmp_path / "wire.jsonl"
    path = write_scenario(tmp_path, counter_scenario(1))

    async def scenario():
        session = await start_session(adapter_spec(path, transcript), {}, [])
        try:
            with pytest.raises(SessionStateError):
                await session.step("next")
        finally:
            await session.close()

    run(scenario())
    assert "next" not in transcript_commands(transcript)  # nothing hit the wire


def test_unknown_step_kind_rejected(tmp_path):
    path = write_scenario(tmp_path, counter_scenario(1))

    async def scenario():
        session = await start_session(adapter_spec(path), {}, [])
        try:
            await session.await_stop()
            with pytest.raises(ValueError):
                await session.step("teleport")
        finally:
            await session.close()

    run(scenario())


def test_fetch_top_frame_returns_scopes_in_order():
    async def scenario():
        session = await start_session(adapter_spec(bundled_scenario("null_heavy")), {}, [])
        try:
            stop = await session.await_stop()
            frame_id, scopes = await session.fetch_top_frame(stop)
            assert [name for name, _ in scopes] == ["Locals"]  # expensive Globals dropped
        finally:
            await session.close()

    run(scenario())


def test_expensive_scope_included_on_request():
    async def scenario():
        session = await start_session(
            adapter_spec(bundled_scenario("null_heavy")), {}, [], include_expensive=True
        )
        try:
            stop = await session.await_stop()
            _frame, scopes = await session.fetch_top_frame(stop)
            assert [name for name, _ in scopes] == ["Locals", "Globals"]
        finally:
            await session.close()

    run(scenario())


def test_empty_stack_signalled(tmp_path):
    doc = counter_scenario(1)
    doc["stops"][0]["empty_stack"] = True
    path = write_scenario(tmp_path, doc)

    async def scenario():
        session = await start_session(adapter_spec(path), {}, [])
        try:
            stop = await session.await_stop()
            assert stop is not None
            with pytest.raises(EmptyStackError):
                await session.fetch_top_frame(stop)
        finally:
            await session.close()

    run(scenario())


def test_fetch_children_in_adapter_order():
    async def scenario():
        session = await start_session(adapter_spec(bundled_scenario("bst_insert")), {}, [])
        try:
            stop = await session.await_stop()
            _frame, scopes = await session.fetch_top_frame(stop)
            [tree] = await session.fetch_children(scopes[0][1])
            children = await session.fetch_children(tree.variables_reference)
            assert [c.name for c in children] == ["value", "left", "right"]
            assert children[0].value == "5"
            assert children[1].memory_reference == "0x1002"
        finally:
            await session.close()

    run(scenario())


def test_fetch_children_leaf_reference_rejected():
    async def scenario():
        session = await start_session(adapter_spec(bundled_scenario("bst_insert")), {}, [])
        try:
            await session.await_stop()
            with pytest.raises(ValueError):
                await session.fetch_children(0)
        finally:
            await session.close()

    run(scenario())


def test_stale_reference_after_step(tmp_path):
    transcript = tmp_path / "wire.jsonl"

    async def scenario():
        session = await start_session(
            adapter_spec(bundled_scenario("three_stops"), transcript), {}, []
        )
        try:
            stop = await session.await_stop()
            _frame, scopes = await session.fetch_top_frame(stop)
            scope_ref = scopes[0][1]
            await session.fetch_children(scope_ref)
            await session.step("next")
            await session.await_stop()
            with pytest.raises(StaleReferenceError):
                await session.fetch_children(scope_ref)
        finally:
            await session.close()

    run(scenario())
    # the guard fires before anything reaches the adapter
    variable_requests = [
        json.loads(line)
        for line in transcript.read_text().splitlines()
        if json.loads(line)["command"] == "variables"
    ]
    assert len(variable_requests) == 1


def test_adapter_that_exits_immediately_fails_handshake():
    async def scenario():
        spec = AdapterSpec(command=(sys.executable, "-c", "import sys; sys.exit(1)"))
        with pytest.raises(HandshakeError):
            await start_session(spec, {}, [], handshake_timeout=5)

    run(scenario())


def test_missing_adapter_binary_fails_to_spawn():
    async def scenario():
        spec = AdapterSpec(command=("definitely-not-a-real-binary-xyz",))
        with pytest.raises(AdapterSpawnError):
            await start_session(spec, {}, [])

    run(scenario())


def test_tcp_connection_refused_is_transport_error():
    async def scenario():
        import socket

        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            free_port = probe.getsockname()[1]
        spec = AdapterSpec(host="127.0.0.1", port=free_port)
        with pytest.raises(TransportError):
            await start_session(spec, {}, [])

    run(scenario())


def test_tcp_transport_full_flow(tmp_path):
    path = write_scenario(tmp_path, counter_scenario(1))

    async def scenario():
        import re

        proc = await asyncio.create_subprocess_exec(
            sys.executable,
            "-m",
            "vdbridge.mock_adapter",
            "--scenario",
            str(path),
            "--tcp",
            "0",
            stderr=asyncio.subprocess.PIPE,
        )
        line = (await proc.stderr.readline()).decode()
        port = int(re.search(r":(\d+)$", line.strip()).group(1))
        session = await start_session(AdapterSpec(host="127.0.0.1", port=port), {}, [])
        try:
            stop = await session.await_stop()
            assert stop is not None and stop.location.file == "counter.py"
        finally:
            await session.close()
            await proc.wait()

    run(scenario())


def test_random_operation_sequences_never_violate_state_machine(tmp_path):
    # every wire request must have been legal in the state it was sent from;
    # illegal calls are rejected locally and leave no trace in the transcript
    import random

    rng = random.Random(0x5EED)
    transcript = tmp_path / "wire.jsonl"
    path = write_scenario(tmp_path, counter_scenario(30))

    async def scenario():
        session = await start_session(adapter_spec(path, transcript), {}, [])
        state_log = []
        refs: list[int] = []
        try:
            for _ in range(60):
                op = rng.choice(("await_stop", "step", "fetch_top_frame", "fetch_children"))
                state = session.state
                try:
                    if op == "await_stop":
                        if state is not SessionState.RUNNING:
                            with pytest.raises(SessionStateError):
                                await session.await_stop()
                            continue
                        stop = await session.await_stop()
                        if stop is None:
                            break
                        state_log.append(("stopped", stop.location.line))
                        refs.clear()
                    elif op == "step":
                        if state is not SessionState.STOPPED:
                            with pytest.raises(SessionStateError):
                                await session.step("next")
                            continue
                        await session.step("next")
                    elif op == "fetch_top_frame":
                        if state is not SessionState.STOPPED:
                            with pytest.raises(SessionStateError):
                                await session.fetch_top_frame(
                                    _fake_stop()
                                )
                            continue
                        _frame, scopes = await session.fetch_top_frame(_fake_stop())
                        refs.extend(ref for _n, ref in scopes)
                    elif op == "fetch_children":
                        if state is not SessionState.STOPPED:
                            with pytest.raises(SessionStateError):
                                await session.fetch_children(1)
                            continue
                        if refs:
                            await session.fetch_children(rng.choice(refs))
                except SessionStateError:
                    raise AssertionError(f"legal {op} rejected in state {state}")
        finally:
            await session.close()

    run(scenario())
    # transcript inspection: stateful commands only ever follow legal states
    commands = transcript_commands(transcript)
    stateful = [c for c in commands if c in ("next", "variables", "scopes")]
    assert commands[0] == "initialize"
    # every variables/scopes/next happened between stop boundaries, which the
    # mock enforces too: any illegal one would have drawn success=false and
    # failed the session
    assert "stackTrace" in commands
    assert stateful, "randomized run exercised stateful commands"


def _fake_stop():
    from vdbridge.graph import SourceLocation
    from vdbridge.session import StopInfo

    return StopInfo(reason="breakpoint", thread_id=1, location=SourceLocation("counter.py", 10))


def test_adapter_spec_parsing():
    assert AdapterSpec.from_address("localhost:9000") == AdapterSpec(host="localhost", port=9000)
    assert AdapterSpec.from_command("python -m adapter --flag x").command == (
        "python",
        "-m",
        "adapter",
        "--flag",
        "x",
    )
    with pytest.raises(ValueError):
        AdapterSpec.from_address("9000")
    with pytest.raises(ValueError):
        AdapterSpec(command=("x",), host="y", port=1)
