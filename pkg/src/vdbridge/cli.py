"""Process entry point: config parsing and the stop/build/diff/push loop.

Exit codes: 0 clean shutdown, 2 adapter failure, 3 port bind failure,
64 bad usage.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .diffing import diff
from .graph import (
    DEFAULT_NULL_LITERALS,
    BuildConfig,
    FrameView,
    GraphError,
    MergeError,
    ObjectGraph,
    StableId,
    build_graph,
    merge_children,
)
from .history import HistoryEntry, HistoryRangeError, HistoryStore
from .server import (
    ERROR_NOT_STOPPED,
    ERROR_RANGE,
    ERROR_TERMINATED,
    ERROR_UNKNOWN_NODE,
    ApiServer,
    ClientCommand,
)
from .session import (
    AdapterSpec,
    DapSession,
    EmptyStackError,
    SessionError,
    SessionState,
    StopInfo,
    start_session,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ADAPTER_FAILURE = 2
EXIT_PORT_FAILURE = 3
EXIT_USAGE = 64

ENV_PREFIX = "VDBRIDGE_"


class UsageError(Exception):
    """Configuration cannot be parsed; carries the usage text."""


@dataclass
class BridgeConfig:
    adapter: AdapterSpec
    launch_arguments: dict[str, Any] = field(default_factory=dict)
    breakpoints: list[tuple[str, int]] = field(default_factory=list)
    depth: int = 2
    history: int = 10
    port: int = 8071
    identity: str = "auto"
    include_expensive: bool = False
    null_literals: tuple[str, ...] = DEFAULT_NULL_LITERALS
    frame: int = 0
    host: str = "127.0.0.1"
    ui_dir: Path | None = None

    def build_config(self) -> BuildConfig:
        return BuildConfig(identity=self.identity, null_literals=self.null_literals)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # noqa: A003 - argparse hook
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _non_negative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _breakpoint(text: str) -> tuple[str, int]:
    path, sep, line = text.rpartition(":")
    if not sep or not path:
        raise argparse.ArgumentTypeError(f"expected file:line, got {text!r}")
    try:
        number = int(line)
    except ValueError:
        raise argparse.ArgumentTypeError(f"breakpoint line must be an integer, got {line!r}") from None
    if number < 1:
        raise argparse.ArgumentTypeError(f"breakpoint line must be >= 1, got {number}")
    return path, number


def parse_config(argv: Sequence[str], environ: Mapping[str, str]) -> BridgeConfig:
    """CLI flags override VDBRIDGE_* environment variables override defaults."""

    def env(name: str, default: Any = None) -> Any:
        return environ.get(ENV_PREFIX + name, default)

    parser = _Parser(
        prog="vdbridge",
        description="Drive a DAP debug adapter and publish object diagrams "
        "over the Visual Debugging API.",
    )
    parser.add_argument("--adapter", default=env("ADAPTER"), metavar="CMD",
                        help="debug adapter command line to spawn (stdio transport)")
    parser.add_argument("--attach", default=env("ATTACH"), metavar="HOST:PORT",
                        help="connect to an already-running adapter over TCP")
    parser.add_argument("--launch", default=env("LAUNCH"), metavar="FILE",
                        help="JSON file with launch/attach request arguments")
    parser.add_argument("--bp", dest="breakpoints", action="append", type=_breakpoint,
                        metavar="FILE:LINE", help="breakpoint, repeatable")
    parser.add_argument("--depth", type=_non_negative,
                        default=env("DEPTH", 2), help="initial expansion depth (default 2)")
    parser.add_argument("--history", type=_non_negative,
                        default=env("HISTORY", 10),
                        help="debug history length, 0 turns history off (default 10)")
    parser.add_argument("--port", type=int, default=env("PORT", 8071),
                        help="Visual Debugging API port, 0 picks a free one (default 8071)")
    parser.add_argument("--identity", choices=("auto", "memory", "path"),
                        default=env("IDENTITY", "auto"),
                        help="object identity strategy across steps (default auto)")
    parser.add_argument("--include-expensive", action="store_true",
                        default=_env_flag(env("INCLUDE_EXPENSIVE")),
                        help="also fetch scopes the adapter flags as expensive")
    parser.add_argument("--null-literal", dest="null_literals", action="append",
                        metavar="TEXT",
                        help="display value treated as null, repeatable; "
                        "replaces the default set when given")
    parser.add_argument("--frame", type=_non_negative, default=env("FRAME", 0),
                        help="stack frame to visualize (default 0, the top frame)")
    args = parser.parse_args(list(argv))

    if bool(args.adapter) == bool(args.attach):
        raise UsageError(
            f"vdbridge: exactly one of --adapter or --attach is required\n{parser.format_usage()}"
        )
    try:
        adapter = (
            AdapterSpec.from_command(args.adapter)
            if args.adapter
            else AdapterSpec.from_address(args.attach)
        )
    except ValueError as exc:
        raise UsageError(f"vdbridge: {exc}\n{parser.format_usage()}") from exc

    launch_arguments: dict[str, Any] = {}
    if args.launch:
        try:
            launch_arguments = json.loads(Path(args.launch).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"vdbridge: cannot read launch file: {exc}") from exc
        if not isinstance(launch_arguments, dict):
            raise UsageError("vdbridge: launch file must contain a JSON object")

    breakpoints = list(args.breakpoints or [])
    if not breakpoints and env("BP"):
        try:
            breakpoints = [_breakpoint(item.strip()) for item in env("BP").split(",") if item.strip()]
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"vdbridge: {ENV_PREFIX}BP: {exc}") from exc

    null_literals = tuple(args.null_literals) if args.null_literals else None
    if null_literals is None and env("NULL_LITERALS"):
        null_literals = tuple(s for s in env("NULL_LITERALS").split(",") if s)

    try:
        depth = int(args.depth)
        history = int(args.history)
        port = int(args.port)
        frame = int(args.frame)
        if depth < 0 or history < 0 or frame < 0:
            raise ValueError("negative value")
    except ValueError as exc:
        raise UsageError(f"vdbridge: invalid numeric option: {exc}") from exc

    ui_dir = env("UI_DIR")
    return BridgeConfig(
        adapter=adapter,
        launch_arguments=launch_arguments,
        breakpoints=breakpoints,
        depth=depth,
        history=history,
        port=port,
        identity=args.identity,
        include_expensive=bool(args.include_expensive),
        null_literals=null_literals or DEFAULT_NULL_LITERALS,
        frame=frame,
        host=env("HOST", "127.0.0.1"),
        ui_dir=Path(ui_dir) if ui_dir else None,
    )


def _env_flag(value: Any) -> bool:
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def resolve_ui_dir(config: BridgeConfig) -> Path | None:
    if config.ui_dir is not None:
        return config.ui_dir if config.ui_dir.is_dir() else None
    local_bundle = Path.cwd() / "frontend" / "dist"
    return local_bundle if local_bundle.is_dir() else None


class Bridge:
    """Single orchestration loop over session events and client commands."""

    def __init__(self, config: BridgeConfig):
        self.config = config
        self.store = HistoryStore(config.history)
        self.build_config = config.build_config()
        self.depth = config.depth
        self.session: DapSession | None = None
        self.server: ApiServer | None = None
        self._current: HistoryEntry | None = None
        self._base_of_current: ObjectGraph | None = None

    async def run(self) -> int:
        try:
            self.session = await start_session(
                self.config.adapter,
                self.config.launch_arguments,
                self.config.breakpoints,
                include_expensive=self.config.include_expensive,
                frame_index=self.config.frame,
            )
        except SessionError as exc:
            logger.error("adapter failed: %s", exc)
            return EXIT_ADAPTER_FAILURE

        self.server = ApiServer(
            host=self.config.host,
            port=self.config.port,
            depth=self.config.depth,
            history=self.config.history,
            static_dir=resolve_ui_dir(self.config),
        )
        try:
            await self.server.start()
        except OSError as exc:
            logger.error("cannot bind API port %s: %s", self.config.port, exc)
            await self.session.close()
            return EXIT_PORT_FAILURE
        print(
            f"vdbridge listening on ws://{self.config.host}:{self.server.port}/ "
            f"(UI http://{self.config.host}:{self.server.port}/)",
            flush=True,
        )

        try:
            code = await self._pipeline()
        finally:
            await self.server.close()
            await self.session.close()
        return code

    async def _pipeline(self) -> int:
        assert self.session is not None and self.server is not None
        stop_task: asyncio.Task | None = asyncio.create_task(self.session.await_stop())
        command_task: asyncio.Task | None = asyncio.create_task(self.server.commands.get())
        try:
            while True:
                waiting = {t for t in (stop_task, command_task) if t is not None}
                done, _ = await asyncio.wait(waiting, return_when=asyncio.FIRST_COMPLETED)
                if command_task in done:
                    command = command_task.result()
                    command_task = asyncio.create_task(self.server.commands.get())
                    resumed = await self._on_command(command)
                    if resumed:
                        stop_task = asyncio.create_task(self.session.await_stop())
                if stop_task in done:
                    stop = stop_task.result()
                    stop_task = None
                    if stop is None:
                        self.server.broadcast_error(
                            ERROR_TERMINATED, "debug session ended", farewell=True
                        )
                        await self._drain_after_termination(command_task)
                        command_task = None
                        return EXIT_OK
                    await self._on_stop(stop)
                    # adapters may pause several threads back to back;
                    # single-focus model refetches for the latest one
                    while (extra := await self.session.poll_stop()) is not None:
                        await self._on_stop(extra)
        except SessionError as exc:
            logger.error("session failed: %s", exc)
            self.server.broadcast_error(ERROR_TERMINATED, f"adapter error: {exc}")
            return EXIT_ADAPTER_FAILURE
        finally:
            for task in (stop_task, command_task):
                if task is not None:
                    task.cancel()

    async def _drain_after_termination(
        self, pending: asyncio.Task | None, grace: float = 1.0
    ) -> None:
        """Answer straggler requests (history still works, stepping errors)
        for a short window before shutting down."""
        assert self.server is not None
        task = pending or asyncio.create_task(self.server.commands.get())
        while True:
            try:
                command = await asyncio.wait_for(task, grace)
            except asyncio.TimeoutError:
                return
            await self._on_command(command)
            task = asyncio.create_task(self.server.commands.get())

    async def _on_stop(self, stop: StopInfo) -> None:
        assert self.session is not None and self.server is not None
        try:
            _frame_id, scopes = await self.session.fetch_top_frame(stop)
        except EmptyStackError:
            scopes = []
        view = FrameView(
            location=stop.location, scopes=scopes, fetch_children=self.session.fetch_children
        )
        base = self._current.graph if self._current else ObjectGraph.empty(stop.location)
        try:
            graph = await build_graph(view, self.depth, prev=base, config=self.build_config)
        except GraphError as exc:
            raise SessionError(f"building object graph failed: {exc}") from exc
        changes = diff(base, graph)
        entry = self.store.push(graph, changes, stop.location)
        self._base_of_current = base
        self._current = entry
        self.server.broadcast_snapshot(entry, len(self.store))

    async def _on_command(self, command: ClientCommand) -> bool:
        """Handle one client request; True when the debuggee resumed."""
        assert self.session is not None and self.server is not None
        kind = command.kind
        if kind == "step":
            return await self._handle_step(command)
        if kind == "loadChildren":
            await self._handle_load_children(command)
        elif kind == "getHistory":
            self._handle_get_history(command)
        elif kind == "setConfig":
            self._handle_set_config(command)
        return False

    async def _handle_step(self, command: ClientCommand) -> bool:
        assert self.session is not None and self.server is not None
        kind = command.payload.get("kind")
        if kind not in ("next", "stepIn", "stepOut", "continue"):
            logger.debug("ignoring step with bad kind %r", kind)
            return False
        state = self.session.state
        if state is SessionState.TERMINATED:
            self.server.send_error(command.client, ERROR_TERMINATED, "debug session ended")
            return False
        if state is not SessionState.STOPPED:
            self.server.send_error(command.client, ERROR_NOT_STOPPED, f"session is {state.value}")
            return False
        await self.session.step(kind)
        return True

    async def _handle_load_children(self, command: ClientCommand) -> None:
        assert self.session is not None and self.server is not None
        state = self.session.state
        if state is SessionState.TERMINATED:
            self.server.send_error(command.client, ERROR_TERMINATED, "debug session ended")
            return
        if state is not SessionState.STOPPED or self._current is None:
            self.server.send_error(command.client, ERROR_NOT_STOPPED, f"session is {state.value}")
            return
        raw_id = command.payload.get("nodeId")
        try:
            node_id = StableId.parse(str(raw_id))
        except ValueError:
            self.server.send_error(command.client, ERROR_UNKNOWN_NODE, f"bad node id {raw_id!r}")
            return
        node = self._current.graph.nodes.get(node_id)
        if node is None:
            self.server.send_error(
                command.client, ERROR_UNKNOWN_NODE, f"no node {node_id.wire()!r} in current graph"
            )
            return
        if node.expanded:
            # idempotent: everything a client could learn is already pushed
            return
        children = await self.session.fetch_children(node.transient_ref)
        old = self._current.graph
        try:
            merged = merge_children(old, node_id, children, config=self.build_config)
        except MergeError as exc:
            self.server.send_error(command.client, ERROR_UNKNOWN_NODE, str(exc))
            return
        reveal = diff(old, merged)
        base = self._base_of_current or ObjectGraph.empty(merged.location)
        amended = HistoryEntry(
            graph=merged,
            changes=diff(base, merged),
            location=self._current.location,
            step_seq=self._current.step_seq,
        )
        self.store.replace_current(amended)
        self._current = amended
        broadcast = HistoryEntry(
            graph=merged, changes=reveal, location=amended.location, step_seq=amended.step_seq
        )
        self.server.broadcast_snapshot(broadcast, len(self.store))

    def _handle_get_history(self, command: ClientCommand) -> None:
        assert self.server is not None
        index = command.payload.get("index")
        if not isinstance(index, int) or isinstance(index, bool) or index < 0:
            self.server.send_error(command.client, ERROR_RANGE, f"bad history index {index!r}")
            return
        try:
            entry = self.store.get(index)
        except HistoryRangeError as exc:
            self.server.send_error(command.client, ERROR_RANGE, str(exc))
            return
        self.server.send_history(command.client, entry, len(self.store), index)

    def _handle_set_config(self, command: ClientCommand) -> None:
        depth = command.payload.get("depth")
        if isinstance(depth, int) and not isinstance(depth, bool) and depth >= 0:
            self.depth = depth
            logger.info("expansion depth set to %d for subsequent stops", depth)


async def run(config: BridgeConfig) -> int:
    return await Bridge(config).run()


def main(argv: Sequence[str] | None = None, environ: Mapping[str, str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    environ = os.environ if environ is None else environ
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    try:
        config = parse_config(argv, environ)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return asyncio.run(run(config))
    except KeyboardInterrupt:
        return 130


def console_main() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
