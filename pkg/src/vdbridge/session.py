"""Debug-adapter client: launch/attach handshake, stepping, variable fetches.

One reader task owns the decoded stream; callers await per-request
completions. Events (stopped/terminated) are serialized into a queue for
a single consumer. All variable references handed out are invalidated the
moment the debuggee resumes, which keeps stale handles from ever reaching
the wire.
"""

from __future__ import annotations

import asyncio
import logging
import shlex
from dataclasses import dataclass
from enum import Enum
from typing import Any

from .codec import (
    BodyDecodeError,
    FramingError,
    ProtocolMessage,
    StreamDecoder,
    encode_message,
    parse_message,
)
from .graph import SourceLocation

logger = logging.getLogger(__name__)

STEP_KINDS = ("next", "stepIn", "stepOut", "continue")

DEFAULT_HANDSHAKE_TIMEOUT = 10.0
DEFAULT_REQUEST_TIMEOUT = 5.0


class SessionError(Exception):
    """Base class for session failures."""


class AdapterSpawnError(SessionError):
    """The adapter process could not be started."""


class TransportError(SessionError):
    """The adapter endpoint could not be reached."""


class HandshakeError(SessionError):
    """The initialize/launch/configure sequence did not complete."""


class AdapterRequestError(SessionError):
    """The adapter answered a request with success=false."""

    def __init__(self, command: str, message: str | None):
        super().__init__(f"request {command!r} failed: {message or 'no detail'}")
        self.command = command
        self.adapter_message = message


class RequestTimeoutError(SessionError):
    """No response arrived within the per-request timeout."""


class SessionStateError(SessionError):
    """Operation attempted in a state where it is not allowed."""


class StaleReferenceError(SessionError):
    """A variables reference from before the last resume was replayed."""


class EmptyStackError(SessionError):
    """The adapter reported no stack frames for the stopped thread."""


class SessionState(str, Enum):
    INITIALIZING = "initializing"
    CONFIGURING = "configuring"
    RUNNING = "running"
    STOPPED = "stopped"
    TERMINATED = "terminated"


@dataclass(frozen=True)
class AdapterSpec:
    """How to reach the adapter: a command line to spawn, or a TCP endpoint."""

    command: tuple[str, ...] | None = None
    host: str | None = None
    port: int | None = None

    def __post_init__(self) -> None:
        if (self.command is None) == (self.host is None):
            raise ValueError("adapter spec needs exactly one of command or host:port")

    @classmethod
    def from_command(cls, command: str) -> "AdapterSpec":
        parts = tuple(shlex.split(command))
        if not parts:
            raise ValueError("empty adapter command")
        return cls(command=parts)

    @classmethod
    def from_address(cls, address: str) -> "AdapterSpec":
        host, sep, port = address.rpartition(":")
        if not sep or not host:
            raise ValueError(f"expected host:port, got {address!r}")
        return cls(host=host, port=int(port))


@dataclass(frozen=True)
class StopInfo:
    reason: str
    thread_id: int
    location: SourceLocation


@dataclass(frozen=True)
class RawVariable:
    """One child variable exactly as the adapter reported it."""

    name: str
    value: str
    type_name: str | None
    variables_reference: int
    memory_reference: str | None = None


_SESSION_ENDED = object()


class DapSession:
    """A live adapter connection; operate from one logical owner at a time."""

    def __init__(
        self,
        *,
        request_timeout: float = DEFAULT_REQUEST_TIMEOUT,
        include_expensive: bool = False,
        frame_index: int = 0,
    ) -> None:
        self.state = SessionState.INITIALIZING
        self.capabilities: dict[str, Any] = {}
        self._request_timeout = request_timeout
        self._include_expensive = include_expensive
        self._frame_index = frame_index
        self._next_seq = 1
        self._pending: dict[int, asyncio.Future[ProtocolMessage]] = {}
        self._events: asyncio.Queue[Any] = asyncio.Queue()
        self._initialized = asyncio.Event()
        self._decoder = StreamDecoder()
        self._reader: asyncio.StreamReader | None = None
        self._writer: asyncio.StreamWriter | None = None
        self._process: asyncio.subprocess.Process | None = None
        self._reader_task: asyncio.Task[None] | None = None
        self._valid_refs: set[int] = set()
        self._current_thread: int | None = None

    # -- transport ---------------------------------------------------------

    async def _connect(self, adapter: AdapterSpec) -> None:
        if adapter.command is not None:
            try:
                self._process = await asyncio.create_subprocess_exec(
                    *adapter.command,
                    stdin=asyncio.subprocess.PIPE,
                    stdout=asyncio.subprocess.PIPE,
                )
            except OSError as exc:
                raise AdapterSpawnError(f"cannot spawn adapter {adapter.command!r}: {exc}") from exc
            assert self._process.stdout is not None and self._process.stdin is not None
            self._reader = self._process.stdout
            self._writer = self._process.stdin
        else:
            try:
                self._reader, self._writer = await asyncio.open_connection(
                    adapter.host, adapter.port
                )
            except OSError as exc:
                raise TransportError(
                    f"cannot connect to adapter at {adapter.host}:{adapter.port}: {exc}"
                ) from exc
        self._reader_task = asyncio.create_task(self._read_loop(), name="dap-session-reader")

    async def _read_loop(self) -> None:
        assert self._reader is not None
        try:
            while True:
                data = await self._reader.read(65536)
                if not data:
                    break
                for raw in self._decoder.feed(data):
                    try:
                        msg = parse_message(raw)
                    except BodyDecodeError as exc:
                        logger.warning("skipping undecodable adapter message: %s", exc)
                        continue
                    self._dispatch(msg)
        except FramingError as exc:
            self._fail_pending(SessionError(f"adapter stream framing error: {exc}"))
            self._events.put_nowait(_SESSION_ENDED)
            return
        except asyncio.CancelledError:
            raise
        except Exception as exc:  # transport died underneath us
            logger.debug("adapter read loop error: %s", exc)
        self._fail_pending(SessionError("adapter connection closed"))
        self._events.put_nowait(_SESSION_ENDED)

    def _fail_pending(self, exc: SessionError) -> None:
        for fut in self._pending.values():
            if not fut.done():
                fut.set_exception(exc)
        self._pending.clear()

    def _dispatch(self, msg: ProtocolMessage) -> None:
        if msg.kind == "response":
            fut = self._pending.pop(msg.request_seq or 0, None)
            if fut is None:
                logger.warning("orphan response for request_seq=%s ignored", msg.request_seq)
            elif not fut.done():
                fut.set_result(msg)
        elif msg.kind == "event":
            if msg.name == "initialized":
                self._initialized.set()
            elif msg.name == "stopped":
                self._events.put_nowait(msg)
            elif msg.name in ("terminated", "exited"):
                self._events.put_nowait(_SESSION_ENDED)
            else:
                logger.debug("ignoring adapter event %r", msg.name)
        else:
            # reverse requests (runInTerminal etc.) are out of scope
            logger.debug("ignoring adapter request %r", msg.name)

    async def _request(self, command: str, arguments: Any = None) -> ProtocolMessage:
        if self._writer is None:
            raise SessionError("session not connected")
        seq = self._next_seq
        self._next_seq += 1
        fut: asyncio.Future[ProtocolMessage] = asyncio.get_running_loop().create_future()
        self._pending[seq] = fut
        self._writer.write(encode_message(ProtocolMessage.request(seq, command, arguments)))
        try:
            await self._writer.drain()
            response = await asyncio.wait_for(fut, self._request_timeout)
        except asyncio.TimeoutError:
            self._pending.pop(seq, None)
            raise RequestTimeoutError(f"no response to {command!r} within timeout") from None
        except (ConnectionError, OSError) as exc:
            self._pending.pop(seq, None)
            raise SessionError(f"adapter connection lost during {command!r}: {exc}") from exc
        if not response.success:
            raise AdapterRequestError(command, response.message)
        return response

    # -- lifecycle ---------------------------------------------------------

    async def _handshake(
        self,
        adapter: AdapterSpec,
        launch_arguments: dict[str, Any],
        breakpoints: list[tuple[str, int]],
        request_kind: str,
    ) -> None:
        await self._connect(adapter)
        init = await self._request(
            "initialize",
            {
                "adapterID": "vdbridge",
                "clientID": "vdbridge",
                "clientName": "vdbridge",
                "linesStartAt1": True,
                "columnsStartAt1": True,
                "pathFormat": "path",
                "supportsMemoryReferences": True,
            },
        )
        self.capabilities = init.body if isinstance(init.body, dict) else {}
        self.state = SessionState.CONFIGURING

        launch_seq = self._next_seq
        self._next_seq += 1
        launch_fut: asyncio.Future[ProtocolMessage] = asyncio.get_running_loop().create_future()
        self._pending[launch_seq] = launch_fut
        assert self._writer is not None
        self._writer.write(
            encode_message(ProtocolMessage.request(launch_seq, request_kind, launch_arguments))
        )
        await self._writer.drain()

        await self._initialized.wait()

        by_file: dict[str, list[int]] = {}
        for path, line in breakpoints:
            by_file.setdefault(path, []).append(line)
        for path, lines in by_file.items():
            await self._request(
                "setBreakpoints",
                {"source": {"path": path}, "breakpoints": [{"line": line} for line in lines]},
            )
        if self.capabilities.get("supportsConfigurationDoneRequest"):
            await self._request("configurationDone")

        launch_response = await asyncio.wait_for(launch_fut, self._request_timeout)
        if not launch_response.success:
            raise AdapterRequestError(request_kind, launch_response.message)
        self.state = SessionState.RUNNING

    async def close(self) -> None:
        if self._writer is not None and self.state not in (
            SessionState.INITIALIZING,
            SessionState.TERMINATED,
        ):
            try:
                await asyncio.wait_for(self._request("disconnect"), 2.0)
            except (SessionError, asyncio.TimeoutError):
                pass
        self.state = SessionState.TERMINATED
        if self._reader_task is not None:
            self._reader_task.cancel()
            try:
                await self._reader_task
            except (asyncio.CancelledError, Exception):
                pass
        if self._writer is not None:
            self._writer.close()
        if self._process is not None:
            try:
                await asyncio.wait_for(self._process.wait(), 3.0)
            except asyncio.TimeoutError:
                self._process.kill()
                await self._process.wait()
            # let the transport run its connection-lost callbacks before
            # the loop closes, or GC complains afterwards
            await asyncio.sleep(0)

    # -- operations --------------------------------------------------------

    async def await_stop(self) -> StopInfo | None:
        """Block until the debuggee pauses; None means the session ended."""
        if self.state is not SessionState.RUNNING:
            raise SessionStateError(f"await_stop requires a running session, state={self.state}")
        event = await self._events.get()
        return await self._resolve_stop(event)

    async def poll_stop(self) -> StopInfo | None:
        """Consume an already-queued stopped event without blocking.

        Covers adapters that pause several threads back to back; returns
        None when nothing is queued.
        """
        if self.state is not SessionState.STOPPED:
            return None
        try:
            event = self._events.get_nowait()
        except asyncio.QueueEmpty:
            return None
        return await self._resolve_stop(event)

    async def _resolve_stop(self, event: Any) -> StopInfo | None:
        if event is _SESSION_ENDED:
            self.state = SessionState.TERMINATED
            return None
        body = event.body or {}
        reason = str(body.get("reason", "unknown"))
        self.state = SessionState.STOPPED
        thread_id = int(body.get("threadId") or 0)
        if thread_id <= 0:
            thread_id = await self._first_thread()
        self._current_thread = thread_id
        location = await self._stop_location(thread_id)
        return StopInfo(reason=reason, thread_id=thread_id, location=location)

    async def _first_thread(self) -> int:
        """Some adapters stop without naming a thread; ask for the list."""
        try:
            response = await self._request("threads")
        except SessionError:
            return 0
        threads = (response.body or {}).get("threads") or []
        return int(threads[0]["id"]) if threads else 0

    async def _stop_location(self, thread_id: int) -> SourceLocation:
        try:
            frames = await self._stack_frames(thread_id)
        except SessionError:
            frames = []
        if not frames:
            return SourceLocation(file="<unknown>", line=1, method=None)
        return _frame_location(frames[0])

    async def _stack_frames(self, thread_id: int) -> list[dict[str, Any]]:
        response = await self._request("stackTrace", {"threadId": thread_id, "startFrame": 0})
        body = response.body or {}
        frames = body.get("stackFrames", [])
        return frames if isinstance(frames, list) else []

    async def step(self, kind: str) -> None:
        """Resume with next/stepIn/stepOut/continue; invalidates all refs."""
        if kind not in STEP_KINDS:
            raise ValueError(f"unknown step kind {kind!r}")
        if self.state is not SessionState.STOPPED:
            raise SessionStateError(f"cannot step while {self.state}")
        await self._request(kind, {"threadId": self._current_thread})
        self._valid_refs.clear()
        self.state = SessionState.RUNNING

    async def fetch_top_frame(self, stop: StopInfo) -> tuple[int, list[tuple[str, int]]]:
        """Return the visualized frame id and its (scope name, reference) pairs."""
        if self.state is not SessionState.STOPPED:
            raise SessionStateError(f"cannot fetch frames while {self.state}")
        frames = await self._stack_frames(stop.thread_id)
        if not frames:
            raise EmptyStackError(f"thread {stop.thread_id} reported an empty stack")
        index = min(self._frame_index, len(frames) - 1)
        frame_id = int(frames[index]["id"])
        response = await self._request("scopes", {"frameId": frame_id})
        body = response.body or {}
        scopes: list[tuple[str, int]] = []
        for scope in body.get("scopes", []):
            if scope.get("expensive") and not self._include_expensive:
                continue
            ref = int(scope.get("variablesReference", 0))
            scopes.append((str(scope.get("name", "")), ref))
            if ref > 0:
                self._valid_refs.add(ref)
        return frame_id, scopes

    async def fetch_children(self, variables_reference: int) -> list[RawVariable]:
        """One `variables` request; children come back in adapter order."""
        if self.state is not SessionState.STOPPED:
            raise SessionStateError(f"cannot fetch variables while {self.state}")
        if variables_reference <= 0:
            raise ValueError("variables_reference must be positive (0 denotes a leaf)")
        if variables_reference not in self._valid_refs:
            raise StaleReferenceError(
                f"reference {variables_reference} was not issued during the current stop"
            )
        response = await self._request("variables", {"variablesReference": variables_reference})
        body = response.body or {}
        children: list[RawVariable] = []
        for var in body.get("variables", []):
            ref = int(var.get("variablesReference", 0))
            if ref > 0:
                self._valid_refs.add(ref)
            children.append(
                RawVariable(
                    name=str(var.get("name", "")),
                    value=str(var.get("value", "")),
                    type_name=var.get("type"),
                    variables_reference=ref,
                    memory_reference=var.get("memoryReference"),
                )
            )
        return children


def _frame_location(frame: dict[str, Any]) -> SourceLocation:
    source = frame.get("source") or {}
    path = source.get("path") or source.get("name") or "<unknown>"
    line = int(frame.get("line", 1)) or 1
    return SourceLocation(file=str(path), line=max(line, 1), method=frame.get("name"))


async def start_session(
    adapter: AdapterSpec,
    launch_arguments: dict[str, Any] | None = None,
    breakpoints: list[tuple[str, int]] | None = None,
    *,
    handshake_timeout: float = DEFAULT_HANDSHAKE_TIMEOUT,
    request_timeout: float = DEFAULT_REQUEST_TIMEOUT,
    include_expensive: bool = False,
    frame_index: int = 0,
    request_kind: str | None = None,
) -> DapSession:
    """Spawn or connect to an adapter and complete the configuration handshake.

    Spawned adapters get a `launch` request, TCP endpoints an `attach`,
    unless ``request_kind`` overrides the choice.
    """
    session = DapSession(
        request_timeout=request_timeout,
        include_expensive=include_expensive,
        frame_index=frame_index,
    )
    kind = request_kind or ("launch" if adapter.command is not None else "attach")
    try:
        await asyncio.wait_for(
            session._handshake(adapter, launch_arguments or {}, breakpoints or [], kind),
            handshake_timeout,
        )
    except (AdapterSpawnError, TransportError):
        await session.close()
        raise
    except asyncio.TimeoutError:
        await session.close()
        raise HandshakeError("adapter handshake timed out") from None
    except SessionError as exc:
        await session.close()
        raise HandshakeError(f"adapter handshake failed: {exc}") from exc
    return session
