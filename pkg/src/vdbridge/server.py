"""Visual Debugging API server: pushes snapshots to every connected client.

One WebSocket endpoint carries everything; the same port also serves the
UI bundle as plain HTTP. Inbound client requests are funneled into a
single command queue that the orchestrator drains, so the debug session
is never touched concurrently. Each client has a bounded outbound queue:
a client that cannot keep up is disconnected rather than allowed to stall
the stepping loop.
"""

from __future__ import annotations

import asyncio
import json
import logging
import mimetypes
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from websockets.asyncio.server import Server, ServerConnection, serve
from websockets.datastructures import Headers
from websockets.exceptions import ConnectionClosed
from websockets.http11 import Request, Response

from .graph import serialize_graph
from .history import HistoryEntry

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1

ERROR_UNKNOWN_NODE = "unknown-node"
ERROR_RANGE = "range"
ERROR_NOT_STOPPED = "not-stopped"
ERROR_TERMINATED = "terminated"

CLIENT_MESSAGE_TYPES = ("loadChildren", "getHistory", "step", "setConfig")

_CLOSE = object()

_PLACEHOLDER_PAGE = """<!DOCTYPE html>
<html>
  <head><title>vdbridge</title></head>
  <body>
    <h1>vdbridge is running</h1>
    <p>The Visual Debugging API is served on this port over WebSocket.</p>
    <p>No UI bundle was found. Build the frontend (<code>npm run build</code>
    in <code>frontend/</code>) or point <code>VDBRIDGE_UI_DIR</code> at a bundle.</p>
  </body>
</html>
"""


def snapshot_payload(entry: HistoryEntry, history_length: int) -> dict[str, Any]:
    """The snapshot message body, sans seq (stamped per send)."""
    doc = serialize_graph(entry.graph)
    return {
        "type": "snapshot",
        "stepSeq": entry.step_seq,
        "location": doc["location"],
        "graph": {"roots": doc["roots"], "nodes": doc["nodes"], "links": doc["links"]},
        "changes": entry.changes.wire(),
        "historyLength": history_length,
    }


def history_payload(entry: HistoryEntry, history_length: int, index: int) -> dict[str, Any]:
    payload = snapshot_payload(entry, history_length)
    payload["type"] = "history"
    payload["historical"] = True
    payload["index"] = index
    return payload


@dataclass
class ClientCommand:
    """One inbound client request, tagged with who asked."""

    kind: str
    payload: dict[str, Any]
    client: "_Client"


@dataclass
class _Client:
    connection: ServerConnection
    queue: asyncio.Queue = field(default_factory=asyncio.Queue)
    writer: asyncio.Task | None = None

    def __hash__(self) -> int:
        return id(self)


class ApiServer:
    def __init__(
        self,
        *,
        host: str = "127.0.0.1",
        port: int = 8071,
        depth: int,
        history: int,
        static_dir: Path | None = None,
        queue_limit: int = 64,
    ):
        self._host = host
        self._requested_port = port
        self._depth = depth
        self._history = history
        self._static_dir = static_dir.resolve() if static_dir else None
        self._queue_limit = queue_limit
        self._seq = 0
        self._clients: set[_Client] = set()
        self._latest_snapshot: dict[str, Any] | None = None
        self._farewell: dict[str, Any] | None = None
        self._server: Server | None = None
        self.commands: asyncio.Queue[ClientCommand] = asyncio.Queue()
        self.port: int | None = None

    # -- lifecycle -----------------------------------------------------------

    async def start(self) -> None:
        self._server = await serve(
            self._handler,
            self._host,
            self._requested_port,
            process_request=self._process_request,
        )
        self.port = self._server.sockets[0].getsockname()[1]
        logger.info("visual debugging api on ws://%s:%s/", self._host, self.port)

    async def close(self) -> None:
        for client in list(self._clients):
            self._enqueue(client, _CLOSE)
        writers = [c.writer for c in self._clients if c.writer is not None]
        if writers:
            await asyncio.wait(writers, timeout=2.0)
        for client in list(self._clients):
            await self._drop(client)
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    # -- outbound ------------------------------------------------------------

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _stamp(self, payload: dict[str, Any]) -> dict[str, Any]:
        stamped = dict(payload)
        stamped["seq"] = self._next_seq()
        return stamped

    def broadcast_snapshot(self, entry: HistoryEntry, history_length: int) -> None:
        """Push one snapshot to every client; later joiners get it on hello."""
        payload = snapshot_payload(entry, history_length)
        self._latest_snapshot = payload
        self._fanout(self._stamp(payload))

    def broadcast_error(self, code: str, detail: str, *, farewell: bool = False) -> None:
        """Error to everyone; a farewell is also replayed to late joiners."""
        payload = {"type": "error", "code": code, "detail": detail}
        if farewell:
            self._farewell = payload
        self._fanout(self._stamp(payload))

    def send_history(self, client: _Client, entry: HistoryEntry, history_length: int, index: int) -> None:
        self._enqueue(client, self._stamp(history_payload(entry, history_length, index)))

    def send_error(self, client: _Client, code: str, detail: str) -> None:
        self._enqueue(client, self._stamp({"type": "error", "code": code, "detail": detail}))

    def _fanout(self, stamped: dict[str, Any]) -> None:
        for client in list(self._clients):
            self._enqueue(client, stamped)

    def _enqueue(self, client: _Client, item: Any) -> None:
        if client.queue.qsize() >= self._queue_limit:
            logger.warning("client outbound queue overflow; disconnecting")
            self._clients.discard(client)
            asyncio.ensure_future(self._drop(client))
            return
        client.queue.put_nowait(item)

    async def _drop(self, client: _Client) -> None:
        self._clients.discard(client)
        if client.writer is not None and not client.writer.done():
            client.writer.cancel()
        try:
            await client.connection.close()
        except Exception:
            pass

    # -- per-connection ------------------------------------------------------

    async def _handler(self, connection: ServerConnection) -> None:
        client = _Client(connection=connection)
        client.writer = asyncio.create_task(self._writer_loop(client))
        self._clients.add(client)
        self._enqueue(
            client,
            self._stamp(
                {
                    "type": "hello",
                    "version": PROTOCOL_VERSION,
                    "config": {"depth": self._depth, "history": self._history},
                }
            ),
        )
        if self._latest_snapshot is not None:
            self._enqueue(client, self._stamp(self._latest_snapshot))
        if self._farewell is not None:
            self._enqueue(client, self._stamp(self._farewell))
        try:
            async for frame in connection:
                command = self._parse_command(frame)
                if command is not None:
                    await self.commands.put(ClientCommand(command[0], command[1], client))
        except ConnectionClosed:
            pass
        finally:
            await self._drop(client)

    async def _writer_loop(self, client: _Client) -> None:
        try:
            while True:
                item = await client.queue.get()
                if item is _CLOSE:
                    break
                await client.connection.send(json.dumps(item, separators=(",", ":")))
        except (ConnectionClosed, OSError):
            pass
        except asyncio.CancelledError:
            raise

    def _parse_command(self, frame: str | bytes) -> tuple[str, dict[str, Any]] | None:
        try:
            payload = json.loads(frame)
        except (json.JSONDecodeError, UnicodeDecodeError):
            logger.debug("ignoring unparseable client frame")
            return None
        if not isinstance(payload, dict) or payload.get("type") not in CLIENT_MESSAGE_TYPES:
            logger.debug("ignoring client message of unknown type: %r", payload)
            return None
        return payload["type"], payload

    # -- static UI hosting -----------------------------------------------------

    def _process_request(self, connection: ServerConnection, request: Request):
        if "websocket" in request.headers.get("Upgrade", "").lower():
            return None
        return self._static_response(connection, request)

    def _static_response(self, connection: ServerConnection, request: Request) -> Response:
        path = request.path.split("?", 1)[0]
        if path in ("", "/"):
            path = "/index.html"
        if self._static_dir is None:
            if path == "/index.html":
                return _html_response(_PLACEHOLDER_PAGE)
            return connection.respond(404, "not found\n")
        candidate = (self._static_dir / path.lstrip("/")).resolve()
        if not str(candidate).startswith(str(self._static_dir)) or not candidate.is_file():
            return connection.respond(404, "not found\n")
        content_type = mimetypes.guess_type(candidate.name)[0] or "application/octet-stream"
        body = candidate.read_bytes()
        headers = Headers(
            [("Content-Type", content_type), ("Content-Length", str(len(body)))]
        )
        return Response(200, "OK", headers, body)


def _html_response(page: str) -> Response:
    body = page.encode("utf-8")
    headers = Headers(
        [("Content-Type", "text/html; charset=utf-8"), ("Content-Length", str(len(body)))]
    )
    return Response(200, "OK", headers, body)
