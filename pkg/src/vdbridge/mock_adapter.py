"""Scripted debug adapter: replays declarative debugging scenarios.

Speaks the real framed wire protocol over stdio or a single TCP
connection, so end-to-end tests run without a language runtime. Variable
references are allocated fresh for every stop and (by default) rejected
once the debuggee resumes, mirroring how real adapters invalidate
handles.

Scenario files are JSON documents:

    {
      "capabilities": {"supportsConfigurationDoneRequest": true},
      "invalidate_on_resume": true,
      "objects": {                       # shared objects, enables cycles
        "a": {"type": "Node", "value": "Node@a", "memory": "0xa",
               "children": [{"name": "next", "object": "b"}]},
        "b": {...}
      },
      "stops": [
        {
          "location": {"file": "Main.java", "line": 17, "method": "insert"},
          "reason": "breakpoint",
          "thread_id": 1,
          "scopes": [
            {"name": "Locals", "expensive": false, "variables": [
              {"name": "count", "type": "int", "value": "3"},          # leaf
              {"name": "gone", "type": "Object", "value": "null"},     # null leaf
              {"name": "tree", "type": "BST", "value": "BST@1",
               "memory": "0x1", "children": [...]},                    # inline object
              {"name": "head", "object": "a"}                          # shared object
            ]}
          ]
        }
      ]
    }

Optional per-stop keys: "empty_stack" (stackTrace returns no frames),
"also_stopped_threads" (extra stopped events emitted back to back), and
"omit_thread_id" (the stopped event names no thread, forcing clients to
ask via `threads`).
"""

from __future__ import annotations

import argparse
import itertools
import json
import socket
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, BinaryIO, Iterator

from .codec import ProtocolMessage, encode_message, parse_message


class ScenarioError(ValueError):
    """Scenario document does not match the schema."""


@dataclass(frozen=True)
class ChildSpec:
    name: str
    object_id: str | None = None
    value: str | None = None
    type_name: str | None = None


@dataclass(frozen=True)
class ObjectSpec:
    object_id: str
    type_name: str
    value: str
    memory: str | None
    children: tuple[ChildSpec, ...]


@dataclass(frozen=True)
class ScopeSpec:
    name: str
    expensive: bool
    variables: tuple[ChildSpec, ...]


@dataclass(frozen=True)
class StopSpec:
    location: dict[str, Any]
    reason: str
    thread_id: int
    scopes: tuple[ScopeSpec, ...]
    empty_stack: bool = False
    also_stopped_threads: tuple[int, ...] = ()
    omit_thread_id: bool = False


@dataclass
class Scenario:
    capabilities: dict[str, Any]
    stops: tuple[StopSpec, ...]
    objects: dict[str, ObjectSpec]
    invalidate_on_resume: bool = True

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: Any) -> "Scenario":
        if not isinstance(doc, dict):
            raise ScenarioError("scenario must be a JSON object")
        objects: dict[str, ObjectSpec] = {}

        def parse_object(object_id: str, spec: Any, where: str) -> None:
            if not isinstance(spec, dict):
                raise ScenarioError(f"{where}: object must be a JSON object")
            children = tuple(
                parse_child(child, f"{where}.children[{i}]")
                for i, child in enumerate(spec.get("children", []))
            )
            objects[object_id] = ObjectSpec(
                object_id=object_id,
                type_name=str(spec.get("type", "Object")),
                value=str(spec.get("value", object_id)),
                memory=spec.get("memory"),
                children=children,
            )

        counter = itertools.count()

        def parse_child(child: Any, where: str) -> ChildSpec:
            if not isinstance(child, dict) or "name" not in child:
                raise ScenarioError(f"{where}: child needs a name")
            name = str(child["name"])
            if "object" in child:
                return ChildSpec(name=name, object_id=str(child["object"]))
            if "children" in child:
                inline_id = f"~{next(counter)}"
                parse_object(inline_id, child, where)
                return ChildSpec(name=name, object_id=inline_id)
            if "value" not in child:
                raise ScenarioError(f"{where}: leaf {name!r} needs a value")
            return ChildSpec(name=name, value=str(child["value"]), type_name=child.get("type"))

        for object_id, spec in (doc.get("objects") or {}).items():
            parse_object(str(object_id), spec, f"objects.{object_id}")

        stops = []
        for i, stop in enumerate(doc.get("stops", [])):
            where = f"stops[{i}]"
            if not isinstance(stop, dict):
                raise ScenarioError(f"{where}: must be an object")
            location = stop.get("location") or {}
            if "file" not in location or "line" not in location:
                raise ScenarioError(f"{where}: location needs file and line")
            scopes = []
            for j, scope in enumerate(stop.get("scopes", [])):
                variables = tuple(
                    parse_child(v, f"{where}.scopes[{j}].variables[{k}]")
                    for k, v in enumerate(scope.get("variables", []))
                )
                scopes.append(
                    ScopeSpec(
                        name=str(scope.get("name", "Locals")),
                        expensive=bool(scope.get("expensive", False)),
                        variables=variables,
                    )
                )
            stops.append(
                StopSpec(
                    location=dict(location),
                    reason=str(stop.get("reason", "breakpoint")),
                    thread_id=int(stop.get("thread_id", 1)),
                    scopes=tuple(scopes),
                    empty_stack=bool(stop.get("empty_stack", False)),
                    also_stopped_threads=tuple(stop.get("also_stopped_threads", [])),
                    omit_thread_id=bool(stop.get("omit_thread_id", False)),
                )
            )

        scenario = cls(
            capabilities=dict(doc.get("capabilities") or {"supportsConfigurationDoneRequest": True}),
            stops=tuple(stops),
            objects=objects,
            invalidate_on_resume=bool(doc.get("invalidate_on_resume", True)),
        )
        scenario._check_references()
        return scenario

    def _check_references(self) -> None:
        def check(children: tuple[ChildSpec, ...], where: str) -> None:
            for child in children:
                if child.object_id is not None and child.object_id not in self.objects:
                    raise ScenarioError(f"{where}: undefined object id {child.object_id!r}")

        for object_id, spec in self.objects.items():
            check(spec.children, f"objects.{object_id}")
        for i, stop in enumerate(self.stops):
            for scope in stop.scopes:
                check(scope.variables, f"stops[{i}].{scope.name}")

    def frame_view(self, stop_index: int):
        """In-process FrameView over one stop, no wire involved.

        Unit tests for the graph builder use this to consume scenario
        fixtures directly.
        """
        from .graph import FrameView, SourceLocation
        from .session import RawVariable

        stop = self.stops[stop_index]
        table = _ReferenceTable(self, stop, first_ref=1)

        async def fetch_children(ref: int) -> list[RawVariable]:
            return [
                RawVariable(
                    name=c["name"],
                    value=c["value"],
                    type_name=c["type"],
                    variables_reference=c["variablesReference"],
                    memory_reference=c.get("memoryReference"),
                )
                for c in table.children(ref)
            ]

        loc = stop.location
        return FrameView(
            location=SourceLocation(
                file=loc["file"], line=int(loc["line"]), method=loc.get("method")
            ),
            scopes=[(s.name, table.scope_ref(s.name)) for s in stop.scopes],
            fetch_children=fetch_children,
        )


class _ReferenceTable:
    """Per-stop variablesReference assignments, eager and deterministic."""

    def __init__(self, scenario: Scenario, stop: StopSpec, first_ref: int):
        self.scenario = scenario
        self._scope_refs: dict[str, int] = {}
        self._object_refs: dict[str, int] = {}
        self._by_ref: dict[int, tuple[ChildSpec, ...]] = {}
        ref = first_ref
        queue: list[str] = []
        for scope in stop.scopes:
            self._scope_refs[scope.name] = ref
            self._by_ref[ref] = scope.variables
            ref += 1
            queue.extend(c.object_id for c in scope.variables if c.object_id is not None)
        seen: set[str] = set()
        while queue:
            object_id = queue.pop(0)
            if object_id in seen:
                continue
            seen.add(object_id)
            spec = scenario.objects[object_id]
            self._object_refs[object_id] = ref
            self._by_ref[ref] = spec.children
            ref += 1
            queue.extend(c.object_id for c in spec.children if c.object_id is not None)
        self.next_ref = ref

    def scope_ref(self, name: str) -> int:
        return self._scope_refs[name]

    def children(self, ref: int) -> list[dict[str, Any]]:
        specs = self._by_ref.get(ref)
        if specs is None:
            raise KeyError(ref)
        out = []
        for child in specs:
            if child.object_id is not None:
                obj = self.scenario.objects[child.object_id]
                entry = {
                    "name": child.name,
                    "value": obj.value,
                    "type": obj.type_name,
                    "variablesReference": self._object_refs[child.object_id],
                }
                if obj.memory is not None:
                    entry["memoryReference"] = obj.memory
            else:
                entry = {
                    "name": child.name,
                    "value": child.value,
                    "type": child.type_name,
                    "variablesReference": 0,
                }
            out.append(entry)
        return out


@dataclass
class _Transport:
    rfile: BinaryIO
    wfile: BinaryIO

    def read_message(self) -> ProtocolMessage | None:
        headers: dict[str, str] = {}
        while True:
            line = self.rfile.readline()
            if not line:
                return None
            if line in (b"\r\n", b"\n"):
                break
            name, sep, value = line.partition(b":")
            if sep:
                headers[name.decode("ascii", "replace").strip().lower()] = value.decode(
                    "ascii", "replace"
                ).strip()
        length = int(headers["content-length"])
        payload = self.rfile.read(length)
        if payload is None or len(payload) != length:
            return None
        return parse_message(payload)

    def write_message(self, msg: ProtocolMessage) -> None:
        self.wfile.write(encode_message(msg))
        self.wfile.flush()


class MockAdapter:
    """Single-connection, single-threaded scripted adapter."""

    def __init__(
        self,
        scenario: Scenario,
        rfile: BinaryIO,
        wfile: BinaryIO,
        transcript: Path | None = None,
    ):
        self.scenario = scenario
        self.transport = _Transport(rfile, wfile)
        self.transcript = transcript
        self._seq = 0
        self._stop_index = -1
        self._table: _ReferenceTable | None = None
        # ref -> (stop generation it was allocated in, children provider)
        self._all_refs: dict[int, tuple[int, _ReferenceTable]] = {}
        self._next_ref = 1
        self._frame_id = 1000
        self._configured = False

    # -- plumbing ----------------------------------------------------------

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _respond(self, request: ProtocolMessage, body: Any = None) -> None:
        self.transport.write_message(
            ProtocolMessage.response(
                self._next_seq(), request.seq, request.name, success=True, body=body
            )
        )

    def _reject(self, request: ProtocolMessage, message: str) -> None:
        print(f"mock-adapter: rejecting {request.name!r}: {message}", file=sys.stderr)
        self.transport.write_message(
            ProtocolMessage.response(
                self._next_seq(), request.seq, request.name, success=False, message=message
            )
        )

    def _emit(self, event: str, body: Any = None) -> None:
        self.transport.write_message(ProtocolMessage.event(self._next_seq(), event, body))

    def _record(self, request: ProtocolMessage) -> None:
        if self.transcript is None:
            return
        entry = {"command": request.name, "arguments": request.arguments, "seq": request.seq}
        with self.transcript.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, separators=(",", ":")) + "\n")

    # -- scenario progression ----------------------------------------------

    @property
    def _stop(self) -> StopSpec | None:
        if 0 <= self._stop_index < len(self.scenario.stops):
            return self.scenario.stops[self._stop_index]
        return None

    def _advance(self) -> None:
        if self._table is not None:
            self._next_ref = self._table.next_ref
        self._stop_index += 1
        stop = self._stop
        if stop is None:
            self._table = None
            self._emit("exited", {"exitCode": 0})
            self._emit("terminated")
            return
        self._table = _ReferenceTable(self.scenario, stop, first_ref=self._next_ref)
        for ref in self._table._by_ref:
            self._all_refs[ref] = (self._stop_index, self._table)
        self._frame_id += 1
        body: dict[str, Any] = {"reason": stop.reason, "allThreadsStopped": True}
        if not stop.omit_thread_id:
            body["threadId"] = stop.thread_id
        self._emit("stopped", body)
        for extra_thread in stop.also_stopped_threads:
            self._emit(
                "stopped",
                {"reason": stop.reason, "threadId": extra_thread, "allThreadsStopped": True},
            )

    # -- request handlers ----------------------------------------------------

    def serve(self) -> int:
        while True:
            try:
                request = self.transport.read_message()
            except (OSError, ValueError, KeyError):
                return 1
            if request is None:
                return 0
            if request.kind != "request":
                continue
            self._record(request)
            try:
                done = self._handle(request)
            except BrokenPipeError:
                return 0
            if done:
                return 0

    def _handle(self, request: ProtocolMessage) -> bool:
        command = request.name
        if command == "initialize":
            self._respond(request, self.scenario.capabilities)
            self._emit("initialized")
        elif command in ("launch", "attach"):
            self._respond(request)
        elif command == "setBreakpoints":
            args = request.arguments or {}
            breakpoints = [
                {"verified": True, "line": bp.get("line")} for bp in args.get("breakpoints", [])
            ]
            self._respond(request, {"breakpoints": breakpoints})
        elif command == "configurationDone":
            if self._configured:
                self._reject(request, "configurationDone already received")
                return False
            self._configured = True
            self._respond(request)
            self._advance()
        elif command == "threads":
            stop = self._stop
            thread_id = stop.thread_id if stop else 1
            self._respond(request, {"threads": [{"id": thread_id, "name": "main"}]})
        elif command == "stackTrace":
            self._stack_trace(request)
        elif command == "scopes":
            self._scopes(request)
        elif command == "variables":
            self._variables(request)
        elif command in ("next", "stepIn", "stepOut", "continue"):
            if self._stop is None:
                self._reject(request, "not stopped")
                return False
            body = {"allThreadsContinued": True} if command == "continue" else None
            self._respond(request, body)
            self._advance()
        elif command == "disconnect":
            self._respond(request)
            return True
        else:
            self._reject(request, f"unsupported command {command!r}")
        return False

    def _stack_trace(self, request: ProtocolMessage) -> None:
        stop = self._stop
        if stop is None:
            self._reject(request, "no active stop")
            return
        if stop.empty_stack:
            self._respond(request, {"stackFrames": [], "totalFrames": 0})
            return
        loc = stop.location
        frame = {
            "id": self._frame_id,
            "name": loc.get("method") or "run",
            "line": int(loc["line"]),
            "column": 1,
            "source": {"name": Path(loc["file"]).name, "path": loc["file"]},
        }
        self._respond(request, {"stackFrames": [frame], "totalFrames": 1})

    def _scopes(self, request: ProtocolMessage) -> None:
        stop = self._stop
        if stop is None or self._table is None:
            self._reject(request, "no active stop")
            return
        args = request.arguments or {}
        if args.get("frameId") != self._frame_id:
            self._reject(request, f"unknown frameId {args.get('frameId')!r}")
            return
        scopes = [
            {
                "name": scope.name,
                "variablesReference": self._table.scope_ref(scope.name),
                "expensive": scope.expensive,
            }
            for scope in stop.scopes
        ]
        self._respond(request, {"scopes": scopes})

    def _variables(self, request: ProtocolMessage) -> None:
        args = request.arguments or {}
        ref = args.get("variablesReference")
        if not isinstance(ref, int) or ref <= 0:
            self._reject(request, f"invalid variablesReference {ref!r}")
            return
        allocated = self._all_refs.get(ref)
        if allocated is None:
            self._reject(request, f"unknown variablesReference {ref}")
            return
        generation, table = allocated
        if self.scenario.invalidate_on_resume and generation != self._stop_index:
            self._reject(request, f"stale variablesReference {ref} (debuggee resumed)")
            return
        self._respond(request, {"variables": table.children(ref)})


def bundled_scenario(name: str) -> Path:
    """Path of a scenario fixture shipped with the package."""
    resource = resources.files("vdbridge").joinpath("scenarios", f"{name}.json")
    with resources.as_file(resource) as path:
        return Path(path)


def iter_bundled_scenarios() -> Iterator[str]:
    for entry in resources.files("vdbridge").joinpath("scenarios").iterdir():
        if entry.name.endswith(".json"):
            yield entry.name[: -len(".json")]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="vdbridge-mock-adapter",
        description="Scripted DAP adapter replaying a scenario file.",
    )
    parser.add_argument("--scenario", required=True, help="scenario JSON file")
    parser.add_argument(
        "--tcp",
        type=int,
        default=None,
        metavar="PORT",
        help="serve one TCP connection on PORT (0 picks a free port) instead of stdio",
    )
    parser.add_argument("--transcript", default=None, help="append received requests here, one JSON per line")
    args = parser.parse_args(argv)

    try:
        scenario = Scenario.load(args.scenario)
    except (OSError, ScenarioError) as exc:
        print(f"mock-adapter: {exc}", file=sys.stderr)
        return 2
    transcript = Path(args.transcript) if args.transcript else None

    if args.tcp is None:
        adapter = MockAdapter(scenario, sys.stdin.buffer, sys.stdout.buffer, transcript)
        return adapter.serve()

    with socket.create_server(("127.0.0.1", args.tcp)) as server:
        port = server.getsockname()[1]
        print(f"mock-adapter listening on 127.0.0.1:{port}", file=sys.stderr, flush=True)
        conn, _addr = server.accept()
        with conn:
            rfile = conn.makefile("rb")
            wfile = conn.makefile("wb")
            adapter = MockAdapter(scenario, rfile, wfile, transcript)
            return adapter.serve()


def console_main() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
