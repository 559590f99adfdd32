"""Content-Length framed codec for debug-adapter wire messages.

The wire format is ``Content-Length: <N>\\r\\n\\r\\n`` followed by exactly N
bytes of UTF-8 JSON. Three envelopes travel over it: requests, responses,
and events. Framing errors poison the stream (there is no safe way to
resynchronize); a bad body inside a well-framed message is recoverable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

REQUEST = "request"
RESPONSE = "response"
EVENT = "event"

_KINDS = (REQUEST, RESPONSE, EVENT)

_HEADER_END = b"\r\n\r\n"
# A header block larger than this cannot be a real header; treat as desync.
_MAX_HEADER_BYTES = 16 * 1024


class CodecError(Exception):
    """Base class for codec failures."""


class FramingError(CodecError):
    """Broken framing; the connection cannot be trusted afterwards."""


class BodyDecodeError(CodecError):
    """A complete frame whose body is not a valid message envelope."""

    def __init__(self, reason: str, raw_body: bytes):
        super().__init__(reason)
        self.raw_body = raw_body


class EnvelopeError(CodecError):
    """Message violates the envelope contract or is not serializable."""


@dataclass(frozen=True)
class ProtocolMessage:
    """One request, response, or event envelope.

    ``name`` is the command for requests/responses and the event name for
    events. ``request_seq`` and ``success`` are meaningful for responses
    only; ``arguments`` for requests only.
    """

    seq: int
    kind: str
    name: str
    arguments: Any = None
    request_seq: int | None = None
    success: bool | None = None
    message: str | None = None
    body: Any = None

    @classmethod
    def request(cls, seq: int, command: str, arguments: Any = None) -> "ProtocolMessage":
        return cls(seq=seq, kind=REQUEST, name=command, arguments=arguments)

    @classmethod
    def response(
        cls,
        seq: int,
        request_seq: int,
        command: str,
        success: bool = True,
        body: Any = None,
        message: str | None = None,
    ) -> "ProtocolMessage":
        return cls(
            seq=seq,
            kind=RESPONSE,
            name=command,
            request_seq=request_seq,
            success=success,
            body=body,
            message=message,
        )

    @classmethod
    def event(cls, seq: int, event: str, body: Any = None) -> "ProtocolMessage":
        return cls(seq=seq, kind=EVENT, name=event, body=body)

    def validate(self) -> None:
        if not isinstance(self.seq, int) or isinstance(self.seq, bool) or self.seq < 1:
            raise EnvelopeError(f"seq must be a positive integer, got {self.seq!r}")
        if self.kind not in _KINDS:
            raise EnvelopeError(f"unknown message kind {self.kind!r}")
        if not isinstance(self.name, str) or not self.name:
            raise EnvelopeError("command/event name must be a non-empty string")
        if self.kind == RESPONSE:
            rs = self.request_seq
            if not isinstance(rs, int) or isinstance(rs, bool) or rs < 1:
                raise EnvelopeError(f"response request_seq must be a positive integer, got {rs!r}")
            if not isinstance(self.success, bool):
                raise EnvelopeError("response success must be a boolean")


def _to_wire(msg: ProtocolMessage) -> dict[str, Any]:
    wire: dict[str, Any] = {"seq": msg.seq, "type": msg.kind}
    if msg.kind == REQUEST:
        wire["command"] = msg.name
        if msg.arguments is not None:
            wire["arguments"] = msg.arguments
    elif msg.kind == RESPONSE:
        wire["request_seq"] = msg.request_seq
        wire["success"] = msg.success
        wire["command"] = msg.name
        if msg.message is not None:
            wire["message"] = msg.message
        if msg.body is not None:
            wire["body"] = msg.body
    else:
        wire["event"] = msg.name
        if msg.body is not None:
            wire["body"] = msg.body
    return wire


def _from_wire(wire: Any, raw: bytes) -> ProtocolMessage:
    if not isinstance(wire, dict):
        raise BodyDecodeError(f"message body must be an object, got {type(wire).__name__}", raw)
    kind = wire.get("type")
    if kind not in _KINDS:
        raise BodyDecodeError(f"unknown message type {kind!r}", raw)
    try:
        if kind == REQUEST:
            msg = ProtocolMessage.request(
                seq=wire["seq"], command=wire["command"], arguments=wire.get("arguments")
            )
        elif kind == RESPONSE:
            msg = ProtocolMessage.response(
                seq=wire["seq"],
                request_seq=wire["request_seq"],
                command=wire["command"],
                success=wire["success"],
                body=wire.get("body"),
                message=wire.get("message"),
            )
        else:
            msg = ProtocolMessage.event(seq=wire["seq"], event=wire["event"], body=wire.get("body"))
        msg.validate()
    except KeyError as exc:
        raise BodyDecodeError(f"envelope missing field {exc.args[0]!r}", raw) from exc
    except EnvelopeError as exc:
        raise BodyDecodeError(str(exc), raw) from exc
    return msg


def frame_payload(payload: bytes) -> bytes:
    """Wrap raw payload bytes in a Content-Length frame."""
    return b"Content-Length: %d\r\n\r\n%b" % (len(payload), payload)


def encode_message(msg: ProtocolMessage) -> bytes:
    """Serialize one envelope to framed wire bytes.

    The length header counts UTF-8 bytes, never characters.
    """
    msg.validate()
    try:
        payload = json.dumps(
            _to_wire(msg), ensure_ascii=False, separators=(",", ":"), allow_nan=False
        ).encode("utf-8")
    except (TypeError, ValueError) as exc:
        raise EnvelopeError(f"message not serializable: {exc}") from exc
    return frame_payload(payload)


def parse_message(raw: bytes) -> ProtocolMessage:
    """Parse one frame body into an envelope."""
    try:
        wire = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BodyDecodeError(f"body is not valid JSON: {exc}", raw) from exc
    return _from_wire(wire, raw)


class StreamDecoder:
    """Incremental frame splitter for one connection.

    Single-owner: feed() consumes arbitrary chunks and yields complete
    frame bodies. A framing error poisons the decoder permanently.
    """

    def __init__(self) -> None:
        self._buffer = bytearray()
        self._expected: int | None = None
        self._poisoned: str | None = None

    @property
    def poisoned(self) -> bool:
        return self._poisoned is not None

    def feed(self, data: bytes) -> list[bytes]:
        if self._poisoned is not None:
            raise FramingError(self._poisoned)
        self._buffer.extend(data)
        frames: list[bytes] = []
        while True:
            if self._expected is None:
                end = self._buffer.find(_HEADER_END)
                if end < 0:
                    if len(self._buffer) > _MAX_HEADER_BYTES:
                        self._poison("header block exceeds size limit")
                    break
                self._expected = self._parse_header(bytes(self._buffer[:end]))
                del self._buffer[: end + len(_HEADER_END)]
            if len(self._buffer) < self._expected:
                break
            frames.append(bytes(self._buffer[: self._expected]))
            del self._buffer[: self._expected]
            self._expected = None
        return frames

    @property
    def pending(self) -> bytes:
        """Bytes buffered for an incomplete frame, header reconstructed."""
        if self._expected is None:
            return bytes(self._buffer)
        return b"Content-Length: %d\r\n\r\n%b" % (self._expected, bytes(self._buffer))

    def _parse_header(self, block: bytes) -> int:
        length: int | None = None
        for line in block.split(b"\r\n"):
            if not line:
                continue
            name, sep, value = line.partition(b":")
            if not sep:
                self._poison(f"malformed header line {line!r}")
            if name.strip().lower() == b"content-length":
                try:
                    length = int(value.strip())
                except ValueError:
                    self._poison(f"non-numeric Content-Length {value.strip()!r}")
            # other headers are tolerated and ignored
        if length is None:
            self._poison("missing Content-Length header")
        if length < 0:
            self._poison(f"negative Content-Length {length}")
        return length

    def _poison(self, reason: str) -> None:
        self._poisoned = reason
        raise FramingError(reason)


def decode_stream(buffer: bytes) -> tuple[list[ProtocolMessage], bytes]:
    """Decode every complete message in ``buffer``.

    Returns the parsed messages in order plus the trailing incomplete
    bytes. Raises :class:`FramingError` on broken framing and
    :class:`BodyDecodeError` (carrying the raw body) on a bad envelope.
    """
    decoder = StreamDecoder()
    messages = [parse_message(raw) for raw in decoder.feed(buffer)]
    return messages, decoder.pending
