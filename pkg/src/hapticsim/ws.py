"""Minimal server-side WebSocket support (RFC 6455, no extensions).

The session service speaks newline-delimited JSON over a plain socket; a
browser client instead opens the same port with an HTTP upgrade request.
This module implements just enough of the protocol for that: handshake
response, frame encode/decode with client masking, ping/pong, close, and
continuation frames. Text payloads carry exactly one JSON message each.
"""

from __future__ import annotations

import base64
import hashlib
import struct

from .errors import ProtocolError

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_BINARY = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA

MAX_FRAME_PAYLOAD = 1 << 20
MAX_MESSAGE_PAYLOAD = 1 << 20


def accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def parse_handshake(header_text: str) -> dict[str, str]:
    """Parse an HTTP upgrade request (request line + headers) into a
    lower-cased header map. Raises ProtocolError if it is not a WebSocket
    upgrade."""
    lines = header_text.split("\r\n") if "\r\n" in header_text else header_text.split("\n")
    if not lines or not lines[0].startswith("GET "):
        raise ProtocolError("not an HTTP GET request")
    headers: dict[str, str] = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        if ":" not in line:
            raise ProtocolError(f"malformed header line: {line[:80]!r}")
        name, _, value = line.partition(":")
        headers[name.strip().lower()] = value.strip()
    if "websocket" not in headers.get("upgrade", "").lower():
        raise ProtocolError("missing Upgrade: websocket header")
    if "sec-websocket-key" not in headers:
        raise ProtocolError("missing Sec-WebSocket-Key header")
    return headers


def handshake_response(headers: dict[str, str]) -> bytes:
    key = headers["sec-websocket-key"]
    return (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept_key(key)}\r\n"
        "\r\n"
    ).encode("ascii")


def encode_frame(opcode: int, payload: bytes, fin: bool = True,
                 mask: bytes | None = None) -> bytes:
    """Build one frame. Servers send unmasked; pass `mask` (4 bytes) to
    build client-style frames in tests."""
    b0 = (0x80 if fin else 0x00) | (opcode & 0x0F)
    length = len(payload)
    mask_bit = 0x80 if mask is not None else 0x00
    if length < 126:
        header = struct.pack("!BB", b0, mask_bit | length)
    elif length < (1 << 16):
        header = struct.pack("!BBH", b0, mask_bit | 126, length)
    else:
        header = struct.pack("!BBQ", b0, mask_bit | 127, length)
    if mask is not None:
        if len(mask) != 4:
            raise ProtocolError("mask must be 4 bytes")
        masked = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        return header + mask + masked
    return header + payload


def encode_text(payload: str) -> bytes:
    return encode_frame(OP_TEXT, payload.encode("utf-8"))


def encode_close(code: int = 1000) -> bytes:
    return encode_frame(OP_CLOSE, struct.pack("!H", code))


def encode_pong(payload: bytes) -> bytes:
    return encode_frame(OP_PONG, payload)


class FrameParser:
    """Incremental frame parser for the server side of a connection.

    Feed raw socket bytes; collect completed messages as (opcode, payload)
    pairs where opcode is OP_TEXT/OP_BINARY for data (continuations already
    assembled) or a control opcode. Client frames must be masked.
    """

    def __init__(self, require_mask: bool = True):
        # servers require masked client frames; a test client parsing server
        # frames passes require_mask=False
        self._require_mask = require_mask
        self._buf = bytearray()
        self._fragments = bytearray()
        self._fragment_opcode: int | None = None

    def feed(self, data: bytes) -> list[tuple[int, bytes]]:
        self._buf.extend(data)
        out: list[tuple[int, bytes]] = []
        while True:
            frame = self._try_parse_frame()
            if frame is None:
                return out
            fin, opcode, payload = frame
            if opcode in (OP_CLOSE, OP_PING, OP_PONG):
                if not fin:
                    raise ProtocolError("control frames must not be fragmented")
                if len(payload) > 125:
                    raise ProtocolError("control frame payload too long")
                out.append((opcode, payload))
                continue
            if opcode in (OP_TEXT, OP_BINARY):
                if self._fragment_opcode is not None:
                    raise ProtocolError("new data frame during fragmented message")
                if fin:
                    out.append((opcode, payload))
                else:
                    self._fragment_opcode = opcode
                    self._fragments = bytearray(payload)
            elif opcode == OP_CONT:
                if self._fragment_opcode is None:
                    raise ProtocolError("continuation frame without a start")
                self._fragments.extend(payload)
                if len(self._fragments) > MAX_MESSAGE_PAYLOAD:
                    raise ProtocolError("fragmented message too long")
                if fin:
                    out.append((self._fragment_opcode, bytes(self._fragments)))
                    self._fragment_opcode = None
                    self._fragments = bytearray()
            else:
                raise ProtocolError(f"reserved opcode {opcode:#x}")

    def _try_parse_frame(self) -> tuple[bool, int, bytes] | None:
        buf = self._buf
        if len(buf) < 2:
            return None
        b0, b1 = buf[0], buf[1]
        if b0 & 0x70:
            raise ProtocolError("reserved bits set (extensions unsupported)")
        fin = bool(b0 & 0x80)
        opcode = b0 & 0x0F
        masked = bool(b1 & 0x80)
        length = b1 & 0x7F
        offset = 2
        if length == 126:
            if len(buf) < offset + 2:
                return None
            (length,) = struct.unpack_from("!H", buf, offset)
            offset += 2
        elif length == 127:
            if len(buf) < offset + 8:
                return None
            (length,) = struct.unpack_from("!Q", buf, offset)
            offset += 8
        if length > MAX_FRAME_PAYLOAD:
            raise ProtocolError("frame payload too long")
        if self._require_mask and not masked:
            raise ProtocolError("client frames must be masked")
        mask = b""
        if masked:
            if len(buf) < offset + 4:
                return None
            mask = bytes(buf[offset:offset + 4])
            offset += 4
        if len(buf) < offset + length:
            return None
        payload = bytes(buf[offset:offset + length])
        del self._buf[:offset + length]
        if masked:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        return fin, opcode, payload
