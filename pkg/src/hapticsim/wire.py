"""Wire protocol: newline-delimited JSON messages between clients and the
session service.

Client -> server: hello, pose, tool_select, world_event, param_override,
start, pause. Server -> client: welcome, force, procedure_event, stats,
param_applied, error. Every message carries a per-direction monotonically
increasing integer `seq`; unknown or malformed input is answered with an
error message, never dropped silently and never fatal to the session.

The decoder is deliberately paranoid: it is the surface the fuzz suite
hammers, so every check raises ProtocolError with a stable error code
instead of leaking exceptions.
"""

from __future__ import annotations

import json
import math

from .errors import ProtocolError

PROTOCOL_VERSION = 1

MAX_LINE_BYTES = 1 << 20
MAX_STRING_LEN = 4096

CLIENT_TYPES = ("hello", "pose", "tool_select", "world_event",
                "param_override", "start", "pause")
SERVER_TYPES = ("welcome", "force", "procedure_event", "stats",
                "param_applied", "error")

_MATERIAL_FIELDS = ("stiffness_k", "damping_b", "friction_mu", "pop_force",
                    "pop_depth", "post_pop_stiffness_scale")


def _fail(code: str, message: str) -> ProtocolError:
    err = ProtocolError(message)
    err.code = code
    return err


def _number(obj, key, ctx) -> float:
    v = obj.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise _fail("bad_field", f"{ctx}.{key} must be a number")
    try:
        v = float(v)
    except OverflowError:
        raise _fail("bad_field", f"{ctx}.{key} must be finite") from None
    if not math.isfinite(v):
        raise _fail("bad_field", f"{ctx}.{key} must be finite")
    return v


def _string(obj, key, ctx) -> str:
    v = obj.get(key)
    if not isinstance(v, str):
        raise _fail("bad_field", f"{ctx}.{key} must be a string")
    if len(v) > MAX_STRING_LEN:
        raise _fail("bad_field", f"{ctx}.{key} too long")
    return v


def _vec(obj, key, ctx, size) -> list[float]:
    v = obj.get(key)
    if not isinstance(v, list) or len(v) != size:
        raise _fail("bad_field", f"{ctx}.{key} must be a list of {size} numbers")
    out = []
    for c in v:
        if isinstance(c, bool) or not isinstance(c, (int, float)):
            raise _fail("bad_field", f"{ctx}.{key} must contain finite numbers")
        try:
            c = float(c)
        except OverflowError:
            raise _fail("bad_field", f"{ctx}.{key} must contain finite numbers") from None
        if not math.isfinite(c):
            raise _fail("bad_field", f"{ctx}.{key} must contain finite numbers")
        out.append(c)
    return out


def decode_client_message(raw: bytes | str) -> dict:
    """Parse and validate one client line into a normalized message dict.

    Raises ProtocolError (with a `.code`) on any malformed input.
    """
    if isinstance(raw, bytes):
        if len(raw) > MAX_LINE_BYTES:
            raise _fail("too_long", "message exceeds size limit")
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise _fail("bad_encoding", "message is not valid UTF-8") from None
    elif len(raw) > MAX_LINE_BYTES:
        raise _fail("too_long", "message exceeds size limit")
    try:
        obj = json.loads(raw)
    except (json.JSONDecodeError, RecursionError):
        raise _fail("bad_json", "message is not valid JSON") from None
    if not isinstance(obj, dict):
        raise _fail("bad_message", "message must be a JSON object")

    mtype = obj.get("type")
    if not isinstance(mtype, str):
        raise _fail("bad_message", "message must carry a string 'type'")
    if mtype not in CLIENT_TYPES:
        raise _fail("unknown_type", f"unknown message type {mtype[:64]!r}")

    seq = obj.get("seq")
    if isinstance(seq, bool) or not isinstance(seq, int):
        raise _fail("bad_seq", "message must carry an integer 'seq'")

    msg: dict = {"type": mtype, "seq": seq}
    if mtype == "hello":
        version = obj.get("protocol_version")
        if isinstance(version, bool) or not isinstance(version, int):
            raise _fail("bad_field", "hello.protocol_version must be an integer")
        msg["protocol_version"] = version
        if "session_id" in obj:
            msg["session_id"] = _string(obj, "session_id", "hello")
    elif mtype == "pose":
        msg["t"] = _number(obj, "t", "pose")
        msg["position"] = _vec(obj, "position", "pose", 3)
        if "orientation" in obj:
            msg["orientation"] = _vec(obj, "orientation", "pose", 4)
    elif mtype == "tool_select":
        msg["tool"] = _string(obj, "tool", "tool_select")
    elif mtype == "world_event":
        ev = obj.get("event")
        if not isinstance(ev, dict):
            raise _fail("bad_field", "world_event.event must be an object")
        kind = ev.get("kind")
        if kind not in ("insert", "remove"):
            raise _fail("bad_field", "world_event.event.kind must be insert|remove")
        payload = {"kind": kind,
                   "object_id": _string(ev, "object_id", "world_event.event"),
                   "position": _vec(ev, "position", "world_event.event", 3)}
        if kind == "insert":
            if "orientation" in ev:
                payload["orientation"] = _vec(ev, "orientation",
                                              "world_event.event", 4)
            else:
                payload["orientation"] = [0.0, 0.0, 0.0, 1.0]
        msg["event"] = payload
    elif mtype == "param_override":
        msg["organ_id"] = _string(obj, "organ_id", "param_override")
        mat = obj.get("material")
        if not isinstance(mat, dict) or not mat:
            raise _fail("bad_field",
                        "param_override.material must be a non-empty object")
        fields = {}
        for key in mat:
            if key not in _MATERIAL_FIELDS:
                raise _fail("bad_field",
                            f"param_override.material has unknown field {str(key)[:64]!r}")
            fields[key] = _number(mat, key, "param_override.material")
        msg["material"] = fields
    # start/pause carry nothing beyond type + seq
    return msg


def encode_message(msg: dict) -> str:
    """Serialize a server message to one JSON line (no trailing newline)."""
    if msg.get("type") not in SERVER_TYPES:
        raise ProtocolError(f"not a server message type: {msg.get('type')!r}")
    return json.dumps(msg, separators=(",", ":"), allow_nan=False)


def error_message(seq: int, code: str, message: str) -> dict:
    return {"type": "error", "seq": seq, "code": code, "message": message}
