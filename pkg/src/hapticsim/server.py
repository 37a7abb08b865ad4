"""Interactive session service.

One asyncio server hosts named sessions. A client speaks newline-delimited
JSON over a plain socket, or the same messages over a WebSocket: the server
sniffs the first line and performs the HTTP upgrade when it sees a GET
request, so both client kinds share one port.

The UI doubles as the stylus: pose messages feed a sample-and-hold device
and the session ticks at its configured dt on the wall clock, so network
jitter never shows up in servo cadence. Sessions outlive connections;
rejoining by session_id replays the welcome summary plus the full
procedure-event backlog. Slow clients lose force frames (latest wins) but
never procedure events.
"""

from __future__ import annotations

import asyncio
import itertools
import json
from collections import deque

import numpy as np

from . import ws
from .config import Bundle
from .errors import ConfigError, HapticSimError, InputError, ProtocolError
from .haptic_core import HapticMaterial, StylusSample
from .logio import (contact_to_dict, force_to_dict, procedure_event_to_dict,
                    stats_to_dict, tick_record_to_dict)
from .procedure import (InsertEvent, RemoveEvent, apply_world_event,
                        initial_state, observe_sample)
from .servo import ServoState, TickStats, tick
from .wire import (MAX_LINE_BYTES, PROTOCOL_VERSION, decode_client_message,
                   encode_message, error_message)

# Pending outbound bytes above this: drop force frames for that client.
_SLOW_CLIENT_BYTES = 1 << 16
_STATS_EVERY_TICKS = 1000


class Session:
    """Shared simulation state for one session, transport-agnostic.

    All mutation happens on the event loop thread (or synchronously in
    tests); clients receive immutable message dicts.
    """

    def __init__(self, session_id: str, bundle: Bundle, log_path: str | None = None):
        self.session_id = session_id
        self.config = bundle.config
        self.scene = bundle.scene
        self.graph = bundle.graph
        self.params = bundle.config.servo_params()
        self.servo_state = ServoState()
        self.proc_state = initial_state(bundle.graph)
        self.held_position = np.zeros(3)
        self.have_pose = False
        self.active_tool = ""
        self.started = False
        self.tick_count = 0
        self.clients: list["ClientConn"] = []
        self.alive = True
        self._log_seq = itertools.count()
        self._log_fh = (open(log_path, "w", encoding="utf-8", buffering=1)
                        if log_path else None)
        self._lateness = deque(maxlen=10_000)
        self._misses = 0
        self._clamped = 0

    # -- lifecycle -----------------------------------------------------

    def close(self) -> None:
        self.alive = False
        if self._log_fh:
            self._log_fh.close()
            self._log_fh = None

    def _log(self, kind: str, payload: dict) -> None:
        if self._log_fh is None:
            return
        entry = {"session_id": self.session_id, "seq": next(self._log_seq),
                 "kind": kind, "payload": payload}
        self._log_fh.write(json.dumps(entry, separators=(",", ":")))
        self._log_fh.write("\n")

    def flush_log(self) -> None:
        if self._log_fh:
            self._log_fh.flush()

    @property
    def session_time(self) -> float:
        return self.tick_count * self.params.dt

    # -- message handling ----------------------------------------------

    def handle(self, conn: "ClientConn", msg: dict) -> list[dict]:
        mtype = msg["type"]
        try:
            if mtype == "pose":
                self.held_position = np.asarray(msg["position"], dtype=np.float64)
                self.have_pose = True
                return []
            if mtype == "tool_select":
                self.active_tool = msg["tool"]
                return []
            if mtype == "world_event":
                return self._handle_world_event(msg)
            if mtype == "param_override":
                return self._handle_override(msg)
            if mtype == "start":
                self.started = True
                return []
            if mtype == "pause":
                self.started = False
                return [self._stats_message()]
            if mtype == "hello":
                # duplicate hello on a bound connection: re-welcome
                return self.welcome_messages()
        except HapticSimError as e:
            return [error_message(msg.get("seq", 0), "rejected", str(e))]
        return [error_message(msg.get("seq", 0), "unknown_type",
                              f"unhandled message type {mtype!r}")]

    def _handle_world_event(self, msg: dict) -> list[dict]:
        ev = msg["event"]
        t = self.session_time
        if ev["kind"] == "insert":
            event = InsertEvent(t, ev["object_id"], ev["position"],
                                tuple(ev["orientation"]))
        else:
            event = RemoveEvent(t, ev["object_id"], ev["position"])
        self.proc_state, new_events = apply_world_event(self.graph,
                                                        self.proc_state, event)
        for pe in new_events:
            d = procedure_event_to_dict(pe)
            self._log("procedure_event", d)
            self.broadcast_event({"type": "procedure_event", **d})
        return []

    def _handle_override(self, msg: dict) -> list[dict]:
        organ_id = msg["organ_id"]
        try:
            organ = self.scene.organ(organ_id)
        except InputError:
            return [error_message(msg["seq"], "unknown_organ",
                                  f"no organ {organ_id!r} in scene")]
        fields = {f: getattr(organ.material, f)
                  for f in ("stiffness_k", "damping_b", "friction_mu",
                            "pop_force", "pop_depth", "post_pop_stiffness_scale")}
        fields.update(msg["material"])
        try:
            material = HapticMaterial(**fields)
        except ConfigError as e:
            return [error_message(msg["seq"], "bad_override", str(e))]
        self.scene = self.scene.with_material(organ_id, material)
        payload = {"organ_id": organ_id, "material": fields}
        self._log("param_override", payload)
        self.broadcast_event({"type": "param_applied", **payload})
        return []

    # -- simulation ----------------------------------------------------

    def tick_once(self, lateness: float = 0.0) -> None:
        """Advance one servo step from the held pose and broadcast."""
        if not self.have_pose:
            return
        t = self.session_time
        sample = StylusSample(t, self.held_position, np.zeros(3))
        self.servo_state, record = tick(self.scene, self.servo_state, sample,
                                        self.params, tick_index=self.tick_count,
                                        lateness=lateness)
        self.tick_count += 1
        self._lateness.append(lateness)
        if lateness > self.params.dt:
            self._misses += 1
        if record.force.clamped:
            self._clamped += 1
        self.proc_state, new_events = observe_sample(
            self.graph, self.proc_state, record.sample, record.contact,
            self.active_tool)
        self._log("tick", tick_record_to_dict(record))
        self.broadcast_force({
            "type": "force",
            "t": record.sample.time,
            "tick": record.tick,
            "force": force_to_dict(record.force),
            "contact": contact_to_dict(record.contact),
            "event": record.event.value if record.event else None,
        })
        for pe in new_events:
            d = procedure_event_to_dict(pe)
            self._log("procedure_event", d)
            self.broadcast_event({"type": "procedure_event", **d})
        if self.tick_count % _STATS_EVERY_TICKS == 0:
            self.broadcast_event(self._stats_message())

    def _stats_message(self) -> dict:
        lat = sorted(self._lateness)
        n = len(lat)
        stats = TickStats(
            ticks=self.tick_count,
            deadline_misses=self._misses,
            p50_lateness=lat[n // 2] if n else 0.0,
            p99_lateness=lat[min(n - 1, (99 * n) // 100)] if n else 0.0,
            max_lateness=lat[-1] if n else 0.0,
            clamped_count=self._clamped,
        )
        return {"type": "stats", **stats_to_dict(stats)}

    # -- fan-out ---------------------------------------------------------

    def broadcast_event(self, msg: dict) -> None:
        for conn in list(self.clients):
            conn.send(msg)

    def broadcast_force(self, msg: dict) -> None:
        for conn in list(self.clients):
            conn.send_force(msg)

    def welcome_messages(self) -> list[dict]:
        """Welcome summary plus the full procedure-event backlog, enough for
        a reconnecting client to rebuild its entire view."""
        statuses = dict(self.proc_state.statuses)
        organs = [{
            "organ_id": o.organ_id,
            "name": o.name,
            "shape_kind": type(o.shape).__name__.lower(),
            "material": {f: getattr(o.material, f)
                         for f in ("stiffness_k", "damping_b", "friction_mu",
                                   "pop_force", "pop_depth",
                                   "post_pop_stiffness_scale")},
        } for o in self.scene.organs]
        nodes = [{"node_id": n.node_id,
                  "kind": type(n.action).__name__.lower(),
                  "status": statuses[n.node_id].value}
                 for n in self.graph.nodes]
        welcome = {
            "type": "welcome",
            "session_id": self.session_id,
            "protocol_version": PROTOCOL_VERSION,
            "scene": {"organs": organs},
            "procedure": {"nodes": nodes,
                          "edges": [list(e) for e in self.graph.edges]},
        }
        backlog = [{"type": "procedure_event", **procedure_event_to_dict(e)}
                   for e in self.proc_state.events]
        return [welcome] + backlog


class ClientConn:
    """One client connection: hello state, sequence checking, and an
    outbound path that coalesces force frames for slow consumers."""

    def __init__(self, send_text, pending_bytes=lambda: 0):
        self._send_text = send_text
        self._pending_bytes = pending_bytes
        self._server_seq = itertools.count()
        self._last_client_seq: int | None = None
        self.session: Session | None = None
        self.on_hello = None  # set by the server: (msg) -> Session

    # -- outbound --------------------------------------------------------

    def send(self, msg: dict) -> None:
        msg = dict(msg)
        msg["seq"] = next(self._server_seq)
        self._send_text(encode_message(msg))

    def send_force(self, msg: dict) -> None:
        if self._pending_bytes() > _SLOW_CLIENT_BYTES:
            return  # drop force frames, never procedure events
        self.send(msg)

    # -- inbound ---------------------------------------------------------

    def process_raw(self, raw: bytes | str) -> list[dict]:
        """Decode, order-check, and dispatch one inbound line; always
        returns replies (possibly empty), never raises."""
        try:
            msg = decode_client_message(raw)
        except ProtocolError as e:
            return [error_message(0, getattr(e, "code", "bad_message"), str(e))]
        if self._last_client_seq is not None and msg["seq"] <= self._last_client_seq:
            return [error_message(msg["seq"], "bad_seq",
                                  f"seq must increase (last {self._last_client_seq})")]
        self._last_client_seq = msg["seq"]
        if msg["type"] == "hello":
            if msg["protocol_version"] != PROTOCOL_VERSION:
                return [error_message(msg["seq"], "bad_version",
                                      f"server speaks protocol {PROTOCOL_VERSION}")]
            if self.on_hello is not None and self.session is None:
                self.session = self.on_hello(msg)
                self.session.clients.append(self)
            if self.session is None:
                return [error_message(msg["seq"], "rejected", "no session broker")]
            return self.session.welcome_messages()
        if self.session is None:
            return [error_message(msg["seq"], "hello_required",
                                  "send hello before other messages")]
        return self.session.handle(self, msg)

    def process_and_reply(self, raw: bytes | str) -> None:
        for reply in self.process_raw(raw):
            self.send(reply)

    def detach(self) -> None:
        if self.session is not None and self in self.session.clients:
            self.session.clients.remove(self)


class HapticServer:
    """Asyncio front end: accepts plain-socket and WebSocket clients on one
    port and drives each session's servo loop on the wall clock."""

    def __init__(self, bundle: Bundle, host: str = "127.0.0.1", port: int = 0,
                 out_dir: str | None = None):
        self._bundle = bundle
        self.host = host
        self.port = port
        self.out_dir = out_dir
        self.sessions: dict[str, Session] = {}
        self._session_counter = itertools.count(1)
        self._server: asyncio.AbstractServer | None = None
        self._tick_tasks: list[asyncio.Task] = []

    # -- session brokerage -----------------------------------------------

    def _get_session(self, msg: dict) -> Session:
        sid = msg.get("session_id") or f"s{next(self._session_counter):04d}"
        if sid not in self.sessions:
            log_path = None
            if self.out_dir:
                log_path = f"{self.out_dir}/session_{sid}.jsonl"
            session = Session(sid, self._bundle, log_path)
            self.sessions[sid] = session
            self._tick_tasks.append(asyncio.ensure_future(self._drive(session)))
        return self.sessions[sid]

    async def _drive(self, session: Session) -> None:
        loop = asyncio.get_event_loop()
        deadline: float | None = None
        try:
            while session.alive:
                if not (session.started and session.clients):
                    deadline = None
                    await asyncio.sleep(0.02)
                    continue
                now = loop.time()
                if deadline is None:
                    deadline = now
                delay = deadline - now
                if delay > 0:
                    await asyncio.sleep(delay)
                lateness = max(0.0, loop.time() - deadline)
                session.tick_once(lateness=lateness)
                deadline += session.params.dt
                if loop.time() - deadline > 0.25:
                    deadline = loop.time()  # hopeless backlog: resync
        except asyncio.CancelledError:
            pass

    # -- lifecycle ---------------------------------------------------------

    async def start(self) -> None:
        self._server = await asyncio.start_server(
            self._on_connection, self.host, self.port, limit=2 * MAX_LINE_BYTES)
        self.port = self._server.sockets[0].getsockname()[1]

    async def serve_forever(self) -> None:
        if self._server is None:
            await self.start()
        async with self._server:
            await self._server.serve_forever()

    async def close(self) -> None:
        for task in self._tick_tasks:
            task.cancel()
        for session in self.sessions.values():
            session.flush_log()
            session.close()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    # -- connection handling ------------------------------------------------

    async def _on_connection(self, reader: asyncio.StreamReader,
                             writer: asyncio.StreamWriter) -> None:
        conn: ClientConn | None = None
        try:
            first = await reader.readline()
            if not first:
                return
            if first.startswith(b"GET "):
                await self._serve_websocket(first, reader, writer)
                return
            conn = self._make_conn(writer)
            conn.process_and_reply(first.rstrip(b"\r\n"))
            await writer.drain()
            while True:
                try:
                    line = await reader.readline()
                except ValueError:
                    conn.send(error_message(0, "too_long", "line exceeds limit"))
                    await writer.drain()
                    continue
                if not line:
                    break
                conn.process_and_reply(line.rstrip(b"\r\n"))
                await writer.drain()
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            if conn is not None:
                conn.detach()
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass

    def _make_conn(self, writer: asyncio.StreamWriter,
                   encode=lambda text: (text + "\n").encode("utf-8")) -> ClientConn:
        def send_text(text: str) -> None:
            if writer.is_closing():
                return
            writer.write(encode(text))

        def pending() -> int:
            return writer.transport.get_write_buffer_size()

        conn = ClientConn(send_text, pending)
        conn.on_hello = self._get_session
        return conn

    async def _serve_websocket(self, first_line: bytes,
                               reader: asyncio.StreamReader,
                               writer: asyncio.StreamWriter) -> None:
        header_bytes = bytearray(first_line)
        while not header_bytes.endswith(b"\r\n\r\n"):
            chunk = await reader.readline()
            if not chunk:
                return
            header_bytes.extend(chunk)
            if len(header_bytes) > 16384:
                writer.write(b"HTTP/1.1 400 Bad Request\r\n\r\n")
                return
        try:
            headers = ws.parse_handshake(header_bytes.decode("latin-1"))
        except ProtocolError:
            writer.write(b"HTTP/1.1 400 Bad Request\r\n\r\n")
            await writer.drain()
            return
        writer.write(ws.handshake_response(headers))
        await writer.drain()

        conn = self._make_conn(writer, encode=lambda text: ws.encode_text(text))
        parser = ws.FrameParser()
        try:
            while True:
                data = await reader.read(65536)
                if not data:
                    break
                try:
                    frames = parser.feed(data)
                except ProtocolError:
                    writer.write(ws.encode_close(1002))
                    await writer.drain()
                    break
                closed = False
                for opcode, payload in frames:
                    if opcode == ws.OP_CLOSE:
                        writer.write(ws.encode_close())
                        await writer.drain()
                        closed = True
                        break
                    if opcode == ws.OP_PING:
                        writer.write(ws.encode_pong(payload))
                        continue
                    if opcode == ws.OP_PONG:
                        continue
                    conn.process_and_reply(payload)
                if closed:
                    break
                await writer.drain()
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            conn.detach()


def start_session(bundle: Bundle, host: str = "127.0.0.1", port: int = 0,
                  out_dir: str | None = None) -> HapticServer:
    """Interactive-mode entry: build the server for this bundle. The caller
    runs it (`await server.serve_forever()` or via the CLI)."""
    return HapticServer(bundle, host=host, port=port, out_dir=out_dir)
