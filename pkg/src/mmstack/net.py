"""TCP hosting for the relay core and a blocking client for it.

One frame stream per connection; a handler thread per client on the
server side. Delivery to a third party writes directly to that client's
connection under its write lock. A housekeeping thread sweeps expiry
and emits the stats log.
"""

from __future__ import annotations

import json
import logging
import socket
import socketserver
import struct
import threading
import time

from .relay import RelayCore, ServerConfig
from .transport import (
    Command,
    MessageArrived,
    Pdu,
    SendResolved,
    StatusCode,
    ClientSession,
    HDR_FROM,
    decode_frame,
    encode_frame,
)

logger = logging.getLogger(__name__)


def now_ms() -> int:
    return int(time.time() * 1000)


class FrameStream:
    """Framed, write-locked I/O over one socket."""

    def __init__(self, sock: socket.socket, tracer=None, label: str = ""):
        self.sock = sock
        self.rfile = sock.makefile("rb")
        self._wlock = threading.Lock()
        self.tracer = tracer
        self.label = label

    def read(self) -> Pdu | None:
        """Next frame, or None at EOF."""
        prefix = self.rfile.read(4)
        if len(prefix) < 4:
            return None
        length = struct.unpack(">I", prefix)[0]
        payload = self.rfile.read(length)
        if len(payload) < length:
            return None
        pdu = decode_frame(prefix + payload)
        if self.tracer:
            self.tracer("<-", pdu, 4 + length, self.label)
        return pdu

    def write(self, pdu: Pdu) -> None:
        frame = encode_frame(pdu)
        with self._wlock:
            self.sock.sendall(frame)
        if self.tracer:
            self.tracer("->", pdu, len(frame), self.label)

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server: RelayTcpServer = self.server.owner  # type: ignore[attr-defined]
        stream = FrameStream(self.request, server.tracer,
                             f"conn:{self.client_address}")
        bound: str | None = None
        try:
            while True:
                try:
                    pdu = stream.read()
                except Exception:
                    logger.exception("dropping connection %s", self.client_address)
                    break
                if pdu is None:
                    break
                if pdu.command is Command.REGISTER and pdu.header(HDR_FROM):
                    bound = pdu.header(HDR_FROM)
                    server.bind(bound, stream)
                responses = server.core.dispatch(bound, pdu,
                                                 self.client_address, now_ms())
                for response in responses:
                    stream.write(response)
        finally:
            if bound is not None and server.unbind(bound, stream):
                server.core.mark_offline(bound, now_ms())


class _TcpServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class RelayTcpServer:
    """The relay core listening on TCP; start(), then stop() when done."""

    def __init__(self, config: ServerConfig | None = None, tracer=None):
        self.config = config or ServerConfig()
        self.tracer = tracer
        self.core = RelayCore(self.config, deliver=self._deliver)
        self._conns: dict[str, FrameStream] = {}
        self._conn_lock = threading.Lock()
        self._tcp = _TcpServer((self.config.host, self.config.port), _Handler)
        self._tcp.owner = self  # type: ignore[attr-defined]
        self.port = self._tcp.server_address[1]
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    def bind(self, client_id: str, stream: FrameStream) -> None:
        with self._conn_lock:
            self._conns[client_id] = stream

    def unbind(self, client_id: str, stream: FrameStream) -> bool:
        """Forget the mapping if this stream still owns it."""
        with self._conn_lock:
            if self._conns.get(client_id) is stream:
                del self._conns[client_id]
                return True
            return False

    def _deliver(self, record, pdu: Pdu) -> bool:
        with self._conn_lock:
            stream = self._conns.get(record.client_id)
        if stream is None:
            return False
        try:
            stream.write(pdu)
            return True
        except OSError:
            self.unbind(record.client_id, stream)
            return False

    def _housekeeping(self):
        next_stats = now_ms() + self.config.stats_interval_ms
        while not self._stop.wait(0.05):
            now = now_ms()
            self.core.expire_offline(now)
            if self.config.stats_log_path and now >= next_stats:
                with open(self.config.stats_log_path, "a", encoding="utf-8") as fh:
                    fh.write(self.core.stats_line(now) + "\n")
                next_stats = now + self.config.stats_interval_ms

    def start(self) -> int:
        serve = threading.Thread(target=self._tcp.serve_forever,
                                 name="relay-accept", daemon=True)
        house = threading.Thread(target=self._housekeeping,
                                 name="relay-housekeeping", daemon=True)
        serve.start()
        house.start()
        self._threads = [serve, house]
        logger.info("relay listening on %s:%d", self.config.host, self.port)
        return self.port

    def stop(self) -> None:
        self._stop.set()
        self._tcp.shutdown()
        self._tcp.server_close()
        for t in self._threads:
            t.join(timeout=2)
        self.core.close()


class ClientError(Exception):
    pass


class TcpRelayClient:
    """Blocking client: one socket, one reader thread, request/response helpers.

    Pushed messages (NOTIFY) are acked automatically and collected; take
    them with take_arrivals or wait_arrivals.
    """

    def __init__(self, host: str, port: int, client_id: str,
                 tracer=None, timeout: float = 10.0):
        self.client_id = client_id
        self.timeout = timeout
        sock = socket.create_connection((host, port), timeout=timeout)
        sock.settimeout(None)
        self.stream = FrameStream(sock, tracer, f"client:{client_id}")
        self.session = ClientSession(client_id)
        self._cv = threading.Condition()
        self._resolved: dict[int, SendResolved] = {}
        self._arrivals: list[Pdu] = []
        self._eof = False
        self._reader = threading.Thread(target=self._read_loop,
                                        name=f"client-{client_id}", daemon=True)
        self._reader.start()

    def _flush_locked(self) -> list[Pdu]:
        out = []
        while True:
            pdu = self.session.pop_outgoing()
            if pdu is None:
                return out
            out.append(pdu)

    def _write_all(self, pdus: list[Pdu]) -> None:
        for pdu in pdus:
            self.stream.write(pdu)

    def _read_loop(self):
        while True:
            try:
                pdu = self.stream.read()
            except Exception:
                pdu = None
            with self._cv:
                if pdu is None:
                    self._eof = True
                    self._cv.notify_all()
                    return
                events = self.session.on_frame(pdu)
                outgoing = self._flush_locked()
                for event in events:
                    if isinstance(event, SendResolved):
                        self._resolved[event.txn] = event
                    elif isinstance(event, MessageArrived):
                        self._arrivals.append(event.pdu)
                self._cv.notify_all()
            try:
                self._write_all(outgoing)
            except OSError:  # connection went away mid-ack
                with self._cv:
                    self._eof = True
                    self._cv.notify_all()
                return

    def _await(self, txn: int) -> SendResolved:
        with self._cv:
            ok = self._cv.wait_for(
                lambda: txn in self._resolved or self._eof, timeout=self.timeout)
            if txn in self._resolved:
                return self._resolved.pop(txn)
            if self._eof:
                raise ClientError("connection closed while awaiting status")
            if not ok:
                raise ClientError(f"timed out awaiting status for txn {txn}")
            raise ClientError("unreachable")

    def _roundtrip(self, submit) -> tuple[int, SendResolved]:
        with self._cv:
            txn = submit()
            outgoing = self._flush_locked()
        self._write_all(outgoing)
        return txn, self._await(txn)

    def register(self) -> StatusCode | None:
        _, resolved = self._roundtrip(self.session.submit_register)
        return resolved.code

    def send_mms(self, envelope_bytes: bytes, to: str,
                 message_id: str | None = None) -> tuple[int, StatusCode | None]:
        txn, resolved = self._roundtrip(
            lambda: self.session.submit_send(envelope_bytes, to, message_id))
        return txn, resolved.code

    def delete(self, message_id: str) -> StatusCode | None:
        return self._roundtrip(
            lambda: self.session.submit_delete(message_id))[1].code

    def forward(self, message_id: str, new_to: str) -> StatusCode | None:
        return self._roundtrip(
            lambda: self.session.submit_forward(message_id, new_to))[1].code

    def retrieve(self, message_id: str) -> StatusCode | None:
        return self._roundtrip(
            lambda: self.session.submit_retrieve(message_id))[1].code

    def stats_query(self) -> dict:
        _, resolved = self._roundtrip(self.session.submit_stats_query)
        return json.loads(resolved.pdu.body.decode("utf-8"))

    def take_arrivals(self) -> list[Pdu]:
        with self._cv:
            arrivals, self._arrivals = self._arrivals, []
            return arrivals

    def wait_arrivals(self, count: int, timeout: float | None = None) -> list[Pdu]:
        """Block until at least count messages have arrived, then take them."""
        deadline = time.monotonic() + (timeout if timeout is not None else self.timeout)
        with self._cv:
            while len(self._arrivals) < count and not self._eof:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                self._cv.wait(remaining)
            arrivals, self._arrivals = self._arrivals, []
            return arrivals

    def close(self) -> None:
        self.stream.close()
        self._reader.join(timeout=2)
