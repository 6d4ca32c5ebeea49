"""Proxy-relay core: registry, routing, store-and-forward, and counters.

The core is transport-agnostic: hosts (TCP server or the in-process
simulator) feed it decoded Pdus via dispatch() and hand it a deliver
callback for pushing frames to other clients. All state mutations are
serialized behind one lock, so handlers are atomic with respect to each
other while per-connection frame I/O proceeds in parallel outside.

Liveness is connection state, never polling: a client is online from
REGISTER until its host reports the connection gone. Messages for
offline clients wait in a FIFO up to the configured dead time, then
expire with an EXPIRED status owed to the sender. An optional
append-only journal makes the stored messages survive restarts.
"""

from __future__ import annotations

import base64
import json
import logging
import threading
from collections import deque
from dataclasses import dataclass, field

from .transport import (
    HDR_DATE,
    HDR_FORWARDED_BY,
    HDR_FROM,
    HDR_MESSAGE_ID,
    HDR_ORIG_TXN,
    HDR_STATUS,
    HDR_TO,
    SERVER_ADDRESS,
    Command,
    Pdu,
    StatusCode,
    decode_frame,
    encode_frame,
    parse_rfc3339,
    rfc3339,
)

logger = logging.getLogger(__name__)

DEFAULT_DEAD_TIME_MS = 86_400_000
DEFAULT_PORT = 7275


@dataclass
class ServerConfig:
    dead_time_ms: int = DEFAULT_DEAD_TIME_MS
    port: int = DEFAULT_PORT
    host: str = "127.0.0.1"
    stats_interval_ms: int = 5000
    journal_path: str | None = None
    stats_log_path: str | None = None

    def __post_init__(self):
        if self.dead_time_ms <= 0:
            raise ValueError("dead_time_ms must be positive")


def load_config(path: str) -> ServerConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return ServerConfig(
        dead_time_ms=int(data.get("dead_time_ms", DEFAULT_DEAD_TIME_MS)),
        port=int(data.get("port", DEFAULT_PORT)),
        host=str(data.get("host", "127.0.0.1")),
        stats_interval_ms=int(data.get("stats_interval_ms", 5000)),
        journal_path=data.get("journal_path"),
        stats_log_path=data.get("stats_log_path"),
    )


class StatsCounters:
    """Monotone counters backing the monitoring output.

    stored = flushed + expired + deleted + currently stored, and every
    accepted routing (send/forward) ends up as exactly one of delivered,
    expired, or deleted.
    """

    def __init__(self):
        self.cmd_in: dict[str, int] = {}
        self.cmd_out: dict[str, int] = {}
        self.status_out: dict[str, int] = {}
        self.routed = 0      # sends/forwards accepted for delivery or storage
        self.delivered = 0   # NOTIFY frames pushed or flushed
        self.stored = 0
        self.flushed = 0
        self.expired = 0
        self.deleted = 0

    def count_in(self, command: Command) -> None:
        self.cmd_in[command.value] = self.cmd_in.get(command.value, 0) + 1

    def count_out(self, command: Command) -> None:
        self.cmd_out[command.value] = self.cmd_out.get(command.value, 0) + 1

    def count_status(self, code: StatusCode) -> None:
        self.status_out[code.value] = self.status_out.get(code.value, 0) + 1

    def snapshot(self) -> dict:
        return {
            "cmd_in": dict(sorted(self.cmd_in.items())),
            "cmd_out": dict(sorted(self.cmd_out.items())),
            "status_out": dict(sorted(self.status_out.items())),
            "routed": self.routed,
            "delivered": self.delivered,
            "stored": self.stored,
            "flushed": self.flushed,
            "expired": self.expired,
            "deleted": self.deleted,
        }


@dataclass
class StoredMessage:
    stored_at: int
    pdu: Pdu           # the NOTIFY to deliver on flush
    sender_id: str
    orig_txn: int
    message_id: str


@dataclass
class ClientRecord:
    client_id: str
    address: tuple
    online: bool = False
    last_seen: int = 0
    offline_queue: deque[StoredMessage] = field(default_factory=deque)
    pending_statuses: deque[Pdu] = field(default_factory=deque)


class RelayCore:
    """The store-and-forward hub; see module docstring for the model."""

    def __init__(self, config: ServerConfig | None = None, deliver=None):
        self.config = config or ServerConfig()
        self.deliver = deliver  # callable(record, pdu) -> bool
        self.registry: dict[str, ClientRecord] = {}
        self.stats = StatsCounters()
        self._lock = threading.RLock()
        self._txn = 0
        self._mid_counter = 0
        # recipient -> message_id -> delivered NOTIFY, kept for FORWARD.
        self._delivered: dict[str, dict[str, Pdu]] = {}
        self._journal_fh = None
        if self.config.journal_path:
            self._replay_journal(self.config.journal_path)
            self._journal_fh = open(self.config.journal_path, "a", encoding="ascii")

    # -- small helpers -------------------------------------------------

    def _next_txn(self) -> int:
        self._txn += 1
        return self._txn

    def _status_pdu(self, code: StatusCode, orig_txn: int,
                    extra: list[tuple[str, str]] | None = None,
                    body: bytes = b"") -> Pdu:
        headers = [(HDR_STATUS, code.value), (HDR_ORIG_TXN, str(orig_txn))]
        if extra:
            headers.extend(extra)
        self.stats.count_out(Command.STATUS)
        self.stats.count_status(code)
        return Pdu(Command.STATUS, self._next_txn(), headers, body)

    def _push(self, record: ClientRecord, pdu: Pdu) -> bool:
        """Push a frame to an online client; demote it on failure."""
        if self.deliver is None:
            return False
        if self.deliver(record, pdu):
            self.stats.count_out(pdu.command)
            return True
        logger.warning("delivery to %s failed; marking offline", record.client_id)
        record.online = False
        return False

    def _archive(self, recipient: str, pdu: Pdu) -> None:
        mid = pdu.header(HDR_MESSAGE_ID)
        if mid:
            self._delivered.setdefault(recipient, {})[mid] = pdu

    # -- journal -------------------------------------------------------

    def _journal_store(self, entry: StoredMessage) -> None:
        if self._journal_fh is not None:
            frame = base64.b64encode(encode_frame(entry.pdu)).decode("ascii")
            self._journal_fh.write(f"S {frame}\n")
            self._journal_fh.flush()

    def _journal_drop(self, recipient: str, message_id: str) -> None:
        if self._journal_fh is not None:
            self._journal_fh.write(f"D {recipient} {message_id}\n")
            self._journal_fh.flush()

    def _replay_journal(self, path: str) -> None:
        try:
            fh = open(path, "r", encoding="ascii")
        except FileNotFoundError:
            return
        with fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                op, _, rest = line.partition(" ")
                if op == "S":
                    pdu = decode_frame(base64.b64decode(rest))
                    recipient = pdu.header(HDR_TO) or ""
                    record = self._record(recipient)
                    record.offline_queue.append(self._entry_from_pdu(pdu))
                elif op == "D":
                    recipient, _, mid = rest.partition(" ")
                    record = self.registry.get(recipient)
                    if record:
                        record.offline_queue = deque(
                            e for e in record.offline_queue if e.message_id != mid)

    @staticmethod
    def _entry_from_pdu(pdu: Pdu) -> StoredMessage:
        orig_raw = pdu.header(HDR_ORIG_TXN) or "0"
        return StoredMessage(
            stored_at=parse_rfc3339(pdu.header(HDR_DATE) or "1970-01-01T00:00:00Z"),
            pdu=pdu,
            sender_id=pdu.header(HDR_FROM) or "",
            orig_txn=int(orig_raw) if orig_raw.isdigit() else 0,
            message_id=pdu.header(HDR_MESSAGE_ID) or "",
        )

    def _record(self, client_id: str) -> ClientRecord:
        record = self.registry.get(client_id)
        if record is None:
            record = ClientRecord(client_id, ("", 0))
            self.registry[client_id] = record
        return record

    # -- handlers ------------------------------------------------------

    def handle_register(self, client_id: str, address: tuple,
                        now: int) -> tuple[StatusCode, list[Pdu]]:
        """Mark the client online at its new address and flush its backlog.

        Returns OK plus every stored message (FIFO, unexpired) followed
        by any statuses owed to this client.
        """
        with self._lock:
            self.expire_offline(now)
            record = self._record(client_id)
            record.address = address
            record.online = True
            record.last_seen = now
            flushed: list[Pdu] = []
            while record.offline_queue:
                entry = record.offline_queue.popleft()
                self.stats.flushed += 1
                self.stats.delivered += 1
                self.stats.count_out(Command.NOTIFY)
                self._archive(client_id, entry.pdu)
                self._journal_drop(client_id, entry.message_id)
                flushed.append(entry.pdu)
            while record.pending_statuses:
                flushed.append(record.pending_statuses.popleft())
            return StatusCode.OK, flushed

    def _build_notify(self, sender: str, recipient: str, message_id: str,
                      body: bytes, now: int, orig_txn: int,
                      forwarded_by: str | None = None) -> Pdu:
        headers = [(HDR_FROM, sender), (HDR_TO, recipient),
                   (HDR_MESSAGE_ID, message_id), (HDR_DATE, rfc3339(now)),
                   (HDR_ORIG_TXN, str(orig_txn))]
        if forwarded_by is not None:
            headers.append((HDR_FORWARDED_BY, forwarded_by))
        return Pdu(Command.NOTIFY, self._next_txn(), headers, body)

    def _route(self, notify: Pdu, recipient: str, now: int) -> StatusCode:
        """Deliver a NOTIFY now or store it; shared by send and forward."""
        record = self.registry.get(recipient)
        if record is None:
            return StatusCode.UNKNOWN_RECIPIENT
        self.stats.routed += 1
        if record.online and self._push(record, notify):
            self.stats.delivered += 1
            self._archive(recipient, notify)
            return StatusCode.OK
        entry = self._entry_from_pdu(notify)
        entry.stored_at = now
        record.offline_queue.append(entry)
        self.stats.stored += 1
        self._journal_store(entry)
        return StatusCode.STORED_OFFLINE

    def handle_send(self, from_id: str, pdu: Pdu, now: int) -> StatusCode:
        """Route a SEND to its recipient, storing when they are offline."""
        with self._lock:
            to = pdu.header(HDR_TO)
            if not to or not pdu.body:
                return StatusCode.MALFORMED
            message_id = pdu.header(HDR_MESSAGE_ID)
            if not message_id:
                self._mid_counter += 1
                message_id = f"srv-{self._mid_counter}@relay"
            notify = self._build_notify(from_id, to, message_id, pdu.body,
                                        now, pdu.txn_id)
            return self._route(notify, to, now)

    def handle_delete(self, from_id: str, message_id: str) -> StatusCode:
        """Remove a still-stored message; sender or recipient only."""
        with self._lock:
            found = False
            for record in self.registry.values():
                for entry in record.offline_queue:
                    if entry.message_id != message_id:
                        continue
                    found = True
                    if from_id in (entry.sender_id, record.client_id):
                        record.offline_queue.remove(entry)
                        self.stats.deleted += 1
                        self._journal_drop(record.client_id, message_id)
                        return StatusCode.OK
            return StatusCode.UNAUTHORIZED if found else StatusCode.UNKNOWN_MESSAGE

    def handle_forward(self, from_id: str, message_id: str, new_to: str,
                       now: int) -> StatusCode:
        """Re-route a message this client received, keeping its Message-ID."""
        with self._lock:
            original = self._delivered.get(from_id, {}).get(message_id)
            if original is None:
                return StatusCode.UNKNOWN_MESSAGE
            notify = self._build_notify(
                original.header(HDR_FROM) or from_id, new_to, message_id,
                original.body, now, original_txn_of(original), forwarded_by=from_id)
            return self._route(notify, new_to, now)

    def handle_retrieve(self, from_id: str, message_id: str,
                        now: int) -> StatusCode:
        """Re-fetch one of the caller's own stored messages by id."""
        with self._lock:
            record = self.registry.get(from_id)
            if record is None:
                return StatusCode.UNKNOWN_MESSAGE
            for entry in record.offline_queue:
                if entry.message_id == message_id:
                    if record.online and self._push(record, entry.pdu):
                        record.offline_queue.remove(entry)
                        self.stats.flushed += 1
                        self.stats.delivered += 1
                        self._archive(from_id, entry.pdu)
                        self._journal_drop(from_id, message_id)
                        return StatusCode.OK
                    return StatusCode.STORED_OFFLINE
            return StatusCode.UNKNOWN_MESSAGE

    def expire_offline(self, now: int) -> list[tuple[str, str]]:
        """Drop stored messages older than the dead time (strictly).

        Each expiry queues an EXPIRED status for the original sender,
        pushed immediately when the sender is online, held otherwise.
        """
        with self._lock:
            expired: list[tuple[str, str]] = []
            for record in self.registry.values():
                keep: deque[StoredMessage] = deque()
                for entry in record.offline_queue:
                    if now - entry.stored_at > self.config.dead_time_ms:
                        expired.append((record.client_id, entry.message_id))
                        self.stats.expired += 1
                        self._journal_drop(record.client_id, entry.message_id)
                        status = self._status_pdu(
                            StatusCode.EXPIRED, entry.orig_txn,
                            extra=[(HDR_MESSAGE_ID, entry.message_id),
                                   (HDR_TO, entry.sender_id)])
                        sender = self.registry.get(entry.sender_id)
                        if sender is None or not sender.online \
                                or not self._push(sender, status):
                            if sender is not None:
                                sender.pending_statuses.append(status)
                    else:
                        keep.append(entry)
                record.offline_queue = keep
            return expired

    def mark_offline(self, client_id: str, now: int) -> None:
        """Connection gone: stop routing to this client until re-register."""
        with self._lock:
            record = self.registry.get(client_id)
            if record is not None:
                record.online = False
                record.last_seen = now

    # -- frame-level entry point ---------------------------------------

    def dispatch(self, bound_client: str | None, pdu: Pdu, address: tuple,
                 now: int) -> list[Pdu]:
        """Handle one inbound frame; returns the frames owed to its sender.

        bound_client is the id the connection registered as, or None.
        REGISTER responses include the flushed backlog; STATUS frames
        addressed to the reserved 'server' recipient answer with the
        counters as a JSON body; delivery acks produce no reply.
        """
        with self._lock:
            self.stats.count_in(pdu.command)
            if pdu.command is Command.REGISTER:
                client_id = pdu.header(HDR_FROM)
                if not client_id:
                    return [self._status_pdu(StatusCode.MALFORMED, pdu.txn_id)]
                code, backlog = self.handle_register(client_id, address, now)
                return [self._status_pdu(code, pdu.txn_id)] + backlog
            if pdu.command is Command.STATUS:
                if pdu.header(HDR_TO) == SERVER_ADDRESS:
                    body = json.dumps(self.stats.snapshot(), sort_keys=True).encode()
                    return [self._status_pdu(StatusCode.OK, pdu.txn_id, body=body)]
                return []
            if bound_client is None:
                return [self._status_pdu(StatusCode.MALFORMED, pdu.txn_id)]
            if pdu.command is Command.SEND:
                return [self._status_pdu(self.handle_send(bound_client, pdu, now),
                                         pdu.txn_id)]
            if pdu.command is Command.DELETE:
                mid = pdu.header(HDR_MESSAGE_ID)
                if not mid:
                    return [self._status_pdu(StatusCode.MALFORMED, pdu.txn_id)]
                return [self._status_pdu(self.handle_delete(bound_client, mid),
                                         pdu.txn_id)]
            if pdu.command is Command.FORWARD:
                mid = pdu.header(HDR_MESSAGE_ID)
                to = pdu.header(HDR_TO)
                if not mid or not to:
                    return [self._status_pdu(StatusCode.MALFORMED, pdu.txn_id)]
                return [self._status_pdu(
                    self.handle_forward(bound_client, mid, to, now), pdu.txn_id)]
            if pdu.command is Command.RETRIEVE:
                mid = pdu.header(HDR_MESSAGE_ID)
                if not mid:
                    return [self._status_pdu(StatusCode.MALFORMED, pdu.txn_id)]
                return [self._status_pdu(
                    self.handle_retrieve(bound_client, mid, now), pdu.txn_id)]
            # NOTIFY is server-to-client only.
            return [self._status_pdu(StatusCode.MALFORMED, pdu.txn_id)]

    def stats_line(self, now: int) -> str:
        """One JSON line for the stats log."""
        with self._lock:
            row = {"t": rfc3339(now)}
            row.update(self.stats.snapshot())
            return json.dumps(row, sort_keys=True)

    def stored_count(self) -> int:
        with self._lock:
            return sum(len(r.offline_queue) for r in self.registry.values())

    def close(self) -> None:
        if self._journal_fh is not None:
            self._journal_fh.close()
            self._journal_fh = None


def original_txn_of(pdu: Pdu) -> int:
    raw = pdu.header(HDR_ORIG_TXN) or "0"
    return int(raw) if raw.isdigit() else 0
