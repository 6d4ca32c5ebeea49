"""Wire protocol: command vocabulary, frame codec, and the client session.

Frames are length-prefixed text-plus-body: a 4-byte big-endian length,
then 'COMMAND txn' CRLF, header lines, a blank line, and the raw body.
The codec is bit-exact and total: any byte string either decodes to a
Pdu or raises FrameError, never anything else.

A ClientSession holds the four queues that decouple the send and
receive paths: commands awaiting transmission, sent commands awaiting
their status, received messages awaiting pickup, and statuses owed to
the server (delivery acks).
"""

from __future__ import annotations

import re
import struct
import time
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum

MAX_BODY = 16 * 1024 * 1024
MAX_TXN = 0xFFFFFFFF

_TOKEN_RE = re.compile(rb"[A-Z]+")
_HEADER_NAME_RE = re.compile(r"[A-Za-z0-9-]+")

HDR_FROM = "From"
HDR_TO = "To"
HDR_MESSAGE_ID = "Message-ID"
HDR_DATE = "Date"
HDR_SUBJECT = "Subject"
HDR_STATUS = "X-Mms-Status"
HDR_ORIG_TXN = "X-Mms-Orig-Txn"
HDR_FORWARDED_BY = "X-Mms-Forwarded-By"

SERVER_ADDRESS = "server"  # reserved To: value for server queries


class Command(str, Enum):
    REGISTER = "REGISTER"
    SEND = "SEND"
    DELETE = "DELETE"
    FORWARD = "FORWARD"
    RETRIEVE = "RETRIEVE"
    NOTIFY = "NOTIFY"
    STATUS = "STATUS"


class StatusCode(str, Enum):
    OK = "OK"
    STORED_OFFLINE = "STORED_OFFLINE"
    EXPIRED = "EXPIRED"
    UNKNOWN_RECIPIENT = "UNKNOWN_RECIPIENT"
    UNKNOWN_MESSAGE = "UNKNOWN_MESSAGE"
    MALFORMED = "MALFORMED"
    UNAUTHORIZED = "UNAUTHORIZED"


@dataclass
class Pdu:
    """One frame's content: a command with headers and an optional body."""

    command: Command
    txn_id: int
    headers: list[tuple[str, str]] = field(default_factory=list)
    body: bytes = b""

    def header(self, name: str) -> str | None:
        for k, v in self.headers:
            if k.lower() == name.lower():
                return v
        return None


class FrameErrorCode(str, Enum):
    TRUNCATED = "Truncated"
    BAD_COMMAND = "BadCommand"
    BAD_HEADERS = "BadHeaders"


class FrameError(Exception):
    def __init__(self, code: FrameErrorCode, offset: int, detail: str = ""):
        super().__init__(f"{code.value} at byte {offset}: {detail}")
        self.code = code
        self.offset = offset
        self.detail = detail


class NotRegistered(Exception):
    pass


def rfc3339(ms: int) -> str:
    """Epoch milliseconds as an RFC 3339 UTC timestamp, second precision."""
    return datetime.fromtimestamp(ms // 1000, tz=timezone.utc) \
        .strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_rfc3339(text: str) -> int:
    dt = datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1000)


def _check_header_pair(name: str, value: str) -> None:
    if not _HEADER_NAME_RE.fullmatch(name):
        raise FrameError(FrameErrorCode.BAD_HEADERS, 0, f"bad header name {name!r}")
    if not value.isascii() or any(not 0x20 <= ord(c) <= 0x7E for c in value):
        raise FrameError(FrameErrorCode.BAD_HEADERS, 0,
                         f"header {name!r} value must be printable ASCII")


def encode_frame(pdu: Pdu, max_body: int = MAX_BODY) -> bytes:
    """Pack a Pdu into its length-prefixed frame bytes."""
    if not 0 <= pdu.txn_id <= MAX_TXN:
        raise FrameError(FrameErrorCode.BAD_COMMAND, 0,
                         f"txn {pdu.txn_id} outside 32-bit range")
    if len(pdu.body) > max_body:
        raise FrameError(FrameErrorCode.TRUNCATED, 0,
                         f"body of {len(pdu.body)} bytes exceeds cap {max_body}")
    lines = [f"{pdu.command.value} {pdu.txn_id}".encode()]
    for name, value in pdu.headers:
        _check_header_pair(name, value)
        lines.append(f"{name}: {value}".encode())
    lines.append(b"")
    payload = b"\r\n".join(lines) + b"\r\n" + pdu.body
    return struct.pack(">I", len(payload)) + payload


def decode_frame(data: bytes, max_body: int = MAX_BODY) -> Pdu:
    """Unpack frame bytes; exact inverse of encode_frame.

    The input must be one whole frame. Anything malformed raises
    FrameError with the offending byte offset; no other exception
    escapes, whatever the input.
    """
    if len(data) < 4:
        raise FrameError(FrameErrorCode.TRUNCATED, len(data), "no length prefix")
    declared = struct.unpack(">I", data[:4])[0]
    if len(data) - 4 != declared:
        raise FrameError(FrameErrorCode.TRUNCATED, 4,
                         f"declared {declared} bytes, got {len(data) - 4}")
    payload = data[4:]

    eol = payload.find(b"\r\n")
    if eol < 0:
        raise FrameError(FrameErrorCode.BAD_COMMAND, 4, "command line never ends")
    line = payload[:eol]
    space = line.find(b" ")
    if space <= 0:
        raise FrameError(FrameErrorCode.BAD_COMMAND, 4, f"bad command line {line!r}")
    token, txn_raw = line[:space], line[space + 1:]
    if not _TOKEN_RE.fullmatch(token):
        raise FrameError(FrameErrorCode.BAD_COMMAND, 4, f"bad command token {token!r}")
    try:
        command = Command(token.decode("ascii"))
    except ValueError:
        raise FrameError(FrameErrorCode.BAD_COMMAND, 4,
                         f"unknown command {token.decode('ascii')!r}")
    if not txn_raw.isdigit():
        raise FrameError(FrameErrorCode.BAD_COMMAND, 4 + space + 1,
                         f"bad txn {txn_raw!r}")
    txn = int(txn_raw)
    if txn > MAX_TXN:
        raise FrameError(FrameErrorCode.BAD_COMMAND, 4 + space + 1,
                         f"txn {txn} outside 32-bit range")

    headers: list[tuple[str, str]] = []
    pos = eol + 2
    while True:
        eol = payload.find(b"\r\n", pos)
        if eol < 0:
            raise FrameError(FrameErrorCode.BAD_HEADERS, 4 + pos,
                             "headers never end (no blank line)")
        line = payload[pos:eol]
        if line == b"":
            pos = eol + 2
            break
        sep = line.find(b": ")
        if sep <= 0:
            raise FrameError(FrameErrorCode.BAD_HEADERS, 4 + pos,
                             f"bad header line {line!r}")
        name_b, value_b = line[:sep], line[sep + 2:]
        if not re.fullmatch(rb"[A-Za-z0-9-]+", name_b):
            raise FrameError(FrameErrorCode.BAD_HEADERS, 4 + pos,
                             f"bad header name {name_b!r}")
        if any(not 0x20 <= b <= 0x7E for b in value_b):
            raise FrameError(FrameErrorCode.BAD_HEADERS, 4 + pos,
                             "header value must be printable ASCII")
        headers.append((name_b.decode("ascii"), value_b.decode("ascii")))
        pos = eol + 2

    body = payload[pos:]
    if len(body) > max_body:
        raise FrameError(FrameErrorCode.TRUNCATED, 4 + pos,
                         f"body of {len(body)} bytes exceeds cap {max_body}")
    return Pdu(command, txn, headers, body)


# -- application events emitted by the session ------------------------


@dataclass(frozen=True)
class SendResolved:
    """A pending command got its status back."""

    txn: int
    code: StatusCode | None
    pdu: Pdu


@dataclass(frozen=True)
class MessageArrived:
    """A message landed in the inbox (delivery ack already queued)."""

    pdu: Pdu


@dataclass(frozen=True)
class Orphan:
    """A status that matches no pending command; logged, never fatal."""

    txn: int
    code: StatusCode | None = None


def _now_ms() -> int:
    return int(time.time() * 1000)


class ClientSession:
    """Single-owner client state machine around the four queues.

    cmd_out and status_out hold frames awaiting transmission (drain with
    pop_outgoing); await_status maps sent txn ids to their Pdus until a
    matching status arrives; inbox holds received messages until the
    application takes them. All submissions require a prior register.
    """

    def __init__(self, client_id: str, clock=None):
        self.client_id = client_id
        self.clock = clock or _now_ms
        self.cmd_out: deque[Pdu] = deque()
        self.await_status: dict[int, tuple[Pdu, int]] = {}
        self.inbox: deque[Pdu] = deque()
        self.status_out: deque[Pdu] = deque()
        self.next_txn = 1
        self.registered = False

    def _take_txn(self) -> int:
        txn = self.next_txn
        self.next_txn += 1
        return txn

    def _submit(self, pdu: Pdu) -> int:
        self.cmd_out.append(pdu)
        self.await_status[pdu.txn_id] = (pdu, self.clock())
        return pdu.txn_id

    def _require_registered(self) -> None:
        if not self.registered:
            raise NotRegistered(f"client {self.client_id!r} has not registered")

    def submit_register(self) -> int:
        pdu = Pdu(Command.REGISTER, self._take_txn(),
                  [(HDR_FROM, self.client_id), (HDR_DATE, rfc3339(self.clock()))])
        self.registered = True
        return self._submit(pdu)

    def submit_send(self, envelope_bytes: bytes, to: str,
                    message_id: str | None = None) -> int:
        """Queue a message send; returns the txn to correlate its status."""
        self._require_registered()
        txn = self._take_txn()
        if message_id is None:
            message_id = f"{self.client_id}-{txn}@mms"
        pdu = Pdu(Command.SEND, txn,
                  [(HDR_FROM, self.client_id), (HDR_TO, to),
                   (HDR_MESSAGE_ID, message_id), (HDR_DATE, rfc3339(self.clock()))],
                  envelope_bytes)
        return self._submit(pdu)

    def submit_delete(self, message_id: str) -> int:
        self._require_registered()
        return self._submit(Pdu(Command.DELETE, self._take_txn(),
                                [(HDR_FROM, self.client_id),
                                 (HDR_MESSAGE_ID, message_id)]))

    def submit_forward(self, message_id: str, new_to: str) -> int:
        self._require_registered()
        return self._submit(Pdu(Command.FORWARD, self._take_txn(),
                                [(HDR_FROM, self.client_id), (HDR_TO, new_to),
                                 (HDR_MESSAGE_ID, message_id)]))

    def submit_retrieve(self, message_id: str) -> int:
        self._require_registered()
        return self._submit(Pdu(Command.RETRIEVE, self._take_txn(),
                                [(HDR_FROM, self.client_id),
                                 (HDR_MESSAGE_ID, message_id)]))

    def submit_stats_query(self) -> int:
        self._require_registered()
        return self._submit(Pdu(Command.STATUS, self._take_txn(),
                                [(HDR_FROM, self.client_id),
                                 (HDR_TO, SERVER_ADDRESS),
                                 (HDR_STATUS, StatusCode.OK.value),
                                 (HDR_ORIG_TXN, "0")]))

    def on_frame(self, pdu: Pdu) -> list:
        """Apply one received frame; total, returns application events."""
        if pdu.command is Command.STATUS:
            raw_txn = pdu.header(HDR_ORIG_TXN) or ""
            txn = int(raw_txn) if raw_txn.isdigit() else -1
            raw_code = pdu.header(HDR_STATUS) or ""
            try:
                code = StatusCode(raw_code)
            except ValueError:
                code = None
            if txn in self.await_status:
                del self.await_status[txn]
                return [SendResolved(txn, code, pdu)]
            return [Orphan(txn, code)]
        if pdu.command is Command.NOTIFY:
            self.inbox.append(pdu)
            ack = Pdu(Command.STATUS, self._take_txn(),
                      [(HDR_FROM, self.client_id),
                       (HDR_STATUS, StatusCode.OK.value),
                       (HDR_ORIG_TXN, str(pdu.txn_id))])
            self.status_out.append(ack)
            return [MessageArrived(pdu)]
        # Servers only push NOTIFY and STATUS; anything else is noise.
        return [Orphan(pdu.txn_id, None)]

    def pop_outgoing(self) -> Pdu | None:
        """Next frame to transmit: delivery acks first, then commands."""
        if self.status_out:
            return self.status_out.popleft()
        if self.cmd_out:
            return self.cmd_out.popleft()
        return None

    def oldest_pending_ms(self, now_ms: int | None = None) -> int | None:
        """Age of the oldest command still awaiting its status."""
        if not self.await_status:
            return None
        now = now_ms if now_ms is not None else self.clock()
        return max(now - submitted for _, submitted in self.await_status.values())
