"""In-process simulation: virtual-clock network, scenario scripts, reports.

Everything runs single-threaded on virtual time: frames travel through
SimNet with a fixed per-link latency and are delivered in send order;
the relay core and all client sessions live in the same process. Given
the same script and seed the whole run, timestamps included, is
byte-identical.

Frames already in flight when a client disconnects still arrive; the
disconnect only stops the server routing new messages to that client.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import os
from dataclasses import dataclass, field

from .composer import export, load_manifest, manifest_from_dict
from .relay import DEFAULT_DEAD_TIME_MS, RelayCore, ServerConfig
from .transport import (
    ClientSession,
    Command,
    HDR_FORWARDED_BY,
    HDR_FROM,
    HDR_MESSAGE_ID,
    MessageArrived,
    Orphan,
    Pdu,
    SendResolved,
    decode_frame,
    encode_frame,
)


class ScenarioError(Exception):
    def __init__(self, detail: str, report: dict | None = None):
        super().__init__(detail)
        self.report = report


class SimNet:
    """Per-link latency, FIFO delivery, deterministic optional drops."""

    def __init__(self, latency_ms: int = 5, seed: int = 0, drop_permille: int = 0):
        self.now_ms = 0
        self.latency_ms = latency_ms
        self.seed = seed
        self.drop_permille = drop_permille
        self._queue: list[tuple[int, int, bytes, object]] = []
        self._seq = 0
        self._ordinal = 0
        self.dropped = 0

    def _drops(self, ordinal: int) -> bool:
        if self.drop_permille <= 0:
            return False
        digest = hashlib.sha256(f"{self.seed}:{ordinal}".encode()).digest()
        return int.from_bytes(digest[:4], "big") % 1000 < self.drop_permille

    def send(self, frame: bytes, handler) -> None:
        ordinal = self._ordinal
        self._ordinal += 1
        if self._drops(ordinal):
            self.dropped += 1
            return
        self._seq += 1
        heapq.heappush(self._queue,
                       (self.now_ms + self.latency_ms, self._seq, frame, handler))

    def run_until(self, t_ms: int) -> None:
        while self._queue and self._queue[0][0] <= t_ms:
            at, _, frame, handler = heapq.heappop(self._queue)
            self.now_ms = max(self.now_ms, at)
            handler(frame)

    def advance_to(self, t_ms: int) -> None:
        self.run_until(t_ms)
        self.now_ms = max(self.now_ms, t_ms)

    def drain(self) -> None:
        while self._queue:
            at, _, frame, handler = heapq.heappop(self._queue)
            self.now_ms = max(self.now_ms, at)
            handler(frame)


@dataclass
class _SimClient:
    session: ClientSession
    connected: bool = False
    server_bound: bool = False


class SimHarness:
    """Relay core plus client sessions wired through a SimNet."""

    def __init__(self, net: SimNet, config: ServerConfig | None = None,
                 on_event=None):
        self.net = net
        self.core = RelayCore(config or ServerConfig(), deliver=self._deliver)
        self.clients: dict[str, _SimClient] = {}
        self.events: list[dict] = []
        self.on_event = on_event

    def client(self, client_id: str) -> _SimClient:
        c = self.clients.get(client_id)
        if c is None:
            c = _SimClient(ClientSession(client_id, clock=lambda: self.net.now_ms))
            self.clients[client_id] = c
        return c

    # -- frame plumbing -------------------------------------------------

    def _deliver(self, record, pdu: Pdu) -> bool:
        c = self.clients.get(record.client_id)
        if c is None or not c.connected:
            return False
        self.net.send(encode_frame(pdu),
                      lambda frame, cid=record.client_id: self._client_recv(cid, frame))
        return True

    def _flush(self, client_id: str) -> None:
        c = self.client(client_id)
        while True:
            pdu = c.session.pop_outgoing()
            if pdu is None:
                return
            if not c.connected:
                continue  # frames from a disconnected client go nowhere
            self.net.send(encode_frame(pdu),
                          lambda frame, cid=client_id: self._server_recv(cid, frame))

    def _server_recv(self, client_id: str, frame: bytes) -> None:
        c = self.client(client_id)
        pdu = decode_frame(frame)
        if pdu.command is Command.REGISTER and pdu.header(HDR_FROM):
            c.server_bound = True
        bound = client_id if c.server_bound else None
        responses = self.core.dispatch(bound, pdu, ("sim", client_id),
                                       self.net.now_ms)
        for response in responses:
            self.net.send(encode_frame(response),
                          lambda f, cid=client_id: self._client_recv(cid, f))

    def _client_recv(self, client_id: str, frame: bytes) -> None:
        c = self.client(client_id)
        pdu = decode_frame(frame)
        for event in c.session.on_frame(pdu):
            t = self.net.now_ms
            if isinstance(event, MessageArrived):
                row = {"t": t, "kind": "delivery", "to": client_id,
                       "from": event.pdu.header(HDR_FROM),
                       "message_id": event.pdu.header(HDR_MESSAGE_ID)}
                fwd = event.pdu.header(HDR_FORWARDED_BY)
                if fwd:
                    row["forwarded_by"] = fwd
                self.events.append(row)
            elif isinstance(event, SendResolved):
                self.events.append({"t": t, "kind": "status", "client": client_id,
                                    "txn": event.txn,
                                    "code": event.code.value if event.code else None})
            elif isinstance(event, Orphan):
                self.events.append({"t": t, "kind": "status", "client": client_id,
                                    "txn": event.txn,
                                    "code": event.code.value if event.code else None,
                                    "orphan": True})
            if self.on_event is not None:
                self.on_event(client_id, event, t)
        self._flush(client_id)

    # -- client-side actions ---------------------------------------------

    def register(self, client_id: str) -> int:
        c = self.client(client_id)
        c.connected = True
        txn = c.session.submit_register()
        self._flush(client_id)
        return txn

    def send(self, client_id: str, to: str, envelope_bytes: bytes,
             message_id: str | None = None) -> int:
        c = self.client(client_id)
        txn = c.session.submit_send(envelope_bytes, to, message_id)
        self._flush(client_id)
        return txn

    def delete(self, client_id: str, message_id: str) -> int:
        c = self.client(client_id)
        txn = c.session.submit_delete(message_id)
        self._flush(client_id)
        return txn

    def forward(self, client_id: str, message_id: str, new_to: str) -> int:
        c = self.client(client_id)
        txn = c.session.submit_forward(message_id, new_to)
        self._flush(client_id)
        return txn

    def disconnect(self, client_id: str) -> None:
        c = self.client(client_id)
        c.connected = False
        c.server_bound = False
        self.core.mark_offline(client_id, self.net.now_ms)

    def expire(self) -> list[tuple[str, str]]:
        expired = self.core.expire_offline(self.net.now_ms)
        for client_id, message_id in expired:
            self.events.append({"t": self.net.now_ms, "kind": "expired",
                                "client": client_id, "message_id": message_id})
        return expired


@dataclass
class ScenarioScript:
    """Timed actions against one relay and any number of clients."""

    actions: list[dict] = field(default_factory=list)
    seed: int = 0
    latency_ms: int = 5
    dead_time_ms: int = DEFAULT_DEAD_TIME_MS
    base_dir: str = "."

    def __post_init__(self):
        last = None
        for action in self.actions:
            t = int(action.get("t", 0))
            if last is not None and t < last:
                raise ValueError("scenario actions must be time-ordered")
            last = t


def load_script(path: str) -> ScenarioScript:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return ScenarioScript(
        actions=data.get("actions", []),
        seed=int(data.get("seed", 0)),
        latency_ms=int(data.get("latency_ms", 5)),
        dead_time_ms=int(data.get("dead_time_ms", DEFAULT_DEAD_TIME_MS)),
        base_dir=os.path.dirname(os.path.abspath(path)),
    )


def _scenario_envelope(action: dict, script: ScenarioScript, now_ms: int) -> bytes:
    manifest_ref = action.get("manifest")
    if isinstance(manifest_ref, str):
        manifest = load_manifest(os.path.join(script.base_dir, manifest_ref))
    elif isinstance(manifest_ref, dict):
        data = dict(manifest_ref)
        data.setdefault("from", action["from"])
        data.setdefault("to", action["to"])
        manifest = manifest_from_dict(data, base_dir=script.base_dir)
    else:
        manifest = manifest_from_dict({
            "from": action["from"], "to": action["to"],
            "slides": [{"text": action.get("text", "hello")}],
        })
    return export(manifest, now_ms=now_ms)


def _evaluate_expect(action: dict, events: list[dict]) -> dict:
    check = action.get("check")
    expected = int(action.get("count", 0))
    if check == "delivered":
        rows = [e for e in events if e["kind"] == "delivery"
                and e["to"] == action["to"]
                and ("from" not in action or e["from"] == action["from"])]
    elif check == "status":
        rows = [e for e in events if e["kind"] == "status"
                and e["client"] == action["client"]
                and e["code"] == action["code"]]
    elif check == "expired":
        rows = [e for e in events if e["kind"] == "expired"]
    else:
        return {"t": action.get("t", 0), "check": str(check), "ok": False,
                "expected": expected, "actual": 0,
                "detail": f"unknown check {check!r}"}
    actual = len(rows)
    return {"t": action.get("t", 0), "check": check, "ok": actual == expected,
            "expected": expected, "actual": actual}


def run_scenario(script: ScenarioScript, net: SimNet | None = None) -> dict:
    """Execute a script on virtual time and return the full report.

    The report carries every delivery, status, and expiry with virtual
    timestamps, plus one result per expect action. If any expectation
    failed, ScenarioError is raised naming the first failure; the report
    rides on the exception.
    """
    if net is None:
        net = SimNet(latency_ms=script.latency_ms, seed=script.seed)
    harness = SimHarness(net, ServerConfig(dead_time_ms=script.dead_time_ms))
    expectations: list[dict] = []

    for action in script.actions:
        net.advance_to(int(action.get("t", 0)))
        op = action.get("op")
        if op == "register":
            harness.register(action["client"])
        elif op == "send":
            envelope = _scenario_envelope(action, script, net.now_ms)
            harness.send(action["from"], action["to"], envelope,
                         message_id=action.get("message_id"))
        elif op == "delete":
            harness.delete(action["client"], action["message_id"])
        elif op == "forward":
            harness.forward(action["client"], action["message_id"], action["to"])
        elif op == "disconnect":
            harness.disconnect(action["client"])
        elif op == "expire_tick":
            harness.expire()
        elif op == "expect":
            expectations.append(_evaluate_expect(action, harness.events))
        else:
            raise ScenarioError(f"unknown action op {op!r}")
    net.drain()

    report = {
        "seed": script.seed,
        "latency_ms": script.latency_ms,
        "dead_time_ms": script.dead_time_ms,
        "final_t": net.now_ms,
        "events": harness.events,
        "expectations": expectations,
        "stats": harness.core.stats.snapshot(),
        "stored": harness.core.stored_count(),
        "dropped_frames": net.dropped,
    }
    failed = [e for e in expectations if not e["ok"]]
    if failed:
        first = failed[0]
        raise ScenarioError(
            f"expectation failed at t={first['t']}: {first['check']} "
            f"expected {first['expected']}, got {first['actual']}", report)
    return report
