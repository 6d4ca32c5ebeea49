"""Multi-client load driver with a built-in correctness gate.

Each client registers, then issues its command budget as a seeded mix
of sends, deletes, and forwards, one at a time as statuses come back.
Before any throughput number is reported the run must conserve
messages exactly: accepted routings = deliveries + still stored +
expired + deleted, and clients must have received precisely what the
server pushed. A fast wrong server reports nothing.
"""

from __future__ import annotations

import random
import threading
import time

from .composer import export, manifest_from_dict
from .relay import ServerConfig
from .net import RelayTcpServer, TcpRelayClient
from .sim import SimHarness, SimNet
from .transport import HDR_MESSAGE_ID, MessageArrived, SendResolved, StatusCode


class BenchError(Exception):
    pass


def _bench_envelope() -> bytes:
    manifest = manifest_from_dict({
        "from": "bench", "to": "bench",
        "slides": [{"text": "benchmark payload", "dur_ms": 1000}],
    })
    return export(manifest, now_ms=0, message_id="bench@mms")


def _percentile(values: list[float], fraction: float) -> float:
    if not values:
        return 0.0
    ordered = sorted(values)
    rank = max(0, min(len(ordered) - 1, int(round(fraction * (len(ordered) - 1)))))
    return ordered[rank]


class _Driver:
    """Per-client command generator; one command in flight at a time."""

    def __init__(self, client_id: str, peers: list[str], messages: int,
                 seed: int, send_frac: float, delete_frac: float):
        self.client_id = client_id
        self.peers = [p for p in peers if p != client_id]
        self.remaining = messages
        self.rng = random.Random(f"{seed}:{client_id}")
        self.send_frac = send_frac
        self.delete_frac = delete_frac
        self.sent_mids: list[str] = []
        self.received_mids: list[str] = []
        self.statuses: dict[str, int] = {}
        self.latencies: list[float] = []

    def next_command(self) -> tuple[str, str, str] | None:
        """(kind, message_id, target) for the next command, or None when done."""
        if self.remaining <= 0:
            return None
        self.remaining -= 1
        roll = self.rng.random()
        target = self.rng.choice(self.peers) if self.peers else self.client_id
        if roll < self.send_frac or (not self.sent_mids and not self.received_mids):
            mid = f"{self.client_id}-m{len(self.sent_mids) + 1}"
            self.sent_mids.append(mid)
            return ("send", mid, target)
        if roll < self.send_frac + self.delete_frac:
            mid = self.rng.choice(self.sent_mids) if self.sent_mids \
                else "missing@nowhere"
            return ("delete", mid, target)
        mid = self.rng.choice(self.received_mids) if self.received_mids \
            else "missing@nowhere"
        return ("forward", mid, target)

    def record_status(self, code: StatusCode | None, elapsed: float) -> None:
        key = code.value if code is not None else "NONE"
        self.statuses[key] = self.statuses.get(key, 0) + 1
        self.latencies.append(elapsed)


def _conservation(stats: dict, stored_now: int, received_total: int) -> dict:
    routed = stats["routed"]
    accounted = stats["delivered"] + stored_now + stats["expired"] + stats["deleted"]
    return {
        "routed": routed,
        "delivered": stats["delivered"],
        "stored_now": stored_now,
        "expired": stats["expired"],
        "deleted": stats["deleted"],
        "received_by_clients": received_total,
        "exact": routed == accounted and received_total == stats["delivered"],
    }


def _finish_report(mode: str, clients: int, messages: int, seed: int,
                   drivers: list[_Driver], stats: dict, stored_now: int,
                   wall_seconds: float, virtual_seconds: float | None) -> dict:
    received_total = sum(len(d.received_mids) for d in drivers)
    conservation = _conservation(stats, stored_now, received_total)
    statuses: dict[str, int] = {}
    latencies: list[float] = []
    for d in drivers:
        for code, n in d.statuses.items():
            statuses[code] = statuses.get(code, 0) + n
        latencies.extend(d.latencies)
    total = clients * messages
    report = {
        "mode": mode,
        "clients": clients,
        "messages_per_client": messages,
        "seed": seed,
        "commands_total": total,
        "statuses": dict(sorted(statuses.items())),
        "conservation": conservation,
        "stats": stats,
        "latency_ms": {
            "p50": round(_percentile(latencies, 0.50), 3),
            "p95": round(_percentile(latencies, 0.95), 3),
            "p99": round(_percentile(latencies, 0.99), 3),
        },
        "wall_seconds": round(wall_seconds, 3),
        "requests_per_second": round(total / wall_seconds, 1) if wall_seconds > 0 else 0.0,
    }
    if virtual_seconds is not None:
        report["virtual_seconds"] = round(virtual_seconds, 3)
        report["virtual_requests_per_second"] = \
            round(total / virtual_seconds, 1) if virtual_seconds > 0 else 0.0
    incomplete = [d.client_id for d in drivers if d.remaining > 0]
    if incomplete:
        raise BenchError(f"clients never finished: {incomplete}")
    if not conservation["exact"]:
        raise BenchError(f"conservation violated: {conservation}")
    return report


def _bench_sim(clients: int, messages: int, seed: int,
               send_frac: float, delete_frac: float, latency_ms: int) -> dict:
    ids = [f"c{i:02d}" for i in range(clients)]
    envelope = _bench_envelope()
    drivers = {cid: _Driver(cid, ids, messages, seed, send_frac, delete_frac)
               for cid in ids}
    net = SimNet(latency_ms=latency_ms, seed=seed)
    pending: dict[str, dict[int, float]] = {cid: {} for cid in ids}

    def issue(cid: str) -> None:
        command = drivers[cid].next_command()
        if command is None:
            return
        kind, mid, target = command
        if kind == "send":
            txn = harness.send(cid, target, envelope, message_id=mid)
        elif kind == "delete":
            txn = harness.delete(cid, mid)
        else:
            txn = harness.forward(cid, mid, target)
        pending[cid][txn] = net.now_ms

    def on_event(cid: str, event, t: int) -> None:
        driver = drivers[cid]
        if isinstance(event, SendResolved):
            submitted = pending[cid].pop(event.txn, None)
            if submitted is None:
                issue(cid)  # register resolved; start the command stream
            else:
                driver.record_status(event.code, float(t - submitted))
                issue(cid)
        elif isinstance(event, MessageArrived):
            mid = event.pdu.header(HDR_MESSAGE_ID)
            if mid:
                driver.received_mids.append(mid)

    harness = SimHarness(net, ServerConfig(), on_event=on_event)
    started = time.perf_counter()
    for cid in ids:
        harness.register(cid)
    net.drain()
    wall = time.perf_counter() - started
    return _finish_report("sim", clients, messages, seed, list(drivers.values()),
                          harness.core.stats.snapshot(),
                          harness.core.stored_count(), wall, net.now_ms / 1000.0)


def _bench_tcp(clients: int, messages: int, seed: int,
               send_frac: float, delete_frac: float,
               host: str, port: int) -> dict:
    ids = [f"c{i:02d}" for i in range(clients)]
    envelope = _bench_envelope()
    drivers = {cid: _Driver(cid, ids, messages, seed, send_frac, delete_frac)
               for cid in ids}
    server = RelayTcpServer(ServerConfig(host=host, port=port))
    actual_port = server.start()
    conns: dict[str, TcpRelayClient] = {}
    errors: list[str] = []

    def run_client(cid: str) -> None:
        driver = drivers[cid]
        client = conns[cid]
        try:
            while True:
                command = driver.next_command()
                if command is None:
                    return
                kind, mid, target = command
                t0 = time.perf_counter()
                if kind == "send":
                    _, code = client.send_mms(envelope, target, message_id=mid)
                elif kind == "delete":
                    code = client.delete(mid)
                else:
                    code = client.forward(mid, target)
                driver.record_status(code, (time.perf_counter() - t0) * 1000.0)
                for pdu in client.take_arrivals():
                    arrived = pdu.header(HDR_MESSAGE_ID)
                    if arrived:
                        driver.received_mids.append(arrived)
        except Exception as exc:  # surface thread failures as BenchError
            errors.append(f"{cid}: {exc}")

    try:
        for cid in ids:
            conns[cid] = TcpRelayClient(host, actual_port, cid)
            conns[cid].register()
        started = time.perf_counter()
        threads = [threading.Thread(target=run_client, args=(cid,), daemon=True)
                   for cid in ids]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        wall = time.perf_counter() - started
        if errors:
            raise BenchError("; ".join(errors))

        # Let stragglers land, then reconcile against the server counters.
        stats = conns[ids[0]].stats_query()
        deadline = time.monotonic() + 10
        while time.monotonic() < deadline:
            for cid in ids:
                for pdu in conns[cid].take_arrivals():
                    mid = pdu.header(HDR_MESSAGE_ID)
                    if mid:
                        drivers[cid].received_mids.append(mid)
            stats = conns[ids[0]].stats_query()
            received = sum(len(d.received_mids) for d in drivers.values())
            if received >= stats["delivered"]:
                break
            time.sleep(0.02)
        stored_now = server.core.stored_count()
        return _finish_report("tcp-loopback", clients, messages, seed,
                              list(drivers.values()), stats, stored_now,
                              wall, None)
    finally:
        for client in conns.values():
            try:
                client.close()
            except Exception:
                pass
        server.stop()


def bench(clients: int, messages: int, mode: str = "sim", seed: int = 0,
          send_frac: float = 0.8, delete_frac: float = 0.1,
          latency_ms: int = 1, host: str = "127.0.0.1", port: int = 0) -> dict:
    """Run the load mix and return the verified report.

    The command mix defaults to 80% send / 10% delete / 10% forward.
    Raises BenchError when a client stalls or the conservation check
    fails; throughput is only reported for correct runs.
    """
    if clients < 1 or messages < 1:
        raise BenchError("need at least one client and one message")
    if not 0 <= send_frac <= 1 or not 0 <= delete_frac <= 1 - send_frac:
        raise BenchError("command mix fractions must form a distribution")
    if mode == "sim":
        return _bench_sim(clients, messages, seed, send_frac, delete_frac,
                          latency_ms)
    if mode == "tcp-loopback":
        return _bench_tcp(clients, messages, seed, send_frac, delete_frac,
                          host, port)
    raise BenchError(f"unknown mode {mode!r}")
