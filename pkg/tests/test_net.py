import time

import pytest

from mmstack.net import RelayTcpServer, TcpRelayClient
from mmstack.relay import ServerConfig
from mmstack.transport import StatusCode


@pytest.fixture
def server():
    srv = RelayTcpServer(ServerConfig(port=0, dead_time_ms=86_400_000))
    srv.start()
    yield srv
    srv.stop()


def connect(server, cid, **kwargs):
    return TcpRelayClient("127.0.0.1", server.port, cid, **kwargs)


def test_register_and_send_roundtrip(server):
    alice = connect(server, "alice")
    bob = connect(server, "bob")
    try:
        assert alice.register() is StatusCode.OK
        assert bob.register() is StatusCode.OK
        txn, code = alice.send_mms(b"hello envelope", "bob")
        assert code is StatusCode.OK
        arrivals = bob.wait_arrivals(1, timeout=5)
        assert len(arrivals) == 1
        assert arrivals[0].body == b"hello envelope"
        assert arrivals[0].header("From") == "alice"
    finally:
        alice.close()
        bob.close()


def test_send_to_unknown_recipient(server):
    alice = connect(server, "alice")
    try:
        alice.register()
        _, code = alice.send_mms(b"x", "nobody")
        assert code is StatusCode.UNKNOWN_RECIPIENT
    finally:
        alice.close()


def test_disconnect_stores_then_register_flushes(server):
    alice = connect(server, "alice")
    bob = connect(server, "bob")
    try:
        alice.register()
        bob.register()
        bob.close()
        deadline = time.monotonic() + 5
        while time.monotonic() < deadline:
            _, code = alice.send_mms(b"held", "bob")
            if code is StatusCode.STORED_OFFLINE:
                break
            time.sleep(0.02)
        assert code is StatusCode.STORED_OFFLINE

        bob = connect(server, "bob")
        assert bob.register() is StatusCode.OK
        arrivals = bob.wait_arrivals(1, timeout=5)
        assert [p.body for p in arrivals] == [b"held"]
    finally:
        alice.close()
        bob.close()


def test_stats_query(server):
    alice = connect(server, "alice")
    try:
        alice.register()
        stats = alice.stats_query()
        assert stats["cmd_in"]["REGISTER"] == 1
        assert "routed" in stats
    finally:
        alice.close()


def test_reregistration_supersedes_connection(server):
    first = connect(server, "alice")
    try:
        first.register()
        second = connect(server, "alice")
        try:
            assert second.register() is StatusCode.OK
            # deliveries now go to the second connection
            bob = connect(server, "bob")
            try:
                bob.register()
                _, code = bob.send_mms(b"ping", "alice")
                assert code is StatusCode.OK
                assert len(second.wait_arrivals(1, timeout=5)) == 1
            finally:
                bob.close()
        finally:
            second.close()
    finally:
        first.close()


def test_delete_and_forward_over_tcp(server):
    alice = connect(server, "alice")
    bob = connect(server, "bob")
    carol = connect(server, "carol")
    try:
        for client in (alice, bob, carol):
            client.register()
        txn, code = alice.send_mms(b"payload", "bob", message_id="m1")
        assert code is StatusCode.OK
        bob.wait_arrivals(1, timeout=5)
        assert bob.forward("m1", "carol") is StatusCode.OK
        arrivals = carol.wait_arrivals(1, timeout=5)
        assert arrivals[0].header("X-Mms-Forwarded-By") == "bob"
        assert alice.delete("m1") is StatusCode.UNKNOWN_MESSAGE  # already delivered
    finally:
        for client in (alice, bob, carol):
            client.close()


def test_expiry_over_tcp_with_short_dead_time():
    srv = RelayTcpServer(ServerConfig(port=0, dead_time_ms=150))
    srv.start()
    try:
        alice = connect(srv, "alice")
        bob = connect(srv, "bob")
        alice.register()
        bob.register()
        bob.close()
        deadline = time.monotonic() + 5
        code = None
        while time.monotonic() < deadline:
            _, code = alice.send_mms(b"doomed", "bob")
            if code is StatusCode.STORED_OFFLINE:
                break
            time.sleep(0.02)
        assert code is StatusCode.STORED_OFFLINE
        deadline = time.monotonic() + 5
        while time.monotonic() < deadline and srv.core.stored_count():
            time.sleep(0.02)
        assert srv.core.stored_count() == 0
        assert srv.core.stats.snapshot()["expired"] == 1
        alice.close()
    finally:
        srv.stop()


def test_stats_log_lines(tmp_path):
    log = tmp_path / "stats.jsonl"
    srv = RelayTcpServer(ServerConfig(port=0, stats_interval_ms=50,
                                      stats_log_path=str(log)))
    srv.start()
    try:
        deadline = time.monotonic() + 5
        while time.monotonic() < deadline:
            if log.exists() and log.read_text().strip():
                break
            time.sleep(0.02)
        lines = [l for l in log.read_text().splitlines() if l]
        assert lines
        import json

        row = json.loads(lines[0])
        assert "routed" in row and "t" in row
    finally:
        srv.stop()
