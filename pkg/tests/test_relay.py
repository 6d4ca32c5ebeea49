import random

import pytest

from mmstack.relay import RelayCore, ServerConfig, load_config
from mmstack.transport import (
    Command,
    Pdu,
    StatusCode,
    HDR_FORWARDED_BY,
    HDR_FROM,
    HDR_MESSAGE_ID,
    HDR_TO,
    rfc3339,
)

from helpers import RefRelayModel


class Capture:
    """Deliver callback capturing every push by recipient."""

    def __init__(self):
        self.pushed: list[tuple[str, Pdu]] = []

    def __call__(self, record, pdu):
        self.pushed.append((record.client_id, pdu))
        return True

    def notifies(self):
        return [(cid, p.header(HDR_MESSAGE_ID)) for cid, p in self.pushed
                if p.command is Command.NOTIFY]

    def statuses(self, code):
        return [(cid, p) for cid, p in self.pushed
                if p.command is Command.STATUS
                and p.header("X-Mms-Status") == code.value]


def send_pdu(frm: str, to: str, mid: str, txn: int = 1, body: bytes = b"msg"):
    return Pdu(Command.SEND, txn, [(HDR_FROM, frm), (HDR_TO, to),
                                   (HDR_MESSAGE_ID, mid),
                                   ("Date", rfc3339(0))], body)


def make_core(dead_time=86_400_000, journal=None):
    capture = Capture()
    core = RelayCore(ServerConfig(dead_time_ms=dead_time, journal_path=journal),
                     deliver=capture)
    return core, capture


def test_unknown_client_registers_clean():
    core, _ = make_core()
    code, backlog = core.handle_register("alice", ("h", 1), now=0)
    assert code is StatusCode.OK
    assert backlog == []


def test_offline_messages_flushed_fifo_on_register():
    core, capture = make_core()
    core.handle_register("alice", ("h", 1), 0)
    core.handle_register("bob", ("h", 2), 0)
    core.mark_offline("bob", 10)
    for i in range(3):
        assert core.handle_send("alice", send_pdu("alice", "bob", f"m{i}", i + 2),
                                now=20 + i) is StatusCode.STORED_OFFLINE
    code, backlog = core.handle_register("bob", ("h", 3), 1000)
    assert code is StatusCode.OK
    assert [p.header(HDR_MESSAGE_ID) for p in backlog] == ["m0", "m1", "m2"]
    assert capture.notifies() == []  # flush rides the register response


def test_two_clients_same_host_different_ports():
    core, _ = make_core()
    core.handle_register("a", ("host", 1111), 0)
    core.handle_register("b", ("host", 2222), 0)
    assert core.registry["a"].address == ("host", 1111)
    assert core.registry["b"].address == ("host", 2222)
    assert core.registry["a"].online and core.registry["b"].online


def test_send_to_online_recipient_delivers():
    core, capture = make_core()
    core.handle_register("alice", ("h", 1), 0)
    core.handle_register("bob", ("h", 2), 0)
    assert core.handle_send("alice", send_pdu("alice", "bob", "m1"), 5) \
        is StatusCode.OK
    assert capture.notifies() == [("bob", "m1")]
    notify = capture.pushed[0][1]
    assert notify.header(HDR_FROM) == "alice"
    assert notify.body == b"msg"


def test_send_to_unknown_and_malformed():
    core, _ = make_core()
    core.handle_register("alice", ("h", 1), 0)
    assert core.handle_send("alice", send_pdu("alice", "nobody", "m"), 0) \
        is StatusCode.UNKNOWN_RECIPIENT
    no_to = Pdu(Command.SEND, 9, [(HDR_FROM, "alice")], b"x")
    assert core.handle_send("alice", no_to, 0) is StatusCode.MALFORMED
    empty = Pdu(Command.SEND, 9, [(HDR_FROM, "alice"), (HDR_TO, "alice")], b"")
    assert core.handle_send("alice", empty, 0) is StatusCode.MALFORMED


def test_delete_stored_message():
    core, _ = make_core()
    core.handle_register("alice", ("h", 1), 0)
    core.handle_register("bob", ("h", 2), 0)
    core.mark_offline("bob", 1)
    core.handle_send("alice", send_pdu("alice", "bob", "m1"), 2)
    assert core.handle_delete("alice", "m1") is StatusCode.OK
    assert core.stored_count() == 0
    _, backlog = core.handle_register("bob", ("h", 3), 100)
    assert backlog == []  # delete prevented delivery


def test_delete_delivered_message_unknown():
    core, _ = make_core()
    core.handle_register("alice", ("h", 1), 0)
    core.handle_register("bob", ("h", 2), 0)
    core.handle_send("alice", send_pdu("alice", "bob", "m1"), 2)
    assert core.handle_delete("alice", "m1") is StatusCode.UNKNOWN_MESSAGE


def test_delete_foreign_message_unauthorized():
    core, _ = make_core()
    for cid in ("alice", "bob", "mallory"):
        core.handle_register(cid, ("h", 1), 0)
    core.mark_offline("bob", 1)
    core.handle_send("alice", send_pdu("alice", "bob", "m1"), 2)
    assert core.handle_delete("mallory", "m1") is StatusCode.UNAUTHORIZED
    assert core.handle_delete("bob", "m1") is StatusCode.OK  # recipient may


def test_forward_delivered_message():
    core, capture = make_core()
    for cid in ("alice", "bob", "carol"):
        core.handle_register(cid, ("h", 1), 0)
    core.handle_send("alice", send_pdu("alice", "bob", "m1"), 2)
    assert core.handle_forward("bob", "m1", "carol", 50) is StatusCode.OK
    forwarded = capture.pushed[-1][1]
    assert capture.pushed[-1][0] == "carol"
    assert forwarded.header(HDR_MESSAGE_ID) == "m1"
    assert forwarded.header(HDR_FORWARDED_BY) == "bob"
    assert forwarded.header(HDR_FROM) == "alice"


def test_forward_unknown_message_and_offline_target():
    core, _ = make_core()
    for cid in ("alice", "bob", "dave"):
        core.handle_register(cid, ("h", 1), 0)
    assert core.handle_forward("bob", "mX", "dave", 0) is StatusCode.UNKNOWN_MESSAGE
    core.handle_send("alice", send_pdu("alice", "bob", "m1"), 2)
    core.mark_offline("dave", 3)
    assert core.handle_forward("bob", "m1", "dave", 5) is StatusCode.STORED_OFFLINE
    assert core.stored_count() == 1


def test_retrieve_stored_message():
    core, capture = make_core()
    core.handle_register("alice", ("h", 1), 0)
    core.handle_register("bob", ("h", 2), 0)
    core.mark_offline("bob", 1)
    core.handle_send("alice", send_pdu("alice", "bob", "m1"), 2)
    assert core.handle_retrieve("bob", "m1", 3) is StatusCode.STORED_OFFLINE
    core.registry["bob"].online = True  # live connection without a re-register
    assert core.handle_retrieve("bob", "m1", 4) is StatusCode.OK
    assert capture.notifies() == [("bob", "m1")]
    assert core.handle_retrieve("bob", "m1", 5) is StatusCode.UNKNOWN_MESSAGE


def test_expiry_strict_inequality_and_status_to_sender():
    core, capture = make_core(dead_time=1000)
    core.handle_register("alice", ("h", 1), 0)
    core.handle_register("bob", ("h", 2), 0)
    core.mark_offline("bob", 0)
    core.handle_send("alice", send_pdu("alice", "bob", "m1", txn=42), now=100)
    assert core.expire_offline(1100) == []          # exactly dead_time: retained
    assert core.expire_offline(1101) == [("bob", "m1")]
    statuses = capture.statuses(StatusCode.EXPIRED)
    assert len(statuses) == 1
    cid, status = statuses[0]
    assert cid == "alice"
    assert status.header("X-Mms-Orig-Txn") == "42"
    assert core.expire_offline(2000) == []          # nothing left


def test_expired_status_held_for_offline_sender():
    core, capture = make_core(dead_time=1000)
    core.handle_register("alice", ("h", 1), 0)
    core.handle_register("bob", ("h", 2), 0)
    core.mark_offline("bob", 0)
    core.handle_send("alice", send_pdu("alice", "bob", "m1"), 100)
    core.mark_offline("alice", 200)
    core.expire_offline(5000)
    assert capture.statuses(StatusCode.EXPIRED) == []
    code, backlog = core.handle_register("alice", ("h", 9), 6000)
    assert [p.header("X-Mms-Status") for p in backlog] == ["EXPIRED"]


def test_mark_offline_idempotent_and_unknown_noop():
    core, _ = make_core()
    core.handle_register("alice", ("h", 1), 0)
    core.mark_offline("alice", 1)
    core.mark_offline("alice", 2)
    assert core.registry["alice"].online is False
    core.mark_offline("ghost", 3)  # no record created
    assert "ghost" not in core.registry


def test_reregistration_replaces_address():
    core, _ = make_core()
    core.handle_register("alice", ("h", 1), 0)
    core.handle_register("alice", ("elsewhere", 9), 5)
    assert len(core.registry) == 1
    assert core.registry["alice"].address == ("elsewhere", 9)


def test_counter_consistency():
    core, capture = make_core(dead_time=1000)
    for cid in ("a", "b", "c"):
        core.handle_register(cid, ("h", 1), 0)
    core.mark_offline("b", 0)
    core.handle_send("a", send_pdu("a", "b", "m1"), 10)    # stored
    core.handle_send("a", send_pdu("a", "c", "m2", 2), 10)  # delivered
    core.handle_send("a", send_pdu("a", "b", "m3", 3), 20)  # stored
    core.handle_delete("a", "m1")
    core.expire_offline(5000)                               # expires m3
    s = core.stats.snapshot()
    assert s["routed"] == 3
    assert s["stored"] == 2
    assert s["deleted"] == 1
    assert s["expired"] == 1
    assert s["delivered"] == 1
    assert s["stored"] == s["flushed"] + s["expired"] + s["deleted"] \
        + core.stored_count()
    assert s["routed"] == s["delivered"] + core.stored_count() \
        + s["expired"] + s["deleted"]


def test_journal_restores_stored_messages(tmp_path):
    journal = str(tmp_path / "journal.log")
    core, _ = make_core(journal=journal)
    core.handle_register("alice", ("h", 1), 0)
    core.handle_register("bob", ("h", 2), 0)
    core.mark_offline("bob", 1)
    core.handle_send("alice", send_pdu("alice", "bob", "m1"), 1000)
    core.handle_send("alice", send_pdu("alice", "bob", "m2", 2), 2000)
    core.handle_delete("alice", "m1")
    core.close()

    again = RelayCore(ServerConfig(journal_path=journal), deliver=Capture())
    assert again.stored_count() == 1
    code, backlog = again.handle_register("bob", ("h", 3), 3000)
    assert [p.header(HDR_MESSAGE_ID) for p in backlog] == ["m2"]
    again.close()


def test_dispatch_stats_query_and_malformed():
    core, _ = make_core()
    out = core.dispatch(None, Pdu(Command.REGISTER, 1, [(HDR_FROM, "a")]),
                        ("h", 1), 0)
    assert out[0].header("X-Mms-Status") == "OK"
    query = Pdu(Command.STATUS, 2, [(HDR_FROM, "a"), (HDR_TO, "server"),
                                    ("X-Mms-Status", "OK"),
                                    ("X-Mms-Orig-Txn", "0")])
    out = core.dispatch("a", query, ("h", 1), 0)
    assert out[0].body.startswith(b"{")
    out = core.dispatch(None, send_pdu("a", "b", "m"), ("h", 1), 0)
    assert out[0].header("X-Mms-Status") == "MALFORMED"  # not registered
    out = core.dispatch("a", Pdu(Command.NOTIFY, 3, [], b"x"), ("h", 1), 0)
    assert out[0].header("X-Mms-Status") == "MALFORMED"  # client can't NOTIFY


def test_config_loading(tmp_path, fixtures_dir):
    config = load_config(f"{fixtures_dir}/server_config.json")
    assert config.dead_time_ms == 86_400_000
    assert config.port == 0
    with pytest.raises(ValueError):
        ServerConfig(dead_time_ms=0)


# -- randomized model check -----------------------------------------------


def test_model_check_randomized_interleavings():
    rng = random.Random(31337)
    dead_time = 500
    core, capture = make_core(dead_time=dead_time)
    model = RefRelayModel(dead_time)
    clients = [f"u{i}" for i in range(6)]
    now = 0
    txn = 0
    mid_counter = 0
    flushed_total: list[tuple[str, str]] = []

    for step in range(4000):
        now += rng.randint(0, 40)
        op = rng.random()
        cid = rng.choice(clients)
        if op < 0.25:
            model_flush = model.register(cid, now)
            _, backlog = core.handle_register(cid, ("h", 1), now)
            got = [p.header(HDR_MESSAGE_ID) for p in backlog
                   if p.command is Command.NOTIFY]
            assert got == model_flush, f"step {step}: flush diverged"
            flushed_total.extend((cid, m) for m in got)
        elif op < 0.30:
            model.disconnect(cid)
            core.mark_offline(cid, now)
        elif op < 0.85:
            to = rng.choice(clients)
            mid_counter += 1
            txn += 1
            mid = f"m{mid_counter}"
            code = core.handle_send(cid, send_pdu(cid, to, mid, txn), now)
            expected = model.send(cid, to, mid, now)
            assert code.value == expected, f"step {step}: send status diverged"
        elif op < 0.95:
            got = core.expire_offline(now)
            expected = model.expire(now)
            assert sorted(got) == sorted(expected), f"step {step}: expiry diverged"
        else:
            mid = f"m{rng.randint(1, mid_counter)}" if mid_counter else "mX"
            code = core.handle_delete(cid, mid)
            expected = model.delete(cid, mid)
            assert code.value == expected, f"step {step}: delete status diverged"

    # Terminal agreement on the global multisets.
    model_delivered = sorted(model.delivered)
    core_delivered = sorted(capture.notifies() + flushed_total)
    assert core_delivered == model_delivered
    stored_map = {cid: [e.message_id for e in record.offline_queue]
                  for cid, record in core.registry.items() if record.offline_queue}
    assert stored_map == model.stored_map()
    assert core.stats.snapshot()["expired"] == len(model.expired)


def test_exactly_once_over_random_runs():
    # every accepted send ends as exactly one delivery OR one expiry OR one delete
    rng = random.Random(777)
    core, capture = make_core(dead_time=300)
    clients = ["a", "b", "c", "d"]
    now = 0
    accepted = 0
    txn = 0
    flushed = 0
    for step in range(3000):
        now += rng.randint(0, 30)
        op = rng.random()
        cid = rng.choice(clients)
        if op < 0.3:
            _, backlog = core.handle_register(cid, ("h", 1), now)
            flushed += sum(1 for p in backlog if p.command is Command.NOTIFY)
        elif op < 0.4:
            core.mark_offline(cid, now)
        elif op < 0.9:
            txn += 1
            code = core.handle_send(
                cid, send_pdu(cid, rng.choice(clients), f"x{txn}", txn), now)
            if code in (StatusCode.OK, StatusCode.STORED_OFFLINE):
                accepted += 1
        else:
            core.expire_offline(now)
    stats = core.stats.snapshot()
    delivered = len(capture.notifies()) + flushed
    assert stats["delivered"] == delivered
    assert accepted == stats["routed"]
    assert accepted == delivered + core.stored_count() + stats["expired"] \
        + stats["deleted"]
