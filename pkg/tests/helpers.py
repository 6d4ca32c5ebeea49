"""Shared generators and reference models for the test suite."""

from __future__ import annotations

import random

from mmstack.mime import MmsEnvelope, make_part, SMIL_CONTENT_TYPE
from mmstack.smil.syntax import serialize
from mmstack.smil.tree import (
    Dimension,
    Layout,
    MediaItem,
    MediaKind,
    Par,
    Region,
    SmilTree,
    Unit,
)

_SRC_CHARS = "abcdefghijklmnopqrstuvwxyz0123456789-_."
_SPICY = ['a&b.jpg', 'x<y>.png', 'q"q.txt', 'tom&jerry', 'a&lt;.gif']


def _src(rng: random.Random) -> str:
    if rng.random() < 0.15:
        return rng.choice(_SPICY)
    return "".join(rng.choice(_SRC_CHARS) for _ in range(rng.randint(3, 12)))


def _dimension(rng: random.Random, span: int) -> Dimension:
    roll = rng.random()
    if roll < 0.45:
        return Dimension(rng.randint(0, span), Unit.PIXELS)
    if roll < 0.8:
        return Dimension(rng.randint(1, 100), Unit.PERCENT)
    return Dimension(round(rng.uniform(1, 100), 1), Unit.PERCENT)


def random_tree(rng: random.Random, max_pars: int = 5, max_media: int = 4,
                max_dur: int = 10_000, min_dur: int = 50,
                short_bias: bool = False) -> SmilTree:
    """A structurally valid tree with mixed units and timing shapes."""
    has_root = rng.random() < 0.5
    root_w = rng.randint(64, 1024) if has_root else None
    root_h = rng.randint(64, 1024) if has_root else None
    span = root_w or 400
    regions = [
        Region(f"r{i}", _dimension(rng, span), _dimension(rng, span),
               _positive_dimension(rng, span), _positive_dimension(rng, span),
               z_index=rng.randint(-2, 3))
        for i in range(rng.randint(0, 3))
    ]
    region_ids = [r.id for r in regions]

    def dur() -> int:
        if short_bias and rng.random() < 0.8:
            return rng.randint(min_dur, min(2000, max_dur))
        return rng.randint(min_dur, max_dur)

    pars = []
    for _ in range(rng.randint(0, max_pars)):
        kinds = rng.sample(list(MediaKind), k=rng.randint(0, max_media))
        media = []
        for kind in kinds:
            media.append(MediaItem(
                kind=kind,
                src=_src(rng),
                region_id=rng.choice(region_ids) if region_ids and rng.random() < 0.7
                else None,
                begin_ms=rng.choice([0, 0, rng.randint(0, max_dur)]),
                dur_ms=None if rng.random() < 0.4 else dur(),
                alt=rng.choice([None, None, "alt text", 'quote " amp & lt <']),
            ))
        pars.append(Par(
            dur_ms=None if rng.random() < 0.3 else dur(),
            media=media,
        ))
    return SmilTree(layout=Layout(root_w, root_h, regions), pars=pars)


def _positive_dimension(rng: random.Random, span: int) -> Dimension:
    dim = _dimension(rng, span)
    if dim.unit is Unit.PIXELS and dim.value == 0:
        return Dimension(1, Unit.PIXELS)
    if dim.unit is Unit.PERCENT and dim.value == 0:
        return Dimension(1, Unit.PERCENT)
    return dim


def effective_par_duration(par: Par, default_ms: int = 5000) -> int:
    """Independent restatement of the par duration rule for oracles."""
    if par.dur_ms is not None:
        return par.dur_ms
    if par.media and all(m.dur_ms is not None for m in par.media):
        return max(m.begin_ms + m.dur_ms for m in par.media)
    return default_ms


def tick_oracle(tree: SmilTree, default_ms: int = 5000) -> list[set[tuple[int, int]]]:
    """Brute force: for every millisecond, which (par, media) are live.

    Recomputed from raw begin/dur arithmetic, one tick at a time,
    independent of the event-based planner.
    """
    ticks: list[set[tuple[int, int]]] = []
    for pi, par in enumerate(tree.pars):
        total = effective_par_duration(par, default_ms)
        spans = []
        for mi, item in enumerate(par.media):
            d = item.dur_ms if item.dur_ms is not None else total - item.begin_ms
            spans.append((mi, item.begin_ms, min(item.begin_ms + d, total)))
        for tau in range(total):
            live = {(pi, mi) for mi, b, e in spans if b <= tau < e}
            ticks.append(live)
    return ticks


_CONTENT_TYPES = ["image/jpeg", "image/png", "audio/amr", "video/3gpp",
                  "text/plain", "application/octet-stream"]


def random_envelope(rng: random.Random, max_body: int = 65536,
                    poison: bytes | None = None) -> MmsEnvelope:
    """A valid random envelope; poison bytes get spliced into one body."""
    smil_body = serialize(random_tree(rng, max_pars=2, max_media=2)).encode()
    parts = [make_part(SMIL_CONTENT_TYPE, "message.smil", smil_body)]
    for i in range(rng.randint(0, 4)):
        ctype = rng.choice(_CONTENT_TYPES)
        roll = rng.random()
        if ctype == "text/plain" and roll < 0.5:
            lines = ["line %d of part %d" % (n, i) for n in range(rng.randint(1, 5))]
            body = ("\r\n".join(lines)).encode("ascii")
        else:
            size = rng.choice([0, 1, rng.randint(2, 512), rng.randint(513, max_body)])
            body = rng.randbytes(size)
        parts.append(make_part(ctype, f"part-{i}.bin", body))
    if poison is not None and len(parts) > 1:
        victim = rng.randrange(1, len(parts))
        body = parts[victim].body
        cut = rng.randint(0, len(body))
        parts[victim] = make_part(parts[victim].content_type,
                                  parts[victim].content_id,
                                  body[:cut] + poison + body[cut:])
    headers = [("From", f"user{rng.randint(0, 99)}@example"),
               ("To", f"peer{rng.randint(0, 99)}@example"),
               ("Date", "2024-05-01T12:00:00Z"),
               ("Message-ID", f"m{rng.randint(0, 10**9)}@x")]
    if rng.random() < 0.3:
        headers.append(("X-Priority", rng.choice(["low", "normal", "high"])))
    boundary = "fixed-boundary-123" if rng.random() < 0.1 else ""
    return MmsEnvelope(transport_headers=headers, start_id="message.smil",
                       parts=parts, boundary=boundary)


class RefRelayModel:
    """Global-multiset reference for store-and-forward semantics.

    Deliberately naive: plain dicts and lists, no queues-by-connection,
    mirroring the documented rules one for one.
    """

    def __init__(self, dead_time_ms: int):
        self.dead_time_ms = dead_time_ms
        self.known: dict[str, bool] = {}            # client -> online
        self.stored: dict[str, list[tuple[str, str, int]]] = {}  # to -> [(mid, frm, at)]
        self.delivered: list[tuple[str, str]] = []  # (to, mid)
        self.expired: list[tuple[str, str]] = []    # (to, mid)
        self.deleted: list[str] = []

    def _expire_now(self, now: int) -> list[tuple[str, str]]:
        out = []
        for cid, entries in self.stored.items():
            keep = []
            for mid, frm, at in entries:
                if now - at > self.dead_time_ms:
                    out.append((cid, mid))
                    self.expired.append((cid, mid))
                else:
                    keep.append((mid, frm, at))
            self.stored[cid] = keep
        return out

    def register(self, cid: str, now: int) -> list[str]:
        self._expire_now(now)
        self.known[cid] = True
        flushed = [mid for mid, _, _ in self.stored.get(cid, [])]
        for mid in flushed:
            self.delivered.append((cid, mid))
        self.stored[cid] = []
        return flushed

    def disconnect(self, cid: str) -> None:
        if cid in self.known:
            self.known[cid] = False

    def send(self, frm: str, to: str, mid: str, now: int) -> str:
        if to not in self.known:
            return "UNKNOWN_RECIPIENT"
        if self.known[to]:
            self.delivered.append((to, mid))
            return "OK"
        self.stored.setdefault(to, []).append((mid, frm, now))
        return "STORED_OFFLINE"

    def delete(self, frm: str, mid: str) -> str:
        for cid, entries in self.stored.items():
            for entry in entries:
                if entry[0] != mid:
                    continue
                if frm in (entry[1], cid):
                    entries.remove(entry)
                    self.deleted.append(mid)
                    return "OK"
                return "UNAUTHORIZED"
        return "UNKNOWN_MESSAGE"

    def expire(self, now: int) -> list[tuple[str, str]]:
        return self._expire_now(now)

    def stored_map(self) -> dict[str, list[str]]:
        return {cid: [mid for mid, _, _ in entries]
                for cid, entries in self.stored.items() if entries}
