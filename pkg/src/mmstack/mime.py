"""Packing and unpacking of .mms files: multipart/related with a SMIL start part.

The on-disk format is exact bytes: transport headers, a Content-Type
line declaring the boundary and start id, then each part framed by
boundary lines and carrying its own Content-Type / Content-ID /
Content-Transfer-Encoding headers. Output is canonical (CRLF, fixed
header casing, base64 wrapped at 76 columns) so files diff cleanly.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum

from .smil.tree import SmilTree, Violation, ViolationCode

SMIL_CONTENT_TYPE = "application/smil"

_CRLF = b"\r\n"
_MAX_BOUNDARY = 70
# RFC 2046 bchars minus space (we never emit trailing-space boundaries).
_BOUNDARY_RE = re.compile(r"[0-9A-Za-z'()+_,\-./:=?]{1,70}")
_HEADER_NAME_RE = re.compile(r"[A-Za-z0-9-]+")


class TransferEncoding(str, Enum):
    SEVEN_BIT = "7bit"
    BASE64 = "base64"


@dataclass
class MimePart:
    content_type: str
    content_id: str
    transfer_encoding: TransferEncoding
    body: bytes


@dataclass
class MmsEnvelope:
    """Transport headers plus the ordered part list; one SMIL start part."""

    transport_headers: list[tuple[str, str]] = field(default_factory=list)
    start_id: str = ""
    parts: list[MimePart] = field(default_factory=list)
    boundary: str = ""  # empty means auto-generate at packing time


class MimeErrorCode(str, Enum):
    MISSING_BOUNDARY = "MissingBoundary"
    MISSING_START = "MissingStart"
    TRUNCATED_PART = "TruncatedPart"
    BAD_BASE64 = "BadBase64"
    DUPLICATE_CONTENT_ID = "DuplicateContentId"


class MimeError(Exception):
    def __init__(self, code: MimeErrorCode, offset: int, detail: str = ""):
        super().__init__(f"{code.value} at byte {offset}: {detail}")
        self.code = code
        self.offset = offset
        self.detail = detail


class InvalidEnvelope(Exception):
    pass


class BoundaryCollision(Exception):
    pass


def _is_seven_bit_clean(body: bytes) -> bool:
    """ASCII-only with CR and LF appearing only as CRLF pairs."""
    if any(b > 0x7F for b in body):
        return False
    i = 0
    while i < len(body):
        b = body[i]
        if b == 0x0D:
            if i + 1 >= len(body) or body[i + 1] != 0x0A:
                return False
            i += 2
            continue
        if b == 0x0A:
            return False
        i += 1
    return True


def choose_encoding(content_type: str, body: bytes) -> TransferEncoding:
    """7bit for clean ASCII text and SMIL, base64 for everything else."""
    main = content_type.split(";")[0].strip().lower()
    if main in ("text/plain", SMIL_CONTENT_TYPE) and _is_seven_bit_clean(body):
        return TransferEncoding.SEVEN_BIT
    return TransferEncoding.BASE64


def make_part(content_type: str, content_id: str, body: bytes) -> MimePart:
    return MimePart(content_type, content_id, choose_encoding(content_type, body), body)


def _check_header(name: str, value: str) -> None:
    if not _HEADER_NAME_RE.fullmatch(name):
        raise InvalidEnvelope(f"bad header name {name!r}")
    if any(c in value for c in "\r\n\x00") or not value.isascii():
        raise InvalidEnvelope(f"header {name!r} value must be ASCII without CR/LF")


def _encode_body(part: MimePart) -> bytes:
    if part.transfer_encoding is TransferEncoding.SEVEN_BIT:
        if not _is_seven_bit_clean(part.body):
            raise InvalidEnvelope(
                f"part {part.content_id!r} declared 7bit but body is not ASCII-clean")
        return part.body
    encoded = base64.b64encode(part.body)
    lines = [encoded[i:i + 76] for i in range(0, len(encoded), 76)]
    return _CRLF.join(lines)


def _validate_envelope(envelope: MmsEnvelope) -> None:
    if not envelope.start_id:
        raise InvalidEnvelope("start_id is empty")
    ids = [p.content_id for p in envelope.parts]
    for cid in ids:
        if not cid:
            raise InvalidEnvelope("part with empty content id")
    if len(set(ids)) != len(ids):
        raise InvalidEnvelope("duplicate content ids")
    smil_ids = [p.content_id for p in envelope.parts
                if p.content_type.split(";")[0].strip().lower() == SMIL_CONTENT_TYPE]
    if len(smil_ids) != 1 or smil_ids[0] != envelope.start_id:
        raise InvalidEnvelope(
            "envelope must hold exactly one SMIL part whose id equals start_id")
    for name, value in envelope.transport_headers:
        _check_header(name, value)
        if name.lower() == "content-type":
            raise InvalidEnvelope("Content-Type is generated, not a transport header")
    for part in envelope.parts:
        _check_header("Content-Type", part.content_type)
        _check_header("Content-ID", part.content_id)


def _boundary_candidate(seed: int, counter: int) -> str:
    digest = hashlib.sha256(f"{seed}:{counter}".encode()).hexdigest()
    return "mms-" + digest[:24]


def encapsulate(envelope: MmsEnvelope, boundary_seed: int = 0) -> bytes:
    """Pack an envelope into .mms bytes.

    An empty boundary is auto-generated (deterministically from
    boundary_seed) and re-drawn until it appears in no encoded body; a
    caller-supplied boundary that collides raises BoundaryCollision.
    """
    _validate_envelope(envelope)
    encoded = [_encode_body(p) for p in envelope.parts]

    boundary = envelope.boundary
    if boundary:
        if not _BOUNDARY_RE.fullmatch(boundary):
            raise InvalidEnvelope(f"bad boundary {boundary!r}")
        if any(boundary.encode() in body for body in encoded):
            raise BoundaryCollision(f"boundary {boundary!r} occurs in a part body")
    else:
        counter = 0
        while True:
            boundary = _boundary_candidate(boundary_seed, counter)
            if not any(boundary.encode() in body for body in encoded):
                break
            counter += 1

    out = bytearray()
    for name, value in envelope.transport_headers:
        out += f"{name}: {value}".encode() + _CRLF
    out += (f'Content-Type: multipart/related; boundary="{boundary}"; '
            f'start="<{envelope.start_id}>"').encode() + _CRLF
    out += _CRLF
    delim = f"--{boundary}".encode()
    for part, body in zip(envelope.parts, encoded):
        out += delim + _CRLF
        out += f"Content-Type: {part.content_type}".encode() + _CRLF
        out += f"Content-ID: <{part.content_id}>".encode() + _CRLF
        out += f"Content-Transfer-Encoding: {part.transfer_encoding.value}".encode() + _CRLF
        out += _CRLF
        out += body + _CRLF
    out += delim + b"--" + _CRLF
    return bytes(out)


def _split_headers(data: bytes, start: int, limit: int) -> tuple[list[tuple[str, str]], int]:
    """Header lines from start until the blank line; returns (headers, body_offset)."""
    headers: list[tuple[str, str]] = []
    pos = start
    while True:
        eol = data.find(_CRLF, pos, limit)
        if eol < 0:
            raise MimeError(MimeErrorCode.TRUNCATED_PART, pos, "headers never end")
        line = data[pos:eol]
        pos = eol + 2
        if line == b"":
            return headers, pos
        colon = line.find(b":")
        if colon <= 0:
            raise MimeError(MimeErrorCode.TRUNCATED_PART, pos, f"bad header line {line!r}")
        name = line[:colon].decode("ascii", "replace").strip()
        value = line[colon + 1:].decode("ascii", "replace").strip()
        headers.append((name, value))


def _header(headers: list[tuple[str, str]], name: str) -> str | None:
    for k, v in headers:
        if k.lower() == name.lower():
            return v
    return None


def _content_type_params(value: str) -> tuple[str, dict[str, str]]:
    fields = value.split(";")
    main = fields[0].strip().lower()
    params: dict[str, str] = {}
    for piece in fields[1:]:
        if "=" not in piece:
            continue
        key, _, raw = piece.partition("=")
        raw = raw.strip()
        if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
            raw = raw[1:-1]
        params[key.strip().lower()] = raw
    return main, params


def _strip_cid(value: str) -> str:
    value = value.strip()
    if value.startswith("<") and value.endswith(">"):
        value = value[1:-1]
    return value


def decapsulate(data: bytes) -> MmsEnvelope:
    """Unpack .mms bytes produced by encapsulate (or close relatives).

    Transport headers other than Content-Type are preserved verbatim and
    in order; parts keep their order; transfer encodings are decoded.
    Input is matched case-insensitively but otherwise strictly.
    """
    headers, body_offset = _split_headers(data, 0, len(data))
    transport: list[tuple[str, str]] = []
    content_type = None
    for name, value in headers:
        if name.lower() == "content-type":
            content_type = value
        else:
            transport.append((name, value))
    if content_type is None:
        raise MimeError(MimeErrorCode.MISSING_BOUNDARY, 0, "no Content-Type header")
    _, params = _content_type_params(content_type)
    boundary = params.get("boundary", "")
    if not boundary:
        raise MimeError(MimeErrorCode.MISSING_BOUNDARY, 0, "no boundary parameter")
    if "start" not in params:
        raise MimeError(MimeErrorCode.MISSING_START, 0, "no start parameter")
    start_id = _strip_cid(params["start"])

    delim = f"--{boundary}".encode()
    opener = data.find(delim + _CRLF, body_offset)
    if opener < 0:
        raise MimeError(MimeErrorCode.TRUNCATED_PART, body_offset,
                        "first boundary line missing")

    parts: list[MimePart] = []
    seen_ids: set[str] = set()
    pos = opener + len(delim) + 2
    closed = False
    while not closed:
        next_mid = data.find(_CRLF + delim + _CRLF, pos)
        next_end = data.find(_CRLF + delim + b"--" + _CRLF, pos)
        if next_end >= 0 and (next_mid < 0 or next_end < next_mid):
            segment_end = next_end
            pos_after = next_end + 2 + len(delim) + 4
            closed = True
        elif next_mid >= 0:
            segment_end = next_mid
            pos_after = next_mid + 2 + len(delim) + 2
        else:
            raise MimeError(MimeErrorCode.TRUNCATED_PART, pos,
                            "closing boundary missing")

        part_headers, part_body_off = _split_headers(data, pos, segment_end + 2)
        raw_body = data[part_body_off:segment_end]
        ctype = _header(part_headers, "Content-Type") or "application/octet-stream"
        cid = _header(part_headers, "Content-ID")
        cid = _strip_cid(cid) if cid is not None else f"part-{len(parts) + 1}"
        if cid in seen_ids:
            raise MimeError(MimeErrorCode.DUPLICATE_CONTENT_ID, pos,
                            f"content id {cid!r} repeated")
        seen_ids.add(cid)
        cte = (_header(part_headers, "Content-Transfer-Encoding") or "7bit").lower()
        if cte == "base64":
            compact = raw_body.replace(b"\r\n", b"").replace(b"\n", b"")
            try:
                body = base64.b64decode(compact, validate=True)
            except (binascii.Error, ValueError) as exc:
                raise MimeError(MimeErrorCode.BAD_BASE64, part_body_off, str(exc))
            encoding = TransferEncoding.BASE64
        else:
            body = raw_body
            encoding = TransferEncoding.SEVEN_BIT
        parts.append(MimePart(ctype, cid, encoding, body))
        pos = pos_after

    if start_id not in seen_ids:
        raise MimeError(MimeErrorCode.MISSING_START, 0,
                        f"start id {start_id!r} matches no part")
    return MmsEnvelope(transport_headers=transport, start_id=start_id,
                       parts=parts, boundary=boundary)


def smil_part(envelope: MmsEnvelope) -> MimePart:
    """The start part; raises MimeError MissingStart when absent."""
    for part in envelope.parts:
        if part.content_id == envelope.start_id:
            return part
    raise MimeError(MimeErrorCode.MISSING_START, 0,
                    f"start id {envelope.start_id!r} matches no part")


def resolve_media(envelope: MmsEnvelope, tree: SmilTree):
    """Bind each media src to its part by content id.

    srcs match a part's Content-ID directly or with a 'cid:' prefix.
    Returns (bindings, violations); unmatched srcs become UnboundSrc
    violations rather than errors, mirroring tree validation.
    """
    by_id = {p.content_id: p for p in envelope.parts}
    bindings = []
    violations: list[Violation] = []
    for pi, par in enumerate(tree.pars):
        for mi, item in enumerate(par.media):
            src = item.src
            if src.startswith("cid:"):
                src = src[4:]
            part = by_id.get(src)
            if part is None:
                violations.append(Violation(
                    ViolationCode.UNBOUND_SRC, f"pars[{pi}].media[{mi}]",
                    f"src {item.src!r} matches no part"))
            else:
                bindings.append((item, part))
    return bindings, violations
