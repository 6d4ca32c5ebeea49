"""Authoring core: slide manifests to SMIL trees and packed .mms files.

A manifest is the declarative stand-in for an authoring UI: addresses,
an optional target device, and one entry per slide naming its text,
image, audio, or video. Composition builds the tree; export packs it
with its media; preview reuses the playback engine on a single slide.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field

from . import mime
from .device import fit, resolve_profile
from .player import DEFAULT_PAR_MS, RangeError, RenderPlan, build_plan
from .smil.tree import (
    DEFAULT_IMAGE_REGION,
    DEFAULT_TEXT_REGION,
    MediaItem,
    MediaKind,
    Par,
    SmilTree,
    default_layout,
)
from .smil.syntax import serialize
from .transport import rfc3339

# Media slots in authoring order; the region each visual slot renders to.
_SLOTS = (
    ("image", MediaKind.IMAGE, DEFAULT_IMAGE_REGION),
    ("text", MediaKind.TEXT, DEFAULT_TEXT_REGION),
    ("audio", MediaKind.AUDIO, None),
    ("video", MediaKind.VIDEO, DEFAULT_IMAGE_REGION),
)

_CONTENT_TYPES = {
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".png": "image/png",
    ".gif": "image/gif",
    ".bmp": "image/bmp",
    ".txt": "text/plain",
    ".smil": mime.SMIL_CONTENT_TYPE,
    ".amr": "audio/amr",
    ".wav": "audio/wav",
    ".mp3": "audio/mpeg",
    ".mid": "audio/midi",
    ".3gp": "video/3gpp",
    ".mp4": "video/mp4",
}


class ComposeError(Exception):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


@dataclass
class SlideSpec:
    """One slide: inline text plus file references, at least one present."""

    text: str | None = None
    image: str | None = None
    audio: str | None = None
    video: str | None = None
    dur_ms: int | None = None

    def is_empty(self) -> bool:
        return (self.text is None and self.image is None
                and self.audio is None and self.video is None)


@dataclass
class Manifest:
    from_addr: str
    to_addr: str
    subject: str | None = None
    device: str | None = None
    slides: list[SlideSpec] = field(default_factory=list)
    base_dir: str = "."

    def __post_init__(self):
        if not self.from_addr or not self.to_addr:
            raise ValueError("manifest addresses must be non-empty")
        if not self.slides:
            raise ValueError("manifest needs at least one slide")
        for i, slide in enumerate(self.slides):
            if slide.dur_ms is not None and slide.dur_ms <= 0:
                raise ValueError(f"slide {i + 1} duration must be positive")


def load_manifest(path: str) -> Manifest:
    """Read a manifest JSON file; file references resolve beside it."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return manifest_from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))


def manifest_from_dict(data: dict, base_dir: str = ".") -> Manifest:
    slides = [SlideSpec(
        text=s.get("text"),
        image=s.get("image"),
        audio=s.get("audio"),
        video=s.get("video"),
        dur_ms=s.get("dur_ms"),
    ) for s in data.get("slides", [])]
    return Manifest(
        from_addr=data.get("from", ""),
        to_addr=data.get("to", ""),
        subject=data.get("subject"),
        device=data.get("device"),
        slides=slides,
        base_dir=base_dir,
    )


def _dedup(name: str, used: set[str]) -> str:
    if name not in used:
        used.add(name)
        return name
    stem, dot, ext = name.partition(".")
    n = 2
    while True:
        candidate = f"{stem}-{n}{dot}{ext}" if dot else f"{stem}-{n}"
        if candidate not in used:
            used.add(candidate)
            return candidate
        n += 1


SMIL_PART_ID = "message.smil"


def _content_ids(manifest: Manifest) -> tuple[str, dict, dict]:
    """Deterministic content id assignment shared by compose and export.

    Returns (smil id, per-(slide, slot) id map, file path -> id map).
    The same file referenced twice shares one id; distinct files with
    the same basename get -2/-3 suffixes before the extension.
    """
    used: set[str] = set()
    smil_id = _dedup(SMIL_PART_ID, used)
    slot_ids: dict[tuple[int, str], str] = {}
    file_ids: dict[str, str] = {}
    for i, slide in enumerate(manifest.slides):
        if slide.text is not None:
            slot_ids[(i, "text")] = _dedup(f"slide{i + 1}.txt", used)
        for slot, _, _ in _SLOTS:
            if slot == "text":
                continue
            ref = getattr(slide, slot)
            if ref is None:
                continue
            path = os.path.normpath(os.path.join(manifest.base_dir, ref))
            if path not in file_ids:
                file_ids[path] = _dedup(os.path.basename(ref), used)
            slot_ids[(i, slot)] = file_ids[path]
    return smil_id, slot_ids, file_ids


def compose(manifest: Manifest) -> SmilTree:
    """One par per slide over the default layout.

    Media begin at the par start; the par runs for the slide duration or
    the player default. Raises ComposeError for an empty slide or a
    missing referenced file.
    """
    _, slot_ids, file_ids = _content_ids(manifest)
    for i, slide in enumerate(manifest.slides):
        if slide.is_empty():
            raise ComposeError("EmptySlide", f"slide {i + 1} has no content")
    for path in file_ids:
        if not os.path.isfile(path):
            raise ComposeError("MissingFile", path)
    pars: list[Par] = []
    for i, slide in enumerate(manifest.slides):
        media: list[MediaItem] = []
        for slot, kind, region in _SLOTS:
            if getattr(slide, slot) is None:
                continue
            media.append(MediaItem(
                kind=kind,
                src=slot_ids[(i, slot)],
                region_id=region,
            ))
        pars.append(Par(dur_ms=slide.dur_ms or DEFAULT_PAR_MS, media=media))
    return SmilTree(layout=default_layout(), pars=pars)


def _default_message_id(manifest: Manifest, now_ms: int) -> str:
    digest = hashlib.sha256(
        f"{manifest.from_addr}|{manifest.to_addr}|{now_ms}".encode()).hexdigest()
    return f"mms-{digest[:16]}@compose"


def export(manifest: Manifest, now_ms: int | None = None,
           message_id: str | None = None, boundary_seed: int = 0) -> bytes:
    """The packed message: serialized SMIL start part plus one part per file.

    now_ms and message_id default to the wall clock and a derived id;
    pass fixed values for reproducible bytes.
    """
    tree = compose(manifest)
    if now_ms is None:
        now_ms = int(time.time() * 1000)
    if message_id is None:
        message_id = _default_message_id(manifest, now_ms)

    smil_id, slot_ids, file_ids = _content_ids(manifest)
    parts = [mime.make_part(mime.SMIL_CONTENT_TYPE, smil_id,
                            serialize(tree).encode())]
    emitted: set[str] = set()
    for i, slide in enumerate(manifest.slides):
        if slide.text is not None:
            parts.append(mime.make_part("text/plain", slot_ids[(i, "text")],
                                        slide.text.encode()))
        for slot, _, _ in _SLOTS:
            if slot == "text" or getattr(slide, slot) is None:
                continue
            path = os.path.normpath(os.path.join(manifest.base_dir,
                                                 getattr(slide, slot)))
            cid = file_ids[path]
            if cid in emitted:
                continue
            emitted.add(cid)
            ext = os.path.splitext(path)[1].lower()
            ctype = _CONTENT_TYPES.get(ext, "application/octet-stream")
            with open(path, "rb") as fh:
                parts.append(mime.make_part(ctype, cid, fh.read()))

    headers = [("From", manifest.from_addr), ("To", manifest.to_addr)]
    if manifest.subject is not None:
        headers.append(("Subject", manifest.subject))
    headers.append(("Date", rfc3339(now_ms)))
    headers.append(("Message-ID", message_id))
    envelope = mime.MmsEnvelope(transport_headers=headers, start_id=smil_id,
                                parts=parts)
    return mime.encapsulate(envelope, boundary_seed=boundary_seed)


def preview(manifest: Manifest, slide_index: int) -> RenderPlan:
    """Playback plan for one slide, fitted to the manifest's device."""
    tree = compose(manifest)
    if not 0 <= slide_index < len(tree.pars):
        raise RangeError(f"slide {slide_index} outside 0..{len(tree.pars) - 1}")
    single = SmilTree(layout=tree.layout, pars=[tree.pars[slide_index]])
    return build_plan(fit(single, resolve_profile(manifest.device)))
