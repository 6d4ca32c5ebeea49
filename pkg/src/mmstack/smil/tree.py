"""SMIL message tree: the shared in-memory structure of player and composer.

A message is a spatial layout (named screen regions) plus an ordered list
of pars (slides), each holding the media shown together during that slide.
Validation is accumulating: structural problems are reported as Violation
values in document order, never raised, so a lint pass can show them all.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class Unit(str, Enum):
    """Length unit of a Dimension."""

    PIXELS = "px"
    PERCENT = "%"


class MediaKind(str, Enum):
    """The five media slots a par may fill, at most one of each."""

    TEXT = "text"
    IMAGE = "image"
    AUDIO = "audio"
    VIDEO = "video"
    REF = "ref"


# Kinds that render into a screen region; audio and ref are non-visual.
VISUAL_KINDS = frozenset({MediaKind.TEXT, MediaKind.IMAGE, MediaKind.VIDEO})

DEFAULT_IMAGE_REGION = "Image"
DEFAULT_TEXT_REGION = "Text"


@dataclass(frozen=True)
class Dimension:
    """A length, either absolute pixels or percent of the root layout.

    Pixel values must be non-negative integers; percent values must lie
    in [0, 100] and may be fractional.
    """

    value: int | float
    unit: Unit = Unit.PIXELS

    @property
    def is_pixels(self) -> bool:
        return self.unit is Unit.PIXELS


def px(value: int) -> Dimension:
    return Dimension(value, Unit.PIXELS)


def pct(value: int | float) -> Dimension:
    return Dimension(value, Unit.PERCENT)


@dataclass
class Region:
    """A named rectangle of the screen into which visual media renders."""

    id: str
    left: Dimension = field(default_factory=lambda: px(0))
    top: Dimension = field(default_factory=lambda: px(0))
    width: Dimension = field(default_factory=lambda: pct(100))
    height: Dimension = field(default_factory=lambda: pct(100))
    z_index: int = 0


@dataclass
class Layout:
    """Root canvas size (optional) plus the ordered region list."""

    root_width: int | None = None
    root_height: int | None = None
    regions: list[Region] = field(default_factory=list)

    def is_empty(self) -> bool:
        return self.root_width is None and self.root_height is None and not self.regions

    def region_ids(self) -> set[str]:
        return {r.id for r in self.regions}

    def find_region(self, region_id: str) -> Region | None:
        for r in self.regions:
            if r.id == region_id:
                return r
        return None


@dataclass
class MediaItem:
    """One media reference inside a par.

    ``src`` is an opaque content reference; it is matched against MIME
    part identifiers at packing time, never opened here. ``begin_ms`` and
    ``dur_ms`` are relative to the enclosing par.
    """

    kind: MediaKind
    src: str
    region_id: str | None = None
    begin_ms: int = 0
    dur_ms: int | None = None
    alt: str | None = None


@dataclass
class Par:
    """One slide: media presented together for the par's duration."""

    dur_ms: int | None = None
    media: list[MediaItem] = field(default_factory=list)


@dataclass
class SmilTree:
    """A whole message: layout plus ordered pars."""

    layout: Layout = field(default_factory=Layout)
    pars: list[Par] = field(default_factory=list)


class ViolationCode(str, Enum):
    DUPLICATE_KIND_IN_PAR = "DuplicateKindInPar"
    UNRESOLVED_REGION = "UnresolvedRegion"
    DUPLICATE_REGION_ID = "DuplicateRegionId"
    EMPTY_REGION_ID = "EmptyRegionId"
    BAD_DIMENSION = "BadDimension"
    ZERO_SIZE_REGION = "ZeroSizeRegion"
    EMPTY_SRC = "EmptySrc"
    NEGATIVE_BEGIN = "NegativeBegin"
    NONPOSITIVE_DURATION = "NonPositiveDuration"
    UNBOUND_SRC = "UnboundSrc"


@dataclass(frozen=True)
class Violation:
    """One structural problem, with a machine code and the node path."""

    code: ViolationCode
    path: str
    detail: str = ""

    def __str__(self) -> str:
        if self.detail:
            return f"{self.code.value} at {self.path}: {self.detail}"
        return f"{self.code.value} at {self.path}"


def _check_dimension(dim: Dimension, path: str, out: list[Violation]) -> None:
    if dim.unit is Unit.PERCENT:
        if not 0 <= dim.value <= 100:
            out.append(Violation(ViolationCode.BAD_DIMENSION, path,
                                 f"percent value {dim.value} outside [0, 100]"))
    else:
        if isinstance(dim.value, bool) or not isinstance(dim.value, int):
            out.append(Violation(ViolationCode.BAD_DIMENSION, path,
                                 f"pixel value {dim.value!r} is not an integer"))
        elif dim.value < 0:
            out.append(Violation(ViolationCode.BAD_DIMENSION, path,
                                 f"pixel value {dim.value} is negative"))


def _positive_extent(dim: Dimension) -> bool:
    """Would this width/height resolve to at least one pixel?"""
    if dim.unit is Unit.PERCENT:
        return dim.value > 0
    return isinstance(dim.value, int) and dim.value > 0


def validate(tree: SmilTree) -> list[Violation]:
    """Collect every invariant violation in document order.

    Returns an empty list iff the tree is structurally sound: well-formed
    dimensions, unique region ids, resolvable region references, at most
    one media item of each kind per par, and sane timing values.
    """
    out: list[Violation] = []
    layout = tree.layout

    for attr in ("root_width", "root_height"):
        value = getattr(layout, attr)
        if value is not None and (isinstance(value, bool)
                                  or not isinstance(value, int) or value <= 0):
            out.append(Violation(ViolationCode.BAD_DIMENSION, f"layout.{attr}",
                                 f"root dimension {value!r} is not a positive integer"))

    seen_ids: set[str] = set()
    for i, region in enumerate(layout.regions):
        path = f"layout.regions[{i}]"
        if not region.id:
            out.append(Violation(ViolationCode.EMPTY_REGION_ID, path))
        elif region.id in seen_ids:
            out.append(Violation(ViolationCode.DUPLICATE_REGION_ID, path,
                                 f"region id {region.id!r} already defined"))
        else:
            seen_ids.add(region.id)
        for attr in ("left", "top", "width", "height"):
            _check_dimension(getattr(region, attr), f"{path}.{attr}", out)
        for attr in ("width", "height"):
            dim = getattr(region, attr)
            if not _positive_extent(dim) and not any(
                    v.path == f"{path}.{attr}" for v in out):
                out.append(Violation(ViolationCode.ZERO_SIZE_REGION, f"{path}.{attr}",
                                     f"region {attr} resolves to zero pixels"))

    region_ids = layout.region_ids()
    for pi, par in enumerate(tree.pars):
        par_path = f"pars[{pi}]"
        if par.dur_ms is not None and (isinstance(par.dur_ms, bool)
                                       or not isinstance(par.dur_ms, int)
                                       or par.dur_ms <= 0):
            out.append(Violation(ViolationCode.NONPOSITIVE_DURATION, par_path,
                                 f"par duration {par.dur_ms!r} must be a positive integer"))
        kind_counts: dict[MediaKind, int] = {}
        for mi, item in enumerate(par.media):
            kind_counts[item.kind] = kind_counts.get(item.kind, 0) + 1
        for kind, count in kind_counts.items():
            if count > 1:
                out.append(Violation(ViolationCode.DUPLICATE_KIND_IN_PAR, par_path,
                                     f"{count} {kind.value} items in one par"))
        for mi, item in enumerate(par.media):
            media_path = f"{par_path}.media[{mi}]"
            if not item.src:
                out.append(Violation(ViolationCode.EMPTY_SRC, media_path))
            if item.region_id is not None and item.region_id not in region_ids:
                out.append(Violation(ViolationCode.UNRESOLVED_REGION, media_path,
                                     f"region {item.region_id!r} not in layout"))
            if not isinstance(item.begin_ms, int) or isinstance(item.begin_ms, bool) \
                    or item.begin_ms < 0:
                out.append(Violation(ViolationCode.NEGATIVE_BEGIN, media_path,
                                     f"begin {item.begin_ms!r} must be a non-negative integer"))
            if item.dur_ms is not None and (isinstance(item.dur_ms, bool)
                                            or not isinstance(item.dur_ms, int)
                                            or item.dur_ms <= 0):
                out.append(Violation(ViolationCode.NONPOSITIVE_DURATION, media_path,
                                     f"duration {item.dur_ms!r} must be a positive integer"))
    return out


def default_layout() -> Layout:
    """The two-region screen used when a message carries no layout.

    Image on the top half, Text on the bottom half, text painted above
    the image where they overlap.
    """
    return Layout(regions=[
        Region(DEFAULT_IMAGE_REGION, px(0), px(0), pct(100), pct(50), z_index=0),
        Region(DEFAULT_TEXT_REGION, px(0), pct(50), pct(100), pct(50), z_index=1),
    ])


def default_tree() -> SmilTree:
    """An empty message over the default layout; always validates clean."""
    return SmilTree(layout=default_layout(), pars=[])
