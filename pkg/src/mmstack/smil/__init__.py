"""SMIL message subset: tree structure, validation, and text syntax."""

from .tree import (
    DEFAULT_IMAGE_REGION,
    DEFAULT_TEXT_REGION,
    Dimension,
    Layout,
    MediaItem,
    MediaKind,
    Par,
    Region,
    SmilTree,
    Unit,
    VISUAL_KINDS,
    Violation,
    ViolationCode,
    default_layout,
    default_tree,
    pct,
    px,
    validate,
)
from .syntax import (
    LexError,
    ParseCode,
    ParseError,
    SerializeError,
    Token,
    TokenKind,
    parse,
    parse_text,
    serialize,
    tokenize,
)

__all__ = [
    "DEFAULT_IMAGE_REGION",
    "DEFAULT_TEXT_REGION",
    "Dimension",
    "Layout",
    "LexError",
    "MediaItem",
    "MediaKind",
    "Par",
    "ParseCode",
    "ParseError",
    "Region",
    "SerializeError",
    "SmilTree",
    "Token",
    "TokenKind",
    "Unit",
    "VISUAL_KINDS",
    "Violation",
    "ViolationCode",
    "default_layout",
    "default_tree",
    "parse",
    "parse_text",
    "pct",
    "px",
    "serialize",
    "tokenize",
    "validate",
]
