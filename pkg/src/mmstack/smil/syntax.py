"""Text form of the SMIL message subset: lexer, parser, canonical serializer.

The grammar is deliberately small: smil/head/layout/root-layout/region/
body/par and the five media elements, quoted attributes, four named
entities, no namespaces, DOCTYPE, or CDATA. Unknown elements are hard
errors unless parsing leniently (then the whole subtree is skipped and
reported through the warning callback).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum

from .tree import (
    Dimension,
    Layout,
    MediaItem,
    MediaKind,
    Par,
    Region,
    SmilTree,
    Unit,
    validate,
)


class TokenKind(Enum):
    TAG_OPEN = "TagOpen"
    TAG_CLOSE = "TagClose"
    TAG_SELF_CLOSE = "TagSelfClose"
    ATTR_NAME = "AttrName"
    ATTR_VALUE = "AttrValue"
    TEXT = "Text"
    EOF = "Eof"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    lexeme: str
    line: int
    column: int


class LexError(Exception):
    def __init__(self, line: int, column: int, detail: str):
        super().__init__(f"{line}:{column}: {detail}")
        self.line = line
        self.column = column
        self.detail = detail


class ParseCode(str, Enum):
    UNEXPECTED_TOKEN = "UnexpectedToken"
    UNKNOWN_ELEMENT = "UnknownElement"
    BAD_CLOCK_VALUE = "BadClockValue"
    BAD_DIMENSION = "BadDimension"
    UNCLOSED = "Unclosed"


class ParseError(Exception):
    def __init__(self, line: int, column: int, code: ParseCode, detail: str):
        super().__init__(f"{line}:{column}: {code.value}: {detail}")
        self.line = line
        self.column = column
        self.code = code
        self.detail = detail


class SerializeError(Exception):
    pass


_NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9-]*")
_ENTITIES = {"amp": "&", "lt": "<", "gt": ">", "quot": '"'}
_ESCAPES = [("&", "&amp;"), ("<", "&lt;"), (">", "&gt;"), ('"', "&quot;")]

MEDIA_ELEMENTS = {
    "img": MediaKind.IMAGE,
    "text": MediaKind.TEXT,
    "audio": MediaKind.AUDIO,
    "video": MediaKind.VIDEO,
    "ref": MediaKind.REF,
}
_KIND_TO_ELEMENT = {kind: name for name, kind in MEDIA_ELEMENTS.items()}

KNOWN_ELEMENTS = frozenset(
    {"smil", "head", "layout", "root-layout", "region", "body", "par"}
    | set(MEDIA_ELEMENTS)
)

# Canonical attribute emission order, one list for all elements.
ATTRIBUTE_ORDER = ("id", "left", "top", "width", "height", "z-index",
                   "src", "region", "begin", "dur", "alt")

_ALLOWED_ATTRS = {
    "smil": frozenset(),
    "head": frozenset(),
    "layout": frozenset(),
    "body": frozenset(),
    "root-layout": frozenset({"width", "height"}),
    "region": frozenset({"id", "left", "top", "width", "height", "z-index"}),
    "par": frozenset({"dur", "end"}),
}
for _name in MEDIA_ELEMENTS:
    _ALLOWED_ATTRS[_name] = frozenset({"src", "region", "begin", "dur", "end", "alt"})


class _Lexer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.column = 1
        self.tokens: list[Token] = []

    def error(self, detail: str) -> LexError:
        return LexError(self.line, self.column, detail)

    def _advance(self, n: int = 1) -> None:
        for _ in range(n):
            if self.pos >= len(self.text):
                return
            if self.text[self.pos] == "\n":
                self.line += 1
                self.column = 1
            else:
                self.column += 1
            self.pos += 1

    def _peek(self, offset: int = 0) -> str:
        i = self.pos + offset
        return self.text[i] if i < len(self.text) else ""

    def _emit(self, kind: TokenKind, lexeme: str, line: int, column: int) -> None:
        self.tokens.append(Token(kind, lexeme, line, column))

    def _read_name(self) -> str:
        m = _NAME_RE.match(self.text, self.pos)
        if not m:
            raise self.error(f"expected a name, found {self._peek()!r}")
        self._advance(len(m.group()))
        return m.group()

    def _read_entity(self) -> str:
        # self.pos is on '&'
        end = self.text.find(";", self.pos + 1, self.pos + 8)
        if end < 0:
            raise self.error("unterminated entity reference")
        name = self.text[self.pos + 1:end]
        if name not in _ENTITIES:
            raise self.error(f"unknown entity &{name};")
        self._advance(end - self.pos + 1)
        return _ENTITIES[name]

    def _read_quoted(self) -> str:
        quote = self._peek()
        if quote not in ("\"", "'"):
            raise self.error("expected quoted attribute value")
        self._advance()
        parts: list[str] = []
        while True:
            c = self._peek()
            if c == "":
                raise self.error("unterminated attribute value")
            if c == quote:
                self._advance()
                return "".join(parts)
            if c == "<":
                raise self.error("'<' inside attribute value")
            if c == "&":
                parts.append(self._read_entity())
            else:
                parts.append(c)
                self._advance()

    def _lex_tag(self) -> None:
        # self.pos is on '<'
        line, column = self.line, self.column
        self._advance()
        if self._peek() == "/":
            self._advance()
            name = self._read_name()
            if self._peek() != ">":
                raise self.error(f"malformed closing tag </{name}")
            self._advance()
            self._emit(TokenKind.TAG_CLOSE, name, line, column)
            return
        name = self._read_name()
        self._emit(TokenKind.TAG_OPEN, name, line, column)
        while True:
            while self._peek() in (" ", "\t", "\r", "\n"):
                self._advance()
            c = self._peek()
            if c == "":
                raise self.error(f"tag <{name} never closed")
            if c == ">":
                self._advance()
                return
            if c == "/":
                sline, scol = self.line, self.column
                self._advance()
                if self._peek() != ">":
                    raise self.error("expected '>' after '/'")
                self._advance()
                self._emit(TokenKind.TAG_SELF_CLOSE, name, sline, scol)
                return
            aline, acol = self.line, self.column
            attr = self._read_name()
            self._emit(TokenKind.ATTR_NAME, attr, aline, acol)
            while self._peek() in (" ", "\t", "\r", "\n"):
                self._advance()
            if self._peek() != "=":
                raise self.error(f"expected '=' after attribute {attr!r}")
            self._advance()
            while self._peek() in (" ", "\t", "\r", "\n"):
                self._advance()
            vline, vcol = self.line, self.column
            value = self._read_quoted()
            self._emit(TokenKind.ATTR_VALUE, value, vline, vcol)

    def _lex_text(self) -> None:
        line, column = self.line, self.column
        parts: list[str] = []
        has_content = False
        while True:
            c = self._peek()
            if c in ("", "<"):
                break
            if c == "&":
                parts.append(self._read_entity())
                has_content = True
            else:
                if c not in (" ", "\t", "\r", "\n"):
                    has_content = True
                parts.append(c)
                self._advance()
        if has_content:
            self._emit(TokenKind.TEXT, "".join(parts), line, column)

    def run(self) -> list[Token]:
        while self.pos < len(self.text):
            if self._peek() == "<":
                self._lex_tag()
            else:
                self._lex_text()
        self._emit(TokenKind.EOF, "", self.line, self.column)
        return self.tokens


def tokenize(text: str) -> list[Token]:
    """Split source text into tokens; raises LexError on malformed syntax.

    Inter-element whitespace is skipped; everything else is covered by a
    token, so positions are strictly document-ordered and end with Eof.
    """
    return _Lexer(text).run()


def parse_clock(text: str, line: int = 0, column: int = 0) -> int:
    """A clock value ('5s', '1.5s', '300ms', bare seconds) as milliseconds."""
    m = re.fullmatch(r"(\d+)ms", text)
    if m:
        return int(m.group(1))
    m = re.fullmatch(r"(\d+(?:\.\d+)?)s", text)
    if m:
        ms = (Decimal(m.group(1)) * 1000).quantize(Decimal(1), rounding=ROUND_HALF_UP)
        return int(ms)
    m = re.fullmatch(r"\d+", text)
    if m:
        return int(text) * 1000
    raise ParseError(line, column, ParseCode.BAD_CLOCK_VALUE,
                     f"bad clock value {text!r}")


def parse_dimension(text: str, line: int = 0, column: int = 0) -> Dimension:
    """A region dimension: bare integer or 'Npx' pixels, or 'N%' percent."""
    m = re.fullmatch(r"(\d+)(px)?", text)
    if m:
        return Dimension(int(m.group(1)), Unit.PIXELS)
    m = re.fullmatch(r"(\d+(?:\.\d+)?)%", text)
    if m:
        raw = m.group(1)
        value = float(raw) if "." in raw else int(raw)
        return Dimension(value, Unit.PERCENT)
    raise ParseError(line, column, ParseCode.BAD_DIMENSION,
                     f"bad dimension {text!r}")


def format_clock(ms: int) -> str:
    return f"{ms}ms"


def format_dimension(dim: Dimension) -> str:
    if dim.unit is Unit.PIXELS:
        return str(dim.value)
    return f"{dim.value}%"


@dataclass
class _Attr:
    name: str
    value: str
    line: int
    column: int


class _Parser:
    def __init__(self, tokens: list[Token], lenient: bool = False, on_warning=None):
        self.tokens = tokens
        self.i = 0
        self.lenient = lenient
        self.on_warning = on_warning

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind is not TokenKind.EOF:
            self.i += 1
        return tok

    def fail(self, tok: Token, code: ParseCode, detail: str):
        raise ParseError(tok.line, tok.column, code, detail)

    def warn(self, tok: Token, detail: str) -> None:
        if self.on_warning is not None:
            self.on_warning(f"{tok.line}:{tok.column}: {detail}")

    # -- attribute handling -------------------------------------------

    def read_attrs(self, element: str) -> tuple[dict[str, _Attr], bool]:
        """Attributes of the just-opened element and the self-closing flag."""
        allowed = _ALLOWED_ATTRS[element]
        attrs: dict[str, _Attr] = {}
        while self.peek().kind is TokenKind.ATTR_NAME:
            name_tok = self.next()
            value_tok = self.next()
            if value_tok.kind is not TokenKind.ATTR_VALUE:
                self.fail(value_tok, ParseCode.UNEXPECTED_TOKEN,
                          f"attribute {name_tok.lexeme!r} has no value")
            if name_tok.lexeme not in allowed:
                self.fail(name_tok, ParseCode.UNEXPECTED_TOKEN,
                          f"attribute {name_tok.lexeme!r} not allowed on <{element}>")
            if name_tok.lexeme in attrs:
                self.fail(name_tok, ParseCode.UNEXPECTED_TOKEN,
                          f"duplicate attribute {name_tok.lexeme!r}")
            attrs[name_tok.lexeme] = _Attr(name_tok.lexeme, value_tok.lexeme,
                                           value_tok.line, value_tok.column)
        self_closing = False
        if self.peek().kind is TokenKind.TAG_SELF_CLOSE:
            self.next()
            self_closing = True
        return attrs, self_closing

    def attr_clock(self, attrs: dict[str, _Attr], name: str) -> int | None:
        a = attrs.get(name)
        if a is None:
            return None
        return parse_clock(a.value, a.line, a.column)

    def attr_dimension(self, attrs: dict[str, _Attr], name: str,
                       default: Dimension) -> Dimension:
        a = attrs.get(name)
        if a is None:
            return default
        return parse_dimension(a.value, a.line, a.column)

    def timing(self, attrs: dict[str, _Attr], begin_ms: int) -> int | None:
        """Effective duration from dur/end attributes; explicit dur wins."""
        dur = self.attr_clock(attrs, "dur")
        if dur is not None:
            return dur
        end_attr = attrs.get("end")
        if end_attr is None:
            return None
        end = parse_clock(end_attr.value, end_attr.line, end_attr.column)
        if end - begin_ms <= 0:
            raise ParseError(end_attr.line, end_attr.column, ParseCode.BAD_CLOCK_VALUE,
                             f"end {end_attr.value!r} not after begin")
        return end - begin_ms

    # -- element skipping (lenient mode) ------------------------------

    def skip_element(self) -> None:
        """Consume the rest of an already-opened element, nesting included."""
        depth = 1
        while depth > 0:
            tok = self.next()
            if tok.kind is TokenKind.EOF:
                self.fail(tok, ParseCode.UNCLOSED, "unexpected end of input")
            elif tok.kind is TokenKind.TAG_OPEN:
                _, self_closing = self.read_attrs_any()
                if not self_closing:
                    depth += 1
            elif tok.kind is TokenKind.TAG_CLOSE:
                depth -= 1

    def read_attrs_any(self) -> tuple[list[Token], bool]:
        attrs: list[Token] = []
        while self.peek().kind in (TokenKind.ATTR_NAME, TokenKind.ATTR_VALUE):
            attrs.append(self.next())
        if self.peek().kind is TokenKind.TAG_SELF_CLOSE:
            self.next()
            return attrs, True
        return attrs, False

    def open_unknown(self, tok: Token) -> None:
        """Unknown element: error when strict, skip-with-warning when lenient."""
        if not self.lenient:
            self.fail(tok, ParseCode.UNKNOWN_ELEMENT, f"unknown element <{tok.lexeme}>")
        self.warn(tok, f"skipping unknown element <{tok.lexeme}>")
        _, self_closing = self.read_attrs_any()
        if not self_closing:
            self.skip_element()

    # -- grammar -------------------------------------------------------

    def parse_document(self) -> SmilTree:
        tok = self.next()
        if tok.kind is TokenKind.TEXT:
            self.fail(tok, ParseCode.UNEXPECTED_TOKEN, "text before root element")
        if tok.kind is not TokenKind.TAG_OPEN:
            self.fail(tok, ParseCode.UNEXPECTED_TOKEN, "expected <smil>")
        if tok.lexeme != "smil":
            code = (ParseCode.UNEXPECTED_TOKEN if tok.lexeme in KNOWN_ELEMENTS
                    else ParseCode.UNKNOWN_ELEMENT)
            self.fail(tok, code, f"root element must be <smil>, got <{tok.lexeme}>")
        _, self_closing = self.read_attrs("smil")
        tree = SmilTree()
        if not self_closing:
            seen_head = seen_body = False
            while True:
                child = self.next()
                if child.kind is TokenKind.TAG_CLOSE:
                    if child.lexeme != "smil":
                        self.fail(child, ParseCode.UNCLOSED,
                                  f"mismatched </{child.lexeme}>, expected </smil>")
                    break
                if child.kind is TokenKind.EOF:
                    self.fail(child, ParseCode.UNCLOSED, "<smil> never closed")
                if child.kind is TokenKind.TEXT:
                    self.fail(child, ParseCode.UNEXPECTED_TOKEN,
                              "text content not allowed in <smil>")
                if child.lexeme == "head" and not seen_head and not seen_body:
                    seen_head = True
                    tree.layout = self.parse_head()
                elif child.lexeme == "body" and not seen_body:
                    seen_body = True
                    tree.pars = self.parse_body()
                elif child.lexeme in KNOWN_ELEMENTS:
                    self.fail(child, ParseCode.UNEXPECTED_TOKEN,
                              f"<{child.lexeme}> not allowed here")
                else:
                    self.open_unknown(child)
        tail = self.next()
        if tail.kind is not TokenKind.EOF:
            self.fail(tail, ParseCode.UNEXPECTED_TOKEN, "content after </smil>")
        return tree

    def parse_head(self) -> Layout:
        _, self_closing = self.read_attrs("head")
        layout = Layout()
        if self_closing:
            return layout
        seen_layout = False
        while True:
            tok = self.next()
            if tok.kind is TokenKind.TAG_CLOSE:
                if tok.lexeme != "head":
                    self.fail(tok, ParseCode.UNCLOSED,
                              f"mismatched </{tok.lexeme}>, expected </head>")
                return layout
            if tok.kind is TokenKind.EOF:
                self.fail(tok, ParseCode.UNCLOSED, "<head> never closed")
            if tok.kind is TokenKind.TEXT:
                self.fail(tok, ParseCode.UNEXPECTED_TOKEN,
                          "text content not allowed in <head>")
            if tok.lexeme == "layout" and not seen_layout:
                seen_layout = True
                layout = self.parse_layout()
            elif tok.lexeme in KNOWN_ELEMENTS:
                self.fail(tok, ParseCode.UNEXPECTED_TOKEN,
                          f"<{tok.lexeme}> not allowed in <head>")
            else:
                self.open_unknown(tok)

    def parse_layout(self) -> Layout:
        _, self_closing = self.read_attrs("layout")
        layout = Layout()
        if self_closing:
            return layout
        seen_root = False
        while True:
            tok = self.next()
            if tok.kind is TokenKind.TAG_CLOSE:
                if tok.lexeme != "layout":
                    self.fail(tok, ParseCode.UNCLOSED,
                              f"mismatched </{tok.lexeme}>, expected </layout>")
                return layout
            if tok.kind is TokenKind.EOF:
                self.fail(tok, ParseCode.UNCLOSED, "<layout> never closed")
            if tok.kind is TokenKind.TEXT:
                self.fail(tok, ParseCode.UNEXPECTED_TOKEN,
                          "text content not allowed in <layout>")
            if tok.lexeme == "root-layout":
                if seen_root:
                    self.fail(tok, ParseCode.UNEXPECTED_TOKEN,
                              "more than one <root-layout>")
                seen_root = True
                self.parse_root_layout(tok, layout)
            elif tok.lexeme == "region":
                layout.regions.append(self.parse_region(tok))
            elif tok.lexeme in KNOWN_ELEMENTS:
                self.fail(tok, ParseCode.UNEXPECTED_TOKEN,
                          f"<{tok.lexeme}> not allowed in <layout>")
            else:
                self.open_unknown(tok)

    def parse_root_layout(self, tok: Token, layout: Layout) -> None:
        attrs, self_closing = self.read_attrs("root-layout")
        if not self_closing:
            self.close_empty(tok, "root-layout")
        for attr_name, field_name in (("width", "root_width"), ("height", "root_height")):
            a = attrs.get(attr_name)
            if a is None:
                continue
            dim = parse_dimension(a.value, a.line, a.column)
            if dim.unit is not Unit.PIXELS:
                raise ParseError(a.line, a.column, ParseCode.BAD_DIMENSION,
                                 "root-layout dimensions must be pixels")
            setattr(layout, field_name, dim.value)

    def parse_region(self, tok: Token) -> Region:
        attrs, self_closing = self.read_attrs("region")
        if not self_closing:
            self.close_empty(tok, "region")
        id_attr = attrs.get("id")
        if id_attr is None:
            self.fail(tok, ParseCode.UNEXPECTED_TOKEN, "<region> requires id")
        z_index = 0
        z_attr = attrs.get("z-index")
        if z_attr is not None:
            if not re.fullmatch(r"-?\d+", z_attr.value):
                raise ParseError(z_attr.line, z_attr.column, ParseCode.UNEXPECTED_TOKEN,
                                 f"z-index {z_attr.value!r} is not an integer")
            z_index = int(z_attr.value)
        return Region(
            id=id_attr.value,
            left=self.attr_dimension(attrs, "left", Dimension(0, Unit.PIXELS)),
            top=self.attr_dimension(attrs, "top", Dimension(0, Unit.PIXELS)),
            width=self.attr_dimension(attrs, "width", Dimension(100, Unit.PERCENT)),
            height=self.attr_dimension(attrs, "height", Dimension(100, Unit.PERCENT)),
            z_index=z_index,
        )

    def close_empty(self, open_tok: Token, name: str) -> None:
        """Allow <x></x> as the empty form of an attribute-only element."""
        tok = self.next()
        if tok.kind is not TokenKind.TAG_CLOSE or tok.lexeme != name:
            self.fail(open_tok, ParseCode.UNCLOSED, f"<{name}> must be empty")

    def parse_body(self) -> list[Par]:
        _, self_closing = self.read_attrs("body")
        pars: list[Par] = []
        if self_closing:
            return pars
        while True:
            tok = self.next()
            if tok.kind is TokenKind.TAG_CLOSE:
                if tok.lexeme != "body":
                    self.fail(tok, ParseCode.UNCLOSED,
                              f"mismatched </{tok.lexeme}>, expected </body>")
                return pars
            if tok.kind is TokenKind.EOF:
                self.fail(tok, ParseCode.UNCLOSED, "<body> never closed")
            if tok.kind is TokenKind.TEXT:
                self.fail(tok, ParseCode.UNEXPECTED_TOKEN,
                          "text content not allowed in <body>")
            if tok.lexeme == "par":
                pars.append(self.parse_par())
            elif tok.lexeme in KNOWN_ELEMENTS:
                self.fail(tok, ParseCode.UNEXPECTED_TOKEN,
                          f"<{tok.lexeme}> not allowed in <body>")
            else:
                self.open_unknown(tok)

    def parse_par(self) -> Par:
        attrs, self_closing = self.read_attrs("par")
        par = Par(dur_ms=self.timing(attrs, 0))
        if self_closing:
            return par
        while True:
            tok = self.next()
            if tok.kind is TokenKind.TAG_CLOSE:
                if tok.lexeme != "par":
                    self.fail(tok, ParseCode.UNCLOSED,
                              f"mismatched </{tok.lexeme}>, expected </par>")
                return par
            if tok.kind is TokenKind.EOF:
                self.fail(tok, ParseCode.UNCLOSED, "<par> never closed")
            if tok.kind is TokenKind.TEXT:
                self.fail(tok, ParseCode.UNEXPECTED_TOKEN,
                          "text content not allowed in <par>; media use src references")
            if tok.lexeme in MEDIA_ELEMENTS:
                par.media.append(self.parse_media(tok))
            elif tok.lexeme in KNOWN_ELEMENTS:
                self.fail(tok, ParseCode.UNEXPECTED_TOKEN,
                          f"<{tok.lexeme}> not allowed in <par>")
            else:
                self.open_unknown(tok)

    def parse_media(self, tok: Token) -> MediaItem:
        element = tok.lexeme
        attrs, self_closing = self.read_attrs(element)
        if not self_closing:
            self.close_empty(tok, element)
        src = attrs.get("src")
        if src is None:
            self.fail(tok, ParseCode.UNEXPECTED_TOKEN,
                      f"<{element}> requires src")
        begin = self.attr_clock(attrs, "begin") or 0
        region = attrs.get("region")
        alt = attrs.get("alt")
        return MediaItem(
            kind=MEDIA_ELEMENTS[element],
            src=src.value,
            region_id=region.value if region is not None else None,
            begin_ms=begin,
            dur_ms=self.timing(attrs, begin),
            alt=alt.value if alt is not None else None,
        )


def parse(tokens: list[Token], lenient: bool = False, on_warning=None) -> SmilTree:
    """Build a SmilTree from a token stream.

    Syntax and conformance are separate stages: the returned tree may
    still fail tree.validate (for example, two images in one par parse
    fine). In lenient mode unknown elements are skipped and reported via
    on_warning instead of raising UnknownElement.
    """
    return _Parser(tokens, lenient=lenient, on_warning=on_warning).parse_document()


def parse_text(text: str, lenient: bool = False, on_warning=None) -> SmilTree:
    """tokenize + parse in one step."""
    return parse(tokenize(text), lenient=lenient, on_warning=on_warning)


def _escape(value: str) -> str:
    for raw, escaped in _ESCAPES:
        value = value.replace(raw, escaped)
    return value


def _open_tag(indent: int, name: str, attrs: list[tuple[str, str]],
              self_close: bool) -> str:
    order = {n: i for i, n in enumerate(ATTRIBUTE_ORDER)}
    attrs = sorted(attrs, key=lambda kv: order[kv[0]])
    parts = [f'{k}="{_escape(v)}"' for k, v in attrs]
    body = " ".join([name] + parts)
    return "  " * indent + (f"<{body}/>" if self_close else f"<{body}>")


def serialize(tree: SmilTree) -> str:
    """Canonical text: CRLF lines, 2-space indent, fixed attribute order.

    Durations always render as 'Nms'; begin and z-index are omitted when
    zero; region geometry is always explicit. Raises SerializeError if
    the tree does not validate.
    """
    problems = validate(tree)
    if problems:
        raise SerializeError(f"tree is not valid: {problems[0]}")

    lines = ["<smil>"]
    layout = tree.layout
    if not layout.is_empty():
        lines.append("  <head>")
        lines.append("    <layout>")
        root_attrs = []
        if layout.root_width is not None:
            root_attrs.append(("width", str(layout.root_width)))
        if layout.root_height is not None:
            root_attrs.append(("height", str(layout.root_height)))
        if root_attrs:
            lines.append(_open_tag(3, "root-layout", root_attrs, True))
        for region in layout.regions:
            attrs = [("id", region.id),
                     ("left", format_dimension(region.left)),
                     ("top", format_dimension(region.top)),
                     ("width", format_dimension(region.width)),
                     ("height", format_dimension(region.height))]
            if region.z_index != 0:
                attrs.append(("z-index", str(region.z_index)))
            lines.append(_open_tag(3, "region", attrs, True))
        lines.append("    </layout>")
        lines.append("  </head>")
    if tree.pars:
        lines.append("  <body>")
        for par in tree.pars:
            par_attrs = []
            if par.dur_ms is not None:
                par_attrs.append(("dur", format_clock(par.dur_ms)))
            if not par.media:
                lines.append(_open_tag(2, "par", par_attrs, True))
                continue
            lines.append(_open_tag(2, "par", par_attrs, False))
            for item in par.media:
                attrs = [("src", item.src)]
                if item.region_id is not None:
                    attrs.append(("region", item.region_id))
                if item.begin_ms != 0:
                    attrs.append(("begin", format_clock(item.begin_ms)))
                if item.dur_ms is not None:
                    attrs.append(("dur", format_clock(item.dur_ms)))
                if item.alt is not None:
                    attrs.append(("alt", item.alt))
                lines.append(_open_tag(3, _KIND_TO_ELEMENT[item.kind], attrs, True))
            lines.append("    </par>")
        lines.append("  </body>")
    else:
        lines.append("  <body/>")
    lines.append("</smil>")
    return "\r\n".join(lines) + "\r\n"
