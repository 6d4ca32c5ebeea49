import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmstack.smil.syntax import (
    LexError,
    ParseCode,
    ParseError,
    SerializeError,
    TokenKind,
    parse,
    parse_clock,
    parse_dimension,
    parse_text,
    serialize,
    tokenize,
)
from mmstack.smil.tree import (
    Dimension,
    MediaKind,
    Par,
    SmilTree,
    Unit,
    default_tree,
    validate,
)

from helpers import random_tree


# -- tokenizer ---------------------------------------------------------

def kinds(tokens):
    return [t.kind for t in tokens]


def test_tokenize_minimal_document():
    tokens = tokenize("<smil></smil>")
    assert kinds(tokens) == [TokenKind.TAG_OPEN, TokenKind.TAG_CLOSE, TokenKind.EOF]
    assert tokens[0].lexeme == "smil"
    assert tokens[1].lexeme == "smil"


def test_tokenize_self_closing_with_attribute():
    tokens = tokenize('<par dur="5s"/>')
    assert kinds(tokens) == [TokenKind.TAG_OPEN, TokenKind.ATTR_NAME,
                             TokenKind.ATTR_VALUE, TokenKind.TAG_SELF_CLOSE,
                             TokenKind.EOF]
    assert [t.lexeme for t in tokens[:3]] == ["par", "dur", "5s"]


def test_tokenize_truncated_tag_fails():
    with pytest.raises(LexError) as err:
        tokenize('<img src=')
    assert err.value.line == 1


def test_tokenize_positions_monotonic():
    text = '<smil>\n  <body>\n    <par dur="5s"/>\n  </body>\n</smil>'
    tokens = tokenize(text)
    positions = [(t.line, t.column) for t in tokens]
    assert positions == sorted(positions)
    assert tokens[-1].kind is TokenKind.EOF


def test_tokenize_entities_decoded():
    tokens = tokenize('<img src="a&amp;b&lt;&gt;&quot;"/>')
    assert tokens[2].lexeme == 'a&b<>"'


def test_tokenize_unknown_entity_fails():
    with pytest.raises(LexError):
        tokenize('<img src="&nbsp;"/>')


def test_tokenize_unterminated_value_fails():
    with pytest.raises(LexError):
        tokenize('<img src="abc')


# -- clock values and dimensions ---------------------------------------

@pytest.mark.parametrize("text,expected", [
    ("5s", 5000),
    ("5", 5000),
    ("300ms", 300),
    ("1.5s", 1500),
    ("0.0605s", 61),   # rounds half up: 60.5 -> 61
    ("2.0004s", 2000),
    ("0s", 0),
])
def test_parse_clock(text, expected):
    assert parse_clock(text) == expected


@pytest.mark.parametrize("text", ["abc", "-5s", "5 s", "1.5", "ms", "5sms", ""])
def test_parse_clock_rejects(text):
    with pytest.raises(ParseError) as err:
        parse_clock(text)
    assert err.value.code is ParseCode.BAD_CLOCK_VALUE


@pytest.mark.parametrize("text,expected", [
    ("160", Dimension(160, Unit.PIXELS)),
    ("160px", Dimension(160, Unit.PIXELS)),
    ("50%", Dimension(50, Unit.PERCENT)),
    ("37.5%", Dimension(37.5, Unit.PERCENT)),
])
def test_parse_dimension(text, expected):
    assert parse_dimension(text) == expected


@pytest.mark.parametrize("text", ["1.5", "-3", "abc", "%", "12pc"])
def test_parse_dimension_rejects(text):
    with pytest.raises(ParseError) as err:
        parse_dimension(text)
    assert err.value.code is ParseCode.BAD_DIMENSION


# -- parser -------------------------------------------------------------

def test_parse_empty_body_document():
    tree = parse_text("<smil><body/></smil>")
    assert tree.layout.is_empty()
    assert tree.pars == []


def test_parse_structural_example():
    text = ('<smil><head><layout><root-layout width="160" height="120"/>'
            '<region id="Image" width="100%" height="50%"/></layout></head>'
            '<body><par dur="5s"><img src="a.jpg" region="Image"/></par></body></smil>')
    tree = parse_text(text)
    assert (tree.layout.root_width, tree.layout.root_height) == (160, 120)
    assert len(tree.layout.regions) == 1
    region = tree.layout.regions[0]
    assert region.id == "Image"
    assert region.left == Dimension(0, Unit.PIXELS)      # defaulted
    assert region.width == Dimension(100, Unit.PERCENT)
    assert len(tree.pars) == 1
    par = tree.pars[0]
    assert par.dur_ms == 5000
    assert len(par.media) == 1
    assert par.media[0].kind is MediaKind.IMAGE
    assert par.media[0].src == "a.jpg"
    assert par.media[0].region_id == "Image"


def test_parse_bad_clock_is_error():
    with pytest.raises(ParseError) as err:
        parse_text('<smil><body><par dur="abc"/></body></smil>')
    assert err.value.code is ParseCode.BAD_CLOCK_VALUE


def test_parse_unknown_element_strict():
    with pytest.raises(ParseError) as err:
        parse_text("<smil><body><seq/></body></smil>")
    assert err.value.code is ParseCode.UNKNOWN_ELEMENT


def test_parse_unknown_element_lenient_skips_subtree():
    warnings = []
    tree = parse_text(
        '<smil><body><seq><par dur="9s"/></seq><par dur="5s"/></body></smil>',
        lenient=True, on_warning=warnings.append)
    assert len(tree.pars) == 1
    assert tree.pars[0].dur_ms == 5000
    assert len(warnings) == 1 and "seq" in warnings[0]


def test_parse_missing_src_is_error():
    with pytest.raises(ParseError) as err:
        parse_text('<smil><body><par><img region="Image"/></par></body></smil>')
    assert err.value.code is ParseCode.UNEXPECTED_TOKEN
    assert "src" in err.value.detail


def test_parse_unbalanced_tags():
    with pytest.raises(ParseError) as err:
        parse_text("<smil><body><par>")
    assert err.value.code is ParseCode.UNCLOSED


def test_parse_mismatched_close():
    with pytest.raises(ParseError) as err:
        parse_text("<smil><body></par></body></smil>")
    assert err.value.code is ParseCode.UNCLOSED


def test_parse_end_attribute_becomes_duration():
    tree = parse_text('<smil><body><par><text src="t" begin="2s" end="6s"/>'
                      "</par></body></smil>")
    item = tree.pars[0].media[0]
    assert (item.begin_ms, item.dur_ms) == (2000, 4000)


def test_parse_end_before_begin_is_error():
    with pytest.raises(ParseError) as err:
        parse_text('<smil><body><par><text src="t" begin="6s" end="2s"/>'
                    "</par></body></smil>")
    assert err.value.code is ParseCode.BAD_CLOCK_VALUE


def test_parse_conformance_left_to_validate():
    # two images in one par is a syntax-level success
    tree = parse_text('<smil><body><par><img src="a"/><img src="b"/></par>'
                      "</body></smil>")
    assert len(tree.pars[0].media) == 2
    assert validate(tree)  # conformance stage flags it


def test_error_positions_inside_input():
    text = '<smil>\n  <body>\n    <par dur="abc"/>\n  </body>\n</smil>'
    with pytest.raises(ParseError) as err:
        parse_text(text)
    lines = text.split("\n")
    assert 1 <= err.value.line <= len(lines)
    assert 1 <= err.value.column <= len(lines[err.value.line - 1]) + 1


# -- serializer ----------------------------------------------------------

def test_serialize_canonical_form():
    text = serialize(default_tree())
    assert text.endswith("\r\n")
    assert "\n" not in text.replace("\r\n", "")
    assert '<region id="Image" left="0" top="0" width="100%" height="50%"/>' in text


def test_serialize_duration_canonicalization():
    tree = SmilTree(pars=[Par(dur_ms=5000)])
    assert 'dur="5000ms"' in serialize(tree)


def test_serialize_rejects_invalid_tree():
    tree = SmilTree(pars=[Par(dur_ms=0)])
    with pytest.raises(SerializeError):
        serialize(tree)


def test_default_tree_round_trips():
    tree = default_tree()
    assert parse(tokenize(serialize(tree))) == tree


def test_round_trip_random_trees():
    rng = random.Random(99)
    for _ in range(250):
        tree = random_tree(rng)
        text = serialize(tree)
        again = parse(tokenize(text))
        assert again == tree
        assert serialize(again) == text  # fixpoint


def test_canonical_reconstruction_from_tokens():
    # Token lexemes plus the grammar's fixed punctuation rebuild the text
    # up to the whitespace the tokenizer skips.
    import re

    tree = random_tree(random.Random(5))
    text = serialize(tree)
    rebuilt = []
    tokens = tokenize(text)
    i = 0
    while tokens[i].kind is not TokenKind.EOF:
        tok = tokens[i]
        if tok.kind is TokenKind.TAG_OPEN:
            rebuilt.append(f"<{tok.lexeme}")
            i += 1
            while tokens[i].kind is TokenKind.ATTR_NAME:
                name, value = tokens[i].lexeme, tokens[i + 1].lexeme
                for raw, esc in (("&", "&amp;"), ("<", "&lt;"),
                                 (">", "&gt;"), ('"', "&quot;")):
                    value = value.replace(raw, esc)
                rebuilt.append(f' {name}="{value}"')
                i += 2
            if tokens[i].kind is TokenKind.TAG_SELF_CLOSE:
                rebuilt.append("/>")
                i += 1
            else:
                rebuilt.append(">")
        elif tok.kind is TokenKind.TAG_CLOSE:
            rebuilt.append(f"</{tok.lexeme}>")
            i += 1
        else:
            rebuilt.append(tok.lexeme)
            i += 1
    assert "".join(rebuilt) == re.sub(r"\r\n *", "", text)


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=10**7))
def test_clock_format_parse_identity(ms):
    assert parse_clock(f"{ms}ms") == ms
