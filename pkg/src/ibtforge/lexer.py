"""Whitespace-invariant line tokenizer for the C/C++ subset found in
competitive-programming corpora.

A line is rendered canonically as its tokens joined by single spaces, so any
two spellings of the same token stream compare equal. String and char
literals keep their interior spacing and are padded with one boundary space
on each side (the padding convention used by line-level translation corpora);
:func:`unpad_literals` reverses the padding when a line has to be fed to a
real compiler.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum

log = logging.getLogger(__name__)


class TokenKind(str, Enum):
    IDENTIFIER = "identifier"
    KEYWORD = "keyword"
    NUMBER = "number-literal"
    STRING = "string-literal"
    CHAR = "char-literal"
    PUNCTUATOR = "punctuator"
    PREPROCESSOR = "preprocessor"


@dataclass(frozen=True)
class Token:
    text: str
    kind: TokenKind


@dataclass(frozen=True)
class TokenizedLine:
    tokens: tuple[Token, ...]
    canonical: str
    diagnostics: tuple[str, ...] = ()


KEYWORDS = frozenset(
    """
    auto break case char const continue default do double else enum extern
    float for goto if inline int long register restrict return short signed
    sizeof static struct switch typedef union unsigned void volatile while
    bool catch class constexpr delete explicit export false friend mutable
    namespace new noexcept nullptr operator private protected public template
    this throw true try typeid typename using virtual wchar_t
    const_cast dynamic_cast reinterpret_cast static_cast static_assert
    """.split()
)

# Longest-match operator tables; three-char entries must be probed first.
_OPS3 = ("<<=", ">>=", "...", "->*")
_OPS2 = (
    "==", "<<", ">>", "<=", ">=", "!=", "&&", "||", "::", "->",
    "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "##",
)

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(
    r"""
    (?: 0[xX][0-9a-fA-F]+(?:\.[0-9a-fA-F]*)?(?:[pP][+-]?[0-9]+)?
      | (?:[0-9]+\.[0-9]*|\.[0-9]+|[0-9]+)(?:[eE][+-]?[0-9]+)?
    )
    [uUlLfF]*
    """,
    re.VERBOSE,
)

_WS = " \t\f\v"


def _pad_interior(interior: str) -> str:
    # Idempotent: an interior already carrying boundary spaces is kept as-is.
    if len(interior) >= 2 and interior[0] in " \t" and interior[-1] in " \t":
        return interior
    return " " + interior + " "


def _scan_literal(raw: str, start: int) -> tuple[str, int, bool]:
    """Scan a quoted literal beginning at ``raw[start]``.

    Returns (interior, index past the literal, closed?). Escapes are honored;
    an unterminated literal consumes the rest of the line.
    """
    quote = raw[start]
    i = start + 1
    n = len(raw)
    while i < n:
        c = raw[i]
        if c == "\\":
            i += 2
            continue
        if c == quote:
            return raw[start + 1 : i], i + 1, True
        i += 1
    return raw[start + 1 :], n, False


def tokenize_line(raw: str) -> TokenizedLine:
    """Tokenize a single source line (no embedded newline).

    Comments are stripped, multi-character operators are matched longest
    first, and literals become single tokens. An unterminated literal is
    reported in ``diagnostics`` and kept verbatim as one literal token so
    dirty corpus lines never halt the pipeline.
    """
    tokens: list[Token] = []
    diagnostics: list[str] = []
    i = 0
    n = len(raw)
    expect_header = False
    while i < n:
        c = raw[i]
        if c in _WS:
            i += 1
            continue
        if c == "/" and raw.startswith("//", i):
            break
        if c == "/" and raw.startswith("/*", i):
            end = raw.find("*/", i + 2)
            if end == -1:
                break
            i = end + 2
            continue
        if expect_header and c == "<":
            close = raw.find(">", i + 1)
            if close != -1:
                name = "".join(raw[i + 1 : close].split())
                tokens.append(Token("<" + name + ">", TokenKind.PREPROCESSOR))
                i = close + 1
                expect_header = False
                continue
            # no closing '>': fall through to ordinary punctuator lexing
        if c == '"' or c == "'":
            interior, i, closed = _scan_literal(raw, i)
            kind = TokenKind.STRING if c == '"' else TokenKind.CHAR
            if not closed:
                diagnostics.append(f"unterminated literal at column {i - len(interior)}")
                tokens.append(Token(c + interior, kind))
            elif expect_header and c == '"':
                # quoted header-name: keep verbatim, no boundary padding
                tokens.append(Token(c + interior + c, kind))
            else:
                tokens.append(Token(c + _pad_interior(interior) + c, kind))
            expect_header = False
            continue
        expect_header = False
        if c == "#" and not tokens:
            j = i + 1
            while j < n and raw[j] in _WS:
                j += 1
            m = _IDENT_RE.match(raw, j)
            directive = m.group(0) if m else ""
            tokens.append(Token("#" + directive, TokenKind.PREPROCESSOR))
            i = m.end() if m else j
            if directive in ("include", "include_next"):
                expect_header = True
            continue
        if c.isdigit() or (c == "." and i + 1 < n and raw[i + 1].isdigit()):
            m = _NUMBER_RE.match(raw, i)
            assert m is not None
            tokens.append(Token(m.group(0), TokenKind.NUMBER))
            i = m.end()
            continue
        m = _IDENT_RE.match(raw, i)
        if m:
            text = m.group(0)
            kind = TokenKind.KEYWORD if text in KEYWORDS else TokenKind.IDENTIFIER
            tokens.append(Token(text, kind))
            i = m.end()
            continue
        op = next((o for o in _OPS3 if raw.startswith(o, i)), None)
        if op is None:
            op = next((o for o in _OPS2 if raw.startswith(o, i)), None)
        if op is None:
            op = c
        tokens.append(Token(op, TokenKind.PUNCTUATOR))
        i += len(op)
    if diagnostics:
        log.warning("tokenize_line: %s in %r", "; ".join(diagnostics), raw)
    return TokenizedLine(
        tokens=tuple(tokens),
        canonical=" ".join(t.text for t in tokens),
        diagnostics=tuple(diagnostics),
    )


def canonicalize(raw: str) -> str:
    """Render a line as its tokens joined by single spaces."""
    return tokenize_line(raw).canonical


def unpad_literals(line: str) -> str:
    """Undo the boundary-space padding inside string/char literals.

    Inverse of the padding applied by :func:`tokenize_line`; used when a
    canonical line is materialized into compilable source text.
    """
    rendered: list[str] = []
    for tok in tokenize_line(line).tokens:
        text = tok.text
        if tok.kind in (TokenKind.STRING, TokenKind.CHAR) and len(text) >= 2 and text[-1] == text[0]:
            interior = text[1:-1]
            if len(interior) >= 2 and interior[0] == " " and interior[-1] == " ":
                text = text[0] + interior[1:-1] + text[0]
        rendered.append(text)
    return " ".join(rendered)


def strip_comments(text: str) -> str:
    """Remove ``//`` and ``/* */`` comments from whole-file text.

    Literal-aware; block comments may span lines and are replaced by a single
    space so adjacent tokens stay separated.
    """
    out: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "/" and text.startswith("//", i):
            j = text.find("\n", i)
            i = n if j == -1 else j
            continue
        if c == "/" and text.startswith("/*", i):
            j = text.find("*/", i + 2)
            out.append(" ")
            i = n if j == -1 else j + 2
            continue
        if c == '"' or c == "'":
            interior, end, closed = _scan_literal(text, i)
            stop = text.find("\n", i)
            if not closed or (stop != -1 and end > stop):
                # never let a literal swallow a newline; treat to end of line
                end = n if stop == -1 else stop
            out.append(text[i:end])
            i = end
            continue
        out.append(c)
        i += 1
    return "".join(out)
