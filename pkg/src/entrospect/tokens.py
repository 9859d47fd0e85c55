"""Line-oriented lexer for Java-like and C-like sources plus a token-pattern
classifier that assigns every physical line one of eight syntactic types.

Comments and whitespace never become tokens; string and character literals
are kept as single tokens. A block comment spanning several lines leaves
empty token lists on its interior lines.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

from .errors import TokenizeError

LANGUAGES = ("java_like", "c_like")


class TokenKind(str, enum.Enum):
    IDENTIFIER = "identifier"
    KEYWORD = "keyword"
    NUMBER = "number_literal"
    STRING = "string_literal"
    CHAR = "char_literal"
    OPERATOR = "operator"
    PUNCTUATION = "punctuation"


class LineType(str, enum.Enum):
    METHOD_SIGNATURE = "method_signature"
    CONTROL_FLOW = "control_flow"
    RETURN_STMT = "return_stmt"
    DECLARATION_ASSIGNMENT = "declaration_assignment"
    CALL_STMT = "call_stmt"
    BRACE_OR_EMPTY = "brace_or_empty"
    IMPORT_OR_INCLUDE = "import_or_include"
    OTHER = "other"


@dataclass(frozen=True)
class Token:
    text: str
    kind: TokenKind


@dataclass
class LineRecord:
    file: str
    line_no: int
    tokens: tuple[Token, ...]
    line_type: LineType = field(default=LineType.BRACE_OR_EMPTY)


JAVA_KEYWORDS = frozenset(
    """abstract assert boolean break byte case catch char class const continue
    default do double else enum extends final finally float for goto if
    implements import instanceof int interface long native new package private
    protected public return short static strictfp super switch synchronized
    this throw throws transient try void volatile while var record yield
    true false null""".split()
)

C_KEYWORDS = frozenset(
    """auto break case char const continue default do double else enum extern
    float for goto if inline int long register restrict return short signed
    sizeof static struct switch typedef union unsigned void volatile while
    _Bool _Complex _Imaginary""".split()
)

_KEYWORDS = {"java_like": JAVA_KEYWORDS, "c_like": C_KEYWORDS}

_CONTROL_KEYWORDS = frozenset(
    """if else for while do switch case default break continue goto
    try catch finally throw""".split()
)

_TYPEISH_KEYWORDS = frozenset(
    """void boolean byte char short int long float double unsigned signed
    struct enum union const static final abstract native synchronized strictfp
    public private protected inline extern register volatile var auto""".split()
)

_NUMBER_RE = re.compile(
    r"0[xX][0-9a-fA-F]+[uUlL]*|(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?[uUlLfFdD]*"
)
_IDENT_RE = re.compile(r"[A-Za-z_$][A-Za-z0-9_$]*")
_OPERATORS = sorted(
    [
        ">>>=", ">>=", "<<=", ">>>", "...", "->", "::", "==", "!=", "<=",
        ">=", "&&", "||", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=",
        "|=", "^=", "<<", ">>", "=", "+", "-", "*", "/", "%", "<", ">",
        "!", "~", "&", "|", "^", "?", ":",
    ],
    key=len,
    reverse=True,
)
_PUNCTUATION = frozenset("()[]{};,.@#")


def tokenize(source_text: str, language: str, file: str = "<memory>") -> list[LineRecord]:
    """Lex source text into one LineRecord per physical line, in file order.

    Raises TokenizeError for a string/char literal left open at end of line
    or a block comment left open at end of file.
    """
    if language not in LANGUAGES:
        raise ValueError(f"unknown language {language!r}, expected one of {LANGUAGES}")
    keywords = _KEYWORDS[language]
    records: list[LineRecord] = []
    in_block_comment = False
    block_comment_start = 0

    for line_no, raw in enumerate(source_text.splitlines(), start=1):
        tokens: list[Token] = []
        pos = 0
        n = len(raw)
        while pos < n:
            if in_block_comment:
                end = raw.find("*/", pos)
                if end < 0:
                    pos = n
                    break
                in_block_comment = False
                pos = end + 2
                continue
            ch = raw[pos]
            if ch in " \t\f\v\r":
                pos += 1
                continue
            if raw.startswith("//", pos):
                break
            if raw.startswith("/*", pos):
                in_block_comment = True
                block_comment_start = line_no
                pos += 2
                continue
            if ch == '"' or ch == "'":
                end = _scan_quoted(raw, pos, ch)
                if end < 0:
                    what = "string" if ch == '"' else "char"
                    raise TokenizeError(f"unterminated {what} literal", file, line_no)
                kind = TokenKind.STRING if ch == '"' else TokenKind.CHAR
                tokens.append(Token(raw[pos:end], kind))
                pos = end
                continue
            m = _NUMBER_RE.match(raw, pos)
            if m and (ch.isdigit() or (ch == "." and pos + 1 < n and raw[pos + 1].isdigit())):
                tokens.append(Token(m.group(), TokenKind.NUMBER))
                pos = m.end()
                continue
            m = _IDENT_RE.match(raw, pos)
            if m:
                text = m.group()
                kind = TokenKind.KEYWORD if text in keywords else TokenKind.IDENTIFIER
                tokens.append(Token(text, kind))
                pos = m.end()
                continue
            if ch in _PUNCTUATION:
                tokens.append(Token(ch, TokenKind.PUNCTUATION))
                pos += 1
                continue
            for op in _OPERATORS:
                if raw.startswith(op, pos):
                    tokens.append(Token(op, TokenKind.OPERATOR))
                    pos += len(op)
                    break
            else:
                # Unrecognized character (backslash, backtick, ...): keep it
                # rather than losing input.
                tokens.append(Token(ch, TokenKind.OPERATOR))
                pos += 1
        record = LineRecord(file=file, line_no=line_no, tokens=tuple(tokens))
        record.line_type = classify_line_type(record)
        records.append(record)

    if in_block_comment:
        raise TokenizeError("unterminated block comment", file, block_comment_start)
    return records


def _scan_quoted(raw: str, start: int, quote: str) -> int:
    """Return index one past the closing quote, or -1 if unterminated."""
    pos = start + 1
    n = len(raw)
    while pos < n:
        ch = raw[pos]
        if ch == "\\":
            pos += 2
            continue
        if ch == quote:
            return pos + 1
        pos += 1
    return -1


def classify_line_type(line: LineRecord) -> LineType:
    """Deterministic token-pattern classification; total over all inputs.

    Precedence when several patterns match: method signature, control flow,
    return, import/include, call, declaration/assignment, brace-only, other.
    """
    toks = line.tokens
    if not toks or all(t.text in "{}" for t in toks):
        return LineType.BRACE_OR_EMPTY
    if _is_method_signature(toks):
        return LineType.METHOD_SIGNATURE
    if any(t.kind is TokenKind.KEYWORD and t.text in _CONTROL_KEYWORDS for t in toks):
        return LineType.CONTROL_FLOW
    if any(t.kind is TokenKind.KEYWORD and t.text == "return" for t in toks):
        return LineType.RETURN_STMT
    first = toks[0]
    if first.text == "#" or (
        first.kind is TokenKind.KEYWORD and first.text in ("import", "package")
    ):
        return LineType.IMPORT_OR_INCLUDE
    if _has_call(toks):
        return LineType.CALL_STMT
    if _has_assignment(toks) or _is_plain_declaration(toks):
        return LineType.DECLARATION_ASSIGNMENT
    return LineType.OTHER


def _is_method_signature(toks: Sequence[Token]) -> bool:
    first = toks[0]
    if first.text == "#":
        return False
    if first.kind is TokenKind.KEYWORD and (
        first.text in _CONTROL_KEYWORDS or first.text in ("return", "import", "package", "new")
    ):
        return False
    paren = next((i for i, t in enumerate(toks) if t.text == "("), -1)
    if paren < 2:
        return False
    head = toks[:paren]
    if any(t.text in ("=", ".") for t in head):
        return False
    if toks[paren - 1].kind is not TokenKind.IDENTIFIER:
        return False
    return any(
        t.kind is TokenKind.IDENTIFIER
        or (t.kind is TokenKind.KEYWORD and t.text in _TYPEISH_KEYWORDS)
        for t in head[: paren - 1]
    )


def _has_call(toks: Sequence[Token]) -> bool:
    return any(
        toks[i].kind is TokenKind.IDENTIFIER and toks[i + 1].text == "("
        for i in range(len(toks) - 1)
    )


_NON_ASSIGN_OPS = frozenset(("==", "!=", "<=", ">="))


def _has_assignment(toks: Sequence[Token]) -> bool:
    return any(
        t.kind is TokenKind.OPERATOR
        and t.text.endswith("=")
        and t.text not in _NON_ASSIGN_OPS
        for t in toks
    )


def _is_plain_declaration(toks: Sequence[Token]) -> bool:
    if len(toks) < 3 or toks[-1].text != ";":
        return False
    head_ok = toks[0].kind is TokenKind.IDENTIFIER or (
        toks[0].kind is TokenKind.KEYWORD and toks[0].text in _TYPEISH_KEYWORDS
    )
    return head_ok and any(t.kind is TokenKind.IDENTIFIER for t in toks[1:])


def tokenize_file(path: str | Path, language: str, root: str | Path | None = None) -> list[LineRecord]:
    """Tokenize one file; the record key is the path relative to root."""
    path = Path(path)
    key = path.as_posix() if root is None else path.relative_to(root).as_posix()
    text = path.read_text(encoding="utf-8")
    return tokenize(text, language, file=key)


def dump_jsonl(lines: Iterable[LineRecord], fp: IO[str]) -> None:
    """Write one JSON object per line record: file, line_no, line_type, tokens."""
    for rec in lines:
        obj = {
            "file": rec.file,
            "line_no": rec.line_no,
            "line_type": rec.line_type.value,
            "tokens": [{"text": t.text, "kind": t.kind.value} for t in rec.tokens],
        }
        fp.write(json.dumps(obj, ensure_ascii=False) + "\n")
