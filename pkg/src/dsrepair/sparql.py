"""Basic-graph-pattern subset of SPARQL over the knowledge graph.

Grammar::

    query    := 'SELECT' vars 'WHERE' '{' pattern ( '.' pattern )* '}'
    vars     := '*' | variable+
    pattern  := term term term
    term     := iri | literal | variable

No FILTER, OPTIONAL, prefixes, or datatypes. All retrieval needs here are
exact-subject lookups and one-hop joins on shared variables.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import QuerySyntaxError, ValidationError
from .kg import (
    Iri,
    KnowledgeGraph,
    Literal,
    PatternTerm,
    Predicate,
    Term,
    TriplePattern,
    Variable,
    format_term,
)


@dataclass(frozen=True)
class SelectQuery:
    variables: tuple[str, ...] | None  # None means SELECT *
    patterns: tuple[TriplePattern, ...]


@dataclass(frozen=True)
class _Token:
    kind: str  # var | iri | literal | word | punct
    text: str
    line: int
    column: int


def _tokenize(query: str) -> list[_Token]:
    tokens = []
    line = 1
    col = 1
    i = 0
    n = len(query)
    while i < n:
        ch = query[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch.isspace():
            col += 1
            i += 1
            continue
        start_line, start_col = line, col
        if ch in "{}.":
            tokens.append(_Token("punct", ch, start_line, start_col))
            i += 1
            col += 1
            continue
        if ch == '"':
            j = i + 1
            buf = []
            while j < n:
                c = query[j]
                if c == "\\":
                    if j + 1 >= n:
                        raise QuerySyntaxError("dangling escape", line, col + (j - i))
                    nxt = query[j + 1]
                    buf.append({"n": "\n", "r": "\r"}.get(nxt, nxt))
                    j += 2
                    continue
                if c == '"':
                    break
                if c == "\n":
                    raise QuerySyntaxError("unterminated literal", start_line, start_col)
                buf.append(c)
                j += 1
            else:
                raise QuerySyntaxError("unterminated literal", start_line, start_col)
            tokens.append(_Token("literal", "".join(buf), start_line, start_col))
            col += (j + 1) - i
            i = j + 1
            continue
        # bare word: variable, iri, keyword, predicate name, or *
        j = i
        while j < n and not query[j].isspace() and query[j] not in '{}"':
            # '.' ends a token only when it is the pattern separator,
            # i.e. surrounded by whitespace; inside ds:a.b it is part of it
            if query[j] == "." and (j + 1 >= n or query[j + 1].isspace()):
                break
            j += 1
        word = query[i:j]
        if word.startswith("?"):
            tokens.append(_Token("var", word[1:], start_line, start_col))
        else:
            kind = "iri" if word.startswith("ds:") else "word"
            tokens.append(_Token(kind, word, start_line, start_col))
        col += j - i
        i = j
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token], text: str):
        self.tokens = tokens
        self.pos = 0
        end_line = text.count("\n") + 1
        last = text.rsplit("\n", 1)[-1]
        self.end = (end_line, len(last) + 1)

    def _error(self, message: str, token: _Token | None = None):
        if token is None:
            raise QuerySyntaxError(message, *self.end)
        raise QuerySyntaxError(message, token.line, token.column)

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> _Token:
        tok = self.peek()
        if tok is None:
            self._error("unexpected end of input")
        self.pos += 1
        return tok

    def expect_word(self, word: str) -> None:
        tok = self.peek()
        if tok is None:
            self._error(f"expected {word!r} at end of input")
        if tok.kind != "word" or tok.text.upper() != word:
            self._error(f"expected {word!r}, found {tok.text!r}", tok)
        self.pos += 1

    def expect_punct(self, punct: str) -> None:
        tok = self.peek()
        if tok is None:
            self._error(f"expected {punct!r} at end of input")
        if tok.kind != "punct" or tok.text != punct:
            self._error(f"expected {punct!r}, found {tok.text!r}", tok)
        self.pos += 1


def parse_select(query: str) -> SelectQuery:
    """Parse a SELECT query; raises QuerySyntaxError with line/column."""
    tokens = _tokenize(query)
    p = _Parser(tokens, query)
    p.expect_word("SELECT")

    variables: tuple[str, ...] | None
    tok = p.peek()
    if tok is not None and tok.kind == "word" and tok.text == "*":
        p.take()
        variables = None
    else:
        names = []
        while (tok := p.peek()) is not None and tok.kind == "var":
            names.append(p.take().text)
        if not names:
            p._error("expected one or more ?variables or *", p.peek())
        variables = tuple(names)

    p.expect_word("WHERE")
    p.expect_punct("{")

    patterns = [_parse_pattern(p)]
    while (tok := p.peek()) is not None and tok.kind == "punct" and tok.text == ".":
        p.take()
        # trailing '.' before '}' is tolerated, as in SPARQL
        nxt = p.peek()
        if nxt is not None and nxt.kind == "punct" and nxt.text == "}":
            break
        patterns.append(_parse_pattern(p))
    p.expect_punct("}")
    if p.peek() is not None:
        p._error(f"trailing input {p.peek().text!r}", p.peek())
    return SelectQuery(variables=variables, patterns=tuple(patterns))


def _parse_pattern(p: _Parser) -> TriplePattern:
    subject = _parse_term(p, position="subject")
    predicate = _parse_term(p, position="predicate")
    obj = _parse_term(p, position="object")
    return TriplePattern(subject=subject, predicate=predicate, object=obj)  # type: ignore[arg-type]


def _parse_term(p: _Parser, position: str) -> PatternTerm | Predicate:
    tok = p.take()
    if tok.kind == "var":
        return Variable(tok.text)
    if tok.kind == "literal":
        if position != "object":
            p._error(f"literal not allowed in {position} position", tok)
        return Literal(tok.text)
    if tok.kind == "iri":
        if position == "predicate":
            p._error("predicate must be a bare vocabulary name or variable", tok)
        try:
            return Iri(tok.text)
        except ValidationError as exc:
            p._error(str(exc), tok)
    if tok.kind == "word":
        if position != "predicate":
            p._error(f"unexpected {tok.text!r} in {position} position", tok)
        try:
            return Predicate.from_name(tok.text)
        except ValidationError:
            p._error(f"unknown predicate name {tok.text!r}", tok)
    p._error(f"unexpected token {tok.text!r}", tok)
    raise AssertionError("unreachable")


def format_select(query: SelectQuery) -> str:
    """Canonical printer; parse_select(format_select(q)) == q."""
    if query.variables is None:
        vars_text = "*"
    else:
        vars_text = " ".join(f"?{v}" for v in query.variables)
    pattern_texts = [
        f"{_format_pattern_term(p.subject)} {_format_pattern_term(p.predicate)} "
        f"{_format_pattern_term(p.object)}"
        for p in query.patterns
    ]
    return f"SELECT {vars_text} WHERE {{ " + " . ".join(pattern_texts) + " }"


def _format_pattern_term(term) -> str:
    if isinstance(term, Variable):
        return f"?{term.name}"
    if isinstance(term, Predicate):
        return term.value
    return format_term(term)


def execute_select(g: KnowledgeGraph, query: SelectQuery) -> list[dict[str, Term]]:
    """Run a conjunctive query; nested-loop join on shared variables.

    Rows are projected onto the selected variables and returned sorted by
    their rendered values, so identical stores yield identical output.
    """
    rows: list[dict[str, Term]] = [{}]
    for pattern in query.patterns:
        next_rows = []
        for row in rows:
            bound = _substitute(pattern, row)
            for match in g.query(bound):
                merged = dict(row)
                merged.update(match.bindings)
                next_rows.append(merged)
        rows = next_rows
    if query.variables is not None:
        rows = [
            {name: row[name] for name in query.variables if name in row}
            for row in rows
        ]
    rows.sort(key=lambda r: tuple(format_term(v) for _, v in sorted(r.items())))
    return rows


def _substitute(pattern: TriplePattern, bindings: dict[str, Term]) -> TriplePattern:
    def sub(term):
        if isinstance(term, Variable) and term.name in bindings:
            return bindings[term.name]
        return term

    subject = sub(pattern.subject)
    predicate = pattern.predicate
    if isinstance(predicate, Variable) and predicate.name in bindings:
        value = bindings[predicate.name]
        if isinstance(value, Literal):
            predicate = Predicate.from_name(value.value)
    return TriplePattern(subject=subject, predicate=predicate, object=sub(pattern.object))
