"""In-memory triple store for the data-science API knowledge graph.

Terms follow a closed design: entities are ``ds:``-prefixed IRIs, predicates
come from a fixed ten-name vocabulary split into attribute relations (object
is a plain literal) and dependency relations (object is another entity).
Stores are built single-writer, then frozen; a frozen graph is immutable and
safe to share between threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Union

from .errors import DumpParseError, ValidationError

_IRI_RE = re.compile(r"^ds:[^\s.]+(\.[^\s.]+)*$")


@dataclass(frozen=True, order=True)
class Iri:
    """Entity identifier in the ``ds:<segment>(.<segment>)*`` scheme."""

    value: str

    def __post_init__(self):
        if not _IRI_RE.match(self.value):
            raise ValidationError(
                f"not a valid ds: identifier: {self.value!r}", field="iri"
            )


@dataclass(frozen=True, order=True)
class Literal:
    """Plain string literal, no language or datatype tags."""

    value: str


Term = Union[Iri, Literal]


class Predicate(Enum):
    HAS_NAME = "has_name"
    HAS_EXPRESSION = "has_expression"
    HAS_EXPLANATION = "has_explanation"
    HAS_PARAMETER = "hasParameter"
    HAS_RETURN = "hasReturn"
    HAS_TYPE = "hasType"
    HAS_POSITION = "hasPosition"
    HAS_OPTIONAL = "hasOptional"
    BELONGS_TO_LIBRARY = "belongsToLibrary"
    BELONGS_TO_MODULE = "belongsToModule"

    @classmethod
    def from_name(cls, name: str) -> "Predicate":
        for member in cls:
            if member.value == name:
                return member
        raise ValidationError(f"unknown predicate {name!r}", field="predicate")


# Dependency relations link two entities; everything else is an attribute
# relation whose object must be a literal.
DEPENDENCY_PREDICATES = frozenset(
    {
        Predicate.BELONGS_TO_LIBRARY,
        Predicate.BELONGS_TO_MODULE,
        Predicate.HAS_PARAMETER,
        Predicate.HAS_RETURN,
    }
)

# Literal may be empty only for explanation-type objects.
_EMPTYABLE_PREDICATES = frozenset({Predicate.HAS_EXPLANATION})


@dataclass(frozen=True)
class Triple:
    subject: Iri
    predicate: Predicate
    object: Term

    def __post_init__(self):
        dep = self.predicate in DEPENDENCY_PREDICATES
        if dep and not isinstance(self.object, Iri):
            raise ValidationError(
                f"dependency predicate {self.predicate.value} requires an IRI object",
                field="object",
            )
        if not dep and not isinstance(self.object, Literal):
            raise ValidationError(
                f"attribute predicate {self.predicate.value} requires a literal object",
                field="object",
            )
        if (
            isinstance(self.object, Literal)
            and not self.object.value
            and self.predicate not in _EMPTYABLE_PREDICATES
        ):
            raise ValidationError(
                f"empty literal not allowed for {self.predicate.value}",
                field="object",
            )

    def sort_key(self) -> tuple[str, str, str]:
        return (self.subject.value, self.predicate.value, format_term(self.object))


@dataclass(frozen=True)
class Variable:
    """Query variable, written ``?name`` in query text."""

    name: str

    def __post_init__(self):
        if not re.match(r"^[A-Za-z_]\w*$", self.name):
            raise ValidationError(f"bad variable name {self.name!r}", field="variable")


PatternTerm = Union[Iri, Literal, Variable]


@dataclass(frozen=True)
class TriplePattern:
    """Triple with any position optionally replaced by a variable."""

    subject: Union[Iri, Variable]
    predicate: Union[Predicate, Variable]
    object: PatternTerm

    def matches(self, t: Triple) -> dict[str, Term] | None:
        """Unify against a concrete triple; returns bindings or None."""
        bindings: dict[str, Term] = {}
        for pat, got in (
            (self.subject, t.subject),
            (self.predicate, t.predicate),
            (self.object, t.object),
        ):
            if isinstance(pat, Variable):
                value: Term
                if isinstance(got, Predicate):
                    value = Literal(got.value)
                else:
                    value = got
                if pat.name in bindings and bindings[pat.name] != value:
                    return None
                bindings[pat.name] = value
            elif pat != got:
                return None
        return bindings


@dataclass
class QueryMatch:
    bindings: dict[str, Term]
    triple: Triple


def format_term(term: Term) -> str:
    """Dump-format rendering: bare IRI or double-quoted escaped literal."""
    if isinstance(term, Iri):
        return term.value
    escaped = (
        term.value.replace("\\", "\\\\")
        .replace('"', '\\"')
        .replace("\n", "\\n")
        .replace("\r", "\\r")
    )
    return f'"{escaped}"'


def _unescape_literal(text: str, line_no: int) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            if i + 1 >= len(text):
                raise DumpParseError("dangling escape in literal", line_no)
            nxt = text[i + 1]
            if nxt == "n":
                out.append("\n")
            elif nxt == "r":
                out.append("\r")
            elif nxt in ('"', "\\"):
                out.append(nxt)
            else:
                raise DumpParseError(f"bad escape \\{nxt} in literal", line_no)
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


class KnowledgeGraph:
    """Set of triples with subject and predicate indexes plus library metadata.

    Mutation is only allowed before :meth:`freeze`; reads are always safe.
    """

    def __init__(self):
        self._triples: set[Triple] = set()
        self._by_subject: dict[Iri, set[Triple]] = {}
        self._by_predicate: dict[Predicate, set[Triple]] = {}
        self.meta: dict[str, str] = {}
        self._frozen = False

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(self._triples)

    def __contains__(self, t: Triple) -> bool:
        return t in self._triples

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return self._triples == other._triples and self.meta == other.meta

    @property
    def frozen(self) -> bool:
        return self._frozen

    def insert(self, t: Triple) -> None:
        """Add one triple; inserting an existing triple is a no-op."""
        if self._frozen:
            raise ValidationError("graph is frozen; no further inserts allowed")
        if t in self._triples:
            return
        self._triples.add(t)
        self._by_subject.setdefault(t.subject, set()).add(t)
        self._by_predicate.setdefault(t.predicate, set()).add(t)

    def insert_all(self, triples: Iterable[Triple]) -> None:
        for t in triples:
            self.insert(t)

    def set_library_version(self, library: str, version: str) -> None:
        if self._frozen:
            raise ValidationError("graph is frozen; no further inserts allowed")
        self.meta[library] = version

    def freeze(self) -> "KnowledgeGraph":
        """Validate graph-level invariants and make the store immutable."""
        for t in self._by_predicate.get(Predicate.HAS_PARAMETER, ()):
            has_expr = any(
                u.predicate is Predicate.HAS_EXPRESSION
                for u in self._by_subject.get(t.subject, ())
            )
            if not has_expr:
                raise ValidationError(
                    f"{t.subject.value} has hasParameter but no has_expression triple",
                    field="subject",
                )
        self._frozen = True
        return self

    def query(self, pattern: TriplePattern) -> list[QueryMatch]:
        """All triples unifying with the pattern, sorted by (s, p, o)."""
        if isinstance(pattern.subject, Iri):
            candidates: Iterable[Triple] = self._by_subject.get(pattern.subject, ())
        elif isinstance(pattern.predicate, Predicate):
            candidates = self._by_predicate.get(pattern.predicate, ())
        else:
            candidates = self._triples
        matches = []
        for t in candidates:
            bindings = pattern.matches(t)
            if bindings is not None:
                matches.append(QueryMatch(bindings=bindings, triple=t))
        matches.sort(key=lambda m: m.triple.sort_key())
        return matches

    def save_dump(self) -> str:
        """Canonical text dump: metadata headers, then bytewise-sorted lines."""
        lines = [
            f"# library={name} version={self.meta[name]}"
            for name in sorted(self.meta)
        ]
        body = sorted(
            f"{t.subject.value} {t.predicate.value} {format_term(t.object)}"
            for t in self._triples
        )
        lines.extend(body)
        return "\n".join(lines) + ("\n" if lines else "")


_HEADER_RE = re.compile(r"^#\s*library=(\S+)\s+version=(.*)$")


def load_dump(text: str) -> KnowledgeGraph:
    """Parse a dump produced by :meth:`KnowledgeGraph.save_dump`.

    Duplicate lines collapse to one triple. Raises DumpParseError with the
    offending line number on malformed input.
    """
    g = KnowledgeGraph()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith("#"):
            m = _HEADER_RE.match(line)
            if m:
                g.set_library_version(m.group(1), m.group(2))
            continue
        g.insert(_parse_dump_line(line, line_no))
    return g.freeze()


def _parse_dump_line(line: str, line_no: int) -> Triple:
    parts = line.split(" ", 2)
    if len(parts) != 3:
        raise DumpParseError("expected '<subject> <predicate> <object>'", line_no)
    subject_text, predicate_text, object_text = parts
    try:
        subject = Iri(subject_text)
        predicate = Predicate.from_name(predicate_text)
        obj: Term
        if object_text.startswith('"'):
            if not object_text.endswith('"') or len(object_text) < 2:
                raise DumpParseError("unterminated literal", line_no)
            obj = Literal(_unescape_literal(object_text[1:-1], line_no))
        else:
            obj = Iri(object_text)
        return Triple(subject, predicate, obj)
    except ValidationError as exc:
        raise DumpParseError(str(exc), line_no) from exc
