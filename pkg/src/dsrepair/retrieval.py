"""Extract API calls from buggy code, resolve aliases, and verbalize
knowledge-graph answers into prompt-ready sentences.

Extraction is purely lexical (regular expressions over the source text), so
it works on code that does not parse. Only module-rooted call chains can be
resolved; receiver-typed calls like ``df.groupby(...)`` are reported with
their raw chain and surface downstream as unresolved.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

from .kg import Iri, KnowledgeGraph, Literal, Predicate, TriplePattern, Variable
from .templates import render

ImportMap = dict[str, str]

_IMPORT_LINE_RE = re.compile(r"^[ \t]*import[ \t]+([^\n#]+)", re.MULTILINE)
_FROM_IMPORT_RE = re.compile(
    r"^[ \t]*from[ \t]+([.\w]+)[ \t]+import[ \t]+(\([^)]*\)|[^\n#]+)",
    re.MULTILINE,
)
_CALL_RE = re.compile(r"(?<![\w.])([A-Za-z_]\w*(?:\.[A-Za-z_]\w*)*)[ \t]*\(")


class RichnessLevel(Enum):
    EXPRESSION_ONLY = "expression_only"
    PLUS_EXPLANATION = "plus_explanation"
    PLUS_PARAMS_RETURNS = "plus_params_returns"
    PLUS_BOTH = "plus_both"


@dataclass(frozen=True)
class ApiInvocation:
    raw_chain: str
    qualified_name: str
    source_line: int
    resolved: bool


@dataclass
class ApiKnowledge:
    """Verbalized knowledge blocks in first-occurrence order."""

    blocks: list[str] = field(default_factory=list)
    unresolved: list[str] = field(default_factory=list)

    def rendered(self) -> str:
        return "\n".join(self.blocks)


def harvest_imports(code: str) -> ImportMap:
    """Alias -> qualified-name map from import statements. Later wins."""
    imports: ImportMap = {}
    for m in _IMPORT_LINE_RE.finditer(code):
        for item in m.group(1).split(","):
            item = item.strip()
            if not item:
                continue
            if " as " in item:
                target, alias = (part.strip() for part in item.split(" as ", 1))
                imports[alias] = target
            else:
                imports[item] = item
                # `import a.b` also binds the package root
                root = item.split(".", 1)[0]
                imports.setdefault(root, root)
    for m in _FROM_IMPORT_RE.finditer(code):
        module = m.group(1)
        if module.startswith("."):
            continue  # relative imports are not lexically resolvable
        items = m.group(2).strip().strip("()")
        for item in items.split(","):
            item = item.strip()
            if not item or item == "*":
                continue
            if " as " in item:
                name, alias = (part.strip() for part in item.split(" as ", 1))
                imports[alias] = f"{module}.{name}"
            else:
                imports[item] = f"{module}.{item}"
    return imports


def resolve_chain(chain: str, imports: ImportMap) -> str | None:
    """Map a call chain to its qualified name via its longest known prefix."""
    parts = chain.split(".")
    for cut in range(len(parts), 0, -1):
        prefix = ".".join(parts[:cut])
        if prefix in imports:
            rest = parts[cut:]
            return ".".join([imports[prefix]] + rest)
    return None


def extract_invocations(code: str) -> tuple[ImportMap, list[ApiInvocation]]:
    """All call chains in source order, resolved where possible.

    Dotted chains are always reported; bare names only when a from-import
    binds them. Deduplicated by qualified name, first occurrence kept.
    """
    imports = harvest_imports(code)
    seen: set[str] = set()
    invocations: list[ApiInvocation] = []
    for m in _CALL_RE.finditer(code):
        chain = m.group(1)
        line = code.count("\n", 0, m.start()) + 1
        qualified = resolve_chain(chain, imports)
        if qualified is None:
            if "." not in chain:
                continue
            invocation = ApiInvocation(chain, chain, line, resolved=False)
        else:
            invocation = ApiInvocation(chain, qualified, line, resolved=True)
        if invocation.qualified_name in seen:
            continue
        seen.add(invocation.qualified_name)
        invocations.append(invocation)
    return imports, invocations


def _attribute(g: KnowledgeGraph, subject: Iri, predicate: Predicate) -> str | None:
    matches = g.query(TriplePattern(subject, predicate, Variable("o")))
    for m in matches:
        obj = m.triple.object
        if isinstance(obj, Literal):
            return obj.value
    return None


def retrieve(
    g: KnowledgeGraph, invocation: ApiInvocation, level: RichnessLevel
) -> list[str] | None:
    """Verbalized sentences for one invocation, or None when not in the KG."""
    subject = Iri(f"ds:{invocation.qualified_name}")
    expression = _attribute(g, subject, Predicate.HAS_EXPRESSION)
    if expression is None:
        return None
    sentences = [
        render("api_expression", name=invocation.qualified_name, expression=expression)
    ]
    if level in (RichnessLevel.PLUS_EXPLANATION, RichnessLevel.PLUS_BOTH):
        explanation = _attribute(g, subject, Predicate.HAS_EXPLANATION) or ""
        sentences.append(
            render(
                "api_explanation",
                name=invocation.qualified_name,
                explanation=explanation,
            )
        )
    if level in (RichnessLevel.PLUS_PARAMS_RETURNS, RichnessLevel.PLUS_BOTH):
        sentences.extend(_parameter_sentences(g, subject, invocation.qualified_name))
        sentences.extend(_return_sentences(g, subject, invocation.qualified_name))
    return sentences


def _parameter_sentences(g: KnowledgeGraph, subject: Iri, api: str) -> list[str]:
    prefix = f"ds:{api}_parameter_"
    entries = []
    for m in g.query(TriplePattern(subject, Predicate.HAS_PARAMETER, Variable("p"))):
        entity = m.triple.object
        assert isinstance(entity, Iri)
        name = entity.value[len(prefix):] if entity.value.startswith(prefix) else entity.value
        position = _attribute(g, entity, Predicate.HAS_POSITION) or "0"
        dtype = _attribute(g, entity, Predicate.HAS_TYPE) or ""
        optional = _attribute(g, entity, Predicate.HAS_OPTIONAL) == "true"
        explanation = _attribute(g, entity, Predicate.HAS_EXPLANATION) or ""
        entries.append((int(position), name, dtype, optional, explanation))
    entries.sort()
    return [
        render(
            "api_parameter",
            name=name,
            api=api,
            position=str(position),
            dtype=dtype,
            optionality="optional" if optional else "required",
            explanation=explanation,
        )
        for position, name, dtype, optional, explanation in entries
    ]


def _return_sentences(g: KnowledgeGraph, subject: Iri, api: str) -> list[str]:
    prefix = f"ds:{api}_return_"
    entries = []
    for m in g.query(TriplePattern(subject, Predicate.HAS_RETURN, Variable("r"))):
        entity = m.triple.object
        assert isinstance(entity, Iri)
        index = entity.value[len(prefix):] if entity.value.startswith(prefix) else "0"
        dtype = _attribute(g, entity, Predicate.HAS_TYPE) or ""
        explanation = _attribute(g, entity, Predicate.HAS_EXPLANATION) or ""
        entries.append((int(index), dtype, explanation))
    entries.sort()
    return [
        render(
            "api_return",
            index=str(index),
            api=api,
            dtype=dtype,
            explanation=explanation,
        )
        for index, dtype, explanation in entries
    ]


def gather_knowledge(
    g: KnowledgeGraph,
    invocations: list[ApiInvocation],
    level: RichnessLevel = RichnessLevel.EXPRESSION_ONLY,
    failing_first: bool = False,
    failing_source: str = "",
) -> ApiKnowledge:
    """One knowledge block per resolved invocation, source order.

    With ``failing_first`` the invocations whose raw chain occurs in the
    failing statement come first (stable order otherwise).
    """
    ordered = list(invocations)
    if failing_first and failing_source:
        ordered.sort(
            key=lambda inv: 0 if inv.raw_chain in failing_source else 1
        )
    knowledge = ApiKnowledge()
    for invocation in ordered:
        sentences = retrieve(g, invocation, level)
        if sentences is None:
            knowledge.unresolved.append(invocation.qualified_name)
        else:
            knowledge.blocks.append("\n".join(sentences))
    return knowledge


def retrieve_plain_text(
    documents: Iterable[str], keyword: str, window_tokens: int = 50
) -> list[str]:
    """Text-window baseline: per document, the window of ``window_tokens``
    whitespace tokens around the keyword's first occurrence.

    The window shifts to stay inside the document, so it is exactly
    ``window_tokens`` long unless the document itself is shorter.
    """
    windows = []
    for document in documents:
        tokens = document.split()
        hit = next((i for i, tok in enumerate(tokens) if keyword in tok), None)
        if hit is None:
            continue
        before = (window_tokens - 1) // 2
        start = min(max(0, hit - before), max(0, len(tokens) - window_tokens))
        windows.append(" ".join(tokens[start:start + window_tokens]))
    return windows


def load_text_corpus(directory: str | Path) -> list[str]:
    """Documents for the plain-text baseline: every *.txt file, name order."""
    return [
        p.read_text(encoding="utf-8")
        for p in sorted(Path(directory).glob("*.txt"))
    ]
