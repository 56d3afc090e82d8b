"""Turn structured API documentation records into knowledge-graph triples.

One documented function becomes one entity with attribute triples (name,
expression, explanation) and dependency triples to its library and module;
each parameter and return value becomes its own entity hanging off the
function. Entity names follow ``<api>_parameter_<name>`` and
``<api>_return_<index>``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError
from .kg import Iri, KnowledgeGraph, Literal, Predicate, Triple


@dataclass(frozen=True)
class ParamRecord:
    name: str
    position: int
    dtype: str
    explanation: str = ""
    optional: bool = False


@dataclass(frozen=True)
class ReturnRecord:
    index: int
    dtype: str
    explanation: str = ""


@dataclass(frozen=True)
class ApiRecord:
    """One documented API function as read from the ingestion file."""

    qualified_name: str
    expression: str
    explanation: str
    library: str
    module: str
    url: str = ""
    parameters: tuple[ParamRecord, ...] = ()
    returns: tuple[ReturnRecord, ...] = ()

    def __post_init__(self):
        name = self.qualified_name
        if not name:
            raise ValidationError(
                f"record {name!r}: empty qualified_name", field="qualified_name"
            )
        if not (name == self.library or name.startswith(self.library + ".")):
            raise ValidationError(
                f"record {name!r}: qualified_name does not start with "
                f"library {self.library!r}",
                field="qualified_name",
            )
        if not self.expression:
            raise ValidationError(
                f"record {name!r}: empty expression", field="expression"
            )
        positions = [p.position for p in self.parameters]
        if positions != list(range(len(positions))):
            raise ValidationError(
                f"record {name!r}: parameter positions must be 0..n-1 in order, "
                f"got {positions}",
                field="parameters",
            )
        indices = [r.index for r in self.returns]
        if len(set(indices)) != len(indices):
            raise ValidationError(
                f"record {name!r}: duplicate return indices {indices}",
                field="returns",
            )


def ingest_record(record: ApiRecord) -> list[Triple]:
    """Deterministic triple emission for one record."""
    api = Iri(f"ds:{record.qualified_name}")
    triples = [
        Triple(api, Predicate.HAS_NAME, Literal(record.qualified_name)),
        Triple(api, Predicate.HAS_EXPRESSION, Literal(record.expression)),
        Triple(api, Predicate.HAS_EXPLANATION, Literal(record.explanation)),
        Triple(api, Predicate.BELONGS_TO_LIBRARY, Iri(f"ds:{record.library}")),
        Triple(api, Predicate.BELONGS_TO_MODULE, Iri(f"ds:{record.module}")),
    ]
    for param in record.parameters:
        entity = Iri(f"ds:{record.qualified_name}_parameter_{param.name}")
        triples.append(Triple(api, Predicate.HAS_PARAMETER, entity))
        triples.append(Triple(entity, Predicate.HAS_TYPE, Literal(param.dtype)))
        triples.append(
            Triple(entity, Predicate.HAS_POSITION, Literal(str(param.position)))
        )
        triples.append(
            Triple(
                entity,
                Predicate.HAS_OPTIONAL,
                Literal("true" if param.optional else "false"),
            )
        )
        triples.append(
            Triple(entity, Predicate.HAS_EXPLANATION, Literal(param.explanation))
        )
    for ret in record.returns:
        entity = Iri(f"ds:{record.qualified_name}_return_{ret.index}")
        triples.append(Triple(api, Predicate.HAS_RETURN, entity))
        triples.append(Triple(entity, Predicate.HAS_TYPE, Literal(ret.dtype)))
        triples.append(
            Triple(entity, Predicate.HAS_EXPLANATION, Literal(ret.explanation))
        )
    return triples


def record_from_json(obj: dict) -> ApiRecord:
    try:
        parameters = tuple(
            ParamRecord(
                name=p["name"],
                position=int(p["position"]),
                dtype=p["dtype"],
                explanation=p.get("explanation", ""),
                optional=bool(p.get("optional", False)),
            )
            for p in obj.get("parameters", [])
        )
        returns = tuple(
            ReturnRecord(
                index=int(r["index"]),
                dtype=r["dtype"],
                explanation=r.get("explanation", ""),
            )
            for r in obj.get("returns", [])
        )
        return ApiRecord(
            qualified_name=obj["qualified_name"],
            expression=obj["expression"],
            explanation=obj.get("explanation", ""),
            library=obj["library"],
            module=obj["module"],
            url=obj.get("url", ""),
            parameters=parameters,
            returns=returns,
        )
    except KeyError as exc:
        raise ValidationError(f"missing key {exc.args[0]!r}", field=exc.args[0])


@dataclass
class CorpusResult:
    """Outcome of ingesting a line-delimited record file."""

    graph: KnowledgeGraph
    n_records: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def ingest_corpus(path: str | Path, versions: dict[str, str] | None = None) -> CorpusResult:
    """Ingest every record in the file; bad lines are reported, not fatal.

    The returned graph is frozen. ``versions`` optionally pins library
    versions into the graph metadata.
    """
    graph = KnowledgeGraph()
    result = CorpusResult(graph=graph)
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            result.errors.append((line_no, f"bad JSON: {exc.msg}"))
            continue
        try:
            record = record_from_json(obj)
            graph.insert_all(ingest_record(record))
        except ValidationError as exc:
            result.errors.append((line_no, str(exc)))
            continue
        result.n_records += 1
    for library, version in (versions or {}).items():
        graph.set_library_version(library, version)
    graph.freeze()
    return result
