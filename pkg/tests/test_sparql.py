import random

import pytest

from dsrepair.errors import QuerySyntaxError
from dsrepair.kg import Iri, KnowledgeGraph, Literal, Predicate, Triple, Variable
from dsrepair.sparql import SelectQuery, execute_select, format_select, parse_select

from test_kg import random_store


def flipud_store():
    g = KnowledgeGraph()
    flipud = Iri("ds:numpy.flipud")
    g.insert(Triple(flipud, Predicate.HAS_EXPRESSION, Literal("numpy.flipud(m)")))
    g.insert(Triple(flipud, Predicate.HAS_NAME, Literal("numpy.flipud")))
    g.insert(Triple(flipud, Predicate.BELONGS_TO_LIBRARY, Iri("ds:numpy")))
    split = Iri("ds:numpy.array_split")
    g.insert(
        Triple(split, Predicate.HAS_EXPRESSION, Literal("numpy.array_split(ary, indices_or_sections, axis=0)"))
    )
    g.insert(Triple(split, Predicate.BELONGS_TO_LIBRARY, Iri("ds:numpy")))
    return g.freeze()


def test_parse_single_pattern():
    q = parse_select("SELECT ?o WHERE { ds:numpy.flipud has_expression ?o }")
    assert q.variables == ("o",)
    assert len(q.patterns) == 1
    pattern = q.patterns[0]
    assert pattern.subject == Iri("ds:numpy.flipud")
    assert pattern.predicate is Predicate.HAS_EXPRESSION
    assert pattern.object == Variable("o")


def test_missing_brace_is_syntax_error_at_end():
    with pytest.raises(QuerySyntaxError) as err:
        parse_select("SELECT ?o WHERE { ds:numpy.flipud has_expression ?o")
    assert "expected '}'" in str(err.value)


def test_unknown_predicate_reports_position():
    with pytest.raises(QuerySyntaxError) as err:
        parse_select("SELECT ?o WHERE { ds:numpy.flipud has_banana ?o }")
    assert "unknown predicate" in str(err.value)
    assert err.value.line == 1
    assert err.value.column > 1


def test_literal_escape_parsing():
    q = parse_select('SELECT ?s WHERE { ?s has_expression "f(\\"x\\")" }')
    assert q.patterns[0].object == Literal('f("x")')


def test_select_star_and_trailing_dot():
    q = parse_select("SELECT * WHERE { ?s has_name ?n . }")
    assert q.variables is None
    assert len(q.patterns) == 1


def test_round_trips_through_canonical_printer():
    queries = [
        "SELECT ?o WHERE { ds:numpy.flipud has_expression ?o }",
        "SELECT ?s ?o WHERE { ?s belongsToLibrary ds:numpy . ?s has_expression ?o }",
        'SELECT * WHERE { ?s ?p "x y" }',
    ]
    for text in queries:
        q = parse_select(text)
        assert parse_select(format_select(q)) == q


def test_single_subject_lookup_finds_expression():
    g = flipud_store()
    q = parse_select("SELECT ?o WHERE { ds:numpy.flipud has_expression ?o }")
    rows = execute_select(g, q)
    assert rows == [{"o": Literal("numpy.flipud(m)")}]


def independent_two_pattern_join(triples, p1, p2):
    """Oracle: double loop over the full store, merging consistent bindings."""
    rows = []
    for t1 in triples:
        b1 = p1.matches(t1)
        if b1 is None:
            continue
        for t2 in triples:
            b2 = p2.matches(t2)
            if b2 is None:
                continue
            shared = set(b1) & set(b2)
            if any(b1[name] != b2[name] for name in shared):
                continue
            merged = dict(b1)
            merged.update(b2)
            rows.append(merged)
    return rows


def as_multiset(rows, names):
    from dsrepair.kg import format_term

    rendered = [tuple(format_term(row[n]) for n in names if n in row) for row in rows]
    return sorted(rendered)


def test_two_pattern_join_matches_nested_loop_oracle():
    g = flipud_store()
    q = parse_select(
        "SELECT ?s ?o WHERE { ?s belongsToLibrary ds:numpy . ?s has_expression ?o }"
    )
    rows = execute_select(g, q)
    oracle = independent_two_pattern_join(list(g), q.patterns[0], q.patterns[1])
    assert as_multiset(rows, ["s", "o"]) == as_multiset(oracle, ["s", "o"])
    assert len(rows) == 2


def test_randomized_joins_match_oracle():
    rng = random.Random(23)
    for case in range(20):
        g, triples = random_store(rng, rng.randrange(20, 120))
        predicate = rng.choice(list(Predicate))
        q = SelectQuery(
            variables=None,
            patterns=(
                parse_select(f"SELECT * WHERE {{ ?s {predicate.value} ?o }}").patterns[0],
                parse_select("SELECT * WHERE { ?s has_expression ?e }").patterns[0],
            ),
        )
        rows = execute_select(g, q)
        oracle = independent_two_pattern_join(triples, q.patterns[0], q.patterns[1])
        assert as_multiset(rows, ["s", "o", "e"]) == as_multiset(oracle, ["s", "o", "e"])


def test_execution_is_deterministic():
    g = flipud_store()
    q = parse_select("SELECT ?s WHERE { ?s belongsToLibrary ds:numpy }")
    first = repr(execute_select(g, q))
    second = repr(execute_select(g, q))
    assert first == second
