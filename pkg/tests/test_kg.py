"""Knowledge graph: loading, entity matching, path enumeration, verbalization."""

from __future__ import annotations

import io

import pytest
from hypothesis import assume, given, strategies as st

from dxcouncil.errors import (
    DanglingReferenceError,
    EmptyMentionError,
    KgLoadError,
    PathEndpointsError,
    UnknownConceptError,
    VerbalizationError,
)
from dxcouncil.gateway import (
    Gateway,
    ReplayChatBackend,
    RecordingBackend,
    ScriptedResponder,
    TaskKind,
    TranscriptRecorder,
)
from dxcouncil.kg import (
    Concept,
    Edge,
    KnowledgeGraph,
    load_kg,
    normalize_term,
    term_tokens,
    verbalize_path,
)

from conftest import make_graph, scripted_gateway


CONCEPTS_TSV = (
    "# id\tname\tsynonyms\ttypes\n"
    "c1\tJaundice\tyellow skin|icterus\tFinding\n"
    "c2\tCholestasis\t\tMechanism\n"
    "c3\tPrimary biliary cholangitis\tPBC\tDisease\n"
)
TRIPLES_TSV = (
    "c1\tindicates\tc2\n"
    "c2\tleads_to\tc3\n"
)


def test_load_counts_concepts_and_edges():
    g = load_kg(io.StringIO(TRIPLES_TSV), io.StringIO(CONCEPTS_TSV))
    assert g.concept_count == 3
    assert g.edge_count == 2
    assert g.concept("c1").preferred_name == "Jaundice"
    assert g.concept("c3").synonyms == frozenset({"PBC"})


def test_duplicated_triple_counted_once():
    g = load_kg(io.StringIO(TRIPLES_TSV + "c1\tindicates\tc2\n"),
                io.StringIO(CONCEPTS_TSV))
    assert g.edge_count == 2


def test_dangling_reference_is_an_error():
    with pytest.raises(DanglingReferenceError) as exc:
        load_kg(io.StringIO(TRIPLES_TSV + "c1\tindicates\tc9\n"),
                io.StringIO(CONCEPTS_TSV))
    assert exc.value.concept_id == "c9"


def test_malformed_concept_line_reports_position():
    with pytest.raises(KgLoadError):
        load_kg(io.StringIO(""), io.StringIO("c1\tonly two fields\n"))


def test_duplicate_concept_id_rejected():
    bad = CONCEPTS_TSV + "c1\tAnother\t\t\n"
    with pytest.raises(KgLoadError):
        load_kg(io.StringIO(TRIPLES_TSV), io.StringIO(bad))


def test_unknown_concept_lookup():
    g = load_kg(io.StringIO(TRIPLES_TSV), io.StringIO(CONCEPTS_TSV))
    with pytest.raises(UnknownConceptError):
        g.concept("nope")
    assert not g.has_concept("nope")


# -- entity matching ---------------------------------------------------------

def test_exact_synonym_outranks_token_overlap():
    g = make_graph(
        ["alt", "ast"],
        [],
        names={"alt": "Alanine aminotransferase increased",
               "ast": "Elevated AST"},
        synonyms={"alt": frozenset({"Elevated ALT"})},
    )
    matches = g.match_entity("Elevated ALT", limit=5)
    assert matches[0].concept.id == "alt"
    assert matches[0].kind == "exact_synonym"
    assert matches[0].score == 1.0
    # the token-overlap neighbour is still offered, but strictly after
    assert [m.concept.id for m in matches] == ["alt", "ast"]
    assert matches[1].kind == "token_overlap"


def test_punctuation_and_case_normalize_to_exact_match():
    g = make_graph(["c1"], [], names={"c1": "Jaundice"})
    matches = g.match_entity("jaundice!!")
    assert matches[0].concept.id == "c1"
    assert matches[0].kind == "exact_name"
    assert matches[0].score == 1.0


def test_zero_overlap_concepts_excluded():
    g = make_graph(["c1"], [], names={"c1": "Jaundice"})
    assert g.match_entity("splenomegaly") == []


def test_match_entity_rejects_bad_arguments():
    g = make_graph(["c1"], [], names={"c1": "Jaundice"})
    with pytest.raises(ValueError):
        g.match_entity("jaundice", limit=0)
    with pytest.raises(EmptyMentionError):
        g.match_entity("!!!")


def _oracle_match(graph: KnowledgeGraph, mention: str, limit: int):
    """Brute-force reimplementation of the documented ranking."""
    mention_norm = normalize_term(mention)
    mtoks = term_tokens(mention)
    rows = []
    for concept in graph.concepts():
        if normalize_term(concept.preferred_name) == mention_norm:
            rows.append((0, -1.0, concept.id))
            continue
        if any(normalize_term(s) == mention_norm for s in concept.synonyms):
            rows.append((1, -1.0, concept.id))
            continue
        best = 0.0
        for name in concept.matchable_names():
            ntoks = term_tokens(name)
            if ntoks and (mtoks | ntoks):
                best = max(best, len(mtoks & ntoks) / len(mtoks | ntoks))
        if best > 0.0:
            rows.append((2, -best, concept.id))
    rows.sort()
    return [(cid, -neg, tier) for tier, neg, cid in rows[:limit]]


@pytest.mark.parametrize("mention", [
    "liver pain", "elevated alt", "Jaundice", "hepatitis B surface antigen",
    "itching of the skin", "fluid in the abdomen", "PBC", "fatty liver",
])
def test_top3_ranking_matches_brute_force(fixture_graph, mention):
    got = fixture_graph.match_entity(mention, limit=3)
    want = _oracle_match(fixture_graph, mention, 3)
    assert [(m.concept.id, m.score, {"exact_name": 0, "exact_synonym": 1,
                                     "token_overlap": 2}[m.kind]) for m in got] == want


@given(tokens=st.lists(
    st.sampled_from(["liver", "elevated", "pain", "chronic", "hepatitis",
                     "abdominal", "fluid", "skin", "b", "antigen"]),
    min_size=1, max_size=4))
def test_exact_tiers_always_sort_before_overlap(fixture_graph, tokens):
    mention = " ".join(tokens)
    tiers = [{"exact_name": 0, "exact_synonym": 1, "token_overlap": 2}[m.kind]
             for m in fixture_graph.match_entity(mention, limit=50)]
    assert tiers == sorted(tiers)


# -- path enumeration --------------------------------------------------------

def test_two_route_example_ordered_shortest_first():
    g = make_graph(["A", "B", "C"],
                   [("A", "r1", "B"), ("B", "r2", "C"), ("A", "r3", "C")])
    paths = g.enumerate_paths("A", "C", h_max=3)
    assert [p.edge_key() for p in paths] == [
        (("A", "r3", "C"),),
        (("A", "r1", "B"), ("B", "r2", "C")),
    ]
    assert paths[0].describe() == "A --[r3]--> C"
    assert paths[1].describe() == "A --[r1]--> B --[r2]--> C"


def test_h_max_one_keeps_only_direct_hop():
    g = make_graph(["A", "B", "C"],
                   [("A", "r1", "B"), ("B", "r2", "C"), ("A", "r3", "C")])
    paths = g.enumerate_paths("A", "C", h_max=1)
    assert [p.edge_key() for p in paths] == [(("A", "r3", "C"),)]


def test_disconnected_endpoints_yield_no_paths():
    g = make_graph(["A", "B", "C"], [("A", "r1", "B")])
    assert g.enumerate_paths("A", "C", h_max=3) == []


def test_enumerate_paths_argument_errors():
    g = make_graph(["A", "B"], [("A", "r1", "B")])
    with pytest.raises(ValueError):
        g.enumerate_paths("A", "B", h_max=0)
    with pytest.raises(PathEndpointsError):
        g.enumerate_paths("A", "A", h_max=2)
    with pytest.raises(UnknownConceptError):
        g.enumerate_paths("A", "Z", h_max=2)


def _oracle_simple_paths(graph: KnowledgeGraph, start: str, end: str, h_max: int):
    """Exhaustive recursive enumeration of bounded simple directed paths."""
    found = []

    def walk(node, used, acc):
        if len(acc) == h_max:
            return
        for edge in graph.out_edges(node):
            if edge.target == end:
                found.append(tuple(e.as_triple() for e in acc + [edge]))
            elif edge.target not in used:
                walk(edge.target, used | {edge.target}, acc + [edge])

    walk(start, {start}, [])
    return found


@st.composite
def random_graph_query(draw):
    n = draw(st.integers(min_value=2, max_value=12))
    ids = [f"n{i}" for i in range(n)]
    raw = draw(st.lists(
        st.tuples(st.sampled_from(ids), st.sampled_from(["r1", "r2", "r3"]),
                  st.sampled_from(ids)),
        max_size=30))
    edges = [(s, r, t) for s, r, t in raw if s != t]
    start = draw(st.sampled_from(ids))
    end = draw(st.sampled_from([i for i in ids if i != start]))
    h_max = draw(st.sampled_from([1, 2, 3]))
    return ids, edges, start, end, h_max


@given(random_graph_query())
def test_enumeration_complete_simple_bounded_and_deterministic(query):
    ids, edges, start, end, h_max = query
    g = make_graph(ids, edges)
    paths = g.enumerate_paths(start, end, h_max=h_max)
    keys = [p.edge_key() for p in paths]

    assert set(keys) == set(_oracle_simple_paths(g, start, end, h_max))
    assert len(keys) == len(set(keys))
    for p in paths:
        nodes = [p.start] + [e.target for e in p.hops]
        assert len(set(nodes)) == len(nodes)
        assert 1 <= len(p.hops) <= h_max
    # documented order: length ascending, then (relation, target) pairs
    assert keys == sorted(keys, key=lambda k: (len(k), tuple((r, t) for _, r, t in k)))
    assert [p.edge_key() for p in g.enumerate_paths(start, end, h_max=h_max)] == keys


def test_path_structure_validation():
    e1, e2 = Edge("A", "r", "B"), Edge("B", "r", "C")
    with pytest.raises(ValueError):
        from dxcouncil.kg import KnowledgePath
        KnowledgePath(hops=(), start="A", end="A")
    from dxcouncil.kg import KnowledgePath
    with pytest.raises(ValueError):
        KnowledgePath(hops=(e1,), start="A", end="C")
    with pytest.raises(ValueError):
        KnowledgePath(hops=(e1, Edge("C", "r", "D")), start="A", end="D")
    ok = KnowledgePath(hops=(e1, e2), start="A", end="C")
    assert ok.edge_key() == (("A", "r", "B"), ("B", "r", "C"))


# -- verbalization -----------------------------------------------------------

def test_verbalization_stores_the_scripted_sentence():
    g = make_graph(["A", "B"], [("A", "causes", "B")])
    path = g.enumerate_paths("A", "B", h_max=1)[0]
    gw = scripted_gateway([(TaskKind.VERBALIZE, "A --[causes]--> B", "A causes B.")])
    out = verbalize_path(path, gw)
    assert out.verbalization == "A causes B."
    assert path.verbalization == ""  # input untouched


def test_empty_verbalization_is_an_error():
    g = make_graph(["A", "B"], [("A", "causes", "B")])
    path = g.enumerate_paths("A", "B", h_max=1)[0]
    gw = scripted_gateway([(TaskKind.VERBALIZE, "", "   ")])
    with pytest.raises(VerbalizationError):
        verbalize_path(path, gw)


def test_verbalization_replays_identically(tmp_path):
    g = make_graph(["A", "B"], [("A", "causes", "B")])
    path = g.enumerate_paths("A", "B", h_max=1)[0]
    transcript = tmp_path / "t.jsonl"

    recorder = TranscriptRecorder(transcript)
    recording = Gateway(RecordingBackend(
        ScriptedResponder([(TaskKind.VERBALIZE, "", "A causes B.")]), recorder))
    recorded = verbalize_path(path, recording)
    recorder.close()

    replaying = Gateway(ReplayChatBackend.from_file(transcript))
    replayed = verbalize_path(path, replaying)
    assert replayed.verbalization == recorded.verbalization == "A causes B."
