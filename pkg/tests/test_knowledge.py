import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knowmesh.errors import EmptyTerm, LevelConflict, NonCanonicalTerm, ParseError, UnknownPredicate
from knowmesh.knowledge import (
    KnowledgeLevel as L,
    KnowledgeStore,
    Observation,
    Triple,
    canonicalize_term,
    deserialize_store,
    is_canonical,
    serialize_store,
)

from oracles import brute_query, dfs_paths
from strategies import observations, terms, triples


def T(s, p, o, level=L.PRIMARY, source="SO1", at=0):
    return Triple(s, p, o, level, source, at)


def so2_store():
    store = KnowledgeStore("SO2")
    for e in ("normal", "active", "dormant"):
        store.assert_triple(T(e, "element_of", "event", source="SO2"))
    for a in ("lying_time", "swaps_per_hour", "step_count"):
        store.assert_triple(T(a, "element_of", "sensor", source="SO2"))
    return store


def merged_store():
    store = KnowledgeStore("SO1")
    for t in [
        T("swaps_per_hour", "measured_by", "sensor", L.SECONDARY),
        T("sensor", "unit_of", "device"),
        T("device", "carried_by", "user"),
        T("device", "carried_by", "patient", source="health_study"),
        T("user", "synonymous_to", "person", source="health_study"),
    ]:
        store.assert_triple(t)
    return store


class TestTerms:
    @pytest.mark.parametrize(
        "raw, expected",
        [("Lying time", "lying_time"), ("user", "user"), ("Swaps/hour", "swaps_per_hour"),
         ("  Step-Count ", "step_count"), ("a__b", "a_b")],
    )
    def test_canonicalize(self, raw, expected):
        assert canonicalize_term(raw) == expected

    @pytest.mark.parametrize("raw", ["", "   ", "!!", "__"])
    def test_empty(self, raw):
        with pytest.raises(EmptyTerm):
            canonicalize_term(raw)

    @given(st.text(max_size=30))
    def test_canonical_output_is_fixed_point(self, raw):
        try:
            out = canonicalize_term(raw)
        except EmptyTerm:
            return
        assert is_canonical(out)
        assert canonicalize_term(out) == out

    def test_triple_rejects_non_canonical(self):
        with pytest.raises(NonCanonicalTerm):
            Triple("Lying time", "element_of", "sensor")


class TestAssert:
    def test_primary_goes_to_ontology(self):
        store = KnowledgeStore()
        store.assert_triple(T("normal", "element_of", "event"))
        assert [t.key for t in store.ontology] == [("normal", "element_of", "event")]
        assert store.parameters == [] and store.hypotheses() == []

    def test_reassert_is_idempotent(self):
        store = so2_store()
        before = serialize_store(store)
        assert store.assert_triple(T("normal", "element_of", "event", source="SO2")) is False
        assert serialize_store(store) == before

    def test_invented_goes_to_hypotheses(self):
        store = KnowledgeStore()
        store.assert_triple(T("user", "synonymous_to", "person", L.INVENTED))
        assert store.level_of(("user", "synonymous_to", "person")) is L.INVENTED
        assert [h.key for h in store.hypotheses()] == [("user", "synonymous_to", "person")]
        assert store.ontology == []

    def test_level_conflict(self):
        store = so2_store()
        with pytest.raises(LevelConflict):
            store.assert_triple(T("normal", "element_of", "event", L.SECONDARY))

    def test_unknown_predicate(self):
        with pytest.raises(UnknownPredicate):
            KnowledgeStore().assert_triple(T("a", "likes", "b"))

    def test_provenance_accumulates_and_earliest_wins(self):
        store = KnowledgeStore()
        store.assert_triple(T("device", "carried_by", "user", source="SO1", at=7))
        store.assert_triple(T("device", "carried_by", "user", source="health_study", at=3))
        key = ("device", "carried_by", "user")
        assert store.provenance(key) == [("health_study", 3), ("SO1", 7)]
        assert store.get(key).source == "health_study"

    def test_functional_conflict(self):
        store = KnowledgeStore()
        store.assert_triple(T("x", "measured_by", "sensor", source="SO1"))
        store.assert_triple(T("x", "measured_by", "thermometer", source="SO2"))
        assert len(store.conflicts()) == 1


class TestQuery:
    def test_elements_of_event(self):
        hits = so2_store().query_triples(None, "element_of", "event")
        assert {t.subject for t in hits} == {"normal", "active", "dormant"}

    def test_empty_store(self):
        assert KnowledgeStore().query_triples("user", None, None) == []

    def test_carried_by(self):
        hits = merged_store().query_triples("device", "carried_by", None)
        assert {t.object for t in hits} == {"user", "patient"}

    def test_synonym_symmetric(self):
        hits = merged_store().query_triples("person", "synonymous_to", None)
        assert [t.key for t in hits] == [("user", "synonymous_to", "person")]

    def test_fully_unbound_needs_level(self):
        with pytest.raises(ValueError):
            KnowledgeStore().query_triples()

    @settings(max_examples=200)
    @given(st.lists(triples(), max_size=25), st.none() | terms, st.none() | st.sampled_from(
        ["element_of", "synonymous_to", "is_a", "carried_by"]), st.none() | terms,
        st.none() | st.sampled_from(list(L)))
    def test_matches_brute_force(self, ts, s, p, o, level):
        store = KnowledgeStore()
        kept = {}
        for t in ts:
            if store.level_of(t.key) in (None, t.level):
                store.assert_triple(t)
                kept[t.key] = store.get(t.key)
        if s is None and p is None and o is None and level is None:
            return
        got = {t.key for t in store.query_triples(s, p, o, level)}
        assert got == brute_query(kept.values(), s, p, o, level)


class TestPaths:
    def test_swaps_to_user(self):
        paths = merged_store().find_paths("swaps_per_hour", "user", 4)
        assert [e.key for e in paths[0]] == [
            ("swaps_per_hour", "measured_by", "sensor"),
            ("sensor", "unit_of", "device"),
            ("device", "carried_by", "user"),
        ]

    def test_identity(self):
        assert merged_store().find_paths("user", "user", 3) == [()]

    def test_bound_excludes(self):
        assert merged_store().find_paths("swaps_per_hour", "user", 1) == []

    @settings(max_examples=200)
    @given(st.lists(triples(), max_size=18), terms, terms, st.integers(1, 4))
    def test_matches_dfs(self, ts, start, end, max_len):
        store = KnowledgeStore()
        for t in ts:
            if store.level_of(t.key) in (None, t.level):
                store.assert_triple(t)
        edges = [t.key for t in store.triples()]
        got = [tuple(e.key for e in p) for p in store.find_paths(start, end, max_len)]
        assert set(got) == dfs_paths(edges, start, end, max_len)
        assert len(got) == len(set(got))
        assert got == sorted(got, key=lambda p: (len(p), list(p)))


class TestObservations:
    def test_local_not_quarantined(self):
        store = KnowledgeStore("SO1")
        store.record_observation(Observation("lying_time", 2.0, "h", "normal", 0, "SO1"))
        assert len(store.observations) == 1 and not store.observations[0].quarantined

    def test_peer_quarantined(self):
        store = KnowledgeStore("SO1")
        store.record_observation(Observation("lying_time", 2.0, "h", "normal", 0, "SO2"))
        assert store.observations[0].quarantined

    def test_order_preserved(self):
        store = KnowledgeStore("SO1")
        a = Observation("lying_time", 1.0, source="SO1")
        b = Observation("lying_time", 2.0, source="SO1", timestamp=1)
        store.record_observation(a)
        store.record_observation(b)
        assert store.observations == [a, b]

    @pytest.mark.parametrize("bad", [float("nan"), float("inf")])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(ValueError):
            Observation("x", bad)


class TestSerialization:
    def test_empty(self):
        assert serialize_store(KnowledgeStore()) == "knowmesh-store v1\n"

    def test_six_lines(self):
        text = serialize_store(so2_store())
        lines = text.splitlines()
        assert len(lines) == 7 and all(l.startswith("T\t") for l in lines[1:])
        assert lines[1:] == sorted(lines[1:])

    @settings(max_examples=300)
    @given(st.lists(triples(), max_size=20), st.lists(observations(), max_size=10),
           st.lists(st.tuples(st.integers(0, 40), st.integers(0, 40)), max_size=5))
    def test_round_trip(self, ts, obs, counters):
        store = KnowledgeStore()
        for t in ts:
            if store.level_of(t.key) in (None, t.level):
                store.assert_triple(t)
        for o in obs:
            store.record_observation(o)
        for h, (a, b) in zip(store.hypotheses(), counters):
            n = max(a, b)
            store.update_hypothesis(type(h)(h.triple, n, min(a, b)))
        text = serialize_store(store)
        back = deserialize_store(text)
        assert back == store
        assert serialize_store(back) == text

    @pytest.mark.parametrize(
        "text, line",
        [("nope\n", 1), ("knowmesh-store v1\nT\tprimary\ta\tb\n", 2),
         ("knowmesh-store v1\nT\tprimary\ta\tis_a\tb\tSO1\t0\nX\n", 3)],
    )
    def test_parse_errors_carry_line(self, text, line):
        with pytest.raises(ParseError, match=f"line {line}"):
            deserialize_store(text)
