import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from randgen import materialize_view, random_corpus, random_pattern
from xpnet.catalog import (
    AlreadyPublishedError,
    CatalogError,
    NotFoundError,
    ViewDef,
    make_view_id,
)
from xpnet.overlay import Network
from xpnet.pattern import evaluate_pattern, parse_pattern, parse_query
from xpnet.rewriter import doc_lookup_terms
from xpnet.synopsis import estimate_contribution
from xpnet.xml_model import Term

from conftest import make_world


class TestPublishDocument:
    def test_fixture_put_counts(self, d1):
        net, cat, _ = make_world(["p0", "p1"], [])
        cat.publish_document(net.peer("p0"), d1)
        term_keys = [k for k in net.storage if k.startswith("term:")]
        syn_keys = [k for k in net.storage if k.startswith("syn:")]
        assert len(term_keys) == 6
        assert syn_keys == ["syn:d1"]

    def test_minimal_document(self):
        from xpnet.xml_model import parse_document

        net, cat, _ = make_world(["p0"], [])
        cat.publish_document(net.peer("p0"), parse_document("<a/>", "tiny"))
        assert sum(1 for k in net.storage if k.startswith("term:")) == 1
        assert "syn:tiny" in net.storage

    def test_duplicate_uri_rejected(self, d1):
        net, cat, _ = make_world(["p0"], [d1])
        with pytest.raises(AlreadyPublishedError):
            cat.publish_document(net.peer("p0"), d1)


class TestLookupDocuments:
    def test_intersection(self, world):
        net, cat, _ = world
        got = cat.lookup_documents(
            net.peer("p0"), {Term("label", "book"), Term("word", "smith")}
        )
        assert got == ["d1"]

    def test_shared_term(self, world):
        net, cat, _ = world
        got = cat.lookup_documents(net.peer("p0"), {Term("label", "book")})
        assert got == ["d1", "d2"]

    def test_unknown_term(self, world):
        net, cat, _ = world
        assert cat.lookup_documents(net.peer("p0"), {Term("word", "zzz")}) == []

    def test_empty_terms_rejected(self, world):
        net, cat, _ = world
        with pytest.raises(CatalogError):
            cat.lookup_documents(net.peer("p0"), set())


class TestViews:
    def make_view(self, cat, net, text, holder="p0"):
        pattern = parse_pattern(text)
        p = net.peer(holder)
        view = ViewDef(make_view_id(pattern, p), pattern, p, estimated_bytes=8)
        cat.advertise_view(view)
        return view

    def test_advertise_under_label_key(self, world):
        net, cat, _ = world
        self.make_view(cat, net, "(//author {val})")
        assert "view:author" in net.storage

    def test_wildcard_reserved_key(self, world):
        net, cat, _ = world
        self.make_view(cat, net, "(//* {cont})")
        assert "view:*" in net.storage

    def test_lookup_round_trip(self, world):
        net, cat, _ = world
        v = self.make_view(cat, net, "(//author {val})")
        got = cat.lookup_views(net.peer("p1"), parse_query("(//book (/author {val}))"))
        assert [g.view_id for g in got] == [v.view_id]

    def test_lookup_misses_unrelated(self, world):
        net, cat, _ = world
        self.make_view(cat, net, "(//author {val})")
        assert cat.lookup_views(net.peer("p1"), parse_query("(//year {val})")) == []

    def test_wildcard_views_always_returned(self, world):
        net, cat, _ = world
        v = self.make_view(cat, net, "(//* {cont})")
        got = cat.lookup_views(net.peer("p1"), parse_query("(//year {val})"))
        assert [g.view_id for g in got] == [v.view_id]

    def test_dedup_by_view_id(self, world):
        net, cat, _ = world
        v = self.make_view(cat, net, "(//book (/title {val}))")
        got = cat.lookup_views(net.peer("p0"), parse_query("(//book (/title {val}))"))
        assert len(got) == 1 and got[0].view_id == v.view_id

    def test_duplicate_advertise_rejected(self, world):
        net, cat, _ = world
        v = self.make_view(cat, net, "(//author {val})")
        with pytest.raises(CatalogError):
            cat.advertise_view(v)

    def test_retract_removes_all_entries(self, world):
        net, cat, _ = world
        v = self.make_view(cat, net, "(//book (/title {val}))")
        cat.retract_view(v.view_id)
        marker = v.view_id.encode()
        for key, entries in net.storage.items():
            if key.startswith("view:"):
                assert all(marker not in e for e in entries)
        assert cat.lookup_views(net.peer("p0"), parse_query("(//book (/title {val}))")) == []

    def test_retract_keeps_siblings(self, world):
        net, cat, _ = world
        a = self.make_view(cat, net, "(//title {val})", "p0")
        b = self.make_view(cat, net, "(//title {cont})", "p1")
        cat.retract_view(a.view_id)
        got = cat.lookup_views(net.peer("p0"), parse_query("(//title {val})"))
        assert [g.view_id for g in got] == [b.view_id]

    def test_retract_unknown(self, world):
        _, cat, _ = world
        with pytest.raises(NotFoundError):
            cat.retract_view("feedfacefeedface")


class TestSynopses:
    def test_fetch_round_trip(self, world, d1):
        net, cat, _ = world
        s = cat.fetch_synopsis(net.peer("p2"), "d1")
        p = parse_pattern("(//author {id,val})")
        assert estimate_contribution(s, p) == estimate_contribution(
            cat.local_synopses["d1"], p
        )

    def test_fetch_unknown(self, world):
        net, cat, _ = world
        with pytest.raises(NotFoundError):
            cat.fetch_synopsis(net.peer("p0"), "nope")

    def test_fetch_charges_adaptation(self, world):
        net, cat, _ = world
        before = net.metrics.global_totals()["adaptation"]["bytes"]
        cat.fetch_synopsis(net.peer("p2"), "d1")
        assert net.metrics.global_totals()["adaptation"]["bytes"] > before


class TestExtents:
    def test_store_and_fetch(self, world, corpus):
        net, cat, _ = world
        v = materialize_view(
            cat, parse_pattern("(//author {val})"), net.peer("p0"), corpus
        )
        t = cat.extent(v.view_id)
        assert {row[0] for row in t.rows} == {"Smith", "Lee"}
        assert v.actual_bytes == 8

    def test_missing_extent(self, world):
        _, cat, _ = world
        with pytest.raises(NotFoundError):
            cat.extent("feedfacefeedface")


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=30, deadline=None)
def test_index_completeness(seed):
    """Documents with a non-empty pattern extent are always found by the
    label-term lookup (possibly with false positives)."""
    rng = random.Random(seed)
    docs = random_corpus(rng, max_docs=6, max_nodes=20)
    net, cat, _ = make_world(["p0", "p1"], docs)
    for _ in range(4):
        pattern = random_pattern(rng, max_nodes=3)
        terms = doc_lookup_terms(pattern)
        located = (
            set(cat.lookup_documents(net.peer("p0"), terms))
            if terms
            else set(cat.all_uris())
        )
        for d in docs:
            if evaluate_pattern(d, pattern).rows:
                assert d.uri in located
