import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from randgen import materialize_view, random_corpus, random_query, random_views
from xpnet.pattern import evaluate_query, parse_pattern, parse_query
from xpnet.rewriter import (
    DocShip,
    ExecutionError,
    Navigate,
    Project,
    Select,
    ViewScan,
    doc_lookup_terms,
    plan_leaves,
    plan_to_dict,
)
from xpnet.xml_model import Term

from conftest import make_world


def view_scan_leaves(plan):
    return [l for l in plan_leaves(plan) if isinstance(l, ViewScan)]


def find_ops(plan, cls):
    found = []

    def walk(node):
        if isinstance(node, cls):
            found.append(node)
        for attr in ("input", "left", "right"):
            child = getattr(node, attr, None)
            if child is not None:
                walk(child)

    walk(plan)
    return found


class TestEnumerateRewritings:
    def test_single_view_cover(self, world, corpus):
        net, cat, rw = world
        v1 = materialize_view(
            cat, parse_pattern("(//book {id} (/title {val}))"), net.peer("p1"), corpus
        )
        q = parse_query("(//book (/title {val}))")
        plans = rw.enumerate_rewritings(q, [v1], origin=net.peer("p0"))
        assert plans
        covers = [
            p
            for p in plans
            if [l.view_id for l in view_scan_leaves(p)] == [v1.view_id]
            and not [l for l in plan_leaves(p) if isinstance(l, DocShip)]
        ]
        assert covers
        table, _ = rw.execute_plan(covers[0], net.peer("p0"))
        assert table.rows == evaluate_query(corpus, q).rows

    def test_navigate_compensation(self, world, corpus):
        net, cat, rw = world
        v2 = materialize_view(cat, parse_pattern("(//book {cont})"), net.peer("p1"), corpus)
        q = parse_query("(//book (/title {val}))")
        plans = rw.enumerate_rewritings(q, [v2], origin=net.peer("p0"))
        navs = [p for p in plans if find_ops(p, Navigate)]
        assert navs
        table, _ = rw.execute_plan(navs[0], net.peer("p0"))
        assert {r[0] for r in table.rows} == {"AI", "DB"}

    def test_select_compensation(self, world, corpus):
        net, cat, rw = world
        v3 = materialize_view(cat, parse_pattern("(//author {id,val})"), net.peer("p1"), corpus)
        q = parse_query('(//author [= "Smith"] {id})')
        plans = rw.enumerate_rewritings(q, [v3], origin=net.peer("p0"))
        sels = [p for p in plans if find_ops(p, Select)]
        assert sels
        table, _ = rw.execute_plan(sels[0], net.peer("p0"))
        oracle = evaluate_query(corpus, q)
        assert table.rows == oracle.rows

    def test_unusable_view_yields_nothing(self, world, corpus):
        net, cat, rw = world
        v = materialize_view(cat, parse_pattern("(//year {val})"), net.peer("p1"), corpus)
        q = parse_query("(//author {val})")
        assert rw.enumerate_rewritings(q, [v], origin=net.peer("p0")) == []


class TestPlanCost:
    def test_local_view_costs_lookup_only(self, world, corpus):
        net, cat, rw = world
        v = materialize_view(cat, parse_pattern("(//title {val})"), net.peer("p0"), corpus)
        q = parse_query("(//title {val})")
        plans = rw.enumerate_rewritings(q, [v], origin=net.peer("p0"))
        cost = rw.plan_cost(plans[0], net.peer("p0"))
        assert cost.bytes == rw.cfg.view_lookup_bytes

    def test_remote_view_adds_estimate_and_header(self, world, corpus):
        net, cat, rw = world
        v = materialize_view(cat, parse_pattern("(//title {val})"), net.peer("p1"), corpus)
        q = parse_query("(//title {val})")
        plans = rw.enumerate_rewritings(q, [v], origin=net.peer("p0"))
        cost = rw.plan_cost(plans[0], net.peer("p0"))
        expected = v.estimated_bytes + net.cfg.msg_header_bytes + rw.cfg.view_lookup_bytes
        assert cost.bytes == expected

    def test_two_remote_views_sum(self, world, corpus):
        net, cat, rw = world
        materialize_view(cat, parse_pattern("(//book {id} (/title {val}))"), net.peer("p1"), corpus)
        materialize_view(cat, parse_pattern("(//book {id} (/author {val}))"), net.peer("p2"), corpus)
        q = parse_query("(//book (/title {val}) (/author {val}))")
        views = cat.lookup_views(net.peer("p0"), q)
        plans = rw.enumerate_rewritings(q, views, origin=net.peer("p0"))
        twos = [p for p in plans if len(view_scan_leaves(p)) == 2]
        assert twos
        cost = rw.plan_cost(twos[0], net.peer("p0"))
        scans = view_scan_leaves(twos[0])
        expected = sum(s.estimated_bytes + net.cfg.msg_header_bytes for s in scans)
        expected += 2 * rw.cfg.view_lookup_bytes
        assert cost.bytes == expected


class TestBestPlan:
    def test_no_views_falls_back_to_docship(self, world):
        net, cat, rw = world
        q = parse_query("(//title {val})")
        plan, cost = rw.best_plan(q, [], net.peer("p0"))
        leaves = plan_leaves(plan)
        assert all(isinstance(l, DocShip) for l in leaves)
        assert cost.bytes > 0

    def test_exact_local_view_wins(self, world, corpus):
        net, cat, rw = world
        v = materialize_view(cat, parse_pattern("(//title {val})"), net.peer("p0"), corpus)
        q = parse_query("(//title {val})")
        plan, cost = rw.best_plan(q, [v], net.peer("p0"))
        scans = view_scan_leaves(plan)
        assert len(scans) == 1 and scans[0].view_id == v.view_id
        _, fallback_cost = rw.best_plan(q, [], net.peer("p0"))
        assert cost.bytes <= fallback_cost.bytes

    def test_deterministic(self, world, corpus):
        net, cat, rw = world
        views = [
            materialize_view(cat, parse_pattern("(//book {id} (/title {val}))"), net.peer("p1"), corpus),
            materialize_view(cat, parse_pattern("(//book {cont})"), net.peer("p2"), corpus),
        ]
        q = parse_query("(//book (/title {val}))")
        first = rw.best_plan(q, views, net.peer("p0"))
        for _ in range(3):
            plan, cost = rw.best_plan(q, views, net.peer("p0"))
            assert plan_to_dict(plan) == plan_to_dict(first[0])
            assert cost.bytes == first[1].bytes


class TestExecutePlan:
    def test_docship_fixture(self, world, corpus):
        net, cat, rw = world
        q = parse_query("(//title {val})")
        plan, _ = rw.best_plan(q, [], net.peer("p0"))
        table, _ = rw.execute_plan(plan, net.peer("p0"))
        assert {r[0] for r in table.rows} == {"AI", "DB"}

    def test_execution_charges_query_bytes(self, world, corpus):
        net, cat, rw = world
        q = parse_query("(//title {val})")
        plan, _ = rw.best_plan(q, [], net.peer("p0"))
        before = net.metrics.global_totals()["queryExecution"]["bytes"]
        rw.execute_plan(plan, net.peer("p0"))
        assert net.metrics.global_totals()["queryExecution"]["bytes"] > before

    def test_dangling_view_reference(self, world, corpus):
        net, cat, rw = world
        v = materialize_view(cat, parse_pattern("(//title {val})"), net.peer("p1"), corpus)
        q = parse_query("(//title {val})")
        plan, _ = rw.best_plan(q, [v], net.peer("p0"))
        cat.extents.pop(v.view_id)
        with pytest.raises(ExecutionError):
            rw.execute_plan(plan, net.peer("p0"))

    def test_helper_set_names_remote_holders(self, world, corpus):
        net, cat, rw = world
        v = materialize_view(cat, parse_pattern("(//title {val})"), net.peer("p1"), corpus)
        q = parse_query("(//title {val})")
        plan, _ = rw.best_plan(q, [v], net.peer("p0"))
        _, helpers = rw.execute_plan(plan, net.peer("p0"))
        assert "p1" in helpers


class TestDocLookupTerms:
    def test_labels_only(self):
        p = parse_pattern('(//author [= "Smith"] {id})')
        assert doc_lookup_terms(p) == {Term("label", "author")}

    def test_wildcards_contribute_nothing(self):
        assert doc_lookup_terms(parse_pattern("(//* {cont})")) == set()


@given(st.integers(min_value=0, max_value=100_000))
@settings(max_examples=60, deadline=None)
def test_rewriting_soundness_randomized(seed):
    rng = random.Random(seed)
    docs = random_corpus(rng, max_docs=5, max_nodes=20)
    net, cat, rw = make_world([f"p{i}" for i in range(4)], docs)
    random_views(rng, cat, net, docs, max_views=4)
    q = random_query(rng, max_nodes=4)
    asker = rng.choice(net.peers)
    views = cat.lookup_views(asker, q)
    plan, _ = rw.best_plan(q, views, asker)
    table, _ = rw.execute_plan(plan, asker)
    oracle = evaluate_query(docs, q)
    assert table.header == oracle.header
    assert table.rows == oracle.rows


@given(st.integers(min_value=0, max_value=100_000))
@settings(max_examples=30, deadline=None)
def test_cost_monotone_in_views(seed):
    rng = random.Random(seed)
    docs = random_corpus(rng, max_docs=4, max_nodes=15)
    net, cat, rw = make_world([f"p{i}" for i in range(3)], docs)
    views = random_views(rng, cat, net, docs, max_views=4)
    q = random_query(rng, max_nodes=4)
    asker = rng.choice(net.peers)
    costs = []
    for k in range(len(views) + 1):
        _, cost = rw.best_plan(q, views[:k], asker)
        costs.append(cost.bytes)
    for a, b in zip(costs, costs[1:]):
        assert b <= a
