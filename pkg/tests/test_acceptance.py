"""End-to-end acceptance checks. Each test prints a single PASS line with its
headline numbers; a failed assertion leaves the line unprinted."""

import json
import random
import time

import pytest

from conftest import make_world
from randgen import random_corpus, random_pattern, random_query, random_views
from test_synopsis import chain_patterns
from xpnet.adapt import AdaptConfig, AdaptEngine, Candidate, normalize_view_pattern
from xpnet.catalog import ViewDef, make_view_id, table_payload_bytes
from xpnet.corpusgen import single_path_document_text
from xpnet.engine import ScenarioConfig, run_scenario
from xpnet.pattern import (
    canonical_pattern_text,
    evaluate_pattern,
    evaluate_query,
    parse_query,
    unparse_query,
)
from xpnet.synopsis import build_synopsis, estimate_contribution
from xpnet.xml_model import parse_document


@pytest.fixture
def report(capsys):
    def emit(line):
        with capsys.disabled():
            print(f"\n{line}")

    return emit


def test_rewriting_soundness_1000_trials(report):
    started = time.time()
    mismatches = 0
    for seed in range(1000):
        rng = random.Random(seed)
        docs = random_corpus(rng, max_docs=50, max_nodes=60)
        net, cat, rw = make_world([f"p{i}" for i in range(6)], docs)
        random_views(rng, cat, net, docs, max_views=6)
        q = random_query(rng, max_nodes=5, max_patterns=2)
        asker = rng.choice(net.peers)
        plan, _ = rw.best_plan(q, cat.lookup_views(asker, q), asker)
        table, _ = rw.execute_plan(plan, asker)
        oracle = evaluate_query(docs, q)
        if table.header != oracle.header or table.rows != oracle.rows:
            mismatches += 1
    elapsed = time.time() - started
    assert mismatches == 0
    assert elapsed < 120
    report(f"PASS rewriting soundness: 1000/1000 trials match the oracle in {elapsed:.1f}s")


def test_benefit_formula_exactness_200_instances(report):
    checked = 0
    for seed in range(200):
        rng = random.Random(10_000 + seed)
        docs = random_corpus(rng, max_docs=4, max_nodes=20)
        net, cat, rw = make_world([f"p{i}" for i in range(3)], docs)
        views = random_views(rng, cat, net, docs, max_views=3)
        ad = AdaptEngine(net, cat, rw, AdaptConfig())
        for p in net.peers:
            ad.register_peer(p, 1 << 16)
        peer = rng.choice(net.peers)
        workload = [
            (random_query(rng, max_nodes=3, max_patterns=1), rng.randint(1, 5))
            for _ in range(rng.randint(1, 3))
        ]
        for _ in range(rng.randint(1, 4)):
            pattern = random_pattern(rng, max_nodes=3)
            est = ad.estimate_view_size(peer, pattern)
            candidate = Candidate(
                pattern=pattern, provenance="workloadQuery", estimated_bytes=est
            )
            got = ad.benefit(candidate, workload, views, peer)
            hypo = ViewDef(make_view_id(pattern, peer), pattern, peer, est)
            expected = 0
            for q, count in workload:
                _, without = rw.best_plan(q, views, peer, "adaptation")
                _, with_v = rw.best_plan(q, list(views) + [hypo], peer, "adaptation")
                expected += count * (without.bytes - with_v.bytes)
            assert got == expected
            checked += 1
    assert checked >= 200
    report(f"PASS benefit formula exactness: {checked} candidates match brute force")


def _round_reports(records):
    for rec in records:
        for rnd in rec.get("rounds", []):
            yield from rnd["reports"]


def _stationary_cfg(theta=1.2):
    queries = [
        ("p0", "(//book (/title {val}))"),
        ("p1", "(//author {val})"),
        ("p2", "(//section (//para {cont}))"),
    ]
    events = [
        {"tick": t, "peer": peer, "query": q}
        for t in range(1, 101)
        for peer, q in queries
    ]
    return ScenarioConfig.from_dict(
        {
            "mode": "adaptive",
            "peers": {"count": 8, "budget_bytes": 1 << 16},
            "ticks": 100,
            "seed": 5,
            "tau_ticks": 10,
            "theta": theta,
            "corpus": {"generate": {"documents": 40, "max_nodes": 30, "seed": 6}},
            "workload": {"events": events},
        }
    )


def test_budget_safety_all_rounds(report):
    rounds_seen = 0
    configs = [_stationary_cfg()]
    for budget in (512, 4096, 1 << 16):
        configs.append(
            ScenarioConfig.from_dict(
                {
                    "mode": "adaptive",
                    "peers": {"count": 6, "budget_bytes": budget},
                    "ticks": 60,
                    "seed": budget,
                    "tau_ticks": 15,
                    "corpus": {"generate": {"documents": 25, "max_nodes": 30, "seed": 8}},
                    "workload": {
                        "templates": [
                            "(//book (/title {val}))",
                            "(//author {id,val})",
                            "(//para {cont})",
                        ],
                        "count": 120,
                        "zipf_s": 1.0,
                        "seed": 13,
                    },
                }
            )
        )
    for cfg in configs:
        records = run_scenario(cfg)
        for rep in _round_reports(records):
            assert rep["usedBytes"] <= rep["capacityBytes"]
            rounds_seen += 1
        summary = records[-1]
        for b in summary["budgets"].values():
            assert b["usedBytes"] <= b["capacityBytes"]
    assert rounds_seen > 0
    report(f"PASS budget safety: usedBytes <= capacityBytes in all {rounds_seen} peer rounds")


def test_estimator_exactness(report):
    exact_checked = 0
    for seed in range(200):
        rng = random.Random(20_000 + seed)
        doc = parse_document(single_path_document_text(rng), f"sp{seed}")
        synopsis = build_synopsis(doc)
        for pattern in chain_patterns(doc):
            actual = table_payload_bytes(evaluate_pattern(doc, pattern))
            assert estimate_contribution(synopsis, pattern) == actual
            exact_checked += 1
    zero_checked = 0
    for seed in range(200):
        rng = random.Random(30_000 + seed)
        doc = random_corpus(rng, max_docs=1, max_nodes=30)[0]
        synopsis = build_synopsis(doc)
        for _ in range(5):
            pattern = random_pattern(rng, max_nodes=3)
            if estimate_contribution(synopsis, pattern) == 0:
                table = evaluate_pattern(doc, pattern)
                assert table.rows == frozenset()
                assert table_payload_bytes(table) == 0
                zero_checked += 1
    report(
        "PASS estimator exactness: "
        f"{exact_checked} single-path estimates exact, "
        f"{zero_checked} zero estimates imply empty extents"
    )


SCENARIO_TEMPLATES = [
    "(//book (/title {val}))",
    "(//author {val})",
    "(//section (//para {cont}))",
    "(//book (/author $a) (/year {val}))",
    "(//journal (//name {val}))",
    "(//entry {id,val})",
    "(//lib (//book {cont}))",
    "(//title {val})",
    "(//ref (/name {val}))",
    "(//year {val})",
    "(//volume {val})",
    "(//para {cont})",
    "(//section (/para {val}))",
    "(//name {id})",
    "(//book (//ref {id}))",
    "(//journal {cont})",
    "(//author [~ alpha] {val})",
    "(//entry (//title {val}))",
    "(//lib (/journal {val}))",
    "(//ref {val})",
]


def _scenario_cfg(mode, user_views=()):
    return ScenarioConfig.from_dict(
        {
            "mode": mode,
            "peers": {"count": 32, "budget_bytes": 1 << 17},
            "ticks": 200,
            "seed": 2026,
            "tau_ticks": 20,
            "corpus": {"generate": {"documents": 200, "max_nodes": 40, "seed": 77}},
            "workload": {
                "templates": SCENARIO_TEMPLATES,
                "count": 600,
                "zipf_s": 1.0,
                "seed": 101,
            },
            "user_views": [list(v) for v in user_views],
        }
    )


def test_scenario_ordering(report):
    started = time.time()
    top3 = [
        (f"p{i}", canonical_pattern_text(normalize_view_pattern(parse_query(t).patterns[0])))
        for i, t in enumerate(SCENARIO_TEMPLATES[:3])
    ]
    final = {}
    for mode, uv in (("docIndexOnly", ()), ("userViews", top3), ("adaptive", ())):
        records = run_scenario(_scenario_cfg(mode, uv))
        final[mode] = records[-1]["finalWindowQueryBytes"]
    elapsed = time.time() - started
    assert final["adaptive"] < final["userViews"] < final["docIndexOnly"]
    assert elapsed < 300
    ratio_a = final["adaptive"] / final["docIndexOnly"]
    ratio_u = final["userViews"] / final["docIndexOnly"]
    report(
        "PASS scenario ordering: final-window queryExecution bytes "
        f"adaptive={final['adaptive']} < userViews={final['userViews']} "
        f"< docIndexOnly={final['docIndexOnly']} "
        f"(adaptive/docIndexOnly={ratio_a:.3f}, userViews/docIndexOnly={ratio_u:.3f}, "
        f"{elapsed:.1f}s)"
    )


def test_determinism_byte_identical(report):
    def run_once():
        records = run_scenario(_stationary_cfg())
        return "\n".join(
            json.dumps(r, sort_keys=True, separators=(",", ":")) for r in records
        ).encode("utf-8")

    first = run_once()
    second = run_once()
    assert first == second
    report(f"PASS determinism: two runs produce byte-identical metrics ({len(first)} bytes)")


def test_non_thrash_fixed_point(report):
    records = run_scenario(_stationary_cfg(theta=1.2))
    per_round = {}
    for rec in records:
        for rnd in rec.get("rounds", []):
            churn = sum(len(r["added"]) + len(r["dropped"]) for r in rnd["reports"])
            per_round[rnd["round"]] = churn
    assert sorted(per_round) == list(range(1, 11))
    last3 = [per_round[r] for r in (8, 9, 10)]
    assert last3 == [0, 0, 0]
    report(
        "PASS non-thrash: no view adds or drops in the last 3 of 10 windows "
        f"(churn per round: {[per_round[r] for r in sorted(per_round)]})"
    )
