import asyncio

import httpx
import pytest

from xpnet.engine import Engine, ScenarioConfig, build_app

from test_engine import base_cfg


@pytest.fixture
def engine():
    e = Engine(ScenarioConfig.from_dict(base_cfg()))
    e.start()
    return e


def call(engine, fn):
    async def runner():
        transport = httpx.ASGITransport(app=build_app(engine))
        async with httpx.AsyncClient(transport=transport, base_url="http://test") as client:
            return await fn(client)

    return asyncio.run(runner())


class TestPeers:
    def test_lists_all_peers(self, engine):
        peers = call(engine, lambda c: c.get("/peers"))
        body = peers.json()
        assert {p["peer"] for p in body} == {"p0", "p1", "p2", "p3"}
        positions = [p["position"] for p in body]
        assert positions == sorted(positions)  # ring order
        for p in body:
            assert p["usedBytes"] <= p["capacityBytes"]

    def test_document_counts_sum_to_corpus(self, engine):
        body = call(engine, lambda c: c.get("/peers")).json()
        assert sum(p["documents"] for p in body) == len(engine.catalog.documents)

    def test_unknown_peer_404(self, engine):
        r = call(engine, lambda c: c.get("/peers/ghost/views"))
        assert r.status_code == 404

    def test_views_and_stats_shapes(self, engine):
        async def fn(c):
            await c.post("/step", json={"ticks": 12})
            return await c.get("/peers/p0/stats"), await c.get("/peers/p0/views")

        stats, views = call(engine, fn)
        body = stats.json()
        assert set(body) == {"peer", "usedBytes", "capacityBytes", "traffic", "windowQueries"}
        for v in views.json():
            assert set(v) == {"viewId", "pattern", "estimatedBytes", "actualBytes", "createdAtRound"}


class TestQueries:
    def test_query_round_trip(self, engine):
        r = call(
            engine,
            lambda c: c.post("/queries", json={"peer": "p0", "query": "(//title {val})"}),
        )
        body = r.json()
        assert r.status_code == 200
        assert body["table"]["columns"] == ["p0/root:val"]
        assert body["rows"] == len(body["table"]["rows"])
        assert body["plan"]["op"] in {"DocShip", "Project", "ViewScan"}

    def test_parse_error_400(self, engine):
        r = call(engine, lambda c: c.post("/queries", json={"peer": "p0", "query": "((("}))
        assert r.status_code == 400

    def test_recent_plans_grow(self, engine):
        async def fn(c):
            await c.post("/queries", json={"peer": "p0", "query": "(//title {val})"})
            return await c.get("/plans/recent")

        body = call(engine, fn).json()
        assert body and body[-1]["query"] == "(//title {val})"


class TestConfigAndStep:
    def test_config_applies_at_next_boundary(self, engine):
        async def fn(c):
            pending = await c.post("/config", json={"tau_ticks": 5})
            assert pending.json() == {"pending": {"tau_ticks": 5}}
            state = (await c.get("/state")).json()
            assert state["tauTicks"] == 10  # not applied yet
            await c.post("/step", json={"ticks": 10})
            return (await c.get("/state")).json()

        state = call(engine, fn)
        assert state["tauTicks"] == 5 and state["pendingConfig"] == {}
        applied = [
            rnd["appliedConfig"]
            for rec in engine.records
            for rnd in rec.get("rounds", [])
        ]
        assert {"tau_ticks": 5} in applied

    def test_invalid_config_rejected(self, engine):
        r = call(engine, lambda c: c.post("/config", json={"tau_ticks": 0}))
        assert r.status_code == 400
        r = call(engine, lambda c: c.post("/config", json={"theta": 0.5}))
        assert r.status_code == 400

    def test_step_advances_clock(self, engine):
        async def fn(c):
            await c.post("/step", json={"ticks": 7})
            return (await c.get("/state")).json()

        assert call(engine, fn)["tick"] == 7

    def test_negative_step_rejected(self, engine):
        r = call(engine, lambda c: c.post("/step", json={"ticks": -1}))
        assert r.status_code == 400


class TestEvents:
    def test_listener_receives_records_in_tick_order(self, engine):
        seen = []
        engine.add_listener(seen.append)
        engine.step(12)
        assert seen
        ticks = [r["tick"] for r in seen]
        assert ticks == sorted(ticks)
