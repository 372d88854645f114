"""Scenario runner: simulated clock, corpus and workload ingestion, the three
run modes, per-tick metrics records, and the HTTP control surface.

Everything is driven by a single-threaded tick loop. One JSON-serializable
metrics record is emitted per tick, plus a setup record at tick 0 and a final
summary; serializing them with sorted keys makes runs byte-for-byte diffable.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .adapt import AdaptConfig, AdaptEngine
from .catalog import Catalog, ViewDef, make_view_id
from .corpusgen import generate_corpus
from .overlay import Network, PeerId
from .pattern import QuerySpec, QuerySyntaxError, parse_pattern, parse_query, unparse_query
from .rewriter import Rewriter, RewriterConfig, plan_to_dict, _col_str
from .xml_model import NodeId, parse_document

MODES = ("docIndexOnly", "userViews", "adaptive")


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    mode: str
    n_peers: int
    budget_bytes: object  # int, or {peerName: int}
    ticks: int
    seed: int
    tau_ticks: int = 20
    theta: float = 1.2
    max_candidates: int = 64
    max_views_per_plan: int = 2
    corpus: dict = field(default_factory=dict)
    workload: dict = field(default_factory=dict)
    user_views: list = field(default_factory=list)  # [(peerName, patternText)]

    @classmethod
    def from_dict(cls, obj: dict) -> "ScenarioConfig":
        try:
            cfg = cls(
                mode=obj["mode"],
                n_peers=int(obj["peers"]["count"]),
                budget_bytes=obj["peers"].get("budget_bytes", 1 << 16),
                ticks=int(obj.get("ticks", 100)),
                seed=int(obj.get("seed", 0)),
                tau_ticks=int(obj.get("tau_ticks", 20)),
                theta=float(obj.get("theta", 1.2)),
                max_candidates=int(obj.get("max_candidates", 64)),
                max_views_per_plan=int(obj.get("max_views_per_plan", 2)),
                corpus=dict(obj.get("corpus", {})),
                workload=dict(obj.get("workload", {})),
                user_views=[tuple(v) for v in obj.get("user_views", [])],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scenario config: {exc}") from exc
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def peer_names(self) -> list[str]:
        return [f"p{i}" for i in range(self.n_peers)]

    def capacity(self, name: str) -> int:
        if isinstance(self.budget_bytes, dict):
            if name not in self.budget_bytes:
                raise ConfigError(f"no budget for peer {name}")
            return int(self.budget_bytes[name])
        return int(self.budget_bytes)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.n_peers < 1:
            raise ConfigError("need at least one peer")
        if self.tau_ticks < 1:
            raise ConfigError("tau_ticks must be >= 1")
        if self.mode == "userViews" and not self.user_views:
            raise ConfigError("userViews mode requires a non-empty user_views list")
        names = set(self.peer_names())
        for peer, text in self.user_views:
            if peer not in names:
                raise ConfigError(f"user view references unknown peer {peer!r}")
            parse_pattern(text)  # raises QuerySyntaxError on bad input
        for ev in self.workload.get("events", []):
            if ev["peer"] not in names:
                raise ConfigError(f"workload references unknown peer {ev['peer']!r}")
            parse_query(ev["query"])


def zipf_weights(n: int, s: float) -> list[float]:
    raw = [1.0 / (r ** s) for r in range(1, n + 1)]
    total = sum(raw)
    return [w / total for w in raw]


def generate_workload(cfg: ScenarioConfig) -> list[dict]:
    """Workload events, sorted by (tick, peer, query); fully seed-determined."""
    spec = cfg.workload
    events = [dict(e) for e in spec.get("events", [])]
    templates = spec.get("templates", [])
    if templates:
        count = int(spec.get("count", 100))
        s = float(spec.get("zipf_s", 1.0))
        rng = random.Random(spec.get("seed", cfg.seed))
        weights = zipf_weights(len(templates), s)
        names = cfg.peer_names()
        for _ in range(count):
            t = rng.choices(range(len(templates)), weights=weights)[0]
            events.append(
                {
                    "tick": rng.randint(1, max(1, cfg.ticks)),
                    "peer": rng.choice(names),
                    "query": templates[t],
                }
            )
    events.sort(key=lambda e: (e["tick"], e["peer"], e["query"]))
    return events


def load_corpus(cfg: ScenarioConfig) -> list[tuple[str, str]]:
    spec = cfg.corpus
    if "dir" in spec:
        root = Path(spec["dir"])
        docs = []
        for path in sorted(root.glob("*.xml")):
            docs.append((path.name, path.read_text()))
        return docs
    gen = spec.get("generate", {})
    return generate_corpus(
        n_docs=int(gen.get("documents", 20)),
        max_nodes=int(gen.get("max_nodes", 30)),
        seed=int(gen.get("seed", cfg.seed)),
    )


def _json_value(v):
    if isinstance(v, NodeId):
        return f"{v.doc}#{v.start}-{v.end}"
    return v


def table_to_dict(table) -> dict:
    rows = sorted([_json_value(v) for v in row] for row in table.rows)
    return {"columns": [_col_str(c) for c in table.header], "rows": rows}


class Engine:
    def __init__(self, cfg: ScenarioConfig):
        cfg.validate()
        self.cfg = cfg
        self.tick = 0
        self.started = False
        self.finished = False
        self.records: list[dict] = []
        self.recent_plans: list[dict] = []
        self.pending_config: dict = {}
        self.network = Network(cfg.peer_names())
        self.catalog = Catalog(self.network)
        self.rewriter = Rewriter(self.catalog, self.network, RewriterConfig(
            max_views_per_plan=cfg.max_views_per_plan))
        self.adapt = AdaptEngine(
            self.network,
            self.catalog,
            self.rewriter,
            AdaptConfig(
                tau_ticks=cfg.tau_ticks,
                theta=cfg.theta,
                max_candidates=cfg.max_candidates,
            ),
        )
        for p in self.network.peers:
            self.adapt.register_peer(p, cfg.capacity(p.name))
        self.events_by_tick: dict[int, list[dict]] = {}
        for ev in generate_workload(cfg):
            self.events_by_tick.setdefault(int(ev["tick"]), []).append(ev)
        self.window_marks: list[int] = []  # queryExecution bytes at each boundary
        self.round_index = 0
        self._listeners: list = []

    # -- record plumbing ---------------------------------------------------

    def _emit(self, record: dict) -> None:
        self.records.append(record)
        for cb in list(self._listeners):
            cb(record)

    def add_listener(self, cb) -> None:
        self._listeners.append(cb)

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        if self.started:
            return
        self.started = True
        names = self.cfg.peer_names()
        assignment = self.cfg.corpus.get("assignment", {})
        docs = load_corpus(self.cfg)
        for i, (uri, xml) in enumerate(docs):
            holder = assignment.get(uri, names[i % len(names)])
            self.catalog.publish_document(self.network.peer(holder), parse_document(xml, uri))
        placed = []
        if self.cfg.mode == "userViews":
            for peer_name, text in self.cfg.user_views:
                p = self.network.peer(peer_name)
                pattern = parse_pattern(text)
                est = self.adapt.estimate_view_size(p, pattern)
                view = ViewDef(
                    view_id=make_view_id(pattern, p),
                    pattern=pattern,
                    holder=p,
                    estimated_bytes=est,
                )
                nbytes = self.adapt.materialize(p, view, 0)
                self.catalog.advertise_view(view)
                self.adapt.budgets[p.name] += nbytes
                placed.append({"peer": peer_name, "pattern": view.canonical_text,
                               "actualBytes": nbytes})
        self.window_marks.append(self.network.metrics.category_bytes("queryExecution"))
        self._emit(
            {
                "tick": 0,
                "type": "setup",
                "mode": self.cfg.mode,
                "peers": len(names),
                "documents": len(docs),
                "userViews": placed,
            }
        )

    def submit_query(self, p: PeerId, q: QuerySpec):
        """Plan, execute and account one query; returns (table, record dict)."""
        if self.cfg.mode == "docIndexOnly":
            plan = self.rewriter.fallback_plan(q, p, "queryExecution")
        else:
            views = self.catalog.lookup_views(p, q, "queryExecution")
            plan, _ = self.rewriter.best_plan(q, views, p, "queryExecution")
        cost = self.rewriter.plan_cost(plan, p)
        table, helpers = self.rewriter.execute_plan(plan, p)
        if self.cfg.mode == "adaptive":
            self.adapt.record_query(p, q, "asker")
            for name in sorted(helpers):
                self.adapt.record_query(self.network.peer(name), q, "helper")
        record = {
            "peer": p.name,
            "query": unparse_query(q),
            "costBytes": cost.bytes,
            "rows": len(table.rows),
            "helpers": sorted(helpers),
            "plan": plan_to_dict(plan),
        }
        self.recent_plans.append({"tick": self.tick, **record})
        del self.recent_plans[:-50]
        return table, record

    def _apply_pending_config(self) -> dict:
        applied = {}
        pc, self.pending_config = self.pending_config, {}
        if "tau_ticks" in pc:
            self.adapt.cfg.tau_ticks = int(pc["tau_ticks"])
            applied["tau_ticks"] = self.adapt.cfg.tau_ticks
        if "theta" in pc:
            self.adapt.cfg.theta = float(pc["theta"])
            applied["theta"] = self.adapt.cfg.theta
        if "budget_bytes" in pc:
            b = pc["budget_bytes"]
            for p in self.network.peers:
                self.adapt.capacities[p.name] = int(
                    b[p.name] if isinstance(b, dict) else b
                )
            applied["budget_bytes"] = b
        return applied

    def _round_boundary(self) -> dict:
        applied = self._apply_pending_config()
        self.round_index += 1
        reports = []
        if self.cfg.mode == "adaptive":
            for p in self.network.peers:  # ascending PeerId order
                reports.append(self.adapt.adapt_round(p, self.round_index).to_dict())
        for p in self.network.peers:
            assert self.adapt.budgets[p.name] <= self.adapt.capacities[p.name]
        qbytes = self.network.metrics.category_bytes("queryExecution")
        window_bytes = qbytes - self.window_marks[-1]
        self.window_marks.append(qbytes)
        return {
            "round": self.round_index,
            "appliedConfig": applied,
            "reports": reports,
            "windowQueryBytes": window_bytes,
        }

    def step(self, n: int) -> None:
        if not self.started:
            raise ConfigError("scenario not started")
        for _ in range(n):
            self.tick += 1
            queries = []
            for ev in self.events_by_tick.get(self.tick, []):
                p = self.network.peer(ev["peer"])
                _, record = self.submit_query(p, parse_query(ev["query"]))
                queries.append(record)
            rounds = []
            if self.tick % self.adapt.cfg.tau_ticks == 0:
                rounds.append(self._round_boundary())
            self._emit(
                {
                    "tick": self.tick,
                    "type": "tick",
                    "queries": queries,
                    "rounds": rounds,
                    "counters": self.network.metrics.global_totals(),
                }
            )

    def summary(self) -> dict:
        window_bytes = [
            b - a for a, b in zip(self.window_marks, self.window_marks[1:])
        ]
        record = {
            "tick": self.tick,
            "type": "summary",
            "mode": self.cfg.mode,
            "windowQueryBytes": window_bytes,
            "finalWindowQueryBytes": window_bytes[-1] if window_bytes else 0,
            "totals": self.network.metrics.global_totals(),
            "budgets": {
                p.name: {
                    "usedBytes": self.adapt.budgets[p.name],
                    "capacityBytes": self.adapt.capacities[p.name],
                }
                for p in self.network.peers
            },
            "views": {
                p.name: sorted(
                    v.canonical_text
                    for v in self.catalog.views.values()
                    if v.holder.name == p.name
                )
                for p in self.network.peers
            },
        }
        return record

    def run(self) -> list[dict]:
        self.start()
        self.step(self.cfg.ticks)
        self.finished = True
        self._emit(self.summary())
        return self.records


def run_scenario(cfg: ScenarioConfig, out_path: str | None = None) -> list[dict]:
    engine = Engine(cfg)
    records = engine.run()
    if out_path is not None:
        write_jsonl(records, out_path)
    return records


def write_jsonl(records, path: str) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


# ---------------------------------------------------------------------------
# HTTP control surface


from pydantic import BaseModel


class QueryBody(BaseModel):
    peer: str
    query: str


class ConfigBody(BaseModel):
    tau_ticks: int | None = None
    theta: float | None = None
    budget_bytes: object | None = None


class StepBody(BaseModel):
    ticks: int


def build_app(engine: Engine):
    import asyncio

    from fastapi import FastAPI, HTTPException
    from fastapi.responses import StreamingResponse

    app = FastAPI(title="xpnet engine")
    app.state.engine = engine

    def peer_or_404(name: str) -> PeerId:
        try:
            return engine.network.peer(name)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown peer {name!r}")

    @app.get("/peers")
    def peers():
        return [
            {
                "peer": p.name,
                "position": p.position,
                "usedBytes": engine.adapt.budgets[p.name],
                "capacityBytes": engine.adapt.capacities[p.name],
                "views": sum(
                    1 for v in engine.catalog.views.values() if v.holder.name == p.name
                ),
                "documents": sum(
                    1 for _, holder in engine.catalog.documents.values()
                    if holder.name == p.name
                ),
            }
            for p in engine.network.peers
        ]

    @app.get("/peers/{name}/views")
    def peer_views(name: str):
        p = peer_or_404(name)
        return [
            {
                "viewId": v.view_id,
                "pattern": v.canonical_text,
                "estimatedBytes": v.estimated_bytes,
                "actualBytes": v.actual_bytes,
                "createdAtRound": v.created_at_round,
            }
            for v in sorted(engine.catalog.views.values(), key=lambda v: v.view_id)
            if v.holder.name == p.name
        ]

    @app.get("/peers/{name}/stats")
    def peer_stats(name: str):
        p = peer_or_404(name)
        stats = engine.adapt.stats[p.name]
        return {
            "peer": p.name,
            "usedBytes": engine.adapt.budgets[p.name],
            "capacityBytes": engine.adapt.capacities[p.name],
            "traffic": engine.network.metrics.peer_totals(p.name),
            "windowQueries": [
                {"query": text, "count": stats.counts[text]}
                for text in sorted(stats.counts, key=lambda t: (-stats.counts[t], t))
            ],
        }

    @app.get("/plans/recent")
    def recent_plans():
        return engine.recent_plans

    @app.post("/queries")
    def queries(body: QueryBody):
        p = peer_or_404(body.peer)
        try:
            q = parse_query(body.query)
        except QuerySyntaxError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        table, record = engine.submit_query(p, q)
        return {"table": table_to_dict(table), **record}

    @app.post("/config")
    def config(body: ConfigBody):
        pending = {k: v for k, v in body.model_dump().items() if v is not None}
        if "tau_ticks" in pending and int(pending["tau_ticks"]) < 1:
            raise HTTPException(status_code=400, detail="tau_ticks must be >= 1")
        if "theta" in pending and float(pending["theta"]) < 1.0:
            raise HTTPException(status_code=400, detail="theta must be >= 1.0")
        engine.pending_config.update(pending)
        return {"pending": engine.pending_config}

    @app.post("/step")
    def step(body: StepBody):
        if body.ticks < 0:
            raise HTTPException(status_code=400, detail="ticks must be >= 0")
        engine.start()
        engine.step(body.ticks)
        return {"tick": engine.tick}

    @app.get("/state")
    def state():
        return {
            "tick": engine.tick,
            "mode": engine.cfg.mode,
            "tauTicks": engine.adapt.cfg.tau_ticks,
            "theta": engine.adapt.cfg.theta,
            "round": engine.round_index,
            "pendingConfig": engine.pending_config,
            "started": engine.started,
        }

    @app.get("/events")
    async def events():
        queue: asyncio.Queue = asyncio.Queue()
        loop = asyncio.get_running_loop()
        for rec in engine.records:
            queue.put_nowait(rec)

        def listener(rec):
            loop.call_soon_threadsafe(queue.put_nowait, rec)

        engine.add_listener(listener)

        async def stream():
            try:
                while True:
                    rec = await queue.get()
                    yield "data: " + json.dumps(rec, sort_keys=True) + "\n\n"
            finally:
                engine._listeners.remove(listener)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


def serve_api(engine: Engine, port: int, host: str = "127.0.0.1") -> None:
    import uvicorn

    uvicorn.run(build_app(engine), host=host, port=port, log_level="warning")
