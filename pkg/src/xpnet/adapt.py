"""Per-peer workload statistics, candidate-view enumeration, benefit scoring,
and the greedy budget-constrained materialize/evict round.

Candidates come from workload patterns closed under four roll-up steps
(drop a bare leaf, delete a predicate, widen a child axis, collapse an
annotated subtree to {id, cont}) plus pairwise least general generalizations.
Selection is greedy by benefit-to-size ratio within the peer's byte budget,
with a hysteresis factor before an existing view is dropped for a new one.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .catalog import Catalog, ViewDef, make_view_id, table_payload_bytes
from .overlay import Network, PeerId
from .pattern import (
    CHILD,
    DESC,
    PatternNode,
    QuerySpec,
    Table,
    TreePattern,
    canonical_pattern_text,
    evaluate_pattern,
    rekey,
    union_tables,
    unparse_query,
)
from .rewriter import Rewriter, doc_lookup_terms
from .synopsis import estimate_contribution


@dataclass
class AdaptConfig:
    tau_ticks: int = 20
    theta: float = 1.2
    budget_bytes: int = 1 << 16
    max_candidates: int = 64
    max_pool: int = 512  # roll-up closure bound before the Σ#q cap is applied


@dataclass
class QueryStats:
    """Tumbling-window query counters for one peer."""

    counts: dict = field(default_factory=dict)  # canonical query text -> count
    queries: dict = field(default_factory=dict)  # canonical query text -> QuerySpec

    def record(self, q: QuerySpec) -> None:
        text = unparse_query(q)
        self.counts[text] = self.counts.get(text, 0) + 1
        self.queries.setdefault(text, q)

    def reset(self) -> None:
        self.counts.clear()
        self.queries.clear()

    def workload(self):
        """(QuerySpec, #q) pairs, deterministic order."""
        return [(self.queries[t], self.counts[t]) for t in sorted(self.counts)]


@dataclass
class Candidate:
    pattern: TreePattern
    provenance: str  # workloadQuery | rollup | lgg | existing
    contributors: frozenset = frozenset()  # canonical texts of source queries
    estimated_bytes: int = 0
    benefit: int = 0
    existing: ViewDef | None = None

    @property
    def canonical_text(self) -> str:
        return canonical_pattern_text(self.pattern)

    @property
    def ratio(self) -> float:
        return self.benefit / max(self.estimated_bytes, 1)


# ---------------------------------------------------------------------------
# Candidate lattice


def normalize_view_pattern(p: TreePattern) -> TreePattern:
    """Workload pattern as a view: variables become val annotations."""

    def strip(n: PatternNode) -> PatternNode:
        anns = n.annotations | ({"val"} if n.variable is not None else frozenset())
        return replace(
            n, annotations=frozenset(anns), variable=None, children=tuple(strip(c) for c in n.children)
        )

    return TreePattern(rekey(strip(p.root)))


def _rollups(p: TreePattern):
    """One-step roll-up generalizations of p."""
    out = []

    def rebuild(root, target_key, fn):
        def walk(n):
            if n.key == target_key:
                return fn(n)
            return replace(n, children=tuple(c for c in (walk(k) for k in n.children) if c is not None))

        r = walk(root)
        return TreePattern(rekey(r)) if r is not None else None

    for n in TreePattern(p.root).nodes():
        # R1: drop a non-annotated leaf (never the root)
        if n.key != () and not n.children and not n.effective_annotations():
            out.append(rebuild(p.root, n.key, lambda _: None))
        # R2: delete a predicate
        if n.predicate is not None:
            out.append(rebuild(p.root, n.key, lambda m: replace(m, predicate=None)))
        # R3: widen a child axis to descendant
        if n.axis == CHILD:
            out.append(rebuild(p.root, n.key, lambda m: replace(m, axis=DESC)))
        # R4: collapse the subtree below n into {id, cont} at n
        if n.children:
            out.append(
                rebuild(
                    p.root,
                    n.key,
                    lambda m: replace(m, children=(), annotations=frozenset({"id", "cont"})),
                )
            )
    return [r for r in out if r is not None]


def lgg(p1: TreePattern, p2: TreePattern) -> TreePattern | None:
    """Least general generalization of two patterns (top-down greedy merge)."""

    def merge(a: PatternNode, b: PatternNode) -> PatternNode | None:
        if a.label != b.label and a.label != "*" and b.label != "*":
            return None
        label = a.label if a.label == b.label else "*"
        axis = CHILD if (a.axis == CHILD and b.axis == CHILD) else DESC
        predicate = a.predicate if a.predicate == b.predicate else None
        kids = []
        used_b = set()
        dropped = len(a.children) != len(b.children)
        for ca in a.children:
            match = None
            for i, cb in enumerate(b.children):
                if i in used_b or cb.label != ca.label:
                    continue
                m = merge(ca, cb)
                if m is not None:
                    match = m
                    used_b.add(i)
                    break
            if match is not None:
                kids.append(match)
            else:
                dropped = True
        if len(used_b) != len(b.children):
            dropped = True
        if dropped:
            anns = frozenset({"id", "cont"})
        else:
            anns = a.effective_annotations() | b.effective_annotations()
        return PatternNode(
            label=label,
            axis=axis,
            annotations=anns,
            predicate=predicate,
            variable=None,
            children=tuple(kids),
        )

    merged = merge(p1.root, p2.root)
    if merged is None:
        return None
    result = TreePattern(rekey(merged))
    if not any(n.effective_annotations() for n in result.nodes()):
        return None
    return result


def enumerate_candidates(workload, limits: AdaptConfig):
    """Candidate views from a (QuerySpec, #q) workload, capped by Σ#q."""
    pool: dict[str, Candidate] = {}
    weights: dict[str, int] = {}

    def add(pat: TreePattern, provenance: str, sources: frozenset):
        text = canonical_pattern_text(pat)
        if text in pool:
            c = pool[text]
            pool[text] = replace(c, contributors=c.contributors | sources)
        else:
            pool[text] = Candidate(pattern=pat, provenance=provenance, contributors=sources)
        return text

    base: list[tuple[TreePattern, frozenset]] = []
    for q, _count in workload:
        src = frozenset({unparse_query(q)})
        for pat in q.patterns:
            norm = normalize_view_pattern(pat)
            add(norm, "workloadQuery", src)
            base.append((norm, src))
    for q, count in workload:
        weights[unparse_query(q)] = count

    # closure under roll-ups, breadth-first, bounded
    frontier = [(pat, src) for pat, src in base]
    while frontier and len(pool) < limits.max_pool:
        pat, src = frontier.pop(0)
        for r in _rollups(pat):
            text = canonical_pattern_text(r)
            known = text in pool
            add(r, "rollup", src)
            if not known and len(pool) < limits.max_pool:
                frontier.append((r, src))

    for i, (pa, sa) in enumerate(base):
        for pb, sb in base[i + 1 :]:
            g = lgg(pa, pb)
            if g is not None:
                add(g, "lgg", sa | sb)

    def weight(c: Candidate) -> int:
        return sum(weights.get(s, 0) for s in c.contributors)

    ordered = sorted(pool.values(), key=lambda c: (-weight(c), c.canonical_text))
    return ordered[: limits.max_candidates]


def greedy_admit(order, capacity_bytes: int):
    """Admit candidates in the given (ratio-sorted) order while they fit.

    Candidates with non-positive benefit are skipped unless they wrap an
    already materialized view, which only hysteresis may evict.
    """
    admitted = []
    used = 0
    for c in order:
        if c.benefit <= 0 and c.existing is None:
            continue
        if used + c.estimated_bytes <= capacity_bytes:
            admitted.append(c)
            used += c.estimated_bytes
    return admitted, used


# ---------------------------------------------------------------------------
# Scoring and the adaptation round


@dataclass
class RoundReport:
    peer: str
    round_index: int
    added: list = field(default_factory=list)
    dropped: list = field(default_factory=list)
    discarded: list = field(default_factory=list)  # views too large for the budget
    scores: list = field(default_factory=list)
    used_bytes: int = 0
    capacity_bytes: int = 0

    def to_dict(self) -> dict:
        return {
            "peer": self.peer,
            "round": self.round_index,
            "added": self.added,
            "dropped": self.dropped,
            "discarded": self.discarded,
            "scores": self.scores,
            "usedBytes": self.used_bytes,
            "capacityBytes": self.capacity_bytes,
        }


class AdaptEngine:
    def __init__(self, network: Network, catalog: Catalog, rewriter: Rewriter, cfg: AdaptConfig):
        self.network = network
        self.catalog = catalog
        self.rewriter = rewriter
        self.cfg = cfg
        self.stats: dict[str, QueryStats] = {}
        self.budgets: dict[str, int] = {}
        self.capacities: dict[str, int] = {}
        self._syn_cache: dict = {}
        self._uri_cache: dict = {}

    def register_peer(self, p: PeerId, capacity_bytes: int) -> None:
        self.stats[p.name] = QueryStats()
        self.budgets[p.name] = 0
        self.capacities[p.name] = capacity_bytes

    def record_query(self, p: PeerId, q: QuerySpec, role: str) -> None:
        self.stats[p.name].record(q)

    def used_bytes(self, p: PeerId) -> int:
        return self.budgets[p.name]

    # -- size and benefit --------------------------------------------------

    def _contributing_uris(self, p: PeerId, pattern: TreePattern):
        terms = frozenset(doc_lookup_terms(pattern))
        key = (p.name, terms)
        if key not in self._uri_cache:
            if terms:
                uris = self.catalog.lookup_documents(p, terms, "adaptation")
            else:
                uris = self.catalog.all_uris()
            self._uri_cache[key] = tuple(uris)
        return self._uri_cache[key]

    def _synopsis(self, p: PeerId, uri: str):
        key = (p.name, uri)
        if key not in self._syn_cache:
            self._syn_cache[key] = self.catalog.fetch_synopsis(p, uri, "adaptation")
        return self._syn_cache[key]

    def estimate_view_size(self, p: PeerId, pattern: TreePattern) -> int:
        total = 0
        for uri in self._contributing_uris(p, pattern):
            total += estimate_contribution(self._synopsis(p, uri), pattern)
        return total

    def benefit(self, candidate: Candidate, workload, views, peer: PeerId) -> int:
        hypo = ViewDef(
            view_id=make_view_id(candidate.pattern, peer),
            pattern=candidate.pattern,
            holder=peer,
            estimated_bytes=candidate.estimated_bytes,
        )
        total = 0
        for q, count in workload:
            _, base = self.rewriter.best_plan(q, views, peer, "adaptation")
            _, with_v = self.rewriter.best_plan(q, list(views) + [hypo], peer, "adaptation")
            total += count * (base.bytes - with_v.bytes)
        return total

    # -- materialization ---------------------------------------------------

    def materialize(self, p: PeerId, view: ViewDef, round_index: int):
        uris = self._contributing_uris(p, view.pattern)
        tables = []
        for uri in uris:
            doc = self.catalog.document(uri)
            holder = self.catalog.holder_of(uri)
            t = evaluate_pattern(doc, view.pattern)
            self.network.ship(holder, p, table_payload_bytes(t), "viewMaterialization")
            tables.append(t)
        if tables:
            extent = union_tables(tables)
        else:
            extent = Table(view.pattern.columns(), frozenset())
        nbytes = self.catalog.store_extent(view.view_id, extent)
        view.actual_bytes = nbytes
        view.created_at_round = round_index
        return nbytes

    # -- the round ---------------------------------------------------------

    def adapt_round(self, p: PeerId, round_index: int) -> RoundReport:
        cfg = self.cfg
        report = RoundReport(peer=p.name, round_index=round_index,
                             capacity_bytes=self.capacities[p.name])
        stats = self.stats[p.name]
        workload = stats.workload()
        own_views = sorted(
            (v for v in self.catalog.views.values() if v.holder.name == p.name),
            key=lambda v: v.view_id,
        )
        other_texts = {
            v.canonical_text for v in self.catalog.views.values() if v.holder.name != p.name
        }
        base_views = [v for v in self.catalog.views.values() if v.holder.name != p.name]

        # candidate pool: workload lattice plus re-candidates for current views
        pool: dict[str, Candidate] = {}
        for c in enumerate_candidates(workload, cfg):
            if c.canonical_text in other_texts:
                continue  # identical view already held elsewhere; no replication
            pool[c.canonical_text] = c
        for v in own_views:
            pool[v.canonical_text] = Candidate(
                pattern=v.pattern, provenance="existing", existing=v,
                estimated_bytes=v.actual_bytes or 0,
            )

        scored: list[Candidate] = []
        for text in sorted(pool):
            c = pool[text]
            if c.existing is None:
                c = replace(c, estimated_bytes=self.estimate_view_size(p, c.pattern))
            b = self.benefit(c, workload, base_views, p)
            c = replace(c, benefit=b)
            scored.append(c)
            report.scores.append(
                {
                    "pattern": c.canonical_text,
                    "provenance": c.provenance,
                    "estimatedBytes": c.estimated_bytes,
                    "benefit": c.benefit,
                    "ratio": c.ratio,
                }
            )

        # greedy admission by benefit-to-size ratio
        order = sorted(scored, key=lambda c: (-c.ratio, c.estimated_bytes, c.canonical_text))
        capacity = self.capacities[p.name]
        admitted, used = greedy_admit(order, capacity)

        # hysteresis: a non-admitted existing view survives unless a new
        # admitted candidate both needed its space and beats it by theta
        for c in order:
            if c.existing is None or c in admitted:
                continue
            if used + c.estimated_bytes <= capacity:
                admitted.append(c)
                used += c.estimated_bytes
                continue
            new_admitted = sorted(
                (a for a in admitted if a.existing is None),
                key=lambda a: (a.ratio, a.canonical_text),
            )
            evictable = []
            freed = 0
            beaten = True
            for a in new_admitted:
                if used - freed + c.estimated_bytes <= capacity:
                    break
                if a.ratio < cfg.theta * c.ratio:
                    beaten = False
                evictable.append(a)
                freed += a.estimated_bytes
            if used - freed + c.estimated_bytes <= capacity and not beaten:
                for a in evictable:
                    admitted.remove(a)
                used -= freed
                admitted.append(c)
                used += c.estimated_bytes
            # else: the new candidates genuinely beat it; it will be dropped

        kept_ids = {c.existing.view_id for c in admitted if c.existing is not None}
        drops = [v for v in own_views if v.view_id not in kept_ids]
        adds = [c for c in admitted if c.existing is None]

        for v in drops:
            self.catalog.retract_view(v.view_id)
            self.budgets[p.name] -= v.actual_bytes or 0
            report.dropped.append({"view": v.view_id, "pattern": v.canonical_text})

        adds.sort(key=lambda c: (-c.ratio, c.estimated_bytes, c.canonical_text))
        for c in adds:
            view = ViewDef(
                view_id=make_view_id(c.pattern, p),
                pattern=c.pattern,
                holder=p,
                estimated_bytes=c.estimated_bytes,
            )
            nbytes = self.materialize(p, view, round_index)
            if nbytes > capacity:
                self.catalog.extents.pop(view.view_id, None)
                report.discarded.append(
                    {"pattern": c.canonical_text, "actualBytes": nbytes}
                )
                continue
            # actual size may overflow the estimate; evict lowest-ratio
            # freshly added views until the budget holds again
            if self.budgets[p.name] + nbytes > capacity:
                current = sorted(
                    (v for v in self.catalog.views.values() if v.holder.name == p.name),
                    key=lambda v: v.view_id,
                )
                ratios = {a.canonical_text: a.ratio for a in admitted}
                victims = sorted(
                    current,
                    key=lambda v: (ratios.get(v.canonical_text, 0.0), v.canonical_text),
                )
                for victim in victims:
                    if self.budgets[p.name] + nbytes <= capacity:
                        break
                    self.catalog.retract_view(victim.view_id)
                    self.budgets[p.name] -= victim.actual_bytes or 0
                    report.dropped.append(
                        {"view": victim.view_id, "pattern": victim.canonical_text}
                    )
                if self.budgets[p.name] + nbytes > capacity:
                    self.catalog.extents.pop(view.view_id, None)
                    report.discarded.append(
                        {"pattern": c.canonical_text, "actualBytes": nbytes}
                    )
                    continue
            self.catalog.advertise_view(view)
            self.budgets[p.name] += nbytes
            report.added.append(
                {
                    "view": view.view_id,
                    "pattern": c.canonical_text,
                    "estimatedBytes": c.estimated_bytes,
                    "actualBytes": nbytes,
                    "benefit": c.benefit,
                    "ratio": c.ratio,
                }
            )

        stats.reset()
        self._uri_cache.clear()
        report.used_bytes = self.budgets[p.name]
        assert report.used_bytes <= capacity, "budget invariant violated"
        return report
