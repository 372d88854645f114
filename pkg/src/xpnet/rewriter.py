"""View-based rewriting, plan costing, plan execution, and the DocShip fallback.

Rewriting is sound but deliberately incomplete: plans combine at most
``max_views_per_plan`` view scans through IdJoin / StructJoin, compensate
missing structure by navigating stored subtrees (cont columns) and missing
predicates by selections over stored values. Every enumerated plan is
checked against the exhaustive-evaluation oracle in the test suite.

Column naming: a query-level column is ``(pattern_idx, node_key, ann)``
where ``node_key`` is the node's key in the original parsed pattern; pruned
sub-patterns keep the original keys, so plan operators can always name the
query nodes they serve.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .catalog import Catalog, NotFoundError, ViewDef, table_payload_bytes
from .overlay import Network, PeerId
from .pattern import (
    CHILD,
    DESC,
    PatternNode,
    QuerySpec,
    Table,
    TreePattern,
    embed_pattern,
    evaluate_pattern,
    join_tables,
    pattern_terms,
    union_tables,
)
from .xml_model import parse_document
from .synopsis import estimate_contribution
from .xml_model import tokenize


class ExecutionError(RuntimeError):
    pass


class PlanContractError(ValueError):
    pass


@dataclass
class RewriterConfig:
    query_bytes: int = 256
    view_lookup_bytes: int = 96  # key overhead + one message header
    max_views_per_plan: int = 2


# ---------------------------------------------------------------------------
# Plan operators


@dataclass(frozen=True)
class ViewScan:
    view_id: str
    holder_name: str
    estimated_bytes: int
    colmap: tuple  # ((view_col, out_col), ...)

    @property
    def cols(self):
        return tuple(oc for _, oc in self.colmap)


@dataclass(frozen=True)
class DocShip:
    uris: tuple
    pattern: TreePattern
    pattern_idx: int
    cols: tuple
    n_lookups: int


@dataclass(frozen=True)
class Navigate:
    input: object
    cont_col: tuple
    subpattern: TreePattern
    pattern_idx: int
    added: tuple  # out cols appended, each (pi, key, ann)

    @property
    def cols(self):
        return self.input.cols + self.added


@dataclass(frozen=True)
class Select:
    input: object
    col: tuple
    predicate: tuple  # ("eq", text) | ("word", w) | ("coleq", other_col)

    @property
    def cols(self):
        return self.input.cols


@dataclass(frozen=True)
class IdJoin:
    left: object
    right: object
    shared_col: tuple

    @property
    def cols(self):
        return self.left.cols + tuple(c for c in self.right.cols if c not in self.left.cols)


@dataclass(frozen=True)
class StructJoin:
    left: object
    right: object
    ancestor_col: tuple
    descendant_col: tuple

    @property
    def cols(self):
        return self.left.cols + tuple(c for c in self.right.cols if c not in self.left.cols)


@dataclass(frozen=True)
class ValJoin:
    left: object
    right: object
    pairs: tuple

    @property
    def cols(self):
        return self.left.cols + tuple(c for c in self.right.cols if c not in self.left.cols)


@dataclass(frozen=True)
class Project:
    input: object
    cols: tuple


@dataclass(frozen=True)
class CostEstimate:
    bytes: int
    breakdown: tuple  # ((description, bytes), ...)


def plan_leaves(plan):
    if isinstance(plan, (ViewScan, DocShip)):
        yield plan
    elif isinstance(plan, (Navigate, Select, Project)):
        yield from plan_leaves(plan.input)
    else:
        yield from plan_leaves(plan.left)
        yield from plan_leaves(plan.right)


def plan_view_ids(plan):
    return sorted(l.view_id for l in plan_leaves(plan) if isinstance(l, ViewScan))


def _col_str(col):
    pi, key, ann = col
    return f"p{pi}/{'.'.join(map(str, key)) or 'root'}:{ann}"


def plan_to_dict(plan) -> dict:
    from .pattern import unparse_pattern

    if isinstance(plan, ViewScan):
        return {
            "op": "ViewScan",
            "view": plan.view_id,
            "holder": plan.holder_name,
            "estimatedBytes": plan.estimated_bytes,
            "columns": [_col_str(c) for c in plan.cols],
        }
    if isinstance(plan, DocShip):
        return {
            "op": "DocShip",
            "uris": list(plan.uris),
            "pattern": unparse_pattern(plan.pattern),
            "columns": [_col_str(c) for c in plan.cols],
        }
    if isinstance(plan, Navigate):
        return {
            "op": "Navigate",
            "contColumn": _col_str(plan.cont_col),
            "subPattern": unparse_pattern(plan.subpattern),
            "children": [plan_to_dict(plan.input)],
        }
    if isinstance(plan, Select):
        pred = plan.predicate
        rendered = _col_str(pred[1]) if pred[0] == "coleq" else pred[1]
        return {
            "op": "Select",
            "column": _col_str(plan.col),
            "predicate": [pred[0], rendered],
            "children": [plan_to_dict(plan.input)],
        }
    if isinstance(plan, IdJoin):
        return {
            "op": "IdJoin",
            "sharedColumn": _col_str(plan.shared_col),
            "children": [plan_to_dict(plan.left), plan_to_dict(plan.right)],
        }
    if isinstance(plan, StructJoin):
        return {
            "op": "StructJoin",
            "ancestor": _col_str(plan.ancestor_col),
            "descendant": _col_str(plan.descendant_col),
            "children": [plan_to_dict(plan.left), plan_to_dict(plan.right)],
        }
    if isinstance(plan, ValJoin):
        return {
            "op": "ValJoin",
            "pairs": [[_col_str(a), _col_str(b)] for a, b in plan.pairs],
            "children": [plan_to_dict(plan.left), plan_to_dict(plan.right)],
        }
    return {
        "op": "Project",
        "columns": [_col_str(c) for c in plan.cols],
        "children": [plan_to_dict(plan.input)],
    }


# ---------------------------------------------------------------------------
# Pattern helpers


def _subtree_keys(node: PatternNode):
    keys = set()
    stack = [node]
    while stack:
        n = stack.pop()
        keys.add(n.key)
        stack.extend(n.children)
    return keys


def _replace_node(root: PatternNode, target_key: tuple, new):
    """Rebuild root with the node whose key is target_key replaced (None = removed)."""
    if root.key == target_key:
        return new
    kids = []
    for c in root.children:
        r = _replace_node(c, target_key, new)
        if r is not None:
            kids.append(r)
    return replace(root, children=tuple(kids))


def doc_lookup_terms(pattern: TreePattern):
    """Label-only terms used to locate candidate documents.

    Word terms from predicates are deliberately excluded here: a value can
    straddle several text runs, so its tokenized words need not appear in
    the document term index, and document location must stay a superset.
    """
    return {t for t in pattern_terms(pattern) if t.kind == "label"}


# ---------------------------------------------------------------------------
# Rewriter


class Rewriter:
    def __init__(self, catalog: Catalog, network: Network, cfg: RewriterConfig | None = None):
        self.catalog = catalog
        self.network = network
        self.cfg = cfg or RewriterConfig()

    # -- single-view coverage ---------------------------------------------

    def _try_single_view(self, pat: TreePattern, pi: int, required: frozenset, view: ViewDef):
        """All plans answering `pat` (required cols) from `view` alone."""
        plans = []
        vpat = view.pattern
        vnode_by_key = {n.key: n for n in vpat.nodes()}
        v_order = [n.key for n in vpat.nodes()]
        v_parent = {}
        for n in vpat.nodes():
            for c in n.children:
                v_parent[c.key] = n.key
        for phi in embed_pattern(vpat, pat):
            if phi.get(()) != pat.root.key:
                continue
            if pat.root.axis == DESC and vpat.root.axis != DESC:
                continue
            if pat.root.axis == CHILD and vpat.root.axis != CHILD:
                continue
            preimages: dict[tuple, list] = {}
            for vkey in v_order:
                preimages.setdefault(phi[vkey], []).append(vkey)
            plan = self._build_cover_plan(pat, pi, required, view, vnode_by_key, v_parent, preimages)
            if plan is not None:
                plans.append(plan)
        return plans

    def _build_cover_plan(self, pat, pi, required, view, vnode_by_key, v_parent, preimages):
        # chosen preimage per pattern node: prefer a v-node that is a v-child of
        # the parent's choice with the same axis, so edges realize structurally
        w: dict[tuple, tuple] = {}

        def choose(qnode: PatternNode, parent_choice):
            cands = preimages.get(qnode.key, [])
            if not cands:
                return None
            if parent_choice is None:
                return cands[0]
            for vk in cands:
                if v_parent.get(vk) == parent_choice and vnode_by_key[vk].axis == qnode.axis:
                    return vk
            return cands[0]

        vcols: list = []  # (view_col, out_col)
        selects: list = []
        navigates: list = []  # (anchor_key, navroot)

        def req_anns(key):
            return {ann for (p, k, ann) in required if p == pi and k == key}

        def cover(qnode: PatternNode, parent_choice) -> bool:
            vk = choose(qnode, parent_choice)
            if vk is None:
                return False
            w[qnode.key] = vk
            vn = vnode_by_key[vk]
            v_anns = vn.effective_annotations()
            req = req_anns(qnode.key)
            if "id" in req:
                if "id" not in v_anns:
                    return False
                vcols.append(((vk, "id"), (pi, qnode.key, "id")))
            if "cont" in req:
                if "cont" not in v_anns:
                    return False
                vcols.append(((vk, "cont"), (pi, qnode.key, "cont")))
            val_gap = False
            if "val" in req:
                if "val" in v_anns:
                    vcols.append(((vk, "val"), (pi, qnode.key, "val")))
                else:
                    val_gap = True
            pred_gap = qnode.predicate is not None and vn.predicate != qnode.predicate
            pred_by_select = False
            if pred_gap and "val" in v_anns:
                pred_by_select = True
            # a wildcard view node matches every label, so its rows are a
            # superset of qnode's; only re-checking the label against the
            # stored cont (whose root tag is the node's own label) is sound
            label_gap = vn.label == "*" and qnode.label != "*"
            nav_branches = []
            for c in qnode.children:
                ck = choose(c, vk)
                edge_ok = (
                    ck is not None
                    and v_parent.get(ck) == vk
                    and vnode_by_key[ck].axis == c.axis
                )
                if edge_ok:
                    marks = (len(vcols), len(selects), len(navigates))
                    if cover(c, vk):
                        continue
                    del vcols[marks[0] :], selects[marks[1] :], navigates[marks[2] :]
                nav_branches.append(c)
            need_nav = val_gap or (pred_gap and not pred_by_select) or nav_branches or label_gap
            if need_nav:
                if "cont" not in v_anns:
                    return False
                for c in nav_branches:
                    for k in _subtree_keys(c):
                        if "id" in req_anns(k):
                            return False
                cont_col = (pi, qnode.key, "cont")
                if ((vk, "cont"), cont_col) not in vcols:
                    vcols.append(((vk, "cont"), cont_col))
                navroot = replace(
                    qnode,
                    axis=CHILD,
                    predicate=qnode.predicate if pred_gap else None,
                    annotations=frozenset({"val"}) if val_gap else frozenset(),
                    variable=None,
                    children=tuple(nav_branches),
                )
                navigates.append((cont_col, TreePattern(navroot)))
            elif pred_by_select and pred_gap:
                sel_col = (pi, qnode.key, "val")
                if ((vk, "val"), sel_col) not in vcols:
                    vcols.append(((vk, "val"), sel_col))
                selects.append((sel_col, qnode.predicate))
            elif pred_gap:
                return False
            return True

        if not cover(pat.root, None):
            return None

        plan = ViewScan(
            view_id=view.view_id,
            holder_name=view.holder.name,
            estimated_bytes=view.estimated_bytes,
            colmap=tuple(vcols),
        )
        for cont_col, subpattern in navigates:
            added = tuple((pi, key, ann) for key, ann in subpattern.columns())
            plan = Navigate(plan, cont_col, subpattern, pi, added)
        for col, predicate in selects:
            plan = Select(plan, col, predicate)
        out = tuple(sorted(required))
        if plan.cols != out:
            plan = Project(plan, out)
        return plan

    # -- split assembly ----------------------------------------------------

    def _pattern_plans(self, pat, pi, required, views, budget):
        plans: dict = {}
        for view in sorted(views, key=lambda v: v.view_id):
            for p in self._try_single_view(pat, pi, required, view):
                plans[p] = 1
        if budget >= 2:
            parent_of = {}
            for n in pat.nodes():
                for c in n.children:
                    parent_of[c.key] = n
            for node in pat.nodes():
                if node.key == pat.root.key:
                    continue
                parent = parent_of[node.key]
                inside = _subtree_keys(node)
                req_inside = frozenset(c for c in required if c[1] in inside)
                req_outside = frozenset(c for c in required if c[1] not in inside)
                node_id_col = (pi, node.key, "id")
                parent_id_col = (pi, parent.key, "id")

                def single_view_plans(sub_pat, req):
                    out: dict = {}
                    for view in sorted(views, key=lambda v: v.view_id):
                        for p in self._try_single_view(sub_pat, pi, req, view):
                            out[p] = 1
                    return out

                def combine(q1, req1, rights, make_join):
                    for lp, ln in self._pattern_plans(q1, pi, req1, views, budget - 1).items():
                        if ln + 1 <= budget:
                            for rp in rights:
                                plans[make_join(lp, rp)] = ln + 1

                # IdJoin at the node itself: upper pattern keeps it as a bare
                # leaf with id, the second view answers the whole subtree
                sub_self = TreePattern(replace(node, axis=DESC))
                rights = single_view_plans(sub_self, req_inside | {node_id_col})
                if rights:
                    leaf = replace(
                        node,
                        children=(),
                        predicate=None,
                        annotations=frozenset(),
                        variable=None,
                    )
                    q1 = TreePattern(_replace_node(pat.root, node.key, leaf))
                    combine(
                        q1,
                        req_outside | {node_id_col},
                        rights,
                        lambda lp, rp: IdJoin(lp, rp, node_id_col),
                    )
                    # StructJoin variant: descendant edges only; the upper
                    # pattern drops the subtree and provides the parent's id
                    if node.axis == DESC:
                        q1s = TreePattern(_replace_node(pat.root, node.key, None))
                        combine(
                            q1s,
                            req_outside | {parent_id_col},
                            rights,
                            lambda lp, rp: StructJoin(lp, rp, parent_id_col, node_id_col),
                        )
                # IdJoin at the parent: the second view re-anchors the branch
                # under a bare copy of the parent and both sides join on its id
                anchor = replace(
                    parent,
                    axis=DESC,
                    annotations=frozenset(),
                    predicate=None,
                    variable=None,
                    children=(node,),
                )
                rights = single_view_plans(TreePattern(anchor), req_inside | {parent_id_col})
                if rights:
                    q1b = TreePattern(_replace_node(pat.root, node.key, None))
                    combine(
                        q1b,
                        req_outside | {parent_id_col},
                        rights,
                        lambda lp, rp: IdJoin(lp, rp, parent_id_col),
                    )
        return plans

    # -- query-level assembly ---------------------------------------------

    def _required_cols(self, q: QuerySpec):
        req = [set() for _ in q.patterns]
        for pi, key, ann in q.output:
            req[pi].add((pi, key, ann))
        for a, b in q.joins:
            for var in (a, b):
                col = q.variable_column(var)
                req[col[0]].add(col)
        return [frozenset(r) for r in req]

    def _docship_leaf(self, pat, pi, required, origin, category, uri_memo):
        if pi not in uri_memo:  # one index resolution per pattern per planning call
            terms = doc_lookup_terms(pat)
            if terms:
                uris = self.catalog.lookup_documents(origin, terms, category)
                n_lookups = len(terms)
            else:
                uris = self.catalog.all_uris()
                n_lookups = 1
            uri_memo[pi] = (tuple(uris), n_lookups)
        uris, n_lookups = uri_memo[pi]
        return DocShip(uris, pat, pi, tuple(sorted(required)), n_lookups)

    def _assemble(self, q: QuerySpec, per_pattern_plans):
        """Chain per-pattern plans with value joins and project to q.output."""
        plan = None
        joined: set[int] = set()
        for pi, sub in enumerate(per_pattern_plans):
            if plan is None:
                plan = sub
            else:
                pairs = []
                for a, b in q.joins:
                    ca, cb = q.variable_column(a), q.variable_column(b)
                    if ca[0] in joined and cb[0] == pi:
                        pairs.append((ca, cb))
                    elif cb[0] in joined and ca[0] == pi:
                        pairs.append((cb, ca))
                plan = ValJoin(plan, sub, tuple(pairs))
            joined.add(pi)
        # same-pattern joins (both variables in one pattern) become filters
        for a, b in q.joins:
            ca, cb = q.variable_column(a), q.variable_column(b)
            if ca[0] == cb[0]:
                plan = Select(plan, ca, ("coleq", cb))
        if plan.cols != q.output:
            plan = Project(plan, q.output)
        return plan

    def enumerate_rewritings(self, q: QuerySpec, views, max_views=None, origin=None,
                             category="queryExecution", uri_memo=None):
        """All bounded view-based plans for q (≥ 1 view scan each)."""
        max_views = max_views or self.cfg.max_views_per_plan
        origin = origin or self.network.peers[0]
        required = self._required_cols(q)
        uri_memo = {} if uri_memo is None else uri_memo
        options = []
        for pi, pat in enumerate(q.patterns):
            view_plans = self._pattern_plans(pat, pi, required[pi], views, max_views)
            fallback = self._docship_leaf(pat, pi, required[pi], origin, category, uri_memo)
            ordered = sorted(view_plans.items(), key=lambda kv: _plan_sort_key(kv[0]))
            options.append(ordered + [(fallback, 0)])
        results: dict = {}

        def combine(idx, chosen, used):
            if idx == len(options):
                if used >= 1:
                    plan = self._assemble(q, chosen)
                    results[plan] = used
                return
            for p, n in options[idx]:
                if used + n <= max_views:
                    combine(idx + 1, chosen + [p], used + n)

        combine(0, [], 0)
        return list(results)

    def fallback_plan(self, q: QuerySpec, origin, category="queryExecution", uri_memo=None):
        required = self._required_cols(q)
        uri_memo = {} if uri_memo is None else uri_memo
        leaves = [
            self._docship_leaf(pat, pi, required[pi], origin, category, uri_memo)
            for pi, pat in enumerate(q.patterns)
        ]
        return self._assemble(q, leaves)

    # -- costing -----------------------------------------------------------

    def plan_cost(self, plan, query_peer: PeerId) -> CostEstimate:
        breakdown = []
        lookups = 0
        for leaf in plan_leaves(plan):
            if isinstance(leaf, ViewScan):
                lookups += 1
                if leaf.holder_name == query_peer.name:
                    breakdown.append((f"view {leaf.view_id} (local)", 0))
                else:
                    if leaf.estimated_bytes is None:
                        raise PlanContractError(f"view {leaf.view_id} has no size estimate")
                    breakdown.append(
                        (
                            f"view {leaf.view_id} @ {leaf.holder_name}",
                            leaf.estimated_bytes + self.network.cfg.msg_header_bytes,
                        )
                    )
            else:
                lookups += leaf.n_lookups
                total = 0
                for uri in leaf.uris:
                    syn = self.catalog.local_synopses[uri]
                    total += (
                        estimate_contribution(syn, leaf.pattern)
                        + self.cfg.query_bytes
                        + self.network.cfg.msg_header_bytes
                    )
                breakdown.append((f"docship x{len(leaf.uris)}", total))
        breakdown.append(("lookups", lookups * self.cfg.view_lookup_bytes))
        return CostEstimate(sum(b for _, b in breakdown), tuple(breakdown))

    def best_plan(self, q: QuerySpec, views, query_peer: PeerId, category="queryExecution"):
        uri_memo: dict = {}
        candidates = self.enumerate_rewritings(
            q, views, self.cfg.max_views_per_plan, query_peer, category, uri_memo
        )
        candidates.append(self.fallback_plan(q, query_peer, category, uri_memo))
        scored = []
        for plan in candidates:
            cost = self.plan_cost(plan, query_peer)
            scored.append(
                (
                    cost.bytes,
                    sum(1 for _ in plan_leaves(plan)),
                    plan_view_ids(plan),
                    json.dumps(plan_to_dict(plan), sort_keys=True),
                    plan,
                    cost,
                )
            )
        scored.sort(key=lambda t: t[:4])
        best = scored[0]
        return best[4], best[5]

    # -- execution ---------------------------------------------------------

    def execute_plan(self, plan, query_peer: PeerId):
        """Run the plan at query_peer; returns (Table, helper peer names)."""
        helpers: set[str] = set()
        table = self._execute(plan, query_peer, helpers)
        return table, helpers

    def _execute(self, plan, qp: PeerId, helpers) -> Table:
        if isinstance(plan, ViewScan):
            try:
                extent = self.catalog.extent(plan.view_id)
            except NotFoundError as exc:
                raise ExecutionError(str(exc)) from exc
            holder = self.network.peer(plan.holder_name)
            self.network.ship(holder, qp, table_payload_bytes(extent), "queryExecution")
            if holder.name != qp.name:
                helpers.add(holder.name)
            idx = {c: i for i, c in enumerate(extent.header)}
            rows = frozenset(
                tuple(r[idx[vc]] for vc, _ in plan.colmap) for r in extent.rows
            )
            return Table(plan.cols, rows)
        if isinstance(plan, DocShip):
            tables = []
            pat_cols = [(plan.pattern_idx, key, ann) for key, ann in plan.pattern.columns()]
            sel = [pat_cols.index(c) for c in plan.cols]
            for uri in plan.uris:
                doc = self.catalog.document(uri)
                holder = self.catalog.holder_of(uri)
                self.network.ship(qp, holder, self.cfg.query_bytes, "queryExecution")
                t = evaluate_pattern(doc, plan.pattern)
                rows = frozenset(tuple(r[i] for i in sel) for r in t.rows)
                result = Table(plan.cols, rows)
                self.network.ship(holder, qp, table_payload_bytes(result), "queryExecution")
                if holder.name != qp.name:
                    helpers.add(holder.name)
                tables.append(result)
            if not tables:
                return Table(plan.cols, frozenset())
            return union_tables(tables)
        if isinstance(plan, Navigate):
            inp = self._execute(plan.input, qp, helpers)
            ci = inp.header.index(plan.cont_col)
            sub_cols = plan.subpattern.columns()
            sel = [sub_cols.index((key, ann)) for _, key, ann in plan.added]
            rows = set()
            for row in inp.rows:
                mini = parse_document(row[ci], "nav:")
                sub = evaluate_pattern(mini, plan.subpattern)
                for srow in sub.rows:
                    rows.add(row + tuple(srow[i] for i in sel))
            return Table(inp.header + plan.added, frozenset(rows))
        if isinstance(plan, Select):
            inp = self._execute(plan.input, qp, helpers)
            ci = inp.header.index(plan.col)
            kind = plan.predicate[0]
            if kind == "eq":
                keep = lambda r: r[ci] == plan.predicate[1]
            elif kind == "word":
                keep = lambda r: plan.predicate[1] in tokenize(r[ci])
            else:
                oi = inp.header.index(plan.predicate[1])
                keep = lambda r: r[ci] == r[oi]
            return Table(inp.header, frozenset(r for r in inp.rows if keep(r)))
        if isinstance(plan, IdJoin):
            left = self._execute(plan.left, qp, helpers)
            right = self._execute(plan.right, qp, helpers)
            return join_tables(left, right, [])
        if isinstance(plan, StructJoin):
            left = self._execute(plan.left, qp, helpers)
            right = self._execute(plan.right, qp, helpers)
            return join_tables(
                left, right, [(plan.ancestor_col, plan.descendant_col)], containment=True
            )
        if isinstance(plan, ValJoin):
            left = self._execute(plan.left, qp, helpers)
            right = self._execute(plan.right, qp, helpers)
            return join_tables(left, right, plan.pairs)
        inp = self._execute(plan.input, qp, helpers)
        return inp.project(plan.cols)


def _plan_sort_key(plan):
    return json.dumps(plan_to_dict(plan), sort_keys=True)
