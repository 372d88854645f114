"""Conjunctive tree patterns with value joins: grammar, evaluation, embeddings.

evaluate_pattern / evaluate_query enumerate embeddings exhaustively; they are
the correctness oracle every other query path is checked against. Patterns
are immutable; every node carries a `key` (its child-index path) so pruned or
rewritten copies can still name the original query nodes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from .xml_model import (
    Document,
    Element,
    NodeId,
    id_contains,
    node_value,
    serialize_subtree,
    tokenize,
)

CHILD = "child"
DESC = "desc"

ANN_ORDER = ("id", "val", "cont")


class QuerySyntaxError(ValueError):
    pass


@dataclass(frozen=True)
class PatternNode:
    label: str  # "*" is the wildcard
    axis: str  # CHILD | DESC; root axis DESC means "anywhere in the document"
    annotations: frozenset = frozenset()
    predicate: tuple | None = None  # ("eq", text) | ("word", word)
    variable: str | None = None
    children: tuple = ()
    key: tuple = ()

    def effective_annotations(self) -> frozenset:
        """Variables bind the node's val, so they imply a val column."""
        if self.variable is not None:
            return self.annotations | {"val"}
        return self.annotations


@dataclass(frozen=True)
class TreePattern:
    root: PatternNode

    def nodes(self):
        stack = [self.root]
        while stack:
            n = stack.pop()
            yield n
            stack.extend(reversed(n.children))

    def node_by_key(self, key: tuple) -> PatternNode:
        n = self.root
        for i in key:
            n = n.children[i]
        return n

    def columns(self) -> tuple:
        """(key, ann) output columns: annotated nodes in preorder, anns in fixed order."""
        cols = []
        for n in self.nodes():
            for ann in ANN_ORDER:
                if ann in n.effective_annotations():
                    cols.append((n.key, ann))
        return tuple(cols)


@dataclass(frozen=True)
class QuerySpec:
    patterns: tuple  # tuple[TreePattern, ...]
    joins: tuple = ()  # tuple[(varA, varB), ...]
    # output columns: ((pattern_idx, node_key, ann), ...)
    output: tuple = ()

    def variable_column(self, var: str) -> tuple:
        for pi, pat in enumerate(self.patterns):
            for n in pat.nodes():
                if n.variable == var:
                    return (pi, n.key, "val")
        raise KeyError(var)


@dataclass(frozen=True)
class Table:
    header: tuple  # column names
    rows: frozenset  # frozenset of value tuples

    def column_index(self, col) -> int:
        return self.header.index(col)

    def project(self, cols) -> "Table":
        idx = [self.header.index(c) for c in cols]
        return Table(tuple(cols), frozenset(tuple(r[i] for i in idx) for r in self.rows))


EMPTY_TABLE = Table((), frozenset())


def rekey(node: PatternNode, key: tuple = ()) -> PatternNode:
    kids = tuple(rekey(c, key + (i,)) for i, c in enumerate(node.children))
    return replace(node, key=key, children=kids)


# ---------------------------------------------------------------------------
# Grammar

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<daxis>//)
  | (?P<axis>/)
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<lbrace>\{)
  | (?P<rbrace>\})
  | (?P<lbrack>\[)
  | (?P<rbrack>\])
  | (?P<semi>;)
  | (?P<comma>,)
  | (?P<eq>=)
  | (?P<tilde>~)
  | (?P<star>\*)
  | (?P<var>\$[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<name>[A-Za-z_][A-Za-z0-9_.-]*)
    """,
    re.VERBOSE,
)


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _lex(text: str) -> list[_Token]:
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise QuerySyntaxError(f"line {line}, column {col}: unexpected character {text[pos]!r}")
        kind = m.lastgroup
        tok = m.group()
        if kind != "ws":
            tokens.append(_Token(kind, tok, line, col))
        nl = tok.count("\n")
        if nl:
            line += nl
            col = len(tok) - tok.rfind("\n")
        else:
            col += len(tok)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _lex(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str) -> _Token:
        tok = self.next()
        if tok.kind != kind:
            raise QuerySyntaxError(
                f"line {tok.line}, column {tok.col}: expected {kind}, got {tok.text!r}"
            )
        return tok

    def error(self, msg: str):
        tok = self.peek()
        raise QuerySyntaxError(f"line {tok.line}, column {tok.col}: {msg}")

    def parse_query(self) -> QuerySpec:
        patterns = [self.parse_pattern()]
        while self.peek().kind == "semi":
            self.next()
            patterns.append(self.parse_pattern())
        joins = []
        if self.peek().kind == "name" and self.peek().text == "WHERE":
            self.next()
            joins.append(self.parse_cond())
            while self.peek().kind == "comma":
                self.next()
                joins.append(self.parse_cond())
        if self.peek().kind != "eof":
            self.error(f"trailing input {self.peek().text!r}")
        return _assemble_query(patterns, joins)

    def parse_pattern(self) -> PatternNode:
        return self.parse_node()

    def parse_node(self) -> PatternNode:
        self.expect("lparen")
        tok = self.next()
        if tok.kind == "daxis":
            axis = DESC
        elif tok.kind == "axis":
            axis = CHILD
        else:
            raise QuerySyntaxError(f"line {tok.line}, column {tok.col}: expected axis, got {tok.text!r}")
        tok = self.next()
        if tok.kind == "name":
            label = tok.text
        elif tok.kind == "star":
            label = "*"
        else:
            raise QuerySyntaxError(f"line {tok.line}, column {tok.col}: expected label, got {tok.text!r}")
        variable = None
        if self.peek().kind == "var":
            variable = self.next().text[1:]
        # annotations and predicate are each optional, in either order
        annotations = frozenset()
        predicate = None
        while self.peek().kind in ("lbrace", "lbrack"):
            if self.peek().kind == "lbrace":
                if annotations:
                    self.error("duplicate annotation block")
                self.next()
                anns = []
                while True:
                    tok = self.expect("name")
                    if tok.text not in ANN_ORDER:
                        raise QuerySyntaxError(
                            f"line {tok.line}, column {tok.col}: unknown annotation {tok.text!r}"
                        )
                    anns.append(tok.text)
                    if self.peek().kind == "comma":
                        self.next()
                        continue
                    break
                self.expect("rbrace")
                annotations = frozenset(anns)
            else:
                if predicate is not None:
                    self.error("duplicate predicate")
                self.next()
                tok = self.next()
                if tok.kind == "eq":
                    s = self.expect("string")
                    text = _unquote(s.text)
                    if not text:
                        raise QuerySyntaxError(f"line {s.line}, column {s.col}: empty predicate text")
                    predicate = ("eq", text)
                elif tok.kind == "tilde":
                    w = self.expect("name")
                    predicate = ("word", w.text.lower())
                else:
                    raise QuerySyntaxError(
                        f"line {tok.line}, column {tok.col}: expected = or ~ in predicate"
                    )
                self.expect("rbrack")
        children = []
        while self.peek().kind == "lparen":
            children.append(self.parse_node())
        self.expect("rparen")
        return PatternNode(
            label=label,
            axis=axis,
            annotations=annotations,
            predicate=predicate,
            variable=variable,
            children=tuple(children),
        )

    def parse_cond(self) -> tuple:
        a = self.expect("var").text[1:]
        self.expect("eq")
        b = self.expect("var").text[1:]
        return (a, b)


def _unquote(s: str) -> str:
    body = s[1:-1]
    return body.replace('\\"', '"').replace("\\\\", "\\")


def _assemble_query(patterns: list[PatternNode], joins: list[tuple]) -> QuerySpec:
    pats = tuple(TreePattern(rekey(p)) for p in patterns)
    seen_vars: dict[str, int] = {}
    for pi, pat in enumerate(pats):
        for n in pat.nodes():
            if n.variable is not None:
                if n.variable in seen_vars:
                    raise QuerySyntaxError(f"duplicate variable ${n.variable}")
                seen_vars[n.variable] = pi
    for a, b in joins:
        for v in (a, b):
            if v not in seen_vars:
                raise QuerySyntaxError(f"join on undeclared variable ${v}")
    output = []
    for pi, pat in enumerate(pats):
        cols = pat.columns()
        if not cols:
            raise QuerySyntaxError("every pattern needs an annotated or variable-bound node")
        output.extend((pi, key, ann) for key, ann in cols)
    output = tuple(output)
    return QuerySpec(patterns=pats, joins=tuple(joins), output=output)


def parse_query(text: str) -> QuerySpec:
    return _Parser(text).parse_query()


def parse_pattern(text: str) -> TreePattern:
    q = parse_query(text)
    if len(q.patterns) != 1:
        raise QuerySyntaxError("expected a single pattern")
    return q.patterns[0]


def unparse_node(n: PatternNode) -> str:
    parts = ["(", "//" if n.axis == DESC else "/", n.label]
    if n.variable is not None:
        parts.append(f" ${n.variable}")
    anns = [a for a in ANN_ORDER if a in n.annotations]
    if anns:
        parts.append(" {" + ",".join(anns) + "}")
    if n.predicate is not None:
        if n.predicate[0] == "eq":
            text = n.predicate[1].replace("\\", "\\\\").replace('"', '\\"')
            parts.append(f' [= "{text}"]')
        else:
            parts.append(f" [~ {n.predicate[1]}]")
    for c in n.children:
        parts.append(" " + unparse_node(c))
    parts.append(")")
    return "".join(parts)


def unparse_pattern(p: TreePattern) -> str:
    return unparse_node(p.root)


def unparse_query(q: QuerySpec) -> str:
    text = "; ".join(unparse_pattern(p) for p in q.patterns)
    if q.joins:
        text += " WHERE " + ", ".join(f"${a}=${b}" for a, b in q.joins)
    return text


def canonical_pattern_text(p: TreePattern) -> str:
    """Canonical form used for dedup and view identity: variables become val."""
    def strip(n: PatternNode) -> PatternNode:
        anns = n.annotations | ({"val"} if n.variable is not None else frozenset())
        return replace(
            n,
            annotations=frozenset(anns),
            variable=None,
            children=tuple(strip(c) for c in n.children),
        )

    return unparse_node(strip(p.root))


# ---------------------------------------------------------------------------
# Evaluation (the oracle)


def _descendant_elements(el: Element):
    stack = [c for c in el.children if isinstance(c, Element)]
    while stack:
        e = stack.pop()
        yield e
        stack.extend(c for c in e.children if isinstance(c, Element))


def _node_satisfies(d: Document, pnode: PatternNode, el: Element) -> bool:
    if pnode.label != "*" and pnode.label != el.label:
        return False
    if pnode.predicate is not None:
        kind, arg = pnode.predicate
        value = node_value(d, el.nid)
        if kind == "eq":
            if value != arg:
                return False
        else:
            if arg not in tokenize(value):
                return False
    return True


def _embeddings(d: Document, pnode: PatternNode, el: Element):
    """Yield embeddings (dict key->Element) of the subtree at pnode, rooted at el."""
    if not _node_satisfies(d, pnode, el):
        return
    partial = {pnode.key: el}

    def extend(children, acc):
        if not children:
            yield acc
            return
        c, rest = children[0], children[1:]
        if c.axis == CHILD:
            cands = [k for k in el.children if isinstance(k, Element)]
        else:
            cands = list(_descendant_elements(el))
        for cand in cands:
            for sub in _embeddings(d, c, cand):
                merged = dict(acc)
                merged.update(sub)
                yield from extend(rest, merged)

    yield from extend(list(pnode.children), partial)


def pattern_embeddings(d: Document, p: TreePattern):
    root = p.root
    if root.axis == CHILD:
        candidates = [d.root]
    else:
        candidates = [d.root] + list(_descendant_elements(d.root))
    for el in candidates:
        yield from _embeddings(d, root, el)


def _column_value(d: Document, el: Element, ann: str):
    if ann == "id":
        return el.nid
    if ann == "val":
        return node_value(d, el.nid)
    return serialize_subtree(d, el.nid)


def evaluate_pattern(d: Document, p: TreePattern) -> Table:
    cols = p.columns()
    rows = set()
    for emb in pattern_embeddings(d, p):
        rows.add(tuple(_column_value(d, emb[key], ann) for key, ann in cols))
    return Table(cols, frozenset(rows))


def union_tables(tables) -> Table:
    tables = list(tables)
    if not tables:
        return EMPTY_TABLE
    header = tables[0].header
    rows = set()
    for t in tables:
        if t.header != header:
            raise ValueError("union over mismatched headers")
        rows |= t.rows
    return Table(header, frozenset(rows))


def join_tables(left: Table, right: Table, pairs, containment=False) -> Table:
    """Equijoin on explicit column pairs plus all shared column names.

    With containment=True the single explicit pair is tested with
    id_contains(left_value, right_value) instead of equality.
    """
    shared = [c for c in right.header if c in left.header]
    eq_pairs = list(pairs) + ([] if containment else [(c, c) for c in shared if (c, c) not in pairs])
    li = {c: i for i, c in enumerate(left.header)}
    ri = {c: i for i, c in enumerate(right.header)}
    keep_right = [i for i, c in enumerate(right.header) if c not in left.header]
    header = left.header + tuple(right.header[i] for i in keep_right)
    rows = set()
    for lr in left.rows:
        for rr in right.rows:
            ok = True
            for lc, rc in eq_pairs:
                lv, rv = lr[li[lc]], rr[ri[rc]]
                if containment and (lc, rc) in pairs:
                    if not id_contains(lv, rv):
                        ok = False
                        break
                elif lv != rv:
                    ok = False
                    break
            if ok and containment:
                for c in shared:
                    if lr[li[c]] != rr[ri[c]]:
                        ok = False
                        break
            if ok:
                rows.add(lr + tuple(rr[i] for i in keep_right))
    return Table(header, frozenset(rows))


def _lift(table: Table, pi: int) -> Table:
    header = tuple((pi, key, ann) for key, ann in table.header)
    return Table(header, table.rows)


def evaluate_query(corpus, q: QuerySpec) -> Table:
    docs = sorted(corpus, key=lambda d: d.uri)
    combined = None
    for pi, pat in enumerate(q.patterns):
        tables = [evaluate_pattern(d, pat) for d in docs]
        t = _lift(union_tables(tables) if tables else Table(pat.columns(), frozenset()), pi)
        combined = t if combined is None else join_tables(combined, t, [])
    pairs = [(q.variable_column(a), q.variable_column(b)) for a, b in q.joins]
    li = {c: i for i, c in enumerate(combined.header)}
    rows = frozenset(r for r in combined.rows if all(r[li[a]] == r[li[b]] for a, b in pairs))
    return Table(combined.header, rows).project(q.output)


# ---------------------------------------------------------------------------
# Pattern-to-pattern embeddings (view usability)


def _qnode_descendants(qnode: PatternNode):
    stack = list(qnode.children)
    while stack:
        n = stack.pop()
        yield n
        stack.extend(n.children)


def _embed_node(vnode: PatternNode, qnode: PatternNode):
    """Maps from the v-subtree at vnode into the q-subtree, with vnode -> qnode."""
    if vnode.label != "*" and vnode.label != qnode.label:
        return
    if vnode.predicate is not None and vnode.predicate != qnode.predicate:
        return

    def extend(children, acc):
        if not children:
            yield acc
            return
        c, rest = children[0], children[1:]
        if c.axis == CHILD:
            cands = list(qnode.children)
            cands = [q for q in cands if q.axis == CHILD]
        else:
            cands = list(_qnode_descendants(qnode))
        for cand in cands:
            for sub in _embed_node(c, cand):
                merged = dict(acc)
                merged.update(sub)
                yield from extend(rest, merged)

    yield from extend(list(vnode.children), {vnode.key: qnode.key})


def embed_pattern(v: TreePattern, q: TreePattern):
    """All maps from v-node keys to q-node keys satisfying the embedding rules."""
    results = []
    if v.root.axis == CHILD:
        targets = [q.root] if q.root.axis == CHILD else []
    else:
        targets = [q.root] + list(_qnode_descendants(q.root))
    for target in targets:
        results.extend(_embed_node(v.root, target))
    return results


def pattern_terms(p: TreePattern):
    from .xml_model import Term

    terms = set()
    for n in p.nodes():
        if n.label != "*":
            terms.add(Term("label", n.label.lower()))
        if n.predicate is not None:
            kind, arg = n.predicate
            if kind == "word":
                terms.add(Term("word", arg.lower()))
            else:
                for w in tokenize(arg):
                    terms.add(Term("word", w))
    return terms


def query_terms(q: QuerySpec):
    terms = set()
    for pat in q.patterns:
        terms |= pattern_terms(pat)
    return terms
