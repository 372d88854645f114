"""Per-document dataguide synopses and byte-contribution estimation.

One SynNode per distinct label path, carrying element counts and total
val/cont byte sizes. The contribution estimator embeds a candidate pattern
into the synopsis tree (predicates ignored, so it can only overestimate)
and scales byte totals by the row count at the deepest annotated node.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil

from .xml_model import Document, Element, node_value, serialize_subtree
from .pattern import CHILD, DESC, ANN_ORDER, PatternNode, TreePattern

ID_BYTES = 12  # 4-byte doc ref + 4-byte start + 4-byte end


@dataclass
class SynNode:
    label: str
    count: int = 0
    total_val_bytes: int = 0
    total_cont_bytes: int = 0
    children: dict = field(default_factory=dict)  # label -> SynNode


@dataclass
class Synopsis:
    root: SynNode


def build_synopsis(d: Document) -> Synopsis:
    def build(el: Element, snode: SynNode):
        snode.count += 1
        snode.total_val_bytes += len(node_value(d, el.nid).encode("utf-8"))
        snode.total_cont_bytes += len(serialize_subtree(d, el.nid).encode("utf-8"))
        for c in el.children:
            if isinstance(c, Element):
                child = snode.children.get(c.label)
                if child is None:
                    child = snode.children[c.label] = SynNode(c.label)
                build(c, child)

    root = SynNode(d.root.label)
    build(d.root, root)
    return Synopsis(root)


def _syn_descendants(s: SynNode):
    stack = list(s.children.values())
    while stack:
        n = stack.pop()
        yield n
        stack.extend(n.children.values())


def _syn_embeddings(vnode: PatternNode, snode: SynNode):
    """Embeddings of the pattern subtree into the synopsis tree (predicates ignored)."""
    if vnode.label != "*" and vnode.label != snode.label:
        return

    def extend(children, acc):
        if not children:
            yield acc
            return
        c, rest = children[0], children[1:]
        cands = list(snode.children.values()) if c.axis == CHILD else list(_syn_descendants(snode))
        for cand in cands:
            for sub in _syn_embeddings(c, cand):
                merged = dict(acc)
                merged.update(sub)
                yield from extend(rest, merged)

    yield from extend(list(vnode.children), {vnode.key: snode})


def _deepest_annotated_key(v: TreePattern) -> tuple:
    best = None
    for n in v.nodes():  # preorder; keep the first at max depth
        if n.effective_annotations():
            depth = len(n.key)
            if best is None or depth > best[0]:
                best = (depth, n.key)
    if best is None:
        raise ValueError("pattern has no annotated node")
    return best[1]


def estimate_contribution(s: Synopsis, v: TreePattern) -> int:
    root = v.root
    if root.axis == CHILD:
        targets = [s.root]
    else:
        targets = [s.root] + list(_syn_descendants(s.root))
    deepest = _deepest_annotated_key(v)
    total = Fraction(0)
    embedded = False
    for target in targets:
        for emb in _syn_embeddings(root, target):
            embedded = True
            rows = emb[deepest].count
            for n in v.nodes():
                anns = n.effective_annotations()
                if not anns:
                    continue
                image = emb[n.key]
                for ann in anns:
                    if ann == "id":
                        total += rows * ID_BYTES
                    elif ann == "val":
                        total += Fraction(image.total_val_bytes * rows, image.count)
                    else:
                        total += Fraction(image.total_cont_bytes * rows, image.count)
    # an embeddable pattern never estimates to zero, so a zero estimate is a
    # reliable emptiness signal even when all matched values are empty strings
    return max(ceil(total), 1) if embedded else 0


def serialize_synopsis(s: Synopsis) -> bytes:
    out = bytearray()

    def walk(n: SynNode):
        label = n.label.encode("utf-8")
        out.extend(struct.pack(">H", len(label)))
        out.extend(label)
        out.extend(struct.pack(">IIIH", n.count, n.total_val_bytes, n.total_cont_bytes, len(n.children)))
        for c in n.children.values():
            walk(c)

    walk(s.root)
    return bytes(out)


def deserialize_synopsis(data: bytes) -> Synopsis:
    pos = 0

    def read() -> SynNode:
        nonlocal pos
        (llen,) = struct.unpack_from(">H", data, pos)
        pos += 2
        label = data[pos : pos + llen].decode("utf-8")
        pos += llen
        count, val_bytes, cont_bytes, nchildren = struct.unpack_from(">IIIH", data, pos)
        pos += 14
        node = SynNode(label, count, val_bytes, cont_bytes)
        for _ in range(nchildren):
            c = read()
            node.children[c.label] = c
        return node

    root = read()
    if pos != len(data):
        raise ValueError("trailing bytes in synopsis payload")
    return Synopsis(root)


def synopsis_bytes(s: Synopsis) -> int:
    return len(serialize_synopsis(s))
