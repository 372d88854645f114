"""Distributed indexes over the overlay: term -> document URIs, URI -> synopsis,
term -> view advertisements; plus document/view publication procedures.

Key namespaces are byte-exact strings: ``term:<text>``, ``syn:<uri>``,
``view:<label>`` and the reserved ``view:*`` for wildcard-only patterns.
Views are advertised under every one of their pattern terms so lookup is a
single round per term.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .overlay import Network, PeerId
from .pattern import (
    QuerySpec,
    Table,
    TreePattern,
    canonical_pattern_text,
    parse_pattern,
    pattern_terms,
)
from .synopsis import Synopsis, build_synopsis, deserialize_synopsis, serialize_synopsis
from .xml_model import Document, NodeId, extract_terms


class CatalogError(ValueError):
    pass


class AlreadyPublishedError(CatalogError):
    pass


class NotFoundError(CatalogError):
    pass


@dataclass
class ViewDef:
    view_id: str
    pattern: TreePattern
    holder: PeerId
    estimated_bytes: int = 0
    actual_bytes: int | None = None
    created_at_round: int = 0

    @property
    def canonical_text(self) -> str:
        return canonical_pattern_text(self.pattern)

    def to_json(self) -> bytes:
        return json.dumps(
            {
                "viewId": self.view_id,
                "pattern": self.canonical_text,
                "holder": {"name": self.holder.name, "position": self.holder.position},
                "estimatedBytes": self.estimated_bytes,
                "actualBytes": self.actual_bytes,
                "createdAtRound": self.created_at_round,
            },
            sort_keys=True,
            separators=(",", ":"),
        ).encode("utf-8")

    @classmethod
    def from_json(cls, data: bytes) -> "ViewDef":
        obj = json.loads(data.decode("utf-8"))
        return cls(
            view_id=obj["viewId"],
            pattern=parse_pattern(obj["pattern"]),
            holder=PeerId(obj["holder"]["position"], obj["holder"]["name"]),
            estimated_bytes=obj["estimatedBytes"],
            actual_bytes=obj["actualBytes"],
            created_at_round=obj["createdAtRound"],
        )


def make_view_id(pattern: TreePattern, holder: PeerId) -> str:
    text = canonical_pattern_text(pattern) + "@" + holder.name
    return hashlib.sha1(text.encode("utf-8")).hexdigest()[:16]


def table_payload_bytes(table: Table) -> int:
    """Payload byte size of a materialized table: 12 bytes per id, UTF-8 length per string."""
    total = 0
    for row in table.rows:
        for value in row:
            if isinstance(value, NodeId):
                total += 12
            else:
                total += len(value.encode("utf-8"))
    return total


def _view_keys(pattern: TreePattern) -> list[str]:
    labels = sorted({n.label.lower() for n in pattern.nodes() if n.label != "*"})
    return ["view:" + l for l in labels] if labels else ["view:*"]


class Catalog:
    def __init__(self, network: Network):
        self.network = network
        self.documents: dict[str, tuple[Document, PeerId]] = {}
        self.local_synopses: dict[str, Synopsis] = {}  # planner-side cache, filled at publish
        self.views: dict[str, ViewDef] = {}
        self.extents: dict[str, Table] = {}

    # -- documents ---------------------------------------------------------

    def publish_document(self, p: PeerId, d: Document) -> None:
        if d.uri in self.documents:
            raise AlreadyPublishedError(f"document {d.uri!r} already published")
        terms = sorted(extract_terms(d), key=lambda t: (t.kind, t.text))
        keys_done = set()
        for t in terms:
            key = "term:" + t.text
            if key in keys_done:
                continue
            keys_done.add(key)
            self.network.dht_put(p, key, d.uri.encode("utf-8"), "indexMaintenance")
        syn = build_synopsis(d)
        self.network.dht_put(p, "syn:" + d.uri, serialize_synopsis(syn), "indexMaintenance")
        self.documents[d.uri] = (d, p)
        self.local_synopses[d.uri] = syn

    def lookup_documents(self, origin: PeerId, terms, category: str = "queryExecution") -> list[str]:
        terms = sorted(set(terms), key=lambda t: (t.kind, t.text))
        if not terms:
            raise CatalogError("lookup_documents requires a non-empty term set")
        result: set[str] | None = None
        for t in terms:
            uris = {e.decode("utf-8") for e in self.network.dht_get(origin, "term:" + t.text, category)}
            result = uris if result is None else (result & uris)
            if not result:
                break
        return sorted(result or ())

    def all_uris(self) -> list[str]:
        return sorted(self.documents)

    def document(self, uri: str) -> Document:
        if uri not in self.documents:
            raise NotFoundError(f"unknown document {uri!r}")
        return self.documents[uri][0]

    def holder_of(self, uri: str) -> PeerId:
        if uri not in self.documents:
            raise NotFoundError(f"unknown document {uri!r}")
        return self.documents[uri][1]

    def fetch_synopsis(self, origin: PeerId, uri: str, category: str = "adaptation") -> Synopsis:
        entries = self.network.dht_get(origin, "syn:" + uri, category)
        if not entries:
            raise NotFoundError(f"no synopsis published for {uri!r}")
        return deserialize_synopsis(entries[0])

    # -- views -------------------------------------------------------------

    def advertise_view(self, v: ViewDef) -> None:
        if v.view_id in self.views:
            raise CatalogError(f"view {v.view_id} already advertised")
        payload = v.to_json()
        for key in _view_keys(v.pattern):
            self.network.dht_put(v.holder, key, payload, "indexMaintenance")
        self.views[v.view_id] = v

    def retract_view(self, view_id: str) -> None:
        v = self.views.get(view_id)
        if v is None:
            raise NotFoundError(f"unknown view {view_id}")
        marker = f'"viewId":"{view_id}"'.encode("utf-8")
        for key in _view_keys(v.pattern):
            self.network.dht_delete(v.holder, key, lambda e: marker in e, "indexMaintenance")
        del self.views[view_id]
        self.extents.pop(view_id, None)

    def lookup_views(self, origin: PeerId, q: QuerySpec, category: str = "queryExecution") -> list[ViewDef]:
        labels = sorted(
            {n.label.lower() for pat in q.patterns for n in pat.nodes() if n.label != "*"}
        )
        keys = ["view:" + l for l in labels] + ["view:*"]
        found: dict[str, ViewDef] = {}
        for key in keys:
            for entry in self.network.dht_get(origin, key, category):
                v = ViewDef.from_json(entry)
                if v.view_id not in found:
                    # resolve to the live catalog object when present
                    found[v.view_id] = self.views.get(v.view_id, v)
        return [found[k] for k in sorted(found)]

    # -- materialized extents ---------------------------------------------

    def store_extent(self, view_id: str, table: Table) -> int:
        nbytes = table_payload_bytes(table)
        self.extents[view_id] = table
        v = self.views.get(view_id)
        if v is not None:
            v.actual_bytes = nbytes
        return nbytes

    def extent(self, view_id: str) -> Table:
        if view_id not in self.extents:
            raise NotFoundError(f"view {view_id} has no materialized extent")
        return self.extents[view_id]
