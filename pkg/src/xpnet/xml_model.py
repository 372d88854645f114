"""XML documents as element trees with interval-based structural identifiers.

Elements get (start, end) ordinals from a single document-order traversal:
the counter is bumped once per element open and once per element close, so
containment between two elements of the same document is a strict interval
test. Attributes are normalized into child elements labeled with the
attribute name, which collapses element/attribute handling everywhere else.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from xml.parsers import expat


class ParseError(ValueError):
    """Malformed XML input; message names the byte offset when known."""


class UnknownNodeError(KeyError):
    """A NodeId that does not belong to the document it was used with."""


@dataclass(frozen=True, order=True)
class NodeId:
    doc: str
    start: int
    end: int


@dataclass(frozen=True)
class Term:
    kind: str  # "label" | "word"
    text: str


@dataclass
class Element:
    label: str
    nid: NodeId | None = None
    children: list = field(default_factory=list)  # Element | str text runs


@dataclass
class Document:
    uri: str
    root: Element
    _by_start: dict = field(default_factory=dict, repr=False)

    def element(self, n: NodeId) -> Element:
        el = self._by_start.get(n.start)
        if el is None or el.nid != n:
            raise UnknownNodeError(f"node {n} not in document {self.uri!r}")
        return el

    def elements(self):
        """All elements in document order."""
        stack = [self.root]
        while stack:
            el = stack.pop()
            yield el
            stack.extend(c for c in reversed(el.children) if isinstance(c, Element))


def parse_document(data: bytes | str, uri: str) -> Document:
    if isinstance(data, str):
        data = data.encode("utf-8")
    if not data.strip():
        raise ParseError("empty input")

    parser = expat.ParserCreate()
    parser.ordered_attributes = True
    parser.buffer_text = True

    counter = 0
    stack: list[Element] = []
    root_holder: list[Element] = []
    by_start: dict[int, Element] = {}

    def open_element(label: str) -> Element:
        nonlocal counter
        el = Element(label)
        el._start = counter  # type: ignore[attr-defined]
        counter += 1
        by_start[el._start] = el  # type: ignore[attr-defined]
        if stack:
            stack[-1].children.append(el)
        else:
            root_holder.append(el)
        return el

    def close_element(el: Element) -> None:
        nonlocal counter
        el.nid = NodeId(uri, el._start, counter)  # type: ignore[attr-defined]
        del el.__dict__["_start"]
        counter += 1

    def start(name, attrs):
        el = open_element(name)
        stack.append(el)
        # attrs is a flat [name, value, ...] list in document order
        for i in range(0, len(attrs), 2):
            attr_el = open_element(attrs[i])
            if attrs[i + 1]:
                attr_el.children.append(attrs[i + 1])
            close_element(attr_el)

    def end(name):
        close_element(stack.pop())

    def chars(text):
        if not stack:
            return
        kids = stack[-1].children
        if kids and isinstance(kids[-1], str):
            kids[-1] += text
        else:
            kids.append(text)

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chars

    try:
        parser.Parse(data, True)
    except expat.ExpatError as exc:
        raise ParseError(
            f"malformed XML at byte {parser.ErrorByteIndex}: "
            f"{expat.errors.messages[parser.ErrorCode]}"
        ) from exc

    root = root_holder[0]
    doc = Document(uri=uri, root=root)
    doc._by_start = by_start
    return doc


_NONALNUM_EDGE = re.compile(r"^[^0-9a-zA-Z]+|[^0-9a-zA-Z]+$")


def tokenize(text: str) -> list[str]:
    """Whitespace-split, strip non-alphanumeric edges, lowercase; drops empties."""
    words = []
    for raw in text.split():
        w = _NONALNUM_EDGE.sub("", raw).lower()
        if w:
            words.append(w)
    return words


def extract_terms(d: Document) -> set[Term]:
    terms: set[Term] = set()
    for el in d.elements():
        terms.add(Term("label", el.label.lower()))
        for c in el.children:
            if isinstance(c, str):
                for w in tokenize(c):
                    terms.add(Term("word", w))
    return terms


def node_value(d: Document, n: NodeId) -> str:
    el = d.element(n)
    parts: list[str] = []

    def walk(e: Element):
        for c in e.children:
            if isinstance(c, str):
                parts.append(c)
            else:
                walk(c)

    walk(el)
    return "".join(parts)


def _escape_text(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def serialize_subtree(d: Document, n: NodeId) -> str:
    el = d.element(n)
    out: list[str] = []

    def walk(e: Element):
        out.append(f"<{e.label}>")
        for c in e.children:
            if isinstance(c, str):
                out.append(_escape_text(c))
            else:
                walk(c)
        out.append(f"</{e.label}>")

    walk(el)
    return "".join(out)


def id_contains(a: NodeId, b: NodeId) -> bool:
    """Strict ancestorship: a properly contains b in the same document."""
    return a.doc == b.doc and a.start < b.start and b.end < a.end
