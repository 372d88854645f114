import pytest

from xpnet.catalog import Catalog
from xpnet.overlay import Network
from xpnet.rewriter import Rewriter, RewriterConfig
from xpnet.xml_model import parse_document

D1_XML = "<book><title>AI</title><author>Smith</author><author>Lee</author></book>"
D2_XML = "<book><title>DB</title><year>2010</year></book>"


@pytest.fixture
def d1():
    return parse_document(D1_XML, "d1")


@pytest.fixture
def d2():
    return parse_document(D2_XML, "d2")


@pytest.fixture
def corpus(d1, d2):
    return [d1, d2]


def make_world(peer_names, docs, holders=None):
    """A network + catalog with the given documents published.

    holders maps doc index -> peer name; defaults to round robin.
    """
    net = Network(peer_names)
    cat = Catalog(net)
    rw = Rewriter(cat, net, RewriterConfig())
    for i, d in enumerate(docs):
        name = holders[i] if holders else peer_names[i % len(peer_names)]
        cat.publish_document(net.peer(name), d)
    return net, cat, rw


@pytest.fixture
def world(corpus):
    return make_world(["p0", "p1", "p2"], corpus)
