"""Deterministic synthetic XML corpus generation for scenarios and tests."""

from __future__ import annotations

import random

DEFAULT_LABELS = (
    "lib",
    "book",
    "title",
    "author",
    "year",
    "section",
    "para",
    "ref",
    "name",
    "journal",
    "volume",
    "entry",
)

DEFAULT_WORDS = (
    "alpha",
    "bravo",
    "charlie",
    "delta",
    "echo",
    "foxtrot",
    "golf",
    "hotel",
    "india",
    "juliet",
    "kilo",
    "lima",
)


def random_document_text(
    rng: random.Random,
    max_nodes: int,
    labels=DEFAULT_LABELS,
    words=DEFAULT_WORDS,
    text_prob: float = 0.6,
) -> str:
    """A well-formed document with at most max_nodes elements."""
    budget = [rng.randint(1, max(1, max_nodes))]

    def element() -> str:
        budget[0] -= 1
        label = rng.choice(labels)
        parts = []
        if rng.random() < text_prob:
            parts.append(" ".join(rng.choice(words) for _ in range(rng.randint(1, 3))))
        n_children = rng.randint(0, 3)
        for _ in range(n_children):
            if budget[0] <= 0:
                break
            parts.append(element())
        return f"<{label}>{''.join(parts)}</{label}>"

    return element()


def generate_corpus(n_docs: int, max_nodes: int, seed: int, **kw) -> list[tuple[str, str]]:
    """(uri, xml) pairs, fully determined by the arguments."""
    rng = random.Random(seed)
    return [(f"doc{i:04d}.xml", random_document_text(rng, max_nodes, **kw)) for i in range(n_docs)]


def single_path_document_text(
    rng: random.Random,
    max_depth: int = 5,
    labels=DEFAULT_LABELS,
    words=DEFAULT_WORDS,
) -> str:
    """A chain document in which every label path occurs exactly once.

    Labels along the chain are drawn without replacement so no two nodes
    share a root-to-node label path; each node carries a distinct word.
    """
    depth = rng.randint(1, min(max_depth, len(labels)))
    chain = rng.sample(list(labels), depth)
    word_pool = rng.sample(list(words), min(depth, len(words)))
    xml = ""
    for i, label in enumerate(reversed(chain)):
        level = depth - 1 - i
        text = word_pool[level % len(word_pool)]
        xml = f"<{label}>{text}{xml}</{label}>"
    return xml


def generate_single_path_corpus(n_docs: int, seed: int, **kw) -> list[tuple[str, str]]:
    rng = random.Random(seed)
    return [(f"sp{i:04d}.xml", single_path_document_text(rng, **kw)) for i in range(n_docs)]
