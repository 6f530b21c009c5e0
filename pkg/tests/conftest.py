import random
import sys

import pytest

from logloom import CanonicalEvent, Digraph, Dimension

DIMS = list(Dimension)


def ev(ts, template, node="n1", dim=Dimension.EVENT, count=1):
    return CanonicalEvent(ts=float(ts), node=node, dim=dim, template=template, count=count)


def trace(pairs, node="n1", dim=Dimension.EVENT):
    """Build a sorted single-dimension stream from (ts, template) pairs."""
    return [ev(ts, template, node=node, dim=dim) for ts, template in sorted(pairs)]


def random_connected_digraph(rng: random.Random, n_max=6, label_pool=3):
    """Random weakly connected labeled digraph without antiparallel arcs."""
    n = rng.randint(1, n_max)
    labels = tuple((rng.choice(DIMS), rng.randint(0, label_pool - 1)) for _ in range(n))
    edges = set()
    taken = set()
    order = list(range(n))
    rng.shuffle(order)
    for idx in range(1, n):
        a, b = order[idx], order[rng.randrange(idx)]
        if rng.random() < 0.5:
            a, b = b, a
        edges.add((a, b, rng.choice(["same", "cross"])))
        taken.add(frozenset((a, b)))
    for a in range(n):
        for b in range(a + 1, n):
            if frozenset((a, b)) in taken:
                continue
            if rng.random() < 0.25:
                u, v = (a, b) if rng.random() < 0.5 else (b, a)
                edges.add((u, v, rng.choice(["same", "cross"])))
    return Digraph(labels, frozenset(edges))


def relabel(g: Digraph, perm: list[int]) -> Digraph:
    """Rebuild `g` with vertex i renamed to perm[i]."""
    labels = [None] * g.n
    for i, lab in enumerate(g.labels):
        labels[perm[i]] = lab
    edges = frozenset((perm[u], perm[v], el) for u, v, el in g.edges)
    return Digraph(tuple(labels), edges)


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one line per acceptance criterion when that suite ran."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None) if mod else None
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(results[num])
