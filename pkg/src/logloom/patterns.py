"""Weighted frequent subgraph mining over small labeled digraphs.

Graphs are canonicalized by minimum DFS code. A code entry is the tuple
(i, j, label_i, direction, edge_label, label_j) where i and j are
discovery indices and direction records the arc's orientation relative
to the traversal: 0 means the arc runs i -> j, 1 means j -> i. Entries
compare by the classical gSpan neighborhood order on (i, j) first and
by (label_i, direction, edge_label, label_j) to break structural ties;
plain tuple comparison would not keep prefixes of minimal codes minimal,
which the rightmost-extension search depends on.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Mapping, Sequence

CodeEntry = tuple
DfsCode = tuple


@dataclass(frozen=True)
class Digraph:
    """Immutable labeled digraph with at most one arc per vertex pair.

    Self loops and antiparallel arc pairs are rejected: hosts built from
    anchored instances are DAGs where neither occurs, and any pattern
    needing them could never be contained in such a host.
    """

    labels: tuple[Hashable, ...]
    edges: frozenset[tuple[int, int, Hashable]]

    def __post_init__(self) -> None:
        n = len(self.labels)
        pairs: set[tuple[int, int]] = set()
        for u, v, _ in self.edges:
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError("edge endpoint out of range")
            if u == v:
                raise ValueError("self loops are not allowed")
            pair = (u, v) if u < v else (v, u)
            if pair in pairs:
                raise ValueError("at most one arc per vertex pair")
            pairs.add(pair)

    @property
    def n(self) -> int:
        return len(self.labels)


def _adjacency(g: Digraph) -> list[list[tuple[int, int, Hashable]]]:
    """Per vertex: (neighbor, direction as seen from the vertex, edge label)."""
    adj: list[list[tuple[int, int, Hashable]]] = [[] for _ in range(g.n)]
    for u, v, el in g.edges:
        adj[u].append((v, 0, el))
        adj[v].append((u, 1, el))
    for lst in adj:
        lst.sort(key=lambda t: (t[0], t[1]))
    return adj


def _arc_map(g: Digraph) -> dict[tuple[int, int], tuple[int, Hashable]]:
    arcs: dict[tuple[int, int], tuple[int, Hashable]] = {}
    for u, v, el in g.edges:
        arcs[(u, v)] = (0, el)
        arcs[(v, u)] = (1, el)
    return arcs


def _is_connected(g: Digraph) -> bool:
    if g.n == 0:
        return False
    adj = _adjacency(g)
    seen = {0}
    stack = [0]
    while stack:
        for w, _, _ in adj[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == g.n


def _pair(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _step_key(entry: CodeEntry):
    """Order over candidate entries extending one shared code prefix.

    Backward entries precede forward ones; among backward, the smaller
    ancestor wins; among forward, the deeper source wins. Labels break
    the remaining ties in tuple field order.
    """
    i, j, li, d, el, lj = entry
    if i > j:
        return (0, j, (li, d, el, lj))
    return (1, -i, (li, d, el, lj))


@dataclass(frozen=True)
class _State:
    """One partial DFS traversal: vertices in discovery order, the
    rightmost path as host vertices, and the consumed arcs."""

    order: tuple[int, ...]
    rmpath: tuple[int, ...]
    used: frozenset[tuple[int, int]]


def _state_extensions(
    g: Digraph,
    adj: list[list[tuple[int, int, Hashable]]],
    st: _State,
) -> list[tuple[CodeEntry, _State]]:
    pos = {v: k for k, v in enumerate(st.order)}
    r = st.rmpath[-1]
    n_vis = len(st.order)
    rmset = set(st.rmpath)

    backward: list[tuple[int, int, int, Hashable]] = []
    for w, d, el in adj[r]:
        if w not in pos or _pair(r, w) in st.used:
            continue
        if w not in rmset:
            # this traversal can never consume the arc: abandon it
            return []
        backward.append((pos[w], w, d, el))
    if backward:
        # a valid code emits pending backward arcs in ancestor order
        j, w, d, el = min(backward)
        entry = (n_vis - 1, j, g.labels[r], d, el, g.labels[w])
        return [(entry, _State(st.order, st.rmpath, st.used | {_pair(r, w)}))]

    out: list[tuple[CodeEntry, _State]] = []
    for depth, x in enumerate(st.rmpath):
        for w, d, el in adj[x]:
            if w in pos:
                continue
            entry = (pos[x], n_vis, g.labels[x], d, el, g.labels[w])
            newst = _State(
                st.order + (w,),
                st.rmpath[: depth + 1] + (w,),
                st.used | {_pair(x, w)},
            )
            out.append((entry, newst))
    return out


def _min_code_with_order(g: Digraph) -> tuple[DfsCode, tuple[int, ...]]:
    """Minimum DFS code plus the discovery order achieving it.

    Runs every DFS traversal in lockstep, keeping after each step only
    the traversals that emitted the smallest next entry. Traversals that
    strand an arc off the rightmost path are dropped early; they can
    never finish, and any entry they offer is offered by a surviving
    traversal as well.
    """
    n = g.n
    if n == 0:
        raise ValueError("graph is empty")
    if not _is_connected(g):
        raise ValueError("graph must be connected")
    if n == 1:
        label = g.labels[0]
        return ((0, 0, label, 0, None, label),), (0,)

    adj = _adjacency(g)
    states = [_State((v,), (v,), frozenset()) for v in range(n)]
    code: list[CodeEntry] = []
    for _ in range(len(g.edges)):
        branches: list[tuple[CodeEntry, _State]] = []
        best: CodeEntry | None = None
        for st in states:
            for entry, newst in _state_extensions(g, adj, st):
                if best is None or _step_key(entry) < _step_key(best):
                    best = entry
                branches.append((entry, newst))
        if best is None:
            raise AssertionError("dfs canonicalization deadlocked")
        code.append(best)
        seen: set[tuple] = set()
        states = []
        for entry, newst in branches:
            key = (newst.order, newst.used)
            if entry == best and key not in seen:
                seen.add(key)
                states.append(newst)
        states.sort(key=lambda s: s.order)
    return tuple(code), states[0].order


def min_dfs_code(g: Digraph) -> DfsCode:
    """Canonical form: equal codes exactly characterize isomorphic graphs."""
    return _min_code_with_order(g)[0]


def _code_labels(code: DfsCode) -> list[Hashable]:
    if len(code) == 1 and code[0][0] == code[0][1]:
        return [code[0][2]]
    labels: dict[int, Hashable] = {}
    for i, j, li, _, _, lj in code:
        labels.setdefault(i, li)
        labels.setdefault(j, lj)
    return [labels[k] for k in range(len(labels))]


def _code_to_graph(code: DfsCode) -> Digraph:
    labels = _code_labels(code)
    edges: set[tuple[int, int, Hashable]] = set()
    for i, j, _, d, el, _ in code:
        if i == j:
            continue
        edges.add((i, j, el) if d == 0 else (j, i, el))
    return Digraph(tuple(labels), frozenset(edges))


def _is_min_code(code: DfsCode) -> bool:
    return min_dfs_code(_code_to_graph(code)) == code


def _rmpath_indices(code: DfsCode) -> list[int]:
    """Discovery indices on the rightmost path, root first."""
    rm: list[int] = []
    cur: int | None = None
    for i, j, *_ in reversed(code):
        if i < j and (cur is None or j == cur):
            rm.append(j)
            cur = i
    rm.append(0)
    rm.reverse()
    return rm


def subgraph_contains(host: Digraph, pattern: Digraph) -> bool:
    """Injective monomorphism test: every pattern arc must appear in the
    host with matching direction and labels; extra host arcs are fine.

    The pattern may be disconnected. Matching is exponential in pattern
    size in the worst case, which stays small here by construction.
    """
    if pattern.n == 0:
        raise ValueError("pattern is empty")
    if pattern.n > host.n:
        return False

    order = _matching_order(pattern)
    arcs = _arc_map(host)
    pattern_arcs = _arc_map(pattern)
    by_label: dict[Hashable, list[int]] = {}
    for idx, label in enumerate(host.labels):
        by_label.setdefault(label, []).append(idx)

    assignment: dict[int, int] = {}
    taken: set[int] = set()

    def place(k: int) -> bool:
        if k == len(order):
            return True
        pv = order[k]
        checks = [
            (assignment[pw], da, el)
            for (pa, pw), (da, el) in pattern_arcs.items()
            if pa == pv and pw in assignment
        ]
        for hv in by_label.get(pattern.labels[pv], ()):
            if hv in taken:
                continue
            if all(arcs.get((hv, hw)) == (da, el) for hw, da, el in checks):
                assignment[pv] = hv
                taken.add(hv)
                if place(k + 1):
                    return True
                del assignment[pv]
                taken.discard(hv)
        return False

    return place(0)


def _matching_order(pattern: Digraph) -> list[int]:
    """Vertex order where each vertex after its component's first is
    adjacent to an earlier one, keeping the matcher's frontier connected."""
    adj = _adjacency(pattern)
    seen: set[int] = set()
    order: list[int] = []
    for start in range(pattern.n):
        if start in seen:
            continue
        queue = [start]
        seen.add(start)
        while queue:
            v = queue.pop(0)
            order.append(v)
            for w, _, _ in adj[v]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
    return order


def _as_digraph(g) -> Digraph:
    return g if isinstance(g, Digraph) else g.digraph()


def weighted_support(
    pattern: Digraph,
    graphs: Sequence,
    label_weights: Mapping[Hashable, float],
) -> tuple[float, float]:
    """(support, weighted support) of `pattern` over the graph database.

    Support is the fraction of graphs containing the pattern; weighted
    support scales it by the arithmetic mean of the pattern's node
    weights, looked up by label.
    """
    if not graphs:
        raise ValueError("graph database is empty")
    hosts = [_as_digraph(g) for g in graphs]
    mean_w = statistics.fmean(label_weights[label] for label in pattern.labels)
    count = sum(1 for h in hosts if subgraph_contains(h, pattern))
    support = count / len(hosts)
    return support, support * mean_w


@dataclass(frozen=True)
class FailurePattern:
    """A mined subgraph with its scores; vertex order is canonical."""

    graph: Digraph
    node_weights: tuple[float, ...]
    support: float
    weighted_support: float
    code: DfsCode
    structural_confidence: float = 0.0
    knowledge_confidence: float = 0.0
    provenance: frozenset[str] = frozenset({"mined"})

    def __post_init__(self) -> None:
        if len(self.node_weights) != self.graph.n:
            raise ValueError("one weight per node required")
        for w in self.node_weights:
            if not 0 <= w <= 1:
                raise ValueError("node weights must be in [0, 1]")
        for name, value in (
            ("support", self.support),
            ("weighted_support", self.weighted_support),
            ("structural_confidence", self.structural_confidence),
            ("knowledge_confidence", self.knowledge_confidence),
        ):
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.weighted_support > self.support:
            raise ValueError("weighted support cannot exceed support")

    @classmethod
    def build(
        cls,
        graph: Digraph,
        node_weights: Sequence[float],
        support: float,
        weighted_support: float,
        structural_confidence: float = 0.0,
        knowledge_confidence: float = 0.0,
        provenance: Iterable[str] = ("mined",),
    ) -> "FailurePattern":
        """Construct with vertices permuted into canonical code order."""
        code, order = _min_code_with_order(graph)
        pos = {v: k for k, v in enumerate(order)}
        labels = tuple(graph.labels[v] for v in order)
        edges = frozenset((pos[u], pos[v], el) for u, v, el in graph.edges)
        weights = tuple(node_weights[v] for v in order)
        return cls(
            graph=Digraph(labels, edges),
            node_weights=weights,
            support=support,
            weighted_support=weighted_support,
            code=code,
            structural_confidence=structural_confidence,
            knowledge_confidence=knowledge_confidence,
            provenance=frozenset(provenance),
        )


@dataclass(frozen=True)
class _Embedding:
    gid: int
    vmap: tuple[int, ...]
    used: frozenset[tuple[int, int]]


def mine_patterns(
    graphs: Sequence,
    label_weights: Mapping[Hashable, float],
    ws_min: float,
    p_max: int = 6,
) -> list[FailurePattern]:
    """Enumerate connected patterns with weighted support >= ws_min.

    Rightmost-extension search over minimum DFS codes; every pattern is
    visited through its canonical code exactly once. Branches are cut on
    raw support, which is sound because node weights never exceed one,
    so weighted support never exceeds support. Patterns that fail only
    the weighted threshold are still grown. Output is sorted by code.
    """
    if not graphs:
        raise ValueError("graph database is empty")
    if not 0 < ws_min <= 1:
        raise ValueError("ws_min must be in (0, 1]")
    if p_max < 1:
        raise ValueError("p_max must be >= 1")

    hosts = [_as_digraph(g) for g in graphs]
    total = len(hosts)
    adjs = [_adjacency(h) for h in hosts]
    arcs = [_arc_map(h) for h in hosts]
    found: list[FailurePattern] = []

    def weight(label: Hashable) -> float:
        return label_weights[label]

    def emit(code: DfsCode, support: float) -> None:
        labels = _code_labels(code)
        ws = support * statistics.fmean(weight(l) for l in labels)
        if ws >= ws_min:
            graph = _code_to_graph(code)
            found.append(
                FailurePattern(
                    graph=graph,
                    node_weights=tuple(weight(l) for l in labels),
                    support=support,
                    weighted_support=ws,
                    code=code,
                )
            )

    # single-node patterns are not reachable by edge extension: do them first
    label_gids: dict[Hashable, set[int]] = {}
    for gid, h in enumerate(hosts):
        for label in h.labels:
            label_gids.setdefault(label, set()).add(gid)
    for label in sorted(label_gids):
        support = len(label_gids[label]) / total
        if support >= ws_min:
            emit(((0, 0, label, 0, None, label),), support)

    roots: dict[CodeEntry, list[_Embedding]] = {}
    for gid, h in enumerate(hosts):
        for u, v, el in h.edges:
            used = frozenset({_pair(u, v)})
            lu, lv = h.labels[u], h.labels[v]
            roots.setdefault((0, 1, lu, 0, el, lv), []).append(
                _Embedding(gid, (u, v), used)
            )
            roots.setdefault((0, 1, lv, 1, el, lu), []).append(
                _Embedding(gid, (v, u), used)
            )

    def grow(code: DfsCode, embeddings: list[_Embedding]) -> None:
        support = len({e.gid for e in embeddings}) / total
        if support < ws_min:
            return
        if not _is_min_code(code):
            return
        emit(code, support)

        labels = _code_labels(code)
        maxtoc = len(labels) - 1
        rmpath = _rmpath_indices(code)
        children: dict[CodeEntry, list[_Embedding]] = {}
        for emb in embeddings:
            host_arcs = arcs[emb.gid]
            r_host = emb.vmap[maxtoc]
            for a_idx in rmpath[:-1]:
                arc = host_arcs.get((r_host, emb.vmap[a_idx]))
                if arc is None:
                    continue
                pair = _pair(r_host, emb.vmap[a_idx])
                if pair in emb.used:
                    continue
                d, el = arc
                entry = (maxtoc, a_idx, labels[maxtoc], d, el, labels[a_idx])
                children.setdefault(entry, []).append(
                    _Embedding(emb.gid, emb.vmap, emb.used | {pair})
                )
            if len(emb.vmap) >= p_max:
                continue
            mapped = set(emb.vmap)
            for x_idx in rmpath:
                x_host = emb.vmap[x_idx]
                for w, d, el in adjs[emb.gid][x_host]:
                    if w in mapped:
                        continue
                    entry = (
                        x_idx,
                        maxtoc + 1,
                        labels[x_idx],
                        d,
                        el,
                        hosts[emb.gid].labels[w],
                    )
                    children.setdefault(entry, []).append(
                        _Embedding(
                            emb.gid, emb.vmap + (w,), emb.used | {_pair(x_host, w)}
                        )
                    )
        for entry in sorted(children, key=_step_key):
            grow(code + (entry,), children[entry])

    for entry in sorted(roots, key=_step_key):
        grow((entry,), roots[entry])

    found.sort(key=lambda p: p.code)
    return found


def _rule_map(rules) -> Mapping:
    if isinstance(rules, Mapping):
        return rules
    return {rule.label: rule for rule in rules}


def consequent_index(g: Digraph) -> int:
    """The pattern's consequent: its greatest-labeled sink node."""
    sources = {u for u, _, _ in g.edges}
    sinks = [i for i in range(g.n) if i not in sources]
    if not sinks:
        raise ValueError("pattern has no sink node")
    return max(sinks, key=lambda i: g.labels[i])


def remove_node(g: Digraph, idx: int) -> Digraph:
    """Drop one node and its incident arcs, reindexing the rest."""
    keep = [i for i in range(g.n) if i != idx]
    remap = {old: new for new, old in enumerate(keep)}
    return Digraph(
        tuple(g.labels[i] for i in keep),
        frozenset(
            (remap[u], remap[v], el) for u, v, el in g.edges if idx not in (u, v)
        ),
    )


def pattern_confidence(pattern: FailurePattern, graphs: Sequence, rules) -> float:
    """Structural confidence: how often the pattern's context completes.

    The consequent is the greatest-labeled sink. Confidence is the count
    of graphs containing the whole pattern over the count containing the
    pattern with the consequent removed; the remainder may fall apart
    into components, which must be embedded jointly. A single-node
    pattern falls back to its rule's own confidence.
    """
    g = pattern.graph
    if g.n == 1:
        return _rule_map(rules)[g.labels[0]].confidence
    hosts = [_as_digraph(x) for x in graphs]

    reduced = remove_node(g, consequent_index(g))

    full_count = sum(1 for h in hosts if subgraph_contains(h, g))
    if full_count == 0:
        raise ValueError("pattern does not occur in the graph database")
    reduced_count = sum(1 for h in hosts if subgraph_contains(h, reduced))
    return full_count / reduced_count


COMBINERS: dict[str, Callable[[Sequence[float]], float]] = {
    "geomean": lambda cs: _product(cs) ** (1.0 / len(cs)),
    "min": min,
    "product": lambda cs: _product(cs),
}


def _product(values: Sequence[float]) -> float:
    out = 1.0
    for v in values:
        out *= v
    return out


def knowledge_confidence(pattern: FailurePattern, rules, combiner: str = "geomean") -> float:
    """Blend structural confidence with the constituent rules' confidences."""
    if combiner not in COMBINERS:
        raise ValueError(f"combiner must be one of {sorted(COMBINERS)}")
    rule_map = _rule_map(rules)
    confs = [rule_map[label].confidence for label in pattern.graph.labels]
    return pattern.structural_confidence * COMBINERS[combiner](confs)


def pattern_to_dot(pattern: FailurePattern, name: str = "pattern") -> str:
    """Render a pattern in DOT form; node names are dim:rule_id pairs."""
    lines = [f"digraph {name} {{"]
    for idx, label in enumerate(pattern.graph.labels):
        dim, rid = label
        text = f"{getattr(dim, 'value', dim)}:{rid}"
        weight = pattern.node_weights[idx]
        lines.append(f'  n{idx} [label="{text}\\nw={weight:.4f}"];')
    for u, v, el in sorted(pattern.graph.edges):
        lines.append(f'  n{u} -> n{v} [label="{el}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
