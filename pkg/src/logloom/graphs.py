"""Correlation graphs: rule instances grouped into tumbling windows."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .episodes import RuleInstance, SequenceRule
from .ingest import Dimension
from .patterns import Digraph

Label = tuple[Dimension, int]

WEIGHT_MODES = ("confidence", "support", "product")

SAME_NODE = "same"
CROSS_NODE = "cross"


@dataclass(frozen=True)
class GraphConfig:
    """Tumbling window width, edge lag ceiling and node weight source."""

    corr_window: float = 300.0
    max_lag: float = 120.0
    weight_mode: str = "confidence"

    def __post_init__(self) -> None:
        if self.corr_window <= 0:
            raise ValueError("corr_window must be > 0")
        if not 0 < self.max_lag <= self.corr_window:
            raise ValueError("max_lag must be in (0, corr_window]")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"weight_mode must be one of {WEIGHT_MODES}")


@dataclass(frozen=True)
class GraphNode:
    label: Label
    weight: float
    anchor: float
    node: str


@dataclass(frozen=True)
class WindowGraph:
    """Rule instances of one tumbling window, wired by temporal precedence.

    Labels are unique per graph and edges are keyed by the labels they
    join. Edges always point from the earlier anchor to the strictly
    later one, so the graph is a DAG.
    """

    window_index: int
    nodes: tuple[GraphNode, ...]
    edges: frozenset[tuple[Label, Label, str]]

    def digraph(self) -> Digraph:
        index = {gn.label: i for i, gn in enumerate(self.nodes)}
        return Digraph(
            labels=tuple(gn.label for gn in self.nodes),
            edges=frozenset((index[u], index[v], el) for u, v, el in self.edges),
        )

    def weights(self) -> tuple[float, ...]:
        return tuple(gn.weight for gn in self.nodes)


def rule_weight(rule: SequenceRule, weight_mode: str) -> float:
    """Node weight contributed by a rule under the chosen mode."""
    if weight_mode == "confidence":
        return rule.confidence
    if weight_mode == "support":
        return rule.support
    if weight_mode == "product":
        return rule.support * rule.confidence
    raise ValueError(f"weight_mode must be one of {WEIGHT_MODES}")


def label_weights(rules: Iterable[SequenceRule], weight_mode: str) -> dict[Label, float]:
    return {rule.label: rule_weight(rule, weight_mode) for rule in rules}


def build_window_graphs(
    instances: Sequence[RuleInstance],
    rules: Iterable[SequenceRule],
    config: GraphConfig,
) -> list[WindowGraph]:
    """Partition instances into tumbling windows and build one graph each.

    Windows of width `corr_window` start at the earliest anchor; an
    instance belongs to window floor((anchor - t_min) / corr_window).
    Duplicate labels inside a window collapse to the earliest-anchored
    instance. Edges run between nodes with anchor(u) < anchor(v) and
    lag at most `max_lag`, labeled by whether the two instances came
    from the same cluster node. Empty windows are omitted.
    """
    if not instances:
        return []
    weight_of = label_weights(rules, config.weight_mode)
    t_min = min(inst.anchor for inst in instances)

    buckets: dict[int, list[RuleInstance]] = {}
    for inst in instances:
        idx = math.floor((inst.anchor - t_min) / config.corr_window)
        buckets.setdefault(idx, []).append(inst)

    out: list[WindowGraph] = []
    for idx in sorted(buckets):
        chosen: dict[Label, RuleInstance] = {}
        ordered = sorted(
            buckets[idx], key=lambda r: (r.anchor, r.dim.rank, r.rule_id, r.node)
        )
        for inst in ordered:
            chosen.setdefault((inst.dim, inst.rule_id), inst)
        nodes = tuple(
            GraphNode(label, weight_of[label], inst.anchor, inst.node)
            for label, inst in sorted(chosen.items())
        )
        edges: set[tuple[Label, Label, str]] = set()
        for u in nodes:
            for v in nodes:
                if u.anchor < v.anchor and v.anchor - u.anchor <= config.max_lag:
                    kind = SAME_NODE if u.node == v.node else CROSS_NODE
                    edges.add((u.label, v.label, kind))
        out.append(WindowGraph(idx, nodes, frozenset(edges)))
    return out


def window_graph_to_dot(graph: WindowGraph) -> str:
    """Render one window graph in DOT form for graphviz."""
    lines = [f"digraph window_{graph.window_index} {{"]
    for gn in graph.nodes:
        name = f"{gn.label[0].value}:{gn.label[1]}"
        lines.append(f'  "{name}" [label="{name}\\nw={gn.weight:.4f}"];')
    for u, v, kind in sorted(graph.edges):
        lines.append(
            f'  "{u[0].value}:{u[1]}" -> "{v[0].value}:{v[1]}" [label="{kind}"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
