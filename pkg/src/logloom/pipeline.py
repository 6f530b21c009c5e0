"""Batch pipeline: stage functions, interchange files, configuration."""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .episodes import (
    RuleInstance,
    SequenceRule,
    derive_rules,
    find_instances,
    mine_episodes,
)
from .graphs import (
    GraphConfig,
    GraphNode,
    WindowGraph,
    build_window_graphs,
    label_weights,
)
from .ingest import (
    CanonicalEvent,
    Dimension,
    RejectEntry,
    TemplateTable,
    canonicalize,
    parse_lines,
)
from .knowledge import KnowledgeBase, MergeReport, export, load, merge
from .patterns import (
    FailurePattern,
    knowledge_confidence,
    mine_patterns,
    pattern_confidence,
)
from .preprocess import CoalescePolicy, NoisePolicy, NoiseReport, coalesce, filter_noise


class ConfigError(Exception):
    """A configuration key is unknown or out of range."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


_WEIGHT_MODES = ("confidence", "support", "product")
_COMBINERS = ("geomean", "min", "product")
_FORMATS = ("jsonl", "csv")


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of the pipeline; validated on construction."""

    window: float = 120.0
    min_sup: float = 0.1
    min_conf: float = 0.0
    k_max: int = 4
    granularity: float = 1.0
    gap: float = 5.0
    blacklist: tuple[int, ...] = ()
    max_rate: float | None = None
    corr_window: float = 300.0
    max_lag: float = 120.0
    weight_mode: str = "confidence"
    ws_min: float = 0.1
    p_max: int = 6
    combiner: str = "geomean"
    dim_default: str | None = None
    input_format: str = "jsonl"
    input: str | None = None
    out: str | None = None
    seed: int = 0
    threads: int = 1

    def __post_init__(self) -> None:
        def check(cond: bool, key: str, message: str) -> None:
            if not cond:
                raise ConfigError(key, message)

        for key in ("window", "min_sup", "min_conf", "granularity", "gap",
                    "corr_window", "max_lag", "ws_min"):
            value = getattr(self, key)
            check(
                not isinstance(value, bool) and isinstance(value, (int, float)),
                key,
                "must be a number",
            )
            object.__setattr__(self, key, float(value))
        if self.max_rate is not None:
            check(
                not isinstance(self.max_rate, bool)
                and isinstance(self.max_rate, (int, float)),
                "max_rate",
                "must be a number",
            )
            object.__setattr__(self, "max_rate", float(self.max_rate))
        object.__setattr__(self, "blacklist", tuple(self.blacklist))

        check(self.window > 0, "window", "must be > 0")
        check(self.granularity > 0, "granularity", "must be > 0")
        ticks = self.window / self.granularity
        check(
            abs(ticks - round(ticks)) <= 1e-9 and round(ticks) >= 1,
            "window",
            "must be a positive integer multiple of granularity",
        )
        check(0 < self.min_sup <= 1, "min_sup", "must be in (0, 1]")
        check(0 <= self.min_conf <= 1, "min_conf", "must be in [0, 1]")
        check(self.k_max >= 1, "k_max", "must be >= 1")
        check(self.gap > 0, "gap", "must be > 0")
        check(
            all(isinstance(t, int) and t >= 0 for t in self.blacklist),
            "blacklist",
            "must hold non-negative template ids",
        )
        check(
            self.max_rate is None or self.max_rate > 0,
            "max_rate",
            "must be > 0 when set",
        )
        check(self.corr_window > 0, "corr_window", "must be > 0")
        check(
            0 < self.max_lag <= self.corr_window,
            "max_lag",
            "must be in (0, corr_window]",
        )
        check(
            self.weight_mode in _WEIGHT_MODES,
            "weight_mode",
            f"must be one of {_WEIGHT_MODES}",
        )
        check(0 < self.ws_min <= 1, "ws_min", "must be in (0, 1]")
        check(self.p_max >= 1, "p_max", "must be >= 1")
        check(self.combiner in _COMBINERS, "combiner", f"must be one of {_COMBINERS}")
        if self.dim_default is not None:
            try:
                Dimension(self.dim_default)
            except ValueError:
                raise ConfigError("dim_default", "is not a dimension") from None
        check(
            self.input_format in _FORMATS,
            "input_format",
            f"must be one of {_FORMATS}",
        )
        check(self.threads >= 1, "threads", "must be >= 1")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PipelineConfig":
        """Build from parsed JSON, rejecting unknown keys."""
        known = {f.name: f for f in fields(cls)}
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(key, "unknown configuration key")
            kwargs[key] = value
        if "blacklist" in kwargs:
            raw = kwargs["blacklist"]
            if not isinstance(raw, list):
                raise ConfigError("blacklist", "must be an array of template ids")
            kwargs["blacklist"] = tuple(raw)
        for key in ("window", "min_sup", "min_conf", "granularity", "gap",
                    "max_rate", "corr_window", "max_lag", "ws_min"):
            if key in kwargs and kwargs[key] is not None:
                value = kwargs[key]
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(key, "must be a number")
                kwargs[key] = float(value)
        for key in ("k_max", "p_max", "seed", "threads"):
            if key in kwargs:
                value = kwargs[key]
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigError(key, "must be an integer")
        for key in ("weight_mode", "combiner", "dim_default", "input_format", "input", "out"):
            if key in kwargs and kwargs[key] is not None and not isinstance(kwargs[key], str):
                raise ConfigError(key, "must be a string")
        return cls(**kwargs)


_DIGEST_EXCLUDED = ("input", "out", "seed", "threads")


def config_digest(cfg: PipelineConfig) -> str:
    """Hash of the analysis knobs; paths, seed and threads do not count."""
    payload = {
        f.name: getattr(cfg, f.name)
        for f in fields(cfg)
        if f.name not in _DIGEST_EXCLUDED
    }
    payload["blacklist"] = sorted(payload["blacklist"])
    blob = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def load_config(path: str | Path) -> PipelineConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"config is not valid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError("$", "config must be a JSON object")
    return PipelineConfig.from_dict(data)


# ---------------------------------------------------------------------------
# interchange files


def write_events(events: Iterable[CanonicalEvent], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(
                json.dumps(
                    {
                        "ts": ev.ts,
                        "node": ev.node,
                        "dim": ev.dim.value,
                        "template": ev.template,
                        "count": ev.count,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_events(path: str | Path) -> list[CanonicalEvent]:
    out: list[CanonicalEvent] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        out.append(
            CanonicalEvent(
                ts=raw["ts"],
                node=raw["node"],
                dim=Dimension(raw["dim"]),
                template=raw["template"],
                count=raw.get("count", 1),
            )
        )
    return out


def write_rejects(rejects: Sequence[RejectEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in rejects:
            raw = r.raw.replace("\n", "\\n")
            fh.write(f"line {r.line_no}: {r.reason}: {raw}\n")


def rules_doc(
    rules: Sequence[SequenceRule], table: TemplateTable, cfg: PipelineConfig
) -> KnowledgeBase:
    return KnowledgeBase.new(
        rules, table, {"config_digest": config_digest(cfg), "created": None}
    )


def read_rules_doc(path: str | Path) -> KnowledgeBase:
    return load(Path(path).read_text(encoding="utf-8"))


def write_instances(instances: Iterable[RuleInstance], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(
                json.dumps(
                    {
                        "rule_id": inst.rule_id,
                        "dim": inst.dim.value,
                        "anchor": inst.anchor,
                        "span": list(inst.span),
                        "node": inst.node,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_instances(path: str | Path) -> list[RuleInstance]:
    out: list[RuleInstance] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        out.append(
            RuleInstance(
                rule_id=raw["rule_id"],
                dim=Dimension(raw["dim"]),
                anchor=raw["anchor"],
                span=(raw["span"][0], raw["span"][1]),
                node=raw["node"],
            )
        )
    return out


def write_graphs(graphs: Sequence[WindowGraph], path: str | Path) -> None:
    doc = {
        "version": 1,
        "graphs": [
            {
                "window_index": g.window_index,
                "nodes": [
                    {
                        "dim": gn.label[0].value,
                        "rule_id": gn.label[1],
                        "weight": gn.weight,
                        "anchor": gn.anchor,
                        "node": gn.node,
                    }
                    for gn in g.nodes
                ],
                "edges": sorted(
                    [[u[0].value, u[1], v[0].value, v[1], kind]
                     for u, v, kind in g.edges]
                ),
            }
            for g in graphs
        ],
    }
    Path(path).write_text(
        json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def read_graphs(path: str | Path) -> list[WindowGraph]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    out: list[WindowGraph] = []
    for raw in doc["graphs"]:
        nodes = tuple(
            GraphNode(
                label=(Dimension(n["dim"]), n["rule_id"]),
                weight=n["weight"],
                anchor=n["anchor"],
                node=n["node"],
            )
            for n in raw["nodes"]
        )
        edges = frozenset(
            ((Dimension(d1), r1), (Dimension(d2), r2), kind)
            for d1, r1, d2, r2, kind in raw["edges"]
        )
        out.append(WindowGraph(raw["window_index"], nodes, edges))
    return out


# ---------------------------------------------------------------------------
# stages


def ingest_stage(
    cfg: PipelineConfig, input_path: str | Path
) -> tuple[list[CanonicalEvent], TemplateTable, list[RejectEntry]]:
    dim_default = Dimension(cfg.dim_default) if cfg.dim_default else None
    with open(input_path, "rb") as fh:
        result = parse_lines(fh, fmt=cfg.input_format, dim_default=dim_default)
    table = TemplateTable()
    events, canon_rejects = canonicalize(result.records, table)
    return events, table, result.rejects + canon_rejects


def preprocess_stage(
    cfg: PipelineConfig, events: Sequence[CanonicalEvent]
) -> tuple[list[CanonicalEvent], int, NoiseReport]:
    coalesced = coalesce(events, CoalescePolicy(gap=cfg.gap))
    merged_away = len(events) - len(coalesced)
    kept, report = filter_noise(
        coalesced, NoisePolicy(blacklist=frozenset(cfg.blacklist), max_rate=cfg.max_rate)
    )
    return kept, merged_away, report


def mine_rules_stage(
    cfg: PipelineConfig, events: Sequence[CanonicalEvent]
) -> tuple[list[SequenceRule], list[RuleInstance]]:
    """Mine each dimension independently; merge in dimension order.

    Dimensions are independent work units, so `threads` may run them in
    parallel without affecting the merged result.
    """
    dims = sorted({e.dim for e in events}, key=lambda d: d.rank)

    def mine_dim(dim: Dimension) -> tuple[list[SequenceRule], list[RuleInstance]]:
        dim_events = [e for e in events if e.dim == dim]
        episodes = mine_episodes(
            dim_events, cfg.window, cfg.min_sup, cfg.k_max, cfg.granularity
        )
        rules = derive_rules(episodes, cfg.min_conf)
        instances: list[RuleInstance] = []
        for rule in rules:
            instances.extend(find_instances(rule, dim_events, cfg.window))
        return rules, instances

    if cfg.threads > 1 and len(dims) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(mine_dim, dims))
    else:
        results = [mine_dim(d) for d in dims]

    rules = [r for rs, _ in results for r in rs]
    instances = [i for _, insts in results for i in insts]
    instances.sort(key=lambda i: (i.anchor, i.dim.rank, i.rule_id, i.node))
    return rules, instances


def graphs_stage(
    cfg: PipelineConfig,
    instances: Sequence[RuleInstance],
    rules: Sequence[SequenceRule],
) -> list[WindowGraph]:
    gcfg = GraphConfig(
        corr_window=cfg.corr_window, max_lag=cfg.max_lag, weight_mode=cfg.weight_mode
    )
    return build_window_graphs(instances, rules, gcfg)


def patterns_stage(
    cfg: PipelineConfig,
    graphs: Sequence[WindowGraph],
    rules: Sequence[SequenceRule],
) -> list[FailurePattern]:
    if not graphs:
        return []
    weights = label_weights(rules, cfg.weight_mode)
    rule_map = {r.label: r for r in rules}
    out: list[FailurePattern] = []
    for p in mine_patterns(graphs, weights, cfg.ws_min, cfg.p_max):
        p = replace(p, structural_confidence=pattern_confidence(p, graphs, rule_map))
        p = replace(
            p, knowledge_confidence=knowledge_confidence(p, rule_map, cfg.combiner)
        )
        out.append(p)
    return out


def kb_stage(
    cfg: PipelineConfig,
    patterns: Sequence[FailurePattern],
    rules: Sequence[SequenceRule],
    table: TemplateTable,
) -> tuple[KnowledgeBase, MergeReport]:
    kb = rules_doc(rules, table, cfg)
    return merge(kb, patterns)


# ---------------------------------------------------------------------------
# the full run


@dataclass
class PipelineResult:
    kb: KnowledgeBase
    report: str
    events_parsed: int
    rejects: int
    events_kept: int
    rules: int
    instances: int
    graphs: int
    patterns: int


def _top_rules(rules: Sequence[SequenceRule], table: TemplateTable, limit: int = 10) -> list[str]:
    ranked = sorted(rules, key=lambda r: (-r.support, r.dim.rank, r.rule_id))
    lines = []
    for r in ranked[:limit]:
        seq = " -> ".join(table.masked_for(t) for t in r.full_labels)
        lines.append(
            f"  {r.dim.value}:{r.rule_id} sup={r.support:.4f} conf={r.confidence:.4f} {seq}"
        )
    return lines


def _top_patterns(patterns: Sequence[FailurePattern], limit: int = 10) -> list[str]:
    ranked = sorted(
        patterns,
        key=lambda p: (-p.knowledge_confidence * p.support, -p.graph.n, p.code),
    )
    lines = []
    for p in ranked[:limit]:
        nodes = ", ".join(f"{d.value}:{rid}" for d, rid in p.graph.labels)
        lines.append(
            f"  [{nodes}] sup={p.support:.4f} ws={p.weighted_support:.4f} "
            f"kc={p.knowledge_confidence:.4f}"
        )
    return lines


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Execute every stage, writing all interchange files to cfg.out.

    Outputs other than report.txt (which carries timings) are
    byte-deterministic functions of the input file and the analysis
    knobs; `threads` and `seed` never influence them.
    """
    if not cfg.input:
        raise ConfigError("input", "required for pipeline runs")
    out_dir = Path(cfg.out) if cfg.out else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)

    timings: list[tuple[str, float]] = []

    def timed(name: str, fn, *args):
        start = time.perf_counter()
        result = fn(*args)
        timings.append((name, time.perf_counter() - start))
        return result

    events, table, rejects = timed("ingest", ingest_stage, cfg, cfg.input)
    table.save(out_dir / "templates.tsv")
    write_rejects(rejects, out_dir / "rejects.txt")

    kept, merged_away, noise_report = timed("preprocess", preprocess_stage, cfg, events)
    write_events(kept, out_dir / "events.jsonl")

    rules, instances = timed("mine-rules", mine_rules_stage, cfg, kept)
    doc_kb = rules_doc(rules, table, cfg)
    (out_dir / "rules.json").write_text(export(doc_kb), encoding="utf-8")
    write_instances(instances, out_dir / "instances.jsonl")

    graphs = timed("build-graphs", graphs_stage, cfg, instances, rules)
    write_graphs(graphs, out_dir / "graphs.json")

    patterns = timed("mine-patterns", patterns_stage, cfg, graphs, rules)
    kb, merge_report = kb_stage(cfg, patterns, rules, table)
    (out_dir / "kb.json").write_text(export(kb), encoding="utf-8")

    lines = [
        f"input events: {len(events)} (rejected lines: {len(rejects)})",
        f"after preprocess: {len(kept)} events "
        f"(coalesced away: {merged_away}, blacklist: {noise_report.blacklist_dropped}, "
        f"rate-dropped: {noise_report.rate_dropped})",
    ]
    if noise_report.rate_check_skipped:
        lines.append("rate check skipped: zero trace duration")
    lines.append(f"rules: {len(rules)}")
    lines.extend(_top_rules(rules, table))
    lines.append(f"instances: {len(instances)}")
    lines.append(f"window graphs: {len(graphs)}")
    lines.append(f"patterns: {len(patterns)}")
    lines.extend(_top_patterns(patterns))
    if merge_report.rejected:
        lines.append(merge_report.render())
    lines.append(
        "timings: "
        + ", ".join(f"{name} {dt:.3f}s" for name, dt in timings)
    )
    report = "\n".join(lines) + "\n"
    (out_dir / "report.txt").write_text(report, encoding="utf-8")

    return PipelineResult(
        kb=kb,
        report=report,
        events_parsed=len(events),
        rejects=len(rejects),
        events_kept=len(kept),
        rules=len(rules),
        instances=len(instances),
        graphs=len(graphs),
        patterns=len(patterns),
    )
