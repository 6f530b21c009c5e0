"""Command line driver.

Exit codes: 0 success, 1 usage errors, 2 unreadable or unparseable
input (including streams with a majority of rejected lines), 3 invalid
configuration or schema-invalid documents.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .graphs import window_graph_to_dot
from .ingest import Dimension, ParseError, TemplateTable
from .knowledge import (
    SchemaError,
    export,
    import_expert,
    load,
    merge,
    query_root_causes,
)
from .patterns import consequent_index, pattern_to_dot
from .pipeline import (
    ConfigError,
    PipelineConfig,
    graphs_stage,
    ingest_stage,
    kb_stage,
    mine_rules_stage,
    patterns_stage,
    preprocess_stage,
    read_events,
    read_graphs,
    read_instances,
    read_rules_doc,
    rules_doc,
    run_pipeline,
    write_events,
    write_graphs,
    write_instances,
    write_rejects,
)
from .preprocess import load_blacklist
from .synth import ScenarioError, generate, load_scenario, write_jsonl


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise _UsageError(message)


_KNOB_KEYS = (
    "window", "min_sup", "min_conf", "k_max", "granularity", "gap",
    "max_rate", "corr_window", "max_lag", "weight_mode", "ws_min",
    "p_max", "combiner", "dim_default", "input_format", "seed", "threads",
)


def _add_knobs(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("analysis knobs (override the config file)")
    g.add_argument("--config", help="JSON config file")
    g.add_argument("--window", type=float, help="episode window seconds")
    g.add_argument("--min-sup", type=float, dest="min_sup")
    g.add_argument("--min-conf", type=float, dest="min_conf")
    g.add_argument("--k-max", type=int, dest="k_max")
    g.add_argument("--granularity", type=float)
    g.add_argument("--gap", type=float, help="coalescing gap seconds")
    g.add_argument("--blacklist-file", dest="blacklist_file")
    g.add_argument("--max-rate", type=float, dest="max_rate")
    g.add_argument("--corr-window", type=float, dest="corr_window")
    g.add_argument("--max-lag", type=float, dest="max_lag")
    g.add_argument("--weight-mode", dest="weight_mode",
                   choices=["confidence", "support", "product"])
    g.add_argument("--ws-min", type=float, dest="ws_min")
    g.add_argument("--p-max", type=int, dest="p_max")
    g.add_argument("--combiner", choices=["geomean", "min", "product"])
    g.add_argument("--dim-default", dest="dim_default")
    g.add_argument("--format", dest="input_format", choices=["jsonl", "csv"])
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int)


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    data: dict = {}
    if getattr(args, "config", None):
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError("$", f"config is not valid JSON: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise ConfigError("$", "config must be a JSON object")
        data.update(raw)
    for key in _KNOB_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if getattr(args, "blacklist_file", None):
        ids = load_blacklist(args.blacklist_file)
        data["blacklist"] = sorted(set(data.get("blacklist", ())) | ids)
    if getattr(args, "input", None):
        data["input"] = args.input
    if getattr(args, "out", None):
        data["out"] = args.out
    return PipelineConfig.from_dict(data)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(getattr(args, "out", None) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_synth(args: argparse.Namespace) -> int:
    spec = load_scenario(args.scenario)
    records, pairs = generate(spec)
    out = _out_dir(args)
    write_jsonl(records, out / "log.jsonl")
    write_jsonl(pairs, out / "truth.jsonl")
    print(f"wrote {len(records)} events and {len(pairs)} truth pairs to {out}")
    return 0


def _cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    events, table, rejects = ingest_stage(cfg, args.input)
    out = _out_dir(args)
    write_events(events, out / "events.jsonl")
    table.save(out / "templates.tsv")
    write_rejects(rejects, out / "rejects.txt")
    print(f"{len(events)} events, {len(table)} templates, {len(rejects)} rejects")
    return 0


def _cmd_preprocess(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    events = read_events(args.events)
    kept, merged_away, report = preprocess_stage(cfg, events)
    out = _out_dir(args)
    write_events(kept, out / "events.jsonl")
    summary = (
        f"kept {len(kept)} of {len(events)} events "
        f"(coalesced away: {merged_away})\n" + report.render() + "\n"
    )
    (out / "preprocess_report.txt").write_text(summary, encoding="utf-8")
    print(summary, end="")
    return 0


def _cmd_mine_rules(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    events = read_events(args.events)
    table = TemplateTable.load(args.templates)
    rules, instances = mine_rules_stage(cfg, events)
    out = _out_dir(args)
    (out / "rules.json").write_text(export(rules_doc(rules, table, cfg)), encoding="utf-8")
    write_instances(instances, out / "instances.jsonl")
    print(f"{len(rules)} rules, {len(instances)} instances")
    return 0


def _cmd_build_graphs(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    instances = read_instances(args.instances)
    doc = read_rules_doc(args.rules)
    graphs = graphs_stage(cfg, instances, list(doc.rules.values()))
    out = _out_dir(args)
    write_graphs(graphs, out / "graphs.json")
    if args.dot:
        text = "".join(window_graph_to_dot(g) for g in graphs)
        (out / "graphs.dot").write_text(text, encoding="utf-8")
    print(f"{len(graphs)} window graphs")
    return 0


def _cmd_mine_patterns(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    graphs = read_graphs(args.graphs)
    doc = read_rules_doc(args.rules)
    rules = list(doc.rules.values())
    patterns = patterns_stage(cfg, graphs, rules)
    kb, report = kb_stage(cfg, patterns, rules, doc.templates)
    out = _out_dir(args)
    (out / "kb.json").write_text(export(kb), encoding="utf-8")
    print(f"{len(patterns)} patterns")
    if report.rejected:
        print(report.render())
    return 0


def _cmd_merge(args: argparse.Namespace) -> int:
    kb = load(Path(args.kb).read_text(encoding="utf-8"))
    incoming_text = Path(args.incoming).read_text(encoding="utf-8")
    warnings: list[str] = []
    if args.expert:
        incoming = import_expert(incoming_text)
    else:
        other = load(incoming_text)
        incoming = list(other.patterns.values())
        mine = kb.metadata.get("config_digest")
        theirs = other.metadata.get("config_digest")
        if mine != theirs:
            warnings.append(
                f"warning: config digests differ ({mine} vs {theirs}); "
                "rule ids may not describe the same rules"
            )
    kb, report = merge(kb, incoming)
    out = _out_dir(args)
    (out / "kb.json").write_text(export(kb), encoding="utf-8")
    text = report.render()
    if warnings:
        text = "\n".join(warnings) + "\n" + text
    (out / "merge_report.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def _parse_target(text: str) -> tuple[Dimension, str, int]:
    parts = text.split(":")
    try:
        dim = Dimension(parts[0])
    except (ValueError, IndexError):
        raise _UsageError(f"target must start with a dimension, got {text!r}") from None
    if len(parts) == 2:
        kind, raw = "rule", parts[1]
    elif len(parts) == 3 and parts[1] in ("rule", "template"):
        kind, raw = parts[1], parts[2]
    else:
        raise _UsageError(
            "target must be dim:<rule_id>, dim:rule:<id> or dim:template:<id>"
        )
    try:
        ident = int(raw)
    except ValueError:
        raise _UsageError(f"target id must be an integer, got {raw!r}") from None
    return dim, kind, ident


def _describe_pattern(p) -> str:
    g = p.graph
    try:
        consequent = consequent_index(g)
    except ValueError:
        consequent = -1

    def name(i: int) -> str:
        dim, rid = g.labels[i]
        text = f"{dim.value}:{rid}"
        return f"[{text}]" if i == consequent else text

    parts = [f"{name(u)} -({el})-> {name(v)}" for u, v, el in sorted(g.edges)]
    touched = {u for u, _, _ in g.edges} | {v for _, v, _ in g.edges}
    parts.extend(name(i) for i in range(g.n) if i not in touched)
    return "  ".join(parts)


def _cmd_query(args: argparse.Namespace) -> int:
    kb = load(Path(args.kb).read_text(encoding="utf-8"))
    dim, kind, ident = _parse_target(args.target)
    try:
        if kind == "rule":
            results = query_root_causes(kb, dim, rule_id=ident, node_scope=args.scope)
        else:
            results = query_root_causes(kb, dim, template=ident, node_scope=args.scope)
    except LookupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    if not results:
        print("no stored pattern explains the target")
        return 0
    print(f"{'rank':<5} {'score':<8} {'support':<8} {'kconf':<8} pattern")
    for rank, r in enumerate(results, start=1):
        print(
            f"{rank:<5} {r.score:<8.4f} {r.pattern.support:<8.4f} "
            f"{r.pattern.knowledge_confidence:<8.4f} {_describe_pattern(r.pattern)}"
        )
    return 0


def _cmd_export(args: argparse.Namespace) -> int:
    kb = load(Path(args.kb).read_text(encoding="utf-8"))
    if args.dot:
        ordered = sorted(kb.patterns.items())
        text = "".join(
            pattern_to_dot(p, name=f"pattern_{k}")
            for k, (_, p) in enumerate(ordered)
        )
    else:
        text = export(kb)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        print(f"wrote {args.output}")
    else:
        print(text, end="")
    return 0


def _cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    result = run_pipeline(cfg)
    print(result.report, end="")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="logloom", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("synth", help="generate a synthetic log from a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest", help="parse a log into canonical events")
    _add_knobs(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("preprocess", help="coalesce repeats and drop noise")
    _add_knobs(p)
    p.add_argument("--events", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("mine-rules", help="mine per-dimension sequence rules")
    _add_knobs(p)
    p.add_argument("--events", required=True)
    p.add_argument("--templates", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_mine_rules)

    p = sub.add_parser("build-graphs", help="correlate rule instances into window graphs")
    _add_knobs(p)
    p.add_argument("--instances", required=True)
    p.add_argument("--rules", required=True)
    p.add_argument("--dot", action="store_true", help="also write graphs.dot")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_build_graphs)

    p = sub.add_parser("mine-patterns", help="mine failure patterns into a knowledge base")
    _add_knobs(p)
    p.add_argument("--graphs", required=True)
    p.add_argument("--rules", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_mine_patterns)

    p = sub.add_parser("merge", help="merge patterns into a knowledge base")
    p.add_argument("--kb", required=True)
    p.add_argument("--incoming", required=True)
    p.add_argument("--expert", action="store_true",
                   help="incoming document is expert-authored")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_merge)

    p = sub.add_parser("query", help="rank root-cause antecedents for a target")
    p.add_argument("--kb", required=True)
    p.add_argument("--target", required=True,
                   help="dim:<rule_id>, dim:rule:<id> or dim:template:<id>")
    p.add_argument("--scope", choices=["any", "same", "cross"])
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("export", help="print a knowledge document or DOT")
    p.add_argument("--kb", required=True)
    p.add_argument("--dot", action="store_true")
    p.add_argument("--output")
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    _add_knobs(p)
    p.add_argument("--input")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, SchemaError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
