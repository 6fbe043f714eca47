"""Command-line entry point: ``generate``, ``stats``, ``train`` and ``eval``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import statistics
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig
from .generators import FAMILIES, GeneratorSpec, generate
from .graph import GraphError, build_graph, read_edge_list, read_features, read_labels, write_edge_list, write_labels
from .metrics import MetricError
from .model import ModelParams
from .netstats import degree_stats
from .training import SplitError, TrainingDiverged, evaluate, make_split, prepare, run_experiment

log = logging.getLogger("tbgcn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4
GAMMA_SWEEP = (0.0, 0.25, 0.5, 0.75, 1.0)


class UsageError(Exception):
    pass


# which flags each generator family needs, mapped to its keyword arguments
_FAMILY_ARGS = {
    "ws": {"nodes": "n", "k": "k", "p": "p"},
    "pa": {"nodes": "n", "m": "m"},
    "sbm": {"blocks": "block_sizes", "p_in": "p_in", "p_out": "p_out"},
    "rgg": {"nodes": "n"},
    "tree": {"nodes": "n", "branching": "branching"},
    "tree_lattice": {"nodes": "n", "branching": "branching"},
    "tree_rgg": {"nodes": "n", "branching": "branching"},
}
_OPTIONAL_ARGS = {"rgg": {"radius": "radius"}, "tree_rgg": {"radius": "radius"},
                  "tree_lattice": {"grid": "grid_dims"}}


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- generate -----------------------------------------------------------------


def cmd_generate(args) -> int:
    params = {}
    for flag, key in _FAMILY_ARGS[args.family].items():
        value = getattr(args, flag)
        if value is None:
            raise UsageError(f"--family {args.family} requires --{flag.replace('_', '-')}")
        params[key] = value
    for flag, key in _OPTIONAL_ARGS.get(args.family, {}).items():
        if getattr(args, flag) is not None:
            params[key] = getattr(args, flag)
    spec = GeneratorSpec(args.family, params, args.seed)
    g = generate(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_edge_list(g, out)
    sidecar = {**spec.to_dict(), "num_nodes": g.num_nodes, "num_edges": g.num_edges}
    _write_json(out.with_name(out.name + ".json"), sidecar)
    if g.labels is not None:
        write_labels(g.labels, out.with_name(out.stem + ".labels.csv"))
    print(f"wrote {g.num_edges} edges over {g.num_nodes} nodes to {out}")
    return EXIT_OK


# --- stats ----------------------------------------------------------------------


def cmd_stats(args) -> int:
    g = read_edge_list(args.graph)
    doc = degree_stats(g).to_json()
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.nk_csv:
        with open(args.nk_csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "nk"])
            for k, v in doc["nk_curve"].items():
                w.writerow([k, repr(v)])
    return EXIT_OK


# --- train / eval ---------------------------------------------------------------------


def _load_graph(args, task: str):
    g = read_edge_list(args.graph)
    features = read_features(args.features, g.num_nodes) if args.features else None
    fiber = read_features(args.fiber_features, g.num_nodes) if args.fiber_features else None
    labels = read_labels(args.labels, g.num_nodes) if args.labels else None
    if task == "nc" and labels is None:
        raise UsageError("--task nc requires --labels")
    g = build_graph(g.num_nodes, g.edges, features=features, labels=labels)
    return g, fiber


def _parse_set(pairs: list[str]) -> dict:
    out = {}
    for item in pairs or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _build_config(args) -> ExperimentConfig:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if "config" in base and isinstance(base["config"], dict):  # a report's config echo
            base = base["config"]
    flags = {
        "task": getattr(args, "task", None),
        "model": getattr(args, "model", None),
        "nc_decoder": getattr(args, "nc_decoder", None),
        "gamma": getattr(args, "gamma", None),
        "max_epochs": getattr(args, "max_epochs", None),
        "patience": getattr(args, "patience", None),
        "lr": getattr(args, "lr", None),
        "weight_decay": getattr(args, "weight_decay", None),
        "dropconnect_p": getattr(args, "dropconnect", None),
        "multi_view": True if getattr(args, "fiber_features", None) else None,
    }
    merged = {**base, **{k: v for k, v in flags.items() if v is not None}, **_parse_set(getattr(args, "set", None))}
    return ExperimentConfig.from_dict(merged)


def _write_history(path: Path, history: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "val_metric"])
        for h in history:
            w.writerow([h["epoch"], repr(h["loss"]), repr(h["val_metric"])])


def _aggregate(rows: list[dict]) -> dict:
    keys = rows[0]["metrics"].keys()
    agg = {}
    for k in keys:
        vals = [r["metrics"][k] for r in rows]
        agg[k] = {"mean": statistics.fmean(vals), "std": statistics.pstdev(vals)}
    return agg


def cmd_train(args) -> int:
    config = _build_config(args)
    if args.gamma_sweep and config.task != "nc":
        raise UsageError("--gamma-sweep applies to --task nc only")
    graph, fiber = _load_graph(args, config.task)
    seeds = args.seeds or [config.model_seed]
    gammas = GAMMA_SWEEP if args.gamma_sweep else (None,)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    single = len(seeds) == 1 and len(gammas) == 1

    report: dict = {"config": config.to_dict(), "rows": []}
    for gamma in gammas:
        runs = []
        for seed in seeds:
            cfg = config.replace(split_seed=seed, model_seed=seed) if args.seeds else config
            if gamma is not None:
                cfg = cfg.replace(gamma=gamma)
            tag = "" if single else "-" + (f"g{gamma}-" if gamma is not None else "") + f"s{seed}"
            try:
                run = run_experiment(cfg, graph, fiber)
            except TrainingDiverged as exc:
                _write_history(out / f"history{tag}.csv", exc.history)
                exc.best_params.save(out / f"checkpoint{tag}.json")
                report["diverged"] = {"split_seed": cfg.split_seed, "model_seed": cfg.model_seed,
                                      "gamma": cfg.gamma, "epoch": exc.epoch, "error": str(exc)}
                _write_json(out / "report.json", report)
                log.error("%s", exc)
                return EXIT_DIVERGED
            result = run.pop("_result")
            _write_history(out / f"history{tag}.csv", result.history)
            result.params.save(out / f"checkpoint{tag}.json")
            run["history_file"] = f"history{tag}.csv"
            run["checkpoint_file"] = f"checkpoint{tag}.json"
            runs.append(run)
            log.info("gamma=%s seed=%s %s", gamma, seed, run["metrics"])
        row = {"runs": runs, "aggregate": _aggregate(runs)}
        if gamma is not None:
            row["gamma"] = gamma
        report["rows"].append(row)
    _write_json(out / "report.json", report)
    for row in report["rows"]:
        prefix = f"gamma={row['gamma']} " if "gamma" in row else ""
        summary = " ".join(f"{k}={v['mean']:.4f}±{v['std']:.4f}" for k, v in row["aggregate"].items())
        print(prefix + summary)
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _build_config(args)
    if args.seed is not None:
        config = config.replace(split_seed=args.seed, model_seed=args.seed)
    graph, fiber = _load_graph(args, config.task)
    params = ModelParams.load(args.checkpoint)
    data = prepare(graph, make_split(graph, config), config, fiber)
    metrics = evaluate(params, data, config, args.split)
    doc = {"checkpoint": str(args.checkpoint), "split": args.split,
           "split_seed": config.split_seed, "metrics": metrics}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def _graph_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--graph", required=True, help="edge-list file")
    p.add_argument("--features", help="node feature CSV (node_id,f1,...); one-hot when omitted")
    p.add_argument("--fiber-features", help="separate fiber-channel features (enables multi_view)")
    p.add_argument("--labels", help="label CSV (node_id,class_id); required for nc")
    p.add_argument("--config", help="JSON config (flat ExperimentConfig keys) or a previous report")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tbgcn", description="Trivial-bundle GCN experiments.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic graph as an edge list")
    g.add_argument("--family", required=True, choices=FAMILIES)
    g.add_argument("--nodes", type=int)
    g.add_argument("--branching", type=int)
    g.add_argument("--k", type=int, help="ring degree (ws)")
    g.add_argument("--p", type=float, help="rewiring probability (ws)")
    g.add_argument("--m", type=int, help="edges per new node (pa)")
    g.add_argument("--blocks", type=_int_list, help="comma-separated block sizes (sbm)")
    g.add_argument("--p-in", type=float)
    g.add_argument("--p-out", type=float)
    g.add_argument("--radius", type=float)
    g.add_argument("--grid", type=_int_list, help="grid rows,cols (tree_lattice)")
    g.add_argument("--seed", type=int, default=1234)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("stats", help="degree statistics as JSON")
    s.add_argument("--graph", required=True)
    s.add_argument("--out")
    s.add_argument("--nk-csv", help="also write the N(k) curve as CSV")
    s.set_defaults(func=cmd_stats)

    t = sub.add_parser("train", help="split, train and evaluate")
    t.add_argument("--task", choices=("lp", "nc"))
    _graph_inputs(t)
    t.add_argument("--model", choices=("tb", "baseline"))
    t.add_argument("--nc-decoder", choices=("sub", "div", "mul"))
    t.add_argument("--gamma", type=float)
    t.add_argument("--gamma-sweep", action="store_true", help="run gamma in {0, .25, .5, .75, 1}")
    t.add_argument("--seeds", type=_int_list, help="comma-separated seeds; each sets split and model seed")
    t.add_argument("--max-epochs", type=int)
    t.add_argument("--patience", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--weight-decay", type=float)
    t.add_argument("--dropconnect", type=float)
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="re-score a checkpoint on a split")
    _graph_inputs(e)
    e.add_argument("--task", choices=("lp", "nc"))
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--split", choices=("val", "test"), default="test")
    e.add_argument("--seed", type=int, help="split seed used for the checkpoint's run")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"tbgcn {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphError, SplitError, MetricError, OSError, ValueError) as exc:
        print(f"tbgcn {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
