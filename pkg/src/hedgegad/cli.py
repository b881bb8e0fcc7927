"""Command-line entry point: ``hedgegad <subcommand> ...``.

Exit codes: 0 success, 1 validation error, 2 numeric failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import SCHEMA_VERSION, __version__
from .graph import GraphError, load_graph, make_split, save_graph, write_edge_tsv

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2, 64
MODELS = ("hedge", "gcn", "sage", "mlp")

log = logging.getLogger("hedgegad")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _write(path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _floats(s: str) -> tuple:
    return tuple(float(x) for x in s.split(","))


def _relation_view(s: str):
    return "union" if s == "union" else int(s)


# -- subcommands -------------------------------------------------------------

def cmd_analyze(args) -> int:
    from .homophily import class_homophily_variance, weighted_density_curve

    graph = load_graph(args.graph)
    view = _relation_view(args.relation_view)
    prof = class_homophily_variance(graph, view)
    curve = weighted_density_curve(graph, view, args.bandwidth)
    report = {"schema_version": SCHEMA_VERSION, "relation_view": args.relation_view, **prof.to_dict(),
              "bandwidth": curve.bandwidth}
    if not args.per_node:
        report.pop("per_node_h")
    text = _dump(report)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write(os.path.join(args.out, "homophily.json"), text)
        _write(os.path.join(args.out, "density.csv"), curve.to_csv())
    sys.stdout.write(text)
    return EXIT_OK


def cmd_csbm_gen(args) -> int:
    from .csbm import CsbmParams, generate, oracle
    from .homophily import class_homophily_variance

    params = CsbmParams(_floats(args.mu0), _floats(args.mu1), args.d, args.h0, args.h1, args.n, args.seed)
    sample = generate(params)
    save_graph(sample.graph, args.out)
    stem = os.path.splitext(args.out)[0]
    write_edge_tsv(stem + ".out_neighbors.tsv",
                   np.column_stack([np.repeat(np.arange(sample.graph.num_nodes), params.d),
                                    sample.out_neighbors.ravel()]))
    info = {"schema_version": SCHEMA_VERSION, "params": params.to_dict(), "oracle": oracle(params).to_dict(),
            "measured_chv_out_neighborhoods": class_homophily_variance(sample.out_view()).chv,
            "measured_chv_symmetrized": class_homophily_variance(sample.graph).chv}
    _write(stem + ".oracle.json", _dump(info))
    sys.stdout.write(_dump(info))
    return EXIT_OK


def cmd_attack(args) -> int:
    from .attack import AttackConfig, attack
    from .homophily import class_homophily_variance

    graph = load_graph(args.input)
    cfg = AttackConfig(args.target_class, args.ratio, args.seed, args.kind)
    before = class_homophily_variance(graph, args.relation).chv
    res = attack(graph, cfg, args.relation)
    after = class_homophily_variance(res.graph, args.relation).chv
    save_graph(res.graph, args.output)
    out = {"schema_version": SCHEMA_VERSION, "kind": cfg.kind, "ratio": cfg.ratio, "seed": cfg.seed,
           "target_class": cfg.target_class, "num_modifications": res.num_modifications,
           "removed": len(res.removed), "added": len(res.added), "edge_count_grew": res.edge_count_grew,
           "chv_before": before, "chv_after": after}
    sys.stdout.write(_dump(out))
    return EXIT_OK


def _load_config(path):
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc.msg})") from None


def _build_config(model: str, overrides: dict):
    from .baselines import BaselineConfig
    from .hedge import HedgeConfig

    if model == "hedge":
        return HedgeConfig.from_dict(overrides)
    return BaselineConfig.from_dict({"kind": model, **overrides})


def _resolve_train_config(args) -> tuple:
    file_cfg = _load_config(args.config)
    model = file_cfg.pop("model", args.model)
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    overrides.update(file_cfg)  # config file wins over flags
    return model, _build_config(model, overrides)


def _split_indices_csv(split) -> str:
    lines = ["node,part"]
    for part in ("train", "val", "test"):
        lines += [f"{int(v)},{part}" for v in getattr(split, part)]
    return "\n".join(lines) + "\n"


def cmd_train(args) -> int:
    from .baselines import train_baseline
    from .evaluation import rows_to_csv
    from .hedge import generated_graph, train
    from .homophily import class_homophily_variance
    from .nn import save_checkpoint

    graph = load_graph(args.graph)
    model, cfg = _resolve_train_config(args)
    split = make_split(graph, cfg.split, cfg.split_seed)
    os.makedirs(args.out, exist_ok=True)
    resolved = {"schema_version": SCHEMA_VERSION, "model": model, "graph": os.path.abspath(args.graph),
                **cfg.to_dict()}
    _write(os.path.join(args.out, "config.json"), _dump(resolved))

    if model == "hedge":
        run = train(graph, cfg, split)
        params, history, report, extras = run.state.params, run.history, run.report, run.extras
    else:
        res = train_baseline(graph, cfg, split)
        params, history, report, extras = res.params, res.history, res.report, res.extras

    fields = ["epoch", "loss", "loss_ce", "loss_penalty", "clamped", "generated_edges", "val_score"]
    _write(os.path.join(args.out, "history.csv"), rows_to_csv(history, fields))
    save_checkpoint(params, args.out)
    _write(os.path.join(args.out, "split.csv"), _split_indices_csv(split))
    emb = extras["embeddings"]
    _write(os.path.join(args.out, "embeddings.csv"),
           "\n".join(",".join(repr(float(x)) for x in row) for row in emb) + "\n")
    metrics = {"schema_version": SCHEMA_VERSION, **report.to_dict()}
    if model == "hedge":
        union = np.zeros_like(extras["generated"][0])
        for A in extras["generated"]:
            union = np.maximum(union, A)
        iu, ju = np.nonzero(np.triu(union, 1))
        write_edge_tsv(os.path.join(args.out, "generated_edges.tsv"), np.column_stack([iu, ju]))
        try:
            metrics["generated_chv"] = class_homophily_variance(generated_graph(graph, union)).chv
        except ValueError:
            metrics["generated_chv"] = None
        metrics["generated_edge_count"] = int(len(iu))
        metrics["input_chv"] = class_homophily_variance(graph).chv
    _write(os.path.join(args.out, "metrics.json"), _dump(metrics))
    _write(os.path.join(args.out, "timing.json"), _dump({"wall_clock_seconds": report.wall_clock_seconds}))
    sys.stdout.write(_dump(metrics))
    return EXIT_OK


def cmd_eval(args) -> int:
    from .baselines import BaselineModel
    from .hedge import HedgeModel
    from .nn import load_checkpoint, score_nodes

    cfg_dict = _load_config(os.path.join(args.run_dir, "config.json"))
    cfg_dict.pop("schema_version", None)
    graph_path = args.graph or cfg_dict.get("graph")
    cfg_dict.pop("graph", None)
    model_name = cfg_dict.pop("model")
    cfg = _build_config(model_name, {k: v for k, v in cfg_dict.items() if k != "kind"})
    graph = load_graph(graph_path)
    split = make_split(graph, cfg.split, cfg.split_seed)
    model = HedgeModel(graph, cfg, split) if model_name == "hedge" else BaselineModel(graph, cfg)
    arrays = load_checkpoint(args.run_dir)
    if model_name == "hedge":
        model.load_params(arrays)
    else:
        for k, arr in arrays.items():
            model.params[k].data[...] = arr
    probs, _ = model.predict()
    nodes = getattr(split, args.split)
    out = {"schema_version": SCHEMA_VERSION, "split": args.split, "num_nodes": int(len(nodes)),
           **score_nodes(probs, graph.labels, nodes)}
    sys.stdout.write(_dump(out))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_all

    res = run_all(args.seed)
    for name, err in sorted(res["primitives"].items()):
        print(f"primitive {name:<18} max_rel_err={err:.3e}")
    for name, err in sorted(res["end_to_end"].items()):
        print(f"end_to_end {name:<17} max_rel_err={err:.3e}")
    print(f"thresholds: primitives < {res['primitive_tol']:g}, end-to-end < {res['end_to_end_tol']:g}")
    print("PASS" if res["passed"] else "FAIL")
    return EXIT_OK if res["passed"] else EXIT_NUMERIC


def cmd_sweep(args) -> int:
    from .evaluation import DEFAULT_RATIOS, SWEEP_FIELDS, attack_sweep, rows_to_csv

    graph = load_graph(args.graph)
    cfg = _load_config(args.config)
    models = {name: _build_config(m.pop("model", name), m) for name, m in
              ((k, dict(v)) for k, v in cfg.get("models", {"hedge": {}, "gcn": {}}).items())}
    ratios = tuple(cfg.get("ratios", DEFAULT_RATIOS))
    seeds = tuple(cfg.get("seeds", [0]))
    rows, chv_rows = attack_sweep(graph, models, ratios, seeds, target_class=cfg.get("target_class", 1),
                                  kind=cfg.get("kind", "heterophily"),
                                  split_ratios=tuple(cfg.get("split", (0.4, 0.3, 0.3))))
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "config.json"), _dump({"schema_version": SCHEMA_VERSION, **cfg}))
    _write(os.path.join(args.out, "sweep.csv"), rows_to_csv(rows, SWEEP_FIELDS))
    _write(os.path.join(args.out, "chv.csv"), rows_to_csv(chv_rows, ["ratio", "seed", "chv"]))
    sys.stdout.write(rows_to_csv(rows, SWEEP_FIELDS))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hedgegad", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version",
                   version=f"hedgegad {__version__} (schema {SCHEMA_VERSION})")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    a = sub.add_parser("analyze", help="homophily profile and density curve of a graph")
    a.add_argument("graph")
    a.add_argument("--relation-view", default="union")
    a.add_argument("--bandwidth", type=float)
    a.add_argument("--out")
    a.add_argument("--per-node", action="store_true", help="include per-node homophily in the JSON")
    a.set_defaults(fn=cmd_analyze)

    c = sub.add_parser("csbm-gen", help="sample a CSBM-C graph and its oracle values")
    c.add_argument("--mu0", required=True)
    c.add_argument("--mu1", required=True)
    c.add_argument("--d", type=int, required=True)
    c.add_argument("--h0", type=float, required=True)
    c.add_argument("--h1", type=float, required=True)
    c.add_argument("--n", type=int, default=100, help="nodes per class")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True, help="path of the JSON envelope to write")
    c.set_defaults(fn=cmd_csbm_gen)

    k = sub.add_parser("attack", help="heterophily or random edge attack")
    k.add_argument("--kind", choices=("heterophily", "random"), default="heterophily")
    k.add_argument("--class", dest="target_class", type=int, default=0)
    k.add_argument("--ratio", type=float, required=True)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--relation", type=int, default=0)
    k.add_argument("input")
    k.add_argument("output")
    k.set_defaults(fn=cmd_attack)

    t = sub.add_parser("train", help="train HedGe or a baseline")
    t.add_argument("graph")
    t.add_argument("--config")
    t.add_argument("--model", choices=MODELS, default="hedge")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="score a saved checkpoint")
    e.add_argument("run_dir")
    e.add_argument("graph", nargs="?")
    e.add_argument("--split", choices=("train", "val", "test"), default="test")
    e.set_defaults(fn=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=cmd_gradcheck)

    s = sub.add_parser("sweep", help="attack-ratio sweep over models and seeds")
    s.add_argument("graph")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_sweep)
    return p


def main(argv=None) -> int:
    from .autodiff import ShapeError
    from .hedge import EigenError
    from .nn import NumericError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (NumericError, EigenError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GraphError, ShapeError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
