# cli_main.py
# Command line surface: dataset prep, commute weights, training, evaluation, diagnostics
import argparse
import os
import sys
from typing import Dict, List, Optional

from config import settings
from config.logger import logger, set_verbosity
from modules import analysis, backends, cgnn, datasets
from modules.commute import ProximityWeights
from modules.errors import CgnnError, StageError
from modules.pipeline import Pipeline, stage, write_manifest
from run_config import RunConfig, config_from_file_and_flags

# flag dest -> RunConfig key
RUN_FLAGS = ("graph", "features", "labels", "splits", "layers", "hidden", "lr", "weight_decay",
             "epochs", "seed", "rank_q", "backend", "out_dir", "synthetic", "rewiring", "dense_cap",
             "activation")


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--graph", help="edge list (src<TAB>dst)")
    p.add_argument("--features", help="feature matrix ('N d' header)")
    p.add_argument("--labels", help="labels (node<TAB>label)")
    p.add_argument("--splits", help="splits (node<TAB>train|val|test)")
    p.add_argument("--synthetic", choices=datasets.SYNTHETIC_KINDS, help="use a generated dataset instead of files")
    p.add_argument("--layers", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--rank-q", dest="rank_q", type=int)
    p.add_argument("--backend", choices=settings.BACKENDS)
    p.add_argument("--rewiring", choices=("similarity", "symmetric"))
    p.add_argument("--dense-cap", dest="dense_cap", type=int)
    p.add_argument("--activation", choices=cgnn.ACTIVATIONS)
    p.add_argument("--out-dir", dest="out_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cgnn", description="Commute-time weighted GNN on directed graphs")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("rewire", "rewire the graph and write the result"),
                            ("commute", "commute times and proximity weights for the graph's edges"),
                            ("train", "full run: rewire, commute, train, evaluate, write"),
                            ("eval", "evaluate a saved checkpoint"),
                            ("diag", "label-similarity diagnostics")):
        p = sub.add_parser(name, help=help_text)
        _add_run_flags(p)
        if name == "eval":
            p.add_argument("--checkpoint", required=True)
            p.add_argument("--weights-dir", help="directory with proximity_in.tsv / proximity_out.tsv")
        if name == "diag":
            p.add_argument("--commute-change", action="store_true",
                           help="also report the commute change caused by rewiring (dense backends)")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--kind", choices=datasets.SYNTHETIC_KINDS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p-in", dest="p_in", type=float)
    p.add_argument("--p-out", dest="p_out", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--seed", type=int, default=settings.SEED)
    p.add_argument("--out-dir", dest="out_dir", required=True)

    p = sub.add_parser("convert", help="turn a benchmark edge export into graph.edges + id_map.tsv")
    p.add_argument("--input", required=True, help="comma or whitespace separated edge export")
    p.add_argument("--undirected", action="store_true", help="add the reverse of every edge")
    p.add_argument("--out-dir", dest="out_dir", required=True)

    p = sub.add_parser("calibrate", help="2-node self-loop fixture under both closed forms")
    p.add_argument("--out-dir", dest="out_dir")
    return parser


def _run_config(args) -> RunConfig:
    overrides = {k: getattr(args, k, None) for k in RUN_FLAGS}
    return config_from_file_and_flags(args.config, overrides)


def _write_kv(path: str, values: Dict[str, object]):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for k, v in values.items():
            f.write(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n")


# ---------------- commands ----------------
def cmd_rewire(args) -> int:
    pipe = Pipeline(_run_config(args))
    res = pipe.rewire()
    out = pipe.cfg.out_dir
    with stage("write"):
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "rewired.edges"), "w", encoding="utf-8", newline="\n") as f:
            f.write("".join(f"{i}\t{j}\n" for i, j in res.rewired.edges))
        with open(os.path.join(out, "ordering.txt"), "w", encoding="utf-8", newline="\n") as f:
            f.write("".join(f"{v}\n" for v in res.ordering))
        write_manifest(out)
    print(f"rewired: N={res.rewired.num_nodes} M={res.rewired.num_edges} added={len(res.added_edges)}")
    return 0


def cmd_commute(args) -> int:
    pipe = Pipeline(_run_config(args))
    values = pipe.compute_commute()
    w = pipe.proximity()
    out = pipe.cfg.out_dir
    with stage("write"):
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "commute.tsv"), "w", encoding="utf-8", newline="\n") as f:
            f.write("".join(f"{i}\t{j}\t{c:.17g}\n" for (i, j), c in zip(pipe.load().graph.edges, values)))
        datasets.write_proximity(os.path.join(out, "proximity_in.tsv"), w.c_in)
        datasets.write_proximity(os.path.join(out, "proximity_out.tsv"), w.c_out)
        write_manifest(out)
    print(f"commute: {len(values)} edge(s), backend={pipe.cfg.backend}")
    return 0


def cmd_train(args) -> int:
    pipe = Pipeline(_run_config(args))
    pipe.run()
    print(" ".join(f"{k}={v}" for k, v in pipe.metrics.items()))
    return 0


def cmd_eval(args) -> int:
    pipe = Pipeline(_run_config(args))
    ds = pipe.load()
    with stage("load"):
        params = cgnn.load_checkpoint(args.checkpoint)
    if args.weights_dir:
        with stage("proximity"):
            w = ProximityWeights(
                num_nodes=ds.graph.num_nodes,
                c_in=datasets.read_proximity(os.path.join(args.weights_dir, "proximity_in.tsv")),
                c_out=datasets.read_proximity(os.path.join(args.weights_dir, "proximity_out.tsv")),
            )
    else:
        w = pipe.proximity()
    results = {}
    with stage("evaluate"):
        for name in datasets.SPLIT_NAMES:
            idx = getattr(ds.splits, name)
            if idx.size:
                results[f"{name}_acc"] = cgnn.evaluate(params, ds.graph, ds.features, ds.labels, idx, w)
    out = pipe.cfg.out_dir
    with stage("write"):
        os.makedirs(out, exist_ok=True)
        _write_kv(os.path.join(out, "eval_metrics.txt"), results)
        write_manifest(out)
    print(" ".join(f"{k}={v}" for k, v in results.items()))
    return 0


def cmd_diag(args) -> int:
    pipe = Pipeline(_run_config(args))
    ds = pipe.load()
    w = pipe.proximity()
    with stage("diagnostics"):
        report = analysis.diagnostics_report(ds.graph, ds.labels, w)
        text = analysis.format_report(report)
        if args.commute_change:
            change = backends.commute_change_report(ds.graph, ds.features, seed=pipe.cfg.seed,
                                                    variant=pipe.cfg.rewiring)
            text += f"commute_change_delta = {change['delta']!r}\n"
    out = pipe.cfg.out_dir
    with stage("write"):
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "diagnostics.txt"), "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        analysis.write_distance_table(os.path.join(out, "distance_table.tsv"), ds.graph, ds.labels, w)
        write_manifest(out)
    print(text, end="")
    return 0


def cmd_synth(args) -> int:
    keys = {"two_block": ("p_in", "p_out", "noise", "dim"),
            "random_digraph": ("p", "dim"),
            "directed_cycle": ("dim",)}[args.kind]
    params = {k: getattr(args, k) for k in keys if getattr(args, k) is not None}
    with stage("synth"):
        ds = datasets.generate_synthetic(args.kind, args.n, params, seed=args.seed)
        paths = datasets.save_dataset(ds, args.out_dir)
        write_manifest(args.out_dir)
    print(f"synth: {args.kind} N={ds.graph.num_nodes} M={ds.graph.num_edges} -> {paths['graph']}")
    return 0


def cmd_convert(args) -> int:
    with stage("convert"):
        n, m = datasets.convert_edge_export(args.input, args.out_dir, directed=not args.undirected)
        write_manifest(args.out_dir)
    print(f"convert: N={n} M={m} -> {args.out_dir}")
    return 0


def cmd_calibrate(args) -> int:
    with stage("calibrate"):
        report = backends.calibration_report()
    if args.out_dir:
        with stage("write"):
            os.makedirs(args.out_dir, exist_ok=True)
            _write_kv(os.path.join(args.out_dir, "calibration.txt"), report)
            write_manifest(args.out_dir)
    for k, v in report.items():
        print(f"{k} = {v!r}")
    return 0


COMMANDS = {
    "rewire": cmd_rewire,
    "commute": cmd_commute,
    "train": cmd_train,
    "eval": cmd_eval,
    "diag": cmd_diag,
    "synth": cmd_synth,
    "convert": cmd_convert,
    "calibrate": cmd_calibrate,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    set_verbosity(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except StageError as e:
        logger.debug("stage failure", exc_info=True)
        print(str(e), file=sys.stderr)
        return 1
    except CgnnError as e:
        # raised outside a stage (config parsing, flag merging)
        print(f"[{args.command}] {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
