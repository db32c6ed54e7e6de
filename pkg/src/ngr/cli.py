"""``ngr`` command line: generate data, train, evaluate, export, benchmark.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .dataset import read_numeric_csv, read_table, standardize, write_csv
from .errors import NgrError, NumericalDivergenceError
from .ggm import sample, save_ggm, truth_to_dict
from .io import (
    RUN_FIELDS,
    SUMMARY_FIELDS,
    RunManifest,
    default_jobs,
    export_graph,
    graph_to_dict,
    load_graph,
    load_truth,
    make_ggm,
    run_bench,
    write_json,
    write_rows,
)
from .metrics import append_result_row, auc, aupr, edge_scores
from .multimodal import build_schema, encode, fit, load_schema, save_schema
from .network import save_model
from .trainer import TrainConfig, train, write_history

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGENCE = 0, 2, 3, 4

logger = logging.getLogger("ngr")


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden", type=_int_list, help="hidden widths, e.g. 20 or 20,20 (default 2D)")
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
    p.add_argument("--lambda", dest="lam", type=float, help="self-dependency weight")
    p.add_argument("--gamma", type=float, help="sparsity weight")
    p.add_argument("--eta", type=float, help="encoder cross-group weight (multimodal)")
    p.add_argument("--beta", type=float, help="decoder cross-group weight (multimodal)")
    p.add_argument("--auto-penalty", action="store_true",
                   help="balance unset penalty weights against the initial regression loss")
    p.add_argument("--log-scaling", action="store_true")
    p.add_argument("--val-fraction", type=float, default=TrainConfig.val_fraction)
    p.add_argument("--batch-size", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ngr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ngr {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-ggm", help="sample data from a synthetic Gaussian graphical model")
    g.add_argument("--nodes", type=int, required=True)
    g.add_argument("--structure", choices=["chain", "random"], default="chain")
    g.add_argument("--edge-prob", type=float, default=0.2)
    g.add_argument("--samples", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")

    t = sub.add_parser("train", help="fit a network and extract its dependency graph")
    t.add_argument("--data", required=True)
    t.add_argument("--schema", help="column schema JSON; enables the mixed-type path")
    t.add_argument("--infer-schema", action="store_true",
                   help="infer the schema from the table and write it to the output directory")
    _add_train_flags(t)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True, help="output directory")

    e = sub.add_parser("eval", help="score a graph against ground truth")
    e.add_argument("--graph", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--out", required=True, help="results CSV (appended)")
    e.add_argument("--method", default="ngr")

    x = sub.add_parser("export", help="write a graph as DOT, edge list or JSON")
    x.add_argument("--graph", required=True)
    x.add_argument("--format", required=True)
    x.add_argument("--threshold", type=float, default=0.0)
    x.add_argument("--out", help="output file (default stdout)")

    b = sub.add_parser("bench", help="seed sweep over sample sizes")
    b.add_argument("--nodes", type=int, default=10)
    b.add_argument("--structure", choices=["chain", "random"], default="chain")
    b.add_argument("--edge-prob", type=float, default=0.2)
    b.add_argument("--samples-list", type=_int_list, default=[100, 500, 1000])
    b.add_argument("--runs", type=int, default=5)
    b.add_argument("--seed", type=int, default=0, help="master seed; run i uses seed + i")
    _add_train_flags(b)
    b.add_argument("--jobs", type=int, help="parallel workers (default $NGR_NUM_THREADS or 1)")
    b.add_argument("--out", required=True, help="summary table CSV")

    for p in (g, t, e, x, b):
        p.add_argument("--config", help="flat key=value file; command-line flags win")
    return parser


# -- config file -------------------------------------------------------------


def read_config(path: str) -> list[tuple[str, str]]:
    pairs = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for n, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        pairs.append((key.replace("_", "-"), value))
    return pairs


def _config_argv(subparser: argparse.ArgumentParser, pairs, path: str) -> list[str]:
    """Turn config pairs into flags placed before the real ones (last wins)."""
    out = []
    for key, value in pairs:
        action = subparser._option_string_actions.get(f"--{key}")
        if action is None or key == "config":
            raise UsageError(f"{path}: unknown key {key!r}")
        if action.nargs == 0:
            if value.lower() in ("1", "true", "yes", "on"):
                out.append(f"--{key}")
            elif value.lower() not in ("0", "false", "no", "off"):
                raise UsageError(f"{path}: {key} expects a boolean, got {value!r}")
        else:
            out += [f"--{key}", value]
    return out


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        extra = _config_argv(subparser, read_config(args.config), args.config)
        i = argv.index(args.command) + 1
        args = parser.parse_args(argv[:i] + extra + argv[i:])
    return args


# -- commands ----------------------------------------------------------------


def _train_config(args, seed: int) -> TrainConfig:
    def pick(value, default):
        if value is not None:
            return value
        return None if args.auto_penalty else default

    return TrainConfig(
        lam=pick(args.lam, TrainConfig.lam),
        gamma=pick(args.gamma, TrainConfig.gamma),
        eta=pick(args.eta, TrainConfig.eta),
        beta=pick(args.beta, TrainConfig.beta),
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        hidden_dims=tuple(args.hidden) if args.hidden else None,
        val_fraction=args.val_fraction,
        log_scaling=args.log_scaling,
        seed=seed,
    )


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise NgrError(f"cannot create output directory {out}: {exc}") from None
    return out


def cmd_gen_ggm(args, manifest: RunManifest) -> int:
    if args.nodes < 2:
        raise UsageError(f"--nodes must be >= 2, got {args.nodes}")
    if args.samples < 1:
        raise UsageError(f"--samples must be >= 1, got {args.samples}")
    if args.structure == "random" and not 0.0 < args.edge_prob < 1.0:
        raise UsageError(f"--edge-prob must lie in (0, 1), got {args.edge_prob}")
    out = _out_dir(args.out)
    manifest.seeds = [args.seed]
    ggm = make_ggm(args.nodes, args.structure, args.edge_prob, args.seed)
    data = sample(ggm, args.samples, args.seed)
    paths = {"data": out / "data.csv", "ggm": out / "ggm.json", "truth": out / "truth.json"}
    write_csv(paths["data"], data)
    save_ggm(paths["ggm"], ggm)
    write_json(paths["truth"], truth_to_dict(ggm, data.feature_names))
    manifest.outputs.update({k: str(v) for k, v in paths.items()})
    return EXIT_OK


def cmd_train(args, manifest: RunManifest) -> int:
    cfg = _train_config(args, args.seed)
    manifest.config = cfg.to_dict()
    manifest.seeds = [args.seed]
    manifest.inputs["data"] = args.data
    out = _out_dir(args.out)
    extra = {}
    if args.schema or args.infer_schema:
        header, rows = read_table(args.data)
        if args.schema:
            manifest.inputs["schema"] = args.schema
            schema = load_schema(args.schema)
        else:
            schema = build_schema(header, rows)
            save_schema(out / "schema.json", schema)
            manifest.outputs["schema"] = str(out / "schema.json")
        data = encode(header, rows, schema)
        result = fit(data, schema, cfg)
        extra["schema"] = schema.to_dict()
    else:
        data = standardize(read_numeric_csv(args.data))
        result = train(data, cfg)
    extra["core_layers"] = list(result.masks.core_layers)
    extra["train_config"] = result.config.to_dict()
    manifest.config = result.config.to_dict()

    standardization = {
        "feature_names": list(data.feature_names),
        "mean": data.mean.tolist(),
        "std": data.std.tolist(),
    }
    paths = {"model": out / "model.json", "history": out / "history.csv", "graph": out / "graph.json"}
    save_model(paths["model"], result.params, standardization, **extra)
    write_history(paths["history"], result.history)
    seconds = float(sum(result.history.seconds))
    meta = {"method": "ngr", "D": result.graph.n_features, "M": data.n_samples,
            "seed": args.seed, "wall_clock": seconds}
    write_json(paths["graph"], graph_to_dict(result.graph, meta))
    manifest.outputs.update({k: str(v) for k, v in paths.items()})
    final = result.history.val_regression[-1]
    print(f"final validation regression loss: {final!r}")
    return EXIT_OK


def cmd_eval(args, manifest: RunManifest) -> int:
    manifest.inputs.update(graph=args.graph, truth=args.truth)
    graph, meta = load_graph(args.graph)
    truth = load_truth(args.truth)
    scored = edge_scores(graph, truth)
    row = {
        "method": meta.get("method", args.method),
        "D": graph.n_features,
        "M": meta.get("M", ""),
        "seed": meta.get("seed", ""),
        "auc": repr(auc(scored)),
        "aupr": repr(aupr(scored)),
        "wall_clock": repr(float(meta["wall_clock"])) if "wall_clock" in meta else "",
    }
    append_result_row(args.out, row)
    manifest.outputs["results"] = args.out
    print(f"auc={row['auc']} aupr={row['aupr']}")
    return EXIT_OK


def cmd_export(args, manifest: RunManifest) -> int:
    if args.format not in ("dot", "edgelist", "json"):
        raise UsageError(f"unknown export format {args.format!r}; choose dot, edgelist or json")
    manifest.inputs["graph"] = args.graph
    graph, _ = load_graph(args.graph)
    text = export_graph(graph, args.format, args.threshold)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        manifest.outputs["export"] = args.out
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args, manifest: RunManifest) -> int:
    if args.nodes < 2 or args.runs < 1 or min(args.samples_list) < 2:
        raise UsageError("bench needs --nodes >= 2, --runs >= 1 and sample sizes >= 2")
    cfg = _train_config(args, args.seed)
    out = Path(args.out)
    _out_dir(str(out.parent))
    jobs = args.jobs or default_jobs()
    manifest.config = {**cfg.to_dict(), "nodes": args.nodes, "structure": args.structure,
                       "edge_prob": args.edge_prob, "samples_list": args.samples_list,
                       "runs": args.runs, "jobs": jobs}
    manifest.seeds = [args.seed + i for i in range(args.runs)]
    rows, summary = run_bench(args.nodes, args.structure, args.samples_list, args.runs,
                              args.seed, cfg, args.edge_prob, jobs)
    for s in summary:
        s["auc"] = f"{s['auc_mean']:.3f}±{s['auc_std']:.3f}"
        s["aupr"] = f"{s['aupr_mean']:.3f}±{s['aupr_std']:.3f}"
    runs_path = out.with_name(out.stem + ".runs.csv")
    write_rows(out, summary, SUMMARY_FIELDS + ["auc", "aupr"])
    write_rows(runs_path, rows, RUN_FIELDS)
    manifest.outputs.update(table=str(out), runs=str(runs_path))
    manifest.extra["run_wall_clock"] = [r["wall_clock"] for r in rows]
    failed = [r for r in rows if r["error"]]
    for r in failed:
        logger.warning("run M=%s seed=%s failed: %s", r["M"], r["seed"], r["error"])
    for s in summary:
        print(f"M={s['M']:>6}  AUC {s['auc']}  AUPR {s['aupr']}  ({s['ok']}/{s['runs']} ok)")
    if len(failed) == len(rows):
        diverged = all(r["error"].startswith("NumericalDivergenceError") for r in failed)
        manifest.error = f"all {len(rows)} runs failed; first: {failed[0]['error']}"
        return EXIT_DIVERGENCE if diverged else EXIT_DATA
    return EXIT_OK


COMMANDS = {
    "gen-ggm": cmd_gen_ggm,
    "train": cmd_train,
    "eval": cmd_eval,
    "export": cmd_export,
    "bench": cmd_bench,
}


def _manifest_path(args) -> Path | None:
    if args.command in ("gen-ggm", "train"):
        return Path(args.out) / "manifest.json"
    if args.command == "bench":
        out = Path(args.out)
        return out.with_name(out.stem + ".manifest.json")
    if args.command == "eval":
        return Path(args.out).with_suffix(".manifest.json")
    if args.command == "export" and args.out:
        return Path(args.out + ".manifest.json")
    return None


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"ngr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    manifest = RunManifest(args.command)
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        code = COMMANDS[args.command](args, manifest)
    except UsageError as exc:
        manifest.error, code = str(exc), EXIT_USAGE
    except NumericalDivergenceError as exc:
        manifest.error, code = str(exc), EXIT_DIVERGENCE
    except (NgrError, OSError) as exc:
        manifest.error, code = str(exc), EXIT_DATA
    except ValueError as exc:
        # remaining ValueErrors come from flag values the library rejects
        manifest.error, code = str(exc), EXIT_USAGE
    if manifest.error:
        print(f"ngr: error: {manifest.error}", file=sys.stderr)
    manifest.wall_clock = time.perf_counter() - t0
    path = _manifest_path(args)
    if path is not None:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            manifest.outputs.setdefault("manifest", str(path))
            manifest.write(path)
        except OSError as exc:
            print(f"ngr: warning: could not write manifest {path}: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
