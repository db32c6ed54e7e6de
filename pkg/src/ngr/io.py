"""File formats and experiment orchestration behind the command line."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import standardize
from .errors import DataError, NumericalDivergenceError
from .ggm import chain_precision, ci_graph, random_sparse_precision, sample
from .metrics import auc, aupr, edge_scores
from .pathnorm import GraphMask, RecoveredGraph
from .trainer import TrainConfig, train

FORMAT_VERSION = 1


def graph_to_dict(graph: RecoveredGraph, meta: dict | None = None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "feature_names": list(graph.feature_names),
        "scores": graph.scores.tolist(),
        "edges": [[i, j, s] for i, j, s in graph.edges],
        "meta": meta or {},
    }


def graph_from_dict(doc: dict) -> tuple[RecoveredGraph, dict]:
    try:
        scores = np.asarray(doc["scores"], dtype=float)
        names = doc.get("feature_names") or [f"x{i}" for i in range(scores.shape[0])]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed graph document: {exc}") from exc
    if scores.ndim != 2 or scores.shape[0] != scores.shape[1]:
        raise DataError(f"graph scores must be a square matrix, got shape {scores.shape}")
    d = scores.shape[0]
    iu, ju = np.triu_indices(d, 1)
    edges = [(int(i), int(j), float(scores[i, j])) for i, j in zip(iu, ju) if scores[i, j] > 0]
    edges.sort(key=lambda e: (-e[2], e[0], e[1]))
    return RecoveredGraph(scores, list(names), edges), doc.get("meta", {})


def _read_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def write_json(path: str | Path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_graph(path: str | Path) -> tuple[RecoveredGraph, dict]:
    return graph_from_dict(_read_json(path))


def load_truth(path: str | Path) -> GraphMask:
    doc = _read_json(path)
    try:
        return GraphMask(np.asarray(doc["adjacency"]), "target_graph")
    except (KeyError, ValueError) as exc:
        raise DataError(f"malformed truth document {path}: {exc}") from exc


def export_graph(graph: RecoveredGraph, fmt: str, threshold: float = 0.0) -> str:
    """Render the graph as DOT, a CSV edge list, or the full JSON document.

    DOT and edge-list outputs keep edges with a nonzero score of at least
    ``threshold``.
    """
    kept = [(i, j, s) for i, j, s in graph.edges if s >= threshold and s > 0]
    if fmt == "json":
        return json.dumps(graph_to_dict(graph), indent=1) + "\n"
    if fmt == "edgelist":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "score"])
        for i, j, s in kept:
            w.writerow([i, j, repr(s)])
        return buf.getvalue()
    if fmt == "dot":
        lines = ["graph ngr {"]
        for k, name in enumerate(graph.feature_names):
            lines.append(f'  n{k} [label="{name}"];')
        for i, j, s in kept:
            lines.append(f'  n{i} -- n{j} [label="{s:.4g}", weight={s!r}];')
        lines.append("}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown export format {fmt!r}; choose dot, edgelist or json")


@dataclass
class RunManifest:
    command: str
    config: dict = field(default_factory=dict)
    seeds: list[int] = field(default_factory=list)
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    tool_version: str = __version__
    wall_clock: float = 0.0
    error: str | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "command": self.command,
            "config": self.config,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "tool_version": self.tool_version,
            "python": platform.python_version(),
            "wall_clock": self.wall_clock,
            "error": self.error,
            **self.extra,
        }

    def write(self, path: str | Path) -> None:
        write_json(path, self.to_dict())


# -- benchmark sweep ---------------------------------------------------------


@dataclass(frozen=True)
class BenchJob:
    nodes: int
    structure: str
    edge_prob: float
    samples: int
    seed: int
    cfg: TrainConfig


def make_ggm(nodes: int, structure: str, edge_prob: float, seed: int):
    if structure == "chain":
        return chain_precision(nodes, seed)
    if structure == "random":
        return random_sparse_precision(nodes, edge_prob, seed)
    raise ValueError(f"unknown structure {structure!r}")


def run_bench_job(job: BenchJob) -> dict:
    """Generate, train and score one (sample size, seed) cell."""
    t0 = time.perf_counter()
    row = {"method": "ngr", "D": job.nodes, "M": job.samples, "seed": job.seed}
    try:
        ggm = make_ggm(job.nodes, job.structure, job.edge_prob, job.seed)
        data = standardize(sample(ggm, job.samples, job.seed))
        result = train(data, replace(job.cfg, seed=job.seed))
        scored = edge_scores(result.graph, ci_graph(ggm)[0])
        row.update(auc=auc(scored), aupr=aupr(scored), error="")
    except (NumericalDivergenceError, ValueError) as exc:
        row.update(auc=float("nan"), aupr=float("nan"), error=f"{type(exc).__name__}: {exc}")
    row["wall_clock"] = time.perf_counter() - t0
    return row


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("NGR_NUM_THREADS", "1")))
    except ValueError:
        return 1


def run_bench(
    nodes: int,
    structure: str,
    samples_list: list[int],
    runs: int,
    master_seed: int,
    cfg: TrainConfig,
    edge_prob: float = 0.2,
    jobs: int = 1,
) -> tuple[list[dict], list[dict]]:
    """Full sweep; run ``i`` uses seed ``master_seed + i`` for every sample size.

    Returns per-run rows and per-sample-size summary rows, both in
    (samples, run) order whatever order the jobs finish in.
    """
    work = [
        BenchJob(nodes, structure, edge_prob, m, master_seed + i, cfg)
        for m in samples_list
        for i in range(runs)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_bench_job, work))
    else:
        rows = [run_bench_job(j) for j in work]
    summary = []
    for m in samples_list:
        ok = [r for r in rows if r["M"] == m and not r["error"]]
        a = np.array([r["auc"] for r in ok])
        p = np.array([r["aupr"] for r in ok])
        summary.append({
            "D": nodes,
            "M": m,
            "runs": runs,
            "ok": len(ok),
            "auc_mean": float(a.mean()) if len(ok) else math.nan,
            "auc_std": float(a.std()) if len(ok) else math.nan,
            "aupr_mean": float(p.mean()) if len(ok) else math.nan,
            "aupr_std": float(p.std()) if len(ok) else math.nan,
        })
    return rows, summary


SUMMARY_FIELDS = ["D", "M", "runs", "ok", "auc_mean", "auc_std", "aupr_mean", "aupr_std"]
RUN_FIELDS = ["method", "D", "M", "seed", "auc", "aupr", "error"]


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def write_rows(path: str | Path, rows: list[dict], fields: list[str]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in fields})


def read_rows(path: str | Path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))

