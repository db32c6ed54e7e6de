"""Penalized training loop that turns a fitted MLP into a dependency graph."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import Dataset, standardize
from .errors import NumericalDivergenceError
from .network import (
    AdamState,
    LossBreakdown,
    MlpParams,
    PenaltyWeights,
    adam_step,
    init_mlp,
    loss_and_gradients,
)
from .pathnorm import PenaltyMasks, RecoveredGraph, extract_graph

logger = logging.getLogger(__name__)

FULL_BATCH_LIMIT = 5000
DEFAULT_BATCH = 512


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    ``lam``/``gamma`` left as ``None`` are balanced automatically at
    initialization; so are ``eta``/``beta`` for multimodal runs.
    """

    lam: float | None = 1.0
    gamma: float | None = 0.01
    eta: float | None = 1.0
    beta: float | None = 1.0
    symmetry: float = 0.0
    epochs: int = 2000
    batch_size: int | None = None
    learning_rate: float = 1e-3
    hidden_dims: tuple[int, ...] | None = None
    val_fraction: float = 0.2
    log_scaling: bool = False
    seed: int = 0
    patience: int | None = 500

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        for name in ("lam", "gamma", "eta", "beta", "symmetry"):
            v = getattr(self, name)
            if v is not None and (not math.isfinite(v) or v < 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def penalty_weights(self) -> PenaltyWeights:
        return PenaltyWeights(
            self.lam or 0.0, self.gamma or 0.0, self.eta or 0.0, self.beta or 0.0,
            self.symmetry, self.log_scaling,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims) if self.hidden_dims is not None else None
        return d


@dataclass
class TrainHistory:
    train: list[LossBreakdown] = field(default_factory=list)
    val_regression: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.train)


@dataclass
class TrainResult:
    params: MlpParams
    history: TrainHistory
    graph: RecoveredGraph
    config: TrainConfig
    masks: PenaltyMasks


HISTORY_FIELDS = [
    "epoch", "regression", "diag_penalty", "sparsity_penalty",
    "enc_penalty", "dec_penalty", "total", "val_regression",
]


def write_history(path: str | Path, history: TrainHistory) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_FIELDS)
        for e, (b, v) in enumerate(zip(history.train, history.val_regression), start=1):
            w.writerow([e, repr(b.regression), repr(b.diag_penalty), repr(b.sparsity_penalty),
                        repr(b.enc_penalty), repr(b.dec_penalty), repr(b.total), repr(v)])


def split(data: Dataset, val_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Uniform random train/validation partition without replacement."""
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError("val_fraction must lie in [0, 1)")
    m = data.n_samples
    n_val = int(round(m * val_fraction))
    if m - n_val < 1:
        raise ValueError(f"train split would be empty (M={m}, val_fraction={val_fraction})")
    if n_val == 0:
        return data, data.subset(np.arange(0))
    perm = np.random.default_rng(seed).permutation(m)
    return data.subset(np.sort(perm[n_val:])), data.subset(np.sort(perm[:n_val]))


def balance_penalties(regression: float, diag: float, sparsity: float) -> tuple[float, float]:
    """Pick lambda, gamma so each weighted penalty equals the regression loss."""
    if diag <= 0 or sparsity <= 0:
        logger.warning("zero penalty term at initialization; falling back to lambda=gamma=1")
        return 1.0, 1.0
    return regression / diag, regression / sparsity


def _batch_rows(data: Dataset, cfg: TrainConfig) -> int:
    if cfg.batch_size is not None:
        return min(cfg.batch_size, data.n_samples)
    return data.n_samples if data.n_samples <= FULL_BATCH_LIMIT else DEFAULT_BATCH


def init_penalties(
    data: Dataset, cfg: TrainConfig, params: MlpParams | None = None, masks: PenaltyMasks | None = None
) -> TrainConfig:
    """Resolve unset penalty constants by ratio balancing on one batch."""
    unset = [n for n in ("lam", "gamma", "eta", "beta") if getattr(cfg, n) is None]
    if not unset:
        return cfg
    if params is None:
        params = init_mlp(_layer_dims(data.n_features, cfg), cfg.seed)
    rows = np.arange(_batch_rows(data, cfg))
    parts, _ = loss_and_gradients(params, data.values[rows], PenaltyWeights(), masks, with_grad=False)
    lam, gamma = balance_penalties(parts.regression, parts.diag_penalty, parts.sparsity_penalty)
    resolved = {"lam": lam, "gamma": gamma}
    for name, raw in (("eta", parts.enc_penalty), ("beta", parts.dec_penalty)):
        resolved[name] = parts.regression / raw if raw > 0 else 1.0
    return replace(cfg, **{n: resolved[n] for n in unset})


def _layer_dims(d: int, cfg: TrainConfig) -> list[int]:
    hidden = list(cfg.hidden_dims) if cfg.hidden_dims is not None else [2 * d]
    return [d, *hidden, d]


def train(
    data: Dataset,
    cfg: TrainConfig,
    masks: PenaltyMasks | None = None,
    params: MlpParams | None = None,
    graph_fn=None,
) -> TrainResult:
    """Fit the network with Adam on the penalized loss and extract the graph.

    ``masks`` and ``params`` let a caller supply a non-default architecture
    (the multimodal path); ``graph_fn(params)`` then maps the fitted network
    to a :class:`RecoveredGraph`. The data is used as given, so standardize
    it first.
    """
    if params is None:
        params = init_mlp(_layer_dims(data.n_features, cfg), cfg.seed)
    if masks is None:
        masks = PenaltyMasks.unimodal(data.n_features, params.n_layers)
    train_set, val_set = split(data, cfg.val_fraction, cfg.seed)
    cfg = init_penalties(train_set, cfg, params, masks)
    pw = cfg.penalty_weights()

    rng = np.random.default_rng([cfg.seed, 1])
    n_rows = _batch_rows(train_set, cfg)
    full = n_rows == train_set.n_samples
    state = AdamState.zeros_like(params, learning_rate=cfg.learning_rate)
    history = TrainHistory()
    best_val, best_epoch, warned = math.inf, 0, False
    x_train = train_set.values
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        xb = x_train if full else x_train[np.sort(rng.choice(len(x_train), n_rows, replace=False))]
        try:
            parts, grads = loss_and_gradients(params, xb, pw, masks)
        except NumericalDivergenceError as exc:
            raise NumericalDivergenceError(exc.term, epoch) from None
        params, state = adam_step(params, grads, state)
        if not params.is_finite():
            raise NumericalDivergenceError("parameters", epoch)
        val = _val_regression(params, val_set)
        history.train.append(parts)
        history.val_regression.append(val)
        history.seconds.append(time.perf_counter() - t0)
        if cfg.patience and val_set.n_samples:
            if val < best_val:
                best_val, best_epoch = val, epoch
            elif not warned and epoch - best_epoch >= cfg.patience:
                logger.warning(
                    "validation regression has not improved for %d epochs (best %.4g at epoch %d)",
                    cfg.patience, best_val, best_epoch,
                )
                warned = True

    if graph_fn is not None:
        graph = graph_fn(params)
    else:
        graph = extract_graph(params, data.feature_names, masks.core_layers)
    return TrainResult(params, history, graph, cfg, masks)


def _val_regression(params: MlpParams, val_set: Dataset) -> float:
    if val_set.n_samples == 0:
        return float("nan")
    x = val_set.values
    h = x
    for w, b, act in zip(params.weights, params.biases, params.relu):
        h = h @ w.T + b
        if act:
            h = np.maximum(h, 0.0)
    return float(((h - x) ** 2).sum() / x.shape[0])


def recover(data: Dataset, cfg: TrainConfig | None = None) -> RecoveredGraph:
    """Standardize, train with ``cfg`` (defaults if omitted) and return the graph."""
    cfg = cfg or TrainConfig()
    return train(standardize(data), cfg).graph
