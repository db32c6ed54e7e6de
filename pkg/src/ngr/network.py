"""Dense multitask MLP: initialization, evaluation, penalized loss, exact
gradients and Adam updates, all in plain numpy."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NumericalDivergenceError, ShapeError
from .pathnorm import PenaltyMasks, path_product, path_product_grads

LOG_EPS = 1e-12
FORMAT_VERSION = 1


@dataclass
class MlpParams:
    """Layer weights (dim_{l+1} x dim_l) and biases of an MLP.

    ``relu`` flags, per layer, whether a ReLU follows it. The default is
    ReLU after every layer except the last, whose output stays affine.
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int = 0
    relu: list[bool] | None = None

    def __post_init__(self):
        self.layer_dims = [int(d) for d in self.layer_dims]
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        n = len(self.weights)
        if n < 1 or len(self.biases) != n or len(self.layer_dims) != n + 1:
            raise ShapeError(
                f"{len(self.layer_dims)} dims, {n} weights, {len(self.biases)} biases do not chain"
            )
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_dims[l + 1], self.layer_dims[l])
            if w.shape != want or b.shape != (want[0],):
                raise ShapeError(f"layer {l}: weight {w.shape}, bias {b.shape}, expected {want}")
        if self.relu is None:
            self.relu = [True] * (n - 1) + [False]
        self.relu = [bool(r) for r in self.relu]
        if len(self.relu) != n:
            raise ShapeError("one activation flag per layer required")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "MlpParams":
        return MlpParams(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.seed,
            list(self.relu),
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in (*self.weights, *self.biases))


def init_mlp(layer_dims: Sequence[int], seed: int = 0, relu: Sequence[bool] | None = None) -> MlpParams:
    """Glorot-uniform weights, zero biases, deterministic in ``seed``."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError(f"layer_dims needs >= 2 positive entries, got {list(layer_dims)}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(dims, weights, biases, seed, None if relu is None else list(relu))


def _row_stable_affine(h: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # BLAS matmul picks different kernels per batch size; a broadcast product
    # reduced along the last axis sums each row in the same order every time.
    return (h[:, None, :] * w[None, :, :]).sum(axis=-1) + b


def forward(mlp: MlpParams, x) -> np.ndarray:
    """Evaluate the network on one sample (1-D) or a batch (2-D).

    Each row of a batch evaluates bitwise identically to that row alone.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.ndim != 2 or h.shape[1] != mlp.layer_dims[0]:
        raise ShapeError(f"input width {h.shape[-1]} != {mlp.layer_dims[0]}")
    for w, b, act in zip(mlp.weights, mlp.biases, mlp.relu):
        h = _row_stable_affine(h, w, b)
        if act:
            h = np.maximum(h, 0.0)
    return h[0] if single else h


def _forward_cache(mlp: MlpParams, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    h = x
    for w, b, act in zip(mlp.weights, mlp.biases, mlp.relu):
        h = h @ w.T + b
        if act:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


@dataclass(frozen=True)
class PenaltyWeights:
    """Multipliers of the structure terms and whether they are log-scaled."""

    lam: float = 1.0
    gamma: float = 0.0
    eta: float = 0.0
    beta: float = 0.0
    symmetry: float = 0.0
    log_scaling: bool = False


@dataclass(frozen=True)
class LossBreakdown:
    regression: float
    diag_penalty: float
    sparsity_penalty: float
    enc_penalty: float = 0.0
    dec_penalty: float = 0.0
    symmetry_penalty: float = 0.0
    total: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _scale(value: float, log_scaling: bool) -> tuple[float, float]:
    """g(value) and g'(value)."""
    if log_scaling:
        return math.log(LOG_EPS + value), 1.0 / (LOG_EPS + value)
    return value, 1.0


def combine(parts: dict[str, float], pw: PenaltyWeights) -> float:
    """Weighted total of raw loss parts (regression is never scaled)."""
    total = parts["regression"]
    for key, coef in (
        ("diag_penalty", pw.lam),
        ("sparsity_penalty", pw.gamma),
        ("enc_penalty", pw.eta),
        ("dec_penalty", pw.beta),
    ):
        if coef:
            total += coef * _scale(parts[key], pw.log_scaling)[0]
    if pw.symmetry:
        total += pw.symmetry * parts["symmetry_penalty"]
    return total


def _check(name: str, value: float) -> float:
    if not math.isfinite(value):
        raise NumericalDivergenceError(name)
    return value


def _masks_for(mlp: MlpParams, masks: PenaltyMasks | None) -> PenaltyMasks:
    if masks is None:
        masks = PenaltyMasks.unimodal(mlp.layer_dims[0], mlp.n_layers)
    a, b = masks.self_range
    if masks.self_mask.shape != (mlp.layer_dims[a], mlp.layer_dims[b]):
        raise ShapeError(f"self mask {masks.self_mask.shape} does not match layers [{a}, {b})")
    start, stop = masks.core_layers
    core_in, core_out = mlp.layer_dims[start], mlp.layer_dims[stop]
    if masks.encoder is not None and masks.encoder.shape != (mlp.layer_dims[0], core_in):
        raise ShapeError("encoder mask does not match encoder layers")
    if masks.decoder is not None and masks.decoder.shape != (core_out, mlp.layer_dims[-1]):
        raise ShapeError("decoder mask does not match decoder layers")
    return masks


def _penalty_terms(mlp: MlpParams, masks: PenaltyMasks):
    """Raw penalty values plus (layer range, upstream) pairs for their gradients.

    Masks are stored in path view, so they are transposed before being
    applied to raw-orientation products. Summing sym(S) equals summing S,
    and sym(S) on the diagonal equals S there, so both core penalties act
    on S directly.
    """
    start, stop = masks.core_layers
    s = path_product(mlp.weights, start, stop)
    self_up = masks.self_mask.matrix.T
    a, b = masks.self_range
    s_self = s if (a, b) == (start, stop) else path_product(mlp.weights, a, b)
    terms = {
        "diag_penalty": (float((s_self * self_up).sum()), (a, b), self_up),
        "sparsity_penalty": (float(s.sum()), (start, stop), np.ones_like(s)),
    }
    if masks.encoder is not None and start > 0:
        up = 1.0 - masks.encoder.matrix.T
        se = path_product(mlp.weights, 0, start)
        terms["enc_penalty"] = (float((se * up).sum()), (0, start), up)
    if masks.decoder is not None and stop < mlp.n_layers:
        up = 1.0 - masks.decoder.matrix.T
        sd = path_product(mlp.weights, stop, mlp.n_layers)
        terms["dec_penalty"] = (float((sd * up).sum()), (stop, mlp.n_layers), up)
    return s, terms


def loss_and_gradients(
    mlp: MlpParams,
    batch,
    pw: PenaltyWeights,
    masks: PenaltyMasks | None = None,
    with_grad: bool = True,
):
    """Penalized reconstruction loss and its exact gradient.

    Returns ``(LossBreakdown, (weight_grads, bias_grads))``; the gradient
    pair is ``None`` when ``with_grad`` is false.
    """
    x = np.asarray(getattr(batch, "values", batch), dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeError("batch must be a nonempty 2-D array")
    if x.shape[1] != mlp.layer_dims[0] or mlp.layer_dims[-1] != mlp.layer_dims[0]:
        raise ShapeError(f"batch width {x.shape[1]} does not match network {mlp.layer_dims}")
    masks = _masks_for(mlp, masks)
    n = x.shape[0]

    acts = _forward_cache(mlp, x)
    resid = acts[-1] - x
    parts = {"regression": _check("regression", float((resid**2).sum() / n))}
    s, terms = _penalty_terms(mlp, masks)
    for name in ("diag_penalty", "sparsity_penalty", "enc_penalty", "dec_penalty"):
        parts[name] = _check(name, terms[name][0]) if name in terms else 0.0
    asym = None
    if pw.symmetry:
        asym = s - s.T
        parts["symmetry_penalty"] = _check("symmetry_penalty", float(np.sqrt((asym**2).sum())))
    else:
        parts["symmetry_penalty"] = 0.0
    total = _check("total", combine(parts, pw))
    breakdown = LossBreakdown(**parts, total=total)
    if not with_grad:
        return breakdown, None

    gw = [np.zeros_like(w) for w in mlp.weights]
    gb = [np.zeros_like(b) for b in mlp.biases]
    delta = 2.0 * resid / n
    for l in range(mlp.n_layers - 1, -1, -1):
        if mlp.relu[l]:
            delta = delta * (acts[l + 1] > 0)
        gw[l] = delta.T @ acts[l]
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ mlp.weights[l]

    coefs = {"diag_penalty": pw.lam, "sparsity_penalty": pw.gamma, "enc_penalty": pw.eta, "dec_penalty": pw.beta}
    for name, (value, (a, b), upstream) in terms.items():
        coef = coefs[name]
        if not coef:
            continue
        scale = coef * _scale(value, pw.log_scaling)[1]
        for k, g in enumerate(path_product_grads(mlp.weights, a, b, upstream)):
            gw[a + k] += scale * g
    if asym is not None:
        fro = parts["symmetry_penalty"]
        if fro > 0:
            a, b = masks.core_layers
            upstream = pw.symmetry * 2.0 * asym / fro
            for k, g in enumerate(path_product_grads(mlp.weights, a, b, upstream)):
                gw[a + k] += g
    return breakdown, (gw, gb)


def loss(mlp: MlpParams, batch, pw: PenaltyWeights, masks: PenaltyMasks | None = None) -> LossBreakdown:
    return loss_and_gradients(mlp, batch, pw, masks, with_grad=False)[0]


def gradients(mlp: MlpParams, batch, pw: PenaltyWeights, masks: PenaltyMasks | None = None):
    return loss_and_gradients(mlp, batch, pw, masks)[1]


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, mlp: MlpParams, **hyper) -> "AdamState":
        shapes = [*mlp.weights, *mlp.biases]
        return cls([np.zeros_like(a) for a in shapes], [np.zeros_like(a) for a in shapes], **hyper)


def adam_step(mlp: MlpParams, grads, state: AdamState) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update; inputs are left untouched."""
    gw, gb = grads
    params = [*mlp.weights, *mlp.biases]
    flat = [*gw, *gb]
    if len(flat) != len(params) or any(g.shape != p.shape for g, p in zip(flat, params)):
        raise ShapeError("gradient shapes do not match parameters")
    if len(state.first_moment) != len(params):
        raise ShapeError("optimizer state does not match parameters")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1**t, 1.0 - b2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, flat, state.first_moment, state.second_moment):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        new_p.append(p - state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon))
        new_m.append(m)
        new_v.append(v)
    n = mlp.n_layers
    out = MlpParams(list(mlp.layer_dims), new_p[:n], new_p[n:], mlp.seed, list(mlp.relu))
    new_state = AdamState(
        new_m, new_v, t, state.learning_rate, state.beta1, state.beta2, state.epsilon
    )
    return out, new_state


def model_to_dict(mlp: MlpParams, standardization: dict | None = None, **extra) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "layer_dims": list(mlp.layer_dims),
        "weights": [w.tolist() for w in mlp.weights],
        "biases": [b.tolist() for b in mlp.biases],
        "relu": list(mlp.relu),
        "seed": int(mlp.seed),
        "standardization": standardization,
    }
    doc.update(extra)
    return doc


def model_from_dict(doc: dict) -> MlpParams:
    return MlpParams(doc["layer_dims"], doc["weights"], doc["biases"], doc.get("seed", 0), doc.get("relu"))


def save_model(path: str | Path, mlp: MlpParams, standardization: dict | None = None, **extra) -> None:
    # json writes floats via repr, the shortest string that round-trips exactly
    Path(path).write_text(json.dumps(model_to_dict(mlp, standardization, **extra)) + "\n")


def load_model(path: str | Path) -> tuple[MlpParams, dict]:
    doc = json.loads(Path(path).read_text())
    return model_from_dict(doc), doc
