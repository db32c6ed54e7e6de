"""Input-to-output path mass of an MLP and the penalties built on it.

The path matrix of a chain of layers is the product of the elementwise
absolute weight matrices. Entry (o, i) of the raw product (layer
orientation, outputs by inputs) aggregates the weight magnitude of every
path from input unit i to output unit o; a zero entry means output o does
not depend on input i. Callers mostly see the transposed *path view*
(inputs by outputs), which is also the orientation of all masks.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import ShapeError

if TYPE_CHECKING:
    from .network import MlpParams

MASK_KINDS = ("target_graph", "complement", "diagonal", "encoder", "decoder")


@dataclass(frozen=True)
class GraphMask:
    matrix: np.ndarray
    kind: str = "target_graph"

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2:
            raise ShapeError(f"mask must be 2-D, got shape {m.shape}")
        if not np.all((m == 0) | (m == 1)):
            raise ValueError("mask entries must be 0 or 1")
        if self.kind not in MASK_KINDS:
            raise ValueError(f"unknown mask kind {self.kind!r}")
        object.__setattr__(self, "matrix", m.astype(float))

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def complement(self) -> "GraphMask":
        return GraphMask(1.0 - self.matrix, "complement")


@dataclass(frozen=True)
class PathMatrix:
    values: np.ndarray  # raw orientation: (D_out, D_in)
    provenance: str = ""

    @property
    def view(self) -> np.ndarray:
        """Path view, shape (D_in, D_out)."""
        return self.values.T


@dataclass(frozen=True)
class RecoveredGraph:
    scores: np.ndarray
    feature_names: list[str]
    edges: list[tuple[int, int, float]] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True)
class PenaltyMasks:
    """Which layers form the core block and which masks the penalties use.

    ``core_layers`` is a half-open range of layer indices whose path matrix
    is the feature-to-feature dependency map. Layers before it form the
    encoder, layers after it the decoder. ``self_mask`` selects
    self-dependency paths (identity or hypernode block diagonal).
    ``encoder``/``decoder`` are the allowed block patterns; path mass
    outside them is penalized.

    ``self_layers`` overrides the layer range the self-dependency penalty
    reads. With an encoder and decoder it should span the whole network:
    a feature can otherwise reach itself through a cross-group decoder
    path whose small weights are offset by large core weights.
    """

    core_layers: tuple[int, int]
    self_mask: GraphMask
    encoder: GraphMask | None = None
    decoder: GraphMask | None = None
    self_layers: tuple[int, int] | None = None

    @property
    def self_range(self) -> tuple[int, int]:
        return self.self_layers if self.self_layers is not None else self.core_layers

    @classmethod
    def unimodal(cls, n_features: int, n_layers: int) -> "PenaltyMasks":
        return cls((0, n_layers), diag_mask(n_features))

    @property
    def multimodal(self) -> bool:
        return self.encoder is not None or self.decoder is not None


def fingerprint(mlp: "MlpParams") -> str:
    h = hashlib.sha1()
    for w in mlp.weights:
        h.update(np.ascontiguousarray(w, dtype=float).tobytes())
    return h.hexdigest()[:12]


def path_product(weights: Sequence[np.ndarray], start: int = 0, stop: int | None = None) -> np.ndarray:
    """|W_{stop-1}| @ ... @ |W_start| in raw orientation."""
    stop = len(weights) if stop is None else stop
    if not 0 <= start < stop <= len(weights):
        raise ShapeError(f"bad layer range [{start}, {stop}) for {len(weights)} layers")
    out = np.abs(weights[start])
    for w in weights[start + 1 : stop]:
        out = np.abs(w) @ out
    return out


def path_product_grads(
    weights: Sequence[np.ndarray], start: int, stop: int, upstream: np.ndarray
) -> list[np.ndarray]:
    """Gradients of sum(upstream * path_product(weights, start, stop)).

    ``upstream`` is in raw orientation. Returns one array per layer in
    [start, stop). The derivative of |w| is taken as sign(w), so exact zeros
    receive zero gradient.
    """
    absw = [np.abs(w) for w in weights[start:stop]]
    n = len(absw)
    # right[k] = |W_{k-1}| ... |W_0| (relative indices), identity for k = 0
    right = [np.eye(absw[0].shape[1])]
    for k in range(n - 1):
        right.append(absw[k] @ right[-1])
    grads: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    left_t = upstream  # (|W_{n-1}| ... |W_{k+1}|)^T @ upstream, built from the top
    for k in range(n - 1, -1, -1):
        d_abs = left_t @ right[k].T
        grads[k] = d_abs * np.sign(weights[start + k])
        if k > 0:
            left_t = absw[k].T @ left_t
    return grads


def path_matrix(mlp: "MlpParams", start: int = 0, stop: int | None = None) -> PathMatrix:
    return PathMatrix(path_product(mlp.weights, start, stop), fingerprint(mlp))


def symmetrize(p: PathMatrix | np.ndarray) -> np.ndarray:
    """Average the path view with its transpose; exactly symmetric output."""
    view = p.view if isinstance(p, PathMatrix) else np.asarray(p, dtype=float)
    if view.ndim != 2 or view.shape[0] != view.shape[1]:
        raise ShapeError(f"symmetrize needs a square matrix, got {view.shape}")
    s = (view + view.T) / 2.0
    # a + b and b + a round identically, so s is already symmetric; keep it explicit
    return np.triu(s) + np.triu(s, 1).T


def gcpn(p: PathMatrix | np.ndarray, target: GraphMask) -> float:
    """Graph-constrained path norm: L1 mass of paths outside ``target``."""
    view = p.view if isinstance(p, PathMatrix) else np.asarray(p, dtype=float)
    if view.shape != target.shape:
        raise ShapeError(f"path view {view.shape} does not match mask {target.shape}")
    return float(np.abs(view * target.complement().matrix).sum())


def diag_mask(d: int) -> GraphMask:
    if d < 1:
        raise ValueError("mask size must be >= 1")
    return GraphMask(np.eye(d), "diagonal")


def group_index(sizes: Sequence[int]) -> np.ndarray:
    sizes = list(sizes)
    if not sizes or any(int(s) < 1 for s in sizes):
        raise ValueError(f"group sizes must be a nonempty list of positive ints, got {sizes}")
    return np.repeat(np.arange(len(sizes)), sizes)


def block_mask(sizes_in: Sequence[int], sizes_out: Sequence[int], kind: str = "diagonal") -> GraphMask:
    """Ones where the input unit's group equals the output unit's group."""
    gi, go = group_index(sizes_in), group_index(sizes_out)
    return GraphMask((gi[:, None] == go[None, :]).astype(float), kind)


def block_diag_mask(group_sizes_in: Sequence[int], group_sizes_out: Sequence[int]) -> GraphMask:
    return block_mask(group_sizes_in, group_sizes_out, "diagonal")


def normalized_graph(sym_scores: np.ndarray, names: Sequence[str]) -> RecoveredGraph:
    """Zero the diagonal, divide by the max entry and list edges by score."""
    s = np.array(sym_scores, dtype=float)
    np.fill_diagonal(s, 0.0)
    top = s.max() if s.size else 0.0
    if top > 0:
        s = s / top
    d = s.shape[0]
    iu, ju = np.triu_indices(d, 1)
    edges = [(int(i), int(j), float(s[i, j])) for i, j in zip(iu, ju) if s[i, j] > 0]
    edges.sort(key=lambda e: (-e[2], e[0], e[1]))
    return RecoveredGraph(s, list(names), edges)


def extract_graph(
    mlp: "MlpParams", names: Sequence[str] | None = None, core_layers: tuple[int, int] | None = None
) -> RecoveredGraph:
    start, stop = core_layers if core_layers is not None else (0, len(mlp.weights))
    p = path_matrix(mlp, start, stop)
    if p.values.shape[0] != p.values.shape[1]:
        raise ShapeError(f"core path matrix must be square, got {p.values.shape}")
    d = p.values.shape[0]
    names = list(names) if names is not None else [f"x{i}" for i in range(d)]
    return normalized_graph(symmetrize(p), names)


def self_dependency_ratio(mlp: "MlpParams", masks: PenaltyMasks | None = None) -> float:
    """||sym(S) * S_diag||_1 / ||sym(S)||_1 over the self-dependency layer range.

    Returns 0 for a network without paths.
    """
    if masks is None:
        masks = PenaltyMasks.unimodal(mlp.layer_dims[0], len(mlp.weights))
    s = symmetrize(path_matrix(mlp, *masks.self_range))
    total = s.sum()
    return float((s * masks.self_mask.matrix).sum() / total) if total > 0 else 0.0


def cross_group_ratio(paths: PathMatrix, allowed: GraphMask) -> float:
    """Share of path mass lying outside an allowed block pattern."""
    total = paths.view.sum()
    return gcpn(paths, allowed) / total if total > 0 else 0.0
