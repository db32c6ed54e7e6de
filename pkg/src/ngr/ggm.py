"""Synthetic Gaussian graphical models with known conditional-independence graphs."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset, default_names
from .errors import InvalidSpecError
from .pathnorm import GraphMask

PD_MARGIN = 0.1


@dataclass(frozen=True)
class GgmSpec:
    precision: np.ndarray
    structure: np.ndarray
    signs: np.ndarray
    seed: int = 0

    @property
    def n_features(self) -> int:
        return self.precision.shape[0]

    @classmethod
    def from_precision(cls, precision, seed: int = 0) -> "GgmSpec":
        theta = np.asarray(precision, dtype=float)
        if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
            raise InvalidSpecError(f"precision must be square, got {theta.shape}")
        if not np.allclose(theta, theta.T, rtol=0, atol=1e-12):
            raise InvalidSpecError("precision matrix is not symmetric")
        try:
            np.linalg.cholesky(theta)
        except np.linalg.LinAlgError:
            raise InvalidSpecError("precision matrix is not positive definite") from None
        off = ~np.eye(theta.shape[0], dtype=bool)
        structure = ((theta != 0) & off).astype(int)
        signs = (np.sign(-theta) * structure).astype(int)
        return cls(theta, structure, signs, seed)

    def to_dict(self) -> dict:
        return {"format_version": 1, "precision": self.precision.tolist(), "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, doc: dict) -> "GgmSpec":
        return cls.from_precision(doc["precision"], doc.get("seed", 0))


def _fill_precision(d: int, pairs: list[tuple[int, int]], rng: np.random.Generator) -> np.ndarray:
    theta = np.zeros((d, d))
    if pairs:
        mags = rng.uniform(0.5, 1.0, size=len(pairs))
        signs = rng.choice([-1.0, 1.0], size=len(pairs))
        for (i, j), m, s in zip(pairs, mags, signs):
            theta[i, j] = theta[j, i] = m * s
    # strict diagonal dominance with a positive diagonal => positive definite
    np.fill_diagonal(theta, np.abs(theta).sum(axis=1) + PD_MARGIN)
    return theta


def chain_precision(d: int, seed: int = 0) -> GgmSpec:
    """Path graph 0-1-...-(d-1) with U(0.5, 1) magnitudes and random signs."""
    if d < 2:
        raise ValueError(f"chain needs at least 2 nodes, got {d}")
    rng = np.random.default_rng(seed)
    return GgmSpec.from_precision(_fill_precision(d, [(i, i + 1) for i in range(d - 1)], rng), seed)


def random_sparse_precision(d: int, edge_prob: float, seed: int = 0) -> GgmSpec:
    """Erdos-Renyi support with the same entry recipe as :func:`chain_precision`."""
    if d < 2:
        raise ValueError(f"need at least 2 nodes, got {d}")
    if not 0.0 < edge_prob < 1.0:
        raise ValueError(f"edge_prob must lie in (0, 1), got {edge_prob}")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(d, 1)
    keep = rng.random(len(iu)) < edge_prob
    pairs = [(int(i), int(j)) for i, j, k in zip(iu, ju, keep) if k]
    return GgmSpec.from_precision(_fill_precision(d, pairs, rng), seed)


def covariance(ggm: GgmSpec) -> np.ndarray:
    cov = np.linalg.solve(ggm.precision, np.eye(ggm.n_features))
    return (cov + cov.T) / 2.0


def sample(ggm: GgmSpec, m: int, seed: int = 0) -> Dataset:
    """Draw ``m`` rows from N(0, precision^-1); values are not standardized."""
    if m < 1:
        raise ValueError(f"sample count must be >= 1, got {m}")
    try:
        chol = np.linalg.cholesky(covariance(ggm))
    except np.linalg.LinAlgError:
        raise InvalidSpecError("covariance is not positive definite") from None
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((m, ggm.n_features))
    return Dataset(z @ chol.T, default_names(ggm.n_features))


def ci_graph(ggm: GgmSpec) -> tuple[GraphMask, np.ndarray]:
    """Ground-truth CI graph and the signs of the partial correlations."""
    return GraphMask(ggm.structure, "target_graph"), ggm.signs.copy()


def truth_to_dict(ggm: GgmSpec, names: list[str] | None = None) -> dict:
    return {
        "format_version": 1,
        "feature_names": names or default_names(ggm.n_features),
        "adjacency": ggm.structure.tolist(),
        "signs": ggm.signs.tolist(),
    }


def save_ggm(path: str | Path, ggm: GgmSpec) -> None:
    Path(path).write_text(json.dumps(ggm.to_dict()) + "\n")


def load_ggm(path: str | Path) -> GgmSpec:
    return GgmSpec.from_dict(json.loads(Path(path).read_text()))
