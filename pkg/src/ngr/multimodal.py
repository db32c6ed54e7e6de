"""Mixed numeric/categorical inputs as hypernodes.

Each feature becomes a group of input units (one for a numeric column, one
per category for a one-hot categorical column, or a declared width for a
pre-computed embedding). A fully connected encoder maps the inputs to one
embedding group per feature, the core network relates embedding groups to
each other, and a decoder maps back. Path mass that crosses feature groups
inside the encoder or decoder is penalized, so the only route between two
features runs through the core, whose hypernode-collapsed path matrix is
the feature graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Dataset
from .errors import DataError
from .network import MlpParams, init_mlp
from .pathnorm import (
    GraphMask,
    PenaltyMasks,
    RecoveredGraph,
    block_mask,
    group_index,
    normalized_graph,
    path_product,
    symmetrize,
)
from .trainer import TrainConfig, TrainResult, train

KINDS = ("numeric", "categorical", "embedding")
MAX_CATEGORICAL_EMBED = 4


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str = "numeric"
    categories: list[str] = field(default_factory=list)
    embed_width: int | None = None
    source_columns: list[str] = field(default_factory=list)  # embedding kind only

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if len(self.categories) < 2:
                raise DataError(f"categorical column {self.name!r} needs at least 2 categories")
            if len(set(self.categories)) != len(self.categories):
                raise DataError(f"categorical column {self.name!r} has duplicate categories")
        if self.kind == "embedding" and not self.source_columns:
            raise DataError(f"embedding column {self.name!r} needs source_columns")
        if self.embed_width is None:
            object.__setattr__(self, "embed_width", self._default_embed())
        if self.embed_width < 1:
            raise ValueError(f"column {self.name!r}: embed_width must be >= 1")

    @property
    def input_width(self) -> int:
        if self.kind == "categorical":
            return len(self.categories)
        if self.kind == "embedding":
            return len(self.source_columns)
        return 1

    def _default_embed(self) -> int:
        if self.kind == "categorical":
            return min(len(self.categories), MAX_CATEGORICAL_EMBED)
        if self.kind == "embedding":
            return min(len(self.source_columns), MAX_CATEGORICAL_EMBED)
        return 1

    def unit_names(self) -> list[str]:
        if self.kind == "categorical":
            return [f"{self.name}={c}" for c in self.categories]
        if self.kind == "embedding":
            return list(self.source_columns)
        return [self.name]


@dataclass(frozen=True)
class FeatureSchema:
    columns: list[ColumnSpec]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def input_widths(self) -> list[int]:
        return [c.input_width for c in self.columns]

    @property
    def embed_widths(self) -> list[int]:
        return [c.embed_width for c in self.columns]

    @property
    def total_input(self) -> int:
        return sum(self.input_widths)

    @property
    def total_embed(self) -> int:
        return sum(self.embed_widths)

    def to_dict(self) -> dict:
        cols = []
        for c in self.columns:
            d = {"name": c.name, "kind": c.kind, "embed_width": c.embed_width}
            if c.kind == "categorical":
                d["categories"] = list(c.categories)
            if c.kind == "embedding":
                d["source_columns"] = list(c.source_columns)
            cols.append(d)
        return {"format_version": 1, "columns": cols}

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSchema":
        return cls([
            ColumnSpec(
                c["name"], c.get("kind", "numeric"), list(c.get("categories", [])),
                c.get("embed_width"), list(c.get("source_columns", [])),
            )
            for c in doc["columns"]
        ])


def save_schema(path: str | Path, schema: FeatureSchema) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n")


def load_schema(path: str | Path) -> FeatureSchema:
    try:
        return FeatureSchema.from_dict(json.loads(Path(path).read_text()))
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read schema {path}: {exc}") from exc


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def build_schema(header: Sequence[str], rows: Sequence[Sequence[str]]) -> FeatureSchema:
    """Infer column kinds: parseable as float means numeric, else categorical."""
    if not header or not rows:
        raise DataError("cannot build a schema from an empty table")
    columns = []
    for c, name in enumerate(header):
        cells = [row[c] for row in rows]
        if any(cell == "" for cell in cells):
            raise DataError(f"column {name!r} has empty cells")
        if all(_is_float(cell) for cell in cells):
            columns.append(ColumnSpec(name, "numeric"))
        else:
            columns.append(ColumnSpec(name, "categorical", sorted(set(cells))))
    return FeatureSchema(columns)


def encode(header: Sequence[str], rows: Sequence[Sequence[str]], schema: FeatureSchema) -> Dataset:
    """One-hot categorical columns and z-score numeric ones.

    The recorded standardization is the identity for one-hot units.
    """
    index = {h: k for k, h in enumerate(header)}
    blocks, means, stds, names = [], [], [], []
    for col in schema.columns:
        sources = col.source_columns if col.kind == "embedding" else [col.name]
        missing = [s for s in sources if s not in index]
        if missing:
            raise DataError(f"table has no column(s) {missing} required by schema")
        if col.kind == "categorical":
            lookup = {cat: k for k, cat in enumerate(col.categories)}
            block = np.zeros((len(rows), len(col.categories)))
            ci = index[col.name]
            for r, row in enumerate(rows):
                try:
                    block[r, lookup[row[ci]]] = 1.0
                except KeyError:
                    raise DataError(
                        f"row {r + 1}, column {col.name!r}: unseen category {row[ci]!r}"
                    ) from None
            means.append(np.zeros(block.shape[1]))
            stds.append(np.ones(block.shape[1]))
        else:
            block = np.empty((len(rows), len(sources)))
            for k, src in enumerate(sources):
                ci = index[src]
                for r, row in enumerate(rows):
                    try:
                        block[r, k] = float(row[ci])
                    except ValueError:
                        raise DataError(
                            f"row {r + 1}, column {src!r}: non-numeric value {row[ci]!r}"
                        ) from None
            mu, sd = block.mean(axis=0), block.std(axis=0)
            sd = np.where(sd == 0.0, 1.0, sd)
            block = (block - mu) / sd
            means.append(mu)
            stds.append(sd)
        blocks.append(block)
        names.extend(col.unit_names())
    return Dataset(np.hstack(blocks), names, np.concatenate(means), np.concatenate(stds))


def decode_categorical(values, schema: FeatureSchema) -> dict[str, list[str]]:
    """Map one-hot (or reconstructed) blocks back to categories by argmax."""
    x = np.atleast_2d(np.asarray(values, dtype=float))
    out, offset = {}, 0
    for col in schema.columns:
        w = col.input_width
        if col.kind == "categorical":
            picks = x[:, offset : offset + w].argmax(axis=1)
            out[col.name] = [col.categories[k] for k in picks]
        offset += w
    return out


@dataclass(frozen=True)
class MultimodalMasks:
    """Allowed encoder/decoder blocks and the hypernode self-dependency mask.

    ``encoder`` is (total_input x total_embed) and ``decoder`` is
    (total_embed x total_input), both in path view; ``diag_block`` is the
    (total_embed x total_embed) block diagonal over embedding groups and
    ``diag_input`` the same pattern over input groups, which is what the
    end-to-end self-dependency penalty uses.
    """

    encoder: GraphMask
    decoder: GraphMask
    diag_block: GraphMask
    diag_input: GraphMask

    def complements(self) -> tuple[GraphMask, GraphMask]:
        return self.encoder.complement(), self.decoder.complement()


def hypernode_masks(schema: FeatureSchema) -> MultimodalMasks:
    i_w, e_w = schema.input_widths, schema.embed_widths
    return MultimodalMasks(
        block_mask(i_w, e_w, "encoder"),
        block_mask(e_w, i_w, "decoder"),
        block_mask(e_w, e_w, "diagonal"),
        block_mask(i_w, i_w, "diagonal"),
    )


def build_network(schema: FeatureSchema, cfg: TrainConfig, encoder_hidden=(), decoder_hidden=()):
    """Encoder -> core -> decoder MLP plus the penalty masks that go with it.

    The encoder and core outputs are affine (no ReLU) so numeric embeddings
    keep their sign; ReLU follows every hidden layer.
    """
    n_in, n_emb = schema.total_input, schema.total_embed
    core_hidden = list(cfg.hidden_dims) if cfg.hidden_dims is not None else [2 * n_emb]
    enc_dims = [n_in, *encoder_hidden, n_emb]
    core_dims = [n_emb, *core_hidden, n_emb]
    dec_dims = [n_emb, *decoder_hidden, n_in]
    dims = enc_dims + core_dims[1:] + dec_dims[1:]
    relu = (
        [True] * len(encoder_hidden) + [False]
        + [True] * len(core_hidden) + [False]
        + [True] * len(decoder_hidden) + [False]
    )
    params = init_mlp(dims, cfg.seed, relu)
    start = len(enc_dims) - 1
    stop = start + len(core_dims) - 1
    mm = hypernode_masks(schema)
    masks = PenaltyMasks(
        (start, stop), mm.diag_input, mm.encoder, mm.decoder, self_layers=(0, len(dims) - 1)
    )
    return params, masks


def collapse_to_feature_graph(
    core_scores, schema: FeatureSchema, aggregate: str = "max"
) -> RecoveredGraph:
    """Reduce a hypernode-level score matrix to one score per feature pair."""
    s = np.asarray(core_scores, dtype=float)
    groups = group_index(schema.embed_widths)
    if s.shape != (len(groups), len(groups)):
        raise ValueError(f"core scores {s.shape} do not match embedding width {len(groups)}")
    reduce = {"max": np.max, "mean": np.mean}[aggregate]
    d = len(schema.columns)
    feat = np.zeros((d, d))
    for a in range(d):
        for b in range(d):
            feat[a, b] = reduce(s[np.ix_(groups == a, groups == b)])
    return normalized_graph(symmetrize(feat), schema.names)


def fit(
    data: Dataset, schema: FeatureSchema, cfg: TrainConfig, encoder_hidden=(), decoder_hidden=()
) -> TrainResult:
    """Train the hypernode network on an encoded dataset."""
    if data.n_features != schema.total_input:
        raise DataError(f"encoded width {data.n_features} != schema width {schema.total_input}")
    params, masks = build_network(schema, cfg, encoder_hidden, decoder_hidden)

    def graph_fn(p: MlpParams) -> RecoveredGraph:
        core = path_product(p.weights, *masks.core_layers)
        return collapse_to_feature_graph(core.T, schema)

    return train(data, cfg, masks=masks, params=params, graph_fn=graph_fn)
