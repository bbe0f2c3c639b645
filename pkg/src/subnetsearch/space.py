"""Discrete elastic-parameter search spaces and genotype handling.

A search space is a fixed-length integer genome. Each position belongs to one
elastic parameter (block depth, per-layer choice, or global knob). Block rules
make per-layer genes inactive when the block's depth gene is below their layer
slot; canonicalization resets inactive genes to the parameter's first allowed
value so architecturally identical configurations compare equal.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidGenotype, NonCanonicalInput
from .util import genes_bytes, stable_hash64

ROLES = ("block_depth", "per_layer", "global")
ENCODINGS = ("one_hot", "ordinal_normalized")


@dataclass(frozen=True)
class ElasticParamSpec:
    """One elastic parameter contributing `position_count` genome positions."""

    name: str
    position_count: int
    allowed_values: tuple[int, ...]
    role: str

    def __post_init__(self):
        object.__setattr__(self, "allowed_values", tuple(self.allowed_values))
        if self.position_count < 1:
            raise ConfigError(f"param {self.name}: position_count must be >= 1")
        if not self.allowed_values:
            raise ConfigError(f"param {self.name}: allowed_values must be non-empty")
        if any(b <= a for a, b in zip(self.allowed_values, self.allowed_values[1:])):
            raise ConfigError(
                f"param {self.name}: allowed_values must be strictly ascending"
            )
        if self.role not in ROLES:
            raise ConfigError(f"param {self.name}: unknown role {self.role!r}")


@dataclass(frozen=True)
class BlockRule:
    """Activity rule: a governed gene is active iff its layer slot < depth value.

    `governed_gene_indices` is layer-major: all per-layer parameters of layer 0
    first, then layer 1, and so on.
    """

    depth_gene_index: int
    governed_gene_indices: tuple[int, ...]
    max_layers: int

    def __post_init__(self):
        object.__setattr__(
            self, "governed_gene_indices", tuple(self.governed_gene_indices)
        )
        if self.max_layers < 1:
            raise ConfigError("block: max_layers must be >= 1")
        if len(self.governed_gene_indices) % self.max_layers != 0:
            raise ConfigError(
                "block: governed gene count must be a multiple of max_layers"
            )

    @property
    def params_per_layer(self) -> int:
        return len(self.governed_gene_indices) // self.max_layers


@dataclass(frozen=True)
class Genotype:
    """Fixed-length integer vector encoding one sub-network configuration."""

    genes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "genes", tuple(int(g) for g in self.genes))

    def __len__(self) -> int:
        return len(self.genes)


def genotype_id(g: Genotype) -> str:
    """Short stable hex id used to join CSV exports with evaluation logs."""
    return format(stable_hash64(genes_bytes(g.genes)), "016x")


@dataclass(frozen=True)
class SearchSpace:
    """Ordered parameters plus block activity rules; immutable after build."""

    name: str
    params: tuple[ElasticParamSpec, ...]
    blocks: tuple[BlockRule, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        self._validate()

    # -- derived layout ----------------------------------------------------

    @cached_property
    def genome_length(self) -> int:
        return sum(p.position_count for p in self.params)

    @cached_property
    def param_index_of_position(self) -> tuple[int, ...]:
        out = []
        for i, p in enumerate(self.params):
            out.extend([i] * p.position_count)
        return tuple(out)

    @cached_property
    def allowed(self) -> tuple[tuple[int, ...], ...]:
        """Allowed values per genome position."""
        return tuple(
            self.params[i].allowed_values for i in self.param_index_of_position
        )

    @cached_property
    def _rank_of_value(self) -> tuple[dict[int, int], ...]:
        return tuple({v: r for r, v in enumerate(vals)} for vals in self.allowed)

    @cached_property
    def _governing_block(self) -> tuple[int | None, ...]:
        """Block index governing each position, None for depth/global genes."""
        gov: list[int | None] = [None] * self.genome_length
        for bi, b in enumerate(self.blocks):
            for pos in b.governed_gene_indices:
                gov[pos] = bi
        return tuple(gov)

    def param_at(self, position: int) -> ElasticParamSpec:
        return self.params[self.param_index_of_position[position]]

    def value_rank(self, position: int, value: int) -> int:
        try:
            return self._rank_of_value[position][value]
        except KeyError:
            raise InvalidGenotype(
                f"value {value} not allowed at position {position} "
                f"(param {self.param_at(position).name})"
            ) from None

    # -- validation ----------------------------------------------------------

    def _validate(self) -> None:
        n = self.genome_length
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate parameter names")
        governed_by: dict[int, int] = {}
        for bi, b in enumerate(self.blocks):
            if not (0 <= b.depth_gene_index < n):
                raise ConfigError(f"block {bi}: depth gene index out of range")
            depth_param = self.param_at(b.depth_gene_index)
            if depth_param.role != "block_depth":
                raise ConfigError(
                    f"block {bi}: depth gene must have role block_depth, "
                    f"got {depth_param.role}"
                )
            if max(depth_param.allowed_values) > b.max_layers:
                raise ConfigError(f"block {bi}: depth value exceeds max_layers")
            if min(depth_param.allowed_values) < 0:
                raise ConfigError(f"block {bi}: negative depth value")
            for pos in b.governed_gene_indices:
                if not (0 <= pos < n):
                    raise ConfigError(f"block {bi}: governed index out of range")
                if self.param_at(pos).role != "per_layer":
                    raise ConfigError(
                        f"block {bi}: governed gene {pos} is not per_layer"
                    )
                if pos in governed_by:
                    raise ConfigError(f"gene {pos} governed by more than one block")
                governed_by[pos] = bi
        for pos in range(n):
            if self.param_at(pos).role == "per_layer" and pos not in governed_by:
                raise ConfigError(f"per_layer gene {pos} is governed by no block")

    # -- genotype helpers ----------------------------------------------------

    def validate_genes(self, g: Genotype) -> None:
        if len(g.genes) != self.genome_length:
            raise InvalidGenotype(
                f"genotype length {len(g.genes)} != genome length {self.genome_length}"
            )
        for pos, value in enumerate(g.genes):
            self.value_rank(pos, value)

    def active_mask(self, g: Genotype) -> list[bool]:
        """Per-position activity; depth and global genes are always active."""
        mask = [True] * self.genome_length
        for b in self.blocks:
            depth = g.genes[b.depth_gene_index]
            ppl = b.params_per_layer
            for slot, pos in enumerate(b.governed_gene_indices):
                if slot // ppl >= depth:
                    mask[pos] = False
        return mask


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def canonicalize(g: Genotype, s: SearchSpace) -> Genotype:
    """Reset every inactive gene to its parameter's first allowed value."""
    s.validate_genes(g)
    genes = list(g.genes)
    changed = False
    for b in s.blocks:
        depth = genes[b.depth_gene_index]
        ppl = b.params_per_layer
        for slot, pos in enumerate(b.governed_gene_indices):
            if slot // ppl >= depth:
                first = s.allowed[pos][0]
                if genes[pos] != first:
                    genes[pos] = first
                    changed = True
    return Genotype(tuple(genes)) if changed else g


def is_canonical(g: Genotype, s: SearchSpace) -> bool:
    return canonicalize(g, s).genes == g.genes


def repair_genotype(g: Genotype, s: SearchSpace) -> Genotype:
    """Snap out-of-set genes to the nearest allowed value, then canonicalize.

    Used when transferring genotypes into a space they were not sampled from
    (warm starts across constrained spaces). Ties go to the smaller value.
    """
    if len(g.genes) != s.genome_length:
        raise InvalidGenotype(
            f"cannot repair genotype of length {len(g.genes)} "
            f"for genome length {s.genome_length}"
        )
    genes = []
    for pos, value in enumerate(g.genes):
        vals = s.allowed[pos]
        if value in s._rank_of_value[pos]:
            genes.append(value)
        else:
            genes.append(min(vals, key=lambda v: (abs(v - value), v)))
    return canonicalize(Genotype(tuple(genes)), s)


def cardinality(s: SearchSpace) -> int:
    """Number of distinct canonical genotypes (arbitrary precision)."""
    total = 1
    consumed: set[int] = set()
    for b in s.blocks:
        ppl = b.params_per_layer
        layer_combos = []
        for layer in range(b.max_layers):
            slots = b.governed_gene_indices[layer * ppl : (layer + 1) * ppl]
            layer_combos.append(math.prod(len(s.allowed[pos]) for pos in slots))
        depth_values = s.allowed[b.depth_gene_index]
        total *= sum(math.prod(layer_combos[:d]) for d in depth_values)
        consumed.add(b.depth_gene_index)
        consumed.update(b.governed_gene_indices)
    for pos in range(s.genome_length):
        if pos not in consumed:
            total *= len(s.allowed[pos])
    return total


def sample_uniform(s: SearchSpace, n: int, seed: int) -> list[Genotype]:
    """Draw n canonical genotypes, each gene uniform over its allowed values."""
    if n < 1:
        raise ConfigError("sample_uniform: n must be >= 1")
    rng = np.random.default_rng(seed)
    counts = np.array([len(vals) for vals in s.allowed])
    ranks = rng.integers(0, counts, size=(n, s.genome_length))
    out = []
    for row in ranks:
        genes = tuple(s.allowed[pos][r] for pos, r in enumerate(row))
        out.append(canonicalize(Genotype(genes), s))
    return out


def enumerate_genotypes(s: SearchSpace):
    """Yield every canonical genotype; intended for toy spaces only."""
    base = [vals[0] for vals in s.allowed]
    block_positions: set[int] = set()
    per_block: list[list[tuple[tuple[int, ...], tuple[int, ...]]]] = []
    for b in s.blocks:
        block_positions.add(b.depth_gene_index)
        block_positions.update(b.governed_gene_indices)
        ppl = b.params_per_layer
        assignments = []
        for depth in s.allowed[b.depth_gene_index]:
            active = b.governed_gene_indices[: depth * ppl]
            for combo in itertools.product(*(s.allowed[pos] for pos in active)):
                positions = (b.depth_gene_index,) + active
                values = (depth,) + combo
                assignments.append((positions, values))
        per_block.append(assignments)
    free_positions = [
        pos for pos in range(s.genome_length) if pos not in block_positions
    ]
    free_choices = itertools.product(*(s.allowed[pos] for pos in free_positions))
    for free_values in free_choices:
        for blocks_choice in itertools.product(*per_block):
            genes = list(base)
            for pos, val in zip(free_positions, free_values):
                genes[pos] = val
            for positions, values in blocks_choice:
                for pos, val in zip(positions, values):
                    genes[pos] = val
            yield Genotype(tuple(genes))


# ---------------------------------------------------------------------------
# Feature encoding
# ---------------------------------------------------------------------------


def feature_dim(s: SearchSpace, scheme: str) -> int:
    if scheme == "one_hot":
        return sum(len(vals) for vals in s.allowed)
    if scheme == "ordinal_normalized":
        return s.genome_length
    raise ConfigError(f"unknown encoding scheme {scheme!r}")


def encode_features(g: Genotype, s: SearchSpace, scheme: str) -> np.ndarray:
    """Encode one canonical genotype as a real feature vector."""
    if not is_canonical(g, s):
        raise NonCanonicalInput("encode_features requires a canonical genotype")
    return _encode_row(g, s, scheme)


def _encode_row(g: Genotype, s: SearchSpace, scheme: str) -> np.ndarray:
    if scheme == "one_hot":
        vec = np.zeros(feature_dim(s, scheme))
        offset = 0
        for pos, value in enumerate(g.genes):
            vec[offset + s.value_rank(pos, value)] = 1.0
            offset += len(s.allowed[pos])
        return vec
    if scheme == "ordinal_normalized":
        vec = np.empty(s.genome_length)
        for pos, value in enumerate(g.genes):
            k = len(s.allowed[pos])
            vec[pos] = 0.0 if k == 1 else s.value_rank(pos, value) / (k - 1)
        return vec
    raise ConfigError(f"unknown encoding scheme {scheme!r}")


def encode_matrix(genotypes, s: SearchSpace, scheme: str) -> np.ndarray:
    """Stack feature rows for many canonical genotypes."""
    rows = [encode_features(g, s, scheme) for g in genotypes]
    if not rows:
        return np.zeros((0, feature_dim(s, scheme)))
    return np.vstack(rows)


def decode_one_hot(vec: np.ndarray, s: SearchSpace) -> Genotype:
    """Invert one_hot encoding by taking the argmax of each position's block."""
    genes = []
    offset = 0
    for pos in range(s.genome_length):
        vals = s.allowed[pos]
        block = vec[offset : offset + len(vals)]
        genes.append(vals[int(np.argmax(block))])
        offset += len(vals)
    return Genotype(tuple(genes))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def space_to_dict(s: SearchSpace) -> dict:
    return {
        "name": s.name,
        "params": [
            {
                "name": p.name,
                "role": p.role,
                "allowed_values": list(p.allowed_values),
                "position_count": p.position_count,
            }
            for p in s.params
        ],
        "blocks": [
            {
                "depth_gene": b.depth_gene_index,
                "governed_genes": list(b.governed_gene_indices),
                "max_layers": b.max_layers,
            }
            for b in s.blocks
        ],
    }


def space_from_dict(d: dict) -> SearchSpace:
    try:
        params = tuple(
            ElasticParamSpec(
                name=p["name"],
                position_count=int(p["position_count"]),
                allowed_values=tuple(int(v) for v in p["allowed_values"]),
                role=p["role"],
            )
            for p in d["params"]
        )
        blocks = tuple(
            BlockRule(
                depth_gene_index=int(b["depth_gene"]),
                governed_gene_indices=tuple(int(i) for i in b["governed_genes"]),
                max_layers=int(b["max_layers"]),
            )
            for b in d.get("blocks", [])
        )
        return SearchSpace(name=d["name"], params=params, blocks=blocks)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed search-space document: {exc}") from exc


def load_space(path: str | Path) -> SearchSpace:
    with open(path, encoding="utf-8") as fh:
        return space_from_dict(json.load(fh))


def save_space(s: SearchSpace, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(space_to_dict(s), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Built-in presets
# ---------------------------------------------------------------------------


def build_space(name, blocks, global_params=()) -> SearchSpace:
    """Assemble a space from block descriptors.

    blocks: sequence of (block_name, depth_values, max_layers,
            [(param_name, allowed_values), ...]); per-layer genes are stored
    param-major but governed lists are layer-major, so the activity rule is a
    single integer division.
    """
    params: list[ElasticParamSpec] = []
    rules: list[BlockRule] = []
    pos = 0
    for bname, depths, max_layers, per_layer in blocks:
        params.append(
            ElasticParamSpec(f"{bname}_depth", 1, tuple(depths), "block_depth")
        )
        depth_idx = pos
        pos += 1
        starts = []
        for pname, values in per_layer:
            params.append(
                ElasticParamSpec(f"{bname}_{pname}", max_layers, tuple(values), "per_layer")
            )
            starts.append(pos)
            pos += max_layers
        governed = tuple(
            starts[p] + layer
            for layer in range(max_layers)
            for p in range(len(per_layer))
        )
        rules.append(BlockRule(depth_idx, governed, max_layers))
    for gname, values in global_params:
        params.append(ElasticParamSpec(gname, 1, tuple(values), "global"))
        pos += 1
    return SearchSpace(name=name, params=tuple(params), blocks=tuple(rules))


def mobilenetv3_like() -> SearchSpace:
    """Five blocks, depths {2,3,4}, per-layer kernel {3,5,7} and expansion
    {3,4,6}; ~2.18e19 canonical genotypes. Approximates the usual elastic
    MobileNetV3 layout; exact value sets are a shipping default, not gospel.
    """
    blocks = [
        (f"block{i}", (2, 3, 4), 4, [("kernel", (3, 5, 7)), ("expand", (3, 4, 6))])
        for i in range(5)
    ]
    return build_space("mobilenetv3-like", blocks)


def resnet50_like() -> SearchSpace:
    """Five stages with skippable layers (depth 0 allowed), expansion-ratio
    ranks standing in for {0.2, 0.25, 0.35}, one global width-multiplier rank.
    """
    blocks = [
        (f"stage{i}", (0, 1, 2), 2, [("expand_rank", (0, 1, 2))]) for i in range(5)
    ]
    return build_space("resnet50-like", blocks, [("width_mult_rank", (0, 1, 2))])


def transformer_like() -> SearchSpace:
    """Encoder/decoder with elastic layer counts, per-layer FFN ratio and head
    count, a decoder attention-span gene, and a global embedding-width rank.
    """
    blocks = [
        ("encoder", (4, 5, 6), 6, [("ffn_ratio", (2, 3, 4)), ("heads", (2, 4))]),
        (
            "decoder",
            (1, 2, 3, 4, 5, 6),
            6,
            [("ffn_ratio", (2, 3, 4)), ("heads", (2, 4)), ("attn_span", (1, 2, 3))],
        ),
    ]
    return build_space("transformer-like", blocks, [("embed_rank", (0, 1))])


PRESETS = {
    "mobilenetv3-like": mobilenetv3_like,
    "resnet50-like": resnet50_like,
    "transformer-like": transformer_like,
}


def get_preset(name: str) -> SearchSpace:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown space preset {name!r}; available: {sorted(PRESETS)}"
        ) from None


def resolve_space(name_or_path: str) -> SearchSpace:
    """Resolve a preset name or a search-space JSON file path."""
    if name_or_path in PRESETS:
        return PRESETS[name_or_path]()
    p = Path(name_or_path)
    if p.exists():
        return load_space(p)
    raise ConfigError(
        f"space {name_or_path!r} is neither a preset ({sorted(PRESETS)}) "
        "nor an existing file"
    )
