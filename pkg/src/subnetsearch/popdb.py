"""Unsupervised search-space reduction from search history.

Pipeline: cluster explored genotypes with density-based clustering (outliers
become noise), compute per-position value frequencies over non-noise points
counting only active genes, exclude values whose frequency falls below a
threshold, and rebuild a smaller search space.

The clustering is an exact O(n^2) HDBSCAN: mutual-reachability distances from
k-nearest core distances, a Prim minimum spanning tree, condensation of the
single-linkage hierarchy at min_cluster_size, and excess-of-mass cluster
selection (the root is never selected). Euclidean metric throughout.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict, deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ConstraintMismatch, EmptyClusterSet
from .space import (
    BlockRule,
    ElasticParamSpec,
    Genotype,
    SearchSpace,
)

# ---------------------------------------------------------------------------
# HDBSCAN
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClusterLabeling:
    labels: tuple[int, ...]  # -1 = noise, >= 0 = cluster id
    probabilities: tuple[float, ...]

    @property
    def n_clusters(self) -> int:
        return len({l for l in self.labels if l >= 0})


def _core_distances(X: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance to the min_samples-th nearest neighbor, self included."""
    n = X.shape[0]
    k = min(min_samples, n)
    sq = np.einsum("ij,ij->i", X, X)
    core = np.empty(n)
    chunk = max(1, int(5_000_000 // max(n, 1)))
    for start in range(0, n, chunk):
        rows = X[start : start + chunk]
        d2 = sq[start : start + chunk, None] + sq[None, :] - 2.0 * (rows @ X.T)
        np.maximum(d2, 0.0, out=d2)
        core[start : start + chunk] = np.sqrt(
            np.partition(d2, k - 1, axis=1)[:, k - 1]
        )
    return core


def _mst_prim(X: np.ndarray, core: np.ndarray):
    """MST of the complete mutual-reachability graph; O(n^2) time, O(n) memory."""
    n = X.shape[0]
    sq = np.einsum("ij,ij->i", X, X)
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=int)
    current = 0
    in_tree[0] = True
    edges = []
    for _ in range(n - 1):
        d2 = sq + sq[current] - 2.0 * (X @ X[current])
        np.maximum(d2, 0.0, out=d2)
        mr = np.maximum(np.maximum(np.sqrt(d2), core), core[current])
        improved = (~in_tree) & (mr < best)
        best[improved] = mr[improved]
        parent[improved] = current
        nxt = int(np.argmin(np.where(in_tree, np.inf, best)))
        edges.append((float(best[nxt]), int(parent[nxt]), nxt))
        in_tree[nxt] = True
        current = nxt
    return edges


def _single_linkage(edges, n: int):
    """Merge MST edges ascending into a dendrogram.

    Returns merges[k] = (left_node, right_node, distance, size) where node ids
    < n are points and node n+k is the cluster created by merge k.
    """
    order = sorted(range(len(edges)), key=lambda i: edges[i][0])
    parent = list(range(2 * n - 1))
    size = [1] * (2 * n - 1)

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    merges = []
    for k, idx in enumerate(order):
        w, u, v = edges[idx]
        ru, rv = find(u), find(v)
        new = n + k
        parent[ru] = new
        parent[rv] = new
        size[new] = size[ru] + size[rv]
        merges.append((ru, rv, w, size[new]))
    return merges


def _condense(merges, n: int, min_cluster_size: int):
    """Condense the dendrogram: children smaller than min_cluster_size fall
    out as points; larger splits spawn new condensed clusters.

    Returns (entries, root_cid) with entries = list of
    (parent_cid, child_id, lambda, size); child_id < n means a point.
    """
    node_left = {}
    node_right = {}
    node_dist = {}
    node_size = {}
    for k, (l, r, w, s) in enumerate(merges):
        node = n + k
        node_left[node] = l
        node_right[node] = r
        node_dist[node] = w
        node_size[node] = s

    def size_of(node: int) -> int:
        return 1 if node < n else node_size[node]

    def leaves(node: int):
        stack = [node]
        while stack:
            x = stack.pop()
            if x < n:
                yield x
            else:
                stack.append(node_left[x])
                stack.append(node_right[x])

    root = 2 * n - 2
    root_cid = n
    next_cid = n + 1
    entries: list[tuple[int, int, float, int]] = []
    todo = deque([(root, root_cid)])
    while todo:
        node, cid = todo.popleft()
        while True:
            dist = node_dist[node]
            lam = math.inf if dist <= 0 else 1.0 / dist
            l, r = node_left[node], node_right[node]
            sl, sr = size_of(l), size_of(r)
            if sl >= min_cluster_size and sr >= min_cluster_size:
                for child in (l, r):
                    entries.append((cid, next_cid, lam, size_of(child)))
                    todo.append((child, next_cid))
                    next_cid += 1
                break
            if sl < min_cluster_size and sr < min_cluster_size:
                for child in (l, r):
                    for p in leaves(child):
                        entries.append((cid, p, lam, 1))
                break
            big, small = (l, r) if sl >= min_cluster_size else (r, l)
            for p in leaves(small):
                entries.append((cid, p, lam, 1))
            node = big  # the large child continues as the same condensed cluster
    return entries, root_cid


def hdbscan(points, min_cluster_size: int, min_samples: int) -> ClusterLabeling:
    """Cluster points, labeling sparse ones as noise (-1)."""
    X = np.asarray(points, dtype=float)
    if X.ndim != 2:
        raise ConfigError("points must be a 2-D matrix")
    if min_cluster_size < 2:
        raise ConfigError("min_cluster_size must be >= 2")
    if min_samples < 1:
        raise ConfigError("min_samples must be >= 1")
    n = X.shape[0]
    if n < min_cluster_size:
        return ClusterLabeling(labels=(-1,) * n, probabilities=(0.0,) * n)

    core = _core_distances(X, min_samples)
    merges = _single_linkage(_mst_prim(X, core), n)
    entries, root_cid = _condense(merges, n, min_cluster_size)

    # stability = sum over member departures of (lambda - birth_lambda) * size
    birth: dict[int, float] = {root_cid: 0.0}
    cluster_children: dict[int, list[int]] = defaultdict(list)
    for parent, child, lam, _size in entries:
        if child >= n:
            birth[child] = lam
            cluster_children[parent].append(child)
    stability: dict[int, float] = defaultdict(float)
    for parent, _child, lam, size in entries:
        stability[parent] += (lam - birth[parent]) * size

    # excess of mass, bottom-up; the root never claims its subtree
    cids = sorted(birth)
    claimed: dict[int, bool] = {}
    subtree: dict[int, float] = {}
    for cid in reversed(cids):
        child_sum = sum(subtree[c] for c in cluster_children[cid])
        if cid != root_cid and stability[cid] >= child_sum:
            claimed[cid] = True
            subtree[cid] = stability[cid]
        else:
            claimed[cid] = False
            subtree[cid] = child_sum
    selected: list[int] = []
    stack = [(root_cid, False)]
    while stack:
        cid, covered = stack.pop()
        if not covered and claimed[cid]:
            selected.append(cid)
            covered = True
        for c in cluster_children[cid]:
            stack.append((c, covered))
    selected.sort()
    label_of_cid = {cid: i for i, cid in enumerate(selected)}

    # assign points to the nearest selected ancestor of their fall-out cluster
    cluster_parent = {child: parent for parent, child, _l, _s in entries if child >= n}
    fall_out: dict[int, tuple[int, float]] = {}
    for parent, child, lam, _size in entries:
        if child < n:
            fall_out[child] = (parent, lam)
    nearest_selected: dict[int, int | None] = {}

    def resolve(cid: int):
        path = []
        cur: int | None = cid
        while cur is not None and cur not in nearest_selected:
            if cur in label_of_cid:
                nearest_selected[cur] = cur
                break
            path.append(cur)
            cur = cluster_parent.get(cur)
        anchor = nearest_selected.get(cur) if cur is not None else None
        for c in path:
            nearest_selected[c] = anchor
        return nearest_selected.setdefault(cid, anchor)

    labels = [-1] * n
    lambdas = [0.0] * n
    owners: dict[int, list[int]] = defaultdict(list)
    for p, (cid, lam) in fall_out.items():
        anchor = resolve(cid)
        if anchor is not None:
            labels[p] = label_of_cid[anchor]
            lambdas[p] = lam
            owners[anchor].append(p)

    probabilities = [0.0] * n
    for anchor, members in owners.items():
        lam_max = max(lambdas[p] for p in members)
        for p in members:
            if math.isfinite(lam_max) and lam_max > 0:
                probabilities[p] = min(lambdas[p], lam_max) / lam_max
            else:
                probabilities[p] = 1.0
    return ClusterLabeling(labels=tuple(labels), probabilities=tuple(probabilities))


# ---------------------------------------------------------------------------
# Frequencies and constraints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrequencyTable:
    """Per genome position: relative frequency of each allowed value among
    active genes of non-noise points, plus the observation count."""

    space_name: str
    frequencies: tuple[tuple[float, ...], ...]
    observations: tuple[int, ...]


def elastic_frequencies(
    labeling: ClusterLabeling, genotypes, space: SearchSpace
) -> FrequencyTable:
    genotypes = list(genotypes)
    if len(labeling.labels) != len(genotypes):
        raise ConfigError(
            f"{len(labeling.labels)} labels for {len(genotypes)} genotypes"
        )
    length = space.genome_length
    counts = [np.zeros(len(space.allowed[pos])) for pos in range(length)]
    any_member = False
    for label, g in zip(labeling.labels, genotypes):
        if label < 0:
            continue
        any_member = True
        mask = space.active_mask(g)
        for pos in range(length):
            if mask[pos]:
                counts[pos][space.value_rank(pos, g.genes[pos])] += 1
    if not any_member:
        raise EmptyClusterSet("all points labeled noise; no frequencies to compute")
    freqs = []
    observations = []
    for pos in range(length):
        total = counts[pos].sum()
        observations.append(int(total))
        if total > 0:
            freqs.append(tuple((counts[pos] / total).tolist()))
        else:
            freqs.append(tuple([0.0] * len(space.allowed[pos])))
    return FrequencyTable(
        space_name=space.name,
        frequencies=tuple(freqs),
        observations=tuple(observations),
    )


@dataclass(frozen=True)
class ConstraintSet:
    """Per-position allowed-value subsets plus provenance."""

    allowed: tuple[tuple[int, ...], ...]
    source_run_id: str = ""
    threshold: float = 0.0


def build_constraints(
    freqs: FrequencyTable,
    threshold: float,
    space: SearchSpace,
    source_run_id: str = "",
) -> ConstraintSet:
    """Exclude values with frequency below `threshold`; a position that would
    end up empty keeps its single highest-frequency value instead. Positions
    with no active observations are left unconstrained."""
    if not (0.0 <= threshold <= 1.0):
        raise ConfigError("threshold must be in [0, 1]")
    if len(freqs.frequencies) != space.genome_length:
        raise ConstraintMismatch(
            "frequency table does not match space genome length"
        )
    allowed = []
    for pos in range(space.genome_length):
        vals = space.allowed[pos]
        f = freqs.frequencies[pos]
        if freqs.observations[pos] == 0:
            allowed.append(vals)
            continue
        keep = tuple(v for v, fr in zip(vals, f) if fr >= threshold)
        if not keep:
            keep = (vals[int(np.argmax(f))],)
        allowed.append(keep)
    return ConstraintSet(
        allowed=tuple(allowed),
        source_run_id=source_run_id,
        threshold=threshold,
    )


def constrain_space(s: SearchSpace, c: ConstraintSet) -> SearchSpace:
    """Rebuild the space with constrained allowed sets; genome positions and
    block rules are preserved, so downstream code is unaffected.

    A parameter whose positions end up with different allowed sets is split
    into one parameter per run of equal sets.
    """
    if len(c.allowed) != s.genome_length:
        raise ConstraintMismatch(
            f"constraints cover {len(c.allowed)} positions, "
            f"space has {s.genome_length}"
        )
    for pos, keep in enumerate(c.allowed):
        if not keep:
            raise ConstraintMismatch(f"empty allowed set at position {pos}")
        if not set(keep) <= set(s.allowed[pos]):
            raise ConstraintMismatch(
                f"position {pos}: {keep} is not a subset of {s.allowed[pos]}"
            )
    new_params: list[ElasticParamSpec] = []
    pos = 0
    for p in s.params:
        runs: list[tuple[int, tuple[int, ...]]] = []  # (count, allowed)
        for k in range(p.position_count):
            vals = tuple(sorted(c.allowed[pos + k]))
            if runs and runs[-1][1] == vals:
                runs[-1] = (runs[-1][0] + 1, vals)
            else:
                runs.append((1, vals))
        if len(runs) == 1:
            new_params.append(
                ElasticParamSpec(p.name, p.position_count, runs[0][1], p.role)
            )
        else:
            offset = 0
            for count, vals in runs:
                new_params.append(
                    ElasticParamSpec(f"{p.name}_p{pos + offset}", count, vals, p.role)
                )
                offset += count
        pos += p.position_count
    return SearchSpace(
        name=f"{s.name}-constrained",
        params=tuple(new_params),
        blocks=s.blocks,
    )


# ---------------------------------------------------------------------------
# Constraint document I/O
# ---------------------------------------------------------------------------


def constraints_to_dict(c: ConstraintSet, space: SearchSpace) -> dict:
    eliminations: dict[str, dict[str, int]] = {}
    for pos in range(space.genome_length):
        role = space.param_at(pos).role
        slot = eliminations.setdefault(role, {"eliminated_positions": 0, "total_positions": 0})
        slot["total_positions"] += 1
        if len(c.allowed[pos]) < len(space.allowed[pos]):
            slot["eliminated_positions"] += 1
    return {
        "space": space.name,
        "source_run_id": c.source_run_id,
        "threshold": c.threshold,
        "allowed": [list(vals) for vals in c.allowed],
        "eliminations": eliminations,
    }


def constraints_from_dict(d: dict) -> ConstraintSet:
    try:
        return ConstraintSet(
            allowed=tuple(tuple(int(v) for v in vals) for vals in d["allowed"]),
            source_run_id=d.get("source_run_id", ""),
            threshold=float(d.get("threshold", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed constraints document: {exc}") from exc


def save_constraints(c: ConstraintSet, space: SearchSpace, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(constraints_to_dict(c, space), fh, indent=2)
        fh.write("\n")


def load_constraints(path: str | Path) -> ConstraintSet:
    with open(path, encoding="utf-8") as fh:
        return constraints_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# History featurization
# ---------------------------------------------------------------------------


def history_features(
    genotypes,
    space: SearchSpace,
    objective_vectors=None,
    max_points: int = 20_000,
    seed: int = 0,
):
    """Encode search history for clustering: ordinal-normalized genotypes,
    optionally augmented with min-max normalized objective coordinates.

    Histories larger than max_points are uniformly subsampled to keep the
    O(n^2) spanning-tree stage tractable. Returns (features, kept_indices).
    """
    genotypes = list(genotypes)
    n = len(genotypes)
    idx = np.arange(n)
    if n > max_points:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(n, size=max_points, replace=False))
    rows = []
    for i in idx:
        g = genotypes[int(i)]
        row = np.empty(space.genome_length)
        for pos, value in enumerate(g.genes):
            k = len(space.allowed[pos])
            row[pos] = 0.0 if k == 1 else space.value_rank(pos, value) / (k - 1)
        rows.append(row)
    feats = np.vstack(rows)
    if objective_vectors is not None:
        obj = np.array([objective_vectors[int(i)].canonical_min for i in idx])
        lo = obj.min(axis=0)
        span = obj.max(axis=0) - lo
        span[span == 0] = 1.0
        feats = np.hstack([feats, (obj - lo) / span])
    return feats, idx
