"""Objective vectors, Pareto dominance, latency normalization, 2-D hypervolume.

All comparisons happen in canonical minimization space: maximize objectives
are negated once, at vector construction, and never again downstream.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

from .errors import (
    ConfigError,
    DegenerateNormalizer,
    EmptyInput,
    ObjectiveMismatch,
    ReferenceViolation,
    Unsupported2DOnly,
)
from .space import Genotype, genotype_id

DIRECTIONS = ("minimize", "maximize")


@dataclass(frozen=True)
class ObjectiveSpec:
    name: str
    direction: str
    unit: str = ""

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ConfigError(
                f"objective {self.name}: direction must be one of {DIRECTIONS}"
            )


def check_unique_names(specs) -> None:
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigError(f"objective names must be unique, got {names}")


@dataclass(frozen=True)
class ObjectiveVector:
    """Raw objective values plus their specs; canonical_min negates maximizers."""

    values: tuple[float, ...]
    specs: tuple[ObjectiveSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "specs", tuple(self.specs))
        if len(self.values) != len(self.specs):
            raise ObjectiveMismatch(
                f"{len(self.values)} values for {len(self.specs)} objective specs"
            )
        if not all(math.isfinite(v) for v in self.values):
            raise ObjectiveMismatch(f"non-finite objective value in {self.values}")

    @cached_property
    def canonical_min(self) -> tuple[float, ...]:
        return tuple(
            v if s.direction == "minimize" else -v
            for v, s in zip(self.values, self.specs)
        )

    def value_of(self, name: str) -> float:
        for v, s in zip(self.values, self.specs):
            if s.name == name:
                return v
        raise ObjectiveMismatch(f"no objective named {name!r}")


def dominates(a: ObjectiveVector, b: ObjectiveVector) -> bool:
    """True iff a is no worse everywhere and strictly better somewhere."""
    if a.specs != b.specs:
        raise ObjectiveMismatch("objective specs differ between vectors")
    av, bv = a.canonical_min, b.canonical_min
    return all(x <= y for x, y in zip(av, bv)) and any(
        x < y for x, y in zip(av, bv)
    )


@dataclass(frozen=True)
class ParetoFront:
    """Non-dominated evaluation records, in first-seen order."""

    members: tuple

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


def pareto_front(records) -> ParetoFront:
    """Extract the non-dominated subset of evaluation records.

    Records sharing a canonical genotype are collapsed to the earliest one, so
    fronts are deterministic even when the same configuration was measured in
    several batches.
    """
    records = list(records)
    if not records:
        raise EmptyInput("pareto_front requires at least one record")
    specs = records[0].objectives_raw.specs
    deduped = {}
    for rec in records:
        if rec.objectives_raw.specs != specs:
            raise ObjectiveMismatch("records mix different objective spec lists")
        deduped.setdefault(rec.genotype.genes, rec)
    recs = list(deduped.values())
    points = [r.objectives_raw.canonical_min for r in recs]
    keep = []
    for i, p in enumerate(points):
        dominated = False
        for j, q in enumerate(points):
            if i == j:
                continue
            if all(x <= y for x, y in zip(q, p)) and any(
                x < y for x, y in zip(q, p)
            ):
                dominated = True
                break
        if not dominated:
            keep.append(recs[i])
    return ParetoFront(members=tuple(keep))


@dataclass(frozen=True)
class LatencyNormalizer:
    l_min: float
    l_max: float

    def __post_init__(self):
        if not (math.isfinite(self.l_min) and math.isfinite(self.l_max)):
            raise ConfigError("latency normalizer bounds must be finite")
        if self.l_min <= 0:
            raise ConfigError("l_min must be > 0")
        if self.l_max < self.l_min:
            raise ConfigError("l_max must be >= l_min")


def normalize_latency(l: float, n: LatencyNormalizer) -> float:
    """(l - l_min) / l_max, applied exactly as stated, with no clamping."""
    if n.l_max == 0:
        raise DegenerateNormalizer("l_max = 0")
    if not math.isfinite(l) or l < 0:
        raise ConfigError(f"latency must be finite and >= 0, got {l}")
    return (l - n.l_min) / n.l_max


# ---------------------------------------------------------------------------
# Hypervolume (two objectives)
# ---------------------------------------------------------------------------


def dominated_area(points, reference) -> float:
    """Area dominated by 2-D canonical-min points relative to `reference`.

    Sorts on the first coordinate and sums disjoint horizontal strips; points
    must be strictly better than the reference in both coordinates.
    """
    ref_x, ref_y = float(reference[0]), float(reference[1])
    pts = []
    for p in points:
        if len(p) != 2:
            raise Unsupported2DOnly(f"hypervolume needs 2-D points, got {len(p)}-D")
        x, y = float(p[0]), float(p[1])
        if x >= ref_x or y >= ref_y:
            raise ReferenceViolation(
                f"point ({x}, {y}) not strictly inside reference ({ref_x}, {ref_y})"
            )
        pts.append((x, y))
    area = 0.0
    prev_y = ref_y
    for x, y in sorted(pts):
        if y < prev_y:
            area += (ref_x - x) * (prev_y - y)
            prev_y = y
    return area


def hypervolume_2d(front: ParetoFront, reference) -> float:
    """Hypervolume of a front's canonical-min vectors w.r.t. a reference point."""
    if len(reference) != 2:
        raise Unsupported2DOnly("reference point must be 2-D")
    points = []
    for rec in front:
        vec = rec.objectives_raw
        if len(vec.values) != 2:
            raise Unsupported2DOnly(
                f"front has {len(vec.values)} objectives; only 2 supported"
            )
        points.append(vec.canonical_min)
    return dominated_area(points, reference)


def default_reference(vectors) -> tuple[float, ...]:
    """Frozen hypervolume reference: worst observed canonical value per
    objective, padded 5% toward the worse side so observed points stay strictly
    inside the box.
    """
    vectors = list(vectors)
    if not vectors:
        raise EmptyInput("need at least one vector to place a reference point")
    m = len(vectors[0].canonical_min)
    ref = []
    for k in range(m):
        col = [v.canonical_min[k] for v in vectors]
        worst, best = max(col), min(col)
        pad = 0.05 * max(abs(worst), worst - best, 1e-9)
        ref.append(worst + pad)
    return tuple(ref)


class IncrementalFront2D:
    """Maintains a 2-D Pareto front under point insertion, for HV traces.

    Points at or outside the reference box are dropped (counted, not raised):
    cumulative traces freeze their reference early, and later exploration may
    legally produce points worse than it.
    """

    def __init__(self, reference):
        if len(reference) != 2:
            raise Unsupported2DOnly("reference point must be 2-D")
        self.reference = (float(reference[0]), float(reference[1]))
        self._points: list[tuple[float, float]] = []  # sorted by x asc, y desc
        self.clamped = 0

    def insert(self, point) -> bool:
        """Insert a canonical-min point; returns True if the front changed."""
        x, y = float(point[0]), float(point[1])
        if x >= self.reference[0] or y >= self.reference[1]:
            self.clamped += 1
            return False
        pts = self._points
        # dominated (or duplicated) by the rightmost point with x' <= x?
        j = bisect.bisect_right(pts, (x, float("inf")))
        if j > 0 and pts[j - 1][1] <= y:
            return False
        # remove points dominated by the new one (x' >= x and y' >= y)
        i = bisect.bisect_left(pts, (x, y))
        k = i
        while k < len(pts) and pts[k][1] >= y:
            k += 1
        del pts[i:k]
        pts.insert(i, (x, y))
        return True

    def hypervolume(self) -> float:
        if not self._points:
            return 0.0
        return dominated_area(self._points, self.reference)


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def front_to_csv(front: ParetoFront, path: str | Path) -> None:
    """Columns: genotype_id, per-objective raw values, per-objective canonical."""
    rows = list(front)
    if not rows:
        raise EmptyInput("cannot export an empty front")
    specs = rows[0].objectives_raw.specs
    header = (
        ["genotype_id"]
        + [f"{s.name}_raw" for s in specs]
        + [f"{s.name}_canonical" for s in specs]
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rec in rows:
            vec = rec.objectives_raw
            writer.writerow(
                [genotype_id(rec.genotype)]
                + [repr(v) for v in vec.values]
                + [repr(v) for v in vec.canonical_min]
            )


def hv_trace_to_csv(trace, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["evaluation_count", "hypervolume"])
        for count, hv in trace:
            writer.writerow([count, repr(hv)])
