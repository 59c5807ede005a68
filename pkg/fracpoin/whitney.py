"""
Dyadic Whitney decompositions of rectilinear domains.

Cubes live on the integer lattice of unit ``cell_size / 2**max_generation``.
Subdivision runs level by level over arrays of candidate cubes; every accept
or reject decision compares integer squared lengths, so the result does not
depend on floating point.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import product
from typing import Sequence

import numpy as np
from pydantic import BaseModel

from fracpoin.geometry import Cube, DomainError, RectilinearDomain, box_pairs

logger = logging.getLogger(__name__)

EXPANSION = Fraction(9, 8)
INT64_SQUARES = 2**62


def check_lattice_range(domain: RectilinearDomain, max_generation: int) -> None:
    """Reject generations whose squared lattice gaps would not fit in int64."""
    lo, hi = domain.lattice_bounds
    reach = 4 * max(abs(int(v)) for v in (*lo, *hi)) * 2**max_generation
    if domain.n * reach * reach >= INT64_SQUARES:
        raise ValueError(f"max_generation {max_generation} is too fine for exact int64 gaps on this domain")


def _min_gap_sq(lo: np.ndarray, hi: np.ndarray, flo: np.ndarray, fhi: np.ndarray, chunk: int = 1024) -> np.ndarray:
    """Squared distance from each closed box lo..hi to the nearest face box."""
    out = np.empty(len(lo), dtype=np.int64)
    for start in range(0, len(lo), chunk):
        blo = lo[start : start + chunk, None, :]
        bhi = hi[start : start + chunk, None, :]
        gap = np.maximum(np.maximum(flo[None] - bhi, blo - fhi[None]), 0)
        out[start : start + chunk] = np.min(np.sum(gap * gap, axis=2), axis=1)
    return out


@dataclass(frozen=True, eq=False)
class WhitneyDecomposition:
    """Accepted cubes as integer ``corners``/``sides`` in lattice units."""

    domain: RectilinearDomain
    max_generation: int
    corners: np.ndarray
    sides: np.ndarray
    uncovered: Fraction

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def unit(self) -> Fraction:
        return self.domain.cell_size / 2**self.max_generation

    def __len__(self) -> int:
        return len(self.sides)

    @property
    def generations(self) -> np.ndarray:
        return self.max_generation - np.log2(self.sides).astype(np.int64)

    @property
    def upper(self) -> np.ndarray:
        return self.corners + self.sides[:, None]

    def cube(self, t: int) -> Cube:
        return Cube(tuple(self.unit * int(v) for v in self.corners[t]), self.unit * int(self.sides[t]))

    @cached_property
    def cubes(self) -> tuple[Cube, ...]:
        return tuple(self.cube(t) for t in range(len(self)))

    @cached_property
    def face_boxes(self) -> tuple[np.ndarray, np.ndarray]:
        """Boundary faces in lattice units."""
        scale = 2**self.max_generation
        flo, fhi = self.domain.face_lattice
        return flo * scale, fhi * scale

    @cached_property
    def dist_sq(self) -> np.ndarray:
        """Exact dist(Q_t, boundary)**2 in squared lattice units."""
        flo, fhi = self.face_boxes
        return _min_gap_sq(self.corners, self.upper, flo, fhi)

    @cached_property
    def neighbor_pairs(self) -> np.ndarray:
        return box_pairs(self.corners, self.upper)

    @cached_property
    def face_pairs(self) -> np.ndarray:
        """Neighbor pairs sharing an (n-1)-dimensional piece of face."""
        pairs = self.neighbor_pairs
        if len(pairs) == 0:
            return pairs
        i, j = pairs[:, 0], pairs[:, 1]
        overlap = np.minimum(self.upper[i], self.upper[j]) - np.maximum(self.corners[i], self.corners[j])
        return pairs[np.sum(overlap == 0, axis=1) == 1]

    @cached_property
    def neighbor_counts(self) -> np.ndarray:
        return np.bincount(self.neighbor_pairs.ravel(), minlength=len(self))

    def neighbors(self, t: int, faces_only: bool = False) -> list[int]:
        pairs = self.face_pairs if faces_only else self.neighbor_pairs
        return sorted(set(pairs[pairs[:, 0] == t, 1].tolist()) | set(pairs[pairs[:, 1] == t, 0].tolist()))

    @property
    def covered_volume(self) -> Fraction:
        total = sum(int(s) ** self.n for s in self.sides.tolist())
        return total * self.unit**self.n

    def locate(self, x: Sequence[Fraction]) -> int | None:
        """Index of a cube whose closure contains x."""
        point = [Fraction(v) / self.unit for v in x]
        for t in range(len(self)):
            c = self.corners[t]
            s = int(self.sides[t])
            if all(int(c[k]) <= point[k] <= int(c[k]) + s for k in range(self.n)):
                return t
        return None

    def to_json(self) -> list[dict]:
        gens = self.generations.tolist()
        return [{**self.cube(t).to_json(), "generation": gens[t]} for t in range(len(self))]

    @classmethod
    def from_cubes(cls, domain: RectilinearDomain, cubes: Sequence[Cube], max_generation: int) -> WhitneyDecomposition:
        """Wrap hand-built cubes; they must sit on the lattice of ``max_generation``."""
        check_lattice_range(domain, max_generation)
        unit = domain.cell_size / 2**max_generation
        corners, sides = [], []
        for cube in cubes:
            scaled = [c / unit for c in cube.corner]
            side = cube.side / unit
            if side.denominator != 1 or any(v.denominator != 1 for v in scaled):
                raise DomainError(f"Cube {cube.to_json()} is not on the generation-{max_generation} lattice")
            corners.append([int(v) for v in scaled])
            sides.append(int(side))
        corners_arr = np.array(corners, dtype=np.int64).reshape(-1, domain.n)
        sides_arr = np.array(sides, dtype=np.int64)
        covered = sum(c.volume for c in cubes)
        return cls(domain, max_generation, corners_arr, sides_arr, domain.volume - covered)


class _Occupancy:
    """Summed-area table over domain cells, for counting occupied cells in a block."""

    def __init__(self, domain: RectilinearDomain, block: int):
        lo, hi = domain.lattice_bounds
        self.origin = (lo // block) * block
        top = -((-hi) // block) * block
        shape = tuple(int(v) for v in top - self.origin)
        occ = np.zeros(shape, dtype=np.int64)
        cells = np.array(sorted(domain.cells), dtype=np.int64) - self.origin
        occ[tuple(cells.T)] = 1
        self.occ = occ
        sat = np.zeros(tuple(s + 1 for s in shape), dtype=np.int64)
        acc = occ
        for k in range(occ.ndim):
            acc = np.cumsum(acc, axis=k)
        sat[tuple(slice(1, None) for _ in shape)] = acc
        self.sat = sat
        self.top = top

    def count(self, corners: np.ndarray, side: int) -> np.ndarray:
        """Occupied cells in blocks [corner, corner + side) given in cell units."""
        rel = corners - self.origin
        n = rel.shape[1]
        total = np.zeros(len(rel), dtype=np.int64)
        for bits in product((0, 1), repeat=n):
            index = tuple(rel[:, k] + bit * side for k, bit in enumerate(bits))
            sign = -1 if (n - sum(bits)) % 2 else 1
            total += sign * self.sat[index]
        return total


def whitney_decompose(domain: RectilinearDomain, max_generation: int) -> WhitneyDecomposition:
    """Dyadic Whitney cubes of ``domain`` down to side ``cell_size / 2**max_generation``.

    A cube is accepted when it lies in the domain and ``diam(Q) <= dist(Q, boundary)``;
    otherwise it is split into its 2**n children. Cubes still rejected at the last
    generation form the uncovered collar.
    """
    if max_generation < 0:
        raise ValueError(f"max_generation must be >= 0, got {max_generation}")
    check_lattice_range(domain, max_generation)
    n = domain.n
    scale = 2**max_generation
    lo, hi = domain.lattice_bounds
    extent = int(np.max(hi - lo))
    top = max(0, math.ceil(math.log2(extent)))
    block = 2**top
    occupancy = _Occupancy(domain, block)
    flo, fhi = domain.face_lattice
    flo, fhi = flo * scale, fhi * scale

    axes = [range(int(a), int(b), block) for a, b in zip(occupancy.origin, occupancy.top)]
    active = np.array(list(product(*axes)), dtype=np.int64) * scale
    side = block * scale
    offsets = np.array(list(product((0, 1), repeat=n)), dtype=np.int64)

    accepted_corners, accepted_sides = [], []
    uncovered_cells = 0
    for generation in range(-top, max_generation + 1):
        if len(active) == 0:
            break
        if side >= scale:
            cell_side = side // scale
            counts = occupancy.count(active // scale, cell_side)
            full = cell_side**n
        else:
            cells = active // scale - occupancy.origin
            counts = occupancy.occ[tuple(cells.T)]
            full = 1
        keep = counts > 0
        active, counts = active[keep], counts[keep]
        inside = counts == full
        accept = np.zeros(len(active), dtype=bool)
        if inside.any():
            d2 = _min_gap_sq(active[inside], active[inside] + side, flo, fhi)
            accept[inside] = n * side * side <= d2
        accepted_corners.append(active[accept])
        accepted_sides.append(np.full(int(accept.sum()), side, dtype=np.int64))
        rest = active[~accept]
        logger.debug("Generation %d: %d accepted, %d split", generation, int(accept.sum()), len(rest))
        if generation == max_generation:
            uncovered_cells = len(rest)
            break
        side //= 2
        active = (rest[:, None, :] + offsets[None, :, :] * side).reshape(-1, n)

    corners = np.concatenate(accepted_corners) if accepted_corners else np.zeros((0, n), dtype=np.int64)
    sides = np.concatenate(accepted_sides) if accepted_sides else np.zeros(0, dtype=np.int64)
    order = np.lexsort(corners.T[::-1])
    corners, sides = corners[order], sides[order]
    unit = domain.cell_size / scale
    uncovered = uncovered_cells * unit**n
    logger.info(
        "Whitney decomposition of %s: %d cubes, uncovered measure %s", domain.name, len(sides), uncovered
    )
    return WhitneyDecomposition(domain, max_generation, corners, sides, uncovered)


def expand_cubes(dec: WhitneyDecomposition) -> list[Cube]:
    """Concentric open cubes Q*_t = (9/8) Q_t."""
    return [cube.dilate(EXPANSION) for cube in dec.cubes]


def probe_counts(lo: np.ndarray, hi: np.ndarray, axes: Sequence[np.ndarray]) -> np.ndarray:
    """Number of open boxes containing each point of the tensor grid ``axes``."""
    n = len(axes)
    diff = np.zeros(tuple(len(a) + 1 for a in axes), dtype=np.int64)
    first = [np.searchsorted(axes[k], lo[:, k], side="right") for k in range(n)]
    last = [np.searchsorted(axes[k], hi[:, k], side="left") for k in range(n)]
    nonempty = np.all([f < e for f, e in zip(first, last)], axis=0)
    for bits in product((0, 1), repeat=n):
        index = tuple((last[k] if bit else first[k])[nonempty] for k, bit in enumerate(bits))
        np.add.at(diff, index, -1 if sum(bits) % 2 else 1)
    for k in range(n):
        diff = np.cumsum(diff, axis=k)
    return diff[tuple(slice(0, -1) for _ in range(n))]


def expanded_overlap(dec: WhitneyDecomposition, resolution: int = 256) -> tuple[int, int]:
    """(min, max) number of expanded cubes over probe midpoints inside covered cubes."""
    bounds = dec.domain.bounds
    axes = [
        float(a) + (np.arange(resolution) + 0.5) * float(b - a) / resolution for a, b in zip(bounds.lo, bounds.hi)
    ]
    unit = float(dec.unit)
    lo = dec.corners * unit
    hi = dec.upper * unit
    pad = (dec.sides * unit / 16)[:, None]
    covered = probe_counts(lo, hi, axes)
    counts = probe_counts(lo - pad, hi + pad, axes)
    inside = counts[covered > 0]
    if inside.size == 0:
        return 0, 0
    return int(inside.min()), int(inside.max())


# --- Verification ---


class WhitneyReport(BaseModel):
    cubes: int
    max_generation: int
    uncovered: str
    uncovered_bound: float
    disjoint: bool
    covers: bool
    size_vs_distance: bool
    neighbor_ratio: bool
    neighbor_count: bool
    collar: bool
    min_dist_over_diam: float
    max_dist_over_diam: float
    max_neighbor_ratio: float
    max_neighbors: int
    offending: dict[str, list[int]]
    passed: bool


def verify_whitney(dec: WhitneyDecomposition) -> WhitneyReport:
    """Exact check of disjointness, coverage, size/distance and neighbor bounds."""
    n = dec.n
    sides = dec.sides
    offending: dict[str, list[int]] = {}

    pairs = dec.neighbor_pairs
    i, j = pairs[:, 0], pairs[:, 1]
    overlap = np.minimum(dec.upper[i], dec.upper[j]) - np.maximum(dec.corners[i], dec.corners[j])
    clash = np.all(overlap > 0, axis=1)
    if clash.any():
        offending["disjoint"] = sorted(set(pairs[clash].ravel().tolist()))

    scale = 2**dec.max_generation
    occupancy = _Occupancy(dec.domain, 1)
    outside = []
    for t in range(len(dec)):
        s = int(sides[t])
        if s >= scale:
            cell_side = s // scale
            count = occupancy.count(dec.corners[t : t + 1] // scale, cell_side)[0]
            if count != cell_side**n:
                outside.append(t)
        else:
            cell = dec.corners[t] // scale - occupancy.origin
            if occupancy.occ[tuple(cell)] == 0:
                outside.append(t)
    if outside:
        offending["covers"] = outside
    volume_ok = dec.covered_volume + dec.uncovered == dec.domain.volume and dec.uncovered >= 0

    diam_sq = n * sides * sides
    d2 = dec.dist_sq
    lower = d2 >= diam_sq
    upper = d2 <= 16 * diam_sq
    bad = np.nonzero(~(lower & upper))[0]
    if bad.size:
        offending["size_vs_distance"] = bad.tolist()
    ratios = np.sqrt(d2 / diam_sq) if len(dec) else np.zeros(0)

    ratio_bad = (sides[i] > 4 * sides[j]) | (sides[j] > 4 * sides[i])
    if ratio_bad.any():
        offending["neighbor_ratio"] = sorted(set(pairs[ratio_bad].ravel().tolist()))
    side_ratio = np.maximum(sides[i] / sides[j], sides[j] / sides[i]) if len(pairs) else np.ones(1)

    counts = dec.neighbor_counts
    crowded = np.nonzero(counts > 12**n)[0]
    if crowded.size:
        offending["neighbor_count"] = crowded.tolist()

    cs = dec.domain.cell_size
    bound = 4 * math.sqrt(n) * dec.domain.face_count * float(cs) ** n / 2**dec.max_generation
    collar = float(dec.uncovered) < bound

    report = WhitneyReport(
        cubes=len(dec),
        max_generation=dec.max_generation,
        uncovered=str(dec.uncovered),
        uncovered_bound=bound,
        disjoint=not clash.any(),
        covers=volume_ok and not outside,
        size_vs_distance=bad.size == 0,
        neighbor_ratio=not ratio_bad.any(),
        neighbor_count=crowded.size == 0,
        collar=collar,
        min_dist_over_diam=float(ratios.min()) if ratios.size else 0.0,
        max_dist_over_diam=float(ratios.max()) if ratios.size else 0.0,
        max_neighbor_ratio=float(np.max(side_ratio)),
        max_neighbors=int(counts.max()) if counts.size else 0,
        offending=offending,
        passed=False,
    )
    report.passed = all(
        (report.disjoint, report.covers, report.size_vs_distance, report.neighbor_ratio, report.neighbor_count, collar)
    )
    if not report.passed:
        logger.warning("Whitney verification failed: %s", sorted(offending))
    return report
