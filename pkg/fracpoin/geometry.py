"""
Bounded rectilinear domains, cubes and compact boundary subsets.

A domain is the interior of a finite union of closed lattice cells of side
``cell_size``, optionally cut along interior faces (slits). Coordinates that
enter a geometric predicate are dyadic rationals, so containment, adjacency
and squared distances are decided exactly; floating point only appears when a
distance itself is reported.
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import product
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

logger = logging.getLogger(__name__)

Point = tuple[Fraction, ...]


class DomainError(ValueError):
    """Invalid domain or boundary-set description."""


class OutsideDomainError(ValueError):
    """Query point does not lie in the open domain."""


# --- Rationals ---


def parse_rational(value: Any) -> Fraction:
    """Parse ``3``, ``0.25``, ``"3/4"`` or ``"1/2^3"`` into a Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise DomainError(f"Not a number: {value!r}")
    if isinstance(value, (int, float)):
        if isinstance(value, float) and not math.isfinite(value):
            raise DomainError(f"Coordinate must be finite, got {value!r}")
        return Fraction(value)
    if isinstance(value, str):
        text = value.replace(" ", "")
        num, slash, den = text.partition("/")
        try:
            if slash and "^" in den:
                base, _, exp = den.partition("^")
                return Fraction(int(num)) / Fraction(int(base)) ** int(exp)
            return Fraction(text)
        except (ValueError, ZeroDivisionError):
            raise DomainError(f"Cannot parse rational {value!r}") from None
    raise DomainError(f"Cannot parse rational {value!r}")


def is_dyadic(value: Fraction) -> bool:
    den = value.denominator
    return den & (den - 1) == 0


def common_unit(*values: Fraction) -> Fraction:
    """Largest rational that divides every nonzero value."""
    nonzero = [abs(Fraction(v)) for v in values if v != 0]
    if not nonzero:
        return Fraction(1)
    den = math.lcm(*(v.denominator for v in nonzero))
    num = math.gcd(*(v.numerator * (den // v.denominator) for v in nonzero))
    return Fraction(num, den)


def as_point(x: Iterable[Any]) -> Point:
    return tuple(parse_rational(v) for v in x)


# --- Boxes and cubes ---


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi]; degenerate axes are allowed."""

    lo: Point
    hi: Point

    def __post_init__(self) -> None:
        lo, hi = as_point(self.lo), as_point(self.hi)
        if len(lo) != len(hi):
            raise ValueError("Box corners have different dimensions")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"Box with lo > hi: {lo} {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> Fraction:
        return math.prod((b - a for a, b in zip(self.lo, self.hi)), start=Fraction(1))

    @property
    def center(self) -> Point:
        return tuple((a + b) / 2 for a, b in zip(self.lo, self.hi))

    def contains_point(self, x: Sequence[Fraction]) -> bool:
        return all(a <= v <= b for a, v, b in zip(self.lo, x, self.hi))

    def contains(self, other: Box) -> bool:
        return all(a <= c and d <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def intersects(self, other: Box) -> bool:
        """Closures intersect."""
        return all(a <= d and c <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def overlaps(self, other: Box) -> bool:
        """Interiors intersect (positive-measure overlap)."""
        return all(a < d and c < b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def distance_sq(self, other: Box) -> Fraction:
        total = Fraction(0)
        for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi):
            gap = max(c - b, a - d, Fraction(0))
            total += gap * gap
        return total

    def probe_points(self) -> np.ndarray:
        """Corners, face centres and centre: 3**n points of the closed box."""
        axes = [(float(a), float((a + b) / 2), float(b)) for a, b in zip(self.lo, self.hi)]
        return np.array(list(product(*axes)), dtype=float)

    def to_json(self) -> dict:
        return {"lo": [str(v) for v in self.lo], "hi": [str(v) for v in self.hi]}


@dataclass(frozen=True)
class Cube:
    corner: Point
    side: Fraction

    def __post_init__(self) -> None:
        corner = as_point(self.corner)
        side = parse_rational(self.side)
        if side <= 0:
            raise ValueError(f"Cube side must be positive, got {side}")
        if len(corner) < 2:
            raise ValueError("Cubes live in dimension n >= 2")
        object.__setattr__(self, "corner", corner)
        object.__setattr__(self, "side", side)

    @property
    def n(self) -> int:
        return len(self.corner)

    @property
    def center(self) -> Point:
        return tuple(c + self.side / 2 for c in self.corner)

    @property
    def diam_sq(self) -> Fraction:
        return self.n * self.side * self.side

    @property
    def diam(self) -> float:
        return float(self.side) * math.sqrt(self.n)

    @property
    def volume(self) -> Fraction:
        return self.side**self.n

    @property
    def box(self) -> Box:
        return Box(self.corner, tuple(c + self.side for c in self.corner))

    def dilate(self, k: Fraction) -> Cube:
        """Concentric dilation kQ."""
        k = parse_rational(k)
        side = self.side * k
        return Cube(tuple(c - side / 2 for c in self.center), side)

    def to_json(self) -> dict:
        return {"corner": [str(v) for v in self.corner], "side": str(self.side)}


def box_distances(points: np.ndarray, lo: np.ndarray, hi: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Euclidean distance from each point to the union of closed boxes lo..hi."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(len(points))
    for start in range(0, len(points), chunk):
        pts = points[start : start + chunk, None, :]
        gap = np.maximum(np.maximum(lo[None, :, :] - pts, pts - hi[None, :, :]), 0.0)
        out[start : start + chunk] = np.sqrt(np.min(np.einsum("ijk,ijk->ij", gap, gap), axis=1))
    return out


def box_pairs(lo: np.ndarray, hi: np.ndarray, open_boxes: bool = False, chunk: int = 512) -> np.ndarray:
    """Index pairs i < j whose boxes intersect (interiors only when ``open_boxes``)."""
    found = []
    for start in range(0, len(lo), chunk):
        blo = lo[start : start + chunk, None, :]
        bhi = hi[start : start + chunk, None, :]
        if open_boxes:
            hit = np.all((blo < hi[None]) & (lo[None] < bhi), axis=2)
        else:
            hit = np.all((blo <= hi[None]) & (lo[None] <= bhi), axis=2)
        i, j = np.nonzero(hit)
        i = i + start
        keep = i < j
        found.append(np.stack([i[keep], j[keep]], axis=1))
    if not found:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(found).astype(np.int64)


# Largest dense arrangement built in one piece; bigger unions are swept slab by slab.
ATOM_LIMIT = 2_000_000


def breakpoints(*boxes: tuple[np.ndarray, np.ndarray], extra: Sequence[np.ndarray] | None = None) -> list[np.ndarray]:
    """Sorted distinct coordinates per axis over several (lo, hi) box arrays."""
    n = boxes[0][0].shape[1]
    coords = []
    for k in range(n):
        parts = [a[:, k] for pair in boxes for a in pair]
        if extra is not None:
            parts.append(np.asarray(extra[k], dtype=np.int64))
        coords.append(np.unique(np.concatenate(parts)))
    return coords


def cover_counts(coords: Sequence[np.ndarray], lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """How many boxes contain each atom of the arrangement spanned by ``coords``.

    Box coordinates must appear in ``coords``.
    """
    n = len(coords)
    diff = np.zeros(tuple(len(c) for c in coords), dtype=np.int64)
    lo_idx = [np.searchsorted(coords[k], lo[:, k]) for k in range(n)]
    hi_idx = [np.searchsorted(coords[k], hi[:, k]) for k in range(n)]
    for bits in product((0, 1), repeat=n):
        index = tuple(hi_idx[k] if bit else lo_idx[k] for k, bit in enumerate(bits))
        np.add.at(diff, index, -1 if sum(bits) % 2 else 1)
    for k in range(n):
        diff = np.cumsum(diff, axis=k)
    return diff[tuple(slice(0, -1) for _ in range(n))]


def atom_volumes(coords: Sequence[np.ndarray]) -> np.ndarray:
    widths = [np.diff(c) for c in coords]
    vol = widths[0]
    for w in widths[1:]:
        vol = np.multiply.outer(vol, w)
    return vol


def union_volume(lo: np.ndarray, hi: np.ndarray) -> int:
    """Exact volume of a union of integer boxes, in lattice units."""
    if len(lo) == 0:
        return 0
    if len(lo) == 1:
        return int(np.prod(hi[0] - lo[0]))
    coords = breakpoints((lo, hi))
    if lo.shape[1] == 1 or math.prod(len(c) - 1 for c in coords) <= ATOM_LIMIT:
        counts = cover_counts(coords, lo, hi)
        return int(np.sum(atom_volumes(coords)[counts > 0]))
    total = 0
    xs = coords[0].tolist()
    for a, b in zip(xs, xs[1:]):
        active = (lo[:, 0] <= a) & (hi[:, 0] >= b)
        if active.any():
            total += (b - a) * union_volume(lo[active, 1:], hi[active, 1:])
    return total


# --- Domains ---


@dataclass(frozen=True, eq=False)
class RectilinearDomain:
    """Interior of a union of closed cells ``cell_size * (c + [0,1]^n)``.

    ``slits`` lists interior faces removed from the domain as
    ``(axis, lower_cell)``: the face between ``lower_cell`` and
    ``lower_cell + e_axis``.
    """

    cell_size: Fraction
    cells: frozenset[tuple[int, ...]]
    slits: frozenset[tuple[int, tuple[int, ...]]] = frozenset()
    name: str = "cells"

    def __post_init__(self) -> None:
        cell_size = parse_rational(self.cell_size)
        if cell_size <= 0 or not is_dyadic(cell_size):
            raise DomainError(f"cell_size must be a positive dyadic rational, got {cell_size}")
        object.__setattr__(self, "cell_size", cell_size)
        cells = frozenset(tuple(int(v) for v in c) for c in self.cells)
        if not cells:
            raise DomainError("Domain has an empty cell set")
        dims = {len(c) for c in cells}
        if len(dims) != 1:
            raise DomainError("Cells have mixed dimensions")
        if dims.pop() < 2:
            raise DomainError("Domains live in dimension n >= 2")
        object.__setattr__(self, "cells", cells)
        slits = frozenset((int(axis), tuple(int(v) for v in cell)) for axis, cell in self.slits)
        for axis, cell in slits:
            upper = _shift(cell, axis, 1)
            if cell not in cells or upper not in cells:
                raise DomainError(f"Slit {axis}:{cell} is not an interior face")
        object.__setattr__(self, "slits", slits)
        components = self.components()
        if len(components) > 1:
            raise DomainError(f"Cell set is not edge-connected ({len(components)} components)")

    @property
    def n(self) -> int:
        return len(next(iter(self.cells)))

    @property
    def volume(self) -> Fraction:
        return self.cell_size**self.n * len(self.cells)

    def _cut(self, cell: tuple[int, ...], axis: int, step: int) -> bool:
        lower = cell if step > 0 else _shift(cell, axis, -1)
        return (axis, lower) in self.slits

    def adjacent_cells(self, cell: tuple[int, ...]) -> Iterable[tuple[int, ...]]:
        for axis in range(len(cell)):
            for step in (-1, 1):
                other = _shift(cell, axis, step)
                if other in self.cells and not self._cut(cell, axis, step):
                    yield other

    def components(self) -> list[set[tuple[int, ...]]]:
        remaining = set(self.cells)
        found = []
        while remaining:
            start = min(remaining)
            seen = {start}
            queue = deque([start])
            while queue:
                cell = queue.popleft()
                for other in self.adjacent_cells(cell):
                    if other not in seen:
                        seen.add(other)
                        queue.append(other)
            remaining -= seen
            found.append(seen)
        return found

    @cached_property
    def lattice_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-index bounding box, hi exclusive."""
        arr = np.array(sorted(self.cells), dtype=np.int64)
        return arr.min(axis=0), arr.max(axis=0) + 1

    @cached_property
    def face_lattice(self) -> tuple[np.ndarray, np.ndarray]:
        """Boundary faces (exposed cell faces and slits) in cell units."""
        faces = set()
        n = self.n
        for cell in sorted(self.cells):
            for axis in range(n):
                for step in (-1, 1):
                    other = _shift(cell, axis, step)
                    if other in self.cells and not self._cut(cell, axis, step):
                        continue
                    plane = cell[axis] + (1 if step > 0 else 0)
                    lo = list(cell)
                    hi = [c + 1 for c in cell]
                    lo[axis] = hi[axis] = plane
                    faces.add((tuple(lo), tuple(hi)))
        ordered = sorted(faces)
        lo = np.array([f[0] for f in ordered], dtype=np.int64)
        hi = np.array([f[1] for f in ordered], dtype=np.int64)
        return lo, hi

    @property
    def face_count(self) -> int:
        return len(self.face_lattice[0])

    @cached_property
    def faces(self) -> tuple[Box, ...]:
        lo, hi = self.face_lattice
        cs = self.cell_size
        return tuple(
            Box(tuple(cs * int(v) for v in a), tuple(cs * int(v) for v in b)) for a, b in zip(lo, hi)
        )

    @cached_property
    def _face_float(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.face_lattice
        cs = float(self.cell_size)
        return lo * cs, hi * cs

    @cached_property
    def bounds(self) -> Box:
        lo, hi = self.lattice_bounds
        cs = self.cell_size
        return Box(tuple(cs * int(v) for v in lo), tuple(cs * int(v) for v in hi))

    @cached_property
    def diameter(self) -> float:
        lo, hi = self.face_lattice
        verts = np.unique(np.concatenate([lo, hi]), axis=0) * float(self.cell_size)
        best = 0.0
        for start in range(0, len(verts), 512):
            block = verts[start : start + 512, None, :] - verts[None, :, :]
            best = max(best, float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", block, block)))))
        return best

    @cached_property
    def centroid(self) -> np.ndarray:
        arr = np.array(sorted(self.cells), dtype=float)
        return (arr.mean(axis=0) + 0.5) * float(self.cell_size)

    def distance(self, points: np.ndarray) -> np.ndarray:
        """d(x) for an array of points (no membership check)."""
        lo, hi = self._face_float
        return box_distances(points, lo, hi)

    def distance_sq_exact(self, x: Sequence[Fraction]) -> Fraction:
        best = None
        target = Box(tuple(x), tuple(x))
        for face in self.faces:
            d2 = face.distance_sq(target)
            if best is None or d2 < best:
                best = d2
        return best

    def in_closure_cells(self, x: Sequence[Fraction]) -> bool:
        cell = tuple(math.floor(v / self.cell_size) for v in x)
        return cell in self.cells

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Membership in the open domain for an array of points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        idx = np.floor(points / float(self.cell_size)).astype(np.int64)
        in_cells = np.array([tuple(row) in self.cells for row in idx.tolist()], dtype=bool)
        return in_cells & (self.distance(points) > 0)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "cell_size": str(self.cell_size),
            "cells": len(self.cells),
            "volume": str(self.volume),
            "boundary_faces": self.face_count,
        }


def _shift(cell: tuple[int, ...], axis: int, step: int) -> tuple[int, ...]:
    moved = list(cell)
    moved[axis] += step
    return tuple(moved)


def boundary_distance(domain: RectilinearDomain, x: Sequence[Any]) -> float:
    """d(x): distance from x in the domain to its boundary."""
    point = as_point(x)
    if len(point) != domain.n:
        raise OutsideDomainError(f"Point has dimension {len(point)}, domain has {domain.n}")
    d2 = domain.distance_sq_exact(point)
    if d2 == 0 or not domain.in_closure_cells(point):
        raise OutsideDomainError(f"Point {tuple(str(v) for v in point)} is not in {domain.name}")
    return math.sqrt(d2)


# --- Boundary subsets ---


@dataclass(frozen=True, eq=False)
class BoundarySet:
    """Compact subset F of the boundary: a union of closed boundary pieces."""

    segments: tuple[Box, ...]
    name: str = "segments"

    def __post_init__(self) -> None:
        if not self.segments:
            raise DomainError("Boundary set is empty")
        object.__setattr__(self, "segments", tuple(self.segments))

    @cached_property
    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([[float(v) for v in s.lo] for s in self.segments])
        hi = np.array([[float(v) for v in s.hi] for s in self.segments])
        return lo, hi

    def distance(self, points: np.ndarray) -> np.ndarray:
        lo, hi = self.arrays
        return box_distances(points, lo, hi)

    def distance_sq_exact(self, x: Sequence[Fraction]) -> Fraction:
        target = Box(tuple(x), tuple(x))
        return min(s.distance_sq(target) for s in self.segments)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "segments": [{"from": [str(v) for v in s.lo], "to": [str(v) for v in s.hi]} for s in self.segments],
        }


def set_distance(F: BoundarySet, x: Sequence[Any]) -> float:
    """d_F(x): distance from x to the compact boundary subset F."""
    return math.sqrt(F.distance_sq_exact(as_point(x)))


def _lies_on_boundary(domain: RectilinearDomain, segment: Box) -> bool:
    cs = domain.cell_size
    lo = [v / cs for v in segment.lo]
    hi = [v / cs for v in segment.hi]
    flo, fhi = domain.face_lattice
    candidates = [
        (a, b)
        for a, b in zip(flo.tolist(), fhi.tolist())
        if all(a[k] <= hi[k] and lo[k] <= b[k] for k in range(domain.n))
    ]
    if not candidates:
        return False
    representatives = []
    for k in range(domain.n):
        if lo[k] == hi[k]:
            representatives.append([lo[k]])
            continue
        cuts = {lo[k], hi[k]}
        for a, b in candidates:
            cuts.update(v for v in (Fraction(a[k]), Fraction(b[k])) if lo[k] < v < hi[k])
        ordered = sorted(cuts)
        representatives.append([(p + q) / 2 for p, q in zip(ordered, ordered[1:])])
    for point in product(*representatives):
        if not any(all(a[k] <= point[k] <= b[k] for k in range(domain.n)) for a, b in candidates):
            return False
    return True


class SegmentSpec(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    start: list[int | float | str] = Field(alias="from")
    end: list[int | float | str] = Field(alias="to")


class BoundarySpec(BaseModel):
    segments: list[SegmentSpec]

    @field_validator("segments")
    @classmethod
    def validate_segments(cls, v: list[SegmentSpec]) -> list[SegmentSpec]:
        if not v:
            raise ValueError("Boundary set needs at least one segment")
        return v


BOUNDARY_NAMES = ("corner", "edge", "boundary")


def build_boundary_set(domain: RectilinearDomain, spec: str | dict | BoundarySpec) -> BoundarySet:
    """Named boundary subset (corner, edge, boundary) or explicit segments."""
    cs = domain.cell_size
    flo, fhi = domain.face_lattice
    if isinstance(spec, str) and spec.strip().startswith("{"):
        spec = json.loads(spec)
    if isinstance(spec, str):
        if spec == "corner":
            vertex = min(tuple(int(v) for v in row) for row in flo.tolist())
            point = tuple(cs * v for v in vertex)
            return BoundarySet((Box(point, point),), name="corner")
        if spec == "edge":
            plane = int(flo[:, 0].min())
            on_plane = (flo[:, 0] == plane) & (fhi[:, 0] == plane)
            boxes = tuple(
                Box(tuple(cs * int(v) for v in a), tuple(cs * int(v) for v in b))
                for a, b in zip(flo[on_plane], fhi[on_plane])
            )
            return BoundarySet(boxes, name="edge")
        if spec == "boundary":
            return BoundarySet(domain.faces, name="boundary")
        raise DomainError(f"Unknown boundary set {spec!r}; expected one of {BOUNDARY_NAMES} or JSON")
    if isinstance(spec, dict):
        spec = BoundarySpec.model_validate(spec)
    segments = []
    for seg in spec.segments:
        a, b = as_point(seg.start), as_point(seg.end)
        if len(a) != domain.n or len(b) != domain.n:
            raise DomainError("Segment dimension does not match the domain")
        box = Box(tuple(min(p, q) for p, q in zip(a, b)), tuple(max(p, q) for p, q in zip(a, b)))
        if all(p < q for p, q in zip(box.lo, box.hi)):
            raise DomainError("Boundary segments must be degenerate in at least one axis")
        if not _lies_on_boundary(domain, box):
            raise DomainError(f"Segment {box.to_json()} does not lie on the boundary")
        segments.append(box)
    return BoundarySet(tuple(segments))


# --- Domain families ---


def square(side: Any = 1, n: int = 2) -> RectilinearDomain:
    return RectilinearDomain(parse_rational(side), frozenset({(0,) * int(n)}), name="square")


def l_shape(side: Any = 1) -> RectilinearDomain:
    return RectilinearDomain(parse_rational(side), frozenset({(0, 0), (1, 0), (0, 1)}), name="l_shape")


def slit_square() -> RectilinearDomain:
    cells = frozenset((i, j) for i in range(4) for j in range(4))
    slits = frozenset({(0, (1, 0)), (0, (1, 1))})
    return RectilinearDomain(Fraction(1, 4), cells, slits, name="slit_square")


def rooms_and_corridors(
    k: int = 2,
    widths: Sequence[Any] | None = None,
    corridor_length: Any = "1/2",
    cell_size: Any = None,
) -> RectilinearDomain:
    """Chain of k unit rooms joined by centred corridors of the given widths."""
    k = int(k)
    if k < 1:
        raise DomainError("rooms_and_corridors needs at least one room")
    widths = [parse_rational(w) for w in (widths if widths is not None else ["1/4"] * (k - 1))]
    if len(widths) != k - 1:
        raise DomainError(f"{k} rooms need {k - 1} corridor widths, got {len(widths)}")
    if any(not 0 < w < 1 for w in widths):
        raise DomainError("Corridor widths must lie in (0, 1)")
    length = parse_rational(corridor_length)
    if length <= 0:
        raise DomainError("Corridor length must be positive")
    unit = common_unit(Fraction(1, 2), length, *(w / 2 for w in widths))
    if cell_size is not None:
        cs = parse_rational(cell_size)
        if (unit / cs).denominator != 1:
            raise DomainError(f"cell_size {cs} does not divide the room geometry")
    else:
        cs = unit
    cells = set()

    def fill(x0: Fraction, x1: Fraction, y0: Fraction, y1: Fraction) -> None:
        for i in range(int(x0 / cs), int(x1 / cs)):
            for j in range(int(y0 / cs), int(y1 / cs)):
                cells.add((i, j))

    pitch = 1 + length
    for i in range(k):
        fill(i * pitch, i * pitch + 1, Fraction(0), Fraction(1))
    for i, w in enumerate(widths):
        fill(i * pitch + 1, (i + 1) * pitch, Fraction(1, 2) - w / 2, Fraction(1, 2) + w / 2)
    label = ",".join(str(w) for w in widths)
    return RectilinearDomain(cs, frozenset(cells), name=f"rooms_and_corridors(k={k},widths={label})")


FAMILIES = {
    "square": square,
    "l_shape": l_shape,
    "slit_square": slit_square,
    "rooms_and_corridors": rooms_and_corridors,
}


class DomainSpec(BaseModel):
    family: str | None = None
    params: dict[str, Any] = {}
    cells: list[list[int]] | None = None
    cell_size: int | float | str = 1
    slits: list[tuple[int, list[int]]] = []

    @field_validator("family")
    @classmethod
    def validate_family(cls, v: str | None) -> str | None:
        if v is not None and v not in FAMILIES:
            raise ValueError(f"Unknown domain family: {v}")
        return v

    @model_validator(mode="after")
    def check_one_source(self) -> "DomainSpec":
        if (self.family is None) == (self.cells is None):
            raise ValueError("Give exactly one of 'family' or 'cells'")
        return self


def _read_json(source: str | Path) -> Any:
    try:
        text = source.read_text() if isinstance(source, Path) else source
        return json.loads(text)
    except OSError as exc:
        raise DomainError(f"Cannot read domain file {source}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DomainError(f"Malformed domain JSON: {exc.msg}") from None


def build_domain(spec: DomainSpec | dict | str | Path) -> RectilinearDomain:
    """Validated domain from a family name, a JSON document, or a JSON file."""
    if isinstance(spec, Path):
        spec = _read_json(spec)
    elif isinstance(spec, str):
        text = spec.strip()
        if text.startswith("{"):
            spec = _read_json(text)
        elif text.endswith(".json"):
            spec = _read_json(Path(text))
        else:
            spec = {"family": text}
    if isinstance(spec, dict):
        try:
            spec = DomainSpec.model_validate(spec)
        except ValueError as e:
            raise DomainError(str(e)) from None
    if spec.family is not None:
        try:
            domain = FAMILIES[spec.family](**spec.params)
        except TypeError as e:
            raise DomainError(f"Bad parameters for {spec.family}: {e}") from None
    else:
        domain = RectilinearDomain(
            parse_rational(spec.cell_size),
            frozenset(tuple(c) for c in spec.cells),
            frozenset((axis, tuple(cell)) for axis, cell in spec.slits),
        )
    logger.debug("Built domain %s: %s", domain.name, domain.describe())
    return domain
