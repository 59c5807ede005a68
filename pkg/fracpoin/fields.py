"""
Piecewise-constant fields on a uniform grid over a rectilinear domain.

A :class:`Grid` splits every domain cell into ``subdivisions**n`` equal grid
cells of side ``h``. Field values are cell averages; integrals are sums of
value times ``h**n``. :class:`GridFrame` places a grid and a tree covering on a
common integer lattice so overlaps between grid cells and covering boxes are
computed exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import product
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import BaseModel
from scipy import sparse

from fracpoin import settings
from fracpoin.covering import TreeCovering
from fracpoin.geometry import ATOM_LIMIT, RectilinearDomain, atom_volumes, breakpoints, common_unit, cover_counts

logger = logging.getLogger(__name__)


class IncompatibleGridError(ValueError):
    """Grid and covering cannot be placed on one domain."""


@dataclass(frozen=True, eq=False)
class Grid:
    domain: RectilinearDomain
    subdivisions: int

    def __post_init__(self) -> None:
        if self.subdivisions < 1:
            raise ValueError(f"subdivisions must be >= 1, got {self.subdivisions}")

    @classmethod
    def from_depth(cls, domain: RectilinearDomain, depth: int | None = None) -> Grid:
        depth = settings.DEPTH if depth is None else depth
        if depth < 0:
            raise ValueError(f"Grid depth must be >= 0, got {depth}")
        return cls(domain, 2**depth)

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def h(self) -> Fraction:
        return self.domain.cell_size / self.subdivisions

    @property
    def weight(self) -> float:
        return float(self.h) ** self.n

    @cached_property
    def _dense(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.domain.lattice_bounds
        sub = self.subdivisions
        mask = np.zeros(tuple(int(v) for v in (hi - lo) * sub), dtype=bool)
        for cell in self.domain.cells:
            start = (np.array(cell) - lo) * sub
            mask[tuple(slice(int(a), int(a) + sub) for a in start)] = True
        return mask, lo * sub

    @cached_property
    def index(self) -> np.ndarray:
        """Grid lattice index (units of h) of every cell, in row-major order."""
        mask, origin = self._dense
        return np.argwhere(mask).astype(np.int64) + origin

    @cached_property
    def position_map(self) -> np.ndarray:
        mask, _ = self._dense
        positions = np.full(mask.shape, -1, dtype=np.int64)
        positions[mask] = np.arange(int(mask.sum()))
        return positions

    def positions(self, index: np.ndarray) -> np.ndarray:
        """Position of each grid index row, -1 when not a grid cell."""
        _, origin = self._dense
        rel = np.atleast_2d(index) - origin
        shape = np.array(self.position_map.shape)
        inside = np.all((rel >= 0) & (rel < shape), axis=1)
        out = np.full(len(rel), -1, dtype=np.int64)
        out[inside] = self.position_map[tuple(rel[inside].T)]
        return out

    def __len__(self) -> int:
        return len(self.index)

    @cached_property
    def midpoints(self) -> np.ndarray:
        return (self.index + 0.5) * float(self.h)

    @cached_property
    def midpoint_distance(self) -> np.ndarray:
        return self.domain.distance(self.midpoints)

    @property
    def volume(self) -> Fraction:
        return len(self) * self.h**self.n


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray
    name: str = "field"

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float).ravel()
        if values.shape != (len(self.grid),):
            raise ValueError(f"Field has {values.size} values for {len(self.grid)} grid cells")
        if not np.all(np.isfinite(values)):
            raise ValueError("Field values must be finite")
        object.__setattr__(self, "values", values)

    def integral(self) -> float:
        return math.fsum(self.values.tolist()) * self.grid.weight

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def with_values(self, values: np.ndarray, name: str | None = None) -> Field:
        return Field(self.grid, values, name or self.name)

    def scaled(self, factor: float) -> Field:
        return self.with_values(self.values * factor)

    def shifted(self, constant: float) -> Field:
        return self.with_values(self.values + constant)

    def to_json(self) -> dict:
        return {"name": self.name, "subdivisions": self.grid.subdivisions, "values": self.values.tolist()}


# --- Field families ---


def _unit_coordinates(grid: Grid) -> np.ndarray:
    """Midpoints mapped affinely onto [-1, 1]**n over the domain's bounding box."""
    bounds = grid.domain.bounds
    lo = np.array([float(v) for v in bounds.lo])
    hi = np.array([float(v) for v in bounds.hi])
    return 2 * (grid.midpoints - lo) / (hi - lo) - 1


def constant_field(grid: Grid, c: float) -> Field:
    return Field(grid, np.full(len(grid), float(c)), f"constant:{c}")


def coordinate_field(grid: Grid, axis: int) -> Field:
    if not 0 <= axis < grid.n:
        raise ValueError(f"Coordinate axis {axis} out of range")
    return Field(grid, grid.midpoints[:, axis].copy(), f"coordinate:{axis}")


def random_field(grid: Grid, rng: np.random.Generator, modes: int = 4, name: str = "random") -> Field:
    """Band-limited Fourier sum with decaying seeded coefficients."""
    x = (_unit_coordinates(grid) + 1) / 2
    values = np.zeros(len(grid))
    for freq in product(range(modes + 1), repeat=grid.n):
        if not any(freq):
            continue
        amplitude = rng.standard_normal() / (1 + sum(f * f for f in freq))
        phase = rng.uniform(0, 2 * np.pi)
        values += amplitude * np.cos(np.pi * (x @ np.array(freq, dtype=float)) + phase)
    return Field(grid, values, name)


def bump_field(grid: Grid, rng: np.random.Generator, name: str = "bump") -> Field:
    """Gaussian bump centred at a random grid midpoint."""
    center = grid.midpoints[rng.integers(len(grid))]
    width = rng.uniform(0.1, 0.3) * grid.domain.diameter
    r2 = np.sum((grid.midpoints - center) ** 2, axis=1)
    return Field(grid, np.exp(-r2 / (2 * width * width)), name)


def chebyshev_field(grid: Grid, rng: np.random.Generator, degree: int, name: str | None = None) -> Field:
    """Tensor Chebyshev polynomial with total degree <= ``degree`` and seeded coefficients."""
    x = _unit_coordinates(grid)
    vander = [np.polynomial.chebyshev.chebvander(x[:, k], degree) for k in range(grid.n)]
    values = np.zeros(len(grid))
    for powers in product(range(degree + 1), repeat=grid.n):
        if sum(powers) > degree:
            continue
        term = np.ones(len(grid))
        for k, p in enumerate(powers):
            term = term * vander[k][:, p]
        values += rng.standard_normal() * term
    return Field(grid, values, name or f"chebyshev:{degree}")


def uniform_field(grid: Grid, rng: np.random.Generator, name: str = "uniform") -> Field:
    """Nonnegative i.i.d. uniform cell values."""
    return Field(grid, rng.random(len(grid)), name)


def spike_field(grid: Grid, rng: np.random.Generator, cells: int = 3, name: str = "spike") -> Field:
    """Nonnegative field supported on a few random cells."""
    values = np.zeros(len(grid))
    chosen = rng.choice(len(grid), size=min(cells, len(grid)), replace=False)
    values[chosen] = rng.uniform(0.5, 1.5, size=len(chosen))
    return Field(grid, values, name)


FAMILIES = ("constant", "coordinate", "random", "bump", "chebyshev", "uniform", "spike")


def make_field(grid: Grid, spec: str, rng: np.random.Generator, name: str | None = None) -> Field:
    """One field from ``family[:arg]``, e.g. ``constant:5``, ``coordinate:0``, ``chebyshev:3``."""
    family, _, arg = spec.partition(":")
    if family == "constant":
        return constant_field(grid, float(arg or 1))
    if family == "coordinate":
        return coordinate_field(grid, int(arg or 0))
    if family == "random":
        return random_field(grid, rng, name=name or "random")
    if family == "bump":
        return bump_field(grid, rng, name=name or "bump")
    if family == "chebyshev":
        return chebyshev_field(grid, rng, int(arg or 3), name=name)
    if family == "uniform":
        return uniform_field(grid, rng, name=name or "uniform")
    if family == "spike":
        return spike_field(grid, rng, name=name or "spike")
    raise ValueError(f"Unknown field family {family!r}; expected one of {FAMILIES}")


class FieldDocument(BaseModel):
    values: list[float]
    name: str | None = None


def _read_document(path: str | Path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ValueError(f"Cannot read field file {path}: {exc.strerror}") from None


def _document_field(grid: Grid, text: str, default_name: str) -> Field:
    doc = FieldDocument.model_validate_json(text)
    return Field(grid, np.array(doc.values, dtype=float), doc.name or default_name)


def field_batch(grid: Grid, spec: str, seed: int) -> list[Field]:
    """Fields named by ``family:count`` (random, bump, uniform, spike), a single
    deterministic family, or a JSON grid file / document with ``values``."""
    text = spec.strip()
    if text.startswith("{"):
        return [_document_field(grid, text, "json")]
    if text.endswith(".json"):
        return [_document_field(grid, _read_document(text), "json")]
    rng = np.random.default_rng(seed)
    family, _, arg = text.partition(":")
    if family in ("random", "bump", "uniform", "spike"):
        count = int(arg or 1)
        if count < 1:
            raise ValueError("Field count must be >= 1")
        return [make_field(grid, family, rng, name=f"{family}-{i}") for i in range(count)]
    return [make_field(grid, text, rng)]


def load_field(grid: Grid, path: str | Path) -> Field:
    return _document_field(grid, _read_document(path), Path(path).stem)


# --- Grid and covering on one lattice ---


@dataclass(frozen=True, eq=False)
class GridFrame:
    """A grid and a covering expressed on a shared integer lattice ``unit``."""

    grid: Grid
    cov: TreeCovering
    unit: Fraction
    grid_scale: int
    cov_scale: int

    @classmethod
    def build(cls, grid: Grid, cov: TreeCovering) -> GridFrame:
        if grid.n != cov.n:
            raise IncompatibleGridError(f"Grid dimension {grid.n} differs from covering dimension {cov.n}")
        unit = common_unit(grid.h, cov.unit)
        frame = cls(grid, cov, unit, int(grid.h / unit), int(cov.unit / unit))
        missing = np.nonzero(frame.base_lattice_volume != cov.v_lattice_volume * frame.cov_scale**cov.n)[0]
        if missing.size:
            raise IncompatibleGridError(f"Base cells {missing[:5].tolist()} extend outside the grid domain")
        logger.debug("Grid frame: unit %s, grid scale %d, covering scale %d", unit, frame.grid_scale, frame.cov_scale)
        return frame

    def _axis_pieces(self, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
        g = self.grid_scale
        ids = np.arange(lo // g, -((-hi) // g), dtype=np.int64)
        length = np.minimum(hi, (ids + 1) * g) - np.maximum(lo, ids * g)
        keep = length > 0
        return ids[keep], length[keep]

    def box_pieces(self, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Grid positions overlapping the covering-lattice box lo..hi, with overlap volumes
        in frame lattice units."""
        s = self.cov_scale
        per_axis = [self._axis_pieces(int(a) * s, int(b) * s) for a, b in zip(lo, hi)]
        if any(len(ids) == 0 for ids, _ in per_axis):
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        mesh = np.meshgrid(*[ids for ids, _ in per_axis], indexing="ij")
        index = np.stack([m.ravel() for m in mesh], axis=1)
        lengths = np.meshgrid(*[length for _, length in per_axis], indexing="ij")
        volume = np.prod(np.stack([piece.ravel() for piece in lengths], axis=1), axis=1)
        positions = self.grid.positions(index)
        keep = positions >= 0
        return positions[keep], volume[keep]

    def fractions_matrix(self, lo: np.ndarray, hi: np.ndarray, rows: Sequence[int] | None = None) -> sparse.csr_matrix:
        """Sparse (boxes x grid cells) matrix of the fraction of each cell inside each box."""
        rows = range(len(lo)) if rows is None else rows
        data, r_idx, c_idx = [], [], []
        cell_volume = self.grid_scale**self.grid.n
        for t in rows:
            positions, volume = self.box_pieces(lo[t], hi[t])
            r_idx.append(np.full(len(positions), t, dtype=np.int64))
            c_idx.append(positions)
            data.append(volume / cell_volume)
        return _csr(data, r_idx, c_idx, (len(lo), len(self.grid)))

    @cached_property
    def base_fractions(self) -> sparse.csr_matrix:
        return self.fractions_matrix(self.cov.v_lo, self.cov.v_hi)

    @cached_property
    def base_lattice_volume(self) -> np.ndarray:
        return np.array(
            [int(self.box_pieces(self.cov.v_lo[t], self.cov.v_hi[t])[1].sum()) for t in range(len(self.cov))],
            dtype=np.int64,
        )

    @cached_property
    def transfer_fractions(self) -> sparse.csr_matrix:
        rows = np.nonzero(self.cov.has_transfer)[0].tolist()
        return self.fractions_matrix(self.cov.b_lo, self.cov.b_hi, rows)

    @property
    def transfer_volume(self) -> np.ndarray:
        """|B_t| in units of grid-cell volume (zero at the root)."""
        vol = self.cov.b_lattice_volume * self.cov_scale**self.grid.n / self.grid_scale**self.grid.n
        return np.where(self.cov.has_transfer, vol, 0.0)

    @cached_property
    def coverage(self) -> np.ndarray:
        """Fraction of every grid cell lying in some base cell V_t."""
        return np.asarray(self.base_fractions.sum(axis=0)).ravel()

    def shadow_pieces(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Grid positions meeting W_t and the measure of W_t in each, in frame lattice units."""
        desc = self.cov.descendants(t)
        s = self.cov_scale
        lo, hi = self.cov.u_lo[desc] * s, self.cov.u_hi[desc] * s
        totals = _cell_volumes(lo, hi, self.grid_scale)
        if not totals:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        index = np.array(list(totals.keys()), dtype=np.int64)
        volume = np.array(list(totals.values()), dtype=np.int64)
        positions = self.grid.positions(index)
        keep = positions >= 0
        if not keep.all():
            raise IncompatibleGridError(f"Shadow of node {t} leaves the grid domain")
        order = np.argsort(positions)
        return positions[order], volume[order]

    @cached_property
    def shadow_fractions(self) -> sparse.csr_matrix:
        """Sparse (nodes x grid cells) matrix of |W_t ∩ cell| / h**n."""
        data, r_idx, c_idx = [], [], []
        cell_volume = self.grid_scale**self.grid.n
        for t in range(len(self.cov)):
            positions, volume = self.shadow_pieces(t)
            r_idx.append(np.full(len(positions), t, dtype=np.int64))
            c_idx.append(positions)
            data.append(volume / cell_volume)
        return _csr(data, r_idx, c_idx, (len(self.cov), len(self.grid)))

    def midpoint_mask(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Grid cells whose midpoint lies in the open covering-lattice box lo..hi."""
        mid2 = (2 * self.grid.index + 1) * self.grid_scale
        lo2 = 2 * np.asarray(lo) * self.cov_scale
        hi2 = 2 * np.asarray(hi) * self.cov_scale
        return np.all((mid2 > lo2) & (mid2 < hi2), axis=1)

    def touching_mask(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Grid cells overlapping the box lo..hi with positive measure."""
        g = self.grid_scale
        cell_lo = self.grid.index * g
        return np.all((cell_lo < np.asarray(hi) * self.cov_scale) & (cell_lo + g > np.asarray(lo) * self.cov_scale), axis=1)


def _csr(data, rows, cols, shape) -> sparse.csr_matrix:
    if not data:
        return sparse.csr_matrix(shape)
    return sparse.csr_matrix(
        (np.concatenate(data).astype(float), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    )


def _cell_volumes(lo: np.ndarray, hi: np.ndarray, g: int) -> dict[tuple[int, ...], int]:
    """Measure of the union of boxes inside each grid cell of side g (integer lattice)."""
    n = lo.shape[1]
    box_lo = lo.min(axis=0)
    box_hi = hi.max(axis=0)
    lines = [np.arange((a // g) * g, -((-b) // g) * g + 1, g, dtype=np.int64) for a, b in zip(box_lo, box_hi)]
    coords = breakpoints((lo, hi), extra=lines)
    totals: dict[tuple[int, ...], int] = {}
    if math.prod(len(c) - 1 for c in coords) > ATOM_LIMIT and len(lines[0]) > 2:
        for a, b in zip(lines[0][:-1].tolist(), lines[0][1:].tolist()):
            on = (lo[:, 0] < b) & (hi[:, 0] > a)
            if not on.any():
                continue
            clip_lo, clip_hi = lo[on].copy(), hi[on].copy()
            clip_lo[:, 0] = np.maximum(clip_lo[:, 0], a)
            clip_hi[:, 0] = np.minimum(clip_hi[:, 0], b)
            for key, value in _cell_volumes(clip_lo, clip_hi, g).items():
                totals[key] = totals.get(key, 0) + value
        return totals
    covered = cover_counts(coords, lo, hi) > 0
    volumes = atom_volumes(coords)
    atom_cell = np.meshgrid(*[c[:-1] // g for c in coords], indexing="ij")
    keys = np.stack([a[covered] for a in atom_cell], axis=1)
    weights = volumes[covered]
    if keys.size == 0:
        return totals
    unique, inverse = np.unique(keys, axis=0, return_inverse=True)
    exact = np.zeros(len(unique), dtype=np.int64)
    np.add.at(exact, inverse.ravel(), weights)
    for row, value in zip(unique.tolist(), exact.tolist()):
        totals[tuple(row)] = value
    return totals
