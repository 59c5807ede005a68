"""
Hardy-type tree operator and the finite orthogonal decomposition of
zero-mean fields along a tree covering.

Parts are stored as a sparse (nodes x grid cells) matrix of cell averages.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np
from pydantic import BaseModel
from scipy import sparse

from fracpoin.constants import c0, c0_chain, c2, hardy_bound
from fracpoin.covering import TreeCovering, boman_constant
from fracpoin.fields import Field, Grid, GridFrame, bump_field, spike_field, uniform_field
from fracpoin.geometry import BoundarySet

logger = logging.getLogger(__name__)

MEAN_TOLERANCE = 1e-12


class NonZeroMeanError(ValueError):
    """Field mean over the covered region exceeds the tolerance."""


def _parent_matrix(cov: TreeCovering) -> sparse.csr_matrix:
    """P[t, s] = 1 when t is the parent of s."""
    child = np.nonzero(cov.has_transfer)[0]
    return sparse.csr_matrix(
        (np.ones(len(child)), (cov.parents[child], child)), shape=(len(cov), len(cov))
    )


@dataclass(frozen=True, eq=False)
class HardyOperator:
    """Tg = sum over t != root of chi_{B_t} times the mean of |g| over W_t."""

    frame: GridFrame

    @cached_property
    def shadow_volume(self) -> np.ndarray:
        """|W_t| in grid-cell units."""
        return np.asarray(self.frame.shadow_fractions.sum(axis=1)).ravel()

    @cached_property
    def averaging(self) -> sparse.csr_matrix:
        return sparse.diags(1.0 / self.shadow_volume) @ self.frame.shadow_fractions

    def shadow_integrals(self, values: np.ndarray) -> np.ndarray:
        """Integral of |g| over every W_t, in grid-cell units."""
        return self.frame.shadow_fractions @ np.abs(values)

    def averages(self, values: np.ndarray) -> np.ndarray:
        avg = self.averaging @ np.abs(values)
        avg[~self.frame.cov.has_transfer] = 0.0
        return avg

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.frame.transfer_fractions.T @ self.averages(values)


def hardy_apply(cov: TreeCovering, g: Field, frame: GridFrame | None = None) -> Field:
    """Cell averages of Tg on the grid of ``g``."""
    frame = frame or GridFrame.build(g.grid, cov)
    return g.with_values(HardyOperator(frame).apply(g.values), f"T({g.name})")


# --- Norm probe ---


class HardyReport(BaseModel):
    q: float
    trials: int
    weighted: bool
    beta: float
    N: int
    K: float
    C2: float
    bound: float
    max_ratio: float
    exceedances: int
    passed: bool


def _transfer_weight_integrals(frame: GridFrame, weight, q: float) -> np.ndarray:
    """Integral of omega**-q over each B_t (4**n midpoint rule), in grid-cell units."""
    cov = frame.cov
    unit = float(cov.unit)
    n = cov.n
    offsets = np.array(list(product((np.arange(4) + 0.5) / 4, repeat=n)))
    out = np.zeros(len(cov))
    cell_volume = frame.grid.weight
    for t in np.nonzero(cov.has_transfer)[0].tolist():
        lo = cov.b_lo[t] * unit
        hi = cov.b_hi[t] * unit
        points = lo + offsets * (hi - lo)
        volume = float(np.prod(hi - lo))
        w = weight(points) if weight is not None else np.ones(len(points))
        out[t] = float(np.mean(w ** (-q))) * volume / cell_volume
    return out


def hardy_norm_probe(
    cov: TreeCovering,
    grid: Grid,
    q: float,
    trials: int = 200,
    seed: int = 0,
    beta: float = 0.0,
    F: BoundarySet | None = None,
    K=None,
) -> HardyReport:
    """Largest observed ||Tg|| / ||g|| in L^q(omega**-q), omega = d_F**beta, over seeded
    nonnegative probes."""
    if q <= 1:
        raise ValueError(f"q must be > 1, got {q}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    weighted = beta > 0
    if weighted and F is None:
        raise ValueError("Weighted probe needs a boundary set F")
    frame = GridFrame.build(grid, cov)
    op = HardyOperator(frame)
    K = K if K is not None else boman_constant(cov)
    C2 = c2(cov.n, K, beta) if weighted else 1.0

    def weight(points: np.ndarray) -> np.ndarray:
        return F.distance(points) ** beta

    rng = np.random.default_rng(seed)
    families = (uniform_field, spike_field, bump_field)
    transfer = cov.has_transfer
    if not math.isinf(q):
        cell_w = weight(grid.midpoints) ** (-q) if weighted else np.ones(len(grid))
        b_w = _transfer_weight_integrals(frame, weight if weighted else None, q)
    worst = 0.0
    for i in range(trials):
        g = families[i % len(families)](grid, rng).values
        avg = op.averages(g)
        if math.isinf(q):
            num = float(avg[transfer].max()) if transfer.any() else 0.0
            den = float(np.max(np.abs(g)))
        else:
            num = math.fsum((avg[transfer] ** q * b_w[transfer]).tolist()) ** (1 / q)
            den = math.fsum((np.abs(g) ** q * cell_w).tolist()) ** (1 / q)
        if den > 0:
            worst = max(worst, num / den)
    bound = hardy_bound(q, cov.overlap, C2)
    if math.isinf(q):
        exceed = worst > 1.0 + 1e-12
    else:
        exceed = worst > bound
    logger.info("Hardy probe q=%s: max ratio %.6g, bound %.6g", q, worst, bound)
    return HardyReport(
        q=q,
        trials=trials,
        weighted=weighted,
        beta=beta,
        N=cov.overlap,
        K=float(K),
        C2=C2,
        bound=bound,
        max_ratio=worst,
        exceedances=int(exceed),
        passed=not exceed,
    )


# --- Orthogonal decomposition ---


@dataclass(frozen=True, eq=False)
class DecompositionResult:
    frame: GridFrame
    field: Field
    parts: sparse.csr_matrix
    shadow_integrals: np.ndarray
    mean_correction: float

    @property
    def cov(self) -> TreeCovering:
        return self.frame.cov

    @cached_property
    def nonzero_nodes(self) -> list[int]:
        return np.nonzero(np.diff(self.parts.indptr) > 0)[0].tolist()

    def part(self, t: int) -> Field:
        return self.field.with_values(self.parts.getrow(t).toarray().ravel(), f"part-{t}")

    def parts_map(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """t -> (grid positions, cell values) for every nonzero part."""
        out = {}
        for t in self.nonzero_nodes:
            start, stop = self.parts.indptr[t], self.parts.indptr[t + 1]
            out[t] = (self.parts.indices[start:stop].copy(), self.parts.data[start:stop].copy())
        return out

    def to_json(self) -> dict:
        return {
            "mean_correction": self.mean_correction,
            "parts": [
                {"node": t, "cells": cells.tolist(), "values": values.tolist()}
                for t, (cells, values) in self.parts_map().items()
            ],
        }


def center_on_cover(g: Field, frame: GridFrame) -> Field:
    """g minus its mean over the covered region, on covered cells."""
    cover = frame.coverage
    covered = math.fsum(cover.tolist())
    if covered == 0:
        raise ValueError("Covering meets no grid cell")
    mean = math.fsum((g.values * cover).tolist()) / covered
    return g.with_values(np.where(cover > 0, g.values - mean, g.values))


def orthogonal_decompose(cov: TreeCovering, g: Field, frame: GridFrame | None = None) -> DecompositionResult:
    """Split a zero-mean g into parts g_t supported in U_t, each with zero mean.

    With S_t the integral of g over the base cells of the subtree at t,
    g_t = g chi_{V_t} - S_t chi_{B_t}/|B_t| + sum over children s of S_s chi_{B_s}/|B_s|.
    """
    frame = frame or GridFrame.build(g.grid, cov)
    cover = frame.coverage
    weight = g.grid.weight
    total = math.fsum((g.values * cover).tolist()) * weight
    covered = math.fsum(cover.tolist()) * weight
    tolerance = MEAN_TOLERANCE * g.sup() * float(g.grid.domain.volume)
    if abs(total) > tolerance:
        raise NonZeroMeanError(f"Field integral {total:.3e} exceeds tolerance {tolerance:.3e}")
    mean = total / covered if covered > 0 else 0.0
    values = np.where(cover > 0, g.values - mean, g.values)
    if mean:
        logger.info("Subtracted residual mean %.3e before decomposing", mean)

    base = frame.base_fractions
    own = base @ values
    S = own.copy()
    for t in reversed(cov.preorder.tolist()):
        p = cov.parents[t]
        if p >= 0:
            S[p] += S[t]

    bvol = frame.transfer_volume
    coef = np.zeros(len(cov))
    transfer = cov.has_transfer
    coef[transfer] = S[transfer] / bvol[transfer]
    moved = sparse.diags(coef) @ frame.transfer_fractions
    lift = _parent_matrix(cov) - sparse.identity(len(cov), format="csr")
    parts = (base @ sparse.diags(values) + lift @ moved).tocsr()
    parts.eliminate_zeros()
    parts.sort_indices()
    corrected = g.with_values(values)
    logger.info("Decomposition: %d nonzero parts of %d nodes", int(np.sum(np.diff(parts.indptr) > 0)), len(cov))
    return DecompositionResult(frame, corrected, parts, S, mean)


class DecompositionReport(BaseModel):
    nodes: int
    parts: int
    mean_correction: float
    reconstruction: bool
    max_reconstruction_error: float
    support: bool
    zero_mean: bool
    max_relative_mean: float
    pointwise: bool
    worst_pointwise_slack: float
    norm_ratio: float
    C0: float | None
    norm_bound: bool
    offending: dict[str, list[int]]
    passed: bool


def decomposition_constant(cov: TreeCovering, q: float, K: float | None = None) -> float | None:
    """C0 with sum_t ||g_t||_q**q <= C0**q ||g||_q**q; None for q = inf."""
    if math.isinf(q):
        return None
    if cov.kind == "cube":
        return c0_chain(cov.n, q, cov.m)
    return c0(cov.n, q, 0.0, float(boman_constant(cov) if K is None else K))


def verify_decomposition(result: DecompositionResult, q: float = 2.0, K: float | None = None) -> DecompositionReport:
    """Cellwise reconstruction, support, zero-mean and pointwise-bound checks,
    and the observed norm ratio against C0 (K defaults to the covering's own)."""
    frame = result.frame
    cov = frame.cov
    g = result.field.values
    scale = max(result.field.sup(), np.finfo(float).tiny)
    parts = result.parts.tocsr()
    offending: dict[str, list[int]] = {}

    by_cell = parts.tocsc()
    target = g * frame.coverage
    errors = np.empty(len(g))
    for c in range(len(g)):
        start, stop = by_cell.indptr[c], by_cell.indptr[c + 1]
        errors[c] = abs(math.fsum(by_cell.data[start:stop].tolist()) - target[c])
    bad_cells = np.nonzero(errors > MEAN_TOLERANCE * scale)[0]
    if bad_cells.size:
        offending["reconstruction"] = bad_cells.tolist()

    leaked = []
    relative_means = []
    for t in result.nonzero_nodes:
        start, stop = parts.indptr[t], parts.indptr[t + 1]
        cells = parts.indices[start:stop]
        vals = parts.data[start:stop]
        touching = frame.touching_mask(cov.u_lo[t], cov.u_hi[t])[cells]
        if not touching.all():
            leaked.append(t)
        mass = math.fsum(np.abs(vals).tolist())
        relative_means.append(abs(math.fsum(vals.tolist())) / mass if mass > 0 else 0.0)
    if leaked:
        offending["support"] = leaked
    rel = np.array(relative_means) if relative_means else np.zeros(1)
    mean_bad = [t for t, r in zip(result.nonzero_nodes, relative_means) if r > MEAN_TOLERANCE]
    if mean_bad:
        offending["zero_mean"] = mean_bad

    op = HardyOperator(frame)
    shadow_mass = op.shadow_integrals(g)
    bvol = frame.transfer_volume
    coef = np.zeros(len(cov))
    transfer = cov.has_transfer
    coef[transfer] = shadow_mass[transfer] / bvol[transfer]
    spread = sparse.diags(coef) @ frame.transfer_fractions
    allowance = (_parent_matrix(cov) + sparse.identity(len(cov), format="csr")) @ spread
    worst_slack = math.inf
    violating = []
    for t in result.nonzero_nodes:
        start, stop = parts.indptr[t], parts.indptr[t + 1]
        cells = parts.indices[start:stop]
        bound = np.abs(g[cells]) + allowance.getrow(t).toarray().ravel()[cells]
        slack = bound - np.abs(parts.data[start:stop])
        worst_slack = min(worst_slack, float(slack.min()))
        if np.any(slack < -MEAN_TOLERANCE * (scale + bound)):
            violating.append(t)
    if violating:
        offending["pointwise"] = violating

    if math.isinf(q):
        top = float(np.abs(g).max()) if g.size else 0.0
        norm_ratio = float(np.abs(parts.data).max()) / top if top > 0 and parts.nnz else 0.0
    else:
        w = frame.grid.weight
        part_norm = math.fsum((np.abs(parts.data) ** q).tolist()) * w
        field_norm = math.fsum((np.abs(g) ** q).tolist()) * w
        norm_ratio = (part_norm / field_norm) ** (1 / q) if field_norm > 0 else 0.0
    C0 = decomposition_constant(cov, q, K)
    norm_bound = C0 is None or norm_ratio <= C0

    report = DecompositionReport(
        nodes=len(cov),
        parts=len(result.nonzero_nodes),
        mean_correction=result.mean_correction,
        reconstruction=bad_cells.size == 0,
        max_reconstruction_error=float(errors.max()) if errors.size else 0.0,
        support=not leaked,
        zero_mean=not mean_bad,
        max_relative_mean=float(rel.max()),
        pointwise=not violating,
        worst_pointwise_slack=worst_slack if math.isfinite(worst_slack) else 0.0,
        norm_ratio=norm_ratio,
        C0=C0,
        norm_bound=norm_bound,
        offending=offending,
        passed=not offending and norm_bound,
    )
    if not report.passed:
        logger.warning("Decomposition verification failed: %s", sorted(offending))
    return report
