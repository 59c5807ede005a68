"""
Empirical lower bounds on the best Poincaré constant of a grid.

Every estimate is the ratio of an actual grid field, so it never exceeds the
true constant of the discretised problem; it says nothing about how sharp the
closed-form constants are.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Sequence

import numpy as np
from pydantic import BaseModel
from scipy import linalg

from fracpoin.constants import breakdown
from fracpoin.covering import john_boman_constant
from fracpoin.fields import Field, Grid, bump_field, chebyshev_field, random_field
from fracpoin.functional import KernelSpec, PairQuadrature, boundary_weight
from fracpoin.geometry import BoundarySet, RectilinearDomain, rooms_and_corridors

logger = logging.getLogger(__name__)

METHODS = ("rayleigh", "random_search")
RESIDUAL_TOLERANCE = 1e-8


class SingularFormError(ValueError):
    """The energy form is singular beyond the constants."""

    def __init__(self, message: str, null_vectors: np.ndarray) -> None:
        super().__init__(message)
        self.null_vectors = null_vectors


@dataclass(frozen=True, eq=False)
class EstimateResult:
    method: str
    estimate: float
    certificate: Field
    iterations: int
    residual: float | None = None
    lower_bound: bool = True

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "estimate": self.estimate,
            "lower_bound": self.lower_bound,
            "iterations": self.iterations,
            "residual": self.residual,
            "certificate": self.certificate.to_json(),
        }


def _mass_weights(grid: Grid, kernel: KernelSpec, p: float) -> np.ndarray:
    return boundary_weight(grid, kernel.beta, kernel.F, p) * grid.weight


def rayleigh_estimate(
    grid: Grid,
    kernel: KernelSpec,
    diagonal_depth: int | None = None,
    threads: int | None = None,
    max_iterations: int = 50,
) -> EstimateResult:
    """sqrt of the top eigenvalue of the pencil (mass form, energy form) at p = 2."""
    quad = PairQuadrature(grid, kernel, 2.0, diagonal_depth=diagonal_depth, threads=threads)
    weights = quad.pair_weights()
    size = len(grid)
    if size < 2:
        raise ValueError("Rayleigh estimate needs at least two grid cells")
    w = _mass_weights(grid, kernel, 2.0)
    mass = np.diag(w) - np.outer(w, w) / w.sum()
    energy = np.diag(weights.sum(axis=1)) + np.diag(weights.sum(axis=0)) - weights - weights.T

    # Both forms vanish on constants; restrict to their orthogonal complement
    Z = linalg.null_space(np.ones((1, size)))
    A = Z.T @ mass @ Z
    B = Z.T @ energy @ Z
    A = (A + A.T) / 2
    B = (B + B.T) / 2
    vals, vecs = linalg.eigh(B)
    if vals[0] <= 1e-12 * max(abs(vals[-1]), 1e-300):
        null = Z @ vecs[:, vals <= 1e-12 * max(abs(vals[-1]), 1e-300)]
        raise SingularFormError(f"Energy form has {null.shape[1]} null directions beyond constants", null)
    try:
        linalg.cho_factor(B)
    except linalg.LinAlgError as exc:
        raise SingularFormError("Energy form is not positive definite", Z @ vecs[:, :1]) from exc

    lam_arr, x = linalg.eigh(A, B, subset_by_index=[size - 2, size - 2])
    lam = float(lam_arr[0])
    x = x[:, 0] / np.linalg.norm(x[:, 0])

    # Shifted inverse iteration polishes the eigenpair
    lu = linalg.lu_factor(A - lam * (1 + 1e-6) * B)
    residual = float(np.linalg.norm(A @ x - lam * (B @ x)))
    iterations = 0
    while residual > RESIDUAL_TOLERANCE and iterations < max_iterations:
        x = linalg.lu_solve(lu, B @ x)
        x /= np.linalg.norm(x)
        lam = float(x @ A @ x) / float(x @ B @ x)
        residual = float(np.linalg.norm(A @ x - lam * (B @ x)))
        iterations += 1
    if residual > RESIDUAL_TOLERANCE:
        logger.warning("Inverse iteration stopped at residual %.3g after %d steps", residual, iterations)
    logger.info("Rayleigh estimate %.6g (residual %.3g, %d polish steps)", math.sqrt(lam), residual, iterations)
    certificate = Field(grid, Z @ x, "rayleigh-certificate")
    return EstimateResult("rayleigh", math.sqrt(max(lam, 0.0)), certificate, iterations, residual)


def random_search_estimate(
    grid: Grid,
    kernel: KernelSpec,
    p: float,
    budget: int = 200,
    seed: int = 0,
    diagonal_depth: int | None = None,
    threads: int | None = None,
) -> EstimateResult:
    """Best ratio over seeded band-limited fields, refined by coordinate-wise perturbation."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    quad = PairQuadrature(grid, kernel, p, diagonal_depth=diagonal_depth, threads=threads)
    weights = quad.pair_weights()
    w = _mass_weights(grid, kernel, p)

    def score(values: np.ndarray) -> float:
        c = float(np.sum(w * values) / np.sum(w))
        lhs = float(np.sum(w * np.abs(values - c) ** p)) ** (1 / p)
        rhs = float(np.sum(weights * np.abs(values[:, None] - values[None, :]) ** p)) ** (1 / p)
        return lhs / rhs if rhs > 0 else 0.0

    rng = np.random.default_rng(seed)
    best_values = None
    best = -1.0
    for i in range(budget):
        kind = i % 3
        if kind == 0:
            f = random_field(grid, rng)
        elif kind == 1:
            f = bump_field(grid, rng)
        else:
            f = chebyshev_field(grid, rng, 3)
        value = score(f.values)
        if value > best:
            best, best_values = value, f.values.copy()

    step = float(np.std(best_values)) or 1.0
    failures = 0
    for _ in range(budget):
        candidate = best_values.copy()
        candidate[rng.integers(len(candidate))] += step * rng.choice((-1.0, 1.0))
        value = score(candidate)
        if value > best:
            best, best_values = value, candidate
            failures = 0
        else:
            failures += 1
            if failures >= 20:
                step /= 2
                failures = 0
    logger.info("Random search estimate %.6g over budget %d", best, budget)
    return EstimateResult("random_search", best, Field(grid, best_values, "search-certificate"), 2 * budget)


def sharp_constant_estimate(
    grid: Grid,
    p: float,
    kernel: KernelSpec,
    method: str = "rayleigh",
    budget: int = 200,
    seed: int = 0,
    diagonal_depth: int | None = None,
    threads: int | None = None,
) -> EstimateResult:
    if method not in METHODS:
        raise ValueError(f"Unknown method {method!r}; expected one of {METHODS}")
    if method == "rayleigh":
        if p != 2:
            raise ValueError(f"The rayleigh method needs p = 2, got {p}")
        return rayleigh_estimate(grid, kernel, diagonal_depth, threads)
    return random_search_estimate(grid, kernel, p, budget, seed, diagonal_depth, threads)


class SweepRow(BaseModel):
    tau: float
    theoretical: float
    empirical: float
    slack: float


def tau_sweep(
    grid: Grid,
    p: float,
    s: float,
    beta: float,
    F: BoundarySet | None,
    taus: Sequence[float],
    K: Any = None,
    generation: int = 6,
    method: str = "rayleigh",
    budget: int = 200,
    seed: int = 0,
    diagonal_depth: int | None = None,
) -> list[SweepRow]:
    """Theoretical and empirical constants of the weighted kernel per tau."""
    if K is None:
        K = john_boman_constant(grid.domain, generation)
    rows = []
    for tau in taus:
        kernel = KernelSpec.weighted_main(s, tau, beta, F)
        theoretical = breakdown(grid.n, p, s, tau, beta, K).total
        empirical = sharp_constant_estimate(grid, p, kernel, method, budget, seed, diagonal_depth).estimate
        slack = theoretical / empirical if empirical > 0 else math.inf
        rows.append(SweepRow(tau=tau, theoretical=theoretical, empirical=empirical, slack=slack))
        logger.info("tau %.4g: theoretical %.6g, empirical %.6g", tau, theoretical, empirical)
    return rows


class RoomsRow(BaseModel):
    j: int
    width: str
    cells: int
    estimate: float
    growth: float


def rooms_probe(
    js: Sequence[int] = (1, 2, 3),
    k: int = 2,
    s: float = 0.5,
    tau: float = 0.5,
    corridor_length: Any = "1/2",
    min_cells: int = 1,
    diagonal_depth: int | None = None,
) -> list[RoomsRow]:
    """Rayleigh estimates of the tau-ball kernel on rooms joined by corridors of width 2**-j.

    All domains share one grid step so the estimates differ only through the geometry.
    Exploratory: growth across j hints that no uniform constant exists.
    """
    if not js:
        raise ValueError("rooms_probe needs at least one corridor exponent")
    domains: list[tuple[int, Fraction, RectilinearDomain]] = []
    for j in js:
        width = Fraction(1, 2**j)
        domains.append((j, width, rooms_and_corridors(k, [width] * (k - 1), corridor_length)))
    h = min(domain.cell_size for _, _, domain in domains) / min_cells
    kernel = KernelSpec.tau_ball(s, tau)
    rows = []
    first = None
    for j, width, domain in domains:
        grid = Grid(domain, int(domain.cell_size / h))
        estimate = rayleigh_estimate(grid, kernel, diagonal_depth).estimate
        first = estimate if first is None else first
        rows.append(RoomsRow(j=j, width=str(width), cells=len(grid), estimate=estimate, growth=estimate / first))
    return rows
