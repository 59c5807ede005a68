"""
Weighted L^p norms, weighted averages and Gagliardo-type double integrals of
grid fields, and direct checks of the fractional Poincaré inequalities.

Double integrals run over ordered pairs of grid cells. Pairs whose closures
are disjoint use the midpoint rule; touching pairs use a precomputed
recursive-subdivision template, and the self-pair contributes nothing
because fields are constant on each cell.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from itertools import product
from typing import Any, Sequence

import numpy as np
from pydantic import BaseModel

from fracpoin import settings
from fracpoin.constants import cube_side, inequality_constant
from fracpoin.covering import TreeCovering, boman_constant, cube_tree_covering
from fracpoin.fields import Field, Grid, GridFrame, field_batch
from fracpoin.geometry import BoundarySet, Cube, parse_rational

logger = logging.getLogger(__name__)

KERNELS = ("classical", "tau_ball", "weighted_main", "radial", "cube_ball")
RHO_FAMILIES = ("power", "logarithmic", "plateau")

# Entries (rows x columns x n) of one row block of the pair quadrature
BLOCK_ENTRIES = 2**21
# Pair matrices up to this many entries are kept between energy evaluations
CACHE_ENTRIES = 2**22


def _rho(family: str, r: np.ndarray, s: float, cap: float) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if family == "power":
        return r**s
    if family == "logarithmic":
        with np.errstate(divide="ignore"):
            return r**s / (1 + np.maximum(np.log(1 / r), 0.0))
    if family == "plateau":
        return np.minimum(r**s, cap)
    raise ValueError(f"Unknown rho family {family!r}; expected one of {RHO_FAMILIES}")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel mu(x, y) = prefactor(x) * chi(|x - y| < radius(x)) * singular(|x - y|)."""

    kind: str
    s: float
    tau: float | None = None
    beta: float = 0.0
    F: BoundarySet | None = None
    rho: str = "power"
    cap: float = 1.0
    radius: Fraction | None = None

    def __post_init__(self) -> None:
        if self.kind not in KERNELS:
            raise ValueError(f"Unknown kernel {self.kind!r}; expected one of {KERNELS}")
        if not 0 < self.s < 1:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if self.kind in ("tau_ball", "weighted_main"):
            if self.tau is None or not 0 < self.tau < 1:
                raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.beta > 0 and self.F is None:
            raise ValueError("A positive beta needs a boundary set F")
        if self.beta > 0 and self.kind not in ("weighted_main", "radial"):
            raise ValueError(f"The {self.kind} kernel carries no boundary weight")
        if self.kind == "cube_ball":
            if self.radius is None:
                raise ValueError("cube_ball kernel needs a radius")
            object.__setattr__(self, "radius", parse_rational(self.radius))
            if self.radius <= 0:
                raise ValueError(f"radius must be positive, got {self.radius}")
        if self.kind == "radial":
            if self.cap <= 0:
                raise ValueError(f"Plateau cap must be positive, got {self.cap}")
            grid = np.geomspace(1e-6, 1e2, 1000)
            values = _rho(self.rho, grid, self.s, self.cap)
            if not (np.all(values > 0) and np.all(np.diff(values) >= 0)):
                raise ValueError(f"rho family {self.rho!r} is not positive and nondecreasing")

    @classmethod
    def classical(cls, s: float) -> KernelSpec:
        return cls("classical", s)

    @classmethod
    def tau_ball(cls, s: float, tau: float) -> KernelSpec:
        return cls("tau_ball", s, tau=tau)

    @classmethod
    def weighted_main(cls, s: float, tau: float, beta: float = 0.0, F: BoundarySet | None = None) -> KernelSpec:
        return cls("weighted_main", s, tau=tau, beta=beta, F=F)

    @classmethod
    def radial(
        cls, s: float, rho: str = "power", beta: float = 0.0, F: BoundarySet | None = None, cap: float = 1.0
    ) -> KernelSpec:
        return cls("radial", s, beta=beta, F=F, rho=rho, cap=cap)

    @classmethod
    def cube_ball(cls, s: float, radius: Any) -> KernelSpec:
        return cls("cube_ball", s, radius=radius)

    @property
    def symmetric(self) -> bool:
        return self.kind in ("classical", "cube_ball")

    @property
    def radius_value(self) -> float:
        return float(self.radius)

    @property
    def label(self) -> str:
        if self.kind == "radial":
            return f"radial:{self.rho}"
        return self.kind

    def rho_value(self, r: np.ndarray) -> np.ndarray:
        return _rho(self.rho, r, self.s, self.cap)

    def prefactor(self, d: np.ndarray, dF: np.ndarray | None, p: float) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        weight = np.asarray(dF, dtype=float) ** (p * self.beta) if self.beta > 0 else np.ones_like(d)
        if self.kind == "weighted_main":
            return d ** (p * self.s) * weight
        if self.kind == "radial":
            return self.rho_value(2 * d) ** p * weight
        return np.ones_like(d)

    def ball_radius(self, d: np.ndarray) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        if self.kind == "classical":
            return np.full_like(d, np.inf)
        if self.kind == "cube_ball":
            return np.full_like(d, self.radius_value)
        if self.kind == "radial":
            return d.copy()
        return self.tau * d

    def singular(self, r: np.ndarray, n: int, p: float) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == "radial":
            return 1.0 / (r**n * self.rho_value(r) ** p)
        return r ** (-(n + self.s * p))

    def density(self, x: np.ndarray, y: np.ndarray, d: np.ndarray, dF: np.ndarray | None, p: float) -> np.ndarray:
        """mu(x, y) for paired rows of x and y with d = d(x), dF = d_F(x)."""
        x = np.atleast_2d(x)
        r = np.linalg.norm(np.atleast_2d(y) - x, axis=1)
        inside = r < self.ball_radius(d)
        with np.errstate(divide="ignore"):
            sing = self.singular(np.where(r > 0, r, np.inf), x.shape[1], p)
        return np.where(inside, self.prefactor(d, dF, p) * sing, 0.0)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "s": self.s,
            "tau": self.tau,
            "beta": self.beta,
            "F": self.F.name if self.F is not None else None,
            "rho": self.rho if self.kind == "radial" else None,
            "radius": str(self.radius) if self.radius is not None else None,
        }


@lru_cache(maxsize=None)
def touching_template(delta: tuple[int, ...], depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Sub-pair distances and weights for cells 0 and ``delta`` (grid units).

    Sub-pairs whose closures are disjoint are integrated by the midpoint rule;
    the others are split into 4**n sub-pairs until ``depth``. Identical
    sub-pairs at the finest level contribute nothing. Weights are fractions
    of the cell-pair volume h**(2n).
    """
    n = len(delta)
    corners = np.array(list(product((0, 1), repeat=n)), dtype=float)
    distances: list[float] = []
    weights: list[float] = []
    pending = [(np.zeros(n), np.array(delta, dtype=float))]
    size = 1.0
    for _ in range(depth):
        half = size / 2
        nxt = []
        for x, y in pending:
            for a in x + corners * half:
                for b in y + corners * half:
                    if np.all(np.abs(a - b) <= half):
                        nxt.append((a, b))
                    else:
                        distances.append(float(np.linalg.norm(b - a)))
                        weights.append(half ** (2 * n))
        pending = nxt
        size = half
    for x, y in pending:
        if np.array_equal(x, y):
            continue
        distances.append(float(np.linalg.norm(y - x)))
        weights.append(size ** (2 * n))
    order = np.argsort(distances, kind="stable")
    return np.array(distances)[order], np.array(weights)[order]


class PairQuadrature:
    """Cell-pair weights K_ij ~ integral over cell_i x cell_j of mu, restricted to ``mask`` cells."""

    def __init__(
        self,
        grid: Grid,
        kernel: KernelSpec,
        p: float,
        mask: np.ndarray | None = None,
        diagonal_depth: int | None = None,
        threads: int | None = None,
    ) -> None:
        if p <= 1:
            raise ValueError(f"p must be > 1, got {p}")
        self.grid = grid
        self.kernel = kernel
        self.p = p
        self.diagonal_depth = settings.DIAGONAL_DEPTH if diagonal_depth is None else diagonal_depth
        if self.diagonal_depth < 0:
            raise ValueError(f"diagonal depth must be >= 0, got {self.diagonal_depth}")
        self.threads = settings.THREADS if threads is None else threads
        self.cells = np.arange(len(grid)) if mask is None else np.nonzero(mask)[0]
        self.n = grid.n
        self.h = float(grid.h)
        self.mids = grid.midpoints[self.cells]
        self.idx = grid.index[self.cells]
        d = grid.midpoint_distance[self.cells]
        dF = kernel.F.distance(self.mids) if kernel.F is not None else None
        self.pre = kernel.prefactor(d, dF, p) * grid.weight**2
        self.radius = kernel.ball_radius(d)
        self.offsets = (np.array(list(product((-1, 1), repeat=self.n)), dtype=float) * self.h / 4)
        rows = max(1, BLOCK_ENTRIES // max(1, len(self.cells) * self.n))
        self.blocks = [(a, min(a + rows, len(self.cells))) for a in range(0, len(self.cells), rows)]

    def __len__(self) -> int:
        return len(self.cells)

    @cached_property
    def templates(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """Per neighbour code: sorted physical distances and prefix sums of weight * singular."""
        out = {}
        powers = 3 ** np.arange(self.n)
        for delta in product((-1, 0, 1), repeat=self.n):
            if not any(delta):
                continue
            dist, weights = touching_template(delta, self.diagonal_depth)
            r = dist * self.h
            contrib = weights * self.kernel.singular(r, self.n, self.p)
            code = int(((np.array(delta) + 1) * powers).sum())
            out[code] = (r, np.concatenate([[0.0], np.cumsum(contrib)]))
        return out

    def _block(self, start: int, stop: int, upper: bool) -> np.ndarray:
        x = self.mids[start:stop]
        disp = self.mids[None, :, :] - x[:, None, :]
        r = np.sqrt(np.sum(disp * disp, axis=-1))
        radius = self.radius[start:stop, None]
        if np.all(np.isinf(radius)):
            frac = 1.0
        else:
            frac = np.zeros_like(r)
            for o in self.offsets:
                frac += np.sqrt(np.sum((disp + o) ** 2, axis=-1)) < radius
            frac /= len(self.offsets)
        sing = self.kernel.singular(np.where(r > 0, r, 1.0), self.n, self.p)
        w = self.pre[start:stop, None] * frac * sing
        didx = self.idx[None, :, :] - self.idx[start:stop, None, :]
        touching = np.max(np.abs(didx), axis=-1) <= 1
        w[touching] = 0.0
        bi, bj = np.nonzero(touching)
        codes = ((didx[bi, bj] + 1) * 3 ** np.arange(self.n)).sum(axis=1)
        for code in np.unique(codes).tolist():
            table = self.templates.get(code)
            if table is None:
                continue
            dist, cum = table
            sel = codes == code
            rows = start + bi[sel]
            k = np.searchsorted(dist, self.radius[rows], side="left")
            w[bi[sel], bj[sel]] = self.pre[rows] * cum[k]
        if upper:
            w[np.arange(len(self.cells))[None, :] <= np.arange(start, stop)[:, None]] = 0.0
        return w

    def _run(self, fn) -> list:
        if self.threads == 1 or len(self.blocks) == 1:
            return [fn(block) for block in self.blocks]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, self.blocks))

    @cached_property
    def _energy_blocks(self) -> list[np.ndarray] | None:
        if len(self.cells) ** 2 > CACHE_ENTRIES:
            return None
        upper = self.kernel.symmetric
        return self._run(lambda b: self._block(b[0], b[1], upper))

    def pair_weights(self) -> np.ndarray:
        """Full (cells x cells) weight matrix over the masked cells."""
        return np.vstack(self._run(lambda b: self._block(b[0], b[1], upper=False)))

    def energy(self, values: np.ndarray) -> float:
        """Sum over ordered pairs of K_ij |u_i - u_j|**p."""
        u = np.asarray(values, dtype=float)[self.cells]
        upper = self.kernel.symmetric

        def contribution(start: int, stop: int, w: np.ndarray) -> float:
            return float(np.sum(w * np.abs(u[start:stop, None] - u[None, :]) ** self.p))

        cached = self._energy_blocks
        if cached is not None:
            partial = [contribution(a, b, w) for (a, b), w in zip(self.blocks, cached)]
        else:
            partial = self._run(lambda bounds: contribution(*bounds, self._block(*bounds, upper)))
        total = math.fsum(partial)
        return 2 * total if upper else total


# --- Norms and seminorms ---


def boundary_weight(grid: Grid, beta: float, F: BoundarySet | None, p: float) -> np.ndarray:
    if beta == 0:
        return np.ones(len(grid))
    if F is None:
        raise ValueError("A positive beta needs a boundary set F")
    return F.distance(grid.midpoints) ** (p * beta)


def weighted_average(u: Field, beta: float = 0.0, F: BoundarySet | None = None, p: float = 2.0) -> float:
    """u_{Omega,omega} with omega = d_F**(p beta); beta = 0 gives the plain average."""
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    w = boundary_weight(u.grid, beta, F, p)
    base = float(u.values[0]) if len(u.values) else 0.0
    total = math.fsum(w.tolist())
    if total == 0:
        raise ValueError("Weight vanishes on every grid cell")
    return base + math.fsum((w * (u.values - base)).tolist()) / total


def lp_norm(
    u: Field, p: float, beta: float = 0.0, F: BoundarySet | None = None, center: float | None = None
) -> float:
    """(integral of |u - c|**p d_F**(p beta))**(1/p), c defaulting to the weighted average."""
    if p <= 1:
        raise ValueError(f"p must be > 1, got {p}")
    c = weighted_average(u, beta, F, p) if center is None else center
    w = boundary_weight(u.grid, beta, F, p)
    return (math.fsum((np.abs(u.values - c) ** p * w).tolist()) * u.grid.weight) ** (1 / p)


def gagliardo(
    u: Field,
    kernel: KernelSpec,
    p: float,
    region: np.ndarray | None = None,
    diagonal_depth: int | None = None,
    threads: int | None = None,
) -> float:
    """Double integral of |u(x) - u(y)|**p mu(x, y) over region x region, as an energy (no root)."""
    quad = PairQuadrature(u.grid, kernel, p, mask=region, diagonal_depth=diagonal_depth, threads=threads)
    return quad.energy(u.values)


def node_regions(frame: GridFrame) -> list[np.ndarray]:
    """Grid cells with midpoint inside each U_t."""
    cov = frame.cov
    return [frame.midpoint_mask(cov.u_lo[t], cov.u_hi[t]) for t in range(len(cov))]


class LocalizedQuadrature:
    """Sum over the nodes of a covering of the pair quadrature restricted to U_t."""

    def __init__(
        self,
        grid: Grid,
        kernel: KernelSpec,
        p: float,
        cov: TreeCovering,
        diagonal_depth: int | None = None,
        threads: int | None = None,
    ) -> None:
        frame = GridFrame.build(grid, cov)
        self.nodes = [
            PairQuadrature(grid, kernel, p, mask=mask, diagonal_depth=diagonal_depth, threads=threads)
            for mask in node_regions(frame)
            if mask.any()
        ]

    def energy(self, values: np.ndarray) -> float:
        return math.fsum(q.energy(values) for q in self.nodes)


def localized_energy(
    u: Field,
    kernel: KernelSpec,
    p: float,
    cov: TreeCovering,
    diagonal_depth: int | None = None,
    threads: int | None = None,
) -> float:
    """Sum over nodes of the double integral over U_t x U_t."""
    return LocalizedQuadrature(u.grid, kernel, p, cov, diagonal_depth, threads).energy(u.values)


class RatioRecord(BaseModel):
    domain: str
    p: float
    s: float
    tau: float | None
    beta: float
    kernel: str
    field_id: str
    lhs: float
    rhs: float
    ratio: float
    constant: float | None
    passed: bool
    counterexample: bool = False
    localized: bool = False

    @classmethod
    def from_sides(cls, lhs: float, rhs: float, constant: float | None, **meta: Any) -> RatioRecord:
        counterexample = rhs == 0 and lhs > 0
        if rhs > 0:
            ratio = lhs / rhs
        else:
            ratio = math.inf if counterexample else 0.0
        if counterexample:
            passed = False
        elif constant is None:
            passed = True
        else:
            passed = ratio <= constant
        return cls(lhs=lhs, rhs=rhs, ratio=ratio, constant=constant, passed=passed, counterexample=counterexample, **meta)

    def csv_row(self) -> list[Any]:
        return [
            self.domain,
            self.p,
            self.s,
            "" if self.tau is None else self.tau,
            self.beta,
            self.kernel,
            self.field_id,
            repr(self.lhs),
            repr(self.rhs),
            repr(self.ratio),
            "" if self.constant is None else repr(self.constant),
            "true" if self.passed else "false",
        ]


def verify_inequality(
    u: Field,
    p: float,
    kernel: KernelSpec,
    localized: TreeCovering | None = None,
    constant: float | None = None,
    K: Any = None,
    field_id: str | None = None,
    diagonal_depth: int | None = None,
    threads: int | None = None,
    quadrature: PairQuadrature | LocalizedQuadrature | None = None,
) -> RatioRecord:
    """Compare the weighted L^p oscillation of ``u`` with its Gagliardo energy.

    With ``localized`` the energy is the sum over the covering's U_t. When
    ``constant`` is omitted it is the closed form for ``kernel``; John
    coverings supply K themselves. A prepared ``quadrature`` (global, or
    localized over the same covering) is reused for the energy.
    """
    domain = u.grid.domain
    lhs = lp_norm(u, p, kernel.beta, kernel.F)
    if quadrature is not None:
        energy = quadrature.energy(u.values)
    elif localized is not None:
        energy = localized_energy(u, kernel, p, localized, diagonal_depth, threads)
    else:
        energy = gagliardo(u, kernel, p, diagonal_depth=diagonal_depth, threads=threads)
    rhs = energy ** (1 / p)
    if constant is None:
        if K is None and localized is not None and localized.kind == "john":
            K = boman_constant(localized)
        constant = inequality_constant(kernel, domain, p, K=K, localized=localized is not None)
    tau = kernel.tau
    if kernel.kind == "cube_ball":
        tau = kernel.radius_value / float(cube_side(domain))
    record = RatioRecord.from_sides(
        lhs,
        rhs,
        constant,
        domain=domain.name,
        p=p,
        s=kernel.s,
        tau=tau,
        beta=kernel.beta,
        kernel=kernel.label,
        field_id=field_id or u.name,
        localized=localized is not None,
    )
    if not record.passed:
        logger.warning("Inequality check failed for %s: ratio %s, constant %s", record.field_id, record.ratio, constant)
    return record


def verify_cube_inequality(
    u: Field,
    p: float,
    s: float,
    tau: float,
    localized: bool = False,
    diagonal_depth: int | None = None,
    threads: int | None = None,
) -> RatioRecord:
    """Cube-local inequality with the ball of fixed radius tau * L."""
    domain = u.grid.domain
    L = cube_side(domain)
    kernel = KernelSpec.cube_ball(s, Fraction(tau).limit_denominator(2**20) * L)
    cov = None
    if localized:
        cov = cube_tree_covering(Cube(domain.bounds.lo, L), tau=tau)
    return verify_inequality(u, p, kernel, localized=cov, diagonal_depth=diagonal_depth, threads=threads)


def diagonal_convergence(
    u: Field, kernel: KernelSpec, p: float, depths: Sequence[int] = (0, 1, 2, 3)
) -> list[dict[str, float]]:
    """Gagliardo energy per diagonal subdivision depth, with the relative change from the previous depth."""
    rows = []
    previous = None
    for depth in depths:
        value = gagliardo(u, kernel, p, diagonal_depth=depth)
        change = abs(value - previous) / abs(value) if previous is not None and value else None
        rows.append({"depth": depth, "value": value, "relative_change": change})
        previous = value
    return rows


def refinement_gap(
    grid: Grid, spec: str, seed: int, p: float, kernel: KernelSpec, K: Any = None
) -> dict[str, float] | None:
    """Ratio of the first field of ``spec`` on ``grid`` and on the grid one level coarser."""
    if grid.subdivisions % 2:
        return None
    coarse = Grid(grid.domain, grid.subdivisions // 2)
    fine_record = verify_inequality(field_batch(grid, spec, seed)[0], p, kernel, K=K)
    coarse_record = verify_inequality(field_batch(coarse, spec, seed)[0], p, kernel, K=K)
    gap = abs(fine_record.ratio - coarse_record.ratio) / fine_record.ratio if fine_record.ratio else 0.0
    return {"fine": fine_record.ratio, "coarse": coarse_record.ratio, "relative_gap": gap}
