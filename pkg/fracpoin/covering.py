"""
Tree coverings: the chain tree of a regular cube partition and the
face-adjacency tree of a Whitney decomposition.

Every box of a covering (U_t, B_t, V_t) is stored as integer corners on the
covering's own lattice ``unit``, so containment, disjointness and volumes are
exact integer computations.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import product
from typing import Any, Sequence

import numpy as np
from pydantic import BaseModel

from fracpoin.geometry import (
    ATOM_LIMIT,
    BoundarySet,
    Cube,
    OutsideDomainError,
    RectilinearDomain,
    as_point,
    boundary_distance,
    box_pairs,
    breakpoints,
    common_unit,
    cover_counts,
    union_volume,
)
from fracpoin.whitney import WhitneyDecomposition, _min_gap_sq, whitney_decompose

logger = logging.getLogger(__name__)

# John coverings refine the Whitney lattice so that (9/8)Q and side l/64 transfer cubes are integral.
JOHN_REFINEMENT = 128


class DisconnectedCoveringError(ValueError):
    def __init__(self, components: list[list[int]]):
        self.components = components
        sizes = ", ".join(str(len(c)) for c in components)
        super().__init__(f"Face-adjacency graph has {len(components)} components (sizes {sizes})")


@dataclass(frozen=True)
class Shadow:
    node: int
    lo: np.ndarray
    hi: np.ndarray
    unit: Fraction
    lattice_volume: int

    @property
    def volume(self) -> Fraction:
        return self.lattice_volume * self.unit ** self.lo.shape[1]


@dataclass(frozen=True, eq=False)
class TreeCovering:
    """Rooted tree of open boxes U_t with transfer cubes B_t and base cells V_t.

    ``parents[root] == -1``; the B rows of the root are unused zeros.
    """

    kind: str
    unit: Fraction
    parents: np.ndarray
    u_lo: np.ndarray
    u_hi: np.ndarray
    b_lo: np.ndarray
    b_hi: np.ndarray
    v_lo: np.ndarray
    v_hi: np.ndarray
    overlap: int
    m: int | None = None
    whitney: WhitneyDecomposition | None = None
    _shadow_cache: dict[int, int] = field(default_factory=dict, init=False, repr=False)

    @property
    def n(self) -> int:
        return self.u_lo.shape[1]

    def __len__(self) -> int:
        return len(self.parents)

    @cached_property
    def root(self) -> int:
        roots = np.nonzero(self.parents < 0)[0]
        if len(roots) != 1:
            raise ValueError(f"Covering has {len(roots)} roots")
        return int(roots[0])

    @property
    def has_transfer(self) -> np.ndarray:
        return self.parents >= 0

    @cached_property
    def children(self) -> list[list[int]]:
        kids: list[list[int]] = [[] for _ in range(len(self))]
        for t, p in enumerate(self.parents.tolist()):
            if p >= 0:
                kids[p].append(t)
        return kids

    @cached_property
    def _preorder(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        order = []
        stack = [self.root]
        while stack:
            t = stack.pop()
            order.append(t)
            stack.extend(reversed(self.children[t]))
        order_arr = np.array(order, dtype=np.int64)
        position = np.empty(len(self), dtype=np.int64)
        position[order_arr] = np.arange(len(order_arr))
        size = np.ones(len(self), dtype=np.int64)
        for t in reversed(order):
            p = self.parents[t]
            if p >= 0:
                size[p] += size[t]
        return order_arr, position, size

    @property
    def preorder(self) -> np.ndarray:
        return self._preorder[0]

    def descendants(self, t: int) -> np.ndarray:
        """t and every node below it."""
        order, position, size = self._preorder
        return order[position[t] : position[t] + size[t]]

    @cached_property
    def depth(self) -> np.ndarray:
        depth = np.zeros(len(self), dtype=np.int64)
        for t in self.preorder.tolist():
            p = self.parents[t]
            if p >= 0:
                depth[t] = depth[p] + 1
        return depth

    @cached_property
    def subtree_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Bounding box of every shadow W_t."""
        lo, hi = self.u_lo.copy(), self.u_hi.copy()
        for t in reversed(self.preorder.tolist()):
            p = self.parents[t]
            if p >= 0:
                np.minimum(lo[p], lo[t], out=lo[p])
                np.maximum(hi[p], hi[t], out=hi[p])
        return lo, hi

    def shadow_lattice_volume(self, t: int) -> int:
        if t not in self._shadow_cache:
            desc = self.descendants(t)
            if len(desc) == 1:
                volume = int(np.prod(self.u_hi[t] - self.u_lo[t]))
            else:
                volume = union_volume(self.u_lo[desc], self.u_hi[desc])
            self._shadow_cache[t] = volume
        return self._shadow_cache[t]

    @property
    def b_lattice_volume(self) -> np.ndarray:
        return np.prod(self.b_hi - self.b_lo, axis=1)

    @property
    def v_lattice_volume(self) -> np.ndarray:
        return np.prod(self.v_hi - self.v_lo, axis=1)

    def box_json(self, lo: np.ndarray, hi: np.ndarray) -> dict:
        return {"lo": [str(self.unit * int(v)) for v in lo], "hi": [str(self.unit * int(v)) for v in hi]}

    def cube_json(self, lo: np.ndarray, hi: np.ndarray) -> dict:
        return {"corner": [str(self.unit * int(v)) for v in lo], "side": str(self.unit * int(hi[0] - lo[0]))}

    def node_records(self) -> list[dict]:
        records = []
        depth = self.depth.tolist()
        for t in range(len(self)):
            parent = int(self.parents[t])
            records.append(
                {
                    "id": t,
                    "parent": parent if parent >= 0 else None,
                    "U": self.box_json(self.u_lo[t], self.u_hi[t]),
                    "B": self.cube_json(self.b_lo[t], self.b_hi[t]) if parent >= 0 else None,
                    "V": self.box_json(self.v_lo[t], self.v_hi[t]),
                    "level": depth[t],
                }
            )
        return records


# --- Cube coverings ---


def choose_m(n: int, tau: Any) -> int:
    """The integer m with sqrt(n+3)/tau < m <= 1 + sqrt(n+3)/tau."""
    tau = float(tau)
    if not 0 < tau < 1:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    return math.floor(math.sqrt(n + 3) / tau) + 1


def cube_tree_covering(cube: Cube, tau: Any = None, m: int | None = None) -> TreeCovering:
    """Chain tree over the regular m**n partition of ``cube``.

    Pass ``tau`` to derive m with :func:`choose_m`, or ``m`` directly; m == 1
    gives the single-node tree.
    """
    n = cube.n
    if m is None:
        if tau is None:
            raise ValueError("cube_tree_covering needs tau or m")
        m = choose_m(n, tau)
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    third = cube.side / (3 * m)
    unit = common_unit(third, *cube.corner)
    a = int(third / unit)
    origin = np.array([int(c / unit) for c in cube.corner], dtype=np.int64)

    indices = list(product(range(m), repeat=n))
    position = {idx: t for t, idx in enumerate(indices)}
    grid = np.array(indices, dtype=np.int64)
    v_lo = origin + 3 * a * grid
    v_hi = v_lo + 3 * a
    u_lo, u_hi = v_lo.copy(), v_hi.copy()
    b_lo = np.zeros_like(v_lo)
    b_hi = np.zeros_like(v_lo)
    parents = np.full(len(indices), -1, dtype=np.int64)
    for t, idx in enumerate(indices[1:], start=1):
        k = next(j for j, v in enumerate(idx) if v > 0)
        up = list(idx)
        up[k] -= 1
        p = position[tuple(up)]
        parents[t] = p
        u_lo[t] = np.minimum(v_lo[t], v_lo[p])
        u_hi[t] = np.maximum(v_hi[t], v_hi[p])
        b_lo[t] = v_lo[p] + a
        b_hi[t] = v_lo[p] + 2 * a
        b_lo[t, k] = v_lo[p, k] + 2 * a
        b_hi[t, k] = v_lo[p, k] + 3 * a
    logger.info("Cube covering with m=%d: %d nodes", m, len(indices))
    return TreeCovering("cube", unit, parents, u_lo, u_hi, b_lo, b_hi, v_lo, v_hi, overlap=2 * n, m=m)


# --- John coverings ---


def _face_components(size: int, adjacency: list[list[int]]) -> list[list[int]]:
    seen = np.zeros(size, dtype=bool)
    components = []
    for start in range(size):
        if seen[start]:
            continue
        seen[start] = True
        queue = deque([start])
        part = []
        while queue:
            t = queue.popleft()
            part.append(t)
            for s in adjacency[t]:
                if not seen[s]:
                    seen[s] = True
                    queue.append(s)
        components.append(sorted(part))
    return components


def _john_root(dec: WhitneyDecomposition, root_hint: Sequence[Any] | None) -> int:
    if root_hint is not None:
        point = as_point(root_hint)
        boundary_distance(dec.domain, point)
        t = dec.locate(point)
        if t is None:
            raise OutsideDomainError("Root hint lies in the uncovered boundary collar")
        return t
    domain = dec.domain
    count = len(domain.cells)
    centroid = [
        domain.cell_size * (Fraction(sum(c[k] for c in domain.cells), count) + Fraction(1, 2))
        for k in range(domain.n)
    ]
    largest = int(dec.sides.max())
    best_key, best = None, -1
    for t in np.nonzero(dec.sides == largest)[0].tolist():
        center = [dec.unit * (int(c) * 2 + largest) / 2 for c in dec.corners[t]]
        key = (sum((a - b) ** 2 for a, b in zip(center, centroid)), tuple(dec.corners[t].tolist()))
        if best_key is None or key < best_key:
            best_key, best = key, t
    return best


def john_tree_covering(dec: WhitneyDecomposition, root_hint: Sequence[Any] | None = None) -> TreeCovering:
    """Shortest-path tree over face-adjacent Whitney cubes, U_t = (9/8) Q_t."""
    size = len(dec)
    if size == 0:
        raise ValueError("Whitney decomposition has no cubes")
    adjacency: list[list[int]] = [[] for _ in range(size)]
    for i, j in dec.face_pairs.tolist():
        adjacency[i].append(j)
        adjacency[j].append(i)
    root = _john_root(dec, root_hint)

    depth = np.full(size, -1, dtype=np.int64)
    depth[root] = 0
    queue = deque([root])
    while queue:
        t = queue.popleft()
        for s in adjacency[t]:
            if depth[s] < 0:
                depth[s] = depth[t] + 1
                queue.append(s)
    if (depth < 0).any():
        raise DisconnectedCoveringError(_face_components(size, adjacency))

    parents = np.full(size, -1, dtype=np.int64)
    for t in range(size):
        if t == root:
            continue
        candidates = [s for s in adjacency[t] if depth[s] == depth[t] - 1]
        parents[t] = min(candidates, key=lambda s: (-int(dec.sides[s]), tuple(dec.corners[s].tolist())))

    r = JOHN_REFINEMENT
    v_lo = dec.corners * r
    v_hi = dec.upper * r
    pad = (dec.sides * (r // 16))[:, None]
    u_lo, u_hi = v_lo - pad, v_hi + pad
    b_lo = np.zeros_like(v_lo)
    b_hi = np.zeros_like(v_lo)
    child = np.nonzero(parents >= 0)[0]
    p = parents[child]
    twice_center = np.maximum(v_lo[child], v_lo[p]) + np.minimum(v_hi[child], v_hi[p])
    half = (dec.sides[child] * r // 128)[:, None]
    b_lo[child] = twice_center // 2 - half
    b_hi[child] = twice_center // 2 + half
    logger.info(
        "John covering of %s: %d nodes, depth %d, root %d", dec.domain.name, size, int(depth.max()), root
    )
    return TreeCovering(
        "john", dec.unit / r, parents, u_lo, u_hi, b_lo, b_hi, v_lo, v_hi, overlap=12**dec.n, whitney=dec
    )


# --- Shadows and the Boman constant ---


def shadow(cov: TreeCovering, t: int) -> Shadow:
    """W_t: union of U_s over the subtree rooted at t, with exact volume."""
    if not 0 <= t < len(cov):
        raise ValueError(f"Unknown node {t}")
    desc = cov.descendants(t)
    return Shadow(t, cov.u_lo[desc], cov.u_hi[desc], cov.unit, cov.shadow_lattice_volume(t))


def boman_factors(cov: TreeCovering) -> list[Fraction]:
    """Per node, the smallest k with W_t inside the concentric dilate k Q_t (Q_t = V_t)."""
    lo, hi = cov.subtree_bounds
    side = cov.v_hi[:, 0] - cov.v_lo[:, 0]
    twice_center = cov.v_lo + cov.v_hi
    reach = np.maximum(twice_center - 2 * lo, 2 * hi - twice_center).max(axis=1)
    return [Fraction(int(r), int(s)) for r, s in zip(reach.tolist(), side.tolist())]


def boman_constant(cov: TreeCovering, dec: WhitneyDecomposition | None = None) -> Fraction:
    """K = max_t k_t, computed on the truncated decomposition."""
    factors = boman_factors(cov)
    K = max(factors)
    source = dec or cov.whitney
    generation = source.max_generation if source is not None else None
    logger.info("Boman constant %s (%.4f) at generation %s", K, float(K), generation)
    return K


def john_boman_constant(domain: RectilinearDomain, generation: int, root_hint: Sequence[Any] | None = None) -> Fraction:
    """K of the john covering of the decomposition truncated at ``generation``."""
    dec = whitney_decompose(domain, generation)
    return boman_constant(john_tree_covering(dec, root_hint), dec)


def boman_stability(
    domain: RectilinearDomain, generations: Sequence[int], root_hint: Sequence[Any] | None = None
) -> list[dict]:
    """K of the john covering for each truncation generation."""
    rows = []
    for g in generations:
        dec = whitney_decompose(domain, g)
        cov = john_tree_covering(dec, root_hint)
        K = boman_constant(cov, dec)
        rows.append({"generation": g, "cubes": len(dec), "K": float(K), "K_exact": str(K)})
    return rows


# --- Verification ---


class CoveringReport(BaseModel):
    kind: str
    nodes: int
    depth: int
    tree: bool
    overlap: bool
    transfer_disjoint: bool
    transfer_contained: bool
    partition: bool
    eccentricity: bool
    min_overlap: int
    max_overlap: int
    N: int
    K: float
    m: int | None
    max_eccentricity: float
    eccentricity_bound: float
    offending: dict[str, list[int]]
    problems: list[str]
    passed: bool


def _tree_problems(cov: TreeCovering) -> list[str]:
    problems = []
    size = len(cov)
    parents = cov.parents
    roots = np.nonzero(parents < 0)[0]
    if len(roots) != 1:
        return [f"expected one root, found {len(roots)}"]
    if ((parents >= size) | (parents == np.arange(size))).any():
        problems.append("parent index out of range or self-parent")
        return problems
    for t in range(size):
        steps, s = 0, t
        while parents[s] >= 0 and steps <= size:
            s = int(parents[s])
            steps += 1
        if steps > size:
            problems.append(f"node {t} lies on a cycle")
            break
    return problems


def _overlap_extremes(u_lo, u_hi, v_lo, v_hi) -> tuple[int, int]:
    """(min, max) of sum_t chi_{U_t} over the atoms covered by some V_t."""
    coords = breakpoints((u_lo, u_hi), (v_lo, v_hi))
    n = len(coords)
    if n == 1 or math.prod(len(c) - 1 for c in coords) <= ATOM_LIMIT:
        counts = cover_counts(coords, u_lo, u_hi)
        covered = cover_counts(coords, v_lo, v_hi) > 0
        values = counts[covered]
        return (int(values.min()), int(values.max())) if values.size else (0, 0)
    low, high = None, 0
    xs = coords[0].tolist()
    for a, b in zip(xs, xs[1:]):
        u_on = (u_lo[:, 0] <= a) & (u_hi[:, 0] >= b)
        v_on = (v_lo[:, 0] <= a) & (v_hi[:, 0] >= b)
        if not v_on.any():
            continue
        if not u_on.any():
            return 0, high
        lo_k, hi_k = _overlap_extremes(u_lo[u_on, 1:], u_hi[u_on, 1:], v_lo[v_on, 1:], v_hi[v_on, 1:])
        low = lo_k if low is None else min(low, lo_k)
        high = max(high, hi_k)
    return (low or 0), high


def verify_tree_covering(cov: TreeCovering, K: Fraction | None = None) -> CoveringReport:
    """Tree shape, overlap bound, transfer cubes, base-cell partition and eccentricity."""
    offending: dict[str, list[int]] = {}
    problems = _tree_problems(cov)
    tree_ok = not problems
    child = np.nonzero(cov.has_transfer)[0] if tree_ok else np.zeros(0, dtype=np.int64)

    low, high = _overlap_extremes(cov.u_lo, cov.u_hi, cov.v_lo, cov.v_hi)
    overlap_ok = low >= 1 and high <= cov.overlap

    clash = box_pairs(cov.b_lo[child], cov.b_hi[child], open_boxes=True)
    if len(clash):
        offending["transfer_disjoint"] = sorted(set(child[clash].ravel().tolist()))
    contained = np.ones(len(child), dtype=bool)
    if len(child):
        p = cov.parents[child]
        inner_lo = np.maximum(cov.u_lo[child], cov.u_lo[p])
        inner_hi = np.minimum(cov.u_hi[child], cov.u_hi[p])
        contained = np.all((cov.b_lo[child] >= inner_lo) & (cov.b_hi[child] <= inner_hi), axis=1)
        contained &= np.all(cov.b_hi[child] > cov.b_lo[child], axis=1)
    if not contained.all():
        offending["transfer_contained"] = child[~contained].tolist()

    v_clash = box_pairs(cov.v_lo, cov.v_hi, open_boxes=True)
    v_inside = np.all((cov.v_lo >= cov.u_lo) & (cov.v_hi <= cov.u_hi), axis=1)
    if len(v_clash) or not v_inside.all():
        offending["partition"] = sorted(set(v_clash.ravel().tolist()) | set(np.nonzero(~v_inside)[0].tolist()))

    if K is None:
        K = boman_constant(cov) if tree_ok else Fraction(1)
    n = cov.n
    if cov.kind == "cube":
        bound = Fraction(3 * cov.m) ** n
    else:
        bound = Fraction(72) ** n * K**n
    worst = Fraction(0)
    eccentric = []
    if tree_ok:
        bvol = cov.b_lattice_volume
        lo, hi = cov.subtree_bounds
        for t in child.tolist():
            box_volume = int(np.prod(hi[t] - lo[t]))
            if Fraction(box_volume, int(bvol[t])) <= min(worst, bound):
                continue
            ratio = Fraction(cov.shadow_lattice_volume(t), int(bvol[t]))
            worst = max(worst, ratio)
            if ratio > bound:
                eccentric.append(t)
    if eccentric:
        offending["eccentricity"] = eccentric

    report = CoveringReport(
        kind=cov.kind,
        nodes=len(cov),
        depth=int(cov.depth.max()) if tree_ok else -1,
        tree=tree_ok,
        overlap=overlap_ok,
        transfer_disjoint=len(clash) == 0,
        transfer_contained=bool(contained.all()),
        partition="partition" not in offending,
        eccentricity=tree_ok and not eccentric,
        min_overlap=low,
        max_overlap=high,
        N=cov.overlap,
        K=float(K),
        m=cov.m,
        max_eccentricity=float(worst),
        eccentricity_bound=float(bound),
        offending=offending,
        problems=problems,
        passed=False,
    )
    report.passed = all(
        (
            report.tree,
            report.overlap,
            report.transfer_disjoint,
            report.transfer_contained,
            report.partition,
            report.eccentricity,
        )
    )
    if not report.passed:
        logger.warning("Covering verification failed: %s %s", sorted(offending), problems)
    return report


class SideDistanceReport(BaseModel):
    nodes: int
    max_ratio: float
    offending: list[int]
    passed: bool


def check_side_vs_distance(cov: TreeCovering, domain: RectilinearDomain | None = None) -> SideDistanceReport:
    """L_t <= d(x) for every x in U_t, decided exactly via dist(U_t, boundary)."""
    domain = domain or (cov.whitney.domain if cov.whitney is not None else None)
    if domain is None:
        raise ValueError("Side/distance check needs the covered domain")
    scale = domain.cell_size / cov.unit
    if scale.denominator != 1:
        raise ValueError("Domain faces are not on the covering lattice")
    flo, fhi = domain.face_lattice
    d2 = _min_gap_sq(cov.u_lo, cov.u_hi, flo * int(scale), fhi * int(scale))
    side = np.max(cov.u_hi - cov.u_lo, axis=1)
    bad = np.nonzero(side * side > d2)[0]
    with np.errstate(divide="ignore"):
        ratios = side / np.sqrt(d2.astype(float))
    return SideDistanceReport(
        nodes=len(cov), max_ratio=float(np.max(ratios)), offending=bad.tolist(), passed=bad.size == 0
    )


class WeightComparabilityReport(BaseModel):
    boundary_set: str
    K: float
    bound: float
    max_ratio: float
    offending: list[int]
    passed: bool


def _probe_points(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """3**n probe points (corners, face centres, centre) of each box, as float."""
    mid = (lo + hi) / 2
    stacks = np.stack([lo, mid, hi], axis=0)
    n = lo.shape[1]
    points = []
    for choice in product(range(3), repeat=n):
        points.append(np.stack([stacks[c, :, k] for k, c in enumerate(choice)], axis=1))
    return np.concatenate(points)


def check_weight_comparability(cov: TreeCovering, F: BoundarySet, K: Fraction | None = None) -> WeightComparabilityReport:
    """sup over W_t of d_F <= 3 K sqrt(n) inf over B_t of d_F, for every t != root."""
    K = K if K is not None else boman_constant(cov)
    bound = 3 * float(K) * math.sqrt(cov.n)
    unit = float(cov.unit)
    seg_lo, seg_hi = F.arrays
    worst = 0.0
    offending = []
    for t in np.nonzero(cov.has_transfer)[0].tolist():
        desc = cov.descendants(t)
        sup = float(F.distance(_probe_points(cov.u_lo[desc] * unit, cov.u_hi[desc] * unit)).max())
        b_lo = cov.b_lo[t] * unit
        b_hi = cov.b_hi[t] * unit
        gap = np.maximum(np.maximum(seg_lo - b_hi, b_lo - seg_hi), 0.0)
        inf = float(np.sqrt(np.min(np.sum(gap * gap, axis=1))))
        ratio = sup / inf if inf > 0 else math.inf
        worst = max(worst, ratio)
        if ratio > bound:
            offending.append(t)
    return WeightComparabilityReport(
        boundary_set=F.name, K=float(K), bound=bound, max_ratio=worst, offending=offending, passed=not offending
    )
