"""Seeded Monte Carlo estimates of continuum quantities, each with its standard error."""

import math

import numpy as np

from fracpoin.functional import KernelSpec
from fracpoin.geometry import BoundarySet, RectilinearDomain


def sample_domain(domain: RectilinearDomain, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points of the open domain by rejection from its bounding box."""
    lo = np.array([float(v) for v in domain.bounds.lo])
    hi = np.array([float(v) for v in domain.bounds.hi])
    out = []
    count = 0
    while count < size:
        pts = lo + (hi - lo) * rng.random((2 * size, domain.n))
        pts = pts[domain.contains(pts)]
        out.append(pts)
        count += len(pts)
    return np.concatenate(out)[:size]


def mean_and_error(samples: np.ndarray) -> tuple[float, float]:
    return float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(len(samples)))


def energy_estimate(
    domain: RectilinearDomain,
    axis: int,
    kernel: KernelSpec,
    p: float,
    size: int,
    seed: int,
) -> tuple[float, float]:
    """Double integral of |x_axis - y_axis|**p mu(x, y) over the planar domain.

    y = x + r theta with r drawn from a density proportional to r**(a - 1),
    a = p (1 - s), on [0, R(x)] where R(x) is the kernel's ball radius capped
    at the diameter; the weights are then bounded.
    """
    if domain.n != 2:
        raise ValueError("energy_estimate samples planar domains only")
    rng = np.random.default_rng(seed)
    x = sample_domain(domain, size, rng)
    d = domain.distance(x)
    dF = kernel.F.distance(x) if kernel.F is not None else None
    a = p * (1 - kernel.s)
    R = np.minimum(kernel.ball_radius(d), domain.diameter)
    r = R * rng.random(size) ** (1 / a)
    angle = 2 * math.pi * rng.random(size)
    theta = np.column_stack([np.cos(angle), np.sin(angle)])
    y = x + r[:, None] * theta
    inside = domain.contains(y)
    mu = kernel.density(x, y, d, dF, p)
    pdf = a * r ** (a - 1) / R**a
    weights = np.where(inside, np.abs(r * theta[:, axis]) ** p * mu * r / pdf, 0.0)
    mean, error = mean_and_error(float(domain.volume) * 2 * math.pi * weights)
    return mean, error


def weighted_average_estimate(
    domain: RectilinearDomain,
    axis: int,
    beta: float,
    F: BoundarySet,
    p: float,
    size: int,
    seed: int,
) -> tuple[float, float]:
    """Ratio of means of x_axis d_F**(p beta) and d_F**(p beta), error by the delta method."""
    rng = np.random.default_rng(seed)
    x = sample_domain(domain, size, rng)
    w = F.distance(x) ** (p * beta)
    ratio = float(np.sum(x[:, axis] * w) / np.sum(w))
    _, error = mean_and_error((x[:, axis] - ratio) * w / w.mean())
    return ratio, error


def union_volume_estimate(lo: np.ndarray, hi: np.ndarray, size: int, seed: int) -> tuple[float, float]:
    """Volume of a union of open boxes inside the unit cube."""
    rng = np.random.default_rng(seed)
    x = rng.random((size, lo.shape[1]))
    hit = np.zeros(size, dtype=bool)
    for a, b in zip(lo, hi):
        hit |= np.all((x > a) & (x < b), axis=1)
    return mean_and_error(hit.astype(float))
