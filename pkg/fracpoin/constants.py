"""
Closed-form constants of the weighted fractional Poincaré inequalities.

All functions are pure and deterministic; ``q`` is always the conjugate
exponent ``p / (p - 1)``.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import TYPE_CHECKING

from pydantic import BaseModel

from fracpoin.covering import choose_m
from fracpoin.geometry import RectilinearDomain

if TYPE_CHECKING:
    from fracpoin.functional import KernelSpec


def conjugate(p: float) -> float:
    if p <= 1:
        raise ValueError(f"p must be > 1, got {p}")
    return p / (p - 1)


def _check(n: int, s: float | None = None, tau: float | None = None, beta: float = 0.0) -> None:
    if n < 2:
        raise ValueError(f"Dimension must be >= 2, got {n}")
    if s is not None and not 0 < s < 1:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    if tau is not None and not 0 < tau < 1:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")


def _cube_core(n: int, q: float) -> float:
    """(2^(2q+2) 3^(nq) n^2 q/(q-1))^(1/q)."""
    return (2 ** (2 * q + 2) * 3 ** (n * q) * n**2 * q / (q - 1)) ** (1 / q)


def c_np(n: int, p: float) -> float:
    """Constant of the local inequality on cubes; depends on n and p only."""
    _check(n)
    q = conjugate(p)
    return 2 * _cube_core(n, q) * (1 + math.sqrt(n + 3)) ** n * (n + 3) ** (n / (2 * p)) * (2 * n) ** (1 / p)


def c1(n: int, p: float, s: float, tau: float, beta: float) -> float:
    _check(n, s, tau, beta)
    return c_np(n, p) * tau ** (s - n) * 2**beta


def c1_cube(n: int, p: float, s: float, tau: float, L: float) -> float:
    _check(n, s, tau)
    return (n + 3) ** (n / (2 * p)) * (tau * L) ** s


def c1_radial(n: int, p: float, beta: float) -> float:
    _check(n, beta=beta)
    conjugate(p)
    return n ** (n / (2 * p)) * 2**beta


def c0(n: int, q: float, beta: float, K: float) -> float:
    _check(n, beta=beta)
    if q <= 1:
        raise ValueError(f"q must be > 1, got {q}")
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    return (
        4
        * 12 ** (2 * n / q)
        * 72**n
        * (3 * math.sqrt(n)) ** beta
        * (q / (q - 1)) ** (1 / q)
        * float(K) ** (n + beta)
    )


def c0_cube(n: int, q: float, tau: float) -> float:
    _check(n, tau=tau)
    if q <= 1:
        raise ValueError(f"q must be > 1, got {q}")
    return _cube_core(n, q) * (1 + math.sqrt(n + 3)) ** n * tau ** (-n)


def c0_chain(n: int, q: float, m: int) -> float:
    """Decomposition constant of the m**n chain covering of a cube."""
    _check(n)
    if q <= 1:
        raise ValueError(f"q must be > 1, got {q}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    return _cube_core(n, q) * m**n


def c2(n: int, K: float, beta: float) -> float:
    return (3 * float(K) * math.sqrt(n)) ** beta


def hardy_bound(q: float, N: int, C2: float = 1.0) -> float:
    """2 (qN/(q-1))**(1/q) C2; the sup-norm bound is 2 C2."""
    if q <= 1:
        raise ValueError(f"q must be > 1, got {q}")
    if math.isinf(q):
        return 2.0 * C2
    return 2.0 * (q * N / (q - 1)) ** (1.0 / q) * C2


def local_constant(diam: float, volume: float, n: int, s: float, p: float) -> float:
    """(diam^(n+sp) / |U|)^(1/p): the classical inequality on a bounded set U."""
    return (diam ** (n + s * p) / volume) ** (1 / p)


def cube_ball_constant(n: int, p: float, s: float, tau: float, L: float) -> float:
    return c_np(n, p) * tau ** (s - n) * L**s


class ConstantBreakdown(BaseModel):
    variant: str
    n: int
    p: float
    q: float
    s: float | None
    tau: float | None
    beta: float
    K: float | None
    N: int
    m: int | None
    C_np: float
    C0: float
    C1: float
    C2: float
    total: float


def breakdown(n: int, p: float, s: float, tau: float, beta: float, K: float | Fraction) -> ConstantBreakdown:
    """Constants of the weighted inequality on a John domain: total = 2 C0 C1."""
    q = conjugate(p)
    C0 = c0(n, q, beta, float(K))
    C1 = c1(n, p, s, tau, beta)
    return ConstantBreakdown(
        variant="john",
        n=n,
        p=p,
        q=q,
        s=s,
        tau=tau,
        beta=beta,
        K=float(K),
        N=12**n,
        m=None,
        C_np=c_np(n, p),
        C0=C0,
        C1=C1,
        C2=c2(n, K, beta),
        total=2 * C0 * C1,
    )


def cube_breakdown(n: int, p: float, s: float, tau: float, L: float) -> ConstantBreakdown:
    """Constants of the cube covering with ball radius tau L."""
    q = conjugate(p)
    C0 = c0_cube(n, q, tau)
    C1 = c1_cube(n, p, s, tau, L)
    return ConstantBreakdown(
        variant="cube",
        n=n,
        p=p,
        q=q,
        s=s,
        tau=tau,
        beta=0.0,
        K=None,
        N=2 * n,
        m=choose_m(n, tau),
        C_np=c_np(n, p),
        C0=C0,
        C1=C1,
        C2=1.0,
        total=2 * C0 * C1,
    )


def radial_breakdown(n: int, p: float, beta: float, K: float | Fraction) -> ConstantBreakdown:
    """Constants for the radial (rho) kernel."""
    q = conjugate(p)
    C0 = c0(n, q, beta, float(K))
    C1 = c1_radial(n, p, beta)
    return ConstantBreakdown(
        variant="radial",
        n=n,
        p=p,
        q=q,
        s=None,
        tau=None,
        beta=beta,
        K=float(K),
        N=12**n,
        m=None,
        C_np=c_np(n, p),
        C0=C0,
        C1=C1,
        C2=c2(n, K, beta),
        total=2 * C0 * C1,
    )


def cube_side(domain: RectilinearDomain) -> Fraction:
    """Side of a domain that is a single closed cube, else ValueError."""
    bounds = domain.bounds
    sides = {b - a for a, b in zip(bounds.lo, bounds.hi)}
    if len(sides) != 1 or domain.volume != bounds.volume or domain.slits:
        raise ValueError(f"Domain {domain.name} is not a cube")
    return sides.pop()


def inequality_constant(
    kernel: KernelSpec,
    domain: RectilinearDomain,
    p: float,
    K: float | Fraction | None = None,
    localized: bool = False,
) -> float | None:
    """Theoretical constant matching ``kernel``; None when no bound applies."""
    n = domain.n
    if kernel.kind == "classical":
        if localized:
            return None
        return local_constant(domain.diameter, float(domain.volume), n, kernel.s, p)
    if kernel.kind == "tau_ball":
        return None
    if kernel.kind == "cube_ball":
        L = float(cube_side(domain))
        tau = kernel.radius_value / L
        if localized:
            return cube_breakdown(n, p, kernel.s, tau, L).total
        return cube_ball_constant(n, p, kernel.s, tau, L)
    if K is None:
        raise ValueError(f"The {kernel.kind} constant needs the Boman constant K")
    if kernel.kind == "weighted_main":
        return breakdown(n, p, kernel.s, kernel.tau, kernel.beta, K).total
    return radial_breakdown(n, p, kernel.beta, K).total
