from fractions import Fraction
from typing import Any

from fastapi import APIRouter, HTTPException, status
from pydantic import BaseModel, field_validator

from fracpoin.constants import breakdown, cube_breakdown, cube_side, radial_breakdown
from fracpoin.covering import john_boman_constant
from fracpoin.fields import Grid, field_batch
from fracpoin.functional import KERNELS, KernelSpec, PairQuadrature, verify_inequality
from fracpoin.geometry import build_boundary_set, build_domain, parse_rational

router = APIRouter(prefix="/api", tags=["api"])

MAX_DEPTH = 5
MAX_FIELDS = 100


class VerifyRequest(BaseModel):
    domain: str | dict[str, Any] = "square"
    kernel: str = "weighted_main"
    p: float = 2.0
    s: float = 0.5
    tau: float = 0.5
    beta: float = 0.0
    F: str | dict[str, Any] | None = None
    rho: str = "power"
    depth: int = 3
    fields: str = "random:10"
    seed: int = 0
    K: str | None = None
    gen: int = 5

    @field_validator("kernel")
    @classmethod
    def validate_kernel(cls, v: str) -> str:
        if v not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")
        return v

    @field_validator("depth")
    @classmethod
    def validate_depth(cls, v: int) -> int:
        if not 0 <= v <= MAX_DEPTH:
            raise ValueError(f"depth must lie in 0..{MAX_DEPTH}")
        return v

    @field_validator("fields")
    @classmethod
    def validate_fields(cls, v: str) -> str:
        _, _, count = v.partition(":")
        if count.isdigit() and int(count) > MAX_FIELDS:
            raise ValueError(f"At most {MAX_FIELDS} fields per request")
        return v


def _bad_request(exc: ValueError) -> HTTPException:
    return HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(exc))


@router.get("/constants")
def get_constants(
    n: int = 2,
    p: float = 2.0,
    s: float = 0.5,
    tau: float = 0.5,
    beta: float = 0.0,
    K: float = 1.0,
    variant: str = "john",
    L: float = 1.0,
) -> dict:
    """Closed-form constants; total = 2 C0 C1."""
    try:
        if variant == "cube":
            result = cube_breakdown(n, p, s, tau, L)
        elif variant == "radial":
            result = radial_breakdown(n, p, beta, K)
        elif variant == "john":
            result = breakdown(n, p, s, tau, beta, K)
        else:
            raise ValueError(f"Unknown variant {variant!r}")
    except ValueError as exc:
        raise _bad_request(exc) from exc
    return result.model_dump()


@router.post("/verify")
def verify(payload: VerifyRequest) -> dict:
    """Ratios lhs / rhs for a batch of generated fields."""
    try:
        domain = build_domain(payload.domain)
        F = build_boundary_set(domain, payload.F) if payload.F is not None else None
        if payload.kernel == "cube_ball":
            radius = Fraction(payload.tau).limit_denominator(2**20) * cube_side(domain)
            kernel = KernelSpec.cube_ball(payload.s, radius)
        else:
            kernel = KernelSpec(
                payload.kernel,
                payload.s,
                tau=payload.tau if payload.kernel in ("tau_ball", "weighted_main") else None,
                beta=payload.beta,
                F=F,
                rho=payload.rho,
            )
        K = parse_rational(payload.K) if payload.K is not None else None
        if K is None and kernel.kind in ("weighted_main", "radial"):
            K = john_boman_constant(domain, payload.gen)
        grid = Grid.from_depth(domain, payload.depth)
        quad = PairQuadrature(grid, kernel, payload.p)
        records = [
            verify_inequality(u, payload.p, kernel, K=K, quadrature=quad)
            for u in field_batch(grid, payload.fields, payload.seed)
        ]
    except ValueError as exc:
        raise _bad_request(exc) from exc
    return {
        "seed": payload.seed,
        "K": float(K) if K is not None else None,
        "records": [r.model_dump(mode="json") for r in records],
        "passed": all(r.passed for r in records),
    }
