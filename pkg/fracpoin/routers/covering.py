from typing import Any

from fastapi import APIRouter, HTTPException, status
from pydantic import BaseModel, field_validator

from fracpoin.covering import (
    boman_constant,
    check_side_vs_distance,
    cube_tree_covering,
    john_tree_covering,
    verify_tree_covering,
)
from fracpoin.geometry import Cube, build_domain, parse_rational
from fracpoin.whitney import verify_whitney, whitney_decompose

router = APIRouter(prefix="/api", tags=["covering"])

MAX_GENERATION = 10


class WhitneyRequest(BaseModel):
    domain: str | dict[str, Any] = "square"
    gen: int = 6
    include_cubes: bool = True

    @field_validator("gen")
    @classmethod
    def validate_gen(cls, v: int) -> int:
        if not 0 <= v <= MAX_GENERATION:
            raise ValueError(f"gen must lie in 0..{MAX_GENERATION}")
        return v


class JohnCoverRequest(WhitneyRequest):
    root: list[str] | None = None


class CubeCoverRequest(BaseModel):
    n: int = 2
    side: str = "1"
    tau: float | None = 0.5
    m: int | None = None

    @field_validator("n")
    @classmethod
    def validate_n(cls, v: int) -> int:
        if not 2 <= v <= 4:
            raise ValueError("n must lie in 2..4")
        return v

    @field_validator("m")
    @classmethod
    def validate_m(cls, v: int | None) -> int | None:
        if v is not None and not 1 <= v <= 32:
            raise ValueError("m must lie in 1..32")
        return v


def _bad_request(exc: ValueError) -> HTTPException:
    return HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(exc))


@router.post("/whitney")
def whitney(payload: WhitneyRequest) -> dict:
    """Whitney decomposition with its verification report."""
    try:
        domain = build_domain(payload.domain)
        dec = whitney_decompose(domain, payload.gen)
        report = verify_whitney(dec)
    except ValueError as exc:
        raise _bad_request(exc) from exc
    return {
        "domain": domain.describe(),
        "cubes": dec.to_json() if payload.include_cubes else None,
        "report": report.model_dump(),
    }


@router.post("/cover/john")
def cover_john(payload: JohnCoverRequest) -> dict:
    """John-domain tree covering, its Boman constant K and checks."""
    try:
        domain = build_domain(payload.domain)
        dec = whitney_decompose(domain, payload.gen)
        root = [parse_rational(v) for v in payload.root] if payload.root else None
        cov = john_tree_covering(dec, root)
        K = boman_constant(cov, dec)
        report = verify_tree_covering(cov, K)
        side = check_side_vs_distance(cov, domain)
    except ValueError as exc:
        raise _bad_request(exc) from exc
    return {
        "K": float(K),
        "K_exact": str(K),
        "nodes": cov.node_records() if payload.include_cubes else None,
        "report": report.model_dump(),
        "side_vs_distance": side.model_dump(),
    }


@router.post("/cover/cube")
def cover_cube(payload: CubeCoverRequest) -> dict:
    """Chain covering of the cube [0, side]**n."""
    try:
        cube = Cube((0,) * payload.n, parse_rational(payload.side))
        cov = cube_tree_covering(cube, tau=payload.tau if payload.m is None else None, m=payload.m)
        report = verify_tree_covering(cov)
    except ValueError as exc:
        raise _bad_request(exc) from exc
    return {"m": cov.m, "nodes": cov.node_records(), "report": report.model_dump()}
