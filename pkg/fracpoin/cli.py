"""
Command-line front end.

Exit codes: 0 when every reported property holds, 1 when one fails,
2 on usage errors and invalid parameters.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from fractions import Fraction
from typing import Any

from pydantic import BaseModel, field_validator

from fracpoin import settings
from fracpoin.constants import breakdown, cube_breakdown, cube_side, radial_breakdown
from fracpoin.covering import (
    TreeCovering,
    boman_constant,
    check_side_vs_distance,
    check_weight_comparability,
    cube_tree_covering,
    john_boman_constant,
    john_tree_covering,
    verify_tree_covering,
)
from fracpoin.decomposition import center_on_cover, hardy_norm_probe, orthogonal_decompose, verify_decomposition
from fracpoin.estimate import METHODS, rooms_probe, sharp_constant_estimate, tau_sweep
from fracpoin.export import open_output, write_json, write_records_csv, write_rooms_csv, write_sweep_csv
from fracpoin.fields import Grid, GridFrame, field_batch
from fracpoin.functional import (
    KERNELS,
    RHO_FAMILIES,
    KernelSpec,
    LocalizedQuadrature,
    PairQuadrature,
    refinement_gap,
    verify_inequality,
)
from fracpoin.geometry import BoundarySet, Cube, RectilinearDomain, build_boundary_set, build_domain, parse_rational
from fracpoin.whitney import verify_whitney, whitney_decompose

logger = logging.getLogger(__name__)


class RunConfig(BaseModel):
    command: str
    p: float = 2.0
    s: float = 0.5
    tau: float | None = 0.5
    beta: float = 0.0
    depth: int | None = None
    diagonal_depth: int | None = None
    seed: int = 0
    trials: int = 200
    gen: int = 6

    @field_validator("p")
    @classmethod
    def validate_p(cls, v: float) -> float:
        if not v > 1:
            raise ValueError("p must be > 1")
        return v

    @field_validator("s")
    @classmethod
    def validate_s(cls, v: float) -> float:
        if not 0 < v < 1:
            raise ValueError("s must lie in (0, 1)")
        return v

    @field_validator("tau")
    @classmethod
    def validate_tau(cls, v: float | None) -> float | None:
        if v is not None and not 0 < v < 1:
            raise ValueError("tau must lie in (0, 1)")
        return v

    @field_validator("beta")
    @classmethod
    def validate_beta(cls, v: float) -> float:
        if v < 0:
            raise ValueError("beta must be >= 0")
        return v

    @field_validator("depth", "diagonal_depth", "gen", "seed")
    @classmethod
    def validate_nonnegative(cls, v: int | None) -> int | None:
        if v is not None and v < 0:
            raise ValueError("must be >= 0")
        return v

    @field_validator("trials")
    @classmethod
    def validate_trials(cls, v: int) -> int:
        if v < 1:
            raise ValueError("trials must be >= 1")
        return v


def _config(args: argparse.Namespace) -> RunConfig:
    values = {k: v for k, v in vars(args).items() if k in RunConfig.model_fields and v is not None}
    return RunConfig.model_validate(values)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _point(text: str | None) -> tuple[Fraction, ...] | None:
    if text is None:
        return None
    return tuple(parse_rational(v) for v in text.split(","))


def _boundary(domain: RectilinearDomain, spec: str | None) -> BoundarySet | None:
    return build_boundary_set(domain, spec) if spec else None


def _grid(domain: RectilinearDomain, args: argparse.Namespace) -> Grid:
    if getattr(args, "subdivisions", None):
        return Grid(domain, args.subdivisions)
    return Grid.from_depth(domain, args.depth)


def _covering(domain: RectilinearDomain, args: argparse.Namespace) -> TreeCovering:
    if args.cover == "cube":
        return cube_tree_covering(Cube(domain.bounds.lo, cube_side(domain)), tau=args.tau)
    dec = whitney_decompose(domain, args.gen)
    return john_tree_covering(dec, _point(args.root))


def _kernel(args: argparse.Namespace, domain: RectilinearDomain, F: BoundarySet | None) -> KernelSpec:
    kind = args.kernel
    if kind == "classical":
        return KernelSpec.classical(args.s)
    if kind == "tau_ball":
        return KernelSpec.tau_ball(args.s, args.tau)
    if kind == "weighted_main":
        return KernelSpec.weighted_main(args.s, args.tau, args.beta, F)
    if kind == "radial":
        return KernelSpec.radial(args.s, args.rho, args.beta, F, args.cap)
    L = cube_side(domain)
    return KernelSpec.cube_ball(args.s, Fraction(args.tau).limit_denominator(2**20) * L)


def _needs_K(kernel: KernelSpec) -> bool:
    return kernel.kind in ("weighted_main", "radial")


# --- Commands ---


def cmd_whitney(args: argparse.Namespace) -> int:
    domain = build_domain(args.domain)
    dec = whitney_decompose(domain, args.gen)
    report = verify_whitney(dec)
    with open_output(args.out) as out:
        write_json({"domain": domain.describe(), "cubes": dec.to_json(), "report": report}, out, args.seed)
    return 0 if report.passed else 1


def cmd_cover_cube(args: argparse.Namespace) -> int:
    cube = Cube((0,) * args.n, parse_rational(args.side))
    cov = cube_tree_covering(cube, tau=args.tau if args.m is None else None, m=args.m)
    report = verify_tree_covering(cov)
    with open_output(args.out) as out:
        write_json({"m": cov.m, "nodes": cov.node_records(), "report": report}, out, args.seed)
    return 0 if report.passed else 1


def cmd_cover_john(args: argparse.Namespace) -> int:
    domain = build_domain(args.domain)
    dec = whitney_decompose(domain, args.gen)
    cov = john_tree_covering(dec, _point(args.root))
    K = boman_constant(cov, dec)
    reports: dict[str, Any] = {
        "covering": verify_tree_covering(cov, K),
        "side_vs_distance": check_side_vs_distance(cov, domain),
    }
    F = _boundary(domain, args.F)
    if F is not None:
        reports["weight_comparability"] = check_weight_comparability(cov, F, K)
    doc = {"K": float(K), "K_exact": str(K), "nodes": cov.node_records(), "reports": reports}
    with open_output(args.out) as out:
        write_json(doc, out, args.seed)
    return 0 if all(r.passed for r in reports.values()) else 1


def cmd_decompose(args: argparse.Namespace) -> int:
    domain = build_domain(args.domain)
    grid = _grid(domain, args)
    cov = _covering(domain, args)
    frame = GridFrame.build(grid, cov)
    g = center_on_cover(field_batch(grid, args.field, args.seed)[0], frame)
    result = orthogonal_decompose(cov, g, frame)
    report = verify_decomposition(result, args.q)
    doc = {"report": report}
    if args.parts:
        doc["decomposition"] = result
    with open_output(args.out) as out:
        write_json(doc, out, args.seed)
    return 0 if report.passed else 1


def cmd_hardy_probe(args: argparse.Namespace) -> int:
    domain = build_domain(args.domain)
    grid = _grid(domain, args)
    cov = _covering(domain, args)
    F = _boundary(domain, args.F)
    report = hardy_norm_probe(cov, grid, args.q, args.trials, args.seed, args.beta, F)
    with open_output(args.out) as out:
        write_json(report, out, args.seed)
    return 0 if report.passed else 1


def cmd_verify(args: argparse.Namespace) -> int:
    domain = build_domain(args.domain)
    grid = _grid(domain, args)
    F = _boundary(domain, args.F)
    kernel = _kernel(args, domain, F)
    cov = None
    K = args.K
    if args.localized:
        args.cover = "cube" if kernel.kind == "cube_ball" else "john"
        cov = _covering(domain, args)
        if cov.kind == "john" and K is None:
            K = boman_constant(cov)
        quad = LocalizedQuadrature(grid, kernel, args.p, cov, args.diagonal_depth)
    else:
        if K is None and _needs_K(kernel):
            K = john_boman_constant(domain, args.gen, _point(args.root))
        quad = PairQuadrature(grid, kernel, args.p, diagonal_depth=args.diagonal_depth)
    fields = field_batch(grid, args.fields, args.seed)
    records = [verify_inequality(u, args.p, kernel, localized=cov, K=K, quadrature=quad) for u in fields]
    if args.gap:
        gap = refinement_gap(grid, args.fields, args.seed, args.p, kernel, K)
        if gap is not None:
            logger.info("Refinement gap: ratio %.6g at depth r, %.6g at r-1 (relative %.3g)", gap["fine"], gap["coarse"], gap["relative_gap"])
    params = {"p": args.p, "kernel": kernel.label, "localized": args.localized or None}
    with open_output(args.out) as out:
        if args.format == "json":
            write_json({"records": records, **params}, out, args.seed)
        else:
            write_records_csv(records, out, args.seed, **params)
    return 0 if all(r.passed for r in records) else 1


def cmd_constants(args: argparse.Namespace) -> int:
    if args.variant == "cube":
        result = cube_breakdown(args.n, args.p, args.s, args.tau, args.L)
    elif args.variant == "radial":
        result = radial_breakdown(args.n, args.p, args.beta, args.K)
    else:
        result = breakdown(args.n, args.p, args.s, args.tau, args.beta, args.K)
    with open_output(args.out) as out:
        write_json(result, out, args.seed)
    return 0


def cmd_estimate(args: argparse.Namespace) -> int:
    domain = build_domain(args.domain)
    grid = _grid(domain, args)
    F = _boundary(domain, args.F)
    kernel = _kernel(args, domain, F)
    result = sharp_constant_estimate(grid, args.p, kernel, args.method, args.budget, args.seed, args.diagonal_depth)
    doc = result.to_json()
    if not args.certificate:
        doc.pop("certificate")
    doc["kernel"] = kernel.to_json()
    with open_output(args.out) as out:
        write_json(doc, out, args.seed)
    return 0


def cmd_sweep_tau(args: argparse.Namespace) -> int:
    domain = build_domain(args.domain)
    grid = _grid(domain, args)
    F = _boundary(domain, args.F)
    rows = tau_sweep(
        grid,
        args.p,
        args.s,
        args.beta,
        F,
        _floats(args.taus),
        args.K,
        args.gen,
        args.method,
        args.budget,
        args.seed,
        args.diagonal_depth,
    )
    with open_output(args.out) as out:
        write_sweep_csv(rows, out, args.seed, p=args.p, s=args.s, beta=args.beta)
    passed = all(r.empirical <= r.theoretical for r in rows)
    empirical = [r.empirical for r in rows]
    monotone = all(a >= b * (1 - 1e-9) for a, b in zip(empirical, empirical[1:]))
    return 0 if passed and monotone else 1


def cmd_rooms_probe(args: argparse.Namespace) -> int:
    rows = rooms_probe(_ints(args.js), args.k, args.s, args.tau, args.corridor_length, args.min_cells, args.diagonal_depth)
    with open_output(args.out) as out:
        write_rooms_csv(rows, out, args.seed, k=args.k, s=args.s, tau=args.tau)
    # Exploratory: growth is reported, never enforced
    return 0


# --- Parser ---


def _q(text: str) -> float:
    return math.inf if text.lower() in ("inf", "infinity") else float(text)


def _add_common(p: argparse.ArgumentParser, domain: bool = True) -> None:
    if domain:
        p.add_argument("--domain", default="square", help="family name, JSON document, or JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output path (default stdout)")


def _add_grid(p: argparse.ArgumentParser) -> None:
    p.add_argument("--depth", type=int, default=None, help=f"grid depth r (default {settings.DEPTH})")
    p.add_argument("--subdivisions", type=int, default=None, help="grid cells per domain cell side; overrides --depth")
    p.add_argument("--diagonal-depth", type=int, default=None, help=f"touching-pair depth (default {settings.DIAGONAL_DEPTH})")


def _add_cover(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cover", choices=("john", "cube"), default="john")
    p.add_argument("--gen", type=int, default=6, help="Whitney truncation generation")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--root", default=None, help="root hint point, comma separated")


def _add_kernel(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kernel", choices=KERNELS, default="weighted_main")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--F", default=None, help="boundary set: corner, edge, boundary, or JSON")
    p.add_argument("--rho", choices=RHO_FAMILIES, default="power")
    p.add_argument("--cap", type=float, default=1.0, help="plateau level of the plateau rho")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracpoin", description="Weighted fractional Poincaré inequalities on John domains")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("whitney", help="Whitney decomposition and its checks")
    _add_common(p)
    p.add_argument("--gen", type=int, default=6)
    p.set_defaults(func=cmd_whitney)

    p = sub.add_parser("cover-cube", help="chain covering of a cube")
    _add_common(p, domain=False)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--side", default="1")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--m", type=int, default=None)
    p.set_defaults(func=cmd_cover_cube)

    p = sub.add_parser("cover-john", help="tree covering of a John domain")
    _add_common(p)
    p.add_argument("--gen", type=int, default=6)
    p.add_argument("--root", default=None)
    p.add_argument("--F", default=None)
    p.set_defaults(func=cmd_cover_john)

    p = sub.add_parser("decompose", help="orthogonal decomposition of a field")
    _add_common(p)
    _add_grid(p)
    _add_cover(p)
    p.add_argument("--field", default="random")
    p.add_argument("--q", type=_q, default=2.0)
    p.add_argument("--parts", action="store_true", help="include the parts in the output")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("hardy-probe", help="norm probe of the tree Hardy operator")
    _add_common(p)
    _add_grid(p)
    _add_cover(p)
    p.add_argument("--q", type=_q, default=2.0)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--F", default=None)
    p.set_defaults(func=cmd_hardy_probe)

    p = sub.add_parser("verify", help="check the inequality on a batch of fields")
    _add_common(p)
    _add_grid(p)
    _add_kernel(p)
    p.add_argument("--fields", default="random:50")
    p.add_argument("--localized", action="store_true")
    p.add_argument("--gen", type=int, default=6)
    p.add_argument("--root", default=None)
    p.add_argument("--K", type=Fraction, default=None)
    p.add_argument("--gap", action="store_true", help="log the ratio gap against the coarser grid")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("constants", help="closed-form constants")
    _add_common(p, domain=False)
    p.add_argument("--variant", choices=("john", "cube", "radial"), default="john")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--K", type=float, default=1.0)
    p.add_argument("--L", type=float, default=1.0)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("estimate", help="empirical lower bound on the sharp constant")
    _add_common(p)
    _add_grid(p)
    _add_kernel(p)
    p.add_argument("--method", choices=METHODS, default="rayleigh")
    p.add_argument("--budget", type=int, default=200)
    p.add_argument("--certificate", action="store_true", help="include the maximizing field")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep-tau", help="theoretical and empirical constants across tau")
    _add_common(p)
    _add_grid(p)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--F", default=None)
    p.add_argument("--taus", default="0.2,0.4,0.6,0.8")
    p.add_argument("--K", type=Fraction, default=None)
    p.add_argument("--gen", type=int, default=6)
    p.add_argument("--method", choices=METHODS, default="rayleigh")
    p.add_argument("--budget", type=int, default=200)
    p.set_defaults(func=cmd_sweep_tau)

    p = sub.add_parser("rooms-probe", help="exploratory probe on rooms joined by narrowing corridors")
    _add_common(p, domain=False)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--js", default="1,2,3")
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--corridor-length", default="1/2")
    p.add_argument("--min-cells", type=int, default=1)
    p.add_argument("--diagonal-depth", type=int, default=None)
    p.set_defaults(func=cmd_rooms_probe)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _config(args)
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"fracpoin {args.command}: {exc}", file=sys.stderr)
        return 2


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=settings.LOG_LEVEL,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
