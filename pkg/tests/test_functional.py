import math
from fractions import Fraction
from functools import lru_cache
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracpoin import functional
from fracpoin.constants import breakdown, cube_breakdown, radial_breakdown
from fracpoin.covering import boman_constant, john_boman_constant
from fracpoin.fields import Grid, constant_field, coordinate_field, field_batch
from fracpoin.functional import (
    KernelSpec,
    LocalizedQuadrature,
    PairQuadrature,
    RatioRecord,
    boundary_weight,
    diagonal_convergence,
    gagliardo,
    localized_energy,
    lp_norm,
    refinement_gap,
    touching_template,
    verify_cube_inequality,
    verify_inequality,
    weighted_average,
)
from fracpoin.geometry import build_boundary_set, l_shape, square
from tests.oracles import energy_estimate, weighted_average_estimate


@pytest.fixture(scope="module")
def fine_grid():
    return Grid.from_depth(square(), 5)


@pytest.fixture(scope="module")
def mid_grid():
    """16 x 16 grid: every covering node holds several cells."""
    return Grid.from_depth(square(), 4)


@pytest.fixture(scope="module")
def u(coarse_grid):
    return field_batch(coarse_grid, "random:1", 11)[0]


def _brute_classical(u, s, p):
    grid = u.grid
    mids = grid.midpoints
    total = 0.0
    for i, j in product(range(len(grid)), repeat=2):
        if i == j:
            continue
        r = np.linalg.norm(mids[i] - mids[j])
        total += grid.weight**2 * abs(u.values[i] - u.values[j]) ** p / r ** (grid.n + s * p)
    return total


# --- Kernels ---


@pytest.mark.parametrize(
    "make",
    [
        lambda: KernelSpec("fancy", 0.5),
        lambda: KernelSpec.classical(1.0),
        lambda: KernelSpec.classical(0.0),
        lambda: KernelSpec("tau_ball", 0.5),
        lambda: KernelSpec.tau_ball(0.5, 1.0),
        lambda: KernelSpec.weighted_main(0.5, 0.5, beta=1.0),
        lambda: KernelSpec.weighted_main(0.5, 0.5, beta=-1.0),
        lambda: KernelSpec("classical", 0.5, beta=1.0, F=build_boundary_set(square(), "corner")),
        lambda: KernelSpec("cube_ball", 0.5),
        lambda: KernelSpec.cube_ball(0.5, 0),
        lambda: KernelSpec.radial(0.5, rho="plateau", cap=0.0),
        lambda: KernelSpec.radial(0.5, rho="exotic"),
    ],
)
def test_kernel_validation(make):
    with pytest.raises(ValueError):
        make()


def test_kernel_geometry():
    d = np.array([0.25, 0.5])
    np.testing.assert_allclose(KernelSpec.tau_ball(0.5, 0.5).ball_radius(d), [0.125, 0.25])
    np.testing.assert_allclose(KernelSpec.radial(0.5).ball_radius(d), d)
    assert np.all(np.isinf(KernelSpec.classical(0.5).ball_radius(d)))
    np.testing.assert_allclose(KernelSpec.cube_ball(0.5, "1/4").ball_radius(d), 0.25)
    np.testing.assert_allclose(KernelSpec.weighted_main(0.5, 0.5).prefactor(d, None, 2.0), d)
    np.testing.assert_allclose(KernelSpec.radial(0.5).prefactor(d, None, 2.0), 2 * d)


def test_kernel_density():
    kernel = KernelSpec.tau_ball(0.5, 0.5)
    x = np.array([[0.5, 0.5], [0.5, 0.5]])
    y = np.array([[0.6, 0.5], [0.9, 0.5]])
    mu = kernel.density(x, y, np.array([0.5, 0.5]), None, 2.0)
    assert mu[0] == pytest.approx(0.1**-3)
    assert mu[1] == 0


def test_kernel_labels():
    assert KernelSpec.radial(0.5, rho="logarithmic").label == "radial:logarithmic"
    assert KernelSpec.classical(0.5).symmetric
    assert not KernelSpec.tau_ball(0.5, 0.5).symmetric
    assert KernelSpec.cube_ball(0.5, "1/4").to_json()["radius"] == "1/4"


# --- Touching templates ---


@pytest.mark.parametrize("delta", [(1, 0), (1, 1), (0, -1)])
@pytest.mark.parametrize("depth", [0, 1, 2])
def test_touching_template_partitions_the_pair(delta, depth):
    dist, weights = touching_template(delta, depth)
    assert math.fsum(weights.tolist()) == pytest.approx(1.0)
    assert np.all(np.diff(dist) >= 0)
    assert dist.min() > 0


def test_touching_template_depth_zero_is_midpoint_rule():
    dist, weights = touching_template((1, 1), 0)
    np.testing.assert_allclose(dist, [math.sqrt(2)])
    np.testing.assert_allclose(weights, [1.0])


# --- Averages and norms ---


def test_constant_field_is_exact(coarse_grid):
    c = constant_field(coarse_grid, 3.7)
    assert weighted_average(c) == 3.7
    F = build_boundary_set(coarse_grid.domain, "corner")
    assert weighted_average(c, 1.0, F) == 3.7
    assert lp_norm(c, 2.0) == 0
    assert gagliardo(c, KernelSpec.classical(0.5), 2.0) == 0


def test_lp_norm_of_coordinate(fine_grid):
    assert lp_norm(coordinate_field(fine_grid, 0), 2.0) == pytest.approx(1 / math.sqrt(12), rel=1e-3)
    assert weighted_average(coordinate_field(fine_grid, 1)) == pytest.approx(0.5)


def test_weighted_average_leans_away_from_f(fine_grid):
    edge = build_boundary_set(fine_grid.domain, "edge")
    x = coordinate_field(fine_grid, 0)
    # weight x**2: integral of x**3 over integral of x**2
    assert weighted_average(x, 1.0, edge, 2.0) == pytest.approx(0.75, rel=1e-3)


def test_lp_norm_center(coarse_grid):
    x = coordinate_field(coarse_grid, 0)
    assert lp_norm(x, 2.0, center=0.0) > lp_norm(x, 2.0)


@pytest.mark.parametrize("call", [lambda g: lp_norm(constant_field(g, 1), 1.0), lambda g: weighted_average(constant_field(g, 1), -1.0)])
def test_norm_rejects(coarse_grid, call):
    with pytest.raises(ValueError):
        call(coarse_grid)


def test_boundary_weight_needs_f(coarse_grid):
    with pytest.raises(ValueError):
        boundary_weight(coarse_grid, 1.0, None, 2.0)
    np.testing.assert_array_equal(boundary_weight(coarse_grid, 0.0, None, 2.0), 1.0)


# --- Double integrals ---


@pytest.mark.parametrize("s, p", [(0.5, 2.0), (0.3, 1.5)])
def test_classical_matches_brute_force(u, s, p):
    value = gagliardo(u, KernelSpec.classical(s), p, diagonal_depth=0)
    assert value == pytest.approx(_brute_classical(u, s, p), rel=1e-12)


def test_energy_matches_pair_weights(u):
    for kernel in (KernelSpec.classical(0.5), KernelSpec.tau_ball(0.5, 0.5), KernelSpec.radial(0.4)):
        quad = PairQuadrature(u.grid, kernel, 2.0, diagonal_depth=1)
        w = quad.pair_weights()
        direct = float(np.sum(w * (u.values[:, None] - u.values[None, :]) ** 2))
        assert quad.energy(u.values) == pytest.approx(direct, rel=1e-12)


def test_symmetric_weights_are_symmetric(u):
    w = PairQuadrature(u.grid, KernelSpec.classical(0.5), 2.0, diagonal_depth=2).pair_weights()
    np.testing.assert_allclose(w, w.T, rtol=1e-13)
    assert np.all(np.diag(w) == 0)


@lru_cache(maxsize=1)
def _tau_quadrature() -> PairQuadrature:
    return PairQuadrature(Grid.from_depth(square(), 2), KernelSpec.tau_ball(0.5, 0.5), 2.0, diagonal_depth=1)


@settings(max_examples=25, deadline=None)
@given(st.floats(-50, 50).filter(lambda v: abs(v) > 1e-3), st.floats(-100, 100))
def test_energy_homogeneity_and_shift(factor, shift):
    quad = _tau_quadrature()
    values = field_batch(quad.grid, "random:1", 5)[0].values
    base = quad.energy(values)
    assert quad.energy(factor * values) == pytest.approx(abs(factor) ** 2 * base, rel=1e-9)
    assert quad.energy(values + shift) == pytest.approx(base, rel=1e-6)


def test_energy_grows_with_tau(u):
    energies = [gagliardo(u, KernelSpec.tau_ball(0.5, tau), 2.0, diagonal_depth=1) for tau in (0.4, 0.6, 0.9)]
    energies.append(gagliardo(u, KernelSpec.classical(0.5), 2.0, diagonal_depth=1))
    assert energies == sorted(energies)
    assert energies[0] > 0


def test_weighted_main_is_damped_tau_ball(u):
    tau = gagliardo(u, KernelSpec.tau_ball(0.5, 0.5), 2.0, diagonal_depth=1)
    weighted = gagliardo(u, KernelSpec.weighted_main(0.5, 0.5), 2.0, diagonal_depth=1)
    # prefactor d**(ps) with d <= 1/2 on the unit square
    assert 0 < weighted <= tau * 0.5 ** (2.0 * 0.5) * (1 + 1e-12)


def test_plateau_above_range_matches_power(u):
    power = gagliardo(u, KernelSpec.radial(0.5), 2.0, diagonal_depth=1)
    plateau = gagliardo(u, KernelSpec.radial(0.5, rho="plateau", cap=1e6), 2.0, diagonal_depth=1)
    assert plateau == pytest.approx(power, rel=1e-12)
    capped = gagliardo(u, KernelSpec.radial(0.5, rho="plateau", cap=0.01), 2.0, diagonal_depth=1)
    # the cap removes the (2d / r)**(sp) gain inside the ball
    assert 0 < capped < power


def test_threaded_blocks_agree(monkeypatch, u):
    kernel = KernelSpec.tau_ball(0.5, 0.5)
    single = PairQuadrature(u.grid, kernel, 2.0, diagonal_depth=1).energy(u.values)
    monkeypatch.setattr(functional, "BLOCK_ENTRIES", 32)
    serial = PairQuadrature(u.grid, kernel, 2.0, diagonal_depth=1, threads=1)
    threaded = PairQuadrature(u.grid, kernel, 2.0, diagonal_depth=1, threads=3)
    assert len(threaded.blocks) == 16
    assert threaded.energy(u.values) == serial.energy(u.values)
    assert serial.energy(u.values) == pytest.approx(single, rel=1e-12)


def test_region_restricts_pairs(u):
    kernel = KernelSpec.classical(0.5)
    mask = u.grid.midpoints[:, 0] < 0.5
    part = gagliardo(u, kernel, 2.0, region=mask, diagonal_depth=1)
    whole = gagliardo(u, kernel, 2.0, diagonal_depth=1)
    assert 0 < part < whole


def test_diagonal_convergence(u):
    rows = diagonal_convergence(u, KernelSpec.classical(0.5), 2.0, depths=(0, 1, 2))
    assert [row["depth"] for row in rows] == [0, 1, 2]
    assert rows[0]["relative_change"] is None
    assert all(row["value"] > 0 for row in rows)
    assert rows[2]["relative_change"] < 0.5


def test_quadrature_rejects(coarse_grid):
    with pytest.raises(ValueError):
        PairQuadrature(coarse_grid, KernelSpec.classical(0.5), 1.0)
    with pytest.raises(ValueError):
        PairQuadrature(coarse_grid, KernelSpec.classical(0.5), 2.0, diagonal_depth=-1)


# --- Ratio records ---


def test_ratio_record_edge_cases():
    meta = dict(domain="square", p=2.0, s=0.5, tau=None, beta=0.0, kernel="classical", field_id="f")
    counter = RatioRecord.from_sides(1.0, 0.0, None, **meta)
    assert counter.counterexample and not counter.passed and counter.ratio == math.inf
    flat = RatioRecord.from_sides(0.0, 0.0, 1.0, **meta)
    assert flat.passed and flat.ratio == 0.0
    unbounded = RatioRecord.from_sides(1.0, 2.0, None, **meta)
    assert unbounded.passed and unbounded.ratio == 0.5
    failing = RatioRecord.from_sides(3.0, 1.0, 2.0, **meta)
    assert not failing.passed
    row = failing.csv_row()
    assert row[3] == "" and row[-1] == "false" and row[-2] == "2.0"


# --- Inequality checks ---


def test_classical_inequality(coarse_grid):
    for field in field_batch(coarse_grid, "random:5", 0):
        record = verify_inequality(field, 2.0, KernelSpec.classical(0.5), diagonal_depth=1)
        assert record.constant == pytest.approx(2**0.75)
        assert record.passed
        assert 0 < record.ratio < record.constant


def test_weighted_inequality(coarse_grid):
    F = build_boundary_set(coarse_grid.domain, "corner")
    kernel = KernelSpec.weighted_main(0.5, 0.5, 1.0, F)
    quad = PairQuadrature(coarse_grid, kernel, 2.0, diagonal_depth=1)
    K = Fraction(41, 8)
    for field in field_batch(coarse_grid, "bump:3", 2):
        record = verify_inequality(field, 2.0, kernel, K=K, quadrature=quad)
        assert record.passed
        assert record.beta == 1.0 and record.tau == 0.5
        assert record.constant == pytest.approx(breakdown(2, 2.0, 0.5, 0.5, 1.0, K).total)


DOMAINS = {"square": square, "l_shape": l_shape}


@lru_cache(maxsize=None)
def _john_K(name):
    return john_boman_constant(DOMAINS[name](), 5)


@pytest.mark.parametrize("tau", [0.25, 0.5])
@pytest.mark.parametrize("beta", [0.0, 1.0])
@pytest.mark.parametrize("name, depth", [("square", 2), ("l_shape", 1)])
def test_weighted_inequality_matrix(name, depth, beta, tau):
    domain = DOMAINS[name]()
    grid = Grid.from_depth(domain, depth)
    kernel = KernelSpec.weighted_main(0.5, tau, beta, build_boundary_set(domain, "corner"))
    # boundary cells reach their neighbours only below depth 4 when tau = 1/4
    quad = PairQuadrature(grid, kernel, 2.0, diagonal_depth=4)
    K = _john_K(name)
    for field in field_batch(grid, "random:5", 7):
        record = verify_inequality(field, 2.0, kernel, K=K, quadrature=quad)
        assert record.passed, record.ratio
        assert record.constant == pytest.approx(breakdown(2, 2.0, 0.5, tau, beta, K).total)


def test_power_radial_reduces_to_classical(unit_square):
    rng = np.random.default_rng(5)
    r = rng.uniform(1e-3, 2.0, 1000)
    for p in (2.0, 3.0):
        np.testing.assert_allclose(
            KernelSpec.radial(0.4).singular(r, 2, p), KernelSpec.classical(0.4).singular(r, 2, p), rtol=1e-12
        )
    x, y = rng.random((500, 2)), rng.random((500, 2))
    d = unit_square.distance(x)
    radial = KernelSpec.radial(0.4).density(x, y, d, None, 2.0)
    classical = KernelSpec.classical(0.4).density(x, y, d, None, 2.0)
    inside = np.linalg.norm(y - x, axis=1) < d
    np.testing.assert_allclose(radial, np.where(inside, (2 * d) ** 0.8 * classical, 0.0), rtol=1e-12)


@pytest.mark.parametrize("rho", ["power", "logarithmic", "plateau"])
def test_radial_inequality(coarse_grid, rho):
    F = build_boundary_set(coarse_grid.domain, "corner")
    kernel = KernelSpec.radial(0.5, rho=rho, beta=1.0, F=F, cap=0.2)
    quad = PairQuadrature(coarse_grid, kernel, 2.0, diagonal_depth=2)
    K = Fraction(41, 8)
    for field in field_batch(coarse_grid, "random:20", 5):
        record = verify_inequality(field, 2.0, kernel, K=K, quadrature=quad)
        assert record.passed, record.ratio
        assert record.kernel == f"radial:{rho}"
        assert record.constant == pytest.approx(radial_breakdown(2, 2.0, 1.0, K).total)


def test_explicit_constant_can_fail(coarse_grid):
    field = coordinate_field(coarse_grid, 0)
    record = verify_inequality(field, 2.0, KernelSpec.classical(0.5), constant=1e-9, diagonal_depth=0)
    assert not record.passed
    assert record.field_id == "coordinate:0"


def test_localized_inequality(mid_grid, john_cover):
    kernel = KernelSpec.weighted_main(0.5, 0.5)
    field = field_batch(mid_grid, "random:1", 3)[0]
    energy = localized_energy(field, kernel, 2.0, john_cover, diagonal_depth=0)
    assert energy > 0
    quad = LocalizedQuadrature(mid_grid, kernel, 2.0, john_cover, diagonal_depth=0)
    assert quad.energy(field.values) == pytest.approx(energy, rel=1e-12)
    record = verify_inequality(field, 2.0, kernel, localized=john_cover, quadrature=quad)
    assert record.localized
    assert record.constant == pytest.approx(breakdown(2, 2.0, 0.5, 0.5, 0.0, boman_constant(john_cover)).total)
    assert record.passed


@pytest.mark.parametrize("localized", [False, True])
def test_cube_inequality(mid_grid, localized):
    field = field_batch(mid_grid, "random:1", 9)[0]
    record = verify_cube_inequality(field, 2.0, 0.5, 0.5, localized=localized, diagonal_depth=1)
    assert record.tau == pytest.approx(0.5)
    assert record.kernel == "cube_ball"
    assert record.passed
    if localized:
        assert record.constant == pytest.approx(cube_breakdown(2, 2.0, 0.5, 0.5, 1.0).total)


def test_cube_inequality_needs_a_cube():
    grid = Grid.from_depth(l_shape(), 1)
    with pytest.raises(ValueError):
        verify_cube_inequality(field_batch(grid, "random:1", 0)[0], 2.0, 0.5, 0.5)


def test_refinement_gap(coarse_grid):
    gap = refinement_gap(coarse_grid, "coordinate:0", 0, 2.0, KernelSpec.classical(0.5))
    assert gap is not None
    assert gap["fine"] > 0 and gap["coarse"] > 0
    assert gap["relative_gap"] >= 0
    assert refinement_gap(Grid(square(), 3), "coordinate:0", 0, 2.0, KernelSpec.classical(0.5)) is None


# Monte Carlo agreement: 4 standard errors plus the change of the grid value
# under one refinement, which bounds the discretisation error.
SAMPLES = 200_000


def _corner_weighted(s, tau):
    return KernelSpec.weighted_main(s, tau, 1.0, build_boundary_set(square(), "corner"))


@pytest.mark.parametrize(
    "domain, depth, axis, kernel, p",
    [
        (square(), 5, 0, KernelSpec.classical(0.25), 2.0),
        (square(), 5, 0, KernelSpec.classical(0.25), 3.0),
        (l_shape(), 4, 1, KernelSpec.classical(0.4), 2.0),
        (square(), 5, 0, KernelSpec.tau_ball(0.25, 0.5), 2.0),
        (square(), 5, 1, _corner_weighted(0.25, 0.5), 2.0),
    ],
    ids=["classical-p2", "classical-p3", "l_shape", "tau_ball", "weighted_corner"],
)
def test_energy_matches_monte_carlo(domain, depth, axis, kernel, p):
    fine = Grid.from_depth(domain, depth)
    coarse = Grid.from_depth(domain, depth - 1)
    value = gagliardo(coordinate_field(fine, axis), kernel, p, diagonal_depth=3)
    previous = gagliardo(coordinate_field(coarse, axis), kernel, p, diagonal_depth=3)
    estimate, error = energy_estimate(domain, axis, kernel, p, SAMPLES, seed=depth + axis)
    assert abs(value - estimate) <= 4 * error + 2 * abs(value - previous)


@pytest.mark.parametrize(
    "domain, axis, beta, F, p, exact",
    [
        (square(), 0, 1.0, "corner", 2.0, 5 / 8),
        (square(), 0, 0.5, "edge", 2.0, 2 / 3),
        (l_shape(), 0, 1.0, "boundary", 3.0, None),
    ],
)
def test_weighted_average_matches_monte_carlo(domain, axis, beta, F, p, exact):
    boundary = build_boundary_set(domain, F)
    fine = weighted_average(coordinate_field(Grid.from_depth(domain, 6), axis), beta, boundary, p)
    coarse = weighted_average(coordinate_field(Grid.from_depth(domain, 5), axis), beta, boundary, p)
    estimate, error = weighted_average_estimate(domain, axis, beta, boundary, p, 10 * SAMPLES, seed=11)
    assert abs(fine - estimate) <= 4 * error + 2 * abs(fine - coarse)
    if exact is not None:
        assert fine == pytest.approx(exact, abs=1e-4)
