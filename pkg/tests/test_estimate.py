import math
from fractions import Fraction

import numpy as np
import pytest

from fracpoin.estimate import (
    SingularFormError,
    random_search_estimate,
    rayleigh_estimate,
    rooms_probe,
    sharp_constant_estimate,
    tau_sweep,
)
from fracpoin.fields import Grid, field_batch
from fracpoin.functional import KernelSpec, PairQuadrature, verify_inequality

CLASSICAL = KernelSpec.classical(0.5)


@pytest.fixture(scope="module")
def rayleigh(coarse_grid):
    return rayleigh_estimate(coarse_grid, CLASSICAL, diagonal_depth=1)


def test_certificate_attains_the_estimate(coarse_grid, rayleigh):
    assert rayleigh.lower_bound
    assert rayleigh.residual <= 1e-6
    quad = PairQuadrature(coarse_grid, CLASSICAL, 2.0, diagonal_depth=1)
    record = verify_inequality(rayleigh.certificate, 2.0, CLASSICAL, constant=math.inf, quadrature=quad)
    assert record.ratio == pytest.approx(rayleigh.estimate, rel=1e-6)


def test_random_fields_stay_below_the_estimate(coarse_grid, rayleigh):
    quad = PairQuadrature(coarse_grid, CLASSICAL, 2.0, diagonal_depth=1)
    for u in field_batch(coarse_grid, "random:20", 3):
        record = verify_inequality(u, 2.0, CLASSICAL, constant=rayleigh.estimate * (1 + 1e-9), quadrature=quad)
        assert record.passed


def test_random_search_is_a_lower_bound(coarse_grid, rayleigh):
    result = random_search_estimate(coarse_grid, CLASSICAL, 2.0, budget=30, seed=1, diagonal_depth=1)
    assert result.method == "random_search"
    assert 0 < result.estimate <= rayleigh.estimate * (1 + 1e-9)


def test_rayleigh_below_the_closed_form(coarse_grid, rayleigh):
    # the classical constant 2**0.75 bounds every discrete ratio
    assert rayleigh.estimate <= 2**0.75


def test_singular_energy_form(coarse_grid):
    # balls of radius 0.1 d(x) never reach another cell's midpoint samples
    with pytest.raises(SingularFormError) as info:
        rayleigh_estimate(coarse_grid, KernelSpec.tau_ball(0.5, 0.1), diagonal_depth=0)
    assert info.value.null_vectors.shape[0] == len(coarse_grid)
    assert info.value.null_vectors.shape[1] >= 1


def test_estimate_rejects(coarse_grid):
    with pytest.raises(ValueError):
        sharp_constant_estimate(coarse_grid, 2.0, CLASSICAL, method="annealing")
    with pytest.raises(ValueError):
        sharp_constant_estimate(coarse_grid, 3.0, CLASSICAL, method="rayleigh")
    with pytest.raises(ValueError):
        random_search_estimate(coarse_grid, CLASSICAL, 2.0, budget=0)


def test_estimate_json(coarse_grid):
    result = sharp_constant_estimate(coarse_grid, 3.0, CLASSICAL, "random_search", budget=10, diagonal_depth=1)
    doc = result.to_json()
    assert doc["method"] == "random_search"
    assert doc["lower_bound"] is True
    assert len(doc["certificate"]["values"]) == 16


def test_tau_sweep(coarse_grid):
    rows = tau_sweep(coarse_grid, 2.0, 0.5, 0.0, None, (0.4, 0.8), K=Fraction(41, 8))
    assert [row.tau for row in rows] == [0.4, 0.8]
    assert all(0 < row.empirical <= row.theoretical for row in rows)
    assert rows[0].empirical >= rows[1].empirical * (1 - 1e-9)
    assert all(row.slack == pytest.approx(row.theoretical / row.empirical) for row in rows)


def test_rooms_probe():
    rows = rooms_probe((1, 2))
    assert [row.cells for row in rows] == [144, 136]
    assert [row.width for row in rows] == ["1/2", "1/4"]
    assert rows[0].growth == 1
    assert np.isfinite(rows[1].estimate) and rows[1].estimate > 0


def test_rooms_probe_needs_exponents():
    with pytest.raises(ValueError):
        rooms_probe(())


def test_tau_sweep_follows_the_power_law(coarse_grid):
    taus = (0.2, 0.4, 0.6, 0.8)
    rows = tau_sweep(coarse_grid, 2.0, 0.5, 0.0, None, taus, K=Fraction(41, 8), diagonal_depth=4)
    slopes = np.diff(np.log([row.theoretical for row in rows])) / np.diff(np.log(taus))
    np.testing.assert_allclose(slopes, 0.5 - 2, atol=1e-12)
    empirical = [row.empirical for row in rows]
    assert all(a >= b * (1 - 1e-9) for a, b in zip(empirical, empirical[1:]))
    assert all(0 < row.empirical <= row.theoretical for row in rows)


def test_rayleigh_is_stable_under_refinement(unit_square):
    coarse = rayleigh_estimate(Grid(unit_square, 12), CLASSICAL, diagonal_depth=2).estimate
    fine = rayleigh_estimate(Grid(unit_square, 16), CLASSICAL, diagonal_depth=2).estimate
    assert abs(fine - coarse) / fine < 0.1
    assert max(coarse, fine) <= 2**0.75
