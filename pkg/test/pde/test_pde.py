import numpy as np
import pytest

from hblab.exceptions import CflException, UserException
from hblab.model.grid import DensityStack, SpatialGrid
from hblab.model.landscape import Constant, GibbsDensity
from hblab.pde import (
    bulk_linf,
    cole_hopf,
    convergence_order,
    default_grid,
    gibbs_on_grid,
    hjb_residual,
    score_field,
    solve_heat,
    solve_hjb,
)
from hblab.smoothing import gaussian_oracle


def normal_density(points, variance):
    return np.exp(-np.sum(points**2, axis=-1) / (2 * variance)) / np.sqrt(2 * np.pi * variance) ** points.shape[-1]


@pytest.fixture
def line():
    return SpatialGrid.centered(12.0, 801)


def test_heat_flow_conserves_mass(double_well):
    """Checks that the heat flow of the Gibbs density keeps its mass"""
    gibbs = GibbsDensity(double_well, 1.0)
    grid = default_grid(double_well, 1.0, 1.0)
    rho = solve_heat(gibbs_on_grid(gibbs, grid), 1.0, 1.0, 100, grid)
    assert len(rho.times) == 101
    assert np.ptp(rho.masses()) <= 1e-8
    assert np.min(rho.values) >= 0


def test_heat_flow_of_a_gaussian(line):
    """Checks that N(0, 1) flows to N(0, 1 + γ/β)"""
    beta, gamma = 2.0, 1.0
    rho = solve_heat(normal_density(line.points(), 1.0), beta, gamma, 100, line)
    final = rho.values[-1]
    expected = normal_density(line.points(), 1 + gamma / beta)
    assert np.max(np.abs(final - expected)) <= 1e-4
    variance = line.integrate(line.points()[..., 0] ** 2 * final)
    assert variance == pytest.approx(1 + gamma / beta, abs=1e-4)


def test_heat_flow_in_two_dimensions():
    """Checks the axis-split heat flow against the product Gaussian"""
    grid = SpatialGrid.centered(8.0, 161, dim=2)
    rho = solve_heat(normal_density(grid.points(), 1.0), 1.0, 0.5, 50, grid)
    assert np.ptp(rho.masses()) <= 1e-8
    assert np.max(np.abs(rho.values[-1] - normal_density(grid.points(), 1.5))) <= 5e-4


def test_zero_time_heat_flow(line):
    """Checks that γ = 0 records the initial density alone"""
    rho0 = normal_density(line.points(), 1.0)
    rho = solve_heat(rho0, 1.0, 0.0, 10, line)
    assert rho.times.tolist() == [0.0]
    assert np.array_equal(rho.values[0], rho0)


def test_heat_flow_rejects_negative_density(line):
    """Checks that a negative initial density is rejected"""
    rho0 = normal_density(line.points(), 1.0)
    rho0[400] = -1.0
    with pytest.raises(UserException):
        solve_heat(rho0, 1.0, 1.0, 10, line)


def test_hjb_schemes_match_the_closed_form(quadratic):
    """Checks both HJB schemes against the Gaussian local entropy in the bulk"""
    grid = SpatialGrid.centered(8.0, 321)
    u0 = quadratic.energy(grid.points())
    region = [(-3.0, 3.0)]
    for scheme, tolerance in (("cole-hopf", 1e-3), ("direct", 5e-3)):
        u = solve_hjb(u0, 1.0, 0.5, 50, grid, scheme=scheme)
        for k in (10, 50):
            exact = gaussian_oracle(1.0, u.times[k], grid.points())
            assert bulk_linf(u.values[k], exact, grid, region) <= tolerance, (scheme, k)


def test_cole_hopf_of_the_gibbs_flow_solves_hjb(double_well):
    """Checks that -(1/β) log ρ + c(β) of the Gibbs heat flow is the HJB solution started at f"""
    beta, gamma = 2.0, 0.5
    gibbs = GibbsDensity(double_well, beta)
    grid = default_grid(double_well, beta, gamma, npts=401)
    rho = solve_heat(gibbs_on_grid(gibbs, grid), beta, gamma, 50, grid)
    u_cole_hopf = cole_hopf(rho, gibbs.c_beta)
    u_heat = solve_hjb(double_well.energy(grid.points()), beta, gamma, 50, grid)
    u_direct = solve_hjb(double_well.energy(grid.points()), beta, gamma, 50, grid, scheme="direct")
    region = [(-2.0, 2.0)]
    assert bulk_linf(u_cole_hopf.values[0], double_well.energy(grid.points()), grid) <= 1e-10
    for k in range(len(rho.times)):
        assert bulk_linf(u_cole_hopf.values[k], u_heat.values[k], grid, region) <= 1e-8
        assert bulk_linf(u_cole_hopf.values[k], u_direct.values[k], grid, region) <= 5e-3


def test_direct_scheme_refuses_unstable_steps(quadratic):
    """Checks that the explicit scheme refuses a step above its stability limit"""
    grid = SpatialGrid.centered(8.0, 321)
    with pytest.raises(CflException) as e:
        solve_hjb(quadratic.energy(grid.points()), 1.0, 1.0, 10, grid, scheme="direct", substeps=1)
    assert e.value.requested_dt > e.value.max_dt


def test_unknown_hjb_scheme(quadratic, line):
    """Checks that an unknown HJB scheme is rejected"""
    with pytest.raises(UserException):
        solve_hjb(quadratic.energy(line.points()), 1.0, 1.0, 10, line, scheme="upwind")


def test_score_of_a_gaussian(line):
    """Checks ∇log ρ = -x/v along the heat flow of N(0, 1)"""
    beta = 1.0
    rho = solve_heat(normal_density(line.points(), 1.0), beta, 1.0, 100, line)
    score = score_field(rho)
    x = line.points()[..., 0]
    for k in (0, 50, 100):
        variance = 1 + rho.times[k] / beta
        assert bulk_linf(score.values[k][..., 0], -x / variance, line, [(-4.0, 4.0)]) <= 1e-3


def test_cole_hopf_masks_underflow():
    """Checks that nodes where the density underflows are masked instead of producing infinities"""
    grid = SpatialGrid.centered(60.0, 601)
    rho = DensityStack(grid, [0.0], normal_density(grid.points(), 1.0)[None], beta=1.0)
    u = cole_hopf(rho, 0.0)
    assert u.mask[0, 0]
    assert np.isnan(u.values[0, 0])
    assert not np.isnan(u.values[0, 300])
    assert 0 < u.masked_fraction < 1


def test_hjb_residual_of_the_cole_hopf_solution(quadratic):
    """Checks that the Cole-Hopf solution satisfies the HJB equation in the bulk"""
    grid = SpatialGrid.centered(8.0, 321)
    u = solve_hjb(quadratic.energy(grid.points()), 1.0, 1.0, 100, grid)
    assert np.max(hjb_residual(u, 1.0, [(-2.0, 2.0)])) <= 5e-3


def test_hjb_residual_of_a_constant():
    """Checks that a uniform density gives a constant value function and a vanishing residual"""
    landscape = Constant(dim=1, half_width=3.0)
    gibbs = GibbsDensity(landscape, 1.0)
    grid = default_grid(landscape, 1.0, 1.0, npts=101)
    rho = solve_heat(gibbs_on_grid(gibbs, grid), 1.0, 1.0, 20, grid)
    u = cole_hopf(rho, gibbs.c_beta)
    assert np.max(np.abs(u.values)) <= 1e-10
    assert np.max(hjb_residual(u, 1.0)) <= 1e-8


def test_convergence_order():
    """Checks the fitted order of errors that scale like h²"""
    spacings = [0.1, 0.05, 0.025]
    assert convergence_order(spacings, [3 * h**2 for h in spacings]) == pytest.approx(2.0, abs=1e-10)
    with pytest.raises(UserException):
        convergence_order([0.1, 0.05], [1e-3, 0.0])


def test_default_grid(quadratic):
    """Checks that the default grid widens the landscape box by six kernel standard deviations"""
    grid = default_grid(quadratic, 1.0, 4.0)
    lo, hi = grid.bounds[0]
    assert hi == pytest.approx(quadratic.box_half_width(1.0) + 12.0)
    assert lo == -hi
    assert grid.npts == [801]
    box = Constant(dim=1, half_width=2.0)
    assert default_grid(box, 1.0, 4.0).bounds == [(-2.0, 2.0)]
