from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from loguru import logger

from .exceptions import UserException, MaskedNodeException
from .model.grid import SpatialGrid, DensityStack, VectorStack
from .model.landscape import EnergyLandscape, GibbsDensity
from .pde import solve_heat, score_field, default_grid, gibbs_on_grid
from .sde import DiffusionSpec, PathEnsemble, simulate_reverse, REVERSE, EXPLOSION_FACTOR
from .util import as_points, sample_grid_density, wasserstein1

INITIAL_PINNED = "initial-pinned"
FINAL_PINNED = "final-pinned"


@dataclass
class HalfBridgeSolution:
    """Optimal process of a half-bridge problem against scaled stationary Wiener measure (σ² = 1/β).

    `stack` holds the marginals q*(·, t) for t in [0, T] in forward time.
    """

    which: str
    marginal: np.ndarray
    beta: float
    stack: DensityStack
    _score: Optional[VectorStack] = field(default=None, repr=False)

    @property
    def sigma2(self) -> float:
        return 1 / self.beta

    @property
    def zero_drift_side(self) -> str:
        return "forward" if self.which == INITIAL_PINNED else "backward"

    @property
    def grid(self) -> SpatialGrid:
        return self.stack.grid

    @property
    def T(self) -> float:
        return float(self.stack.times[-1])

    @property
    def score(self) -> VectorStack:
        if self._score is None:
            self._score = score_field(self.stack)
        return self._score

    def _scaled_score(self, points: np.ndarray, t: float, sign: float) -> np.ndarray:
        values = sign * self.sigma2 * self.score.interpolate(points, t)
        if np.isnan(values).any():
            where = points[np.isnan(values).any(axis=-1)][0]
            raise MaskedNodeException(f"x={where.tolist()}, t={t:.6g}")
        return values

    def backward_drift(self, x: np.ndarray, t: float) -> np.ndarray:
        """Backward drift as a simulation drift (points of shape (n, dim))"""
        if self.which == FINAL_PINNED:
            return np.zeros_like(x)
        return self._scaled_score(x, t, -1.0)

    def forward_drift(self, x: np.ndarray, t: float) -> np.ndarray:
        if self.which == INITIAL_PINNED:
            return np.zeros_like(x)
        return self._scaled_score(x, t, 1.0)


def _check_marginal(values, grid: SpatialGrid, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise UserException(f"{what} of shape {values.shape} does not match {grid}")
    if np.min(values) < 0:
        raise UserException(f"{what} is negative somewhere")
    mass = grid.integrate(values)
    if abs(mass - 1) > 1e-4:
        raise UserException(f"{what} has mass {mass:.6f}, expected 1")
    return values


def solve_problem1(rho0, beta: float, gamma: float, grid: SpatialGrid, steps=None) -> HalfBridgeSolution:
    """Initial marginal prescribed: keep the zero forward drift of the prior, so q₁*(·, t) is the heat flow of ρ₀"""
    rho0 = _check_marginal(rho0, grid, "Initial marginal")
    stack = solve_heat(rho0, beta, gamma, steps, grid)
    return HalfBridgeSolution(INITIAL_PINNED, rho0, beta, stack)


def solve_problem2(rho1, beta: float, gamma: float, grid: SpatialGrid, steps=None) -> HalfBridgeSolution:
    """Final marginal prescribed: keep the zero backward drift, so q₂*(·, T - s) is the heat flow of ρ₁ for time s"""
    rho1 = _check_marginal(rho1, grid, "Final marginal")
    heat = solve_heat(rho1, beta, gamma, steps, grid)
    stack = DensityStack(grid, heat.times, heat.values[::-1].copy(), beta=beta)
    return HalfBridgeSolution(FINAL_PINNED, rho1, beta, stack)


def backward_drift_q1(sol: HalfBridgeSolution, x, t: float):
    """-σ² ∇log q₁*(x, t)"""
    if sol.which != INITIAL_PINNED:
        raise UserException("The backward drift of Q₁* needs an initial-pinned solution")
    if t <= 0:
        raise UserException(f"The backward drift of Q₁* is evaluated at t > 0, got {t}")
    points, single = as_points(x, sol.grid.dim)
    values = sol.backward_drift(points, t)
    return values[0] if single else values


def forward_drift_q2(sol: HalfBridgeSolution, x, t: float):
    """+σ² ∇log q₂*(x, t)"""
    if sol.which != FINAL_PINNED:
        raise UserException("The forward drift of Q₂* needs a final-pinned solution")
    points, single = as_points(x, sol.grid.dim)
    values = sol.forward_drift(points, t)
    return values[0] if single else values


def grid_sampler(grid: SpatialGrid, density: np.ndarray):
    def sample(n, rng):
        return sample_grid_density(grid.axes, density, n, rng)

    return sample


@dataclass
class GibbsSamples:
    samples: np.ndarray
    initial: np.ndarray
    w1: float
    gibbs: GibbsDensity
    solution: HalfBridgeSolution
    ensemble: PathEnsemble = field(repr=False)


def reverse_sample_gibbs(
    landscape: EnergyLandscape,
    beta: float,
    gamma: float,
    K: int,
    N: int,
    seed: int,
    grid: Optional[SpatialGrid] = None,
    steps: Optional[int] = None,
    threads=None,
) -> GibbsSamples:
    """Draws X(γ) ~ q₁*(·, γ) and runs the backward representation of Q₁* down to t = 0,
    returning the t = 0 samples and their W1 distance to the Gibbs density
    """
    if landscape.dim not in (1, 2):
        raise UserException("Reverse-time Gibbs sampling needs a 1-D or 2-D landscape")
    gibbs = GibbsDensity(landscape, beta)
    grid = grid or default_grid(landscape, beta, gamma)
    rho_bar = gibbs_on_grid(gibbs, grid)
    solution = solve_problem1(rho_bar / grid.integrate(rho_bar), beta, gamma, grid, steps)

    spec = DiffusionSpec(
        dim=landscape.dim,
        drift=solution.backward_drift,
        sigma=1 / np.sqrt(beta),
        direction=REVERSE,
        T=gamma,
        bound=EXPLOSION_FACTOR * landscape.box_half_width(beta),
    )
    final = grid_sampler(grid, solution.stack.values[-1])
    ensemble = simulate_reverse(spec, final, K, N, seed, record="ends", threads=threads)
    samples = ensemble.at_step(0)
    w1 = wasserstein1(samples, grid.axes, rho_bar)
    logger.info(f"Reverse-time sampling of {landscape} at beta={beta}: W1 to the Gibbs density {w1:.4f}")
    return GibbsSamples(samples, ensemble.at_step(K), w1, gibbs, solution, ensemble)
