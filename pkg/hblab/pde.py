from typing import Optional, Sequence

import numpy as np
from loguru import logger
from scipy.linalg import solve_banded

from .exceptions import UserException, NegativeDensityException, CflException, InternalException
from .model.grid import SpatialGrid, DensityStack, ScalarStack, VectorStack
from .model.landscape import EnergyLandscape, GibbsDensity

DEFAULT_STEPS = 200
DEFAULT_NPTS = {1: 801, 2: 201}
NEGATIVE_TOLERANCE = 1e-10
DENSITY_FLOOR = 1e-300
# β(u - min u) above which the HJB initial condition is capped before evolving
TAIL_CAP = 50.0
CFL_SAFETY = 0.9


def default_grid(landscape: EnergyLandscape, beta: float, gamma: float, npts: Optional[int] = None) -> SpatialGrid:
    """Landscape box widened by six kernel standard deviations, or the box itself for non-confining landscapes"""
    extension = 6 * np.sqrt(gamma / beta) if landscape.confining else 0.0
    bounds = [(lo - extension, hi + extension) for lo, hi in landscape.box(beta)]
    return SpatialGrid(bounds, [npts or DEFAULT_NPTS[landscape.dim]] * landscape.dim)


def gibbs_on_grid(gibbs: GibbsDensity, grid: SpatialGrid) -> np.ndarray:
    return gibbs.density(grid.points())


def _check_initial(values: np.ndarray, grid: SpatialGrid, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise UserException(f"Initial {what} of shape {values.shape} does not match {grid}")
    if not np.all(np.isfinite(values)):
        raise UserException(f"Initial {what} is not finite at every grid node")
    return values


class _CrankNicolsonAxis:
    """One Crank-Nicolson step of ∂w/∂t = D ∂²w/∂x² along one axis with reflecting (zero-flux) ends.

    The ghost-node Neumann Laplacian conserves the trapezoid integral of w exactly.
    """

    def __init__(self, n: int, h: float, diffusion: float, dt: float):
        r = 0.5 * dt * diffusion / h**2
        self.r = r
        ab = np.zeros((3, n))
        ab[1, :] = 1 + 2 * r
        ab[0, 1:] = -r
        ab[2, :-1] = -r
        ab[0, 1] = -2 * r
        ab[2, n - 2] = -2 * r
        self.ab = ab

    def explicit_half(self, w: np.ndarray) -> np.ndarray:
        """(I + (Δt/2) D L) w along axis 0"""
        laplacian = np.empty_like(w)
        laplacian[1:-1] = w[:-2] - 2 * w[1:-1] + w[2:]
        laplacian[0] = 2 * (w[1] - w[0])
        laplacian[-1] = 2 * (w[-2] - w[-1])
        return w + self.r * laplacian

    def step(self, w: np.ndarray, axis: int) -> np.ndarray:
        moved = np.moveaxis(w, axis, 0)
        rhs = self.explicit_half(moved)
        shape = rhs.shape
        solved = solve_banded((1, 1), self.ab, rhs.reshape(shape[0], -1), check_finite=False)
        return np.moveaxis(solved.reshape(shape), 0, axis)


class HeatStepper:
    """Crank-Nicolson stepper for ∂w/∂t = (1/2β) Δw, split by axis in two dimensions"""

    def __init__(self, grid: SpatialGrid, beta: float, dt: float):
        self.grid = grid
        self.axes = [_CrankNicolsonAxis(n, h, 1 / (2 * beta), dt) for n, h in zip(grid.npts, grid.h)]

    def step(self, w: np.ndarray) -> np.ndarray:
        for axis, stepper in enumerate(self.axes):
            w = stepper.step(w, axis)
        return w


def _time_grid(gamma: float, steps: int) -> np.ndarray:
    if gamma < 0:
        raise UserException(f"Evolution time must be non-negative, got {gamma}")
    if steps < 1:
        raise UserException(f"At least one time step is required, got {steps}")
    if gamma == 0:
        return np.zeros(1)
    return np.linspace(0.0, gamma, steps + 1)


def solve_heat(rho0, beta: float, gamma: float, steps: Optional[int] = None, grid: SpatialGrid = None) -> DensityStack:
    """Evolves a density under ∂ρ/∂t = (1/2β) Δρ with zero-flux boundaries by Crank-Nicolson, Δt = γ/steps"""
    if grid is None:
        raise UserException("solve_heat needs a spatial grid")
    if beta <= 0:
        raise UserException(f"Inverse temperature must be positive, got {beta}")
    rho = _check_initial(rho0, grid, "density")
    if np.min(rho) < 0:
        raise UserException(f"Initial density is negative somewhere (min {np.min(rho):.3e})")

    times = _time_grid(gamma, steps or DEFAULT_STEPS)
    values = np.empty((len(times),) + grid.shape)
    values[0] = rho
    if len(times) > 1:
        dt = times[1] - times[0]
        stepper = HeatStepper(grid, beta, dt)
        clipped = 0
        for k in range(1, len(times)):
            rho = stepper.step(rho)
            min_value = float(np.min(rho))
            if min_value < -NEGATIVE_TOLERANCE:
                raise NegativeDensityException(min_value, times[k])
            if min_value < 0:
                clipped += int(np.sum(rho < 0))
                rho = np.clip(rho, 0.0, None)
            values[k] = rho
        if clipped:
            logger.debug(f"Clipped {clipped} negative round-off values while evolving the density")

    stack = DensityStack(grid, times, values, beta=beta)
    logger.debug(f"Heat flow to t={gamma} in {len(times) - 1} steps, mass drift {np.ptp(stack.masses()):.2e}")
    return stack


def _neumann_pad(u: np.ndarray) -> np.ndarray:
    """Ghost nodes mirroring the first interior node, so that the normal derivative vanishes"""
    return np.pad(u, 1, mode="reflect")


def _centered_derivatives(u: np.ndarray, grid: SpatialGrid):
    """Centered gradient components and Laplacian with mirrored ghost nodes"""
    padded = _neumann_pad(u)
    center = tuple(slice(1, -1) for _ in range(grid.dim))
    gradients = []
    laplacian = np.zeros_like(u)
    for axis, h in enumerate(grid.h):
        plus = list(center)
        minus = list(center)
        plus[axis] = slice(2, None)
        minus[axis] = slice(None, -2)
        forward = padded[tuple(plus)]
        backward = padded[tuple(minus)]
        gradients.append((forward - backward) / (2 * h))
        laplacian += (forward - 2 * u + backward) / h**2
    return gradients, laplacian


def max_stable_dt(u: np.ndarray, grid: SpatialGrid, beta: float) -> float:
    """Stability limit of the explicit centered HJB scheme for the slopes present in u"""
    gradients, _ = _centered_derivatives(u, grid)
    slope2 = float(np.max(sum(g**2 for g in gradients)))
    diffusive = beta * min(grid.h) ** 2 / grid.dim
    advective = 1 / (beta * slope2) if slope2 > 0 else np.inf
    return CFL_SAFETY * min(diffusive, advective)


def _capped(u0: np.ndarray, beta: float) -> np.ndarray:
    floor = float(np.min(u0))
    return np.minimum(u0, floor + TAIL_CAP / beta)


def solve_hjb(
    u0,
    beta: float,
    gamma: float,
    steps: Optional[int] = None,
    grid: SpatialGrid = None,
    scheme: str = "cole-hopf",
    substeps: Optional[int] = None,
) -> ScalarStack:
    """Solves ∂u/∂t = -(1/2)‖∇u‖² + (1/2β) Δu, u(·,0) = u0, recording `steps` + 1 equally spaced slices.

    scheme="cole-hopf" advances w = exp(-β(u - min u0)) by Crank-Nicolson heat steps; scheme="direct" steps u
    explicitly with centered differences, taking `substeps` explicit steps per recorded slice (chosen from the
    stability limit when omitted).
    """
    if grid is None:
        raise UserException("solve_hjb needs a spatial grid")
    if beta <= 0:
        raise UserException(f"Inverse temperature must be positive, got {beta}")
    u0 = _check_initial(u0, grid, "value function")
    times = _time_grid(gamma, steps or DEFAULT_STEPS)
    values = np.empty((len(times),) + grid.shape)
    values[0] = u0
    if len(times) == 1:
        return ScalarStack(grid, times, values)

    u = _capped(u0, beta)
    dt_out = times[1] - times[0]
    if scheme == "cole-hopf":
        shift = float(np.min(u))
        w = np.exp(-beta * (u - shift))
        stepper = HeatStepper(grid, beta, dt_out)
        tiny = np.finfo(float).tiny
        for k in range(1, len(times)):
            w = np.maximum(stepper.step(w), tiny)
            values[k] = shift - np.log(w) / beta
    elif scheme == "direct":
        max_dt = max_stable_dt(u, grid, beta)
        if substeps is None:
            substeps = int(np.ceil(dt_out / max_dt))
        elif dt_out / substeps > max_dt:
            raise CflException(dt_out / substeps, max_dt)
        dt = dt_out / substeps
        logger.debug(f"Direct HJB scheme: dt={dt:.3e} ({substeps} substeps per slice), limit {max_dt:.3e}")
        for k in range(1, len(times)):
            for _ in range(substeps):
                gradients, laplacian = _centered_derivatives(u, grid)
                u = u + dt * (-0.5 * sum(g**2 for g in gradients) + laplacian / (2 * beta))
            values[k] = u
        if not np.all(np.isfinite(values)):
            raise InternalException("The direct HJB scheme produced non-finite values within its stability limit")
    else:
        raise UserException(f"Unknown HJB scheme {scheme}, expected cole-hopf or direct")

    return ScalarStack(grid, times, values)


def cole_hopf(rho: DensityStack, c_beta: float) -> ScalarStack:
    """u = -(1/β) log ρ + c(β) node by node; nodes with ρ ≤ 1e-300 are masked (NaN)"""
    mask = rho.values <= DENSITY_FLOOR
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(mask, np.nan, -np.log(np.where(mask, 1.0, rho.values)) / rho.beta + c_beta)
    stack = ScalarStack(rho.grid, rho.times, values, mask=mask)
    if mask.any():
        logger.warning(f"Cole-Hopf transform masked {stack.masked_fraction:.2%} of the nodes (density underflow)")
    return stack


def score_field(rho: DensityStack) -> VectorStack:
    """∇ log ρ by second-order centered differences, one-sided at the boundary; masked nodes give NaN"""
    mask = rho.values <= DENSITY_FLOOR
    with np.errstate(divide="ignore", invalid="ignore"):
        log_rho = np.where(mask, np.nan, np.log(np.where(mask, 1.0, rho.values)))
    components = [
        np.gradient(log_rho, h, axis=1 + axis, edge_order=2) for axis, h in enumerate(rho.grid.h)
    ]
    values = np.stack(components, axis=-1)
    vector_mask = mask | np.any(np.isnan(values), axis=-1)
    return VectorStack(rho.grid, rho.times, values, mask=vector_mask)


def viscous_hj_residual(u: ScalarStack, diffusion: float, quadratic: float, region=None) -> np.ndarray:
    """Max over the bulk of |∂u/∂t + quadratic·‖∇u‖² - diffusion·Δu| at every interior time slice,
    with centered differences in space and time
    """
    if len(u.times) < 3:
        raise UserException("The HJB residual needs at least three time slices")
    bulk = u.grid.bulk_mask(region=region)
    dt = np.diff(u.times)
    residuals = []
    for k in range(1, len(u.times) - 1):
        time_derivative = (u.values[k + 1] - u.values[k - 1]) / (dt[k - 1] + dt[k])
        gradients, laplacian = _centered_derivatives(u.values[k], u.grid)
        residual = time_derivative + quadratic * sum(g**2 for g in gradients) - diffusion * laplacian
        residuals.append(np.nanmax(np.abs(residual[bulk])))
    return np.array(residuals)


def hjb_residual(u: ScalarStack, beta: float, region=None) -> np.ndarray:
    """Residual of ∂u/∂t = -(1/2)‖∇u‖² + (1/2β) Δu"""
    return viscous_hj_residual(u, 1 / (2 * beta), 0.5, region)


def bulk_linf(a: np.ndarray, b: np.ndarray, grid: SpatialGrid, region=None) -> float:
    """L∞ distance over bulk nodes, ignoring masked (NaN) nodes"""
    bulk = grid.bulk_mask(region=region)
    return float(np.nanmax(np.abs(a - b)[bulk]))


def convergence_order(spacings: Sequence[float], errors: Sequence[float]) -> float:
    """Slope of the least-squares line through (log h, log error)"""
    spacings = np.asarray(spacings, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(spacings) < 2 or np.any(errors <= 0) or np.any(spacings <= 0):
        raise UserException("A convergence order needs at least two positive (spacing, error) pairs")
    slope, _ = np.polyfit(np.log(spacings), np.log(errors), 1)
    return float(slope)
