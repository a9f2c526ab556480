from dataclasses import dataclass
from typing import Optional

import numpy as np
from loguru import logger
from scipy.special import logsumexp, softmax

from .exceptions import UserException, QuadratureException, ChainDivergedException
from .executor import chunk_rng
from .model.landscape import EnergyLandscape
from .util import as_points, trapezoid_weights, boundary_log_ratio

# Kernel standard deviations added to the landscape box on each side
KERNEL_TAIL = 6.0
MAX_BOUNDARY_RATIO = 1e-8
# Upper bound on the number of (point, node) pairs evaluated at once
PAIRS_PER_BATCH = 4_000_000


@dataclass(frozen=True)
class HeatKernelParams:
    gamma: float
    beta: float
    dim: int = 1

    def __post_init__(self):
        if self.gamma < 0:
            raise UserException(f"Smoothing time gamma must be non-negative, got {self.gamma}")
        if self.beta <= 0:
            raise UserException(f"Inverse temperature must be positive, got {self.beta}")

    @property
    def kernel_time(self) -> float:
        """Variance γ/β of the heat kernel"""
        return self.gamma / self.beta

    @property
    def kernel_std(self) -> float:
        return float(np.sqrt(self.kernel_time))


@dataclass
class GradientEstimate:
    value: np.ndarray
    standard_error: np.ndarray
    method: str
    steps: int = 0


def heat_kernel(params: HeatKernelParams, x):
    """G(x) = (2πγ')^(-d/2) exp(-‖x‖²/(2γ')) with γ' = γ/β"""
    if params.gamma <= 0:
        raise UserException("The heat kernel is only defined for gamma > 0")
    points, single = as_points(x, params.dim)
    t = params.kernel_time
    values = (2 * np.pi * t) ** (-params.dim / 2) * np.exp(-np.sum(points**2, axis=-1) / (2 * t))
    return float(values[0]) if single else values


def kernel_mass(params: HeatKernelParams, npts: int = 801) -> float:
    """Trapezoid integral of the heat kernel over ±KERNEL_TAIL standard deviations"""
    half_width = KERNEL_TAIL * params.kernel_std
    axes = [np.linspace(-half_width, half_width, npts)] * params.dim
    points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, params.dim)
    values = heat_kernel(params, points).reshape((npts,) * params.dim)
    return float(np.sum(trapezoid_weights(axes) * values))


def gaussian_oracle(beta: float, gamma: float, x):
    """Closed-form local entropy of f(x) = ‖x‖²/2: ‖x‖²/(2(1+γ)) + (d/(2β)) log(1+γ)"""
    x = np.asarray(x, dtype=float)
    dim = 1 if x.ndim == 0 else x.shape[-1]
    squared = x**2 if x.ndim == 0 else np.sum(x**2, axis=-1)
    return squared / (2 * (1 + gamma)) + dim / (2 * beta) * np.log1p(gamma)


class SmoothingQuadrature:
    """Tensor grid over which exp(-βf) is convolved with the heat kernel"""

    def __init__(self, params: HeatKernelParams, landscape: EnergyLandscape, npts: Optional[int] = None):
        if landscape.dim > 2:
            raise UserException(f"Quadrature smoothing is limited to 2 dimensions, got {landscape.dim}")
        if landscape.dim != params.dim:
            raise UserException(f"Kernel dimension {params.dim} does not match landscape dimension {landscape.dim}")

        self.params = params
        self.landscape = landscape
        extension = KERNEL_TAIL * params.kernel_std
        self.bounds = [(lo - extension, hi + extension) for lo, hi in landscape.box(params.beta)]
        self.npts = npts or self._default_npts()
        self.axes = [np.linspace(lo, hi, self.npts) for lo, hi in self.bounds]
        self.nodes = np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1).reshape(-1, landscape.dim)
        self.log_weights = np.log(trapezoid_weights(self.axes).ravel())

        log_gibbs = -params.beta * landscape.energy(self.nodes)
        if not landscape.confining:
            log_gibbs = np.where(landscape.inside_box(self.nodes, params.beta), log_gibbs, -np.inf)
        self.log_gibbs = log_gibbs
        logger.debug(f"Smoothing quadrature on {self.bounds} with {self.npts} nodes per axis")

    def _default_npts(self):
        width = max(hi - lo for lo, hi in self.bounds)
        spacing = min(self.params.kernel_std, 1.0 / np.sqrt(self.params.beta)) / 8
        if self.landscape.dim == 1:
            return int(np.clip(np.ceil(width / spacing) + 1, 2001, 20001))
        return int(np.clip(np.ceil(width / spacing) + 1, 201, 401))

    def log_integrand(self, points: np.ndarray) -> np.ndarray:
        """log of exp(-βf(y)) G(x - y) w(y) for each point x (rows) and node y (columns)"""
        t = self.params.kernel_time
        squared = np.sum((points[:, None, :] - self.nodes[None, :, :]) ** 2, axis=-1)
        log_kernel = -squared / (2 * t) - self.landscape.dim / 2 * np.log(2 * np.pi * t)
        return self.log_gibbs[None, :] + log_kernel + self.log_weights[None, :]

    def check_boundary(self, log_integrand: np.ndarray):
        shape = (len(log_integrand),) + (self.npts,) * self.landscape.dim
        ratio = boundary_log_ratio(log_integrand.reshape(shape), np.ones((self.npts,) * self.landscape.dim))
        worst = float(np.max(ratio))
        if worst > np.log(MAX_BOUNDARY_RATIO):
            raise QuadratureException(
                f"Smoothing quadrature domain too small: boundary carries {np.exp(worst):.3e} of the integral",
                boundary_ratio=float(np.exp(worst)),
            )

    def batches(self, points: np.ndarray):
        size = max(1, PAIRS_PER_BATCH // len(self.nodes))
        for start in range(0, len(points), size):
            batch = points[start : start + size]
            log_integrand = self.log_integrand(batch)
            self.check_boundary(log_integrand)
            yield start, batch, log_integrand


def local_entropy(params: HeatKernelParams, landscape: EnergyLandscape, x, npts: Optional[int] = None):
    """f_γ(x) = -(1/β) log ∫ exp(-βf(y)) G_{γ/β}(x - y) dy; exactly f(x) at γ = 0"""
    points, single = as_points(x, landscape.dim)
    if params.gamma == 0:
        values = landscape.energy(points)
        return float(values[0]) if single else values

    quadrature = SmoothingQuadrature(params, landscape, npts)
    values = np.empty(len(points))
    for start, batch, log_integrand in quadrature.batches(points):
        log_integral = logsumexp(log_integrand, axis=1)
        if not np.all(np.isfinite(log_integral)):
            raise QuadratureException("Smoothing integrand underflowed on the whole quadrature grid")
        values[start : start + len(batch)] = -log_integral / params.beta
    return float(values[0]) if single else values


def local_entropy_gradient(
    params: HeatKernelParams,
    landscape: EnergyLandscape,
    x,
    method: str = "quadrature",
    n: int = 20000,
    seed: int = 0,
    npts: Optional[int] = None,
) -> GradientEstimate:
    """∇f_γ(x) = (x - E[Y])/γ where Y has density ∝ exp(-βf(y) - β‖x - y‖²/(2γ)).

    With method="quadrature" the expectation is computed on the smoothing grid (d ≤ 2); with method="mc" it is
    estimated by an unadjusted Langevin chain of n steps, discarding the first half.
    """
    points, single = as_points(x, landscape.dim)
    if params.gamma == 0:
        value = landscape.gradient(points)
        return GradientEstimate(value[0] if single else value, np.zeros_like(value[0] if single else value), "exact")

    if method == "quadrature":
        quadrature = SmoothingQuadrature(params, landscape, npts)
        means = np.empty_like(points)
        for start, batch, log_integrand in quadrature.batches(points):
            probabilities = softmax(log_integrand, axis=1)
            means[start : start + len(batch)] = probabilities @ quadrature.nodes
        value = (points - means) / params.gamma
        error = np.zeros_like(value)
    elif method == "mc":
        estimates = [_langevin_mean(params, landscape, point, n, seed) for point in points]
        value = np.stack([(point - mean) / params.gamma for point, (mean, _) in zip(points, estimates)])
        error = np.stack([se / params.gamma for _, se in estimates])
    else:
        raise UserException(f"Unknown local entropy gradient method {method}, expected quadrature or mc")

    if single:
        return GradientEstimate(value[0], error[0], method, n if method == "mc" else 0)
    return GradientEstimate(value, error, method, n if method == "mc" else 0)


def langevin_step_size(params: HeatKernelParams) -> float:
    return params.gamma / (10 * params.beta * (1 + params.gamma))


def _langevin_mean(params: HeatKernelParams, landscape: EnergyLandscape, x: np.ndarray, n: int, seed: int):
    """Mean of the tilted density by an unadjusted Langevin chain started at x, with batch-means error"""
    if n < 4:
        raise UserException(f"The inner Langevin chain needs at least 4 steps, got {n}")
    rng = chunk_rng(seed, 0)
    beta, gamma = params.beta, params.gamma
    delta = langevin_step_size(params)
    bound = landscape.box_half_width(beta) + KERNEL_TAIL * params.kernel_std
    burn_in = n // 2

    y = np.array(x, dtype=float)
    kept = np.empty((n - burn_in, landscape.dim))
    noise = rng.standard_normal((n, landscape.dim)) * np.sqrt(2 * delta)
    for k in range(n):
        drift = -beta * landscape.gradient(y) - beta * (y - x) / gamma
        y = y + delta * drift + noise[k]
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > bound:
            raise ChainDivergedException(k, bound)
        if k >= burn_in:
            kept[k - burn_in] = y

    n_batches = min(32, len(kept))
    batch_means = np.array([b.mean(axis=0) for b in np.array_split(kept, n_batches)])
    standard_error = batch_means.std(axis=0, ddof=1) / np.sqrt(n_batches)
    return kept.mean(axis=0), standard_error
