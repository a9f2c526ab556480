from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from ..exceptions import UserException, ConfigurationException, QuadratureException
from ..util import as_points, trapezoid_weights, log_trapezoid, did_you_mean

# Gibbs exponent β(f - min f) reached at the edge of a landscape box (tail mass below 1e-10)
BOX_EXPONENT = 30.0

Bounds = List[Tuple[float, float]]


class EnergyLandscape(ABC):
    """An energy f on R^dim with its hand-coded gradient.

    `energy` and `gradient` accept arrays of shape (..., dim) and are vectorized over the leading axes.
    """

    name: str = None

    def __init__(self, dim: int):
        if dim < 1:
            raise UserException(f"Landscape dimension must be positive, got {dim}")
        self.dim = dim

    @abstractmethod
    def energy(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError()

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError()

    @abstractmethod
    def box_half_width(self, beta: float) -> float:
        """Half width L of the box [-L, L]^dim outside which the Gibbs density at `beta` is negligible"""
        raise NotImplementedError()

    @property
    def components(self) -> Optional[List["QuadraticComponent"]]:
        return None

    @property
    def confining(self) -> bool:
        """False when the Gibbs density is the restriction of exp(-βf) to the box itself"""
        return True

    def box(self, beta: float) -> Bounds:
        half_width = self.box_half_width(beta)
        return [(-half_width, half_width)] * self.dim

    def inside_box(self, x: np.ndarray, beta: float) -> np.ndarray:
        bounds = np.array(self.box(beta))
        return np.all((x >= bounds[:, 0]) & (x <= bounds[:, 1]), axis=-1)

    def envelope_energy(self, x: np.ndarray, beta: float) -> np.ndarray:
        """f inside the box, continued outside it by f at the nearest box point plus half the squared distance"""
        bounds = np.array(self.box(beta))
        projected = np.clip(x, bounds[:, 0], bounds[:, 1])
        distance2 = np.sum((x - projected) ** 2, axis=-1)
        return self.energy(projected) + 0.5 * distance2

    def parameters(self) -> Dict:
        return {}

    def __repr__(self):
        params = ", ".join(f"{k}={v}" for k, v in self.parameters().items())
        return f"{self.name}(dim={self.dim}{', ' if params else ''}{params})"


class Quadratic(EnergyLandscape):
    """f(x) = (κ/2)‖x - c‖²"""

    name = "quadratic"

    def __init__(self, dim: int = 1, center=None, curvature: float = 1.0):
        super().__init__(dim)
        self.center = np.zeros(dim) if center is None else np.broadcast_to(np.asarray(center, dtype=float), (dim,))
        if curvature <= 0:
            raise UserException(f"Quadratic curvature must be positive, got {curvature}")
        self.curvature = float(curvature)

    def energy(self, x):
        return 0.5 * self.curvature * np.sum((x - self.center) ** 2, axis=-1)

    def gradient(self, x):
        return self.curvature * (x - self.center)

    def box_half_width(self, beta):
        return float(np.max(np.abs(self.center))) + np.sqrt(2 * BOX_EXPONENT / (beta * self.curvature))

    def parameters(self):
        return {"center": self.center.tolist(), "curvature": self.curvature}


class DoubleWell(EnergyLandscape):
    """f(x) = Σ_j (x_j² - 1)² / 4, minima at x_j = ±1"""

    name = "double-well"

    def __init__(self, dim: int = 1):
        if dim not in (1, 2):
            raise UserException(f"The double-well landscape is defined in 1 or 2 dimensions, not {dim}")
        super().__init__(dim)

    def energy(self, x):
        return 0.25 * np.sum((x**2 - 1) ** 2, axis=-1)

    def gradient(self, x):
        return x * (x**2 - 1)

    def box_half_width(self, beta):
        return np.sqrt(1 + np.sqrt(4 * BOX_EXPONENT / beta))


class Rugged(EnergyLandscape):
    """f(x) = x²/2 + a·cos(bx): a wide parabola covered by sharp ripples"""

    name = "rugged"

    def __init__(self, dim: int = 1, a: float = 0.5, b: float = 4.0):
        if dim != 1:
            raise UserException("The rugged landscape is one-dimensional")
        super().__init__(dim)
        self.a = float(a)
        self.b = float(b)

    def energy(self, x):
        return np.sum(0.5 * x**2 + self.a * np.cos(self.b * x), axis=-1)

    def gradient(self, x):
        return x - self.a * self.b * np.sin(self.b * x)

    def box_half_width(self, beta):
        return np.sqrt(2 * (BOX_EXPONENT / beta + 2 * abs(self.a)))

    def parameters(self):
        return {"a": self.a, "b": self.b}


class Constant(EnergyLandscape):
    """f ≡ value; its Gibbs density is uniform on the box [-half_width, half_width]^dim"""

    name = "constant"

    def __init__(self, dim: int = 1, half_width: float = 10.0, value: float = 0.0):
        super().__init__(dim)
        if half_width <= 0:
            raise UserException(f"Box half width must be positive, got {half_width}")
        self.half_width = float(half_width)
        self.value = float(value)

    def energy(self, x):
        return np.full(np.shape(x)[:-1], self.value)

    def gradient(self, x):
        return np.zeros_like(x, dtype=float)

    def box_half_width(self, beta):
        return self.half_width

    @property
    def confining(self):
        return False

    def parameters(self):
        return {"half_width": self.half_width, "value": self.value}


class QuadraticComponent:
    """Per-sample energy f_i(x) = ½ xᵀAx - bᵀx + c"""

    def __init__(self, A, b, c: float = 0.0):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        self.c = float(c)

    @classmethod
    def least_squares(cls, y: float, xi) -> "QuadraticComponent":
        """f_i(x) = (y - ξ·x)²"""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        return cls(2 * np.outer(xi, xi), 2 * y * xi, y**2)

    @classmethod
    def isotropic(cls, center, curvature: float) -> "QuadraticComponent":
        """f_i(x) = (κ/2)‖x - c‖²"""
        center = np.atleast_1d(np.asarray(center, dtype=float))
        return cls(curvature * np.eye(len(center)), curvature * center, 0.5 * curvature * center @ center)

    @classmethod
    def linear(cls, slope) -> "QuadraticComponent":
        slope = np.atleast_1d(np.asarray(slope, dtype=float))
        return cls(np.zeros((len(slope), len(slope))), -slope, 0.0)

    def energy(self, x):
        return 0.5 * np.einsum("...i,ij,...j->...", x, self.A, x) - x @ self.b + self.c

    def gradient(self, x):
        return x @ self.A.T - self.b


class FiniteSum(EnergyLandscape):
    """Empirical loss f(x) = (1/N) Σ_i f_i(x) over quadratic per-sample energies"""

    name = "finite-sum"

    def __init__(self, components: Sequence[QuadraticComponent]):
        if not components:
            raise UserException("A finite-sum landscape needs at least one component")
        dim = len(components[0].b)
        if any(len(c.b) != dim or c.A.shape != (dim, dim) for c in components):
            raise UserException("All components of a finite-sum landscape must have the same dimension")
        super().__init__(dim)
        self._components = list(components)
        self._A = np.mean([c.A for c in components], axis=0)
        self._b = np.mean([c.b for c in components], axis=0)
        self._c = float(np.mean([c.c for c in components]))

    @property
    def components(self):
        return self._components

    def energy(self, x):
        return 0.5 * np.einsum("...i,ij,...j->...", x, self._A, x) - x @ self._b + self._c

    def gradient(self, x):
        return x @ self._A.T - self._b

    def minimizer(self) -> np.ndarray:
        eigenvalues = np.linalg.eigvalsh(self._A)
        if eigenvalues[0] <= 0:
            raise UserException("The averaged loss has no unique minimizer (its Hessian is singular)")
        return np.linalg.solve(self._A, self._b)

    def box_half_width(self, beta):
        smallest_curvature = np.linalg.eigvalsh(self._A)[0]
        if smallest_curvature <= 0:
            raise UserException("The averaged loss is not confining, its Gibbs density is not normalizable")
        center = self.minimizer()
        return float(np.max(np.abs(center))) + np.sqrt(2 * BOX_EXPONENT / (beta * smallest_curvature))


class LeastSquares(FiniteSum):
    """Synthetic regression loss f_i(x) = (y_i - ξ_i·x)² with ξ_i ~ N(0, I) and y_i = ξ_i·x_true + noise"""

    name = "least-squares"

    def __init__(self, dim: int = 1, samples: int = 8, noise: float = 0.5, x_true=None, seed: int = 0):
        rng = np.random.default_rng(seed)
        x_true = np.ones(dim) if x_true is None else np.broadcast_to(np.asarray(x_true, dtype=float), (dim,))
        xi = rng.standard_normal((samples, dim))
        y = xi @ x_true + noise * rng.standard_normal(samples)
        super().__init__([QuadraticComponent.least_squares(y_i, xi_i) for y_i, xi_i in zip(y, xi)])
        self.samples = samples
        self.noise = noise
        self.x_true = x_true
        self.seed = seed

    def parameters(self):
        return {"samples": self.samples, "noise": self.noise, "x_true": self.x_true.tolist(), "seed": self.seed}


class QuadraticFamily(FiniteSum):
    """f_i(x) = (κ_i/2)‖x - c_i‖², one component per (center, curvature) pair"""

    name = "quadratic-family"

    def __init__(self, dim: int = 1, centers=(-1.0, 1.0), curvatures=None):
        centers = np.asarray(centers, dtype=float).reshape(-1, dim)
        curvatures = np.ones(len(centers)) if curvatures is None else np.asarray(curvatures, dtype=float)
        if len(curvatures) != len(centers):
            raise UserException("One curvature per center is required")
        super().__init__([QuadraticComponent.isotropic(c, k) for c, k in zip(centers, curvatures)])
        self.centers = centers
        self.curvatures = curvatures

    def parameters(self):
        return {"centers": self.centers.tolist(), "curvatures": self.curvatures.tolist()}


class Shifted(EnergyLandscape):
    """f + K"""

    def __init__(self, base: EnergyLandscape, offset: float):
        super().__init__(base.dim)
        self.base = base
        self.offset = float(offset)
        self.name = base.name

    def energy(self, x):
        return self.base.energy(x) + self.offset

    def gradient(self, x):
        return self.base.gradient(x)

    def box_half_width(self, beta):
        return self.base.box_half_width(beta)

    @property
    def confining(self):
        return self.base.confining

    @property
    def components(self):
        return self.base.components

    def parameters(self):
        return {**self.base.parameters(), "offset": self.offset}


LANDSCAPES = {cls.name: cls for cls in (Quadratic, DoubleWell, Rugged, Constant, LeastSquares, QuadraticFamily)}


def make_landscape(name: str, params: Optional[Dict] = None) -> EnergyLandscape:
    """Instantiates a registered landscape from its name and parameter map"""
    cls = LANDSCAPES.get(name)
    if cls is None:
        raise ConfigurationException(f"Unknown landscape {name}.{did_you_mean(name, LANDSCAPES)}", path="$.landscape.name")
    try:
        return cls(**(params or {}))
    except TypeError as e:
        raise ConfigurationException(f"Invalid parameters for landscape {name}: {e}", path="$.landscape.params")


def eval_energy(landscape: EnergyLandscape, x):
    """f(x) for one point (returns a float) or a batch of points (returns an array)"""
    points, single = as_points(x, landscape.dim)
    values = landscape.energy(points)
    return float(values[0]) if single else values


def default_quadrature_npts(dim: int) -> int:
    return {1: 2001, 2: 401, 3: 81}[dim]


def _quadrature_log_integrand(landscape, beta, bounds, npts):
    axes = [np.linspace(lo, hi, npts) for lo, hi in bounds]
    points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return axes, -beta * landscape.energy(points)


def log_partition(landscape: EnergyLandscape, beta: float, domain: Optional[Bounds] = None, npts: Optional[int] = None):
    """log ∫ exp(-βf) dx over a box by log-sum-exp stabilized tensor trapezoid quadrature"""
    if beta <= 0:
        raise UserException(f"Inverse temperature must be positive, got {beta}")
    if landscape.dim > 3:
        raise UserException(f"Tensor quadrature is limited to 3 dimensions, got {landscape.dim}")
    domain = domain if domain is not None else landscape.box(beta)
    npts = npts or default_quadrature_npts(landscape.dim)
    axes, log_integrand = _quadrature_log_integrand(landscape, beta, domain, npts)
    if not np.all(np.isfinite(log_integrand)):
        raise QuadratureException(f"The Gibbs integrand of {landscape} is not finite on the quadrature box")
    return float(log_trapezoid(log_integrand, trapezoid_weights(axes)))


class GibbsDensity:
    """Boltzmann-Gibbs density ρ̄(x) = exp(-βf(x) - log Z(β)) on the landscape box"""

    def __init__(self, landscape: EnergyLandscape, beta: float, domain: Optional[Bounds] = None, npts=None):
        if beta <= 0:
            raise UserException(f"Inverse temperature must be positive, got {beta}")
        self.landscape = landscape
        self.beta = float(beta)
        self.domain = domain if domain is not None else landscape.box(beta)
        self.logZ = log_partition(landscape, beta, self.domain, npts)
        logger.debug(f"log Z = {self.logZ:.10g} for {landscape} at beta={beta}")

    @property
    def c_beta(self) -> float:
        """The constant c(β) = -(1/β) log Z(β) relating local entropy and density"""
        return -self.logZ / self.beta

    def log_density(self, points: np.ndarray) -> np.ndarray:
        values = -self.beta * self.landscape.energy(points) - self.logZ
        if not self.landscape.confining:
            bounds = np.array(self.domain)
            inside = np.all((points >= bounds[:, 0]) & (points <= bounds[:, 1]), axis=-1)
            values = np.where(inside, values, -np.inf)
        return values

    def density(self, points: np.ndarray) -> np.ndarray:
        return np.exp(self.log_density(points))


def gibbs_log_density(gibbs: GibbsDensity, x):
    points, single = as_points(x, gibbs.landscape.dim)
    values = gibbs.log_density(points)
    return float(values[0]) if single else values


class GradientNoiseModel:
    """Minibatch stochastic gradients of a finite-sum landscape"""

    def __init__(self, landscape: EnergyLandscape, minibatch: int = 1, eta: float = 0.1):
        if landscape.components is None:
            raise ConfigurationException(f"Landscape {landscape.name} has no per-sample components")
        if not 1 <= minibatch <= len(landscape.components):
            raise UserException(f"Minibatch size must be between 1 and {len(landscape.components)}, got {minibatch}")
        if eta < 0:
            raise UserException(f"Step size must be non-negative, got {eta}")
        self.landscape = landscape
        self.minibatch = int(minibatch)
        self.eta = float(eta)

    @property
    def n_components(self) -> int:
        return len(self.landscape.components)

    def component_gradients(self, x: np.ndarray) -> np.ndarray:
        """∇f_i(x) for every component, shape (N, dim)"""
        return np.stack([c.gradient(x) for c in self.landscape.components])

    def stochastic_gradient(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Average of ∇f_i over m indices drawn uniformly without replacement"""
        indices = rng.choice(self.n_components, size=self.minibatch, replace=False)
        return np.mean([self.landscape.components[i].gradient(x) for i in indices], axis=0)


def noise_covariance(model: GradientNoiseModel, x) -> np.ndarray:
    """Σ(x) = (1/N) Σ_i (∇f - ∇f_i)(∇f - ∇f_i)ᵀ"""
    points, _ = as_points(x, model.landscape.dim)
    point = points[0]
    deviations = model.landscape.gradient(point) - model.component_gradients(point)
    covariance = deviations.T @ deviations / model.n_components
    return 0.5 * (covariance + covariance.T)
