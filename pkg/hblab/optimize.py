from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from loguru import logger
from tqdm import tqdm

import hblab.globals
from .exceptions import UserException, NumericalException
from .executor import chunk_rng
from .model.landscape import EnergyLandscape, GradientNoiseModel
from .smoothing import HeatKernelParams, local_entropy, local_entropy_gradient

SGD = "sgd"
GRADIENT_DESCENT = "gradient-descent"
LOCAL_ENTROPY = "local-entropy"

DEFAULT_DECAY = 0.97
# Bound on ‖x‖, in multiples of the landscape box at β = 1, beyond which a run is declared divergent
DIVERGENCE_FACTOR = 10.0


@dataclass
class OptimizerRun:
    method: str
    history: np.ndarray
    values: np.ndarray
    eta: float
    seed: Optional[int] = None
    gammas: Optional[np.ndarray] = None
    smoothed: Optional[np.ndarray] = None
    diverged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.history) - 1

    @property
    def final(self) -> np.ndarray:
        return self.history[-1]

    @property
    def final_value(self) -> float:
        return float(self.values[-1])

    def rows(self) -> List[Dict]:
        rows = []
        for k, x in enumerate(self.history):
            row = {"k": k}
            row.update({f"x{i}": float(v) for i, v in enumerate(x)})
            row["f"] = float(self.values[k])
            if self.smoothed is not None:
                row["f_gamma"] = float(self.smoothed[k])
                row["gamma"] = float(self.gammas[min(k, len(self.gammas) - 1)])
            rows.append(row)
        return rows


def divergence_bound(landscape: EnergyLandscape) -> float:
    try:
        return DIVERGENCE_FACTOR * landscape.box_half_width(1.0)
    except UserException:
        return np.inf


def _start(landscape: EnergyLandscape, x0, iters: int) -> np.ndarray:
    if iters < 0:
        raise UserException(f"Iteration count must be non-negative, got {iters}")
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    if x.shape != (landscape.dim,) or not np.all(np.isfinite(x)):
        raise UserException(f"Invalid starting point {x0!r} for a {landscape.dim}-dimensional landscape")
    return x


def _iterate(landscape: EnergyLandscape, x0, iters: int, step, desc: str):
    """Runs x_{k+1} = x_k - step(k, x_k), stopping early if the iterate leaves the divergence bound"""
    x = _start(landscape, x0, iters)
    bound = divergence_bound(landscape)
    history = [x]
    diverged = False
    for k in tqdm(range(iters), desc=desc, disable=hblab.globals.quiet, leave=False):
        x = x - step(k, x)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > bound:
            logger.warning(f"{desc} diverged at iteration {k + 1} (‖x‖ > {bound:.4g}), run truncated")
            diverged = True
            break
        history.append(x)
    return np.array(history), diverged


def sgd_run(model: GradientNoiseModel, x0, iters: int, seed: int) -> OptimizerRun:
    """x_{k+1} = x_k - η ∇f_{i_k}(x_k) with minibatch indices drawn uniformly"""
    rng = chunk_rng(seed, 0)
    history, diverged = _iterate(
        model.landscape, x0, iters, lambda k, x: model.eta * model.stochastic_gradient(x, rng), "SGD"
    )
    values = model.landscape.energy(history)
    return OptimizerRun(SGD, history, values, model.eta, seed=seed, diverged=diverged)


def gradient_descent_run(landscape: EnergyLandscape, x0, iters: int, eta: float) -> OptimizerRun:
    """x_{k+1} = x_k - η ∇f(x_k)"""
    history, diverged = _iterate(landscape, x0, iters, lambda k, x: eta * landscape.gradient(x), "Gradient descent")
    return OptimizerRun(GRADIENT_DESCENT, history, landscape.energy(history), eta, diverged=diverged)


def geometric_schedule(gamma0: float, iters: int, decay: float = DEFAULT_DECAY) -> np.ndarray:
    """γ_k = γ₀·decay^k"""
    if gamma0 < 0 or not 0 < decay <= 1:
        raise UserException(f"Invalid smoothing schedule gamma0={gamma0}, decay={decay}")
    return gamma0 * decay ** np.arange(iters)


def _check_schedule(gammas, iters: int) -> np.ndarray:
    gammas = np.asarray(gammas, dtype=float)
    if gammas.ndim == 0:
        gammas = np.full(iters, float(gammas))
    if len(gammas) < iters:
        raise UserException(f"The smoothing schedule has {len(gammas)} values for {iters} iterations")
    if np.any(gammas < 0):
        raise UserException("Smoothing times must be non-negative")
    if np.any(np.diff(gammas) > 0):
        raise UserException("The smoothing schedule must be nonincreasing")
    return gammas[:iters]


def local_entropy_run(
    landscape: EnergyLandscape,
    beta: float,
    gammas,
    x0,
    iters: int,
    eta: float = 0.1,
    inner_n: int = 20000,
    seed: int = 0,
    method: Optional[str] = None,
) -> OptimizerRun:
    """x_{k+1} = x_k - η ∇f_{γ_k}(x_k); the smoothed gradient is computed by quadrature in one or two
    dimensions and estimated by an inner Langevin chain otherwise
    """
    gammas = _check_schedule(gammas, iters)
    method = method or ("quadrature" if landscape.dim <= 2 else "mc")

    def step(k, x):
        params = HeatKernelParams(gammas[k], beta, landscape.dim)
        try:
            gradient = local_entropy_gradient(params, landscape, x, method=method, n=inner_n, seed=seed + k)
        except NumericalException as e:
            e.message = f"Iterate {k}: {e.message}"
            raise
        return eta * gradient.value

    history, diverged = _iterate(landscape, x0, iters, step, "Local entropy descent")
    values = landscape.energy(history)
    smoothed = None
    if method == "quadrature" and iters > 0:
        smoothed = np.array(
            [
                local_entropy(HeatKernelParams(gammas[min(k, iters - 1)], beta, landscape.dim), landscape, x)
                for k, x in enumerate(history)
            ]
        )
    return OptimizerRun(
        LOCAL_ENTROPY, history, values, eta, seed=seed, gammas=gammas, smoothed=smoothed, diverged=diverged
    )


@dataclass(frozen=True)
class Minimum:
    location: float
    value: float
    curvature: float


def minima_census(values: np.ndarray, axis: np.ndarray) -> List[Minimum]:
    """Strict interior local minima of a 1-D grid function with second-difference curvature, sorted by value"""
    values = np.asarray(values, dtype=float)
    axis = np.asarray(axis, dtype=float)
    if values.ndim != 1 or values.shape != axis.shape:
        raise UserException("minima_census needs a 1-D grid function")
    h = np.diff(axis)
    interior = np.arange(1, len(values) - 1)
    strict = (values[interior] < values[interior - 1]) & (values[interior] < values[interior + 1])
    minima = []
    for i in interior[strict]:
        curvature = 2 * (
            (values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]
        ) / (h[i] + h[i - 1])
        minima.append(Minimum(float(axis[i]), float(values[i]), float(curvature)))
    return sorted(minima, key=lambda m: m.value)


def smoothed_census(landscape: EnergyLandscape, beta: float, gammas: Sequence[float], axis: np.ndarray):
    """minima_census of x ↦ f_γ(x) on `axis` for each γ"""
    if landscape.dim != 1:
        raise UserException("The minima census is one-dimensional")
    points = axis.reshape(-1, 1)
    return {
        float(gamma): minima_census(local_entropy(HeatKernelParams(gamma, beta, 1), landscape, points), axis)
        for gamma in gammas
    }
