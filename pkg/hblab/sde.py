from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from loguru import logger
from scipy.stats import kstest

from .exceptions import UserException, PathExplosionException, PreconditionException
from .executor import ChunkExecutor
from .model.grid import DensityStack
from .model.landscape import EnergyLandscape
from .pde import score_field

FORWARD = "forward"
REVERSE = "reverse"

# Bound on ‖x‖, in multiples of the landscape box, beyond which a path is declared exploded
EXPLOSION_FACTOR = 10.0

Drift = Callable[[np.ndarray, float], np.ndarray]
Sampler = Callable[[int, np.random.Generator], np.ndarray]


@dataclass
class DiffusionSpec:
    """dX = drift(X, t) dt + σ dW on [0, T], read forward or backward in time.

    For a reverse spec `drift` is the backward drift: X(t - Δ) ≈ X(t) - drift(X(t), t) Δ + σ ΔW.
    A `drift` of None is the zero drift.
    """

    dim: int
    drift: Optional[Drift]
    sigma: float
    direction: str = FORWARD
    T: float = 1.0
    bound: float = np.inf

    def __post_init__(self):
        if self.sigma <= 0:
            raise UserException(f"Diffusion coefficient must be positive, got {self.sigma}")
        if self.direction not in (FORWARD, REVERSE):
            raise UserException(f"Unknown direction {self.direction}, expected {FORWARD} or {REVERSE}")
        if self.T <= 0:
            raise UserException(f"Horizon must be positive, got {self.T}")

    def drift_at(self, x: np.ndarray, t: float) -> np.ndarray:
        if self.drift is None:
            return np.zeros_like(x)
        return np.asarray(self.drift(x, t), dtype=float).reshape(x.shape)


def langevin_spec(landscape: EnergyLandscape, beta: float, T: float) -> DiffusionSpec:
    """dX = -∇f(X) dt + β^(-1/2) dW, whose invariant law is the Gibbs density"""
    return DiffusionSpec(
        dim=landscape.dim,
        drift=lambda x, t: -landscape.gradient(x),
        sigma=1 / np.sqrt(beta),
        direction=FORWARD,
        T=T,
        bound=EXPLOSION_FACTOR * landscape.box_half_width(beta),
    )


@dataclass
class PathEnsemble:
    """N trajectories on the time grid `times`, stored at the step indices `indices`"""

    times: np.ndarray
    indices: List[int]
    paths: np.ndarray
    direction: str
    seed: int
    sigma: float
    energy: np.ndarray = field(repr=False, default=None)

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def dim(self) -> int:
        return self.paths.shape[2]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def step_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if not np.isclose(self.times[k], t, rtol=0, atol=1e-9 * max(1.0, self.times[-1])):
            raise UserException(f"Time {t} is not on the ensemble time grid")
        return k

    def at_step(self, k: int) -> np.ndarray:
        try:
            return self.paths[:, self.indices.index(k)]
        except ValueError:
            raise UserException(f"Step {k} (t={self.times[k]:.6g}) was not recorded")

    def at(self, t: float) -> np.ndarray:
        return self.at_step(self.step_index(t))

    def finite_energy(self) -> float:
        """Mean over paths of Σ_k ‖drift(x_k, t_k)‖² Δt"""
        return float(np.mean(self.energy))

    @property
    def fully_recorded(self) -> bool:
        return len(self.indices) == len(self.times)


def _recorded_indices(record: Union[str, Sequence[int]], K: int) -> List[int]:
    if record == "all":
        return list(range(K + 1))
    if record == "ends":
        return [0, K]
    indices = sorted(set(int(k) for k in record))
    if not indices or indices[0] < 0 or indices[-1] > K:
        raise UserException(f"Recorded steps must lie in [0, {K}]")
    return indices


def _check_run(spec: DiffusionSpec, K: int, N: int, seed: int):
    if K < 1:
        raise UserException(f"At least one time step is required, got K={K}")
    if N < 1:
        raise UserException(f"At least one path is required, got N={N}")
    if seed < 0:
        raise UserException(f"Seeds must be non-negative, got {seed}")


def _draw(sampler: Sampler, n: int, rng: np.random.Generator, dim: int, what: str) -> np.ndarray:
    x = np.asarray(sampler(n, rng), dtype=float).reshape(n, -1)
    if x.shape[1] != dim:
        raise UserException(f"The {what} sampler returned points of dimension {x.shape[1]}, expected {dim}")
    return x


def _simulate(spec: DiffusionSpec, sampler: Sampler, K: int, N: int, seed: int, record, threads) -> PathEnsemble:
    _check_run(spec, K, N, seed)
    times = np.linspace(0.0, spec.T, K + 1)
    dt = spec.T / K
    scale = spec.sigma * np.sqrt(dt)
    indices = _recorded_indices(record, K)
    positions = {k: i for i, k in enumerate(indices)}
    reverse = spec.direction == REVERSE
    order = range(K, 0, -1) if reverse else range(K)

    def task(n, rng, chunk):
        x = _draw(sampler, n, rng, spec.dim, "final" if reverse else "initial")
        out = np.empty((n, len(indices), spec.dim))
        energy = np.zeros(n)
        start = K if reverse else 0
        if start in positions:
            out[:, positions[start]] = x
        for k in order:
            b = spec.drift_at(x, times[k])
            energy += np.sum(b**2, axis=-1) * dt
            noise = rng.standard_normal((n, spec.dim))
            if reverse:
                x = x - b * dt + scale * noise
                k_next = k - 1
            else:
                x = x + b * dt + scale * noise
                k_next = k + 1
            exploded = ~np.all(np.isfinite(x), axis=-1) | (np.linalg.norm(x, axis=-1) > spec.bound)
            if exploded.any():
                return None, None, int(exploded.sum()), k_next
            if k_next in positions:
                out[:, positions[k_next]] = x
        return out, energy, 0, None

    results = ChunkExecutor(seed, threads).map(task, N)
    exploded = sum(r[2] for r in results)
    if exploded:
        first_step = (max if reverse else min)(r[3] for r in results if r[2])
        raise PathExplosionException(exploded, N, first_step, spec.bound)
    paths = np.concatenate([r[0] for r in results])
    energy = np.concatenate([r[1] for r in results])
    logger.debug(f"Simulated {N} {spec.direction} paths, {K} steps, finite-energy proxy {np.mean(energy):.4g}")
    return PathEnsemble(times, indices, paths, spec.direction, seed, spec.sigma, energy)


def simulate_forward(
    spec: DiffusionSpec, init: Sampler, K: int, N: int, seed: int, record="all", threads=None
) -> PathEnsemble:
    """Euler-Maruyama: x_{k+1} = x_k + drift(x_k, t_k) Δt + σ √Δt ξ"""
    if spec.direction != FORWARD:
        raise UserException("simulate_forward needs a forward diffusion")
    return _simulate(spec, init, K, N, seed, record, threads)


def simulate_reverse(
    spec: DiffusionSpec, final: Sampler, K: int, N: int, seed: int, record="all", threads=None, pinned=False
) -> PathEnsemble:
    """Integrates backward from t = T: x_{k-1} = x_k - drift(x_k, t_k) Δt + σ √Δt ξ.

    With pinned=True (zero drift only) paths are built as X(t) = X(T) + σ W̄(t) from a pinned backward
    Wiener process with W̄(T) = 0.
    """
    if spec.direction != REVERSE:
        raise UserException("simulate_reverse needs a reverse diffusion")
    if not pinned:
        return _simulate(spec, final, K, N, seed, record, threads)
    if spec.drift is not None:
        raise UserException("The pinned construction is only available for a zero backward drift")

    _check_run(spec, K, N, seed)
    times = np.linspace(0.0, spec.T, K + 1)
    indices = _recorded_indices(record, K)

    def task(n, rng, chunk):
        x_final = _draw(final, n, rng, spec.dim, "final")
        w = sample_backward_wiener(times, n, rng, spec.dim)
        return x_final[:, None, :] + spec.sigma * w[:, indices]

    paths = np.concatenate(ChunkExecutor(seed, threads).map(task, N))
    return PathEnsemble(times, indices, paths, REVERSE, seed, spec.sigma, np.zeros(N))


def sample_backward_wiener(times: np.ndarray, n: int, rng: np.random.Generator, dim: int = 1) -> np.ndarray:
    """W̄(t) = W(t) - W(T) on the time grid, shape (n, K+1, dim), pinned at W̄(T) = 0"""
    increments = rng.standard_normal((n, len(times) - 1, dim)) * np.sqrt(np.diff(times))[None, :, None]
    w = np.concatenate([np.zeros((n, 1, dim)), np.cumsum(increments, axis=1)], axis=1)
    return w - w[:, -1:, :]


@dataclass
class DriftEstimate:
    """Per-bin Nelson conditional derivatives at one time slice (bins with fewer than `min_count` samples dropped)"""

    time: float
    delta: float
    edges: np.ndarray
    centers: np.ndarray
    locations: np.ndarray
    counts: np.ndarray
    forward: np.ndarray
    forward_se: np.ndarray
    backward: np.ndarray
    backward_se: np.ndarray
    difference: np.ndarray
    difference_se: np.ndarray

    @property
    def n_bins(self) -> int:
        return len(self.counts)


def estimate_drifts(ens: PathEnsemble, t: float, bins: int = 64, min_count: int = 50) -> DriftEstimate:
    """b̂₊ = mean[(X(t+Δ) - X(t))/Δ | X(t) ∈ bin] and b̂₋ = mean[(X(t) - X(t-Δ))/Δ | X(t) ∈ bin] with Δ one step.

    Bins are equal-width over mean ± 3 std of X(t); each is located at the mean of the X(t) it holds.
    """
    if ens.dim != 1:
        raise UserException("Drift estimation bins one-dimensional ensembles only")
    k = ens.step_index(t)
    if not 0 < k < len(ens.times) - 1:
        raise UserException(f"Drift estimation needs a slice strictly inside the horizon, got t={t}")
    delta = ens.dt
    x = ens.at_step(k)[:, 0]
    x_plus = ens.at_step(k + 1)[:, 0]
    x_minus = ens.at_step(k - 1)[:, 0]

    mean, std = float(np.mean(x)), float(np.std(x))
    edges = np.linspace(mean - 3 * std, mean + 3 * std, bins + 1)
    which = np.digitize(x, edges) - 1

    forward_increment = (x_plus - x) / delta
    backward_increment = (x - x_minus) / delta
    second_difference = (x_plus - 2 * x + x_minus) / delta

    rows = []
    for b in range(bins):
        selected = which == b
        count = int(np.sum(selected))
        if count < min_count:
            continue
        row = [0.5 * (edges[b] + edges[b + 1]), float(np.mean(x[selected])), count]
        for values in (forward_increment, backward_increment, second_difference):
            chosen = values[selected]
            row += [float(np.mean(chosen)), float(np.std(chosen, ddof=1) / np.sqrt(count))]
        rows.append(row)

    if not rows:
        logger.warning(f"No bin holds {min_count} samples at t={t}")
    table = np.array(rows, dtype=float).reshape(-1, 9)
    return DriftEstimate(
        time=float(ens.times[k]),
        delta=delta,
        edges=edges,
        centers=table[:, 0],
        locations=table[:, 1],
        counts=table[:, 2].astype(int),
        forward=table[:, 3],
        forward_se=table[:, 4],
        backward=table[:, 5],
        backward_se=table[:, 6],
        difference=table[:, 7],
        difference_se=table[:, 8],
    )


def _stack_cdf(rho: DensityStack, t: float):
    x = rho.grid.axes[0]
    density = np.clip(rho.slice_at(t), 0.0, None)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(x))])
    cdf /= cdf[-1]
    return lambda values: np.interp(values, x, cdf)


def ks_marginal_test(samples: np.ndarray, rho: DensityStack, t: float) -> float:
    """p-value of the Kolmogorov-Smirnov test of 1-D samples against ρ(·, t)"""
    if rho.grid.dim != 1:
        raise UserException("The marginal KS test is one-dimensional")
    return float(kstest(np.asarray(samples).ravel(), _stack_cdf(rho, t)).pvalue)


@dataclass
class DualityReport:
    time: float
    drifts: DriftEstimate
    expected: np.ndarray
    residuals: np.ndarray
    passed: np.ndarray
    ks_pvalue: float

    @property
    def weighted_l2(self) -> float:
        weights = self.drifts.counts / np.sum(self.drifts.counts)
        return float(np.sqrt(np.sum(weights * self.residuals**2)))

    @property
    def pass_fraction(self) -> float:
        return float(np.mean(self.passed)) if len(self.passed) else 0.0


def check_duality(
    ens: PathEnsemble, rho: DensityStack, t: float, bins: int = 64, min_count: int = 50, min_pvalue: float = 0.01
) -> DualityReport:
    """Per-bin residual (b̂₊ - b̂₋) - σ² ∇log ρ(x, t), passing where it is within 3 standard errors"""
    if ens.sigma <= 0:
        raise PreconditionException("Nelson duality is only defined for a non-degenerate diffusion")
    pvalue = ks_marginal_test(ens.at(t), rho, t)
    if pvalue <= min_pvalue:
        raise PreconditionException(
            f"Ensemble marginal at t={t} is inconsistent with the density stack (KS p-value {pvalue:.3g})"
        )
    drifts = estimate_drifts(ens, t, bins, min_count)
    score = score_field(rho).interpolate(drifts.locations.reshape(-1, 1), t)[:, 0]
    expected = ens.sigma**2 * score
    residuals = drifts.difference - expected
    passed = np.abs(residuals) <= 3 * drifts.difference_se
    return DualityReport(drifts.time, drifts, expected, residuals, passed, pvalue)


@dataclass
class RelativeEntropyEstimate:
    value: float
    standard_error: float
    marginal_term: float
    n_paths: int


def _drift_or_zero(drift: Optional[Drift], x: np.ndarray, t: float) -> np.ndarray:
    if drift is None:
        return np.zeros_like(x)
    return np.asarray(drift(x, t), dtype=float).reshape(x.shape)


def _relative_entropy(ens, drift_q, drift_p, marginal, steps, sigma_p) -> RelativeEntropyEstimate:
    if not ens.fully_recorded:
        raise UserException("Relative entropy estimation needs an ensemble recorded at every step")
    if sigma_p is not None and not np.isclose(sigma_p, ens.sigma, rtol=1e-12, atol=0):
        raise UserException(f"Relative entropy needs equal diffusion coefficients, got {ens.sigma} and {sigma_p}")
    dt = ens.dt
    per_path = np.zeros(ens.n_paths)
    if drift_q is not drift_p:
        for k in steps:
            x = ens.paths[:, k]
            mismatch = _drift_or_zero(drift_q, x, ens.times[k]) - _drift_or_zero(drift_p, x, ens.times[k])
            per_path += np.sum(mismatch**2, axis=-1) * dt
        per_path /= 2 * ens.sigma**2
    standard_error = float(np.std(per_path, ddof=1) / np.sqrt(ens.n_paths)) if ens.n_paths > 1 else 0.0
    return RelativeEntropyEstimate(marginal + float(np.mean(per_path)), standard_error, marginal, ens.n_paths)


def relative_entropy_forward(ens_q: PathEnsemble, drift_q, drift_p, h0: float, sigma_p=None) -> RelativeEntropyEstimate:
    """H(Q, P) = H(q₀, p₀) + E_Q Σ_k ‖b₊^Q - b₊^P‖²(x_k, t_k) Δt / (2σ²), left-point sum"""
    return _relative_entropy(ens_q, drift_q, drift_p, h0, range(len(ens_q.times) - 1), sigma_p)


def relative_entropy_backward(
    ens_q: PathEnsemble, back_drift_q, back_drift_p, h1: float, sigma_p=None
) -> RelativeEntropyEstimate:
    """H(Q, P) = H(q₁, p₁) + E_Q Σ_k ‖b₋^Q - b₋^P‖²(x_k, t_k) Δt / (2σ²), right-point sum"""
    return _relative_entropy(ens_q, back_drift_q, back_drift_p, h1, range(1, len(ens_q.times)), sigma_p)


def gaussian_relative_entropy(mean_q, var_q, mean_p, var_p) -> float:
    """H(N(m_q, v_q) ‖ N(m_p, v_p)) for independent coordinates"""
    mean_q, var_q, mean_p, var_p = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (mean_q, var_q, mean_p, var_p))
    if np.any(var_q <= 0) or np.any(var_p <= 0):
        raise UserException("Gaussian variances must be positive")
    terms = var_q / var_p - 1 + (mean_q - mean_p) ** 2 / var_p + np.log(var_p / var_q)
    return float(0.5 * np.sum(terms))


def gaussian_sampler(mean, variance, dim: int = 1) -> Sampler:
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (dim,))
    std = np.sqrt(np.broadcast_to(np.asarray(variance, dtype=float), (dim,)))

    def sample(n, rng):
        return mean + std * rng.standard_normal((n, dim))

    return sample


def point_sampler(x) -> Sampler:
    x = np.atleast_1d(np.asarray(x, dtype=float))

    def sample(n, rng):
        return np.broadcast_to(x, (n, len(x))).copy()

    return sample
