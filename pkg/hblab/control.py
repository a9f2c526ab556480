from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from loguru import logger
from tqdm import tqdm

import hblab.globals
from .exceptions import UserException, MaskedNodeException
from .halfbridge import HalfBridgeSolution, grid_sampler
from .model.grid import DensityStack, ScalarStack
from .model.landscape import EnergyLandscape, GibbsDensity
from .pde import solve_heat, solve_hjb, default_grid, gibbs_on_grid, score_field, viscous_hj_residual
from .sde import DiffusionSpec, simulate_reverse, REVERSE, EXPLOSION_FACTOR, point_sampler
from .smoothing import HeatKernelParams, local_entropy
from .util import as_points, wasserstein1

MIN_ROLLOUTS = 1000
Z_THRESHOLD = 3.0
PASS_FRACTION = 0.9


class ControlPolicy(ABC):
    """Markov feedback control v(x, s) of the reverse-time state equation"""

    kind: str = None

    def __init__(self, beta: float):
        if beta <= 0:
            raise UserException(f"Inverse temperature must be positive, got {beta}")
        self.beta = float(beta)

    @abstractmethod
    def __call__(self, x: np.ndarray, s: float) -> np.ndarray:
        raise NotImplementedError()

    @property
    def horizon(self) -> float:
        return np.inf

    def describe(self) -> str:
        return self.kind


class ZeroPolicy(ControlPolicy):
    kind = "zero"

    def __call__(self, x, s):
        return np.zeros_like(x)


class ConstantPolicy(ControlPolicy):
    kind = "constant"

    def __init__(self, beta: float, theta):
        super().__init__(beta)
        self.theta = np.atleast_1d(np.asarray(theta, dtype=float))

    def __call__(self, x, s):
        return np.broadcast_to(self.theta, x.shape).copy()

    def describe(self):
        return f"constant({', '.join(f'{v:g}' for v in self.theta)})"


class CustomPolicy(ControlPolicy):
    kind = "custom"

    def __init__(self, beta: float, function: Callable[[np.ndarray, float], np.ndarray], name: str = "custom"):
        super().__init__(beta)
        self.function = function
        self.name = name

    def __call__(self, x, s):
        return np.asarray(self.function(x, s), dtype=float).reshape(x.shape)

    def describe(self):
        return self.name


class ScorePolicy(ControlPolicy):
    """v*(x, s) = -(1/β) ∇log ρ(x, s) read off a density stack"""

    kind = "score"

    def __init__(self, rho: DensityStack, beta: float):
        super().__init__(beta)
        self.rho = rho
        self.score = score_field(rho)

    @property
    def horizon(self):
        return float(self.rho.times[-1])

    def __call__(self, x, s):
        values = -self.score.interpolate(x, s) / self.beta
        if np.isnan(values).any():
            where = x[np.isnan(values).any(axis=-1)][0]
            raise MaskedNodeException(f"x={where.tolist()}, s={s:.6g}")
        return values


def make_score_policy(rho: DensityStack, beta: float) -> ScorePolicy:
    return ScorePolicy(rho, beta)


@dataclass
class ValueEstimate:
    mean: float
    standard_error: float
    n: int
    x: np.ndarray
    t: float
    policy: str
    flagged: int = 0


def terminal_cost(gibbs: GibbsDensity, x0: np.ndarray):
    """-log ρ̄(X₀) + β c(β), continued by the quadratic envelope of f outside the box. Returns (cost, flagged)"""
    landscape = gibbs.landscape
    outside = ~landscape.inside_box(x0, gibbs.beta)
    with np.errstate(over="ignore"):
        cost = -gibbs.log_density(x0) + gibbs.beta * gibbs.c_beta
    if outside.any():
        cost = np.where(outside, gibbs.beta * landscape.envelope_energy(x0, gibbs.beta), cost)
    return cost, outside


def rollout_value(
    policy: ControlPolicy, x, t: float, K: int, N: int, seed: int, gibbs: GibbsDensity, threads=None
) -> ValueEstimate:
    """Monte Carlo cost of `policy` for the reverse-time state equation started at X_t = x:
    Σ (β/2)‖v‖² Δs - log ρ̄(X₀) + β c(β), with mean and standard error over N paths
    """
    landscape = gibbs.landscape
    points, _ = as_points(x, landscape.dim)
    start = points[0]
    if N < MIN_ROLLOUTS:
        raise UserException(f"Value estimates need at least {MIN_ROLLOUTS} rollouts, got {N}")
    if not 0 < t <= policy.horizon * (1 + 1e-12):
        raise UserException(f"Rollout time {t} outside (0, {policy.horizon}] for the {policy.describe()} policy")
    if abs(policy.beta - gibbs.beta) > 1e-12 * gibbs.beta:
        raise UserException("The policy and the Gibbs density use different temperatures")

    spec = DiffusionSpec(
        dim=landscape.dim,
        drift=policy,
        sigma=1 / np.sqrt(gibbs.beta),
        direction=REVERSE,
        T=t,
        bound=EXPLOSION_FACTOR * landscape.box_half_width(gibbs.beta),
    )
    ensemble = simulate_reverse(spec, point_sampler(start), K, N, seed, record=[0], threads=threads)
    final_cost, outside = terminal_cost(gibbs, ensemble.at_step(0))
    costs = 0.5 * gibbs.beta * ensemble.energy + final_cost
    flagged = int(outside.sum())
    if flagged:
        logger.warning(f"{flagged} of {N} rollouts from x={start.tolist()} ended outside the landscape box")
    return ValueEstimate(
        mean=float(np.mean(costs)),
        standard_error=float(np.std(costs, ddof=1) / np.sqrt(N)),
        n=N,
        x=start,
        t=float(t),
        policy=policy.describe(),
        flagged=flagged,
    )


def default_probes(landscape: EnergyLandscape, beta: float, gamma: float) -> List:
    """Nine (x, t) probes: three points near the origin times three fractions of γ"""
    scale = min(1.0, landscape.box_half_width(beta) / 3)
    points = [np.full(landscape.dim, c * scale) for c in (-1.0, 0.0, 1.0)]
    if landscape.dim == 2:
        points = [np.array([c * scale, -0.5 * c * scale]) for c in (-1.0, 0.0, 1.0)]
    return [(p, f * gamma) for p in points for f in (1 / 3, 2 / 3, 1.0)]


@dataclass
class ProbeResult:
    x: np.ndarray
    t: float
    value: float
    standard_error: float
    u_quadrature: float
    u_pde: float
    z_threshold: float = Z_THRESHOLD

    @property
    def z_quadrature(self) -> float:
        return _z(self.value - self.u_quadrature, self.standard_error)

    @property
    def z_pde(self) -> float:
        return _z(self.value - self.u_pde, self.standard_error)

    @property
    def passed(self) -> bool:
        return abs(self.z_quadrature) <= self.z_threshold and abs(self.z_pde) <= self.z_threshold


def _z(difference: float, standard_error: float) -> float:
    if standard_error == 0:
        return 0.0 if difference == 0 else np.sign(difference) * np.inf
    return difference / standard_error


@dataclass
class TheoremReport:
    landscape: str
    beta: float
    gamma: float
    probes: List[ProbeResult]
    pass_fraction_required: float = PASS_FRACTION

    @property
    def pass_fraction(self) -> float:
        return float(np.mean([p.passed for p in self.probes]))

    @property
    def passed(self) -> bool:
        return self.pass_fraction >= self.pass_fraction_required

    def rows(self) -> List[Dict]:
        rows = []
        for p in self.probes:
            row = {f"x{i}": float(v) for i, v in enumerate(p.x)}
            row.update(
                t=p.t,
                value_over_beta=p.value,
                se=p.standard_error,
                u_quadrature=p.u_quadrature,
                u_pde=p.u_pde,
                z_quadrature=p.z_quadrature,
                z_pde=p.z_pde,
                passed=int(p.passed),
            )
            rows.append(row)
        return rows


@dataclass
class ControlProblem:
    """Everything the rollouts of one landscape and temperature share: Gibbs density, grid, heat flow and HJB solution"""

    landscape: EnergyLandscape
    beta: float
    gamma: float
    gibbs: GibbsDensity
    rho: DensityStack
    u: ScalarStack

    @classmethod
    def build(cls, landscape: EnergyLandscape, beta: float, gamma: float, grid=None, steps=None) -> "ControlProblem":
        gibbs = GibbsDensity(landscape, beta)
        grid = grid or default_grid(landscape, beta, gamma)
        rho_bar = gibbs_on_grid(gibbs, grid)
        rho = solve_heat(rho_bar, beta, gamma, steps, grid)
        u = solve_hjb(landscape.energy(grid.points()), beta, gamma, steps, grid)
        return cls(landscape, beta, gamma, gibbs, rho, u)

    def score_policy(self) -> ScorePolicy:
        return make_score_policy(self.rho, self.beta)


def verify_theorem(
    landscape: EnergyLandscape,
    beta: float,
    gamma: float,
    probes: Optional[Sequence] = None,
    N: int = 100000,
    seed: int = 0,
    K: int = 200,
    problem: Optional[ControlProblem] = None,
    threads=None,
    z: float = Z_THRESHOLD,
) -> TheoremReport:
    """Compares (1/β)·V̂(x, t) under the score policy with u(x, t) from quadrature and from the HJB solver"""
    if landscape.dim not in (1, 2):
        raise UserException("verify_theorem needs a 1-D or 2-D landscape")
    problem = problem or ControlProblem.build(landscape, beta, gamma)
    policy = problem.score_policy()
    probes = list(probes) if probes is not None else default_probes(landscape, beta, gamma)

    results = []
    for index, (x, t) in enumerate(tqdm(probes, desc="Probes", disable=hblab.globals.quiet, leave=False)):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not landscape.inside_box(x, beta):
            raise UserException(f"Probe x={x.tolist()} lies outside the landscape box")
        estimate = rollout_value(policy, x, t, K, N, seed + index, problem.gibbs, threads)
        u_quadrature = local_entropy(HeatKernelParams(t, beta, landscape.dim), landscape, x)
        u_pde = float(problem.u.interpolate(x.reshape(1, -1), t)[0])
        result = ProbeResult(
            x, float(t), estimate.mean / beta, estimate.standard_error / beta, u_quadrature, u_pde, z
        )
        logger.debug(
            f"Probe x={x.tolist()} t={t:.4g}: V/β={result.value:.5f}±{result.standard_error:.1e} "
            f"u_quad={u_quadrature:.5f} u_pde={u_pde:.5f}"
        )
        results.append(result)

    report = TheoremReport(landscape.name, beta, gamma, results)
    logger.info(f"{report.pass_fraction:.0%} of {len(results)} probes agree with the local entropy within {z:g} SE")
    return report


def compare_policies(
    policies: Dict[str, ControlPolicy], x, t: float, K: int, N: int, seed: int, gibbs: GibbsDensity, threads=None
) -> Dict[str, ValueEstimate]:
    """Value of each policy from the same start, all driven by the same random numbers"""
    return {name: rollout_value(policy, x, t, K, N, seed, gibbs, threads) for name, policy in policies.items()}


def dominates(optimal: ValueEstimate, other: ValueEstimate, z: float = Z_THRESHOLD) -> bool:
    """value(other) ≥ value(optimal) - z·(SE_other + SE_optimal)"""
    return other.mean >= optimal.mean - z * (other.standard_error + optimal.standard_error)


def check_measure_identity(
    solution: HalfBridgeSolution, t: float, times: Sequence[float], K: int, N: int, seed: int, threads=None
) -> Dict[float, float]:
    """Starts the controlled reverse process under v* from X_t ~ q₁*(·, t) and returns, for each s in `times`,
    the W1 distance between its time-s samples and q₁*(·, s)
    """
    policy = make_score_policy(solution.stack, solution.beta)
    grid = solution.grid
    spec = DiffusionSpec(dim=grid.dim, drift=policy, sigma=np.sqrt(solution.sigma2), direction=REVERSE, T=t)
    step_of = {s: int(round(s / t * K)) for s in times}
    if any(not 0 <= k <= K for k in step_of.values()):
        raise UserException(f"Comparison times must lie in [0, {t}]")
    final = grid_sampler(grid, solution.stack.slice_at(t))
    ensemble = simulate_reverse(spec, final, K, N, seed, record=sorted(set(step_of.values())), threads=threads)
    return {
        s: wasserstein1(ensemble.at_step(k), grid.axes, solution.stack.slice_at(ensemble.times[k]))
        for s, k in step_of.items()
    }


def check_dpe_residual(V: ScalarStack, beta: float, region=None) -> float:
    """max over the bulk of |∂V/∂t - (1/2β) ΔV + (1/2β) ‖∇V‖²|"""
    return float(np.max(viscous_hj_residual(V, 1 / (2 * beta), 1 / (2 * beta), region)))


def value_stack(u: ScalarStack, beta: float) -> ScalarStack:
    """V = β·u"""
    return ScalarStack(u.grid, u.times, beta * u.values, mask=u.mask)
