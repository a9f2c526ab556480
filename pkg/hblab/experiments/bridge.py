import numpy as np

from .experiment import Experiment, histogram_rows
from .. import cache
from ..halfbridge import reverse_sample_gibbs, solve_problem2, grid_sampler
from ..pde import default_grid, gibbs_on_grid
from ..sde import DiffusionSpec, simulate_forward, FORWARD, EXPLOSION_FACTOR
from ..util import wasserstein1

# Fractions of γ at which the zero-drift forward marginal is compared with the heat flow
FORWARD_FRACTIONS = (0.25, 0.5, 1.0)
# Time slices of q1 written to q1.csv
CSV_SLICES = 5


class BridgeExperiment(Experiment):
    name = "bridge"
    description = "Half-bridge sampling: reverse-time Gibbs sampler and both pinned marginals against the heat flow"

    def _run(self):
        config = self.config
        landscape = config.landscape
        beta, gamma = config.beta, config.gamma
        grid = config.grid(default_grid(landscape, beta, gamma))
        tolerance = config.tolerance("w1")

        result = reverse_sample_gibbs(
            landscape, beta, gamma, config.K, config.N, config.seed, grid, config.steps, config.threads
        )
        stack = result.solution.stack
        self._save_stack(stack, "q1")
        self._write_csv("q1.csv", cache.stack_rows(stack, every=max(1, (len(stack.times) - 1) // (CSV_SLICES - 1))))
        self._save_ensemble(result.ensemble, "reverse-paths")
        self._check("reverse-time samples follow the Gibbs density", result.w1 <= tolerance, result.w1, tolerance)
        rows = [{"stage": "reverse", "t": 0.0, "w1": result.w1}]

        rho_bar = gibbs_on_grid(result.gibbs, grid)
        rho_bar = rho_bar / grid.integrate(rho_bar)
        spec = DiffusionSpec(
            dim=landscape.dim,
            drift=None,
            sigma=1 / np.sqrt(beta),
            direction=FORWARD,
            T=gamma,
            bound=EXPLOSION_FACTOR * landscape.box_half_width(beta),
        )
        steps = {fraction: int(round(fraction * config.K)) for fraction in FORWARD_FRACTIONS}
        init = grid_sampler(grid, rho_bar)
        record = sorted(steps.values())
        forward = simulate_forward(spec, init, config.K, config.N, config.seed + 1, record, config.threads)
        worst = 0.0
        for fraction, k in steps.items():
            t = float(forward.times[k])
            distance = wasserstein1(forward.at_step(k), grid.axes, result.solution.stack.slice_at(t))
            rows.append({"stage": "forward", "t": t, "w1": distance})
            worst = max(worst, distance)
        self._check("forward marginals follow the heat flow", worst <= tolerance, worst, tolerance)

        final_pinned = solve_problem2(rho_bar, beta, gamma, grid, config.steps)
        spec.drift = final_pinned.forward_drift
        pinned = simulate_forward(
            spec,
            grid_sampler(grid, final_pinned.stack.values[0]),
            config.K,
            config.N,
            config.seed + 2,
            record="ends",
            threads=config.threads,
        )
        distance = wasserstein1(pinned.at_step(config.K), grid.axes, rho_bar)
        rows.append({"stage": "final-pinned", "t": gamma, "w1": distance})
        self._check("final-pinned bridge reaches the Gibbs density", distance <= tolerance, distance, tolerance)

        self._write_csv("marginals.csv", rows, ["stage", "t", "w1"])
        if landscape.dim == 1:
            self._write_csv("samples.csv", histogram_rows(result.samples, grid.axes[0], rho_bar))
