import numpy as np

from .experiment import Experiment, histogram_rows
from ..model.landscape import GibbsDensity
from ..pde import default_grid, gibbs_on_grid
from ..sde import langevin_spec, simulate_forward, gaussian_sampler
from ..util import wasserstein1


class LangevinExperiment(Experiment):
    """Long-horizon Langevin diffusion dX = -∇f dt + β^(-1/2) dW, the continuous model of SGD at temperature 1/β"""

    name = "langevin"
    description = "Long-horizon Langevin ensemble against its Gibbs invariant density"

    def _run(self):
        config = self.config
        landscape = config.landscape
        beta = config.beta
        section = config.section("langevin")
        T = float(section["T"])
        steps = max(1, int(np.ceil(T / float(section["dt"]))))

        spec = langevin_spec(landscape, beta, T)
        init = gaussian_sampler(0.0, 1.0, landscape.dim)
        ensemble = simulate_forward(spec, init, steps, config.N, config.seed, record="ends", threads=config.threads)
        self._save_ensemble(ensemble, "paths")

        grid = config.grid(default_grid(landscape, beta, 0.0))
        rho_bar = gibbs_on_grid(GibbsDensity(landscape, beta), grid)
        samples = ensemble.at_step(steps)
        distance = wasserstein1(samples, grid.axes, rho_bar)
        tolerance = config.tolerance("w1")
        self._check(
            "Langevin ensemble reaches the Gibbs density", distance <= tolerance, distance, tolerance, f"{steps} steps"
        )
        if landscape.dim == 1:
            self._write_csv("histogram.csv", histogram_rows(samples, grid.axes[0], rho_bar))
