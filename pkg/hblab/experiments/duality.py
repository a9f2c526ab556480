import numpy as np

from .experiment import Experiment
from ..exceptions import ConfigurationException
from ..model.grid import SpatialGrid, DensityStack
from ..pde import solve_heat
from ..sde import DiffusionSpec, simulate_forward, check_duality, gaussian_sampler, FORWARD

WIENER = "wiener"
ORNSTEIN_UHLENBECK = "ou"
# Initial variance of the Wiener ensemble
WIENER_VARIANCE = 1.0
HORIZON = 1.0
GRID_NPTS = 801
GRID_STDS = 8.0
DUALITY_COLUMNS = [
    "location",
    "count",
    "forward",
    "forward_se",
    "backward",
    "backward_se",
    "difference",
    "difference_se",
    "expected",
    "residual",
    "passed",
]


class DualityExperiment(Experiment):
    """Nelson's duality b₊ - b₋ = σ²∇log ρ on a Wiener ensemble with Gaussian start, or on a stationary
    Ornstein-Uhlenbeck ensemble, both at σ² = 1/β
    """

    name = "duality"
    description = "Nelson duality b+ - b- = sigma^2 grad log rho on Wiener and stationary OU ensembles"

    def _run(self):
        config = self.config
        section = config.section("duality")
        t = float(section["t"])
        if not 0 < t < HORIZON:
            raise ConfigurationException(f"The duality slice must lie inside (0, {HORIZON}), got {t}", path="$.duality.t")

        sigma2 = 1 / config.beta
        builders = {WIENER: self._wiener, ORNSTEIN_UHLENBECK: self._ornstein_uhlenbeck}
        spec, init, rho = builders[section["process"]](sigma2)

        k = int(round(t / HORIZON * config.K))
        ensemble = simulate_forward(
            spec, init, config.K, config.N, config.seed, record=[k - 1, k, k + 1], threads=config.threads
        )
        self._save_ensemble(ensemble, "paths")
        report = check_duality(ensemble, rho, ensemble.times[k], bins=int(section["bins"]))

        drifts = report.drifts
        rows = [
            {
                "location": drifts.locations[b],
                "count": int(drifts.counts[b]),
                "forward": drifts.forward[b],
                "forward_se": drifts.forward_se[b],
                "backward": drifts.backward[b],
                "backward_se": drifts.backward_se[b],
                "difference": drifts.difference[b],
                "difference_se": drifts.difference_se[b],
                "expected": report.expected[b],
                "residual": report.residuals[b],
                "passed": bool(report.passed[b]),
            }
            for b in range(drifts.n_bins)
        ]
        self._write_csv("duality.csv", rows, DUALITY_COLUMNS)

        required = config.tolerance("pass_fraction")
        self._check(
            "duality residual within 3 SE",
            report.pass_fraction >= required,
            report.pass_fraction,
            required,
            f"{drifts.n_bins} bins, weighted L2 residual {report.weighted_l2:.4g}, KS p-value {report.ks_pvalue:.3g}",
        )

    def _grid(self, variance: float) -> SpatialGrid:
        return SpatialGrid.centered(GRID_STDS * np.sqrt(variance), GRID_NPTS)

    def _wiener(self, sigma2: float):
        config = self.config
        spec = DiffusionSpec(dim=1, drift=None, sigma=np.sqrt(sigma2), direction=FORWARD, T=HORIZON)
        grid = self._grid(WIENER_VARIANCE + sigma2 * HORIZON)
        x = grid.axes[0]
        rho0 = np.exp(-(x**2) / (2 * WIENER_VARIANCE)) / np.sqrt(2 * np.pi * WIENER_VARIANCE)
        rho = solve_heat(rho0, config.beta, HORIZON, config.K, grid)
        return spec, gaussian_sampler(0.0, WIENER_VARIANCE), rho

    def _ornstein_uhlenbeck(self, sigma2: float):
        """dX = -X dt + σ dW started from its invariant law N(0, σ²/2)"""
        config = self.config
        variance = sigma2 / 2
        spec = DiffusionSpec(dim=1, drift=lambda x, t: -x, sigma=np.sqrt(sigma2), direction=FORWARD, T=HORIZON)

        def density(points, t):
            return np.exp(-points[..., 0] ** 2 / (2 * variance)) / np.sqrt(2 * np.pi * variance)

        times = np.linspace(0.0, HORIZON, config.K + 1)
        rho = DensityStack.from_function(self._grid(variance), times, density, config.beta)
        return spec, gaussian_sampler(0.0, variance), rho
