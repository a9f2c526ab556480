import numpy as np
from loguru import logger
from tqdm import tqdm

import hblab.globals
from .experiment import Experiment
from ..model.landscape import Quadratic
from ..optimize import smoothed_census
from ..smoothing import HeatKernelParams, local_entropy, local_entropy_gradient, gaussian_oracle

CURVE_NPTS = {1: 401, 2: 41}
# Central-difference step for the gradient consistency check
FD_STEP = 1e-4


class SmoothExperiment(Experiment):
    name = "smooth"
    description = "Local entropy f_γ on a grid for each γ, with the minima census and gradient consistency"

    def _run(self):
        config = self.config
        landscape = config.landscape
        beta = config.beta
        half_width = landscape.box_half_width(beta)
        npts = CURVE_NPTS.get(landscape.dim, CURVE_NPTS[2])
        axes = [np.linspace(-half_width, half_width, npts)] * landscape.dim
        points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, landscape.dim)

        rows = []
        for gamma in tqdm(config.gammas, desc="Smoothing", disable=hblab.globals.quiet, leave=False):
            values = local_entropy(HeatKernelParams(gamma, beta, landscape.dim), landscape, points)
            for point, value in zip(points, values):
                row = {"gamma": gamma}
                row.update({f"x{i}": float(c) for i, c in enumerate(point)})
                row["f_gamma"] = float(value)
                rows.append(row)
        self._write_csv("smooth.csv", rows)

        probes = self._probes(half_width / 2)
        self._check_gradients(probes)
        if isinstance(landscape, Quadratic) and landscape.curvature == 1 and not np.any(landscape.center):
            self._check_oracle(probes)
        if landscape.dim == 1:
            self._census(axes[0])

    def _probes(self, half_width: float) -> np.ndarray:
        line = np.linspace(-half_width, half_width, 5)
        if self.config.landscape.dim == 1:
            return line.reshape(-1, 1)
        return np.column_stack([line, -0.5 * line])

    def _check_gradients(self, probes: np.ndarray):
        landscape = self.config.landscape
        worst = 0.0
        for gamma in self.config.gammas:
            params = HeatKernelParams(gamma, self.config.beta, landscape.dim)
            gradient = local_entropy_gradient(params, landscape, probes).value
            for axis in range(landscape.dim):
                step = np.zeros(landscape.dim)
                step[axis] = FD_STEP
                difference = local_entropy(params, landscape, probes + step) - local_entropy(
                    params, landscape, probes - step
                )
                worst = max(worst, float(np.max(np.abs(gradient[:, axis] - difference / (2 * FD_STEP)))))
        tolerance = self.config.tolerance("gradient")
        self._check("gradient matches finite differences", worst <= tolerance, worst, tolerance)

    def _check_oracle(self, probes: np.ndarray):
        landscape = self.config.landscape
        worst = 0.0
        for gamma in self.config.gammas:
            values = local_entropy(HeatKernelParams(gamma, self.config.beta, landscape.dim), landscape, probes)
            expected = gaussian_oracle(self.config.beta, gamma, probes)
            worst = max(worst, float(np.max(np.abs(values - expected))))
        tolerance = self.config.tolerance("oracle")
        self._check("Gaussian closed form", worst <= tolerance, worst, tolerance)

    def _census(self, axis: np.ndarray):
        census = smoothed_census(self.config.landscape, self.config.beta, self.config.gammas, axis)
        rows = []
        for gamma, minima in census.items():
            logger.debug(f"gamma={gamma:g}: {len(minima)} local minima")
            for rank, minimum in enumerate(minima):
                rows.append(
                    {
                        "gamma": gamma,
                        "rank": rank,
                        "location": minimum.location,
                        "value": minimum.value,
                        "curvature": minimum.curvature,
                    }
                )
        self._write_csv("census.csv", rows, ["gamma", "rank", "location", "value", "curvature"])

        counts = [len(minima) for minima in census.values()]
        increases = sum(b > a for a, b in zip(counts, counts[1:]))
        self._check(
            "minima count nonincreasing in gamma",
            increases == 0,
            increases,
            0,
            "counts " + ", ".join(str(c) for c in counts),
        )
