import numpy as np
from loguru import logger

from .experiment import Experiment
from ..model.landscape import GradientNoiseModel
from ..optimize import gradient_descent_run, local_entropy_run, sgd_run, geometric_schedule, minima_census

RUN_COLUMNS = ["method", "k", "f", "f_gamma", "gamma"]
CENSUS_NPTS = 4001
# Scale of the global-minimum tolerance when the minimum value is close to zero
ABSOLUTE_FLOOR = 1e-2
REDUCTION_TOLERANCE = 1e-12


class OptimizeExperiment(Experiment):
    """Escape test: local-entropy descent with a decaying smoothing schedule against plain gradient descent,
    both from the same start with the same step size
    """

    name = "optimize"
    description = "Local-entropy descent against gradient descent (and SGD on finite sums) from the same start"

    def _run(self):
        config = self.config
        landscape = config.landscape
        section = config.section("optimizer")
        x0, iters, eta = section["x0"], int(section["iters"]), float(section["eta"])

        descent = gradient_descent_run(landscape, x0, iters, eta)
        schedule = geometric_schedule(float(section["gamma0"]), iters, float(section["decay"]))
        smoothed = local_entropy_run(
            landscape, config.beta, schedule, x0, iters, eta, int(section["inner_n"]), config.seed
        )
        runs = [descent, smoothed]
        if landscape.components is not None:
            model = GradientNoiseModel(landscape, int(section["minibatch"]), eta)
            runs.append(sgd_run(model, x0, iters, config.seed))

        rows = []
        for run in runs:
            for row in run.rows():
                row.setdefault("f_gamma", "")
                row.setdefault("gamma", "")
                rows.append({"method": run.method, **row})
        coordinates = [f"x{i}" for i in range(landscape.dim)]
        self._write_csv("runs.csv", rows, RUN_COLUMNS[:2] + coordinates + RUN_COLUMNS[2:])

        for run in runs:
            logger.info(f"{run.method}: f(x_final) = {run.final_value:.6g} at x = {run.final.tolist()}")
            self._check(f"{run.method} stays bounded", not run.diverged, run.iterations, iters)

        self._check_reduction(descent)
        if landscape.dim == 1:
            self._check_escape(descent, smoothed)
        else:
            logger.info("The global-minimum census is one-dimensional, escape check skipped")

    def _check_reduction(self, descent):
        """Local-entropy descent with γ ≡ 0 has to retrace gradient descent"""
        config = self.config
        section = config.section("optimizer")
        unsmoothed = local_entropy_run(
            config.landscape, config.beta, 0.0, section["x0"], int(section["iters"]), float(section["eta"])
        )
        same_length = unsmoothed.history.shape == descent.history.shape
        steps = min(len(unsmoothed.history), len(descent.history))
        difference = float(np.max(np.abs(unsmoothed.history[:steps] - descent.history[:steps])))
        self._check(
            "zero smoothing reproduces gradient descent",
            same_length and difference <= REDUCTION_TOLERANCE,
            difference,
            REDUCTION_TOLERANCE,
            f"{len(unsmoothed.history) - 1} and {len(descent.history) - 1} iterations",
        )

    def _check_escape(self, descent, smoothed):
        config = self.config
        landscape = config.landscape
        half_width = landscape.box_half_width(config.beta)
        axis = np.linspace(-half_width, half_width, CENSUS_NPTS)
        values = landscape.energy(axis.reshape(-1, 1))
        census = minima_census(values, axis)
        global_minimum = census[0].value if census else float(np.min(values))

        allowed = config.tolerance("relative") * max(abs(global_minimum), ABSOLUTE_FLOOR)
        distance = smoothed.final_value - global_minimum
        self._check(
            "local entropy reaches the global minimum",
            distance <= allowed,
            distance,
            allowed,
            f"global minimum {global_minimum:.6g} from a {CENSUS_NPTS}-point census, "
            f"local entropy ends at {smoothed.final_value:.6g}",
        )

        detail = f"final f: gradient descent {descent.final_value:.6g}, local entropy {smoothed.final_value:.6g}"
        if descent.final_value - global_minimum <= allowed:
            self._check("local entropy escapes the sharp minimum", True, detail="gradient descent is not trapped")
            return
        gap = descent.final_value - smoothed.final_value
        self._check("local entropy escapes the sharp minimum", gap > 0, gap, 0.0, detail)
