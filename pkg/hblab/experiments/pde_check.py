import numpy as np
from loguru import logger

from .experiment import Experiment
from ..model.grid import SpatialGrid
from ..model.landscape import GibbsDensity
from ..pde import (
    DEFAULT_STEPS,
    default_grid,
    gibbs_on_grid,
    solve_heat,
    solve_hjb,
    cole_hopf,
    hjb_residual,
    bulk_linf,
    convergence_order,
)
from ..smoothing import HeatKernelParams, local_entropy

MASS_TOLERANCE = 1e-8
MIN_RESIDUAL_ORDER = 1.8
# Residuals below this are roundoff
RESIDUAL_FLOOR = 1e-10
QUADRATURE_PROBES = 41


class PdeCheckExperiment(Experiment):
    name = "pde-check"
    description = "Cole-Hopf transform of the heat flow against the direct HJB solver and the smoothing quadrature"

    def _run(self):
        config = self.config
        landscape = config.landscape
        beta, gamma = config.beta, config.gamma
        gibbs = GibbsDensity(landscape, beta)
        grid = config.grid(default_grid(landscape, beta, gamma))
        steps = config.steps or DEFAULT_STEPS
        box = landscape.box(beta)

        rho = solve_heat(gibbs_on_grid(gibbs, grid), beta, gamma, steps, grid)
        u_heat = cole_hopf(rho, gibbs.c_beta)
        u_direct = solve_hjb(landscape.energy(grid.points()), beta, gamma, steps, grid, scheme="direct")
        self._save_stack(rho, "rho")
        self._save_stack(u_heat, "u-cole-hopf")
        self._save_stack(u_direct, "u-direct")

        masses = rho.masses()
        drift = float(np.max(np.abs(masses - masses[0])))
        self._check("mass conserved by the heat flow", drift <= MASS_TOLERANCE, drift, MASS_TOLERANCE)

        tolerance = config.tolerance("linf")
        discrepancy = max(
            bulk_linf(u_heat.values[k], u_direct.values[k], grid, box) for k in range(1, len(rho.times))
        )
        self._check("Cole-Hopf matches direct HJB", discrepancy <= tolerance, discrepancy, tolerance)

        quadrature = self._quadrature_discrepancy(u_heat, grid, box)
        self._check("Cole-Hopf matches smoothing quadrature", quadrature <= tolerance, quadrature, tolerance)

        residual = hjb_residual(u_heat, beta, self._residual_region(box))
        coarse_grid = SpatialGrid(grid.bounds, [n // 2 + 1 for n in grid.npts])
        coarse_rho = solve_heat(gibbs_on_grid(gibbs, coarse_grid), beta, gamma, max(steps // 2, 2), coarse_grid)
        coarse_residual = hjb_residual(cole_hopf(coarse_rho, gibbs.c_beta), beta, self._residual_region(box))
        fine_max, coarse_max = float(np.max(residual)), float(np.max(coarse_residual))
        logger.debug(f"HJB residual {fine_max:.3e} (fine), {coarse_max:.3e} (coarse)")
        if coarse_max <= RESIDUAL_FLOOR:
            self._check("HJB residual convergence order", True, coarse_max, RESIDUAL_FLOOR, "residual vanishes")
        else:
            order = convergence_order([max(grid.h), max(coarse_grid.h)], [max(fine_max, RESIDUAL_FLOOR), coarse_max])
            self._check("HJB residual convergence order", order >= MIN_RESIDUAL_ORDER, order, MIN_RESIDUAL_ORDER)
        self._write_csv(
            "residual.csv",
            [{"t": float(t), "residual": float(r)} for t, r in zip(rho.times[1:-1], residual)],
        )

        self._write_csv("pde.csv", self._final_rows(rho, u_heat, u_direct))

    def _residual_region(self, box):
        return [(lo / 2, hi / 2) for lo, hi in box]

    def _quadrature_discrepancy(self, u_heat, grid, box) -> float:
        config = self.config
        landscape = config.landscape
        bulk = grid.bulk_mask(region=box)
        points = grid.points()[bulk]
        chosen = np.unique(np.linspace(0, len(points) - 1, QUADRATURE_PROBES).astype(int))
        points = points[chosen]
        expected = local_entropy(HeatKernelParams(config.gamma, config.beta, landscape.dim), landscape, points)
        values = u_heat.values[-1][bulk][chosen]
        return float(np.nanmax(np.abs(values - expected)))

    @staticmethod
    def _final_rows(rho, u_heat, u_direct):
        grid = rho.grid
        points = grid.points().reshape(-1, grid.dim)
        columns = zip(points, rho.values[-1].ravel(), u_heat.values[-1].ravel(), u_direct.values[-1].ravel())
        rows = []
        for point, density, heat, direct in columns:
            row = {f"x{i}": float(c) for i, c in enumerate(point)}
            row.update(rho=float(density), u_cole_hopf=float(heat), u_direct=float(direct))
            rows.append(row)
        return rows
