import numpy as np
from loguru import logger

from .experiment import Experiment
from ..control import (
    ControlProblem,
    ZeroPolicy,
    ConstantPolicy,
    verify_theorem,
    compare_policies,
    dominates,
    default_probes,
)
from ..pde import default_grid

# Fraction of probes at which the zero control must be strictly worse than the score control on the double well
STRICT_SUBOPTIMALITY = 7 / 9


class VerifyTheoremExperiment(Experiment):
    name = "verify-theorem"
    description = "Monte Carlo value of the score control against the local entropy from quadrature and PDE"

    def _run(self):
        config = self.config
        landscape = config.landscape
        beta, gamma = config.beta, config.gamma
        grid = config.grid(default_grid(landscape, beta, gamma))
        problem = ControlProblem.build(landscape, beta, gamma, grid, config.steps)
        self._save_stack(problem.rho, "rho")
        self._save_stack(problem.u, "u")

        probes = config.probes() or default_probes(landscape, beta, gamma)
        report = verify_theorem(
            landscape,
            beta,
            gamma,
            probes,
            N=config.N,
            seed=config.seed,
            K=config.K,
            problem=problem,
            threads=config.threads,
            z=config.tolerance("z"),
        )
        report.pass_fraction_required = config.tolerance("pass_fraction")
        self._write_csv("theorem.csv", report.rows())
        self._check(
            "value over beta matches the local entropy",
            report.passed,
            report.pass_fraction,
            report.pass_fraction_required,
            f"{len(report.probes)} probes",
        )

        if config.section("control")["compare"]:
            self._compare(problem, probes)

    def _compare(self, problem: ControlProblem, probes):
        config = self.config
        beta = config.beta
        z = config.tolerance("z")
        theta = np.broadcast_to(np.atleast_1d(config.section("control")["theta"]), (problem.landscape.dim,))
        policies = {"score": problem.score_policy(), "zero": ZeroPolicy(beta), "constant": ConstantPolicy(beta, theta)}

        rows = []
        dominated = 0
        strictly_worse = 0
        for index, (x, t) in enumerate(probes):
            # Common random numbers across policies, distinct from the theorem rollouts
            seed = config.seed + len(probes) + index
            values = compare_policies(policies, x, t, config.K, config.N, seed, problem.gibbs, config.threads)
            optimal = values["score"]
            others = [values["zero"], values["constant"]]
            dominated += all(dominates(optimal, other, z) for other in others)
            strictly_worse += values["zero"].mean > optimal.mean
            for name, estimate in values.items():
                row = {f"x{i}": float(v) for i, v in enumerate(np.atleast_1d(x))}
                row.update(t=float(t), policy=name, value=estimate.mean, se=estimate.standard_error)
                rows.append(row)
        self._write_csv("policies.csv", rows)

        count = len(probes)
        logger.info(f"Score control dominates at {dominated} of {count} probes")
        self._check("score control is optimal", dominated == count, dominated / count, 1.0)
        if problem.landscape.name == "double-well":
            fraction = strictly_worse / count
            self._check(
                "zero control strictly suboptimal", fraction >= STRICT_SUBOPTIMALITY, fraction, STRICT_SUBOPTIMALITY
            )
