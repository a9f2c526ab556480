import numpy as np

from .experiment import Experiment
from ..sde import (
    DiffusionSpec,
    simulate_forward,
    relative_entropy_forward,
    relative_entropy_backward,
    gaussian_relative_entropy,
    gaussian_sampler,
    FORWARD,
)

# Initial laws of the Gaussian half-bridge: N(theta, BRIDGE_VARIANCE) against the reference N(0, REFERENCE_VARIANCE)
BRIDGE_VARIANCE = 0.5
REFERENCE_VARIANCE = 1.0
# Relative slack for estimators that are exact up to floating point summation
ROUNDOFF = 1e-9


class GirsanovExperiment(Experiment):
    """Relative entropy of path measures through their drifts, forward and backward in time"""

    name = "girsanov"
    description = "Forward and backward Girsanov relative entropy against closed forms"

    def _run(self):
        config = self.config
        section = config.section("girsanov")
        theta, T = float(section["theta"]), float(section["T"])
        sigma = 1 / np.sqrt(config.beta)
        rows = []

        # Constant drift θ against zero drift from the same initial law: H = θ²T / (2σ²)
        spec = DiffusionSpec(dim=1, drift=lambda x, t: np.full_like(x, theta), sigma=sigma, direction=FORWARD, T=T)
        ensemble = simulate_forward(
            spec, gaussian_sampler(0.0, REFERENCE_VARIANCE), config.K, config.N, config.seed, threads=config.threads
        )
        exact = theta**2 * T / (2 * sigma**2)
        estimate = relative_entropy_forward(ensemble, spec.drift, None, 0.0, sigma)
        rows.append(self._row("constant-drift", "forward", estimate, exact))
        error = abs(estimate.value - exact)
        allowed = 3 * estimate.standard_error + ROUNDOFF * max(1.0, exact)
        self._check("constant drift closed form", error <= allowed, error, allowed)

        # Half-bridge with its initial marginal changed: both drifts vanish forward, not backward
        sigma2 = sigma**2
        spec = DiffusionSpec(dim=1, drift=None, sigma=sigma, direction=FORWARD, T=T)
        ensemble = simulate_forward(
            spec, gaussian_sampler(theta, BRIDGE_VARIANCE), config.K, config.N, config.seed + 1, threads=config.threads
        )
        self._save_ensemble(ensemble, "half-bridge-paths")

        def backward_q(x, t):
            return sigma2 * (x - theta) / (BRIDGE_VARIANCE + sigma2 * t)

        def backward_p(x, t):
            return sigma2 * x / (REFERENCE_VARIANCE + sigma2 * t)

        h0 = gaussian_relative_entropy(theta, BRIDGE_VARIANCE, 0.0, REFERENCE_VARIANCE)
        h1 = gaussian_relative_entropy(theta, BRIDGE_VARIANCE + sigma2 * T, 0.0, REFERENCE_VARIANCE + sigma2 * T)
        forward = relative_entropy_forward(ensemble, None, None, h0, sigma)
        backward = relative_entropy_backward(ensemble, backward_q, backward_p, h1, sigma)
        rows.append(self._row("half-bridge", "forward", forward, h0))
        rows.append(self._row("half-bridge", "backward", backward, h0))

        gap = abs(forward.value - backward.value)
        allowed = 3 * (forward.standard_error + backward.standard_error) + ROUNDOFF * max(1.0, h0)
        self._check("forward and backward estimators agree", gap <= allowed, gap, allowed)

        self._write_csv("girsanov.csv", rows)

    @staticmethod
    def _row(case: str, estimator: str, estimate, exact: float):
        return {
            "case": case,
            "estimator": estimator,
            "value": estimate.value,
            "se": estimate.standard_error,
            "marginal_term": estimate.marginal_term,
            "exact": exact,
        }
