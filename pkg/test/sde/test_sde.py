import numpy as np
import pytest

from hblab.exceptions import PathExplosionException, PreconditionException, UserException
from hblab.executor import CHUNK_SIZE
from hblab.model.grid import DensityStack, SpatialGrid
from hblab.pde import solve_heat
from hblab.sde import (
    FORWARD,
    REVERSE,
    DiffusionSpec,
    check_duality,
    estimate_drifts,
    gaussian_relative_entropy,
    gaussian_sampler,
    ks_marginal_test,
    langevin_spec,
    point_sampler,
    relative_entropy_backward,
    relative_entropy_forward,
    sample_backward_wiener,
    simulate_forward,
    simulate_reverse,
)


def wiener(T=1.0, sigma=1.0):
    return DiffusionSpec(dim=1, drift=None, sigma=sigma, direction=FORWARD, T=T)


def langevin_reverse():
    return DiffusionSpec(dim=1, drift=lambda x, t: -x, sigma=1.0, direction=REVERSE, T=1.0)


def heat_flow_of_normal(variance, beta, T, steps):
    grid = SpatialGrid.centered(10.0, 801)
    x = grid.points()[..., 0]
    rho0 = np.exp(-(x**2) / (2 * variance)) / np.sqrt(2 * np.pi * variance)
    return solve_heat(rho0, beta, T, steps, grid)


def test_ensembles_do_not_depend_on_the_thread_count():
    """Checks that the same seed gives bitwise identical paths on one and on four threads"""
    spec = wiener()
    init = gaussian_sampler(0.0, 1.0)
    single = simulate_forward(spec, init, 20, 10000, seed=7, threads=1)
    pooled = simulate_forward(spec, init, 20, 10000, seed=7, threads=4)
    assert np.array_equal(single.paths, pooled.paths)
    assert np.array_equal(single.energy, pooled.energy)


def test_thread_cap_from_the_environment(monkeypatch):
    """Checks that HBL_THREADS does not change the simulated paths"""
    spec = wiener()
    init = gaussian_sampler(0.0, 1.0)
    reference = simulate_forward(spec, init, 10, 9000, seed=3, threads=3)
    monkeypatch.setenv("HBL_THREADS", "1")
    capped = simulate_forward(spec, init, 10, 9000, seed=3, threads=3)
    assert np.array_equal(reference.paths, capped.paths)


def test_seeds_change_the_paths():
    """Checks that distinct seeds give distinct ensembles"""
    spec = wiener()
    first = simulate_forward(spec, point_sampler(0.0), 5, 100, seed=1)
    second = simulate_forward(spec, point_sampler(0.0), 5, 100, seed=2)
    assert not np.array_equal(first.paths, second.paths)


def test_wiener_variance():
    """Checks Var X(T) = σ²T for the zero-drift process started at a point"""
    ens = simulate_forward(wiener(T=2.0, sigma=0.5), point_sampler(0.0), 40, 40000, seed=0, record="ends")
    assert ens.indices == [0, 40]
    final = ens.at(2.0)[:, 0]
    assert np.var(final) == pytest.approx(0.5, abs=0.03)
    assert np.array_equal(ens.at_step(0), np.zeros((40000, 1)))


def test_unrecorded_step():
    """Checks that asking for a step that was not recorded is an error"""
    ens = simulate_forward(wiener(), point_sampler(0.0), 10, 10, seed=0, record="ends")
    with pytest.raises(UserException):
        ens.at_step(5)
    with pytest.raises(UserException):
        ens.at(0.33)


def test_path_explosion():
    """Checks that a run whose paths leave the bound is aborted"""
    spec = DiffusionSpec(dim=1, drift=lambda x, t: 50 * x, sigma=1.0, direction=FORWARD, T=1.0, bound=10.0)
    with pytest.raises(PathExplosionException) as e:
        simulate_forward(spec, point_sampler(1.0), 100, 100, seed=0)
    assert e.value.exploded > 0
    assert e.value.total == 100


def test_path_explosion_counts_every_chunk():
    """Checks that the exploded count covers the paths of all chunks, not only the first one to fail"""
    n = 2 * CHUNK_SIZE + 100
    spec = DiffusionSpec(dim=1, drift=lambda x, t: 50 * x, sigma=0.1, direction=FORWARD, T=1.0, bound=10.0)
    with pytest.raises(PathExplosionException) as e:
        simulate_forward(spec, point_sampler(9.9), 100, n, seed=0, threads=3)
    assert e.value.exploded == n
    assert e.value.total == n
    assert e.value.step == 1
    assert f"{n} of {n} paths" in e.value.message


def test_direction_is_checked():
    """Checks that forward and reverse simulation refuse specs of the other direction"""
    with pytest.raises(UserException):
        simulate_forward(DiffusionSpec(1, None, 1.0, REVERSE), point_sampler(0.0), 5, 5, seed=0)
    with pytest.raises(UserException):
        simulate_reverse(wiener(), point_sampler(0.0), 5, 5, seed=0)
    with pytest.raises(UserException):
        DiffusionSpec(1, None, 0.0)


def test_pinned_backward_wiener():
    """Checks that the backward Wiener process is pinned at T and has variance T - t"""
    times = np.linspace(0.0, 1.0, 11)
    w = sample_backward_wiener(times, 50000, np.random.default_rng(0))
    assert np.array_equal(w[:, -1], np.zeros((50000, 1)))
    assert np.var(w[:, 0, 0]) == pytest.approx(1.0, abs=0.03)
    assert np.var(w[:, 5, 0]) == pytest.approx(0.5, abs=0.02)


def test_pinned_reverse_simulation():
    """Checks the pinned construction X(t) = X(T) + σW̄(t)"""
    spec = DiffusionSpec(dim=1, drift=None, sigma=2.0, direction=REVERSE, T=1.0)
    ens = simulate_reverse(spec, point_sampler(3.0), 10, 20000, seed=5, pinned=True)
    assert np.array_equal(ens.at_step(10), np.full((20000, 1), 3.0))
    assert np.mean(ens.at_step(0)) == pytest.approx(3.0, abs=0.05)
    assert np.var(ens.at_step(0)) == pytest.approx(4.0, abs=0.15)
    with pytest.raises(UserException):
        simulate_reverse(langevin_reverse(), point_sampler(0.0), 10, 10, seed=0, pinned=True)


def test_reverse_simulation_runs_backward():
    """Checks that a reverse run starts from the final sampler and applies x_{k-1} = x_k - b Δt + noise"""
    spec = DiffusionSpec(dim=1, drift=lambda x, t: np.ones_like(x), sigma=1e-12, direction=REVERSE, T=1.0)
    ens = simulate_reverse(spec, point_sampler(0.0), 10, 3, seed=0)
    assert np.allclose(ens.at(1.0), 0.0)
    assert np.allclose(ens.at(0.0), -1.0, atol=1e-9)
    assert ens.finite_energy() == pytest.approx(1.0)


def test_wiener_duality():
    """Checks that the forward and backward drift estimates of the Wiener process differ by σ²∇log ρ"""
    K = 20
    ens = simulate_forward(wiener(), gaussian_sampler(0.0, 1.0), K, 100000, seed=11)
    rho = heat_flow_of_normal(1.0, 1.0, 1.0, K)
    report = check_duality(ens, rho, 0.5, bins=64)
    assert report.time == pytest.approx(0.5)
    assert report.ks_pvalue > 0.01
    assert report.drifts.n_bins >= 40
    assert report.pass_fraction >= 0.9
    assert report.weighted_l2 <= 0.5
    assert np.all(np.abs(report.drifts.backward - report.drifts.locations / 1.5) <= 4 * report.drifts.backward_se)


def stationary_ou(steps):
    """dX = -X dt + √2 dW started from its invariant law N(0, 1), with the matching constant density stack"""
    spec = DiffusionSpec(dim=1, drift=lambda x, t: -x, sigma=np.sqrt(2.0), direction=FORWARD, T=1.0)
    times = np.linspace(0.0, 1.0, steps + 1)
    rho = DensityStack.from_function(
        SpatialGrid.centered(10.0, 801), times, lambda x, t: np.exp(-x[..., 0] ** 2 / 2) / np.sqrt(2 * np.pi), beta=0.5
    )
    return spec, gaussian_sampler(0.0, 1.0), rho


def test_stationary_ou_duality():
    """Checks b₊ - b₋ = σ²∇log ρ = -σ²x on a stationary Ornstein-Uhlenbeck ensemble"""
    K = 20
    spec, init, rho = stationary_ou(K)
    ens = simulate_forward(spec, init, K, 100000, seed=12)
    report = check_duality(ens, rho, 0.5)
    assert report.pass_fraction >= 0.9
    assert np.allclose(report.expected, -2.0 * report.drifts.locations, atol=1e-2)

    drifts = report.drifts
    slope = np.polyfit(drifts.locations, drifts.difference, 1, w=1 / drifts.difference_se)[0]
    assert slope == pytest.approx(-2.0, abs=0.15)


def test_stationary_ou_drift_estimates():
    """Checks that the forward drift estimate of the stationary Ornstein-Uhlenbeck process is -x and the backward one +x"""
    K = 20
    spec, init, _ = stationary_ou(K)
    ens = simulate_forward(spec, init, K, 100000, seed=13)
    drifts = estimate_drifts(ens, 0.5)
    assert drifts.n_bins >= 40
    assert np.all(np.abs(drifts.forward + drifts.locations) <= 4 * drifts.forward_se)
    assert np.all(np.abs(drifts.backward - drifts.locations) <= 4 * drifts.backward_se + 0.05 * np.abs(drifts.locations))


def test_stationary_ou_marginal():
    """Checks that the stationary Ornstein-Uhlenbeck marginal stays N(0, 1)"""
    K = 20
    spec, init, rho = stationary_ou(K)
    ens = simulate_forward(spec, init, K, 100000, seed=14, record="ends")
    final = ens.at(1.0)[:, 0]
    assert abs(np.mean(final)) <= 3 * np.sqrt(1 / 100000)
    assert np.var(final) == pytest.approx(1.0, abs=3 * np.sqrt(2 / 100000) + 0.03)


def test_euler_maruyama_weak_order():
    """Checks that the error of E[X_T²] for an Ornstein-Uhlenbeck process started at 0 shrinks linearly with Δt"""
    T = 1.0
    spec = DiffusionSpec(dim=1, drift=lambda x, t: -x, sigma=np.sqrt(2.0), direction=FORWARD, T=T)
    exact = 1 - np.exp(-2 * T)
    steps = [5, 10, 20]
    errors = []
    for K in steps:
        ens = simulate_forward(spec, point_sampler(0.0), K, 400000, seed=K, record="ends")
        errors.append(abs(np.mean(ens.at(T) ** 2) - exact))
    slope = np.polyfit(np.log(T / np.array(steps)), np.log(errors), 1)[0]
    assert slope >= 0.7


def test_duality_precondition():
    """Checks that the duality check refuses an ensemble whose marginal does not follow the density stack"""
    K = 20
    ens = simulate_forward(wiener(), gaussian_sampler(0.0, 1.0), K, 20000, seed=11)
    rho = heat_flow_of_normal(4.0, 1.0, 1.0, K)
    with pytest.raises(PreconditionException):
        check_duality(ens, rho, 0.5)


def test_ks_marginal_test():
    """Checks the KS test against the matching and a mismatched density"""
    rho = heat_flow_of_normal(1.0, 1.0, 1.0, 10)
    samples = np.random.default_rng(2).normal(0.0, np.sqrt(2.0), 5000)
    assert ks_marginal_test(samples, rho, 1.0) > 1e-3
    assert ks_marginal_test(samples, rho, 0.0) < 1e-6


def test_drift_estimates_of_a_constant_drift():
    """Checks that the forward drift estimate recovers a constant drift"""
    spec = DiffusionSpec(dim=1, drift=lambda x, t: np.full_like(x, 2.0), sigma=0.5, direction=FORWARD, T=1.0)
    ens = simulate_forward(spec, gaussian_sampler(0.0, 1.0), 10, 50000, seed=4)
    drifts = estimate_drifts(ens, 0.5, bins=16)
    assert drifts.n_bins > 0
    assert np.all(np.abs(drifts.forward - 2.0) <= 4 * drifts.forward_se)


def test_drift_estimates_need_interior_slices():
    """Checks that drift estimation refuses the end slices and two-dimensional ensembles"""
    ens = simulate_forward(wiener(), point_sampler(0.0), 10, 100, seed=0)
    with pytest.raises(UserException):
        estimate_drifts(ens, 1.0)
    planar = DiffusionSpec(dim=2, drift=None, sigma=1.0)
    with pytest.raises(UserException):
        estimate_drifts(simulate_forward(planar, point_sampler([0.0, 0.0]), 10, 100, seed=0), 0.5)


def test_relative_entropy_of_a_constant_drift():
    """Checks H(Q, P) = θ²T/(2σ²) for a constant drift θ against the zero drift"""
    theta, sigma, T = 0.5, 0.8, 2.0
    spec = DiffusionSpec(dim=1, drift=lambda x, t: np.full_like(x, theta), sigma=sigma, direction=FORWARD, T=T)
    ens = simulate_forward(spec, point_sampler(0.0), 50, 2000, seed=0)
    estimate = relative_entropy_forward(ens, spec.drift, None, 0.0)
    assert estimate.value == pytest.approx(theta**2 * T / (2 * sigma**2), rel=1e-12)
    assert estimate.standard_error == pytest.approx(0.0, abs=1e-12)


def test_relative_entropy_of_identical_laws():
    """Checks that a law has zero relative entropy to itself"""
    ens = simulate_forward(wiener(), point_sampler(0.0), 10, 100, seed=0)
    assert relative_entropy_backward(ens, None, None, 0.0).value == 0.0


def test_relative_entropy_needs_full_paths():
    """Checks that relative entropy estimation refuses ensembles recorded at the ends only"""
    ens = simulate_forward(wiener(), point_sampler(0.0), 10, 100, seed=0, record="ends")
    with pytest.raises(UserException):
        relative_entropy_forward(ens, None, None, 0.0)
    full = simulate_forward(wiener(), point_sampler(0.0), 10, 100, seed=0)
    with pytest.raises(UserException):
        relative_entropy_forward(full, None, None, 0.0, sigma_p=2.0)


def test_forward_and_backward_relative_entropy_agree():
    """Checks that both Girsanov estimators give H(Q, P) for a half-bridge whose initial law is N(θ, 1/2)
    against the Wiener measure started at N(0, 1)
    """
    theta, variance = 0.5, 0.5
    ens = simulate_forward(wiener(), gaussian_sampler(theta, variance), 200, 20000, seed=21)

    def backward_q(x, t):
        return (x - theta) / (variance + t)

    def backward_p(x, t):
        return x / (1 + t)

    h0 = gaussian_relative_entropy(theta, variance, 0.0, 1.0)
    h1 = gaussian_relative_entropy(theta, variance + 1.0, 0.0, 2.0)
    forward = relative_entropy_forward(ens, None, None, h0)
    backward = relative_entropy_backward(ens, backward_q, backward_p, h1)
    assert forward.value == h0
    assert forward.standard_error == 0.0
    assert backward.marginal_term == h1
    assert abs(forward.value - backward.value) <= 3 * (forward.standard_error + backward.standard_error)
    assert backward.value >= -3 * backward.standard_error


@pytest.mark.parametrize(
    "args,expected",
    [
        ((0.0, 1.0, 0.0, 1.0), 0.0),
        ((1.0, 1.0, 0.0, 1.0), 0.5),
        ((0.0, 1.0, 0.0, 2.0), 0.5 * (0.5 - 1 + np.log(2.0))),
        (([1.0, 0.0], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0]), 0.5),
    ],
)
def test_gaussian_relative_entropy(args, expected):
    """Checks the Gaussian relative entropy closed form"""
    assert gaussian_relative_entropy(*args) == pytest.approx(expected, abs=1e-15)


def test_langevin_spec(double_well):
    """Checks the Langevin diffusion of a landscape"""
    spec = langevin_spec(double_well, 4.0, 10.0)
    assert spec.sigma == pytest.approx(0.5)
    assert spec.drift_at(np.array([[2.0]]), 0.0)[0, 0] == pytest.approx(-6.0)
    assert np.isfinite(spec.bound)
