import json

import numpy as np
import pytest

from hblab import cache
from hblab.exceptions import UserException
from hblab.model._hash import hash_file
from hblab.model.grid import DensityStack, ScalarStack, SpatialGrid
from hblab.model.manifest import CheckResult, RunManifest, load_manifest
from hblab.sde import FORWARD, DiffusionSpec, point_sampler, simulate_forward

CONFIG_HASH = "0123456789abcdef0123456789abcdef01234567"


@pytest.fixture
def density_stack():
    grid = SpatialGrid.centered(3.0, 31)
    times = np.linspace(0.0, 1.0, 5)
    return DensityStack.from_function(
        grid, times, lambda x, t: np.exp(-x[..., 0] ** 2 / (2 * (1 + t))) / np.sqrt(2 * np.pi * (1 + t)), beta=2.0
    )


def test_cache_path():
    """Checks that cache files are named after the artifact and the configuration hash"""
    assert cache.cache_path("out", "rho", CONFIG_HASH).name == "rho-0123456789ab.hbl"


def test_density_stack_survives_the_cache(tmp_path, density_stack):
    """Checks that a saved density stack loads back with its grid, times, values and temperature"""
    path = cache.save_stack(density_stack, tmp_path, "rho", CONFIG_HASH)
    loaded = cache.load_stack(path)
    assert isinstance(loaded, DensityStack)
    assert loaded.grid == density_stack.grid
    assert loaded.beta == 2.0
    assert np.array_equal(loaded.times, density_stack.times)
    assert np.array_equal(loaded.values, density_stack.values)


def test_scalar_stack_kind(tmp_path, density_stack):
    """Checks that the record kind selects the stack type on load"""
    scalar = ScalarStack(density_stack.grid, density_stack.times, -np.log(density_stack.values))
    loaded = cache.load_stack(cache.save_stack(scalar, tmp_path, "u", CONFIG_HASH))
    assert type(loaded) is ScalarStack
    header, _ = cache.read_binary(tmp_path / "u-0123456789ab.hbl")
    assert header["kind"] == "scalar"
    assert header["shape"] == [5, 31]


def test_cache_files_are_deterministic(tmp_path, density_stack):
    """Checks that saving the same stack twice gives the same bytes"""
    for name in ("a", "b"):
        (tmp_path / name).mkdir()
    first = cache.save_stack(density_stack, tmp_path / "a", "rho", CONFIG_HASH)
    second = cache.save_stack(density_stack, tmp_path / "b", "rho", CONFIG_HASH)
    assert first.read_bytes() == second.read_bytes()


def test_bad_magic(tmp_path):
    """Checks that files without the cache magic are refused"""
    path = tmp_path / "bogus.hbl"
    path.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(UserException):
        cache.read_binary(path)


def test_ensemble_is_not_a_stack(tmp_path):
    """Checks that a saved path ensemble loads back as an ensemble and not as a stack"""
    spec = DiffusionSpec(dim=1, drift=None, sigma=1.0, direction=FORWARD, T=1.0)
    ensemble = simulate_forward(spec, point_sampler(0.0), 4, 10, seed=3)
    path = cache.save_ensemble(ensemble, tmp_path, "paths", CONFIG_HASH)
    loaded = cache.load_ensemble(path)
    assert np.array_equal(loaded.paths, ensemble.paths)
    assert loaded.seed == 3
    assert loaded.direction == FORWARD
    with pytest.raises(UserException):
        cache.load_stack(path)


def test_csv_formatting(tmp_path):
    """Checks that CSV floats use the shortest round-trip form and booleans are written as 0/1"""
    rows = [{"x": 0.1, "passed": True, "n": 3}, {"x": 1 / 3, "passed": False, "n": np.int64(4)}]
    path = cache.write_csv(tmp_path / "table.csv", rows, ["n", "x", "passed"])
    assert path.read_text(encoding="utf-8") == "n,x,passed\n3,0.1,1\n4,0.3333333333333333,0\n"
    assert cache.read_csv(path)[1] == {"n": "4", "x": "0.3333333333333333", "passed": "0"}


def test_stack_rows(density_stack):
    """Checks the long format of a stack"""
    rows = list(cache.stack_rows(density_stack, every=2))
    assert len(rows) == 3 * 31
    assert list(rows[0]) == ["t", "x0", "value"]
    assert rows[0]["x0"] == -3.0
    assert rows[-1]["t"] == 1.0


def test_manifest(tmp_path):
    """Checks the manifest verdict, its artifact hashes and that it carries no run-dependent fields"""
    artifact = tmp_path / "table.csv"
    artifact.write_text("a\n1\n", encoding="utf-8")
    manifest = RunManifest("smooth", {"experiment": "smooth"}, CONFIG_HASH)
    manifest.add_check(CheckResult("oracle", True, 1e-9, 1e-6))
    manifest.add_artifact(artifact, tmp_path)
    assert manifest.passed

    serialized = manifest.serialize()
    assert set(serialized) == {
        "experiment",
        "hblab_version",
        "config_hash",
        "config",
        "verdict",
        "checks",
        "artifacts",
    }
    assert serialized["verdict"] == "PASS"
    assert serialized["artifacts"] == {"table.csv": hash_file(artifact)}

    manifest.add_check(CheckResult("mass", False, 0.1, 1e-3, "mass drift"))
    assert not manifest.passed
    manifest.write(tmp_path)
    loaded = load_manifest(tmp_path)
    assert loaded["verdict"] == "FAIL"
    assert loaded["checks"][1] == {
        "name": "mass",
        "passed": False,
        "value": 0.1,
        "threshold": 1e-3,
        "detail": "mass drift",
    }
    assert json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8")) == loaded


def test_missing_manifest(tmp_path):
    assert load_manifest(tmp_path) is None


def test_check_result_str():
    """Checks the one-line rendering of a check"""
    assert str(CheckResult("oracle", True, 1e-9, 1e-6)) == "[PASS] oracle = 1e-09 (threshold 1e-06)"
    assert str(CheckResult("ks", False, detail="p too small")) == "[FAIL] ks: p too small"
