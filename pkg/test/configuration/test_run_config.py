import numpy as np
import pytest

from hblab.exceptions import ConfigurationException
from hblab.model.configuration import DEFAULTS, RunConfig
from hblab.model.grid import SpatialGrid
from hblab.model.landscape import DoubleWell, Quadratic

from ..hblab_shim import HblabShim


def test_defaults():
    """Checks that a configuration naming only the experiment gets every default"""
    config = RunConfig.from_dict({"experiment": "smooth"})
    assert isinstance(config.landscape, Quadratic)
    assert config.beta == DEFAULTS["beta"]
    assert config.gammas == [0.0, 0.5, 1.0, 2.0]
    assert (config.N, config.K, config.seed) == (100000, 200, 0)
    assert config.tolerance("z") == 3.0
    assert config.section("optimizer")["decay"] == 0.97
    assert config.probes() is None
    assert config.grid() is None


def test_nested_overrides_keep_sibling_defaults():
    """Checks that overriding one key of a section keeps the defaults of the others"""
    config = RunConfig.from_dict({"experiment": "smooth", "mc": {"N": 5000}, "tolerances": {"z": 4}})
    assert config.N == 5000
    assert config.K == 200
    assert config.tolerance("z") == 4.0
    assert config.tolerance("w1") == 0.05


def test_landscape_params_are_replaced():
    """Checks that landscape parameters are taken as given rather than merged"""
    config = RunConfig.from_dict({"experiment": "smooth", "landscape": {"name": "double-well", "params": {"dim": 2}}})
    assert isinstance(config.landscape, DoubleWell)
    assert config.landscape.dim == 2


def test_unknown_key():
    """Checks that keys outside the schema are refused"""
    with pytest.raises(ConfigurationException) as e:
        RunConfig.from_dict({"experiment": "smooth", "temperature": 1.0})
    assert e.value.path == "$"


def test_experiment_is_required():
    with pytest.raises(ConfigurationException):
        RunConfig.from_dict({"beta": 1.0})


def test_negative_beta_reports_its_line(test_data_mgr):
    """Checks that schema errors point at the offending key and its line in the file"""
    with pytest.raises(ConfigurationException) as e:
        RunConfig.from_file(test_data_mgr.copy("negative_beta.json"))
    assert e.value.path == "$.beta"
    assert e.value.line == 4


def test_malformed_json_reports_its_line(test_data_mgr):
    """Checks that JSON syntax errors carry a line number"""
    with pytest.raises(ConfigurationException) as e:
        RunConfig.from_file(test_data_mgr.copy("truncated.json"))
    assert e.value.line is not None
    assert e.value.line >= 4


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationException):
        RunConfig.from_file(tmp_path / "missing.json")


def test_negative_beta_exit_code(hblab: HblabShim, test_data_mgr):
    """Checks that an invalid configuration makes hblab exit with the user error code"""
    hblab("run", "--config", test_data_mgr.copy("negative_beta.json"), "--out", hblab.results_dir, returncode=2)


def test_config_hash():
    """Checks that the configuration hash ignores the output directory and thread count but not the seed"""
    base = {"experiment": "smooth", "beta": 2.0}
    reference = RunConfig.from_dict(base).config_hash
    assert len(reference) == 40
    assert RunConfig.from_dict(base, out="elsewhere").config_hash == reference
    assert RunConfig.from_dict({**base, "threads": 4}).config_hash == reference
    assert RunConfig.from_dict(base, seed=1).config_hash != reference
    assert RunConfig.from_dict({**base, "beta": 2.5}).config_hash != reference


def test_overrides():
    """Checks the --seed and --out overrides"""
    config = RunConfig.from_dict({"experiment": "smooth", "mc": {"seed": 3}}, seed=11, out="runs")
    assert config.seed == 11
    assert str(config.output) == "runs"
    with pytest.raises(ConfigurationException) as e:
        RunConfig.from_dict({"experiment": "smooth"}, seed=-1)
    assert e.value.path == "$.mc.seed"


def test_unknown_landscape():
    """Checks that unknown landscapes are refused with a suggestion"""
    with pytest.raises(ConfigurationException) as e:
        RunConfig.from_dict({"experiment": "smooth", "landscape": {"name": "doublewell"}})
    assert e.value.path == "$.landscape.name"
    assert "double-well" in e.value.message


def test_invalid_landscape_parameters():
    with pytest.raises(ConfigurationException) as e:
        RunConfig.from_dict({"experiment": "smooth", "landscape": {"name": "quadratic", "params": {"curvature": -1}}})
    assert e.value.path == "$.landscape.params"


def test_grid():
    """Checks grid construction and the missing-field fallback to the default grid"""
    config = RunConfig.from_dict({"experiment": "smooth", "grid": {"bounds": [[-4, 4]], "npts": 81}})
    assert config.grid() == SpatialGrid([(-4.0, 4.0)], [81])
    default = SpatialGrid.centered(6.0, 121)
    partial = RunConfig.from_dict({"experiment": "smooth", "grid": {"npts": 41}})
    assert partial.grid(default) == SpatialGrid([(-6.0, 6.0)], [41])
    with pytest.raises(ConfigurationException):
        partial.grid()


@pytest.mark.parametrize(
    "overrides,path",
    [
        ({"grid": {"bounds": [[1, -1]]}}, "$.grid.bounds[0]"),
        ({"grid": {"bounds": [[-1, 1], [-1, 1]]}}, "$.grid.bounds"),
        ({"gammas": [1.0, 0.5]}, "$.gammas"),
        ({"probes": [{"x": [0.0, 1.0], "t": 0.5}]}, "$.probes[0].x"),
    ],
)
def test_semantic_errors(overrides, path):
    """Checks that errors the schema cannot express are reported with their path"""
    with pytest.raises(ConfigurationException) as e:
        RunConfig.from_dict({"experiment": "smooth", **overrides})
    assert e.value.path == path


def test_probes():
    config = RunConfig.from_dict({"experiment": "verify-theorem", "probes": [{"x": 0.5, "t": 1.0}]})
    [(x, t)] = config.probes()
    assert np.array_equal(x, [0.5])
    assert t == 1.0
