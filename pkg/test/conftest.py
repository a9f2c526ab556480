import pytest

from hblab.model.landscape import Quadratic, DoubleWell, Rugged
from .data_manager import TestDataManager
from .hblab_shim import HblabShim


@pytest.fixture(scope="function")
def test_data_mgr(request, tmp_path):
    return TestDataManager(request, tmp_path)


@pytest.fixture(scope="function")
def hblab(request, test_data_mgr):
    """
    Fixture that helps writing run configurations and running hblab.
    Returns an HblabShim instance.

    This fixture is configured through the `hblab` marker. Example:

    @pytest.mark.hblab(loglevel="DEBUG")
    def test_something(hblab):
        pass

    The kwargs supplied to the marker are the same of the HblabShim object
    """
    hblab_marker = request.node.get_closest_marker("hblab")
    if hblab_marker is not None:
        additional_kwargs = hblab_marker.kwargs
    else:
        additional_kwargs = {}

    return HblabShim(test_data_mgr, **additional_kwargs)


@pytest.fixture(autouse=True)
def reset_thread_setting(monkeypatch):
    """Tests start with the thread count unset, as a fresh hblab process does"""
    monkeypatch.setattr("hblab.globals.threads", None)


@pytest.fixture
def quadratic():
    return Quadratic(dim=1)


@pytest.fixture
def double_well():
    return DoubleWell(dim=1)


@pytest.fixture
def rugged():
    return Rugged()


def pytest_configure(config):
    config.addinivalue_line("markers", "hblab(loglevel='INFO'): hblab fixture configuration marker")
    config.addinivalue_line("markers", "slow: Monte Carlo runs at the full acceptance sample sizes")
