from typing import Dict, Type

from .experiment import Experiment
from .smooth import SmoothExperiment
from .pde_check import PdeCheckExperiment
from .duality import DualityExperiment
from .bridge import BridgeExperiment
from .verify_theorem import VerifyTheoremExperiment
from .optimize import OptimizeExperiment
from .girsanov import GirsanovExperiment
from .langevin import LangevinExperiment
from ..exceptions import ConfigurationException
from ..util import did_you_mean

# Listing order of `hblab list`
EXPERIMENTS: Dict[str, Type[Experiment]] = {
    cls.name: cls
    for cls in (
        SmoothExperiment,
        PdeCheckExperiment,
        DualityExperiment,
        BridgeExperiment,
        VerifyTheoremExperiment,
        OptimizeExperiment,
        GirsanovExperiment,
        LangevinExperiment,
    )
}


def get_experiment(name: str) -> Type[Experiment]:
    cls = EXPERIMENTS.get(name)
    if cls is None:
        raise ConfigurationException(f"Unknown experiment {name}.{did_you_mean(name, EXPERIMENTS)}", path="$.experiment")
    return cls
