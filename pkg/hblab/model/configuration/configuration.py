import copy
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from ._generate import load_json_configuration, validate_configuration_schema
from .._hash import hash, canonical_json
from ..grid import SpatialGrid
from ..landscape import EnergyLandscape, make_landscape
from ...exceptions import ConfigurationException, UserException

DEFAULTS = {
    "landscape": {"name": "quadratic", "params": {}},
    "beta": 1.0,
    "gamma": 1.0,
    "gammas": [0.0, 0.5, 1.0, 2.0],
    "grid": {},
    "mc": {"N": 100000, "K": 200, "seed": 0},
    "output": "results",
    "tolerances": {
        "linf": 5e-3,
        "w1": 0.05,
        "z": 3.0,
        "pass_fraction": 0.9,
        "residual": 5e-3,
        "relative": 0.1,
        "gradient": 1e-5,
        "oracle": 1e-6,
    },
    "optimizer": {
        "eta": 0.1,
        "iters": 200,
        "x0": 2.5,
        "gamma0": 2.0,
        "decay": 0.97,
        "inner_n": 20000,
        "minibatch": 1,
    },
    "duality": {"process": "wiener", "t": 0.5, "bins": 64},
    "girsanov": {"theta": 0.5, "T": 1.0},
    "langevin": {"T": 50.0, "dt": 0.01},
    "control": {"theta": 0.5, "compare": True},
    "save_paths": False,
}

# Keys that do not influence any numeric result
NON_SEMANTIC_KEYS = ("output", "threads")


def _merge(defaults: dict, overrides: dict) -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict) and key != "params":
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class RunConfig:
    """A validated run configuration with defaults applied"""

    def __init__(self, parsed: dict, raw: Optional[str] = None, seed: Optional[int] = None, out=None):
        validate_configuration_schema(parsed, raw)
        resolved = _merge(DEFAULTS, parsed)
        if seed is not None:
            if seed < 0:
                raise ConfigurationException(f"Seeds must be non-negative, got {seed}", path="$.mc.seed")
            resolved["mc"]["seed"] = int(seed)
        if out is not None:
            resolved["output"] = str(out)
        self.resolved = resolved
        self._landscape = None
        self._check_semantics()

    @classmethod
    def from_file(cls, path, seed: Optional[int] = None, out=None) -> "RunConfig":
        parsed, raw = load_json_configuration(path)
        logger.debug(f"Loaded configuration {path}")
        return cls(parsed, raw, seed=seed, out=out)

    @classmethod
    def from_dict(cls, parsed: dict, seed: Optional[int] = None, out=None) -> "RunConfig":
        return cls(copy.deepcopy(parsed), seed=seed, out=out)

    def _check_semantics(self):
        landscape = self.landscape
        grid = self.resolved["grid"]
        bounds = grid.get("bounds")
        npts = grid.get("npts")
        if bounds is not None:
            if len(bounds) != landscape.dim:
                raise ConfigurationException(
                    f"{len(bounds)} grid axes given for a {landscape.dim}-dimensional landscape", path="$.grid.bounds"
                )
            for i, (lo, hi) in enumerate(bounds):
                if not lo < hi:
                    raise ConfigurationException(f"Empty grid axis [{lo}, {hi}]", path=f"$.grid.bounds[{i}]")
        if isinstance(npts, list) and len(npts) != landscape.dim:
            raise ConfigurationException(
                f"{len(npts)} node counts given for a {landscape.dim}-dimensional landscape", path="$.grid.npts"
            )
        for i, probe in enumerate(self.resolved.get("probes", [])):
            if len(np.atleast_1d(probe["x"])) != landscape.dim:
                raise ConfigurationException(
                    f"Probe of dimension {len(np.atleast_1d(probe['x']))}, expected {landscape.dim}",
                    path=f"$.probes[{i}].x",
                )
        gammas = self.resolved["gammas"]
        if any(b < a for a, b in zip(gammas, gammas[1:])):
            raise ConfigurationException("gammas must be sorted in increasing order", path="$.gammas")

    @property
    def experiment(self) -> str:
        return self.resolved["experiment"]

    @property
    def landscape(self) -> EnergyLandscape:
        if self._landscape is None:
            spec = self.resolved["landscape"]
            try:
                self._landscape = make_landscape(spec["name"], spec.get("params", {}))
            except ConfigurationException:
                raise
            except UserException as e:
                raise ConfigurationException(e.message, path="$.landscape.params")
        return self._landscape

    @property
    def beta(self) -> float:
        return float(self.resolved["beta"])

    @property
    def gamma(self) -> float:
        return float(self.resolved["gamma"])

    @property
    def gammas(self) -> List[float]:
        return [float(g) for g in self.resolved["gammas"]]

    @property
    def N(self) -> int:
        return int(self.resolved["mc"]["N"])

    @property
    def K(self) -> int:
        return int(self.resolved["mc"]["K"])

    @property
    def seed(self) -> int:
        return int(self.resolved["mc"]["seed"])

    @property
    def threads(self) -> Optional[int]:
        return self.resolved.get("threads")

    @property
    def output(self) -> Path:
        return Path(self.resolved["output"])

    @property
    def steps(self) -> Optional[int]:
        return self.resolved["grid"].get("steps")

    def tolerance(self, name: str) -> float:
        return float(self.resolved["tolerances"][name])

    def section(self, name: str) -> Dict:
        return self.resolved[name]

    def grid(self, default: Optional[SpatialGrid] = None) -> Optional[SpatialGrid]:
        """The configured grid; missing bounds or node counts are taken from `default`"""
        spec = self.resolved["grid"]
        if "bounds" not in spec and "npts" not in spec:
            return default
        bounds = spec.get("bounds") or (default.bounds if default is not None else None)
        if bounds is None:
            raise ConfigurationException("Grid node counts given without bounds", path="$.grid")
        npts = spec.get("npts")
        if npts is None:
            npts = default.npts if default is not None else [801] * len(bounds)
        elif isinstance(npts, int):
            npts = [npts] * len(bounds)
        return SpatialGrid(bounds, npts)

    def probes(self) -> Optional[List[Tuple[np.ndarray, float]]]:
        probes = self.resolved.get("probes")
        if probes is None:
            return None
        return [(np.atleast_1d(np.asarray(p["x"], dtype=float)), float(p["t"])) for p in probes]

    @property
    def config_hash(self) -> str:
        """SHA-1 of the canonical JSON of the resolved configuration, ignoring keys that do not affect results"""
        semantic = {k: v for k, v in self.resolved.items() if k not in NON_SEMANTIC_KEYS}
        return hash(canonical_json(semantic))

    def to_dict(self) -> dict:
        return copy.deepcopy(self.resolved)
