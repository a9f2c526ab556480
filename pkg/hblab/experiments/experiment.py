from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from loguru import logger

from .. import cache
from ..exceptions import CheckFailedException
from ..model.configuration import RunConfig
from ..model.manifest import CheckResult, RunManifest


class Experiment:
    """A named, self-checking numerical run.

    Subclasses implement `_run`, which computes, writes artifacts through `_write_csv`/`_save_stack` and records
    verdicts through `_check`. Every file an experiment writes lives in `output_dir`.
    """

    name: str = None
    description: str = None

    def __init__(self, config: RunConfig):
        self.config = config
        self.manifest: Optional[RunManifest] = None

    @property
    def output_dir(self) -> Path:
        return self.config.output / self.name

    def run(self) -> RunManifest:
        logger.info(f"Running {self}")
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(self.name, self.config.to_dict(), self.config.config_hash)

        self._run()

        path = self.manifest.write(self.output_dir)
        for check in self.manifest.checks:
            if check.passed:
                logger.info(str(check))
            else:
                logger.warning(str(check))
        logger.info(f"Wrote {path}")

        failed = [str(c) for c in self.manifest.checks if not c.passed]
        if failed:
            raise CheckFailedException(self.name, failed)
        return self.manifest

    def _run(self):
        raise NotImplementedError("Experiment subclasses must implement _run")

    def _check(self, name: str, passed, value=None, threshold=None, detail: str = "") -> CheckResult:
        check = CheckResult(name, passed, value, threshold, detail)
        self.manifest.add_check(check)
        return check

    def _write_csv(self, filename: str, rows: Sequence[Dict], columns: Optional[List[str]] = None) -> Path:
        path = cache.write_csv(self.output_dir / filename, rows, columns)
        self.manifest.add_artifact(path, self.output_dir)
        return path

    def _save_stack(self, stack, name: str) -> Path:
        path = cache.save_stack(stack, self.output_dir, name, self.config.config_hash)
        self.manifest.add_artifact(path, self.output_dir)
        return path

    def _save_ensemble(self, ensemble, name: str) -> Optional[Path]:
        if not self.config.section("save_paths"):
            return None
        path = cache.save_ensemble(ensemble, self.output_dir, name, self.config.config_hash)
        self.manifest.add_artifact(path, self.output_dir)
        return path

    def __str__(self):
        return f"Experiment {self.name} on {self.config.landscape!r}"

    def __repr__(self):
        return self.__str__()


def histogram_rows(samples: np.ndarray, axis: np.ndarray, density: np.ndarray, bins: int = 100) -> List[Dict]:
    """Normalized 1-D histogram of `samples` next to a reference density interpolated at the bin centers"""
    samples = np.asarray(samples).ravel()
    edges = np.linspace(axis[0], axis[-1], bins + 1)
    counts, _ = np.histogram(samples, bins=edges)
    width = edges[1] - edges[0]
    centers = 0.5 * (edges[1:] + edges[:-1])
    empirical = counts / (len(samples) * width)
    reference = np.interp(centers, axis, density)
    return [
        {"x": float(c), "empirical": float(e), "reference": float(r)}
        for c, e, r in zip(centers, empirical, reference)
    ]
