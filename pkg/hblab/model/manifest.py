import json
import numbers
from pathlib import Path
from typing import Dict, List, Optional

from ._hash import hash_file
from ..version import __version__


def _plain(value):
    if isinstance(value, numbers.Real) and not isinstance(value, bool):
        return float(value)
    return value


class CheckResult:
    def __init__(self, name: str, passed: bool, value=None, threshold=None, detail: str = ""):
        self.name = name
        self.passed = bool(passed)
        self.value = _plain(value)
        self.threshold = _plain(threshold)
        self.detail = detail

    def serialize(self):
        return {
            "name": self.name,
            "passed": self.passed,
            "value": self.value,
            "threshold": self.threshold,
            "detail": self.detail,
        }

    def __str__(self):
        verdict = "PASS" if self.passed else "FAIL"
        value = f" = {self.value:.6g}" if self.value is not None else ""
        threshold = f" (threshold {self.threshold:g})" if self.threshold is not None else ""
        return f"[{verdict}] {self.name}{value}{threshold}{': ' + self.detail if self.detail else ''}"


class RunManifest:
    """Echo of a run: resolved configuration, its hash, check verdicts and the SHA-1 of every artifact.
    Carries no timestamps so that reruns produce identical manifests.
    """

    def __init__(self, experiment: str, config: dict, config_hash: str):
        self.experiment = experiment
        self.config = config
        self.config_hash = config_hash
        self.checks: List[CheckResult] = []
        self.artifacts: Dict[str, str] = {}

    def add_check(self, check: CheckResult):
        self.checks.append(check)

    def add_artifact(self, path: Path, root: Path):
        self.artifacts[str(Path(path).relative_to(root))] = hash_file(path)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def serialize(self):
        return {
            "experiment": self.experiment,
            "hblab_version": __version__,
            "config_hash": self.config_hash,
            "config": self.config,
            "verdict": "PASS" if self.passed else "FAIL",
            "checks": [c.serialize() for c in self.checks],
            "artifacts": dict(sorted(self.artifacts.items())),
        }

    def write(self, directory: Path) -> Path:
        path = Path(directory) / "manifest.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.serialize(), f, indent=2, sort_keys=True)
            f.write("\n")
        return path


def load_manifest(directory: Path) -> Optional[dict]:
    path = Path(directory) / "manifest.json"
    if not path.exists():
        return None
    with open(path, encoding="utf-8") as f:
        return json.load(f)
