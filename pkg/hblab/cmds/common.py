import argparse
import json
from typing import Optional

from loguru import logger

from ..exceptions import CheckFailedException
from ..experiments import get_experiment
from ..model.configuration import RunConfig
from ..model.configuration._generate import load_json_configuration

run_options = argparse.ArgumentParser(add_help=False)
run_group = run_options.add_argument_group(title="Run options")
run_group.add_argument("--config", "-c", metavar="PATH", help="JSON run configuration")
run_group.add_argument("--seed", metavar="N", type=int, help="Override the Monte Carlo seed of the configuration")
run_group.add_argument("--out", metavar="DIR", help="Override the results directory of the configuration")
run_group.add_argument("--json", action="store_true", help="Print the run manifest as JSON")


def load_config(args, experiment: Optional[str] = None) -> RunConfig:
    """Builds the run configuration from --config (defaults only if omitted), --seed and --out.
    `experiment`, when given, replaces the experiment named in the file.
    """
    if args.config:
        parsed, raw = load_json_configuration(args.config)
    else:
        parsed, raw = {}, None

    if experiment is not None:
        configured = parsed.get("experiment")
        if configured is not None and configured != experiment:
            logger.warning(f"Running {experiment} instead of the configured experiment {configured}")
        parsed["experiment"] = experiment

    return RunConfig(parsed, raw, seed=args.seed, out=args.out)


def run_experiment(config: RunConfig, print_json: bool = False) -> int:
    experiment = get_experiment(config.experiment)(config)
    try:
        manifest = experiment.run()
    except CheckFailedException:
        if print_json:
            _print_manifest(experiment.manifest)
        raise
    if print_json:
        _print_manifest(manifest)
    logger.info(f"Experiment {config.experiment} passed {len(manifest.checks)} check(s)")
    return 0


def _print_manifest(manifest):
    print(json.dumps(manifest.serialize(), indent=2, sort_keys=True))
