from functools import partial

from . import SubCommandParser
from .common import run_options, load_config, run_experiment
from ..experiments import EXPERIMENTS


def install_subcommand(sub_argparser: SubCommandParser):
    for name, cls in EXPERIMENTS.items():
        sub_argparser.add_subcmd(
            name,
            handler=partial(handle_experiment, name),
            help=cls.description,
            parents=[run_options],
        )


def handle_experiment(name, args):
    return run_experiment(load_config(args, experiment=name), print_json=args.json)
