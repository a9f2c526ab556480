from . import SubCommandParser
from .common import run_options, load_config, run_experiment
from ..exceptions import ConfigurationException


def install_subcommand(sub_argparser: SubCommandParser):
    sub_argparser.add_subcmd(
        "run",
        handler=handle_run,
        help="Run the experiment named in a configuration file",
        parents=[run_options],
    )


def handle_run(args):
    if not args.config:
        raise ConfigurationException("`hblab run` needs a configuration file, pass it with --config")
    return run_experiment(load_config(args), print_json=args.json)
