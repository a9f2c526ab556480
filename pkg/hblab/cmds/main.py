from . import SubCommandParser
from . import experiments
from . import list_experiments
from . import run
from . import version

main_parser = SubCommandParser(prog="hblab", description="Local entropy, reverse-time control and half-bridge lab")
logging_group = main_parser.add_argument_group(title="Logging options")
logging_group.add_argument(
    "--quiet",
    "-q",
    action="store_true",
    help="Do not show progress bars",
)
logging_group.add_argument(
    "--loglevel",
    "-v",
    default="INFO",
    choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
)

execution_group = main_parser.add_argument_group(title="Execution options")
execution_group.add_argument(
    "--threads",
    "-j",
    type=int,
    metavar="N",
    help="Worker threads for Monte Carlo chunks (capped by HBL_THREADS). Results do not depend on it",
)

subcommands = [
    run,
    list_experiments,
    experiments,
    version,
]

for cmd in subcommands:
    cmd.install_subcommand(main_parser)
