import json

from . import SubCommandParser
from ..experiments import EXPERIMENTS


def install_subcommand(sub_argparser: SubCommandParser):
    cmd_parser = sub_argparser.add_subcmd("list", handler=handle_list, help="List the available experiments")
    cmd_parser.add_argument("--json", action="store_true", help="Print the list as JSON")


def handle_list(args):
    if args.json:
        entries = [{"name": name, "description": cls.description} for name, cls in EXPERIMENTS.items()]
        print(json.dumps(entries, indent=2))
        return 0

    width = max(len(name) for name in EXPERIMENTS)
    for name, cls in EXPERIMENTS.items():
        print(f"{name:<{width}}  {cls.description}")
    return 0
