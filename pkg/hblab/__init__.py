import sys

from loguru import logger
from tqdm import tqdm

import hblab.globals
from hblab.cmds.main import main_parser
from hblab.exceptions import (
    HblException,
    UserException,
    NumericalException,
    CheckFailedException,
)

EXIT_FAILED = 1
EXIT_USER_ERROR = 2
EXIT_INTERNAL_ERROR = 100


class TqdmWrapper:
    def write(self, message):
        tqdm.write(message.strip())
        sys.stdout.flush()
        sys.stderr.flush()


def _main(argv):
    args = main_parser.parse_args(argv)

    # Remove all handlers before installing ours
    logger.remove()
    logger.add(
        TqdmWrapper(),
        level=args.loglevel,
        colorize=True,
        format="<level>[+] {level}</level> - {message}",
    )
    hblab.globals.loglevel = args.loglevel
    hblab.globals.quiet = args.quiet
    hblab.globals.threads = args.threads

    try:
        return_code = main_parser.execute(args)
        assert isinstance(return_code, int), "Subcommand handler did not return an integer"
        return return_code
    except UserException as e:
        e.log_error()
        return EXIT_USER_ERROR
    except (NumericalException, CheckFailedException) as e:
        e.log_error()
        return EXIT_FAILED
    except HblException as e:
        e.log_error()
    except Exception as e:
        logger.exception(e)

    return EXIT_INTERNAL_ERROR


def main():
    return _main(sys.argv[1:])
