"""``jmgt-sim`` command-line entry point.

Exit status: ``0`` when every check passes, ``1`` when any check fails or
the run ends unexpectedly, ``2`` on a configuration error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from ..core.exceptions import ConfigurationError, JmgtError, ParseError, ValidationError
from .config import load_config
from .scenarios import check_kernel, default_manager

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jmgt-sim",
        description="Spectral simulator and verification scenarios for the damped JMGT equation.",
    )
    parser.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run the scenario named in a config file")
    run.add_argument("config", type=Path)
    run.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    run.add_argument("--stride", type=int, help="recording stride in steps")
    run.add_argument("--seed", type=int, help="random seed for the positivity trials")

    check = commands.add_parser("check-kernel", help="admissibility checks for the config kernel")
    check.add_argument("config", type=Path)
    check.add_argument("--out", type=Path)

    commands.add_parser("list", help="list available scenarios")
    return parser


def _config_error(error: ConfigurationError) -> int:
    if isinstance(error, ParseError) and error.line is not None:
        print(f"config error at line {error.line}, column {error.column}: {error}", file=sys.stderr)
    elif isinstance(error, ValidationError) and error.key:
        print(f"config error in '{error.key}': {error}", file=sys.stderr)
    else:
        print(f"config error: {error}", file=sys.stderr)
    return EXIT_CONFIG


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    manager = default_manager(log_level=args.log_level)

    if args.command == "list":
        for name in manager.names():
            scenario = manager.get(name)
            print(f"{name:20s} {scenario.description}")
        return EXIT_PASS

    try:
        config = load_config(args.config)
        if args.command == "run":
            config = config.with_output(args.out, args.stride, args.seed)
            manager.validate(config)
        elif args.out is not None:
            config = config.with_output(args.out)
    except ConfigurationError as e:
        return _config_error(e)
    except OSError as e:
        print(f"cannot read config {args.config}: {e}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "check-kernel":
            result = check_kernel(config)
            result.write_verdicts(config.out_dir)
        else:
            result = manager.run(config)
    except ConfigurationError as e:
        return _config_error(e)
    except JmgtError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FAIL

    verdict = "PASS" if result.passed else "FAIL"
    print(f"{result.scenario}: {verdict} ({config.out_dir / 'checks.json'})")
    return result.exit_status


if __name__ == "__main__":
    sys.exit(main())
