"""Command-line runner with `run` and `compare` subcommands."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, TextIO

from .config import RunConfig
from .errors import ConfigError, ParseError
from .history import (
    compare_report,
    read_history,
    summary_text,
    write_history,
)
from .records import Status
from .sqp_exact import solve_exact
from .sqp_inexact import solve_inexact

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def run(config_path: str, err: Optional[TextIO] = None) -> int:
    err = sys.stderr if err is None else err
    try:
        config = RunConfig.load(config_path)
        problem, x0 = config.build_problem()
        provider = (
            config.build_provider(problem)
            if config.solver == 'inexact' else None
        )
    except ConfigError as e:
        print(f'{config_path}: {e}', file=err)
        return EXIT_CONFIG

    exact = config.solver == 'exact'
    log.info(
        'running %s solver on %s (provider %s)',
        config.solver, config.problem, config.provider,
    )
    if exact:
        state, history, status = solve_exact(
            problem, x0, config.solver_config(),
        )
    else:
        result = solve_inexact(
            provider, problem, x0, config.ledger(), config.solver_config(),
        )
        state, history, status = result.state, result.history, result.status

    parameters = config.to_dict()
    for key in ('history', 'summary', 'effective_config'):
        parameters.pop(key)
    try:
        write_history(config.history, history, parameters, exact)
        Path(config.summary).write_text(
            summary_text(status, state, history, exact)
        )
        if config.effective_config:
            Path(config.effective_config).write_text(
                json.dumps(config.to_dict(), indent=2, sort_keys=True)
                + '\n'
            )
    except OSError as e:
        print(f'cannot write {e.filename}: {e.strerror}', file=err)
        return EXIT_FAILURE
    if status is Status.CONVERGED:
        return EXIT_OK
    print(status.value, file=err)
    return EXIT_SOLVER


def compare(
    path_a: str,
    path_b: str,
    out: Optional[TextIO] = None,
    err: Optional[TextIO] = None,
) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    try:
        report = compare_report(read_history(path_a), read_history(path_b))
    except ParseError as e:
        print(e, file=err)
        return EXIT_FAILURE
    out.write(report)
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> None:
    parser = argparse.ArgumentParser(
        description='Line-search SQP on exact functions or tunable models',
    )
    parser.add_argument(
        '--log-file', type=str, default=None,
        help='Write log to file instead of stderr',
    )
    parser.add_argument(
        '--verbose', '-v', action='store_true',
        help='Enable verbose logging',
    )
    sub = parser.add_subparsers(dest='command', required=True)
    run_parser = sub.add_parser('run', help='Run one configured solve')
    run_parser.add_argument('config', help='JSON run configuration')
    compare_parser = sub.add_parser(
        'compare', help='Compare two history files',
    )
    compare_parser.add_argument('history_a')
    compare_parser.add_argument('history_b')
    args = parser.parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.INFO
    fmt = '%(asctime)s %(name)s %(levelname)s: %(message)s'
    if args.log_file:
        logging.basicConfig(filename=args.log_file, level=level, format=fmt)
    else:
        logging.basicConfig(stream=sys.stderr, level=level, format=fmt)

    if args.command == 'run':
        code = run(args.config)
    else:
        code = compare(args.history_a, args.history_b)
    sys.exit(code)
