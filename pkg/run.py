import argparse
import logging
import os
import sys

from basics.base_task import setup_logging
from basics.errors import EXIT_OK, ConfigError, PowerPriorError, exit_code_for
from src.power_prior_task import TASKS
from utils.hparams import set_hparams

logger = logging.getLogger(__name__)

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'configs', 'scenarios')
COMMANDS = ('constants', 'grid', 'fit', 'sample', 'sensitivity', 'scenario')


def scenario_names():
    return sorted(os.path.splitext(f)[0] for f in os.listdir(SCENARIO_DIR) if f.endswith('.yaml'))


def build_parser():
    parser = argparse.ArgumentParser(description='normalising constants of power priors')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, default='', help='location of the config file')
    common.add_argument('--seed', type=int, default=None, help='overrides the config seed')
    common.add_argument('--out', type=str, default='', help='output directory')
    common.add_argument('--threads', type=int, default=None, help='worker processes')
    common.add_argument('--hparams', type=str, default='', help='overrides, e.g. "grid.J=10,chain.n_iter=4000"')
    common.add_argument('--debug', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='command', required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == 'scenario':
            p.add_argument('name', type=str, help='preset name, one of: ' + ', '.join(scenario_names()))
    return parser


def resolve_config(args):
    if args.command == 'scenario' and not args.config:
        path = os.path.join(SCENARIO_DIR, f'{args.name}.yaml')
        if not os.path.exists(path):
            raise ConfigError(f'Unknown scenario \'{args.name}\'. Available: {scenario_names()}')
        return path
    if not args.config:
        raise ConfigError(f'{args.command} needs --config.')
    return args.config


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging(args.debug)
    overrides = [args.hparams] if args.hparams else []
    if args.seed is not None:
        overrides.append(f'seed={args.seed}')
    if args.threads is not None:
        overrides.append(f'threads={args.threads}')
    try:
        hparams = set_hparams(resolve_config(args), ','.join(overrides), out_dir=args.out,
                              print_hparams=args.debug, debug=args.debug)
        TASKS[args.command].start(hparams)
    except PowerPriorError as e:
        logger.error(f'| {type(e).__name__}: {e}')
        return exit_code_for(e)
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
