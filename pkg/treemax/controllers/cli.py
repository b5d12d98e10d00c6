"""
Command line: gen-mdp, sweep, gradcheck, train and analyze.

Every command takes --config FILE to start from a saved configuration;
flags given on the command line override it. --save-config FILE writes the
effective configuration back out.
"""
import argparse
from dataclasses import asdict
import logging
import sys
from typing import List, Optional

from treemax.controllers.commands import COMMANDS, EXIT_USAGE, exit_code_for
from treemax.core.errors import TreeMaxError
from treemax.managers.config_manager import COMMAND_CONFIGS, ConfigManager
from treemax.trainer.environments import EnvironmentRegistry
from treemax.utils.regimes import RegimeRegistry

logger = logging.getLogger(__name__)

SUPPRESS = argparse.SUPPRESS


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", dest="config_file", default=None,
                        help="read the configuration from a JSON file")
    parser.add_argument("--save-config", dest="save_config", default=None,
                        help="write the effective configuration to a JSON file")
    parser.add_argument("--seed", type=int, default=SUPPRESS,
                        help="random seed (required unless the config file sets it)")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for INFO, -vv for DEBUG logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treemax",
                                     description="Exact SoftTreeMax variance laboratory")
    subparsers = parser.add_subparsers(dest="command", required=True)
    regimes = RegimeRegistry.get_class_names()

    gen = subparsers.add_parser("gen-mdp", help="draw an MDP from a regime")
    _add_common(gen)
    gen.add_argument("--regime", choices=regimes, default=SUPPRESS)
    gen.add_argument("--mix", type=float, default=SUPPRESS, help="weight of the uniform matrix")
    gen.add_argument("--states", dest="num_states", type=int, default=SUPPRESS)
    gen.add_argument("--actions", dest="num_actions", type=int, default=SUPPRESS)
    gen.add_argument("--gamma", type=float, default=SUPPRESS)
    gen.add_argument("--reward-mode", dest="reward_mode",
                     choices=["state", "state_action", "constant"], default=SUPPRESS)
    gen.add_argument("-o", "--output", default=SUPPRESS)

    sweep = subparsers.add_parser("sweep", help="exact variance over depths")
    _add_common(sweep)
    sweep.add_argument("--regimes", nargs="+", choices=regimes, default=SUPPRESS)
    sweep.add_argument("--mdp", dest="mdp_files", nargs="+", default=SUPPRESS,
                       help="sweep MDP files instead of generated regimes")
    sweep.add_argument("--mix", type=float, default=SUPPRESS)
    sweep.add_argument("--states", dest="num_states", type=int, default=SUPPRESS)
    sweep.add_argument("--actions", dest="num_actions", type=int, default=SUPPRESS)
    sweep.add_argument("--beta", type=float, default=SUPPRESS)
    sweep.add_argument("--gamma", type=float, default=SUPPRESS)
    sweep.add_argument("--variant", choices=["C", "E"], default=SUPPRESS)
    sweep.add_argument("--min-depth", dest="min_depth", type=int, default=SUPPRESS)
    sweep.add_argument("--max-depth", dest="max_depth", type=int, default=SUPPRESS)
    sweep.add_argument("--seeds", dest="num_seeds", type=int, default=SUPPRESS,
                       help="number of consecutive seeds starting at --seed")
    sweep.add_argument("--reward-mode", dest="reward_mode",
                       choices=["state", "state_action", "constant"], default=SUPPRESS)
    sweep.add_argument("--theta-mode", dest="theta_mode", choices=["random", "constant"],
                       default=SUPPRESS)
    sweep.add_argument("--jobs", type=int, default=SUPPRESS,
                       help="worker threads (default: logical cores; TREEMAX_JOBS overrides)")
    sweep.add_argument("-o", "--output", default=SUPPRESS)
    sweep.add_argument("--svg", default=SUPPRESS, help="also draw the normalized curves")

    gradcheck = subparsers.add_parser("gradcheck", help="finite-difference gradient suite")
    _add_common(gradcheck)
    gradcheck.add_argument("--instances", type=int, default=SUPPRESS)
    gradcheck.add_argument("--tolerance", type=float, default=SUPPRESS)
    gradcheck.add_argument("--step", type=float, default=SUPPRESS)
    gradcheck.add_argument("--inject-sign-flip", dest="inject_sign_flip", action="store_true",
                           default=SUPPRESS, help="debug: negate the analytic C gradient")

    train = subparsers.add_parser("train", help="tree policy-gradient training")
    _add_common(train)
    train.add_argument("--env", choices=EnvironmentRegistry.get_class_names(), default=SUPPRESS)
    train.add_argument("--env-size", dest="env_size", type=int, default=SUPPRESS)
    train.add_argument("--depth", type=int, default=SUPPRESS)
    train.add_argument("--width", type=int, default=SUPPRESS, help="0 disables pruning")
    train.add_argument("--beta", type=float, default=SUPPRESS)
    train.add_argument("--gamma", type=float, default=SUPPRESS)
    train.add_argument("--lr", dest="learning_rate", type=float, default=SUPPRESS)
    train.add_argument("--batch-size", dest="batch_size", type=int, default=SUPPRESS)
    train.add_argument("--iterations", type=int, default=SUPPRESS)
    train.add_argument("--max-episode-steps", dest="max_episode_steps", type=int, default=SUPPRESS)
    train.add_argument("--variant", choices=["C", "E"], default=SUPPRESS)
    train.add_argument("--baseline", action="store_true", default=SUPPRESS,
                       help="also train the depth-0 softmax baseline")
    train.add_argument("--wall-clock", dest="wall_clock", action="store_true", default=SUPPRESS,
                       help="fill the wall_ms column")
    train.add_argument("-o", "--output", default=SUPPRESS)

    analyze = subparsers.add_parser("analyze", help="spectrum and policy of one MDP file")
    _add_common(analyze)
    analyze.add_argument("--mdp", dest="mdp_file", default=SUPPRESS)
    analyze.add_argument("--depth", type=int, default=SUPPRESS)
    analyze.add_argument("--beta", type=float, default=SUPPRESS)
    analyze.add_argument("--variant", choices=["C", "E"], default=SUPPRESS)
    analyze.add_argument("-o", "--output", default=SUPPRESS)
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def resolve_configuration(args: argparse.Namespace, parser: argparse.ArgumentParser):
    """Defaults, then the --config file, then explicit flags."""
    manager = ConfigManager.get_instance()
    if args.config_file:
        configuration = manager.read_config_from_file(args.config_file)
        if configuration.get("command") != args.command:
            parser.error(f"{args.config_file} holds a '{configuration.get('command')}' "
                         f"configuration, not '{args.command}'")
        parameters = dict(configuration.get("parameters", {}))
        seed_given = "seed" in parameters
    else:
        parameters = asdict(COMMAND_CONFIGS[args.command]())
        seed_given = False

    reserved = {"command", "config_file", "save_config", "verbose"}
    overrides = {key: value for key, value in vars(args).items() if key not in reserved}
    parameters.update(overrides)
    if not (seed_given or "seed" in overrides):
        parser.error(f"{args.command} needs --seed")

    return manager.set_configuration({"command": args.command, "parameters": parameters},
                                     export_path=args.save_config)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)

    try:
        run_config = resolve_configuration(args, parser)
        return COMMANDS[run_config.command](run_config.parameters)
    except (TreeMaxError, ValueError) as error:
        logger.error("%s", error)
        print(f"error: {error}", file=sys.stderr)
        return exit_code_for(error)
    except OSError as error:
        logger.error("%s", error)
        print(f"error: {error}", file=sys.stderr)
        return EXIT_USAGE
