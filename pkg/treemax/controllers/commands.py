"""
Command implementations. Each takes its parameter record and returns the
process exit code; errors propagate to the caller, which maps them to codes.
"""
import logging
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from treemax.core.data_classes import (
    AnalyzeConfig, GenMdpConfig, GradcheckConfig, RegimeSpec, StationaryPolicy,
    SweepConfig, TrainConfig, TreePolicyConfig, Variant
)
from treemax.core.defaults import RegimeDefaults
from treemax.core.errors import (
    ActionDependentRewardError, DivergenceError, NonMixingChainError, NumericalError,
    SolverError, TreeMaxError
)
from treemax.core.gradients import run_gradcheck
from treemax.core.mdp import generate_mdp, induce_chain, load_mdp, save_mdp
from treemax.core.softtreemax import policy_matrix
from treemax.core.spectral import analyze_spectrum
from treemax.managers.sweep_manager import (
    CONJECTURE_COLUMNS, SWEEP_COLUMNS, SweepManager, draw_theta
)
from treemax.trainer.train_worker import TrainWorker, build_environment
from treemax.utils.regimes import RegimeRegistry
from treemax.utils.reports import read_sidecar, write_report_csv, write_sidecar, write_sweep_svg

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3

TRAIN_COLUMNS = ["iteration", "mean_return", "empirical_grad_variance", "policy_entropy", "wall_ms"]
POLICY_COLUMNS = ["state", "action", "probability"]


def exit_code_for(error: Optional[BaseException]) -> int:
    if error is None:
        return EXIT_OK
    if isinstance(error, (NonMixingChainError, NumericalError, SolverError,
                          DivergenceError, ActionDependentRewardError)):
        return EXIT_NUMERIC
    return EXIT_USAGE


def derived_path(output: str | Path, tag: str) -> Path:
    """out.csv -> out.<tag>.csv"""
    output = Path(output)
    return output.with_name(f"{output.stem}.{tag}{output.suffix}")


def cmd_gen_mdp(config: GenMdpConfig) -> int:
    """Write an MDP JSON file and its `.meta.json` sidecar."""
    regime = RegimeRegistry.canonical_name(config.regime)
    mix = RegimeDefaults.defaults[regime] if config.mix is None else config.mix
    spec = RegimeSpec(regime, mix=mix, num_states=config.num_states,
                      num_actions=config.num_actions, discount=config.gamma,
                      reward_mode=config.reward_mode)
    mdp, behavior = generate_mdp(spec, config.seed)
    report = analyze_spectrum(induce_chain(mdp, behavior))

    save_mdp(mdp, config.output)
    write_sidecar(config.output, {
        "regime": regime,
        "mix": mix,
        "seed": config.seed,
        "reward_mode": config.reward_mode,
        "lambda2": report.lambda2_modulus,
        "mixing": report.mixing_flag,
        "behavior": behavior.probs.tolist(),
    })
    print(f"{config.output}: regime={regime} mix={mix:g} |lambda_2|={report.lambda2_modulus:.6g}"
          f"{'' if report.mixing_flag else ' (not mixing)'}")
    return EXIT_OK


def cmd_sweep(config: SweepConfig) -> int:
    """Depth sweep CSV, the conjecture ratios for variant E, and an optional SVG."""
    result = SweepManager(config).run()
    write_report_csv(config.output, result.rows, SWEEP_COLUMNS, result.error)
    if Variant(config.variant) is Variant.E:
        write_report_csv(derived_path(config.output, "conjecture"), result.conjecture_rows,
                         CONJECTURE_COLUMNS, result.error)
    if config.svg and result.rows:
        write_sweep_svg(config.svg, pd.DataFrame(result.rows, columns=SWEEP_COLUMNS))
    if result.error is not None:
        logger.error("sweep finished with errors: %s", result.error)
    return exit_code_for(result.error)


def cmd_gradcheck(config: GradcheckConfig) -> int:
    """Exit code 0 iff every analytic gradient matches finite differences."""
    failures = run_gradcheck(instances=config.instances, tolerance=config.tolerance,
                             step=config.step, seed=config.seed,
                             inject_sign_flip=config.inject_sign_flip)
    checked = 2 * config.instances
    for failure in failures:
        print(f"FAIL seed={failure.instance_seed} variant={failure.variant.value} "
              f"root={failure.root_state} entry={failure.entry} analytic={failure.analytic:.10g} "
              f"numeric={failure.numeric:.10g} rel_err={failure.relative_error:.3e}")
    print(f"gradcheck: {checked - len(failures)}/{checked} checks passed "
          f"(tolerance {config.tolerance:g}, step {config.step:g})")
    return EXIT_VERIFICATION_FAILED if failures else EXIT_OK


def _train_rows(records, wall_clock: bool):
    return [{
        "iteration": record.iteration,
        "mean_return": record.mean_return,
        "empirical_grad_variance": record.empirical_grad_variance,
        "policy_entropy": record.policy_entropy,
        "wall_ms": record.wall_ms if wall_clock else None,
    } for record in records]


def _train_one(config: TrainConfig, output: Path) -> Optional[TreeMaxError]:
    worker = TrainWorker(build_environment(config), config)
    error = None
    try:
        worker.run()
    except DivergenceError as divergence:
        logger.error("%s", divergence)
        error = divergence
    write_report_csv(output, _train_rows(worker.records, config.wall_clock), TRAIN_COLUMNS, error)
    return error


def cmd_train(config: TrainConfig) -> int:
    """Training CSV, plus a paired depth-0 baseline file with --baseline."""
    config.validate()
    error = _train_one(config, Path(config.output))
    if config.baseline:
        baseline_error = _train_one(config.baseline_config(), derived_path(config.output, "baseline"))
        error = error or baseline_error
    return exit_code_for(error)


def cmd_analyze(config: AnalyzeConfig) -> int:
    """Spectrum of the behavior chain and the SoftTreeMax policy of one MDP file."""
    mdp = load_mdp(config.mdp_file)
    behavior = read_sidecar(config.mdp_file).get("behavior")
    behavior = (StationaryPolicy(behavior) if behavior is not None
                else StationaryPolicy.uniform(mdp.num_states, mdp.num_actions))
    report = analyze_spectrum(induce_chain(mdp, behavior))

    theta = draw_theta(mdp.num_states, config.seed, "random")
    tree_config = TreePolicyConfig(Variant(config.variant), config.depth, config.beta, theta, behavior)
    policy = policy_matrix(mdp, tree_config)

    moduli = ", ".join(f"{modulus:.6g}" for modulus in report.eigenvalue_moduli)
    print(f"eigenvalue moduli: {moduli}")
    print(f"|lambda_2| = {report.lambda2_modulus:.12g} mixing={report.mixing_flag}")
    for state, probs in enumerate(policy.probs):
        print(f"pi(.|{state}) = " + " ".join(f"{prob:.6f}" for prob in probs))

    if config.output:
        rows = [{"state": state, "action": action, "probability": float(policy.probs[state, action])}
                for state, action in np.ndindex(policy.probs.shape)]
        write_report_csv(config.output, rows, POLICY_COLUMNS)
    return EXIT_OK


COMMANDS = {
    "gen-mdp": cmd_gen_mdp,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
    "train": cmd_train,
    "analyze": cmd_analyze,
}
