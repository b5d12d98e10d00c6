"""
Finite MDPs: policy-induced chains, exact value and Q solvers, stationary
distributions, regime-driven generation and the JSON file format.
"""
import json
import logging
from pathlib import Path
from typing import Tuple

import numpy as np
import scipy.linalg

from treemax.core.data_classes import InducedChain, Mdp, RegimeSpec, StationaryPolicy
from treemax.core.defaults import ToleranceDefaults
from treemax.core.errors import (
    ActionDependentRewardError, DimensionMismatchError, InvalidModelError,
    NonMixingChainError, SolverError
)
from treemax.utils.linalg import clamp_renormalize, eigenvalue_moduli, solve_stationary
from treemax.utils.regimes import RegimeRegistry

logger = logging.getLogger(__name__)


def _check_dimensions(mdp: Mdp, policy: StationaryPolicy) -> None:
    if policy.probs.shape != (mdp.num_states, mdp.num_actions):
        raise DimensionMismatchError(
            f"policy shape {policy.probs.shape} does not match MDP "
            f"(S={mdp.num_states}, A={mdp.num_actions})")


def induce_chain(mdp: Mdp, policy: StationaryPolicy) -> InducedChain:
    """
    Build P^pi(s'|s) = sum_a pi(a|s) P(s'|s,a) and R_pi(s) = sum_a pi(a|s) r(s,a).
    """
    _check_dimensions(mdp, policy)
    transition = np.einsum("sa,sat->st", policy.probs, mdp.transitions)
    reward = np.sum(policy.probs * mdp.rewards, axis=1)
    return InducedChain(clamp_renormalize(transition), reward)


def solve_value(mdp: Mdp, policy: StationaryPolicy) -> np.ndarray:
    """
    Solve (I - gamma P^pi) V = R_pi.

    Raises:
        SolverError: If the solve fails or misses the residual target.
    """
    chain = induce_chain(mdp, policy)
    system = np.eye(mdp.num_states) - mdp.discount * chain.transition
    try:
        value = scipy.linalg.solve(system, chain.reward)
    except (scipy.linalg.LinAlgError, ValueError) as error:
        raise SolverError(f"policy evaluation failed: {error}") from error

    residual = np.max(np.abs(system @ value - chain.reward))
    if residual > ToleranceDefaults.defaults["residual"]:
        raise SolverError(f"policy evaluation residual {residual:.3e} exceeds tolerance")
    return value


def solve_q(mdp: Mdp, policy: StationaryPolicy) -> np.ndarray:
    """q[s, a] = r(s, a) + gamma * sum_s' P(s'|s, a) V^pi(s')."""
    value = solve_value(mdp, policy)
    return mdp.rewards + mdp.discount * mdp.transitions @ value


def stationary_distribution(chain: InducedChain) -> np.ndarray:
    """
    Stationary distribution of a mixing chain.

    Raises:
        NonMixingChainError: If |lambda_2| >= 1 - 1e-9.
    """
    moduli = eigenvalue_moduli(chain.transition)
    lambda2 = float(moduli[1]) if moduli.size > 1 else 0.0
    if lambda2 >= 1.0 - ToleranceDefaults.defaults["mixing_gap"]:
        raise NonMixingChainError(lambda2)
    return solve_stationary(np.array(chain.transition))


def state_rewards(mdp: Mdp) -> np.ndarray:
    """
    r(s) := rewards[s][0], after checking that no state's reward depends on
    the action.
    """
    differs = np.any(mdp.rewards != mdp.rewards[:, :1], axis=1)
    if np.any(differs):
        raise ActionDependentRewardError(int(np.argmax(differs)))
    return np.array(mdp.rewards[:, 0])


def estimate_q_by_rollouts(mdp: Mdp,
                           policy: StationaryPolicy,
                           episodes: int,
                           horizon: int,
                           rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Monte-Carlo estimate of Q^pi by truncated rollouts from every (s, a).

    Returns:
        tuple: (mean, standard_error), both S x A.
    """
    _check_dimensions(mdp, policy)
    num_states, num_actions = mdp.num_states, mdp.num_actions
    starts = np.repeat(np.arange(num_states * num_actions), episodes)
    states = starts // num_actions
    actions = starts % num_actions

    transition_cdf = np.cumsum(mdp.transitions, axis=2)
    policy_cdf = np.cumsum(policy.probs, axis=1)
    returns = np.zeros(starts.size)
    discount = 1.0

    for _ in range(horizon):
        returns += discount * mdp.rewards[states, actions]
        discount *= mdp.discount
        draws = rng.random(starts.size)
        states = np.minimum((transition_cdf[states, actions] < draws[:, None]).sum(axis=1),
                            num_states - 1)
        draws = rng.random(starts.size)
        actions = np.minimum((policy_cdf[states] < draws[:, None]).sum(axis=1),
                             num_actions - 1)

    returns = returns.reshape(num_states, num_actions, episodes)
    mean = returns.mean(axis=2)
    standard_error = returns.std(axis=2, ddof=1) / np.sqrt(episodes)
    return mean, standard_error


def generate_mdp(spec: RegimeSpec, seed: int) -> Tuple[Mdp, StationaryPolicy]:
    """
    Draw an MDP and a behavior policy whose induced chain is
    (1 - mix) * base + mix * uniform for the named regime.

    Raises:
        InvalidModelError: For an unknown regime, a mix outside [0, 1] or bad sizes.
    """
    if not 0.0 <= spec.mix <= 1.0:
        raise InvalidModelError(f"mix must lie in [0, 1], got {spec.mix}")
    if spec.num_states < 1 or spec.num_actions < 1:
        raise InvalidModelError(
            f"sizes must be positive, got S={spec.num_states}, A={spec.num_actions}")
    try:
        regime_class = RegimeRegistry.get_class(spec.regime)
    except KeyError as error:
        raise InvalidModelError(str(error)) from None

    rng = np.random.default_rng(seed)
    regime = regime_class(spec.num_states, spec.num_actions, spec.mix)
    transitions, behavior = regime.build(rng)
    rewards = _draw_rewards(spec, rng)

    mdp = Mdp(clamp_renormalize(transitions), rewards, spec.discount)
    policy = StationaryPolicy(clamp_renormalize(behavior))
    logger.debug("generated %s MDP (S=%d, A=%d, mix=%g, seed=%d)",
                 regime_class.name, spec.num_states, spec.num_actions, spec.mix, seed)
    return mdp, policy


def _draw_rewards(spec: RegimeSpec, rng: np.random.Generator) -> np.ndarray:
    shape = (spec.num_states, spec.num_actions)
    if spec.reward_mode == "state":
        return np.repeat(rng.uniform(0.0, 1.0, size=(spec.num_states, 1)), spec.num_actions, axis=1)
    if spec.reward_mode == "state_action":
        return rng.uniform(0.0, 1.0, size=shape)
    if spec.reward_mode == "constant":
        return np.full(shape, spec.constant_reward)
    raise InvalidModelError(f"unknown reward mode '{spec.reward_mode}'")


def load_mdp(file_path: str | Path) -> Mdp:
    """
    Load an MDP JSON file, validating every invariant.

    Raises:
        InvalidModelError: With the first violating index when one exists.
    """
    try:
        with open(file_path, "r") as json_file:
            data = json.load(json_file)
    except json.JSONDecodeError as error:
        raise InvalidModelError(f"{file_path} is not valid JSON: {error}") from None
    return Mdp.from_dict(data)


def save_mdp(mdp: Mdp, file_path: str | Path) -> None:
    with open(file_path, "w") as json_file:
        json.dump(mdp.to_dict(), json_file, indent=1)
        json_file.write("\n")
