"""
Exact tabular SoftTreeMax policies.

Both variants score a root action a by the depth-d trajectories that start
with a and then follow the behavior policy:

    C: pi(a|s) proportional to exp(beta * E[logit])
    E: pi(a|s) proportional to E[exp(beta * logit)]

Everything here works on the vector forms, so no tree is materialized.
"""
import logging
from typing import List, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from treemax.core.data_classes import (
    CumulantMatrix, ExponentMatrix, InducedChain, Mdp, StationaryPolicy,
    TreePolicyConfig, TreePolicyDistribution, Variant
)
from treemax.core.defaults import ToleranceDefaults
from treemax.core.errors import DimensionMismatchError, InvalidModelError, NonMixingChainError
from treemax.core.mdp import induce_chain, state_rewards
from treemax.core.spectral import is_mixing
from treemax.utils.linalg import eigenvalue_moduli, rank_one_remainder_norm, solve_stationary

logger = logging.getLogger(__name__)


def _check_root(mdp: Mdp, config: TreePolicyConfig, root: int) -> None:
    if config.behavior.probs.shape != (mdp.num_states, mdp.num_actions):
        raise DimensionMismatchError(
            f"behavior policy shape {config.behavior.probs.shape} does not match MDP "
            f"(S={mdp.num_states}, A={mdp.num_actions})")
    if not 0 <= root < mdp.num_states:
        raise InvalidModelError(f"root state {root} outside 0..{mdp.num_states - 1}")


def _require_depth(config: TreePolicyConfig, what: str) -> None:
    if config.depth < 1:
        raise InvalidModelError(f"{what} needs depth >= 1; depth 0 is the uniform policy")


def behavior_chain(mdp: Mdp, config: TreePolicyConfig) -> InducedChain:
    return induce_chain(mdp, config.behavior)


def leaf_weights(mdp: Mdp, config: TreePolicyConfig, root: int) -> np.ndarray:
    """
    P_s (P^pi_b)^(d-1): the probability of each leaf state per root action.
    """
    _check_root(mdp, config, root)
    _require_depth(config, "leaf weights")
    transition = behavior_chain(mdp, config).transition
    weights = np.array(mdp.root_transitions(root))
    for _ in range(config.depth - 1):
        weights = weights @ transition
    return weights


def build_cumulant(mdp: Mdp, config: TreePolicyConfig, root: int) -> CumulantMatrix:
    """
    Expected discounted reward of the first d steps:

        C_{s,d} = R_s + P_s [sum_{h=1}^{d-1} gamma^h (P^pi_b)^(h-1)] R_pi_b

    Args:
        mdp (Mdp): The MDP.
        config (TreePolicyConfig): Policy configuration, depth >= 1.
        root (int): Root state s.

    Returns:
        CumulantMatrix: One entry per root action.
    """
    _check_root(mdp, config, root)
    _require_depth(config, "the cumulant")
    chain = behavior_chain(mdp, config)

    tail = np.zeros(mdp.num_states)
    term = np.array(chain.reward)
    for level in range(1, config.depth):
        tail += mdp.discount ** level * term
        term = chain.transition @ term

    values = mdp.root_rewards(root) + mdp.root_transitions(root) @ tail
    return CumulantMatrix(values)


def _c_logits(mdp: Mdp, config: TreePolicyConfig, root: int) -> np.ndarray:
    cumulant = build_cumulant(mdp, config, root).values
    weights = leaf_weights(mdp, config, root)
    return config.beta * (cumulant + mdp.discount ** config.depth * weights @ config.theta)


def _uniform(mdp: Mdp, config: TreePolicyConfig, root: int) -> TreePolicyDistribution:
    probs = np.full(mdp.num_actions, 1.0 / mdp.num_actions)
    log_partition = config.beta * config.theta[root] + np.log(mdp.num_actions)
    return TreePolicyDistribution(root, probs, float(log_partition))


def policy_c(mdp: Mdp, config: TreePolicyConfig, root: int) -> TreePolicyDistribution:
    """C-SoftTreeMax: softmax of beta (C_{s,d} + gamma^d P_s (P^pi_b)^(d-1) Theta)."""
    _check_root(mdp, config, root)
    if config.depth == 0:
        return _uniform(mdp, config, root)
    logits = _c_logits(mdp, config, root)
    return TreePolicyDistribution(root, softmax(logits), float(logsumexp(logits)))


def build_exponent(mdp: Mdp, config: TreePolicyConfig, root: int) -> ExponentMatrix:
    """
    E_{s,d} = P_s prod_{h=1}^{d-1} D(exp(beta gamma^h R)) P^pi_b, built right
    to left as P_s D(M_1) B_1 ... B_{d-1} with

        M_{d-1} = exp(beta gamma^(d-1) R),   B_{d-1} = P^pi_b
        M_i = exp(beta gamma^i R) * (P^pi_b M_{i+1})
        B_i = D(P^pi_b M_{i+1})^-1 P^pi_b D(M_{i+1})

    so every B_i is row-stochastic. M is carried in log space.

    Raises:
        ActionDependentRewardError: If some state's reward depends on the action.
    """
    _check_root(mdp, config, root)
    _require_depth(config, "the exponent matrix")
    rewards = state_rewards(mdp)
    transition = behavior_chain(mdp, config).transition
    root_rows = np.array(mdp.root_transitions(root))
    num_states = mdp.num_states

    if config.depth == 1:
        identity = np.eye(num_states)
        return ExponentMatrix(values=root_rows, factors=[], scale_vector=np.ones(num_states),
                              log_scale=0.0, root_rows=root_rows, product=identity)

    def level_exponent(level: int) -> np.ndarray:
        return config.beta * mdp.discount ** level * rewards

    log_m = level_exponent(config.depth - 1)
    factors = [np.array(transition)]
    for level in range(config.depth - 2, 0, -1):
        log_row_sums = logsumexp(log_m[None, :], b=transition, axis=1)
        factors.insert(0, transition * np.exp(log_m[None, :] - log_row_sums[:, None]))
        log_m = level_exponent(level) + log_row_sums

    product = np.eye(num_states)
    for factor in factors:
        product = product @ factor

    log_scale = float(log_m.max())
    scale_vector = np.exp(log_m - log_scale)
    scaled = (root_rows * scale_vector[None, :]) @ product
    # exp(log_scale + log x) keeps zero entries at 0 when exp(log_scale) overflows
    with np.errstate(over="ignore", divide="ignore"):
        values = np.exp(log_scale + np.log(scaled))

    return ExponentMatrix(values=values, factors=factors, scale_vector=scale_vector,
                          log_scale=log_scale, root_rows=root_rows, product=product)


def direct_exponent(mdp: Mdp, config: TreePolicyConfig, root: int) -> np.ndarray:
    """Naive left-to-right product for E_{s,d}. Overflows for large beta."""
    _check_root(mdp, config, root)
    _require_depth(config, "the exponent matrix")
    rewards = state_rewards(mdp)
    transition = behavior_chain(mdp, config).transition
    values = np.array(mdp.root_transitions(root))
    for level in range(1, config.depth):
        values = (values * np.exp(config.beta * mdp.discount ** level * rewards)[None, :]) @ transition
    return values


def log_exponent_values(matrix: ExponentMatrix) -> np.ndarray:
    """
    log E_{s,d} entrywise from the factorization; -inf where E_{s,d} is 0.
    """
    log_m = matrix.log_scale_vector
    weights = matrix.root_rows[:, :, None] * matrix.product[None, :, :]
    with np.errstate(divide="ignore"):
        return logsumexp(np.broadcast_to(log_m[None, :, None], weights.shape), b=weights, axis=1)


def e_logits(mdp: Mdp, config: TreePolicyConfig, root: int) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (root-action logits, log of E[a, k] exp(beta gamma^d Theta_k))."""
    matrix = build_exponent(mdp, config, root)
    leaf_scores = config.beta * mdp.discount ** config.depth * config.theta
    joint = log_exponent_values(matrix) + leaf_scores[None, :]
    return logsumexp(joint, axis=1), joint


def policy_e(mdp: Mdp, config: TreePolicyConfig, root: int) -> TreePolicyDistribution:
    """
    E-SoftTreeMax: probabilities proportional to E_{s,d} exp(beta gamma^d Theta).

    The root factor exp(beta r(s)) is shared by all actions and dropped.
    """
    _check_root(mdp, config, root)
    state_rewards(mdp)
    if config.depth == 0:
        return _uniform(mdp, config, root)
    logits, _ = e_logits(mdp, config, root)
    return TreePolicyDistribution(root, softmax(logits), float(logsumexp(logits)))


def policy_distribution(mdp: Mdp, config: TreePolicyConfig, root: int) -> TreePolicyDistribution:
    if config.variant is Variant.C:
        return policy_c(mdp, config, root)
    return policy_e(mdp, config, root)


def policy_matrix(mdp: Mdp, config: TreePolicyConfig) -> StationaryPolicy:
    """The SoftTreeMax policy at every state, as a stationary policy."""
    rows = [policy_distribution(mdp, config, state).probs for state in range(mdp.num_states)]
    return StationaryPolicy(np.vstack(rows))


def factor_decay(matrix: ExponentMatrix) -> List[float]:
    """
    Distance of the partial products B_1 ... B_k from rank one, k = 1..d-1.

    Returns:
        list: ||B_1 ... B_k - 1 mu_k^T||_2 with mu_k the stationary vector
            of the partial product.

    Raises:
        NonMixingChainError: If some factor or partial product is not mixing.
    """
    if not matrix.factors:
        raise InvalidModelError("factor decay needs depth >= 2 (no factors at depth 1)")

    tolerance = ToleranceDefaults.defaults["factor_rows"]
    curve = []
    product = np.eye(matrix.factors[0].shape[0])
    for index, factor in enumerate(matrix.factors, start=1):
        row_error = np.max(np.abs(factor.sum(axis=1) - 1.0))
        if row_error > tolerance:
            raise InvalidModelError(f"factor B_{index} is not row-stochastic (error {row_error:.3e})")
        lambda2 = _second_modulus(factor)
        if not is_mixing(lambda2):
            raise NonMixingChainError(lambda2, what=f"factor B_{index}")

        product = product @ factor
        lambda2 = _second_modulus(product)
        if not is_mixing(lambda2):
            raise NonMixingChainError(lambda2, what=f"product B_1..B_{index}")
        curve.append(rank_one_remainder_norm(product, solve_stationary(product)))
    return curve


def _second_modulus(matrix: np.ndarray) -> float:
    moduli = eigenvalue_moduli(matrix)
    return float(moduli[1]) if moduli.size > 1 else 0.0
