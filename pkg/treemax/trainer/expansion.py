"""
Breadth-first tree expansion with width pruning, and the root-action
distribution and score gradient it induces.
"""
import logging
from typing import List, Optional

import numpy as np
from scipy.special import logsumexp, softmax

from treemax.core.data_classes import (
    ExpansionNode, ExpansionTree, TreeActionDistribution, Variant
)
from treemax.core.errors import InvalidModelError
from treemax.trainer.environments import SimEnvironment

logger = logging.getLogger(__name__)


def _leaf_score(env: SimEnvironment, theta: np.ndarray, state, terminal: bool) -> float:
    # terminal scores are pinned to zero
    return 0.0 if terminal else float(theta[env.state_index(state)])


def _prune(level: List[ExpansionNode], width: Optional[int]) -> List[ExpansionNode]:
    """Keep the `width` best running logits; ties go to earlier nodes."""
    if width is None or len(level) <= width:
        return level
    ranked = sorted(range(len(level)), key=lambda index: -level[index].logit)
    kept = sorted(ranked[:width])
    return [level[index] for index in kept]


def expand(env: SimEnvironment,
           root,
           depth: int,
           width: Optional[int],
           theta: np.ndarray,
           discount: float) -> ExpansionTree:
    """
    Expand every action of every node for `depth` levels.

    Each node carries the probability of its path under the uniform expansion
    policy, counted from the root action. Terminal nodes stop expanding and
    are carried to the next level unchanged.

    Args:
        env (SimEnvironment): Deterministic forward model.
        root: Root state.
        depth (int): Number of levels, at least 1.
        width (int | None): Largest level size; None or 0 disables pruning.
        theta (np.ndarray): Score per state table index.
        discount (float): gamma.

    Returns:
        ExpansionTree: levels[0] holds one node per root action.
    """
    num_actions = env.num_actions
    width = width or None
    if depth < 1:
        raise InvalidModelError(f"expansion depth must be at least 1, got {depth}")
    if width is not None and width < num_actions:
        raise InvalidModelError(
            f"width {width} cannot hold all {num_actions} root actions")

    level = []
    for action in range(num_actions):
        state, reward, terminal = env.step(root, action)
        logit = reward + discount * _leaf_score(env, theta, state, terminal)
        level.append(ExpansionNode(state, reward, action, 1.0, 1, terminal, logit))
    levels = [level]

    for _ in range(depth - 1):
        children = []
        for node in levels[-1]:
            if node.terminal:
                children.append(node)
                continue
            for action in range(num_actions):
                state, reward, terminal = env.step(node.state, action)
                cumulative = node.cumulative_reward + discount ** node.level * reward
                level_index = node.level + 1
                logit = cumulative + discount ** level_index * _leaf_score(env, theta, state, terminal)
                children.append(ExpansionNode(state, cumulative, node.root_action,
                                              node.weight / num_actions, level_index,
                                              terminal, logit))
        pruned = _prune(children, width)
        if len(pruned) < len(children):
            logger.debug("pruned level %d from %d to %d nodes",
                         len(levels), len(children), len(pruned))
        levels.append(pruned)

    return ExpansionTree(root_state=root, levels=levels, depth=depth, width_limit=width,
                         discount=discount, num_actions=num_actions)


def _leaf_arrays(tree: ExpansionTree):
    leaves = tree.leaves
    actions = np.array([leaf.root_action for leaf in leaves], dtype=int)
    weights = np.array([leaf.weight for leaf in leaves])
    logits = np.array([leaf.logit for leaf in leaves])
    return actions, weights, logits


def _leaf_posteriors(tree: ExpansionTree, beta: float, variant: Variant) -> np.ndarray:
    """
    Share of each leaf in its root action's aggregate: the normalized
    expansion weight for C, the weight times exp(beta * logit) for E.
    """
    actions, weights, logits = _leaf_arrays(tree)
    log_shares = np.log(weights)
    if variant is Variant.E:
        log_shares = log_shares + beta * logits
    posteriors = np.zeros(len(tree.leaves))
    for action in range(tree.num_actions):
        members = actions == action
        if np.any(members):
            posteriors[members] = np.exp(log_shares[members] - logsumexp(log_shares[members]))
    return posteriors


def tree_policy_from_expansion(tree: ExpansionTree,
                               beta: float,
                               variant: Variant = Variant.C) -> TreeActionDistribution:
    """
    Root-action distribution of an expansion.

    C averages the surviving leaf logits of each root action by their
    expansion weights; E takes (1 / beta) log of the weighted mean of
    exp(beta * logit). Probabilities are softmax(beta * logits). A root
    action without surviving leaves gets probability 0 and is reported in
    `missing_actions`.
    """
    if not tree.leaves:
        raise InvalidModelError("cannot build a policy from an empty expansion")
    variant = Variant(variant)
    actions, weights, leaf_logits = _leaf_arrays(tree)

    logits = np.full(tree.num_actions, -np.inf)
    missing = []
    for action in range(tree.num_actions):
        members = actions == action
        if not np.any(members):
            missing.append(action)
            continue
        shares = weights[members] / weights[members].sum()
        if variant is Variant.C:
            logits[action] = shares @ leaf_logits[members]
        else:
            logits[action] = logsumexp(beta * leaf_logits[members], b=shares) / beta

    if missing:
        logger.info("root actions %s lost every leaf to pruning", missing)
    return TreeActionDistribution(probs=softmax(beta * logits), logits=logits,
                                  missing_actions=tuple(missing))


def tree_score_gradient(env: SimEnvironment,
                        tree: ExpansionTree,
                        distribution: TreeActionDistribution,
                        beta: float,
                        variant: Variant = Variant.C) -> np.ndarray:
    """
    d log pi(a|root) / d theta as an A x S matrix over state table indices.

    Each non-terminal leaf adds beta gamma^level times its posterior share to
    its state's column in its root action's row; the policy-weighted mean row
    is then subtracted.

    Rows of `distribution.missing_actions` are zero: those actions have
    probability 0 and log pi = -inf, so they have no score and are never
    sampled.
    """
    variant = Variant(variant)
    posteriors = _leaf_posteriors(tree, beta, variant)
    sensitivities = np.zeros((tree.num_actions, env.num_states))
    for leaf, posterior in zip(tree.leaves, posteriors):
        if leaf.terminal:
            continue
        column = env.state_index(leaf.state)
        sensitivities[leaf.root_action, column] += beta * tree.discount ** leaf.level * posterior
    gradient = sensitivities - distribution.probs @ sensitivities
    gradient[list(distribution.missing_actions)] = 0.0
    return gradient
