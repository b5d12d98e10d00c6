"""Shared fixtures and brute-force trajectory enumeration oracles."""
from itertools import product

import numpy as np
import pytest

from treemax.core.data_classes import Mdp, RegimeSpec, StationaryPolicy, TreePolicyConfig, Variant
from treemax.core.mdp import generate_mdp
from treemax.managers.config_manager import ConfigManager


def enumerate_trajectories(mdp: Mdp, behavior: StationaryPolicy, root: int, action: int, depth: int):
    """
    Every trajectory (a, s_1, a_1, ..., s_{d-1}, a_{d-1}, s_d) that starts
    with `action` at `root` and then follows the behavior policy.

    Returns:
        tuple: (probability [N, M], discounted reward of the first d steps
            [N, M], per-step state rewards after the root [N, M], leaf state [N])
            with N state sequences and M action sequences.
    """
    num_states, num_actions = mdp.num_states, mdp.num_actions
    states = np.array(list(product(range(num_states), repeat=depth)), dtype=int).reshape(-1, depth)
    # shape (1, 0) at depth 1: one empty action sequence
    actions = np.array(list(product(range(num_actions), repeat=depth - 1)), dtype=int)

    probability = mdp.transitions[root, action, states[:, 0]][:, None] * np.ones(len(actions))[None, :]
    reward = np.full(probability.shape, mdp.rewards[root, action])
    tail_state_reward = np.zeros(probability.shape)
    for level in range(1, depth):
        current = states[:, level - 1][:, None]
        chosen = actions[:, level - 1][None, :]
        following = states[:, level][:, None]
        probability = probability * behavior.probs[current, chosen] * mdp.transitions[current, chosen, following]
        reward = reward + mdp.discount ** level * mdp.rewards[current, chosen]
        tail_state_reward = tail_state_reward + mdp.discount ** level * mdp.rewards[current, 0] * np.ones(len(actions))[None, :]
    return probability, reward, tail_state_reward, states[:, -1]


def oracle_cumulant(mdp: Mdp, config: TreePolicyConfig, root: int) -> np.ndarray:
    values = np.zeros(mdp.num_actions)
    for action in range(mdp.num_actions):
        probability, reward, _, _ = enumerate_trajectories(mdp, config.behavior, root, action, config.depth)
        values[action] = np.sum(probability * reward)
    return values


def oracle_policy_c(mdp: Mdp, config: TreePolicyConfig, root: int) -> np.ndarray:
    """softmax over actions of beta * E[sum gamma^h r_h + gamma^d theta(s_d)]."""
    logits = np.zeros(mdp.num_actions)
    for action in range(mdp.num_actions):
        probability, reward, _, leaf = enumerate_trajectories(mdp, config.behavior, root, action, config.depth)
        leaf_score = mdp.discount ** config.depth * config.theta[leaf][:, None]
        logits[action] = config.beta * np.sum(probability * (reward + leaf_score))
    weights = np.exp(logits - logits.max())
    return weights / weights.sum()


def oracle_exponent(mdp: Mdp, config: TreePolicyConfig, root: int) -> np.ndarray:
    """E[a, k] = E[exp(beta sum_{h>=1} gamma^h r(s_h)) ; s_d = k] for state rewards."""
    matrix = np.zeros((mdp.num_actions, mdp.num_states))
    for action in range(mdp.num_actions):
        probability, _, tail, leaf = enumerate_trajectories(mdp, config.behavior, root, action, config.depth)
        contributions = np.sum(probability * np.exp(config.beta * tail), axis=1)
        np.add.at(matrix[action], leaf, contributions)
    return matrix


def oracle_policy_e(mdp: Mdp, config: TreePolicyConfig, root: int) -> np.ndarray:
    """Probabilities proportional to E[exp(beta * trajectory logit)]."""
    unnormalized = np.zeros(mdp.num_actions)
    for action in range(mdp.num_actions):
        probability, reward, _, leaf = enumerate_trajectories(mdp, config.behavior, root, action, config.depth)
        logit = reward + mdp.discount ** config.depth * config.theta[leaf][:, None]
        unnormalized[action] = np.sum(probability * np.exp(config.beta * logit))
    return unnormalized / unnormalized.sum()


def random_instance(seed: int,
                    max_states: int = 4,
                    max_actions: int = 3,
                    regime: str = "random",
                    mix: float = 0.1,
                    reward_mode: str = "state",
                    variant: Variant = Variant.C,
                    depth: int | None = None,
                    max_depth: int = 4):
    """(mdp, config, root) with sizes, depth, beta, theta and root drawn from `seed`."""
    rng = np.random.default_rng([seed, 7])
    num_states = int(rng.integers(2, max_states + 1))
    num_actions = int(rng.integers(2, max_actions + 1))
    spec = RegimeSpec(regime, mix=mix, num_states=num_states, num_actions=num_actions,
                      discount=0.9, reward_mode=reward_mode)
    mdp, behavior = generate_mdp(spec, seed)
    if depth is None:
        depth = int(rng.integers(1, max_depth + 1))
    config = TreePolicyConfig(variant, depth, float(rng.uniform(0.3, 1.5)),
                              rng.uniform(0.0, 1.0, size=num_states), behavior)
    return mdp, config, int(rng.integers(num_states))


@pytest.fixture
def two_state_chain():
    """
    One action; P = [[0.9, 0.1], [0.5, 0.5]] with mu = (5/6, 1/6) and
    lambda_2 = 0.4.
    """
    transitions = np.array([[[0.9, 0.1]], [[0.5, 0.5]]])
    rewards = np.array([[1.0], [0.0]])
    return Mdp(transitions, rewards, 0.9)


@pytest.fixture
def random_mdp():
    spec = RegimeSpec("random", mix=0.1, num_states=4, num_actions=3, discount=0.9)
    return generate_mdp(spec, seed=3)


@pytest.fixture(autouse=True)
def reset_config_manager():
    ConfigManager._instance = None
    yield
    ConfigManager._instance = None
