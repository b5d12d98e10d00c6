from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional

import numpy as np

from treemax.core.defaults import (
    GradcheckDefaults, SweepDefaults, ToleranceDefaults, TrainerDefaults
)
from treemax.core.errors import InvalidModelError


def _frozen_array(values, ndim: int, name: str) -> np.ndarray:
    """Copy `values` into a read-only float array of the given rank."""
    array = np.array(values, dtype=float)
    if array.ndim != ndim:
        raise InvalidModelError(f"{name} must have {ndim} dimensions, got shape {array.shape}")
    array.setflags(write=False)
    return array


def _first_index(mask: np.ndarray) -> tuple:
    return tuple(int(i) for i in np.argwhere(mask)[0])


def check_simplex_rows(matrix: np.ndarray, name: str, tolerance: float) -> None:
    """
    Raise InvalidModelError unless every row along the last axis is a
    probability vector.
    """
    if not np.all(np.isfinite(matrix)):
        raise InvalidModelError(f"{name} has non-finite entries",
                                _first_index(~np.isfinite(matrix)))
    if np.any(matrix < 0):
        raise InvalidModelError(f"{name} has negative entries", _first_index(matrix < 0))
    row_error = np.abs(matrix.sum(axis=-1) - 1.0)
    if np.any(row_error > tolerance):
        raise InvalidModelError(f"{name} rows must sum to 1 within {tolerance:g}",
                                _first_index(row_error > tolerance))


class Variant(str, Enum):
    """SoftTreeMax flavour: exponentiate the expectation (C) or the reverse (E)."""

    C = "C"
    E = "E"


@dataclass(frozen=True)
class Mdp:
    """
    Finite discounted MDP.

    Attributes:
        transitions: Tensor [s, a, s'] of transition probabilities.
        rewards: Matrix [s, a] of rewards in [0, 1].
        discount: Discount factor gamma in (0, 1).
    """
    transitions: np.ndarray
    rewards: np.ndarray
    discount: float

    def __post_init__(self) -> None:
        transitions = _frozen_array(self.transitions, 3, "transitions")
        rewards = _frozen_array(self.rewards, 2, "rewards")
        num_states, num_actions, next_states = transitions.shape

        if num_states == 0 or num_actions == 0:
            raise InvalidModelError("an MDP needs at least one state and one action")
        if next_states != num_states:
            raise InvalidModelError(
                f"transitions must be [S, A, S], got shape {transitions.shape}")
        if rewards.shape != (num_states, num_actions):
            raise InvalidModelError(
                f"rewards must be [S, A] = {(num_states, num_actions)}, got {rewards.shape}")

        check_simplex_rows(transitions, "transitions",
                           ToleranceDefaults.defaults["stochastic_rows"])
        out_of_range = ~((rewards >= 0.0) & (rewards <= 1.0))
        if np.any(out_of_range):
            raise InvalidModelError("rewards must lie in [0, 1]", _first_index(out_of_range))
        if not 0.0 < float(self.discount) < 1.0:
            raise InvalidModelError(f"discount must lie strictly inside (0, 1), got {self.discount}")

        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]

    def root_transitions(self, state: int) -> np.ndarray:
        """P_s: the A x S matrix of next-state distributions from `state`."""
        return self.transitions[state]

    def root_rewards(self, state: int) -> np.ndarray:
        """R_s: the A-vector of rewards collected at `state`."""
        return self.rewards[state]

    def has_state_rewards(self) -> bool:
        return bool(np.all(self.rewards == self.rewards[:, :1]))

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "gamma": self.discount,
            "transitions": self.transitions.tolist(),
            "rewards": self.rewards.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Mdp":
        try:
            mdp = cls(transitions=data["transitions"],
                      rewards=data["rewards"],
                      discount=data["gamma"])
        except KeyError as missing:
            raise InvalidModelError(f"MDP file is missing key {missing}") from None

        declared = (data.get("num_states", mdp.num_states),
                    data.get("num_actions", mdp.num_actions))
        if declared != (mdp.num_states, mdp.num_actions):
            raise InvalidModelError(
                f"declared sizes {declared} disagree with arrays "
                f"{(mdp.num_states, mdp.num_actions)}")
        return mdp


@dataclass(frozen=True)
class StationaryPolicy:
    """Action distribution per state, probs[s, a]."""
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = _frozen_array(self.probs, 2, "policy")
        check_simplex_rows(probs, "policy", ToleranceDefaults.defaults["stochastic_rows"])
        object.__setattr__(self, "probs", probs)

    @property
    def num_states(self) -> int:
        return self.probs.shape[0]

    @property
    def num_actions(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> "StationaryPolicy":
        return cls(np.full((num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def deterministic(cls, actions, num_actions: int) -> "StationaryPolicy":
        actions = np.asarray(actions, dtype=int)
        return cls(np.eye(num_actions)[actions])


@dataclass(frozen=True)
class InducedChain:
    """P^pi and R_pi of a policy acting on an MDP."""
    transition: np.ndarray
    reward: np.ndarray

    def __post_init__(self) -> None:
        transition = _frozen_array(self.transition, 2, "chain transition")
        reward = _frozen_array(self.reward, 1, "chain reward")
        if transition.shape != (reward.size, reward.size):
            raise InvalidModelError(
                f"chain transition {transition.shape} does not match reward length {reward.size}")
        check_simplex_rows(transition, "chain transition",
                           ToleranceDefaults.defaults["stochastic_rows"])
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "reward", reward)

    @property
    def num_states(self) -> int:
        return self.reward.size


@dataclass(frozen=True)
class RegimeSpec:
    """
    Recipe for a randomly drawn MDP whose behavior chain follows a regime.

    Attributes:
        regime: Registered regime name (see treemax.utils.regimes).
        mix: Weight epsilon of the uniform matrix mixed into the base.
        num_states: S.
        num_actions: A.
        discount: gamma of the generated MDP.
        reward_mode: "state", "state_action" or "constant".
        constant_reward: Reward used when reward_mode is "constant".
    """
    regime: str
    mix: float = 0.0
    num_states: int = 5
    num_actions: int = 3
    discount: float = 0.9
    reward_mode: str = "state"
    constant_reward: float = 0.5


@dataclass(frozen=True)
class SpectralReport:
    eigenvalue_moduli: np.ndarray
    lambda2_modulus: float
    mixing_flag: bool


@dataclass(frozen=True)
class TreePolicyConfig:
    """
    A SoftTreeMax policy: variant, depth d, inverse temperature beta,
    state score Theta and behavior policy pi_b.
    """
    variant: Variant
    depth: int
    beta: float
    theta: np.ndarray
    behavior: StationaryPolicy

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", Variant(self.variant))
        theta = _frozen_array(self.theta, 1, "theta")
        if int(self.depth) != self.depth or self.depth < 0:
            raise InvalidModelError(f"depth must be a non-negative integer, got {self.depth}")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise InvalidModelError(f"beta must be finite and positive, got {self.beta}")
        if not np.all(np.isfinite(theta)):
            raise InvalidModelError("theta must be finite", _first_index(~np.isfinite(theta)))
        if theta.size != self.behavior.num_states:
            raise InvalidModelError(
                f"theta has {theta.size} entries but the behavior policy covers "
                f"{self.behavior.num_states} states")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "depth", int(self.depth))
        object.__setattr__(self, "beta", float(self.beta))

    def with_depth(self, depth: int) -> "TreePolicyConfig":
        return TreePolicyConfig(self.variant, depth, self.beta, self.theta, self.behavior)

    def with_theta(self, theta: np.ndarray) -> "TreePolicyConfig":
        return TreePolicyConfig(self.variant, self.depth, self.beta, theta, self.behavior)


@dataclass(frozen=True)
class TreePolicyDistribution:
    root_state: int
    probs: np.ndarray
    log_partition: float


@dataclass(frozen=True)
class CumulantMatrix:
    """
    Expected discounted reward of the first d steps per root action.

    Every column of the A x S matrix is the same A-vector, so only that
    vector is stored; `broadcast` gives the A x S view.
    """
    values: np.ndarray

    def broadcast(self, num_states: int) -> np.ndarray:
        return np.repeat(self.values[:, None], num_states, axis=1)


@dataclass(frozen=True)
class ExponentMatrix:
    """
    E_{s,d} together with its row-stochastic factorization

        E_{s,d} = P_s D(M_1) B_1 ... B_{d-1},   M_1 = exp(log_scale) * scale_vector.

    Attributes:
        values: Reconstructed E_{s,d} (A x S). May overflow for very large beta;
            the policy and gradient code only use the factors.
        factors: B_1 ... B_{d-1}, each S x S and row-stochastic.
        scale_vector: M_1 divided by its largest entry.
        log_scale: log of the largest entry of M_1.
        root_rows: P_s.
        product: B_1 ... B_{d-1} (identity for d = 1).
    """
    values: np.ndarray
    factors: List[np.ndarray]
    scale_vector: np.ndarray
    log_scale: float
    root_rows: np.ndarray
    product: np.ndarray

    @property
    def log_scale_vector(self) -> np.ndarray:
        """log M_1, finite even when M_1 itself would overflow."""
        with np.errstate(divide="ignore"):
            return np.log(self.scale_vector) + self.log_scale


@dataclass(frozen=True)
class GradientMatrix:
    """
    d log pi(a|s) / d theta(s^k) as an A x S matrix for one root state.

    `degenerate` marks the depth-0 case where the policy ignores theta.
    """
    root_state: int
    values: np.ndarray
    degenerate: bool = False


@dataclass(frozen=True)
class GradientNormBounds:
    frobenius: float
    lower: float
    upper: float
    lambda2_modulus: float
    complex_lambda2: bool
    mixing: bool


@dataclass
class VarianceReport:
    """One row of a depth sweep."""
    depth: int
    exact_variance: float
    lemma1_bound: float
    theorem_bound: float
    lambda2: float
    variant: Variant
    normalization: float = float("nan")
    normalized_variance: float = float("nan")
    normalized_model: float = float("nan")


@dataclass(frozen=True)
class ExpansionNode:
    """
    One node of the breadth-first expansion.

    Attributes:
        state: Environment state (hashable).
        cumulative_reward: Sum of gamma^t r_t along the path.
        root_action: Action taken at the root.
        weight: Probability of the path under uniform expansion.
        level: Number of steps taken from the root.
        terminal: Whether the path ended in a terminal state.
        logit: cumulative_reward + gamma^level * theta(state).
    """
    state: object
    cumulative_reward: float
    root_action: int
    weight: float
    level: int
    terminal: bool
    logit: float


@dataclass
class ExpansionTree:
    root_state: object
    levels: List[List[ExpansionNode]]
    depth: int
    width_limit: Optional[int]
    discount: float
    num_actions: int

    @property
    def leaves(self) -> List[ExpansionNode]:
        return self.levels[-1]


@dataclass(frozen=True)
class TreeActionDistribution:
    """Root-action distribution of an expansion; `missing_actions` lost all leaves."""
    probs: np.ndarray
    logits: np.ndarray
    missing_actions: tuple = ()


@dataclass(frozen=True)
class TrainRecord:
    iteration: int
    mean_return: float
    empirical_grad_variance: float
    policy_entropy: float
    wall_ms: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class GradcheckFailure:
    """A finite-difference mismatch, localized to one gradient entry."""
    instance_seed: int
    variant: Variant
    root_state: int
    entry: tuple
    analytic: float
    numeric: float
    relative_error: float


@dataclass
class GenMdpConfig:
    regime: str = "random"
    mix: Optional[float] = None
    num_states: int = 5
    num_actions: int = 3
    gamma: float = 0.9
    reward_mode: str = "state"
    seed: int = 0
    output: str = "mdp.json"


@dataclass
class SweepConfig:
    """
    A depth sweep over regimes and seeds, or over MDP files when
    `mdp_files` is non-empty.
    """
    regimes: List[str] = field(default_factory=lambda: list(SweepDefaults.defaults["regimes"]))
    mdp_files: List[str] = field(default_factory=list)
    mix: Optional[float] = None
    num_states: int = SweepDefaults.defaults["num_states"]
    num_actions: int = SweepDefaults.defaults["num_actions"]
    beta: float = SweepDefaults.defaults["beta"]
    gamma: float = SweepDefaults.defaults["gamma"]
    variant: str = SweepDefaults.defaults["variant"]
    min_depth: int = SweepDefaults.defaults["min_depth"]
    max_depth: int = SweepDefaults.defaults["max_depth"]
    num_seeds: int = SweepDefaults.defaults["num_seeds"]
    seed: int = SweepDefaults.defaults["seed"]
    reward_mode: str = SweepDefaults.defaults["reward_mode"]
    theta_mode: str = SweepDefaults.defaults["theta_mode"]
    jobs: Optional[int] = None
    output: str = "sweep.csv"
    svg: Optional[str] = None

    @property
    def depths(self) -> List[int]:
        return list(range(self.min_depth, self.max_depth + 1))


@dataclass
class GradcheckConfig:
    instances: int = GradcheckDefaults.defaults["instances"]
    tolerance: float = GradcheckDefaults.defaults["tolerance"]
    step: float = GradcheckDefaults.defaults["step"]
    seed: int = GradcheckDefaults.defaults["seed"]
    inject_sign_flip: bool = False


@dataclass
class TrainConfig:
    """
    Hyperparameters of one training run. depth 0 trains a flat softmax over
    a state-action table; width 0 disables pruning.
    """
    env: str = TrainerDefaults.defaults["env"]
    env_size: Optional[int] = None
    depth: int = TrainerDefaults.defaults["depth"]
    width: int = TrainerDefaults.defaults["width"]
    beta: float = TrainerDefaults.defaults["beta"]
    gamma: float = TrainerDefaults.defaults["gamma"]
    learning_rate: float = TrainerDefaults.defaults["learning_rate"]
    batch_size: int = TrainerDefaults.defaults["batch_size"]
    iterations: int = TrainerDefaults.defaults["iterations"]
    max_episode_steps: int = TrainerDefaults.defaults["max_episode_steps"]
    variant: str = TrainerDefaults.defaults["variant"]
    seed: int = TrainerDefaults.defaults["seed"]
    baseline: bool = False
    wall_clock: bool = False
    output: str = "train.csv"

    def validate(self) -> None:
        if self.depth < 0:
            raise InvalidModelError(f"depth must be non-negative, got {self.depth}")
        if self.width < 0:
            raise InvalidModelError(f"width must be non-negative, got {self.width}")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise InvalidModelError(f"beta must be finite and positive, got {self.beta}")
        if not 0.0 < self.gamma < 1.0:
            raise InvalidModelError(f"gamma must lie strictly inside (0, 1), got {self.gamma}")
        if self.learning_rate < 0:
            raise InvalidModelError(f"learning rate must be non-negative, got {self.learning_rate}")
        if self.batch_size < 2:
            raise InvalidModelError(
                f"batch size must be at least 2 to estimate a variance, got {self.batch_size}")
        if self.iterations < 1 or self.max_episode_steps < 1:
            raise InvalidModelError("iterations and max_episode_steps must be positive")
        Variant(self.variant)

    def baseline_config(self) -> "TrainConfig":
        """The matched flat-softmax run."""
        return replace(self, depth=0, width=0, baseline=False)


@dataclass
class AnalyzeConfig:
    mdp_file: str = "mdp.json"
    depth: int = 2
    beta: float = 1.0
    variant: str = "C"
    seed: int = 0
    output: Optional[str] = None
