import logging
import time
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import softmax

from treemax.core.data_classes import TrainConfig, TrainRecord, Variant
from treemax.core.defaults import TrainerDefaults
from treemax.core.errors import DivergenceError
from treemax.trainer.environments import SimEnvironment, make_environment
from treemax.trainer.expansion import expand, tree_policy_from_expansion, tree_score_gradient

logger = logging.getLogger(__name__)


class TrainWorker:
    """
    REINFORCE on a tabular score with a SoftTreeMax (or flat softmax) policy.

    Every iteration samples a batch of episodes with the current policy,
    ascends the batch mean of sum_t grad log pi(a_t|s_t) G_t with G_t the
    discounted return-to-go, and records one TrainRecord.

    Attributes:
        env (SimEnvironment): Deterministic environment.
        config (TrainConfig): Hyperparameters.
        theta (np.ndarray): Score per state (depth >= 1) or per state-action
            pair (depth 0, the flat softmax baseline).
        records (list): TrainRecords produced so far.
        running (bool): Cleared by stop() to end the loop after the current
            iteration.
    """

    def __init__(self, env: SimEnvironment, config: TrainConfig) -> None:
        config.validate()
        self.env = env
        self.config = config
        self.variant = Variant(config.variant)
        self.rng = np.random.default_rng(config.seed)
        if config.depth == 0:
            self.theta = np.zeros((env.num_states, env.num_actions))
        else:
            self.theta = np.zeros(env.num_states)
        self.records: List[TrainRecord] = []
        self.running = False

    def _state_policy(self, state) -> Tuple[np.ndarray, np.ndarray]:
        """
        Returns:
            tuple: (action probabilities, gradient of log pi(a|state) with
                respect to theta, one slice per action).
        """
        beta = self.config.beta
        if self.config.depth == 0:
            row = self.env.state_index(state)
            probs = softmax(beta * self.theta[row])
            gradients = np.zeros((self.env.num_actions,) + self.theta.shape)
            gradients[:, row, :] = beta * (np.eye(self.env.num_actions) - probs[None, :])
            return probs, gradients

        tree = expand(self.env, state, self.config.depth, self.config.width,
                      self.theta, self.config.gamma)
        distribution = tree_policy_from_expansion(tree, beta, self.variant)
        gradients = tree_score_gradient(self.env, tree, distribution, beta, self.variant)
        return distribution.probs, gradients

    def policy_table(self) -> Dict[object, Tuple[np.ndarray, np.ndarray]]:
        """Policy and score gradients of every non-terminal state for the current theta."""
        return {state: self._state_policy(state)
                for state in self.env.states() if not self.env.is_terminal(state)}

    def _rollout(self, table: dict) -> Tuple[np.ndarray, float]:
        """One episode; returns (gradient estimate, discounted return)."""
        state = self.env.initial_state()
        visits, rewards = [], []
        for _ in range(self.config.max_episode_steps):
            probs, _ = table[state]
            action = int(self.rng.choice(len(probs), p=probs))
            next_state, reward, terminal = self.env.step(state, action)
            visits.append((state, action))
            rewards.append(reward)
            state = next_state
            if terminal:
                break

        returns_to_go = np.zeros(len(rewards))
        running_return = 0.0
        for step in reversed(range(len(rewards))):
            running_return = rewards[step] + self.config.gamma * running_return
            returns_to_go[step] = running_return

        gradient = np.zeros(self.theta.shape)
        for (visited, action), return_to_go in zip(visits, returns_to_go):
            gradient += table[visited][1][action] * return_to_go
        return gradient.ravel(), float(returns_to_go[0]) if len(rewards) else 0.0

    @staticmethod
    def _mean_entropy(table: dict) -> float:
        entropies = []
        for probs, _ in table.values():
            positive = probs[probs > 0]
            entropies.append(float(-np.sum(positive * np.log(positive))))
        return float(np.mean(entropies))

    def step(self, iteration: int) -> TrainRecord:
        """Run one batch and update theta."""
        start_time = time.perf_counter()
        table = self.policy_table()
        episodes = [self._rollout(table) for _ in range(self.config.batch_size)]
        gradients = np.vstack([gradient for gradient, _ in episodes])
        returns = np.array([episode_return for _, episode_return in episodes])

        # trace of the sample covariance of per-episode gradients
        grad_variance = float(np.sum(np.var(gradients, axis=0, ddof=1)))
        self.theta = self.theta + self.config.learning_rate * gradients.mean(axis=0).reshape(self.theta.shape)

        theta_norm = float(np.max(np.abs(self.theta)))
        if not np.isfinite(theta_norm) or theta_norm > TrainerDefaults.DIVERGENCE_LIMIT:
            raise DivergenceError(iteration, theta_norm)

        return TrainRecord(iteration=iteration,
                           mean_return=float(returns.mean()),
                           empirical_grad_variance=grad_variance,
                           policy_entropy=self._mean_entropy(table),
                           wall_ms=(time.perf_counter() - start_time) * 1000.0)

    def run(self) -> List[TrainRecord]:
        """
        Train for config.iterations iterations, or until stop() is called.

        Raises:
            DivergenceError: If max |theta| exceeds the divergence guard;
                `records` keeps every completed iteration.
        """
        self.running = True
        try:
            for iteration in range(self.config.iterations):
                if not self.running:
                    logger.info("training stopped after %d iterations", iteration)
                    break
                self.records.append(self.step(iteration))
        finally:
            self.running = False
        return self.records

    def stop(self) -> None:
        self.running = False


def build_environment(config: TrainConfig) -> SimEnvironment:
    if config.env_size is None:
        return make_environment(config.env)
    size_argument = "length" if config.env.casefold() == "chain" else "size"
    return make_environment(config.env, **{size_argument: config.env_size})


def train(config: TrainConfig, env: Optional[SimEnvironment] = None) -> List[TrainRecord]:
    """Build the environment named in `config` (unless given) and train."""
    env = env or build_environment(config)
    logger.info("training on %s: depth %d, width %d, variant %s, seed %d",
                env.name, config.depth, config.width, config.variant, config.seed)
    return TrainWorker(env, config).run()
