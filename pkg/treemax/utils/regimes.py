from abc import ABC, abstractmethod
from typing import Dict, List, Tuple, Type

import numpy as np

from treemax.core.defaults import RegimeDefaults


class RegimeRegistry:
    """
    This class serves as a registry for behavior-chain regimes.

    Any subclasses of AbstractBaseRegime will be registered here automatically.

    The registry is then used by the MDP generator and the command line to
    look regimes up by name.
    """
    _registry = {}
    _aliases = {"permutation": "near_permutation"}

    @classmethod
    def add_class(cls, new_class) -> None:
        """Add a class to the registry."""
        cls._registry[new_class.name] = new_class

    @classmethod
    def get_classes(cls) -> Dict[str, 'Type[AbstractBaseRegime]']:
        """Return the registry."""
        return cls._registry

    @classmethod
    def get_class_names(cls) -> List[str]:
        """Return the names of regimes in the registry, aliases included."""
        return sorted(list(cls._registry) + list(cls._aliases))

    @classmethod
    def canonical_name(cls, item: str) -> str:
        name = cls._aliases.get(item.casefold(), item.casefold())
        if name not in cls._registry:
            raise KeyError(f"unknown regime '{item}'; expected one of {cls.get_class_names()}")
        return name

    @classmethod
    def get_class(cls, item: str) -> 'Type[AbstractBaseRegime]':
        """Return an uninstantiated regime class from the registry."""
        return cls._registry[cls.canonical_name(item)]


class AbstractBaseRegime(ABC):
    """
    Any new regime should subclass this class.

    Concrete classes must provide `name` and implement `base_matrix()`, the
    S x S row-stochastic matrix the behavior chain is built around before the
    uniform matrix is mixed in.

    `action_kernels()` splits the mixed chain T into per-action kernels
    P(.|s, a) whose pi_b-mixture is exactly T. The default split perturbs T
    multiplicatively along random directions that cancel under pi_b, as far as
    non-negativity allows.
    """
    name = None

    def __init_subclass__(cls, **kwargs) -> None:
        """
        When a concrete class is created, add it to the RegimeRegistry.
        """
        super().__init_subclass__(**kwargs)
        RegimeRegistry.add_class(cls)

    def __init__(self, num_states: int, num_actions: int, mix: float) -> None:
        self.num_states = num_states
        self.num_actions = num_actions
        self.mix = mix

    @abstractmethod
    def base_matrix(self, rng: np.random.Generator) -> np.ndarray:
        """This method must be implemented by subclasses."""
        pass

    def mixed(self, base: np.ndarray) -> np.ndarray:
        return (1.0 - self.mix) * base + self.mix / self.num_states

    def behavior_probs(self, rng: np.random.Generator) -> np.ndarray:
        return rng.dirichlet(np.ones(self.num_actions), size=self.num_states)

    def build(self, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """
        Draw (transitions [s, a, s'], behavior probs [s, a]) for this regime.
        """
        behavior = self.behavior_probs(rng)
        chain = self.mixed(self.base_matrix(rng))
        return self.action_kernels(chain, behavior, rng), behavior

    def action_kernels(self,
                       chain: np.ndarray,
                       behavior: np.ndarray,
                       rng: np.random.Generator) -> np.ndarray:
        transitions = np.empty((self.num_states, self.num_actions, self.num_states))

        for state in range(self.num_states):
            target = chain[state]
            gains = rng.uniform(0.5, 1.5, size=(self.num_actions, self.num_states))
            proposals = target * gains
            proposals /= proposals.sum(axis=1, keepdims=True)
            directions = proposals - behavior[state] @ proposals

            # Largest step keeping target + step * direction non-negative
            shrinking = directions < 0
            if np.any(shrinking):
                limits = target[None, :].repeat(self.num_actions, 0)[shrinking] / -directions[shrinking]
                step = min(1.0, float(limits.min()))
            else:
                step = 1.0
            transitions[state] = target + step * directions
        return transitions


class UniformRegime(AbstractBaseRegime):
    name = "uniform"

    def base_matrix(self, rng: np.random.Generator) -> np.ndarray:
        return np.full((self.num_states, self.num_states), 1.0 / self.num_states)


class RandomRegime(AbstractBaseRegime):
    name = "random"

    def base_matrix(self, rng: np.random.Generator) -> np.ndarray:
        return rng.dirichlet(np.ones(self.num_states), size=self.num_states)


class NearPermutationRegime(AbstractBaseRegime):
    name = "near_permutation"

    def base_matrix(self, rng: np.random.Generator) -> np.ndarray:
        # Generator.permutation is a Fisher-Yates shuffle
        return np.eye(self.num_states)[rng.permutation(self.num_states)]


class NearUniformRegime(AbstractBaseRegime):
    """
    Chain close to the rank-one matrix 1 mu^T with a single extra real mode.

    Every action kernel row has the form mu + t u with u summing to zero, so
    the behavior chain is 1 mu^T + tau u^T and its only non-trivial eigenvalue
    is lambda_2 = u . tau. Powers of such a chain decay exactly geometrically,
    which keeps the variance curves of this regime on the model line.
    """
    name = "near_uniform"

    def base_matrix(self, rng: np.random.Generator) -> np.ndarray:
        """1 mu^T + tau u^T; the draw is kept for action_kernels()."""
        mu = rng.dirichlet(np.full(self.num_states, RegimeDefaults.NEAR_UNIFORM_CONCENTRATION))

        direction = rng.standard_normal(self.num_states)
        direction -= direction.mean()
        # |u_k| <= mu_k keeps mu + t u non-negative for |t| <= 1
        direction *= np.min(mu / np.maximum(np.abs(direction), 1e-300))

        amplitude = RegimeDefaults.NEAR_UNIFORM_AMPLITUDE
        tau = amplitude * np.sign(direction) * rng.uniform(0.5, 1.0, size=self.num_states)
        tau[tau == 0] = amplitude
        self._mode = (mu, direction, tau)
        return mu[None, :] + tau[:, None] * direction[None, :]

    def action_kernels(self,
                       chain: np.ndarray,
                       behavior: np.ndarray,
                       rng: np.random.Generator) -> np.ndarray:
        """Kernels mu + (tau_s + offset_sa) u, mixed like the chain."""
        mu, direction, tau = self._mode
        # per-action offsets that average to zero under the behavior policy
        offsets = rng.uniform(-1.0, 1.0, size=(self.num_states, self.num_actions))
        offsets -= np.sum(behavior * offsets, axis=1, keepdims=True)
        room = (1.0 - np.abs(tau))[:, None] / np.maximum(np.abs(offsets), 1e-300)
        offsets *= np.minimum(1.0, room.min(axis=1, keepdims=True))
        coefficients = tau[:, None] + offsets

        transitions = mu[None, None, :] + coefficients[:, :, None] * direction[None, None, :]
        return self.mixed(transitions)
