from abc import ABC, abstractmethod
from typing import Dict, Hashable, List, Tuple, Type

import numpy as np

from treemax.core.data_classes import Mdp


class EnvironmentRegistry:
    """
    This class serves as a registry for the deterministic toy environments.

    Any subclasses of SimEnvironment will be registered here automatically,
    so the trainer and the command line can build them by name.
    """
    _registry = {}

    @classmethod
    def add_class(cls, new_class) -> None:
        """Add a class to the registry."""
        cls._registry[new_class.name] = new_class

    @classmethod
    def get_classes(cls) -> Dict[str, 'Type[SimEnvironment]']:
        """Return the registry."""
        return cls._registry

    @classmethod
    def get_class_names(cls) -> List[str]:
        """Return the names of environments in the registry."""
        return sorted(cls._registry)

    @classmethod
    def get_class(cls, item: str) -> 'Type[SimEnvironment]':
        """Return an uninstantiated environment class from the registry."""
        try:
            return cls._registry[item.casefold()]
        except KeyError:
            raise KeyError(f"unknown environment '{item}'; expected one of "
                           f"{cls.get_class_names()}") from None


class SimEnvironment(ABC):
    """
    Deterministic forward model that the tree expansion can clone freely.

    Concrete classes must provide `name` and implement `initial_state()`,
    `step()`, `states()`, `is_terminal()` and `num_actions`. States are
    hashable values; `state_index()` maps them onto rows of a score table.

    Stepping a terminal state keeps it in place with zero reward, which makes
    `to_mdp()` an exact tabular twin with absorbing terminals.
    """
    name = None

    def __init_subclass__(cls, **kwargs) -> None:
        """
        When a concrete class is created, add it to the EnvironmentRegistry.
        """
        super().__init_subclass__(**kwargs)
        EnvironmentRegistry.add_class(cls)

    @property
    @abstractmethod
    def num_actions(self) -> int:
        pass

    @abstractmethod
    def initial_state(self) -> Hashable:
        pass

    @abstractmethod
    def states(self) -> List[Hashable]:
        """All states, ordered by table index."""
        pass

    @abstractmethod
    def is_terminal(self, state: Hashable) -> bool:
        pass

    @abstractmethod
    def _transition(self, state: Hashable, action: int) -> Tuple[Hashable, float]:
        """Next state and reward for a non-terminal state."""
        pass

    @property
    def num_states(self) -> int:
        return len(self.states())

    def state_index(self, state: Hashable) -> int:
        return self.states().index(state)

    def step(self, state: Hashable, action: int) -> Tuple[Hashable, float, bool]:
        """
        Returns:
            tuple: (next_state, reward, terminal) for taking `action` in `state`.
        """
        if not 0 <= action < self.num_actions:
            raise ValueError(f"action {action} outside 0..{self.num_actions - 1}")
        if self.is_terminal(state):
            return state, 0.0, True
        next_state, reward = self._transition(state, action)
        return next_state, reward, self.is_terminal(next_state)

    def to_mdp(self, discount: float) -> Mdp:
        """Tabular twin: one-hot transitions, terminal states absorbing."""
        num_states = self.num_states
        transitions = np.zeros((num_states, self.num_actions, num_states))
        rewards = np.zeros((num_states, self.num_actions))
        for state in self.states():
            row = self.state_index(state)
            for action in range(self.num_actions):
                next_state, reward, _ = self.step(state, action)
                transitions[row, action, self.state_index(next_state)] = 1.0
                rewards[row, action] = reward
        return Mdp(transitions, rewards, discount)


class ChainEnvironment(SimEnvironment):
    """
    States 0..k-1 on a line; action 0 moves left (clamped at 0), action 1
    moves right. Entering the last state pays 1 and ends the episode.
    """
    name = "chain"

    def __init__(self, length: int = 5) -> None:
        if length < 2:
            raise ValueError(f"chain length must be at least 2, got {length}")
        self.length = length

    @property
    def num_actions(self) -> int:
        return 2

    def initial_state(self) -> int:
        return 0

    def states(self) -> List[int]:
        return list(range(self.length))

    def state_index(self, state: int) -> int:
        return int(state)

    def is_terminal(self, state: int) -> bool:
        return state == self.length - 1

    def _transition(self, state: int, action: int) -> Tuple[int, float]:
        next_state = max(state - 1, 0) if action == 0 else state + 1
        return next_state, 1.0 if self.is_terminal(next_state) else 0.0

    def optimal_return(self, discount: float) -> float:
        """Discounted return of walking straight right from the start."""
        return discount ** (self.length - 2)


class GridWorldEnvironment(SimEnvironment):
    """
    size x size grid starting in the top-left corner; the bottom-right corner
    pays 1 on entry and is terminal. Moves into a wall leave the agent in place.
    """
    name = "grid"
    # up, down, left, right
    MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))

    def __init__(self, size: int = 4) -> None:
        if size < 2:
            raise ValueError(f"grid size must be at least 2, got {size}")
        self.size = size

    @property
    def num_actions(self) -> int:
        return len(self.MOVES)

    def initial_state(self) -> Tuple[int, int]:
        return (0, 0)

    def states(self) -> List[Tuple[int, int]]:
        return [(row, column) for row in range(self.size) for column in range(self.size)]

    def state_index(self, state: Tuple[int, int]) -> int:
        return state[0] * self.size + state[1]

    def is_terminal(self, state: Tuple[int, int]) -> bool:
        return state == (self.size - 1, self.size - 1)

    def _transition(self, state: Tuple[int, int], action: int) -> Tuple[Tuple[int, int], float]:
        row_move, column_move = self.MOVES[action]
        row = min(max(state[0] + row_move, 0), self.size - 1)
        column = min(max(state[1] + column_move, 0), self.size - 1)
        next_state = (row, column)
        return next_state, 1.0 if self.is_terminal(next_state) else 0.0

    def optimal_return(self, discount: float) -> float:
        return discount ** (2 * (self.size - 1) - 1)


def make_environment(name: str, **kwargs) -> SimEnvironment:
    return EnvironmentRegistry.get_class(name)(**kwargs)
