class TreeMaxError(Exception):
    """Base class for every error raised by treemax."""


class InvalidModelError(TreeMaxError, ValueError):
    """
    An MDP, policy or configuration violates one of its invariants.

    Attributes:
        index (tuple | None): First offending index, when there is one.
    """

    def __init__(self, message: str, index: tuple | None = None) -> None:
        if index is not None:
            message = f"{message} (first violation at index {index})"
        super().__init__(message)
        self.index = index


class DimensionMismatchError(TreeMaxError, ValueError):
    """Array shapes of two collaborating objects disagree."""


class ActionDependentRewardError(TreeMaxError, ValueError):
    """The E variant requires rewards that depend only on the state."""

    def __init__(self, state: int, message: str | None = None) -> None:
        message = message or (
            f"rewards of state {state} differ across actions; the E variant "
            "assumes the reward depends only on the state"
        )
        super().__init__(message)
        self.state = state


class NonMixingChainError(TreeMaxError, RuntimeError):
    """The induced chain is not irreducible and aperiodic (|lambda_2| ~ 1)."""

    def __init__(self, lambda2_modulus: float, what: str = "induced chain") -> None:
        super().__init__(
            f"{what} is not mixing: |lambda_2| = {lambda2_modulus:.12f}; "
            "the analysis assumes the chain is irreducible and aperiodic"
        )
        self.lambda2_modulus = lambda2_modulus


class SolverError(TreeMaxError, RuntimeError):
    """A dense linear algebra routine failed or missed its residual target."""


class NumericalError(TreeMaxError, ArithmeticError):
    """A quantity that must be non-negative came out clearly negative."""


class DivergenceError(TreeMaxError, RuntimeError):
    """Training parameters blew past the divergence guard."""

    def __init__(self, iteration: int, theta_norm: float) -> None:
        super().__init__(
            f"score table diverged at iteration {iteration}: "
            f"max |theta| = {theta_norm:.3e}"
        )
        self.iteration = iteration
        self.theta_norm = theta_norm
