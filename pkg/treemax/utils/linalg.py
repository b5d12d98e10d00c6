"""Dense linear-algebra helpers shared by the MDP solvers and the spectral tools."""
import logging
from typing import Tuple

import numpy as np
import scipy.linalg

from treemax.core.defaults import ToleranceDefaults
from treemax.core.errors import SolverError

logger = logging.getLogger(__name__)


def clamp_renormalize(matrix: np.ndarray) -> np.ndarray:
    """
    Zero out tiny negatives left by floating-point mixtures and renormalize
    every row along the last axis.
    """
    clamp = ToleranceDefaults.defaults["clamp"]
    matrix = np.array(matrix, dtype=float)
    if np.any(matrix < -clamp):
        raise SolverError(f"negative probability {matrix.min():.3e} below clamp {clamp:g}")
    matrix[matrix < 0] = 0.0
    return matrix / matrix.sum(axis=-1, keepdims=True)


def _order_by_modulus(eigenvalues: np.ndarray) -> np.ndarray:
    # descending modulus; among equal moduli the eigenvalue closest to 1 first
    moduli = np.round(np.abs(eigenvalues), 12)
    closeness = np.abs(eigenvalues - 1.0)
    return np.lexsort((closeness, -moduli))


def eigenvalue_moduli(matrix: np.ndarray) -> np.ndarray:
    """Moduli of all eigenvalues of a square matrix, sorted descending."""
    try:
        eigenvalues = scipy.linalg.eigvals(matrix, check_finite=True)
    except (scipy.linalg.LinAlgError, ValueError) as error:
        raise SolverError(f"eigenvalue solver did not converge: {error}") from error
    return np.abs(eigenvalues[_order_by_modulus(eigenvalues)])


def sorted_eigenpairs(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigenvalues and unit-norm right eigenvectors ordered like `eigenvalue_moduli`.

    Returns:
        tuple: (eigenvalues, vectors) with vectors[:, i] paired with eigenvalues[i].
    """
    try:
        eigenvalues, vectors = scipy.linalg.eig(matrix)
    except (scipy.linalg.LinAlgError, ValueError) as error:
        raise SolverError(f"eigen-decomposition did not converge: {error}") from error
    order = _order_by_modulus(eigenvalues)
    vectors = vectors[:, order]
    return eigenvalues[order], vectors / np.linalg.norm(vectors, axis=0, keepdims=True)


def solve_stationary(matrix: np.ndarray) -> np.ndarray:
    """
    Solve mu^T P = mu^T with sum(mu) = 1 by replacing one equation of
    (P^T - I) mu = 0 with the normalization row.

    The caller is responsible for checking that the chain is mixing.
    """
    num_states = matrix.shape[0]
    system = matrix.T - np.eye(num_states)
    system[-1, :] = 1.0
    rhs = np.zeros(num_states)
    rhs[-1] = 1.0
    try:
        mu = scipy.linalg.solve(system, rhs)
    except (scipy.linalg.LinAlgError, ValueError) as error:
        raise SolverError(f"stationary system is singular: {error}") from error

    if mu.min() < -ToleranceDefaults.defaults["residual"]:
        raise SolverError(f"stationary vector has a negative entry {mu.min():.3e}")
    mu = np.maximum(mu, 0.0)
    mu = mu / mu.sum()
    residual = np.max(np.abs(mu @ matrix - mu))
    if residual > ToleranceDefaults.defaults["residual"]:
        raise SolverError(f"stationary residual {residual:.3e} exceeds tolerance")
    return mu


def rank_one_remainder_norm(matrix: np.ndarray, mu: np.ndarray) -> float:
    """Spectral norm of matrix - 1 mu^T."""
    return float(np.linalg.norm(matrix - np.outer(np.ones(matrix.shape[0]), mu), 2))
