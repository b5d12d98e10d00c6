"""Second-eigenvalue analysis of induced chains."""
import logging

import numpy as np

from treemax.core.data_classes import InducedChain, SpectralReport
from treemax.core.defaults import ToleranceDefaults
from treemax.core.errors import InvalidModelError, NonMixingChainError
from treemax.utils.linalg import eigenvalue_moduli, rank_one_remainder_norm, solve_stationary

logger = logging.getLogger(__name__)


def is_mixing(lambda2_modulus: float) -> bool:
    return lambda2_modulus < 1.0 - ToleranceDefaults.defaults["mixing_gap"]


def analyze_spectrum(chain: InducedChain) -> SpectralReport:
    """
    Eigenvalue moduli of P^pi, sorted descending.

    Args:
        chain (InducedChain): A row-stochastic chain.

    Returns:
        SpectralReport: moduli, |lambda_2| and whether the chain is mixing.
    """
    moduli = eigenvalue_moduli(chain.transition)
    lambda2 = float(moduli[1]) if moduli.size > 1 else 0.0
    mixing = is_mixing(lambda2)
    if not mixing:
        logger.warning("chain with %d states is not mixing (|lambda_2| = %.12f)",
                       chain.num_states, lambda2)
    return SpectralReport(eigenvalue_moduli=moduli, lambda2_modulus=lambda2, mixing_flag=mixing)


def power_remainder(chain: InducedChain, power: int) -> float:
    """
    Spectral norm of (P^pi)^(power - 1) - 1 mu^T.

    Raises:
        NonMixingChainError: If the chain has no unique limit.
        InvalidModelError: If power < 1.
    """
    if power < 1:
        raise InvalidModelError(f"power must be at least 1, got {power}")
    report = analyze_spectrum(chain)
    if not report.mixing_flag:
        raise NonMixingChainError(report.lambda2_modulus)

    transition = np.array(chain.transition)
    mu = solve_stationary(transition)
    return rank_one_remainder_norm(np.linalg.matrix_power(transition, power - 1), mu)
