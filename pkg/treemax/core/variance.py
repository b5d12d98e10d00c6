"""
Exact policy-gradient variance of SoftTreeMax policies and its bounds.

The variance is the total variance (trace of the covariance) of
X(s, a) = grad log pi(a|s) Q(s, a) with s drawn from the stationary
distribution of the policy's own chain and a from the policy.
"""
import logging
from typing import List, Sequence, Tuple

import numpy as np

from treemax.core.data_classes import Mdp, TreePolicyConfig, VarianceReport, Variant
from treemax.core.defaults import ToleranceDefaults
from treemax.core.errors import InvalidModelError, NumericalError
from treemax.core.gradients import score_gradient
from treemax.core.mdp import induce_chain, solve_q, stationary_distribution
from treemax.core.softtreemax import behavior_chain, policy_matrix
from treemax.core.spectral import analyze_spectrum

logger = logging.getLogger(__name__)


def _score_terms(mdp: Mdp, config: TreePolicyConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Returns:
        tuple: (mu, policy probs, gradients [s, a, k], q [s, a]).
    """
    policy = policy_matrix(mdp, config)
    mu = stationary_distribution(induce_chain(mdp, policy))
    q = solve_q(mdp, policy)
    gradients = np.stack([score_gradient(mdp, config, state).values
                          for state in range(mdp.num_states)])
    return mu, policy.probs, gradients, q


def behavior_lambda2(mdp: Mdp, config: TreePolicyConfig) -> float:
    return analyze_spectrum(behavior_chain(mdp, config)).lambda2_modulus


def closed_form_bound(num_states: int, num_actions: int, beta: float,
                      discount: float, depth: int, lambda2: float) -> float:
    """2 A^2 S^2 beta^2 / (1 - gamma)^2 gamma^(2d) |lambda_2|^(2(d-1))."""
    if depth == 0:
        # the score gradient vanishes at depth 0
        return 0.0
    constant = 2.0 * num_actions ** 2 * num_states ** 2 * beta ** 2 / (1.0 - discount) ** 2
    return float(constant * discount ** (2 * depth) * abs(lambda2) ** (2 * (depth - 1)))


def theorem1_bound(mdp: Mdp, config: TreePolicyConfig) -> float:
    """
    Closed-form variance bound for variant C. For variant E the same
    expression is only a plug-in curve.
    """
    return closed_form_bound(mdp.num_states, mdp.num_actions, config.beta,
                             mdp.discount, config.depth, behavior_lambda2(mdp, config))


def lemma1_bound(mdp: Mdp, config: TreePolicyConfig) -> float:
    """max Q^2 * max_s ||grad log pi(.|s)||_F^2."""
    _, _, gradients, q = _score_terms(mdp, config)
    return float(np.max(q ** 2) * np.max(np.sum(gradients ** 2, axis=(1, 2))))


def _clamp_variance(value: float) -> float:
    if value >= 0.0:
        return value
    if value >= -ToleranceDefaults.defaults["variance_clamp"]:
        return 0.0
    raise NumericalError(f"variance came out negative ({value:.3e}) beyond the clamp")


def exact_pg_variance(mdp: Mdp, config: TreePolicyConfig) -> VarianceReport:
    """
    Var = sum_s mu(s) sum_a pi(a|s) ||X(s, a)||^2 - ||sum_s mu(s) sum_a pi(a|s) X(s, a)||^2

    Raises:
        NonMixingChainError: If the policy's induced chain is not mixing.
        NumericalError: If cancellation leaves a clearly negative variance.
    """
    mu, probs, gradients, q = _score_terms(mdp, config)
    samples = gradients * q[:, :, None]
    weights = mu[:, None] * probs

    second_moment = float(np.sum(weights * np.sum(samples ** 2, axis=2)))
    mean = np.einsum("sa,sak->k", weights, samples)
    variance = _clamp_variance(second_moment - float(mean @ mean))

    lemma1 = float(np.max(q ** 2) * np.max(np.sum(gradients ** 2, axis=(1, 2))))
    lambda2 = behavior_lambda2(mdp, config)
    theorem = closed_form_bound(mdp.num_states, mdp.num_actions, config.beta,
                                mdp.discount, config.depth, lambda2)

    return VarianceReport(depth=config.depth, exact_variance=variance, lemma1_bound=lemma1,
                          theorem_bound=theorem, lambda2=lambda2, variant=config.variant)


def monte_carlo_pg_variance(mdp: Mdp,
                            config: TreePolicyConfig,
                            samples: int,
                            rng: np.random.Generator) -> Tuple[float, float]:
    """
    Sample estimate of the variance from s ~ mu, a ~ pi(.|s).

    Returns:
        tuple: (estimate, standard_error).
    """
    if samples < 2:
        raise InvalidModelError(f"need at least 2 samples, got {samples}")
    mu, probs, gradients, q = _score_terms(mdp, config)
    joint = (mu[:, None] * probs).ravel()
    draws = rng.choice(joint.size, size=samples, p=joint / joint.sum())
    states, actions = np.divmod(draws, mdp.num_actions)

    values = gradients[states, actions] * q[states, actions][:, None]
    deviations = np.sum((values - values.mean(axis=0)) ** 2, axis=1)
    estimate = float(deviations.sum() / (samples - 1))
    standard_error = float(deviations.std(ddof=1) / np.sqrt(samples))
    return estimate, standard_error


def depth_sweep(mdp: Mdp, base_config: TreePolicyConfig, depths: Sequence[int]) -> List[VarianceReport]:
    """
    One VarianceReport per depth, normalized at the first depth d0:

        normalized_variance = exact(d) / exact(d0)
        normalized_model = (gamma |lambda_2|)^(2 (d - d0))

    Raises:
        InvalidModelError: If depths is empty or not strictly ascending.
    """
    depths = [int(depth) for depth in depths]
    if not depths:
        raise InvalidModelError("depth sweep needs at least one depth")
    if any(later <= earlier for earlier, later in zip(depths, depths[1:])):
        raise InvalidModelError(f"depths must be strictly ascending, got {depths}")

    reports = [exact_pg_variance(mdp, base_config.with_depth(depth)) for depth in depths]
    first = reports[0]
    normalization = first.exact_variance
    if normalization <= 0.0:
        logger.info("variance at depth %d is zero; normalized curves are undefined", first.depth)

    for report in reports:
        report.normalization = normalization
        if normalization > 0.0:
            report.normalized_variance = report.exact_variance / normalization
        report.normalized_model = float(
            (mdp.discount * report.lambda2) ** (2 * (report.depth - first.depth)))
    return reports


def conjecture_check_e(mdp: Mdp, base_config: TreePolicyConfig, depths: Sequence[int]) -> float:
    """
    Fitted per-depth variance ratio of variant E over (gamma |lambda_2|)^2.

    Returns:
        float: exp(slope of log variance vs depth) / (gamma^2 lambda_2^2), or
            nan when the ratio is undefined (zero variance or lambda_2 = 0).
    """
    if base_config.variant is not Variant.E:
        raise InvalidModelError("the conjecture check is defined for variant E")
    return conjecture_ratio(depth_sweep(mdp, base_config, depths), mdp.discount)


def conjecture_ratio(reports: List[VarianceReport], discount: float) -> float:
    """conjecture_check_e on reports that are already computed."""
    depths = [report.depth for report in reports]
    variances = np.array([report.exact_variance for report in reports])
    lambda2 = reports[0].lambda2

    if len(reports) < 2 or lambda2 == 0.0 or np.any(variances <= 0.0):
        logger.info("conjecture ratio undefined (lambda_2 = %g, min variance = %g)",
                    lambda2, variances.min())
        return float("nan")

    slope = np.polyfit(np.array(depths, dtype=float), np.log(variances), 1)[0]
    return float(np.exp(slope) / (discount ** 2 * lambda2 ** 2))
