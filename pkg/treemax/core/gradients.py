"""
Analytic score gradients of the SoftTreeMax policies with respect to the
state score Theta, their norm bounds, and a finite-difference harness.
"""
import logging
from typing import Callable, List, Optional

import numpy as np
from scipy.special import softmax

from treemax.core.data_classes import (
    GradcheckFailure, GradientMatrix, GradientNormBounds, Mdp, RegimeSpec,
    TreePolicyConfig, Variant
)
from treemax.core.defaults import GradcheckDefaults
from treemax.core.errors import InvalidModelError
from treemax.core.mdp import generate_mdp
from treemax.core.softtreemax import (
    behavior_chain, direct_exponent, e_logits, leaf_weights, policy_c, policy_distribution
)
from treemax.core.spectral import is_mixing
from treemax.utils.linalg import sorted_eigenpairs

logger = logging.getLogger(__name__)


def _zero_gradient(mdp: Mdp, root: int) -> GradientMatrix:
    return GradientMatrix(root, np.zeros((mdp.num_actions, mdp.num_states)), degenerate=True)


def _centered(probs: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """[I - 1 pi^T] matrix."""
    return matrix - probs @ matrix


def grad_c(mdp: Mdp, config: TreePolicyConfig, root: int) -> GradientMatrix:
    """
    beta gamma^d [I - 1 pi^T] P_s (P^pi_b)^(d-1).

    At depth 0 the policy is uniform whatever Theta is, so the zero matrix is
    returned with `degenerate` set.
    """
    if config.depth == 0:
        return _zero_gradient(mdp, root)
    probs = policy_c(mdp, config, root).probs
    weights = leaf_weights(mdp, config, root)
    scale = config.beta * mdp.discount ** config.depth
    return GradientMatrix(root, scale * _centered(probs, weights))


def grad_e(mdp: Mdp, config: TreePolicyConfig, root: int, direct: bool = False) -> GradientMatrix:
    """
    beta gamma^d [I - 1 pi^T] H where H[a, k] is the share of leaf k in
    E_{s,d}[a, :] exp(beta gamma^d Theta), i.e.
    D(pi)^-1 E D(exp(beta gamma^d Theta)) / (1^T E exp(beta gamma^d Theta)).

    Args:
        direct (bool): Use the unstabilized product for E_{s,d}. Only safe
            for small beta; kept for cross-checking.
    """
    if config.depth == 0:
        return _zero_gradient(mdp, root)

    scale = config.beta * mdp.discount ** config.depth
    if direct:
        exponent = direct_exponent(mdp, config, root)
        unnormalized = exponent * np.exp(scale * config.theta)[None, :]
        totals = unnormalized.sum(axis=1)
        probs = totals / totals.sum()
        shares = unnormalized / totals[:, None]
    else:
        logits, joint = e_logits(mdp, config, root)
        probs = softmax(logits)
        shares = np.exp(joint - logits[:, None])

    return GradientMatrix(root, scale * _centered(probs, shares))


def score_gradient(mdp: Mdp, config: TreePolicyConfig, root: int) -> GradientMatrix:
    if config.variant is Variant.C:
        return grad_c(mdp, config, root)
    return grad_e(mdp, config, root)


def log_policy(mdp: Mdp, config: TreePolicyConfig, root: int) -> np.ndarray:
    return np.log(policy_distribution(mdp, config, root).probs)


def finite_difference_gradient(mdp: Mdp,
                               config: TreePolicyConfig,
                               root: int,
                               step: float = GradcheckDefaults.defaults["step"]) -> np.ndarray:
    """
    Central differences of log pi(.|root) with respect to each theta(s^k).

    Returns:
        np.ndarray: A x S matrix comparable to GradientMatrix.values.
    """
    numeric = np.zeros((mdp.num_actions, mdp.num_states))
    for state in range(mdp.num_states):
        offset = np.zeros(mdp.num_states)
        offset[state] = step
        upper = log_policy(mdp, config.with_theta(config.theta + offset), root)
        lower = log_policy(mdp, config.with_theta(config.theta - offset), root)
        numeric[:, state] = (upper - lower) / (2.0 * step)
    return numeric


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """|analytic - numeric| / max(1, |analytic|), entrywise."""
    return np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))


def grad_norm_bounds(mdp: Mdp, config: TreePolicyConfig, root: int) -> GradientNormBounds:
    """
    Frobenius norm of the C gradient with the eigenvector lower bound and
    the closed-form upper bound:

        lower = beta gamma^d |lambda_2|^(d-1) ||[I - 1 pi^T] P_s u||
        upper = beta gamma^d |lambda_2|^(d-1) (S - 1) sqrt(2A) sqrt(A)

    with u the unit right eigenvector of lambda_2. For a complex lambda_2 the
    norm is taken over the real invariant subspace spanned by (Re u, Im u),
    scaled to unit Frobenius norm:
    ||M u||^2 = ||M Re u||^2 + ||M Im u||^2 for real M. `complex_lambda2` is
    set in that case. Non-mixing chains are allowed and reported through
    `mixing`.
    """
    if config.variant is not Variant.C:
        raise InvalidModelError("gradient norm bounds are defined for variant C")
    if config.depth < 1:
        raise InvalidModelError("gradient norm bounds need depth >= 1")

    gradient = grad_c(mdp, config, root)
    probs = policy_c(mdp, config, root).probs
    eigenvalues, vectors = sorted_eigenpairs(behavior_chain(mdp, config).transition)

    num_states, num_actions = mdp.num_states, mdp.num_actions
    if num_states > 1:
        lambda2 = eigenvalues[1]
        vector = vectors[:, 1]
    else:
        lambda2 = 0.0
        vector = np.zeros(1)
    modulus = float(np.abs(lambda2))
    complex_lambda2 = bool(abs(np.imag(lambda2)) > 1e-12)
    if complex_lambda2:
        logger.info("lambda_2 = %s is complex; lower bound uses its real invariant subspace", lambda2)

    basis = np.column_stack([np.real(vector), np.imag(vector)])
    basis = basis / max(float(np.linalg.norm(basis)), 1e-300)

    scale = config.beta * mdp.discount ** config.depth * modulus ** (config.depth - 1)
    projected = _centered(probs, mdp.root_transitions(root) @ basis)
    lower = scale * float(np.linalg.norm(projected))
    upper = scale * (num_states - 1) * np.sqrt(2.0 * num_actions) * np.sqrt(num_actions)

    return GradientNormBounds(frobenius=float(np.linalg.norm(gradient.values)),
                              lower=lower, upper=float(upper), lambda2_modulus=modulus,
                              complex_lambda2=complex_lambda2, mixing=is_mixing(modulus))


def _gradcheck_instance(instance_seed: int, defaults: dict):
    rng = np.random.default_rng(instance_seed)
    num_states = int(rng.integers(2, defaults["max_states"] + 1))
    num_actions = int(rng.integers(2, defaults["max_actions"] + 1))
    spec = RegimeSpec("random", mix=0.1, num_states=num_states, num_actions=num_actions,
                      discount=0.9, reward_mode="state")
    mdp, behavior = generate_mdp(spec, instance_seed)
    config = TreePolicyConfig(variant=Variant.C,
                              depth=int(rng.integers(1, defaults["max_depth"] + 1)),
                              beta=float(rng.uniform(0.3, 1.5)),
                              theta=rng.standard_normal(num_states),
                              behavior=behavior)
    root = int(rng.integers(num_states))
    return mdp, config, root


def run_gradcheck(instances: int = GradcheckDefaults.defaults["instances"],
                  tolerance: float = GradcheckDefaults.defaults["tolerance"],
                  step: float = GradcheckDefaults.defaults["step"],
                  seed: int = GradcheckDefaults.defaults["seed"],
                  variants: Optional[List[Variant]] = None,
                  inject_sign_flip: bool = False) -> List[GradcheckFailure]:
    """
    Compare analytic and finite-difference gradients on random instances.

    Args:
        instances (int): Number of (MDP, config, root) triples per variant.
        tolerance (float): Largest accepted relative error.
        step (float): Central-difference step.
        seed (int): Instance i is drawn from seed + i.
        variants (list): Variants to check, both by default.
        inject_sign_flip (bool): Negate the analytic C gradient, to show
            that the harness catches a wrong gradient.

    Returns:
        list: One GradcheckFailure per failing (instance, variant), holding
            the worst entry.
    """
    variants = variants or [Variant.C, Variant.E]
    analytic_for = {Variant.C: grad_c, Variant.E: grad_e}
    if inject_sign_flip:
        logger.warning("gradcheck running with the sign of the C gradient flipped")
        analytic_for[Variant.C] = _sign_flipped(grad_c)

    failures = []
    for index in range(instances):
        instance_seed = seed + index
        mdp, config, root = _gradcheck_instance(instance_seed, GradcheckDefaults.defaults)
        for variant in variants:
            variant_config = TreePolicyConfig(variant, config.depth, config.beta,
                                              config.theta, config.behavior)
            analytic = analytic_for[variant](mdp, variant_config, root).values
            numeric = finite_difference_gradient(mdp, variant_config, root, step)
            errors = relative_error(analytic, numeric)
            worst = np.unravel_index(int(np.argmax(errors)), errors.shape)
            if errors[worst] > tolerance:
                failures.append(GradcheckFailure(
                    instance_seed=instance_seed, variant=variant, root_state=root,
                    entry=tuple(int(i) for i in worst), analytic=float(analytic[worst]),
                    numeric=float(numeric[worst]), relative_error=float(errors[worst])))
                logger.info("gradcheck failure: seed %d, variant %s, entry %s",
                            instance_seed, variant.value, worst)
    return failures


def _sign_flipped(gradient: Callable[..., GradientMatrix]) -> Callable[..., GradientMatrix]:
    def flipped(mdp: Mdp, config: TreePolicyConfig, root: int) -> GradientMatrix:
        result = gradient(mdp, config, root)
        return GradientMatrix(result.root_state, -result.values, result.degenerate)
    return flipped
