class ToleranceDefaults:
    """Numerical tolerances shared by the solvers and the checks."""

    defaults = {
            "stochastic_rows": 1e-12,
            "factor_rows": 1e-10,
            "residual": 1e-10,
            "mixing_gap": 1e-9,
            "clamp": 1e-15,
            "variance_clamp": 1e-12,
    }


class RegimeDefaults:
    """Mixing weight toward the uniform matrix used when none is given."""

    defaults = {
            "uniform": 0.0,
            "near_uniform": 0.05,
            "random": 0.0,
            "near_permutation": 0.02,
    }
    # Dirichlet concentration of the stationary row of the near-uniform base
    NEAR_UNIFORM_CONCENTRATION = 10.0
    # Share of the feasible range the near-uniform mode amplitude may use
    NEAR_UNIFORM_AMPLITUDE = 0.6


class SweepDefaults:
    """Default parameters for depth sweeps over the three chain regimes."""

    defaults = {
            "regimes": ["near_uniform", "random", "near_permutation"],
            "num_states": 5,
            "num_actions": 3,
            "beta": 1.0,
            "gamma": 0.9,
            "variant": "E",
            "min_depth": 1,
            "max_depth": 8,
            "num_seeds": 5,
            "seed": 0,
            "reward_mode": "state",
            "theta_mode": "random",
    }


class GradcheckDefaults:
    """Default finite-difference suite."""

    defaults = {
            "instances": 50,
            "step": 1e-5,
            "tolerance": 1e-5,
            "max_states": 4,
            "max_actions": 3,
            "max_depth": 4,
            "seed": 0,
    }


class TrainerDefaults:
    """Default hyperparameters for the tree policy-gradient trainer."""

    defaults = {
            "env": "chain",
            "depth": 2,
            "width": 0,  # 0 means no pruning
            "beta": 1.0,
            "gamma": 0.9,
            "learning_rate": 0.5,
            "batch_size": 8,
            "iterations": 2000,
            "max_episode_steps": 50,
            "variant": "C",
            "seed": 0,
    }
    DIVERGENCE_LIMIT = 1e6


class CliDefaults:
    """Process-level settings for the command line."""

    JOBS_ENV_VAR = "TREEMAX_JOBS"
    SIDECAR_SUFFIX = ".meta.json"
    STATUS_PREFIX = "# status="
    SVG_HASH_SALT = "treemax"
