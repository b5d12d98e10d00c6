"""Tests for the MDP model, solvers, generator and file format."""
import json

import numpy as np
import pytest

from treemax.core.data_classes import InducedChain, Mdp, RegimeSpec, StationaryPolicy
from treemax.core.errors import (
    ActionDependentRewardError, DimensionMismatchError, InvalidModelError, NonMixingChainError
)
from treemax.core.mdp import (
    estimate_q_by_rollouts, generate_mdp, induce_chain, load_mdp, save_mdp, solve_q,
    solve_value, stationary_distribution, state_rewards
)
from treemax.core.spectral import analyze_spectrum
from treemax.utils.regimes import RegimeRegistry


class TestMdpValidation:

    def test_rejects_rows_that_do_not_sum_to_one(self):
        transitions = np.array([[[0.5, 0.4]], [[0.0, 1.0]]])
        with pytest.raises(InvalidModelError) as error:
            Mdp(transitions, np.zeros((2, 1)), 0.9)
        assert error.value.index == (0, 0)

    def test_rejects_rewards_outside_unit_interval(self):
        transitions = np.array([[[1.0, 0.0]], [[0.0, 1.0]]])
        with pytest.raises(InvalidModelError) as error:
            Mdp(transitions, np.array([[0.5], [1.5]]), 0.9)
        assert error.value.index == (1, 0)

    @pytest.mark.parametrize("discount", [0.0, 1.0, -0.1, 1.2])
    def test_rejects_discount_outside_open_interval(self, discount):
        transitions = np.array([[[1.0]]])
        with pytest.raises(InvalidModelError):
            Mdp(transitions, np.zeros((1, 1)), discount)

    def test_rejects_non_square_transitions(self):
        with pytest.raises(InvalidModelError):
            Mdp(np.full((2, 1, 3), 1.0 / 3.0), np.zeros((2, 1)), 0.9)

    def test_arrays_are_read_only(self, two_state_chain):
        with pytest.raises(ValueError):
            two_state_chain.rewards[0, 0] = 0.5


class TestInducedChain:

    def test_rows_sum_to_one(self):
        for seed in range(100):
            spec = RegimeSpec("random", mix=0.0, num_states=4, num_actions=3)
            mdp, _ = generate_mdp(spec, seed)
            policy = StationaryPolicy(np.random.default_rng(seed).dirichlet(np.ones(3), size=4))
            chain = induce_chain(mdp, policy)
            np.testing.assert_allclose(chain.transition.sum(axis=1), 1.0, atol=1e-12)

    def test_matches_scalar_loop(self):
        spec = RegimeSpec("random", mix=0.1, num_states=3, num_actions=2, reward_mode="state_action")
        mdp, _ = generate_mdp(spec, 5)
        policy = StationaryPolicy(np.tile([0.3, 0.7], (3, 1)))
        chain = induce_chain(mdp, policy)
        for state in range(3):
            reward = 0.0
            for action in range(2):
                reward += policy.probs[state, action] * mdp.rewards[state, action]
            for target in range(3):
                expected = sum(policy.probs[state, action] * mdp.transitions[state, action, target]
                               for action in range(2))
                assert chain.transition[state, target] == pytest.approx(expected, abs=1e-12)
            assert chain.reward[state] == pytest.approx(reward, abs=1e-12)

    def test_policy_shape_mismatch(self, random_mdp):
        mdp, _ = random_mdp
        with pytest.raises(DimensionMismatchError):
            induce_chain(mdp, StationaryPolicy.uniform(mdp.num_states, mdp.num_actions + 1))


class TestSolvers:

    def test_two_state_stationary_distribution(self, two_state_chain):
        chain = induce_chain(two_state_chain, StationaryPolicy.uniform(2, 1))
        np.testing.assert_allclose(stationary_distribution(chain), [5.0 / 6.0, 1.0 / 6.0], atol=1e-12)
        assert analyze_spectrum(chain).lambda2_modulus == pytest.approx(0.4, abs=1e-12)

    def test_stationary_matches_power_iteration(self, random_mdp):
        mdp, behavior = random_mdp
        chain = induce_chain(mdp, behavior)
        mu = stationary_distribution(chain)
        np.testing.assert_allclose(mu @ chain.transition - mu, 0.0, atol=1e-10)
        limit = np.linalg.matrix_power(chain.transition, 10_000)[0]
        np.testing.assert_allclose(mu, limit, atol=1e-8)

    def test_doubly_stochastic_chain_has_uniform_limit(self):
        transition = np.array([[0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.3, 0.2, 0.5]])
        chain = InducedChain(transition, np.zeros(3))
        np.testing.assert_allclose(stationary_distribution(chain), 1.0 / 3.0, atol=1e-12)

    def test_constant_reward_value(self, random_mdp):
        mdp, behavior = random_mdp
        constant = Mdp(mdp.transitions, np.full(mdp.rewards.shape, 0.3), mdp.discount)
        np.testing.assert_allclose(solve_value(constant, behavior), 0.3 / (1.0 - mdp.discount),
                                   rtol=1e-12)

    def test_value_matches_truncated_series(self, random_mdp):
        mdp, behavior = random_mdp
        chain = induce_chain(mdp, behavior)
        series = np.zeros(mdp.num_states)
        term = np.array(chain.reward)
        for step in range(400):
            series += mdp.discount ** step * term
            term = chain.transition @ term
        np.testing.assert_allclose(solve_value(mdp, behavior), series, atol=1e-8)

    def test_q_is_at_most_the_geometric_sum(self, random_mdp):
        mdp, behavior = random_mdp
        assert solve_q(mdp, behavior).max() <= 1.0 / (1.0 - mdp.discount) + 1e-12
        best = Mdp(mdp.transitions, np.ones(mdp.rewards.shape), mdp.discount)
        np.testing.assert_allclose(solve_q(best, behavior), 1.0 / (1.0 - mdp.discount), rtol=1e-12)

    def test_value_is_bellman_fixed_point(self, random_mdp):
        mdp, behavior = random_mdp
        chain = induce_chain(mdp, behavior)
        value = solve_value(mdp, behavior)
        np.testing.assert_allclose(value, chain.reward + mdp.discount * chain.transition @ value,
                                   atol=1e-10)

    def test_q_averages_to_value(self, random_mdp):
        mdp, behavior = random_mdp
        q = solve_q(mdp, behavior)
        np.testing.assert_allclose(np.sum(behavior.probs * q, axis=1), solve_value(mdp, behavior),
                                   atol=1e-10)

    def test_periodic_chain_is_not_mixing(self):
        transitions = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])
        mdp = Mdp(transitions, np.zeros((2, 1)), 0.9)
        with pytest.raises(NonMixingChainError, match="irreducible and aperiodic"):
            stationary_distribution(induce_chain(mdp, StationaryPolicy.uniform(2, 1)))

    def test_rollout_estimate_agrees_with_exact_q(self, random_mdp):
        mdp, behavior = random_mdp
        mean, standard_error = estimate_q_by_rollouts(mdp, behavior, episodes=2000, horizon=200,
                                                      rng=np.random.default_rng(11))
        exact = solve_q(mdp, behavior)
        assert np.all(np.abs(mean - exact) <= 4.0 * standard_error + 1e-8)


class TestStateRewards:

    def test_state_rewards_are_read_from_first_column(self):
        spec = RegimeSpec("random", num_states=3, num_actions=2, reward_mode="state")
        mdp, _ = generate_mdp(spec, 0)
        np.testing.assert_array_equal(state_rewards(mdp), mdp.rewards[:, 0])

    def test_action_dependent_rewards_are_rejected(self):
        spec = RegimeSpec("random", num_states=3, num_actions=2, reward_mode="state_action")
        mdp, _ = generate_mdp(spec, 0)
        with pytest.raises(ActionDependentRewardError, match="depends only on the state"):
            state_rewards(mdp)


class TestGenerator:

    @pytest.mark.parametrize("regime", ["uniform", "near_uniform", "random", "near_permutation"])
    def test_generation_is_deterministic(self, regime):
        spec = RegimeSpec(regime, mix=0.05, num_states=5, num_actions=3)
        first, first_behavior = generate_mdp(spec, 4)
        second, second_behavior = generate_mdp(spec, 4)
        np.testing.assert_array_equal(first.transitions, second.transitions)
        np.testing.assert_array_equal(first.rewards, second.rewards)
        np.testing.assert_array_equal(first_behavior.probs, second_behavior.probs)

    def test_uniform_regime_has_rank_one_behavior_chain(self):
        mdp, behavior = generate_mdp(RegimeSpec("uniform", mix=0.0), 1)
        assert analyze_spectrum(induce_chain(mdp, behavior)).lambda2_modulus < 1e-10

    def test_near_permutation_regime_keeps_mixed_modulus(self):
        mdp, behavior = generate_mdp(RegimeSpec("near_permutation", mix=0.02), 1)
        report = analyze_spectrum(induce_chain(mdp, behavior))
        assert report.lambda2_modulus == pytest.approx(0.98, abs=1e-9)
        assert report.mixing_flag

    def test_near_uniform_kernels_average_to_the_base_chain(self):
        regime = RegimeRegistry.get_class("near_uniform")(5, 3, 0.05)
        transitions, behavior = regime.build(np.random.default_rng(0))
        replay = np.random.default_rng(0)
        regime.behavior_probs(replay)
        base = regime.base_matrix(replay)
        assert np.linalg.matrix_rank(base) <= 2
        np.testing.assert_allclose(np.einsum("sa,sat->st", behavior, transitions),
                                   regime.mixed(base), atol=1e-12)

    def test_unmixed_permutation_is_flagged(self):
        mdp, behavior = generate_mdp(RegimeSpec("permutation", mix=0.0), 1)
        assert not analyze_spectrum(induce_chain(mdp, behavior)).mixing_flag

    def test_unknown_regime(self):
        with pytest.raises(InvalidModelError, match="unknown regime"):
            generate_mdp(RegimeSpec("checkerboard"), 0)

    @pytest.mark.parametrize("mix", [-0.1, 1.5])
    def test_mix_outside_unit_interval(self, mix):
        with pytest.raises(InvalidModelError):
            generate_mdp(RegimeSpec("random", mix=mix), 0)


class TestFiles:

    def test_saved_file_loads_back(self, tmp_path, random_mdp):
        mdp, _ = random_mdp
        target = tmp_path / "mdp.json"
        save_mdp(mdp, target)
        loaded = load_mdp(target)
        np.testing.assert_array_equal(loaded.transitions, mdp.transitions)
        np.testing.assert_array_equal(loaded.rewards, mdp.rewards)
        assert loaded.discount == mdp.discount

    def test_declared_sizes_must_match(self, tmp_path, random_mdp):
        mdp, _ = random_mdp
        data = mdp.to_dict()
        data["num_states"] += 1
        target = tmp_path / "bad.json"
        target.write_text(json.dumps(data))
        with pytest.raises(InvalidModelError, match="declared sizes"):
            load_mdp(target)

    def test_missing_key(self, tmp_path):
        target = tmp_path / "bad.json"
        target.write_text(json.dumps({"transitions": [[[1.0]]], "rewards": [[0.0]]}))
        with pytest.raises(InvalidModelError, match="gamma"):
            load_mdp(target)

    def test_malformed_json(self, tmp_path):
        target = tmp_path / "bad.json"
        target.write_text("{not json")
        with pytest.raises(InvalidModelError):
            load_mdp(target)
