import numpy as np
import pytest

from treemax.core.data_classes import TrainConfig
from treemax.core.errors import DivergenceError, InvalidModelError
from treemax.trainer.environments import ChainEnvironment, GridWorldEnvironment
from treemax.trainer.train_worker import TrainWorker, build_environment, train


class TestTrainConfig:

    @pytest.mark.parametrize("changes", [
        {"batch_size": 1}, {"depth": -1}, {"width": -2}, {"gamma": 1.0}, {"beta": 0.0},
        {"iterations": 0}, {"learning_rate": -0.1},
    ])
    def test_rejects_invalid_hyperparameters(self, changes):
        with pytest.raises(InvalidModelError):
            TrainConfig(**changes).validate()

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            TrainConfig(variant="X").validate()

    def test_baseline_is_flat_softmax(self):
        baseline = TrainConfig(depth=3, width=6, baseline=True, seed=4).baseline_config()
        assert (baseline.depth, baseline.width, baseline.baseline, baseline.seed) == (0, 0, False, 4)

    def test_environment_size(self):
        assert build_environment(TrainConfig(env="chain", env_size=7)).length == 7
        assert isinstance(build_environment(TrainConfig(env="grid")), GridWorldEnvironment)


class TestTrainWorker:

    def test_flat_softmax_starts_uniform(self):
        config = TrainConfig(depth=0, iterations=1, seed=0)
        records = TrainWorker(ChainEnvironment(), config).run()
        assert records[0].policy_entropy == pytest.approx(np.log(2.0))

    def test_score_shapes(self):
        env = ChainEnvironment()
        assert TrainWorker(env, TrainConfig(depth=0)).theta.shape == (5, 2)
        assert TrainWorker(env, TrainConfig(depth=2)).theta.shape == (5,)

    def test_runs_are_reproducible(self):
        config = TrainConfig(depth=2, iterations=15, seed=3)
        first = train(config)
        second = train(config)
        assert first == second
        assert [record.iteration for record in first] == list(range(15))

    def test_records_are_sane(self):
        config = TrainConfig(env="grid", env_size=3, depth=2, width=8, iterations=5, seed=1)
        for record in train(config):
            assert 0.0 <= record.mean_return <= 1.0
            assert record.empirical_grad_variance >= 0.0
            assert record.policy_entropy >= 0.0

    def test_divergence_guard(self):
        config = TrainConfig(depth=0, learning_rate=1e9, iterations=20, seed=0)
        worker = TrainWorker(ChainEnvironment(), config)
        with pytest.raises(DivergenceError):
            worker.run()
        assert not worker.running

    def test_stop_ends_the_loop(self):
        worker = TrainWorker(ChainEnvironment(), TrainConfig(depth=2, iterations=50, seed=0))
        step = worker.step

        def step_then_stop(iteration):
            record = step(iteration)
            if iteration == 2:
                worker.stop()
            return record

        worker.step = step_then_stop
        records = worker.run()
        assert len(records) == 3
        assert not worker.running

    def test_zero_learning_rate_keeps_theta(self):
        config = TrainConfig(depth=2, learning_rate=0.0, iterations=60, seed=2)
        worker = TrainWorker(ChainEnvironment(), config)
        records = worker.run()
        np.testing.assert_array_equal(worker.theta, 0.0)
        assert len({record.policy_entropy for record in records}) == 1
        returns = np.array([record.mean_return for record in records])
        first, second = returns[:30], returns[30:]
        standard_error = np.sqrt(first.var(ddof=1) / 30 + second.var(ddof=1) / 30)
        assert abs(first.mean() - second.mean()) <= 4.0 * standard_error + 1e-12


def _mean_variance(config: TrainConfig) -> float:
    return float(np.mean([record.empirical_grad_variance for record in train(config)]))


@pytest.mark.slow
class TestChainTraining:

    @pytest.mark.parametrize("depth", [2, 3])
    def test_reaches_optimal_return(self, depth):
        config = TrainConfig(depth=depth, iterations=2000, seed=0)
        optimal = ChainEnvironment().optimal_return(config.gamma)
        records = train(config)
        trailing = np.mean([record.mean_return for record in records[-100:]])
        assert trailing >= 0.9 * optimal

    @pytest.mark.parametrize("depth", [2, 3])
    def test_tree_lowers_gradient_variance(self, depth):
        wins = 0
        for seed in range(5):
            config = TrainConfig(depth=depth, iterations=300, seed=seed)
            if _mean_variance(config) < _mean_variance(config.baseline_config()):
                wins += 1
        assert wins >= 4
