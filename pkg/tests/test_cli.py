"""End-to-end runs of the command line through main()."""
import json

import numpy as np
import pytest

from treemax.controllers.cli import main
from treemax.utils.reports import read_report_csv, read_sidecar


def _run(*argv) -> int:
    return main([str(arg) for arg in argv])


class TestGenMdp:

    def test_writes_file_and_sidecar(self, tmp_path):
        target = tmp_path / "mdp.json"
        assert _run("gen-mdp", "--seed", 1, "--regime", "random", "--states", 4, "-o", target) == 0
        data = json.loads(target.read_text())
        assert data["num_states"] == 4
        metadata = read_sidecar(target)
        assert metadata["regime"] == "random"
        assert metadata["mixing"] is True
        assert np.array(metadata["behavior"]).shape == (4, 3)

    def test_uniform_regime_has_zero_second_eigenvalue(self, tmp_path):
        target = tmp_path / "uniform.json"
        assert _run("gen-mdp", "--seed", 2, "--regime", "uniform", "--mix", 0, "-o", target) == 0
        assert read_sidecar(target)["lambda2"] == pytest.approx(0.0, abs=1e-10)

    def test_reruns_are_identical(self, tmp_path):
        first, second = tmp_path / "a.json", tmp_path / "b.json"
        _run("gen-mdp", "--seed", 5, "--regime", "near_uniform", "-o", first)
        _run("gen-mdp", "--seed", 5, "--regime", "near_uniform", "-o", second)
        assert first.read_bytes() == second.read_bytes()

    def test_seed_is_required(self, tmp_path):
        with pytest.raises(SystemExit) as error:
            _run("gen-mdp", "-o", tmp_path / "mdp.json")
        assert error.value.code == 2

    def test_unmixed_permutation_sidecar_is_flagged(self, tmp_path):
        target = tmp_path / "permutation.json"
        assert _run("gen-mdp", "--seed", 3, "--regime", "permutation", "--mix", 0, "-o", target) == 0
        metadata = read_sidecar(target)
        assert metadata["mixing"] is False
        assert metadata["lambda2"] == pytest.approx(1.0, abs=1e-9)

    def test_unknown_regime_is_a_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as error:
            _run("gen-mdp", "--seed", 0, "--regime", "spiral", "-o", tmp_path / "mdp.json")
        assert error.value.code == 2


class TestSweep:

    def test_default_regimes_fill_every_cell(self, tmp_path):
        output = tmp_path / "sweep.csv"
        assert _run("sweep", "--seed", 0, "--seeds", 5, "--min-depth", 1, "--max-depth", 8,
                    "--jobs", 2, "-o", output) == 0
        frame, status = read_report_csv(output)
        assert status == "ok"
        assert len(frame) == 3 * 5 * 8
        assert sorted(frame["regime"].unique()) == ["near_permutation", "near_uniform", "random"]
        first_depth = frame[frame["depth"] == 1]
        np.testing.assert_allclose(first_depth["normalized_variance"], 1.0)

        conjecture, conjecture_status = read_report_csv(tmp_path / "sweep.conjecture.csv")
        assert conjecture_status == "ok"
        assert len(conjecture) == 15

    def test_output_does_not_depend_on_pool_size(self, tmp_path):
        outputs = []
        for jobs in (1, 4):
            output = tmp_path / f"sweep{jobs}.csv"
            svg = tmp_path / f"sweep{jobs}.svg"
            _run("sweep", "--seed", 3, "--seeds", 2, "--max-depth", 4, "--jobs", jobs,
                 "--variant", "C", "-o", output, "--svg", svg)
            outputs.append((output.read_bytes(), svg.read_bytes()))
        assert outputs[0] == outputs[1]

    def test_environment_overrides_jobs(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TREEMAX_JOBS", "many")
        assert _run("sweep", "--seed", 0, "--seeds", 1, "--max-depth", 2,
                    "-o", tmp_path / "sweep.csv") == 2

    def test_action_dependent_rewards_fail_variant_e(self, tmp_path):
        output = tmp_path / "sweep.csv"
        assert _run("sweep", "--seed", 0, "--seeds", 1, "--max-depth", 3, "--regimes", "random",
                    "--variant", "E", "--reward-mode", "state_action", "-o", output) == 3
        _, status = read_report_csv(output)
        assert status.startswith("error ActionDependentRewardError")

    def test_unmixed_permutation_is_not_mixing(self, tmp_path):
        output = tmp_path / "sweep.csv"
        assert _run("sweep", "--seed", 0, "--seeds", 1, "--max-depth", 3,
                    "--regimes", "near_permutation", "--mix", 0, "-o", output) == 3
        _, status = read_report_csv(output)
        assert "NonMixingChainError" in status

    def test_sweep_over_files(self, tmp_path):
        mdp_file = tmp_path / "toy.json"
        _run("gen-mdp", "--seed", 4, "--regime", "near_uniform", "-o", mdp_file)
        output = tmp_path / "sweep.csv"
        assert _run("sweep", "--seed", 0, "--seeds", 2, "--max-depth", 3, "--mdp", mdp_file,
                    "-o", output) == 0
        frame, _ = read_report_csv(output)
        assert set(frame["regime"]) == {"toy"}
        assert len(frame) == 2 * 3


class TestGradcheck:

    def test_passes(self, capsys):
        assert _run("gradcheck", "--seed", 0, "--instances", 5) == 0
        assert "10/10 checks passed" in capsys.readouterr().out

    def test_sign_flip_fails(self, capsys):
        assert _run("gradcheck", "--seed", 0, "--instances", 5, "--inject-sign-flip") == 1
        assert "FAIL" in capsys.readouterr().out

    def test_zero_tolerance_fails(self, capsys):
        assert _run("gradcheck", "--seed", 0, "--instances", 2, "--tolerance", 0) == 1
        assert "FAIL" in capsys.readouterr().out


class TestTrain:

    def test_writes_run_and_baseline(self, tmp_path):
        output = tmp_path / "train.csv"
        assert _run("train", "--seed", 2, "--depth", 2, "--iterations", 5, "--baseline",
                    "-o", output) == 0
        frame, status = read_report_csv(output)
        assert status == "ok"
        assert list(frame["iteration"]) == list(range(5))
        assert frame["wall_ms"].isna().all()
        baseline, _ = read_report_csv(tmp_path / "train.baseline.csv")
        assert len(baseline) == 5

    def test_reruns_are_identical(self, tmp_path):
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        for output in (first, second):
            _run("train", "--seed", 6, "--env", "grid", "--env-size", 3, "--iterations", 4, "-o", output)
        assert first.read_bytes() == second.read_bytes()

    def test_wall_clock_column(self, tmp_path):
        output = tmp_path / "train.csv"
        _run("train", "--seed", 0, "--iterations", 3, "--wall-clock", "-o", output)
        frame, _ = read_report_csv(output)
        assert (frame["wall_ms"] >= 0.0).all()

    def test_zero_learning_rate_keeps_the_policy(self, tmp_path):
        output = tmp_path / "train.csv"
        assert _run("train", "--seed", 1, "--depth", 2, "--iterations", 40, "--lr", 0, "-o", output) == 0
        frame, status = read_report_csv(output)
        assert status == "ok"
        assert frame["policy_entropy"].nunique() == 1
        returns = frame["mean_return"].to_numpy()
        first, second = returns[:20], returns[20:]
        standard_error = np.sqrt(first.var(ddof=1) / 20 + second.var(ddof=1) / 20)
        assert abs(first.mean() - second.mean()) <= 4.0 * standard_error + 1e-12

    def test_batch_of_one_is_rejected(self, tmp_path):
        assert _run("train", "--seed", 0, "--batch-size", 1, "-o", tmp_path / "train.csv") == 2


class TestAnalyze:

    def test_prints_spectrum_and_policy(self, tmp_path, capsys):
        mdp_file = tmp_path / "mdp.json"
        _run("gen-mdp", "--seed", 1, "--states", 3, "--actions", 2, "-o", mdp_file)
        policy_file = tmp_path / "policy.csv"
        assert _run("analyze", "--seed", 0, "--mdp", mdp_file, "--depth", 3, "-o", policy_file) == 0
        printed = capsys.readouterr().out
        assert "|lambda_2|" in printed
        frame, _ = read_report_csv(policy_file)
        assert len(frame) == 6
        np.testing.assert_allclose(frame.groupby("state")["probability"].sum(), 1.0)

    def test_invalid_model_file(self, tmp_path):
        mdp_file = tmp_path / "bad.json"
        mdp_file.write_text(json.dumps({"gamma": 0.9, "transitions": [[[0.5, 0.2]], [[0.0, 1.0]]],
                                        "rewards": [[0.0], [0.0]]}))
        assert _run("analyze", "--seed", 0, "--mdp", mdp_file) == 2

    def test_missing_file(self, tmp_path):
        assert _run("analyze", "--seed", 0, "--mdp", tmp_path / "nowhere.json") == 2


class TestConfigFiles:

    def test_saved_configuration_reproduces_the_run(self, tmp_path):
        saved = tmp_path / "config.json"
        first = tmp_path / "first.json"
        _run("gen-mdp", "--seed", 9, "--regime", "near_permutation", "--states", 4,
             "-o", first, "--save-config", saved)
        configuration = json.loads(saved.read_text())
        assert configuration["command"] == "gen-mdp"
        assert configuration["parameters"]["seed"] == 9

        second = tmp_path / "second.json"
        assert _run("gen-mdp", "--config", saved, "-o", second) == 0
        assert first.read_bytes() == second.read_bytes()

    def test_configuration_for_another_command(self, tmp_path):
        saved = tmp_path / "config.json"
        _run("gen-mdp", "--seed", 1, "-o", tmp_path / "mdp.json", "--save-config", saved)
        with pytest.raises(SystemExit) as error:
            _run("sweep", "--config", saved)
        assert error.value.code == 2
