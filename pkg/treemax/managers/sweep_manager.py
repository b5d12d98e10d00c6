from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
import logging
import os
from pathlib import Path
import threading
from typing import List, Optional, Tuple

import numpy as np

from treemax.core.data_classes import (
    Mdp, RegimeSpec, StationaryPolicy, SweepConfig, TreePolicyConfig, Variant
)
from treemax.core.defaults import CliDefaults, RegimeDefaults
from treemax.core.errors import InvalidModelError, TreeMaxError
from treemax.core.mdp import generate_mdp, load_mdp
from treemax.core.variance import conjecture_ratio, depth_sweep
from treemax.utils.regimes import RegimeRegistry
from treemax.utils.reports import read_sidecar

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["regime", "seed", "S", "A", "beta", "gamma", "variant", "depth", "lambda2",
                 "exact_variance", "lemma1_bound", "theorem_bound",
                 "normalized_variance", "normalized_model"]
CONJECTURE_COLUMNS = ["regime", "seed", "lambda2", "ratio"]


@dataclass(frozen=True)
class SweepTask:
    """One (regime or file, seed) cell of a sweep."""
    regime: str
    seed: int
    mdp_file: Optional[str] = None


@dataclass
class SweepResult:
    rows: List[dict] = field(default_factory=list)
    conjecture_rows: List[dict] = field(default_factory=list)
    error: Optional[BaseException] = None


def draw_theta(num_states: int, seed: int, mode: str) -> np.ndarray:
    """Score vector in R^S_+: uniform [0, 1] draws, or all 0.5 for "constant"."""
    if mode == "constant":
        return np.full(num_states, 0.5)
    if mode == "random":
        return np.random.default_rng([seed, 1]).uniform(0.0, 1.0, size=num_states)
    raise InvalidModelError(f"unknown theta mode '{mode}'")


def resolve_jobs(requested: Optional[int]) -> int:
    """Worker count: TREEMAX_JOBS, else the request, else the logical core count."""
    override = os.environ.get(CliDefaults.JOBS_ENV_VAR)
    if override:
        try:
            requested = int(override)
        except ValueError:
            raise InvalidModelError(
                f"{CliDefaults.JOBS_ENV_VAR} must be an integer, got '{override}'") from None
    jobs = requested if requested is not None else os.cpu_count() or 1
    if jobs < 1:
        raise InvalidModelError(f"job count must be positive, got {jobs}")
    return jobs


class SweepManager:
    """
    Runs depth sweeps over (regime, seed) cells on a bounded thread pool.

    Workers only read their own immutable MDP and return rows; results are
    merged under a lock and sorted by (regime, seed, depth), so the output
    does not depend on the pool size.
    """

    def __init__(self, config: SweepConfig) -> None:
        self.config = config
        self.variant = Variant(config.variant)
        self._lock: threading.Lock = threading.Lock()
        self._rows: List[dict] = []
        self._conjecture_rows: List[dict] = []

    def tasks(self) -> List[SweepTask]:
        seeds = range(self.config.seed, self.config.seed + self.config.num_seeds)
        if self.config.mdp_files:
            return [SweepTask(Path(file_path).stem, seed, file_path)
                    for file_path in self.config.mdp_files for seed in seeds]
        return [SweepTask(RegimeRegistry.canonical_name(regime), seed)
                for regime in self.config.regimes for seed in seeds]

    def _instance(self, task: SweepTask) -> Tuple[Mdp, StationaryPolicy]:
        if task.mdp_file is not None:
            mdp = load_mdp(task.mdp_file)
            behavior = read_sidecar(task.mdp_file).get("behavior")
            if behavior is None:
                logger.warning("%s has no sidecar behavior policy; using uniform", task.mdp_file)
                return mdp, StationaryPolicy.uniform(mdp.num_states, mdp.num_actions)
            return mdp, StationaryPolicy(behavior)

        mix = self.config.mix
        if mix is None:
            mix = RegimeDefaults.defaults[task.regime]
        spec = RegimeSpec(task.regime, mix=mix, num_states=self.config.num_states,
                          num_actions=self.config.num_actions, discount=self.config.gamma,
                          reward_mode=self.config.reward_mode)
        return generate_mdp(spec, task.seed)

    def run_task(self, task: SweepTask) -> Tuple[List[dict], List[dict]]:
        mdp, behavior = self._instance(task)
        theta = draw_theta(mdp.num_states, task.seed, self.config.theta_mode)
        base_config = TreePolicyConfig(self.variant, self.config.min_depth,
                                       self.config.beta, theta, behavior)
        reports = depth_sweep(mdp, base_config, self.config.depths)

        rows = [{
            "regime": task.regime,
            "seed": task.seed,
            "S": mdp.num_states,
            "A": mdp.num_actions,
            "beta": self.config.beta,
            "gamma": mdp.discount,
            "variant": self.variant.value,
            "depth": report.depth,
            "lambda2": report.lambda2,
            "exact_variance": report.exact_variance,
            "lemma1_bound": report.lemma1_bound,
            "theorem_bound": report.theorem_bound,
            "normalized_variance": report.normalized_variance,
            "normalized_model": report.normalized_model,
        } for report in reports]

        conjecture_rows = []
        if self.variant is Variant.E:
            conjecture_rows.append({"regime": task.regime, "seed": task.seed,
                                    "lambda2": reports[0].lambda2,
                                    "ratio": conjecture_ratio(reports, mdp.discount)})
        return rows, conjecture_rows

    def _collect(self, rows: List[dict], conjecture_rows: List[dict]) -> None:
        with self._lock:
            self._rows.extend(rows)
            self._conjecture_rows.extend(conjecture_rows)

    def run(self, jobs: Optional[int] = None) -> SweepResult:
        """
        Run every task. The failure of the earliest (regime, seed) cell is
        kept in `error`; rows of the cells that finished are still returned.
        """
        tasks = self.tasks()
        jobs = resolve_jobs(jobs if jobs is not None else self.config.jobs)
        with self._lock:
            self._rows = []
            self._conjecture_rows = []
        logger.info("sweeping %d cells over depths %d..%d with %d workers",
                    len(tasks), self.config.min_depth, self.config.max_depth, jobs)

        errors = {}
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            futures = {executor.submit(self.run_task, task): task for task in tasks}
            for future in as_completed(futures):
                task = futures[future]
                try:
                    self._collect(*future.result())
                except TreeMaxError as task_error:
                    logger.error("sweep cell %s seed %d failed: %s", task.regime, task.seed, task_error)
                    errors[(task.regime, task.seed)] = task_error

        def sort_key(row: dict):
            return (row["regime"], row["seed"], row.get("depth", 0))

        with self._lock:
            rows = sorted(self._rows, key=sort_key)
            conjecture_rows = sorted(self._conjecture_rows, key=sort_key)
        error = errors[min(errors)] if errors else None
        return SweepResult(rows=rows, conjecture_rows=conjecture_rows, error=error)
