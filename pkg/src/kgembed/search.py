"""Grid and random hyperparameter search over training configurations.

Any TrainConfig field can be searched — sampler, loss and optimizer kinds
included, not just numeric knobs. Each trial trains from scratch and is
scored by full-split validation MRR; ties go to the earlier trial.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, TrainConfig
from .data import IndexedKG
from .evaluate import RankingReport
from .train import final_report, train


@dataclass
class TrialResult:
    index: int
    config: TrainConfig
    report: RankingReport

    @property
    def mrr(self) -> float:
        return self.report.mrr


def _check_space(space: dict[str, list]) -> None:
    if not space:
        raise ConfigError("search space is empty")
    for key, values in space.items():
        if not isinstance(values, (list, tuple)) or len(values) == 0:
            raise ConfigError(f"search key {key!r} needs a non-empty value list")


def _run_trial(index: int, base: TrainConfig, combo: dict, kg: IndexedKG) -> TrialResult:
    config = base.with_overrides(**combo)
    result = train(config, kg)
    report = final_report(result.best.params, kg, split="valid", threads=config.threads)
    return TrialResult(index=index, config=config, report=report)


def grid_search(
    space: dict[str, list], base: TrainConfig, kg: IndexedKG
) -> tuple[TrialResult, list[TrialResult]]:
    """Enumerate the Cartesian product in sorted-key order; best by valid MRR."""
    _check_space(space)
    keys = sorted(space)
    trials = []
    for index, values in enumerate(itertools.product(*(space[k] for k in keys))):
        trials.append(_run_trial(index, base, dict(zip(keys, values)), kg))
    return max(trials, key=lambda t: (t.mrr, -t.index)), trials


def random_search(
    space: dict[str, list], base: TrainConfig, kg: IndexedKG, n_trials: int, seed: int
) -> tuple[TrialResult, list[TrialResult]]:
    """Sample each key uniformly from its list, ``n_trials`` times, seeded."""
    _check_space(space)
    if n_trials < 1:
        raise ConfigError(f"n_trials must be >= 1, got {n_trials}")
    rng = np.random.default_rng(seed)
    keys = sorted(space)
    trials = []
    for index in range(n_trials):
        combo = {k: space[k][int(rng.integers(0, len(space[k])))] for k in keys}
        trials.append(_run_trial(index, base, combo, kg))
    return max(trials, key=lambda t: (t.mrr, -t.index)), trials
