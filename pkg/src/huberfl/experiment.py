"""Turn an :class:`ExperimentConfig` into a training run and a metrics CSV."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .adversary import CLI_NAMES, AttackSpec, select_byzantine
from .aggregation import AggregatorSpec
from .config import ExperimentConfig
from .federation import (
    Allocation,
    ProjectionSpec,
    RoundState,
    TrainingResult,
    allocate_balanced,
    allocate_stick_breaking,
    run_training,
)
from .tasks import (
    ClassifierTask,
    RegressionTask,
    blobs_synthesize,
    draw_perturbation,
    heterogeneous_targets,
    linreg_synthesize,
    mnist_load,
)

CSV_COLUMNS = ("round", "metric", "aggregation_error", "attack_success", "elapsed_ms")


@dataclass
class Experiment:
    config: ExperimentConfig
    task: object
    allocation: Allocation
    attack: AttackSpec
    aggregator: AggregatorSpec
    projection: ProjectionSpec
    initial_state: RoundState


def _streams(seed: int):
    names = ("data", "allocation", "byzantine", "perturbation", "init", "rounds")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


def _split(dataset, n_train):
    n = dataset.n
    return dataset.subset(np.arange(n_train)), dataset.subset(np.arange(n_train, n))


def _allocate(config: ExperimentConfig, n: int, rng) -> Allocation:
    if config.allocation == "stick":
        return allocate_stick_breaking(n, config.m, rng)
    return allocate_balanced(n, config.m, rng)


def _aggregator_spec(config: ExperimentConfig, attack: AttackSpec) -> AggregatorSpec:
    q = len(attack.byzantine) if config.q == "auto" else config.q
    trim = attack.eps if config.trim == "auto" else config.trim
    return AggregatorSpec(
        config.aggregator,
        threshold=config.threshold,
        t0=config.t0,
        bigm=config.bigm,
        trim=trim,
        q=q,
        tol=config.tol,
        max_iters=config.max_iters,
    )


def build_experiment(config: ExperimentConfig) -> Experiment:
    """Materialize data, allocation, Byzantine set and initial state.

    Every random ingredient draws from its own child stream of the seed, so
    runs that differ only in aggregator or attack share data, shards and
    Byzantine clients.
    """
    rng = _streams(config.seed)
    if config.task == "regression":
        full = linreg_synthesize(config.d, config.n_train + config.n_test, rng["data"], config.noise_std)
        train, test = _split(full, config.n_train)
        allocation = _allocate(config, train.n, rng["allocation"])
        if config.sigma_param > 0:
            perturbation = draw_perturbation(config.m, config.d, config.sigma_param, rng["perturbation"])
            train = heterogeneous_targets(train, perturbation, allocation.assignment())
        task = RegressionTask(train, test)
    else:
        if config.data == "mnist":
            train = mnist_load(config.train_images, config.train_labels, config.classes)
            test = mnist_load(config.test_images, config.test_labels, config.classes)
        else:
            full = blobs_synthesize(
                config.classes, config.n_train + config.n_test, config.features, config.spread, rng["data"]
            )
            train, test = _split(full, config.n_train)
        allocation = _allocate(config, train.n, rng["allocation"])
        task = ClassifierTask(train, test, config.hidden)

    attack = select_byzantine(
        config.m, allocation.sizes, config.eps, rng["byzantine"], CLI_NAMES[config.attack]
    )
    aggregator = _aggregator_spec(config, attack)
    thresholds = None
    if config.threshold is not None or (config.t0 is not None and config.bigm is not None):
        thresholds = aggregator.thresholds_for(allocation.sizes)
    projection = ProjectionSpec(config.projection, None, config.proj_radius)
    state = RoundState(
        t=0,
        w=task.initial_weights(rng["init"]),
        rng=rng["rounds"],
        attack=attack,
        allocation=allocation,
        attack_thresholds=thresholds,
    )
    return Experiment(config, task, allocation, attack, aggregator, projection, state)


def train(config: ExperimentConfig) -> TrainingResult:
    """Run every configured round and return final weights plus the round logs."""
    exp = build_experiment(config)
    return run_training(
        exp.initial_state, exp.task, exp.aggregator, config.eta, config.rounds, exp.projection
    )


def _fmt_float(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def metrics_csv(logs, metric_name: str, timing: bool = False) -> str:
    buf = io.StringIO()
    buf.write(f"# metric_name={metric_name}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for log in logs:
        success = "" if log.attack_success is None else str(int(log.attack_success))
        writer.writerow(
            [
                log.t,
                _fmt_float(log.metric),
                _fmt_float(log.aggregation_error),
                success,
                _fmt_float(log.elapsed_ms) if timing else "",
            ]
        )
    return buf.getvalue()


def write_metrics(path, logs, metric_name: str, timing: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(metrics_csv(logs, metric_name, timing))
    return path


def read_metrics(path) -> list[dict]:
    """Parse a metrics file back into dict rows (the comment line is skipped)."""
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def run_to_file(config: ExperimentConfig) -> tuple[TrainingResult, str]:
    exp = build_experiment(config)
    result = run_training(
        exp.initial_state, exp.task, exp.aggregator, config.eta, config.rounds, exp.projection
    )
    write_metrics(config.output, result.logs, exp.task.metric_name, config.timing)
    return result, exp.task.metric_name
