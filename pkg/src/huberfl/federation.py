"""The Byzantine-robust training loop.

Each round broadcasts ``w_t``, collects the honest full-shard gradients,
lets the adversary overwrite the Byzantine rows, aggregates, and takes a
projected gradient step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .adversary import AttackContext, AttackSpec, apply_attack
from .aggregation import AggregatorSpec, UpdateSet
from .errors import ContractError, DivergenceError, ParameterError


@dataclass(frozen=True)
class Allocation:
    """Disjoint client shards covering sample indices ``0..N-1``."""

    shards: tuple

    def __post_init__(self):
        shards = tuple(np.asarray(s, dtype=np.int64) for s in self.shards)
        if not shards:
            raise ContractError("an allocation needs at least one shard")
        if any(s.size == 0 for s in shards):
            raise ContractError("every client needs at least one sample")
        object.__setattr__(self, "shards", shards)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([s.size for s in self.shards], dtype=np.int64)

    @property
    def m(self) -> int:
        return len(self.shards)

    def assignment(self) -> np.ndarray:
        """Client index of every sample."""
        n = int(self.sizes.sum())
        owner = np.full(n, -1, dtype=np.int64)
        for i, s in enumerate(self.shards):
            owner[s] = i
        return owner


def allocate_balanced(N: int, m: int, rng: Optional[np.random.Generator] = None) -> Allocation:
    """Shuffle (when ``rng`` is given) and cut into m near-equal contiguous shards.

    When m does not divide N the first ``N mod m`` shards get one extra sample.
    """
    if m < 1 or m > N:
        raise ParameterError(f"need 1 <= m <= N, got m={m}, N={N}")
    order = rng.permutation(N) if rng is not None else np.arange(N)
    return Allocation(tuple(np.array_split(order, m)))


def allocate_stick_breaking(N: int, m: int, rng: np.random.Generator) -> Allocation:
    """Shuffle, draw m-1 distinct cut points, and hand out the half-open blocks.

    A cut set containing 0 would leave the first client empty; such draws
    are rejected and redrawn.
    """
    if m < 1 or m > N:
        raise ParameterError(f"need 1 <= m <= N, got m={m}, N={N}")
    order = rng.permutation(N)
    while True:
        cuts = np.sort(rng.choice(N, size=m - 1, replace=False))
        if m == 1 or cuts[0] > 0:
            break
    bounds = np.concatenate([[0], cuts, [N]])
    return Allocation(tuple(order[bounds[i] : bounds[i + 1]] for i in range(m)))


def client_gradient(task, shard, w) -> np.ndarray:
    shard = np.asarray(shard)
    if shard.size == 0:
        raise ContractError("client shard is empty")
    return task.gradient(w, shard)


@dataclass(frozen=True)
class ProjectionSpec:
    mode: str = "none"
    center: Optional[np.ndarray] = None
    radius: float = 1.0

    def __post_init__(self):
        if self.mode not in ("none", "ball"):
            raise ParameterError(f"projection mode must be 'none' or 'ball', got {self.mode!r}")
        if self.mode == "ball" and not self.radius > 0:
            raise ParameterError(f"projection radius must be positive, got {self.radius}")


def project(w, spec: ProjectionSpec) -> np.ndarray:
    """Euclidean projection onto the ball ``||w - center|| <= radius`` (or identity)."""
    if spec.mode == "none":
        return w
    w = np.asarray(w, dtype=np.float64)
    center = np.zeros_like(w) if spec.center is None else np.asarray(spec.center, dtype=np.float64)
    offset = w - center
    norm = float(np.linalg.norm(offset))
    if norm <= spec.radius:
        return w
    return center + offset * (spec.radius / norm)


@dataclass
class RoundState:
    t: int
    w: np.ndarray
    rng: np.random.Generator
    attack: AttackSpec
    allocation: Allocation
    attack_thresholds: Optional[np.ndarray] = None


@dataclass(frozen=True)
class RoundLog:
    t: int
    metric: float
    aggregation_error: Optional[float] = None
    attack_success: Optional[bool] = None
    elapsed_ms: float = 0.0


def aggregation_error(updates: UpdateSet, aggregator: AggregatorSpec, true_grad, rng=None) -> float:
    """Distance between the aggregate of ``updates`` and the true gradient."""
    g = aggregator.aggregate(updates, rng)
    return float(np.linalg.norm(g - np.asarray(true_grad)))


def krum_q_for(aggregator: AggregatorSpec, attack: AttackSpec) -> int:
    """The q the Krum attack assumes: the server's own q when it runs Krum."""
    if aggregator.name == "krum" and aggregator.q is not None:
        return aggregator.q
    return len(attack.byzantine)


def attacked_updates(task, state: RoundState, aggregator: AggregatorSpec):
    """Honest gradients at ``state.w`` after the adversary has had its turn."""
    honest = UpdateSet(task.gradients(state.w, state.allocation.shards), state.allocation.sizes)
    ctx = AttackContext.build(honest, state.attack_thresholds)
    return apply_attack(ctx, state.attack, krum_q_for(aggregator, state.attack))


def run_round(
    state: RoundState,
    task,
    aggregator: AggregatorSpec,
    eta: float,
    projection: ProjectionSpec = ProjectionSpec(),
):
    """One iteration of the training loop; returns the next state and its log row.

    The logged metric is evaluated at the updated parameters ``w_{t+1}``;
    the aggregation error refers to the gradient estimate at ``w_t``.
    """
    if not eta > 0:
        raise ParameterError(f"learning rate must be positive, got {eta}")
    start = time.perf_counter()
    updates, success = attacked_updates(task, state, aggregator)
    g = aggregator.aggregate(updates, state.rng)

    err = None
    true_grad = task.true_gradient(state.w)
    if true_grad is not None:
        err = float(np.linalg.norm(g - true_grad))

    with np.errstate(over="ignore", invalid="ignore"):
        w_next = project(state.w - eta * g, projection)
    if not np.all(np.isfinite(w_next)):
        raise DivergenceError(
            f"round {state.t}: parameters became non-finite under aggregator {aggregator.name!r}"
        )
    metric = task.metric(w_next)
    elapsed = (time.perf_counter() - start) * 1e3
    log = RoundLog(state.t, metric, err, success, elapsed)
    return replace(state, t=state.t + 1, w=w_next), log


@dataclass
class TrainingResult:
    weights: np.ndarray
    logs: list = field(default_factory=list)


def run_training(
    state: RoundState,
    task,
    aggregator: AggregatorSpec,
    eta: float,
    rounds: int,
    projection: ProjectionSpec = ProjectionSpec(),
) -> TrainingResult:
    logs = []
    for _ in range(rounds):
        state, log = run_round(state, task, aggregator, eta, projection)
        logs.append(log)
    return TrainingResult(state.w, logs)
