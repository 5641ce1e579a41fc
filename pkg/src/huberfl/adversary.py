"""Omniscient attack strategies for the Byzantine clients.

Every attack sees all honest gradients ``G_i`` (including those the Byzantine
clients would have sent) and overwrites only the rows listed in the
Byzantine set. Honest rows are passed through untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .aggregation import UpdateSet, krum_index
from .errors import ParameterError

STRATEGIES = ("none", "sign_flip", "krum_attack", "trimmed_mean_attack", "hlm_attack")

# CLI spelling -> internal strategy name
CLI_NAMES = {
    "none": "none",
    "signflip": "sign_flip",
    "ka": "krum_attack",
    "tma": "trimmed_mean_attack",
    "hlma": "hlm_attack",
}

KA_LAMBDA_START = 1.0
KA_LAMBDA_FLOOR = 1e-4


@dataclass(frozen=True)
class AttackSpec:
    strategy: str
    byzantine: tuple
    target_eps: float
    realized_client_frac: float
    realized_sample_frac: float

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ParameterError(
                f"unknown attack {self.strategy!r}; choose from {', '.join(STRATEGIES)}"
            )

    @property
    def eps(self) -> float:
        """Effective attack ratio: the larger of the client and sample fractions."""
        return max(self.realized_client_frac, self.realized_sample_frac)

    def with_strategy(self, strategy: str) -> "AttackSpec":
        return AttackSpec(
            strategy,
            self.byzantine,
            self.target_eps,
            self.realized_client_frac,
            self.realized_sample_frac,
        )


@dataclass(frozen=True)
class AttackContext:
    honest: UpdateSet
    g0: np.ndarray
    sign_vec: np.ndarray
    huber_thresholds: Optional[np.ndarray] = None

    @classmethod
    def build(cls, honest: UpdateSet, huber_thresholds=None) -> "AttackContext":
        g0 = reference_mean(honest)
        thresholds = None if huber_thresholds is None else np.asarray(huber_thresholds, dtype=np.float64)
        return cls(honest, g0, sign_vector(g0), thresholds)


class KrumAttackOutcome(NamedTuple):
    updates: UpdateSet
    lam: float
    success: bool
    trials: int


def reference_mean(honest: UpdateSet) -> np.ndarray:
    """Unweighted mean of all m honest gradients."""
    return honest.vectors.mean(axis=0)


def sign_vector(g0) -> np.ndarray:
    """Element-wise sign with ``sign(0) = +1``."""
    g0 = np.asarray(g0, dtype=np.float64)
    return np.where(g0 < 0, -1.0, 1.0)


def _byz_index(spec: AttackSpec) -> np.ndarray:
    return np.asarray(spec.byzantine, dtype=np.int64)


def sign_flip(ctx: AttackContext, spec: AttackSpec) -> UpdateSet:
    if not spec.byzantine:
        return ctx.honest
    out = np.array(ctx.honest.vectors)
    idx = _byz_index(spec)
    out[idx] = -out[idx]
    return ctx.honest.replace_vectors(out)


def ka_lambda_schedule():
    """Halving schedule 1, 1/2, 1/4, ... down to the last value >= 1e-4."""
    lam = KA_LAMBDA_START
    while lam >= KA_LAMBDA_FLOOR:
        yield lam
        lam /= 2.0


def krum_attack(ctx: AttackContext, spec: AttackSpec, q: int) -> KrumAttackOutcome:
    """Place every Byzantine upload at ``g0 - lam * s`` with the largest lam Krum accepts.

    lam is halved from 1 until Krum picks a Byzantine index; if it never
    does before lam drops below 1e-4 the last (smallest) placement is kept.
    """
    if not spec.byzantine:
        return KrumAttackOutcome(ctx.honest, 0.0, False, 0)
    idx = _byz_index(spec)
    byz = set(spec.byzantine)
    attacked = None
    lam = KA_LAMBDA_START
    trials = 0
    for lam in ka_lambda_schedule():
        trials += 1
        out = np.array(ctx.honest.vectors)
        out[idx] = ctx.g0 - lam * ctx.sign_vec
        attacked = ctx.honest.replace_vectors(out)
        if krum_index(attacked, q) in byz:
            return KrumAttackOutcome(attacked, lam, True, trials)
    return KrumAttackOutcome(attacked, lam, False, trials)


def trimmed_mean_attack(ctx: AttackContext, spec: AttackSpec) -> UpdateSet:
    """Per coordinate, upload the honest max where ``s = -1`` and the honest min where ``s = +1``."""
    if not spec.byzantine:
        return ctx.honest
    honest = ctx.honest.vectors
    value = np.where(ctx.sign_vec < 0, honest.max(axis=0), honest.min(axis=0))
    out = np.array(honest)
    out[_byz_index(spec)] = value
    return ctx.honest.replace_vectors(out)


def hlm_attack(ctx: AttackContext, spec: AttackSpec) -> UpdateSet:
    """Shift each Byzantine client's own gradient by ``T_i / sqrt(d)`` against the sign vector."""
    if not spec.byzantine:
        return ctx.honest
    if ctx.huber_thresholds is None:
        raise ParameterError("hlm_attack needs the Huber thresholds")
    idx = _byz_index(spec)
    d = ctx.honest.d
    out = np.array(ctx.honest.vectors)
    offsets = ctx.huber_thresholds[idx, None] / math.sqrt(d)
    out[idx] = out[idx] - offsets * ctx.sign_vec
    return ctx.honest.replace_vectors(out)


def apply_attack(ctx: AttackContext, spec: AttackSpec, q: Optional[int] = None):
    """Run the configured strategy.

    Returns:
        ``(updates, success)`` where ``success`` is a bool for the Krum attack
        and ``None`` for every other strategy.
    """
    s = spec.strategy
    if s == "none":
        return ctx.honest, None
    if s == "sign_flip":
        return sign_flip(ctx, spec), None
    if s == "trimmed_mean_attack":
        return trimmed_mean_attack(ctx, spec), None
    if s == "hlm_attack":
        return hlm_attack(ctx, spec), None
    if q is None:
        q = len(spec.byzantine)
    outcome = krum_attack(ctx, spec, q)
    return outcome.updates, outcome.success


def byzantine_count(m: int, target_eps: float) -> int:
    return math.floor(target_eps * m + 1e-9)


def select_byzantine(
    m: int,
    weights,
    target_eps: float,
    rng: np.random.Generator,
    strategy: str = "none",
) -> AttackSpec:
    """Pick ``floor(target_eps * m)`` Byzantine clients uniformly at random."""
    if not 0 <= target_eps < 0.5:
        raise ParameterError(f"eps must lie in [0, 0.5), got {target_eps}")
    weights = np.asarray(weights, dtype=np.int64)
    if weights.shape != (m,):
        raise ParameterError(f"expected {m} client weights, got {weights.shape[0]}")
    q = byzantine_count(m, target_eps)
    chosen = np.sort(rng.choice(m, size=q, replace=False)) if q else np.empty(0, dtype=np.int64)
    byz = tuple(int(i) for i in chosen)
    return AttackSpec(
        strategy=strategy,
        byzantine=byz,
        target_eps=float(target_eps),
        realized_client_frac=q / m,
        realized_sample_frac=float(weights[chosen].sum()) / float(weights.sum()),
    )
