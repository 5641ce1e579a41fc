"""Robust aggregation kernels over weighted sets of client vectors.

The central routine is :func:`huber_center`, which minimizes the sample-size
weighted multi-dimensional Huber loss with a modified Weiszfeld iteration.
Baselines (mean, geometric median, Krum, GMM, coordinate-wise median and
trimmed mean) share the same :class:`UpdateSet` input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ContractError, ParameterError

AGGREGATORS = ("mean", "huber", "gm", "krum", "gmm", "cwm", "cwtm")

DEFAULT_MAX_ITERS = 10_000


@dataclass(frozen=True)
class UpdateSet:
    """The m uploaded vectors and the sample count behind each one."""

    vectors: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64)
        if vectors.ndim == 1:
            vectors = vectors.reshape(-1, 1)
        if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 1:
            raise ContractError(
                f"vectors must form a non-empty (m, d) array, got shape {vectors.shape}"
            )
        weights = np.asarray(self.weights)
        if weights.shape != (vectors.shape[0],):
            raise ContractError(
                f"expected {vectors.shape[0]} weights, got shape {weights.shape}"
            )
        if not np.all(np.equal(np.mod(weights, 1), 0)) or np.any(weights < 1):
            raise ContractError("weights must be integers >= 1")
        if not np.all(np.isfinite(vectors)):
            raise ContractError("update vectors must be finite")
        vectors.setflags(write=False)
        weights = weights.astype(np.int64)
        weights.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def unweighted(cls, vectors) -> "UpdateSet":
        vectors = np.asarray(vectors, dtype=np.float64)
        m = vectors.shape[0]
        return cls(vectors, np.ones(m, dtype=np.int64))

    @property
    def m(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def replace_vectors(self, vectors) -> "UpdateSet":
        return UpdateSet(vectors, self.weights)


@dataclass(frozen=True)
class HuberParams:
    """Per-client thresholds plus Weiszfeld stopping controls.

    ``tol=None`` selects ``1e-8 * (1 + diameter)`` where the diameter is the
    bounding-box diagonal of the data.
    """

    thresholds: np.ndarray
    tol: Optional[float] = None
    max_iters: int = DEFAULT_MAX_ITERS

    def __post_init__(self):
        thresholds = np.atleast_1d(np.asarray(self.thresholds, dtype=np.float64))
        if thresholds.ndim != 1 or np.any(~np.isfinite(thresholds)) or np.any(thresholds <= 0):
            raise ParameterError("thresholds must be a 1-D sequence of positive finite values")
        if self.tol is not None and not self.tol > 0:
            raise ParameterError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ParameterError(f"max_iters must be >= 1, got {self.max_iters}")
        thresholds.setflags(write=False)
        object.__setattr__(self, "thresholds", thresholds)

    @classmethod
    def uniform(cls, threshold: float, m: int, **kwargs) -> "HuberParams":
        return cls(np.full(m, float(threshold)), **kwargs)


@dataclass(frozen=True)
class AggregationResult:
    center: np.ndarray
    iters_used: int
    objective: float
    grad_norm: float
    converged: bool


def _check_params(updates: UpdateSet, params: HuberParams) -> None:
    if params.thresholds.shape[0] != updates.m:
        raise ContractError(
            f"{params.thresholds.shape[0]} thresholds given for {updates.m} clients"
        )


def _as_point(s, d: int) -> np.ndarray:
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    if s.shape != (d,):
        raise ContractError(f"point has shape {s.shape}, expected ({d},)")
    return s


def data_diameter(updates: UpdateSet) -> float:
    """Bounding-box diagonal of the uploads (an upper bound on the diameter)."""
    span = updates.vectors.max(axis=0) - updates.vectors.min(axis=0)
    return float(np.linalg.norm(span))


def _distances(c: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum((vectors - c) ** 2, axis=1))


def huber_loss(u, threshold):
    """Scalar Huber loss: quadratic up to ``threshold``, linear beyond."""
    u = np.asarray(u, dtype=np.float64)
    t = np.asarray(threshold, dtype=np.float64)
    return np.where(u <= t, 0.5 * u * u, t * u - 0.5 * t * t)


def huber_objective(s, updates: UpdateSet, params: HuberParams) -> float:
    """Weighted Huber loss ``sum_i n_i * phi_i(||s - X_i||)``."""
    _check_params(updates, params)
    s = _as_point(s, updates.d)
    dist = _distances(s, updates.vectors)
    return float(np.dot(updates.weights, huber_loss(dist, params.thresholds)))


def _clip_factors(dist: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    # min{1, T/0} is taken as 1
    with np.errstate(divide="ignore"):
        ratio = np.where(dist > 0, thresholds / np.where(dist > 0, dist, 1.0), 1.0)
    return np.minimum(1.0, ratio)


def _objective_gradient(c: np.ndarray, updates: UpdateSet, thresholds: np.ndarray) -> np.ndarray:
    dist = _distances(c, updates.vectors)
    coef = updates.weights * _clip_factors(dist, thresholds)
    return coef @ (c - updates.vectors)


def weiszfeld_step(c, updates: UpdateSet, params: HuberParams) -> np.ndarray:
    """One reweighted-average step of the Huber-center iteration.

    Each upload gets weight ``n_i * min(1, T_i / ||c - X_i||)``; the new
    center is the weighted average of the uploads.
    """
    _check_params(updates, params)
    c = _as_point(c, updates.d)
    dist = _distances(c, updates.vectors)
    coef = updates.weights * _clip_factors(dist, params.thresholds)
    return (coef @ updates.vectors) / coef.sum()


def coordinate_median(updates: UpdateSet) -> np.ndarray:
    """Per-coordinate median, unweighted; even counts average the middle pair."""
    return np.median(updates.vectors, axis=0)


def huber_center(
    updates: UpdateSet,
    params: HuberParams,
    init=None,
) -> AggregationResult:
    """Minimize the weighted Huber objective by the modified Weiszfeld iteration.

    Starts from the coordinate-wise median unless ``init`` is given and stops
    when a step moves the center by at most ``tol``. Hitting ``max_iters``
    is reported through ``converged=False`` rather than raised.
    """
    _check_params(updates, params)
    tol = params.tol
    if tol is None:
        tol = 1e-8 * (1.0 + data_diameter(updates))
    c = coordinate_median(updates) if init is None else _as_point(init, updates.d).copy()

    converged = False
    iters = 0
    while iters < params.max_iters:
        nxt = weiszfeld_step(c, updates, params)
        iters += 1
        step = float(np.linalg.norm(nxt - c))
        c = nxt
        if step <= tol:
            converged = True
            break

    grad = _objective_gradient(c, updates, params.thresholds)
    return AggregationResult(
        center=c,
        iters_used=iters,
        objective=huber_objective(c, updates, params),
        grad_norm=float(np.linalg.norm(grad)),
        converged=converged,
    )


def weighted_mean(updates: UpdateSet) -> np.ndarray:
    return (updates.weights @ updates.vectors) / updates.weights.sum()


def geometric_median(
    updates: UpdateSet,
    smoothing: Optional[float] = None,
    tol: Optional[float] = None,
    max_iters: int = DEFAULT_MAX_ITERS,
    init=None,
) -> np.ndarray:
    """Weighted geometric median by Weiszfeld's iteration.

    Starts from the weighted mean. Distances below ``smoothing`` count as a
    coincidence with that upload; the step then follows the Vardi-Zhang
    rule, which stops at the upload if it is optimal and otherwise moves
    off it instead of sticking there.
    """
    diam = data_diameter(updates)
    if smoothing is None:
        smoothing = 1e-12 * (1.0 + diam)
    if tol is None:
        tol = 1e-8 * (1.0 + diam)
    if not smoothing > 0:
        raise ParameterError(f"smoothing must be positive, got {smoothing}")
    if updates.m == 1:
        return updates.vectors[0].copy()

    X = updates.vectors
    w = updates.weights.astype(np.float64)
    c = weighted_mean(updates) if init is None else _as_point(init, updates.d).copy()
    for _ in range(max_iters):
        dist = _distances(c, X)
        near = dist < smoothing
        far = ~near
        if not far.any():
            break
        coef = w[far] / dist[far]
        target = (coef @ X[far]) / coef.sum()
        if near.any():
            pull = float(np.linalg.norm(coef @ (X[far] - c)))
            mass = float(w[near].sum())
            if pull <= mass:
                break
            nxt = (1 - mass / pull) * target + (mass / pull) * c
        else:
            nxt = target
        step = float(np.linalg.norm(nxt - c))
        c = nxt
        if step <= tol:
            break
    return c


def krum_scores(updates: UpdateSet, q: int) -> np.ndarray:
    m = updates.m
    k = m - q - 2
    if k < 1:
        raise ParameterError(f"krum needs m - q - 2 >= 1, got m={m}, q={q}")
    sq = cdist(updates.vectors, updates.vectors, "sqeuclidean")
    np.fill_diagonal(sq, np.inf)
    nearest = np.sort(sq, axis=1)[:, :k]
    return nearest.sum(axis=1)


def krum_index(updates: UpdateSet, q: int) -> int:
    """Index chosen by Krum; ties resolve to the smallest index."""
    return int(np.argmin(krum_scores(updates, q)))


def krum(updates: UpdateSet, q: int) -> np.ndarray:
    return updates.vectors[krum_index(updates, q)].copy()


def gmm_partition(m: int, q: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle client indices and split them into ``2q + 1`` near-equal batches."""
    b = 2 * q + 1
    if q < 0 or b > m:
        raise ParameterError(f"gmm needs 1 <= 2q + 1 <= m, got m={m}, q={q}")
    return np.array_split(rng.permutation(m), b)


def gmm(updates: UpdateSet, q: int, rng: np.random.Generator) -> np.ndarray:
    """Geometric median of the unweighted means of ``2q + 1`` random batches."""
    batches = gmm_partition(updates.m, q, rng)
    means = np.stack([updates.vectors[idx].mean(axis=0) for idx in batches])
    return geometric_median(UpdateSet.unweighted(means))


def trim_count(m: int, eps: float) -> int:
    # guards eps*m landing a hair above an integer, e.g. 0.3 * 10
    return math.ceil(eps * m - 1e-9)


def coordinate_trimmed_mean(updates: UpdateSet, eps: float) -> np.ndarray:
    """Drop the ``ceil(eps*m)`` largest and smallest values per coordinate, average the rest."""
    if not 0 <= eps < 0.5:
        raise ParameterError(f"trim fraction must lie in [0, 0.5), got {eps}")
    m = updates.m
    t = trim_count(m, eps)
    if m - 2 * t < 1:
        raise ParameterError(f"trimming {t} per side leaves no values out of {m}")
    if t == 0:
        return updates.vectors.mean(axis=0)
    ordered = np.sort(updates.vectors, axis=0)
    return ordered[t : m - t].mean(axis=0)


def adaptive_thresholds(weights: Sequence[int], T0: float, M: float) -> np.ndarray:
    """Per-client thresholds ``T0 + M / sqrt(n_i)``."""
    if T0 < 0 or M < 0 or not (T0 + M) > 0:
        raise ParameterError(f"need T0 >= 0, M >= 0 and T0 + M > 0, got T0={T0}, M={M}")
    n = np.asarray(weights, dtype=np.float64)
    return T0 + M / np.sqrt(n)


@dataclass
class AggregatorSpec:
    """Aggregator choice together with whatever parameters it needs.

    For ``huber`` either ``threshold`` (shared by all clients) or the pair
    ``t0``/``bigm`` (adaptive per-client thresholds) must be set.
    """

    name: str
    threshold: Optional[float] = None
    t0: Optional[float] = None
    bigm: Optional[float] = None
    trim: Optional[float] = None
    q: Optional[int] = None
    tol: Optional[float] = None
    max_iters: int = DEFAULT_MAX_ITERS
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in AGGREGATORS:
            raise ParameterError(
                f"unknown aggregator {self.name!r}; choose from {', '.join(AGGREGATORS)}"
            )

    def thresholds_for(self, weights) -> np.ndarray:
        weights = np.asarray(weights)
        if self.threshold is not None:
            return np.full(weights.shape[0], float(self.threshold))
        if self.t0 is not None and self.bigm is not None:
            return adaptive_thresholds(weights, self.t0, self.bigm)
        raise ParameterError("huber thresholds need either threshold or both t0 and bigm")

    def aggregate(self, updates: UpdateSet, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        name = self.name
        if name == "mean":
            return weighted_mean(updates)
        if name == "huber":
            params = HuberParams(
                self.thresholds_for(updates.weights), tol=self.tol, max_iters=self.max_iters
            )
            return huber_center(updates, params).center
        if name == "gm":
            return geometric_median(updates, tol=self.tol, max_iters=self.max_iters)
        if name == "cwm":
            return coordinate_median(updates)
        if name == "cwtm":
            if self.trim is None:
                raise ParameterError("cwtm requires a trim fraction")
            return coordinate_trimmed_mean(updates, self.trim)
        if self.q is None:
            raise ParameterError(f"{name} requires q")
        if name == "krum":
            return krum(updates, self.q)
        if rng is None:
            raise ParameterError("gmm requires a random generator")
        return gmm(updates, self.q, rng)
