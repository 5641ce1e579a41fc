"""Synthetic linear regression: data generation, gradients and RMSE.

Features are standard normal, so the population gradient of the squared
loss is simply ``w - w*``; the federation loop uses this to measure the
aggregation error exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError


@dataclass(frozen=True)
class RegressionDataset:
    features: np.ndarray
    targets: np.ndarray
    true_weights: np.ndarray
    noise_std: float = 1.0

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ContractError(f"features must be a non-empty (N, d) matrix, got {self.features.shape}")
        if self.targets.shape != (self.features.shape[0],):
            raise ContractError("targets must have one entry per feature row")
        if self.true_weights.shape != (self.features.shape[1],):
            raise ContractError("true_weights must have length d")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "RegressionDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return RegressionDataset(self.features[idx], self.targets[idx], self.true_weights, self.noise_std)


@dataclass(frozen=True)
class ClientPerturbation:
    """Per-client offsets added to ``w*`` in the heterogeneous model."""

    deltas: np.ndarray
    sigma_param: float


def linreg_synthesize(
    d: int,
    N: int,
    rng: np.random.Generator,
    noise_std: float = 1.0,
    true_weights=None,
) -> RegressionDataset:
    """Draw ``w* ~ N(0, I)`` (unless given), ``U ~ N(0, I)`` and ``V = <U, w*> + W``."""
    if d < 1 or N < 1:
        raise ContractError(f"need d >= 1 and N >= 1, got d={d}, N={N}")
    if true_weights is None:
        w_star = rng.standard_normal(d)
    else:
        w_star = np.array(true_weights, dtype=np.float64)
        if w_star.shape != (d,):
            raise ContractError(f"true_weights must have length {d}")
    U = rng.standard_normal((N, d))
    noise = rng.standard_normal(N) * noise_std if noise_std > 0 else np.zeros(N)
    V = U @ w_star + noise
    return RegressionDataset(U, V, w_star, float(noise_std))


def linreg_resample(dataset: RegressionDataset, N: int, rng: np.random.Generator) -> RegressionDataset:
    """Fresh samples from the same model, e.g. a held-out test set."""
    return linreg_synthesize(dataset.d, N, rng, dataset.noise_std, dataset.true_weights)


def _check_w(w, d):
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (d,):
        raise ContractError(f"parameter vector has shape {w.shape}, expected ({d},)")
    return w


def linreg_loss(w, data: RegressionDataset) -> float:
    """Mean of ``0.5 * (<u, w> - v)^2`` over the samples."""
    w = _check_w(w, data.d)
    r = data.features @ w - data.targets
    return 0.5 * float(np.mean(r * r))


def linreg_gradient(w, shard: RegressionDataset) -> np.ndarray:
    """Mean per-sample gradient ``(1/n) sum_j (<u_j, w> - v_j) u_j``."""
    if shard.n == 0:
        raise ContractError("cannot take a gradient over an empty shard")
    w = _check_w(w, shard.d)
    r = shard.features @ w - shard.targets
    return (r @ shard.features) / shard.n


def linreg_true_gradient(w, dataset: RegressionDataset) -> np.ndarray:
    """Population gradient ``w - w*`` (valid for identity feature covariance)."""
    w = _check_w(w, dataset.d)
    return w - dataset.true_weights


def regression_metric(w, test: RegressionDataset) -> float:
    """Root of the mean squared residual on ``test``."""
    w = _check_w(w, test.d)
    r = test.features @ w - test.targets
    return float(np.sqrt(np.mean(r * r)))


def draw_perturbation(m: int, d: int, sigma_param: float, rng: np.random.Generator) -> ClientPerturbation:
    """Client offsets with i.i.d. ``N(0, sigma_param)`` entries (``sigma_param`` is a variance)."""
    if sigma_param < 0:
        raise ContractError(f"sigma_param must be >= 0, got {sigma_param}")
    deltas = rng.standard_normal((m, d)) * np.sqrt(sigma_param)
    return ClientPerturbation(deltas, float(sigma_param))


def heterogeneous_targets(
    dataset: RegressionDataset,
    perturbation: ClientPerturbation,
    assignment,
) -> RegressionDataset:
    """Rebuild targets so sample j follows ``w* + delta(client of j)``.

    The original noise draws are kept. The returned dataset's ``true_weights``
    is the minimizer of the pooled risk, ``w*`` plus the sample-weighted mean
    offset.
    """
    assignment = np.asarray(assignment)
    m = perturbation.deltas.shape[0]
    if assignment.shape != (dataset.n,):
        raise ContractError(f"assignment must name a client for each of the {dataset.n} samples")
    if np.any(assignment < 0) or np.any(assignment >= m):
        raise ContractError("assignment refers to a client outside the perturbation table")
    shift = np.einsum("ij,ij->i", dataset.features, perturbation.deltas[assignment])
    counts = np.bincount(assignment, minlength=m).astype(np.float64)
    pooled = dataset.true_weights + (counts @ perturbation.deltas) / dataset.n
    return RegressionDataset(dataset.features, dataset.targets + shift, pooled, dataset.noise_std)
