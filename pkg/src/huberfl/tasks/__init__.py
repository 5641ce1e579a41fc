"""Learning tasks: data, per-shard gradients and evaluation metrics."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .classifier import (
    ClassifierDataset,
    MlpShape,
    MlpWeights,
    blobs_synthesize,
    classifier_metric,
    mlp_gradient,
    mlp_init,
    mlp_loss,
)
from .idx import IdxParseError, mnist_load
from .regression import (
    ClientPerturbation,
    RegressionDataset,
    draw_perturbation,
    heterogeneous_targets,
    linreg_gradient,
    linreg_loss,
    linreg_resample,
    linreg_synthesize,
    linreg_true_gradient,
    regression_metric,
)


class _ShardCache:
    def __init__(self):
        self._key = None
        self._subsets = None

    def subsets(self, data, shards):
        if self._key is not shards:
            self._subsets = [data.subset(idx) for idx in shards]
            self._key = shards
        return self._subsets


class RegressionTask:
    """Regression train/test pair seen through flat parameter vectors."""

    metric_name = "rmse"

    def __init__(self, train: RegressionDataset, test: RegressionDataset):
        self.train = train
        self.test = test
        self.dim = train.d
        self.n_samples = train.n
        self._cache = _ShardCache()

    def initial_weights(self, rng: np.random.Generator) -> np.ndarray:
        return np.zeros(self.dim)

    def gradient(self, w, idx) -> np.ndarray:
        return linreg_gradient(w, self.train.subset(idx))

    def gradients(self, w, shards) -> np.ndarray:
        """Stacked client gradients, one row per shard in order."""
        return np.stack([linreg_gradient(w, s) for s in self._cache.subsets(self.train, shards)])

    def metric(self, w) -> float:
        return regression_metric(w, self.test)

    def true_gradient(self, w) -> Optional[np.ndarray]:
        return linreg_true_gradient(w, self.train)


class ClassifierTask:
    metric_name = "accuracy"

    def __init__(self, train: ClassifierDataset, test: ClassifierDataset, hidden: int = 32):
        self.train = train
        self.test = test
        self.shape = MlpShape(train.p, hidden, train.num_classes)
        self.dim = self.shape.size
        self.n_samples = train.n
        self._cache = _ShardCache()

    def initial_weights(self, rng: np.random.Generator) -> np.ndarray:
        return mlp_init(self.shape, rng).flatten()

    def gradient(self, w, idx) -> np.ndarray:
        return mlp_gradient(MlpWeights.unflatten(w, self.shape), self.train.subset(idx))

    def gradients(self, w, shards) -> np.ndarray:
        weights = MlpWeights.unflatten(w, self.shape)
        return np.stack([mlp_gradient(weights, s) for s in self._cache.subsets(self.train, shards)])

    def metric(self, w) -> float:
        return classifier_metric(MlpWeights.unflatten(w, self.shape), self.test)

    def true_gradient(self, w) -> Optional[np.ndarray]:
        return None


__all__ = [
    "ClassifierDataset",
    "ClassifierTask",
    "ClientPerturbation",
    "IdxParseError",
    "MlpShape",
    "MlpWeights",
    "RegressionDataset",
    "RegressionTask",
    "blobs_synthesize",
    "classifier_metric",
    "draw_perturbation",
    "heterogeneous_targets",
    "linreg_gradient",
    "linreg_loss",
    "linreg_resample",
    "linreg_synthesize",
    "linreg_true_gradient",
    "mlp_gradient",
    "mlp_init",
    "mlp_loss",
    "mnist_load",
    "regression_metric",
]
