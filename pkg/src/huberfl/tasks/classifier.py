"""One-hidden-layer ReLU classifier trained with softmax cross-entropy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError


@dataclass(frozen=True)
class ClassifierDataset:
    images: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if self.images.ndim != 2:
            raise ContractError(f"images must be an (N, p) matrix, got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ContractError("labels must have one entry per image")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ContractError(f"labels must lie in 0..{self.num_classes - 1}")

    @property
    def n(self) -> int:
        return self.images.shape[0]

    @property
    def p(self) -> int:
        return self.images.shape[1]

    def subset(self, idx) -> "ClassifierDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return ClassifierDataset(self.images[idx], self.labels[idx], self.num_classes)


@dataclass(frozen=True)
class MlpShape:
    inputs: int
    hidden: int
    classes: int

    @property
    def size(self) -> int:
        p, h, k = self.inputs, self.hidden, self.classes
        return p * h + h + h * k + k


@dataclass
class MlpWeights:
    w1: np.ndarray  # (p, h)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (h, K)
    b2: np.ndarray  # (K,)

    @property
    def shape(self) -> MlpShape:
        return MlpShape(self.w1.shape[0], self.w1.shape[1], self.w2.shape[1])

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    @classmethod
    def unflatten(cls, flat, shape: MlpShape) -> "MlpWeights":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (shape.size,):
            raise ContractError(f"flat vector has length {flat.size}, expected {shape.size}")
        p, h, k = shape.inputs, shape.hidden, shape.classes
        a = p * h
        b = a + h
        c = b + h * k
        return cls(
            flat[:a].reshape(p, h).copy(),
            flat[a:b].copy(),
            flat[b:c].reshape(h, k).copy(),
            flat[c:].copy(),
        )


def mlp_init(shape: MlpShape, rng: np.random.Generator) -> MlpWeights:
    """Weights ~ N(0, 1/fan_in), zero biases."""
    p, h, k = shape.inputs, shape.hidden, shape.classes
    return MlpWeights(
        rng.standard_normal((p, h)) / np.sqrt(p),
        np.zeros(h),
        rng.standard_normal((h, k)) / np.sqrt(h),
        np.zeros(k),
    )


def _forward(weights: MlpWeights, x: np.ndarray):
    pre = x @ weights.w1 + weights.b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ weights.w2 + weights.b2
    return pre, hidden, logits


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_shard(weights: MlpWeights, shard: ClassifierDataset):
    if shard.n == 0:
        raise ContractError("cannot take a gradient over an empty shard")
    if shard.p != weights.w1.shape[0]:
        raise ContractError(f"inputs have {shard.p} features, network expects {weights.w1.shape[0]}")
    if shard.num_classes != weights.w2.shape[1]:
        raise ContractError(
            f"dataset has {shard.num_classes} classes, network outputs {weights.w2.shape[1]}"
        )


def mlp_loss(weights: MlpWeights, shard: ClassifierDataset) -> float:
    """Mean cross-entropy over the shard."""
    _check_shard(weights, shard)
    _, _, logits = _forward(weights, shard.images)
    logp = _log_softmax(logits)
    return float(-logp[np.arange(shard.n), shard.labels].mean())


def mlp_gradient(weights: MlpWeights, shard: ClassifierDataset) -> np.ndarray:
    """Backpropagated gradient of the mean cross-entropy, flattened like :meth:`MlpWeights.flatten`."""
    _check_shard(weights, shard)
    x = shard.images
    n = shard.n
    pre, hidden, logits = _forward(weights, x)
    delta2 = np.exp(_log_softmax(logits))
    delta2[np.arange(n), shard.labels] -= 1.0
    delta2 /= n
    g_w2 = hidden.T @ delta2
    g_b2 = delta2.sum(axis=0)
    delta1 = (delta2 @ weights.w2.T) * (pre > 0)
    g_w1 = x.T @ delta1
    g_b1 = delta1.sum(axis=0)
    return MlpWeights(g_w1, g_b1, g_w2, g_b2).flatten()


def predict(weights: MlpWeights, images: np.ndarray) -> np.ndarray:
    _, _, logits = _forward(weights, images)
    return np.argmax(logits, axis=1)


def classifier_metric(weights: MlpWeights, test: ClassifierDataset) -> float:
    """Test accuracy; argmax ties go to the lowest class index."""
    if test.n == 0:
        raise ContractError("test set is empty")
    return float(np.mean(predict(weights, test.images) == test.labels))


def blobs_synthesize(
    K: int,
    N: int,
    p: int,
    spread: float,
    rng: np.random.Generator,
    centers=None,
    center_scale: float = 0.5,
) -> ClassifierDataset:
    """Gaussian class blobs clipped to [0, 1], a small stand-in for MNIST.

    Class centers are ``N(0, center_scale^2)`` per pixel unless ``centers``
    is given. Each sample adds ``spread``-scaled Gaussian noise to its
    class center and is clipped to [0, 1], so roughly half the pixels sit
    at exactly zero, much like the dark background of digit images.
    """
    if K < 2:
        raise ContractError(f"need at least two classes, got K={K}")
    if centers is None:
        centers = center_scale * rng.standard_normal((K, p))
    centers = np.asarray(centers, dtype=np.float64)
    if centers.shape != (K, p):
        raise ContractError(f"centers must have shape ({K}, {p}), got {centers.shape}")
    labels = rng.integers(0, K, size=N)
    noise = rng.standard_normal((N, p))
    images = np.clip(centers[labels] + spread * noise, 0.0, 1.0)
    return ClassifierDataset(images, labels.astype(np.int64), K)
