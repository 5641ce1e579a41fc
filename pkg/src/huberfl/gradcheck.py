"""Central finite-difference checks of the analytic task gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tasks import (
    ClassifierDataset,
    MlpShape,
    MlpWeights,
    linreg_gradient,
    linreg_loss,
    linreg_synthesize,
    mlp_gradient,
    mlp_init,
    mlp_loss,
)

STEP = 1e-5
REL_TOL = 1e-5


@dataclass
class GroupCheck:
    section: str
    group: str
    rel_error: float
    worst: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.rel_error <= REL_TOL


def central_differences(fn, x: np.ndarray, step: float = STEP) -> np.ndarray:
    """Numerical gradient of scalar ``fn`` at ``x``, one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    out = np.empty_like(x)
    for k in range(x.size):
        orig = x[k]
        x[k] = orig + step
        hi = fn(x)
        x[k] = orig - step
        lo = fn(x)
        x[k] = orig
        out[k] = (hi - lo) / (2 * step)
    return out


def compare(section: str, group: str, analytic, numeric, offset: int = 0) -> GroupCheck:
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    diff = np.abs(analytic - numeric)
    rel = float(np.linalg.norm(diff) / scale)
    worst = [int(k) + offset for k in np.argsort(-diff)[:5]]
    return GroupCheck(section, group, rel, worst)


def check_regression(perturb: float = 0.0, seed: int = 0) -> list[GroupCheck]:
    rng = np.random.default_rng(seed)
    data = linreg_synthesize(6, 7, rng)
    w = rng.standard_normal(6)
    analytic = linreg_gradient(w, data) + perturb
    numeric = central_differences(lambda v: linreg_loss(v, data), w)
    return [compare("regression", "weights", analytic, numeric)]


def check_mlp(perturb: float = 0.0, seed: int = 0) -> list[GroupCheck]:
    rng = np.random.default_rng(seed)
    shape = MlpShape(inputs=6, hidden=5, classes=4)
    images = rng.uniform(0, 1, size=(5, shape.inputs))
    labels = rng.integers(0, shape.classes, size=5)
    shard = ClassifierDataset(images, labels, shape.classes)
    weights = mlp_init(shape, rng)
    # nonzero biases so their gradients are exercised away from the init point
    weights.b1 = rng.normal(0, 0.1, shape.hidden)
    weights.b2 = rng.normal(0, 0.1, shape.classes)
    flat = weights.flatten()

    analytic = mlp_gradient(weights, shard) + perturb
    numeric = central_differences(lambda v: mlp_loss(MlpWeights.unflatten(v, shape), shard), flat)

    p, h, k = shape.inputs, shape.hidden, shape.classes
    bounds = {"w1": (0, p * h), "b1": (p * h, p * h + h)}
    bounds["w2"] = (bounds["b1"][1], bounds["b1"][1] + h * k)
    bounds["b2"] = (bounds["w2"][1], shape.size)
    return [
        compare("mlp", name, analytic[a:b], numeric[a:b], offset=a)
        for name, (a, b) in bounds.items()
    ]


def run_all(perturb: float = 0.0) -> list[GroupCheck]:
    return check_regression(perturb) + check_mlp(perturb)


def format_report(checks) -> str:
    lines = []
    section = None
    for c in checks:
        if c.section != section:
            section = c.section
            lines.append(f"[{section}]")
        status = "ok" if c.ok else "FAIL"
        line = f"  {c.group:<8} rel_err={c.rel_error:.3e}  {status}"
        if not c.ok:
            line += f"  worst parameter indices: {', '.join(map(str, c.worst))}"
        lines.append(line)
    return "\n".join(lines)
