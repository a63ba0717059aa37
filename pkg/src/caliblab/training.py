"""Training objectives, the Adam loop, and post-hoc model probes.

Three objectives share one mechanism: a batch of (input, soft-target)
pairs fed to a soft-label cross-entropy.

* plain risk minimization uses the raw points with one-hot targets,
* pair mixing draws, per batch element, two batch indices and a uniform
  weight, training on the convex combination with matching soft labels,
* (d+1)-point mixing generalizes that to uniform simplex weights over
  d+1 drawn indices.

Index draws are unconstrained (no admissibility filtering) in training,
which is how stochastic mixing is run in practice; the admissible-tuple
machinery lives in the mixing module for verification. Pair mixing is
exactly the d = 1 case and reproduces identical values under an identical
seed schedule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import LabeledDataset
from .errors import ParameterError, TrainingDivergedError
from .mixing import MixDistribution
from .network import SoftmaxClassifier, log_softmax, softmax

__all__ = [
    "TrainConfig",
    "InterpolationReport",
    "RegularityProbe",
    "soft_cross_entropy",
    "soft_cross_entropy_grads",
    "mixed_batch",
    "one_hot",
    "erm_loss",
    "mixup_loss",
    "dmixup_loss",
    "train",
    "check_interpolation",
    "logit_gap_probe",
    "save_loss_history",
]

OBJECTIVES = ("erm", "mixup", "dmixup")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; Adam moments follow the usual defaults."""

    objective: str = "erm"
    d: int = 1
    epochs: int = 200
    batch_size: int = 500
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden: tuple[int, ...] = (128, 128)
    seed: int = 0

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ParameterError(f"objective must be one of {OBJECTIVES}")
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if self.d < 1:
            raise ParameterError("d must be >= 1")
        if any(h < 1 for h in self.hidden):
            raise ParameterError("hidden widths must be positive")

    @property
    def mix_dim(self) -> int:
        return 1 if self.objective == "mixup" else self.d


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels - 1] = 1.0
    return out


# -- the shared loss ------------------------------------------------------------


def soft_cross_entropy(model: SoftmaxClassifier, inputs: np.ndarray, targets: np.ndarray) -> float:
    """Mean over rows of -sum_y target_y * log softmax(logits)_y."""
    logp = log_softmax(model.logits(inputs))
    return float(-(targets * logp).sum() / inputs.shape[0])


def soft_cross_entropy_grads(
    model: SoftmaxClassifier, inputs: np.ndarray, targets: np.ndarray
):
    """(loss, parameter gradients) for the soft-target cross-entropy."""
    logits, activations = model._forward(inputs)
    logp = log_softmax(logits)
    loss = float(-(targets * logp).sum() / inputs.shape[0])
    dlogits = (softmax(logits) - targets) / inputs.shape[0]
    return loss, model.backward(activations, dlogits)


def mixed_batch(
    points: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    d: int,
    rng: np.random.Generator,
):
    """One convex combination per batch element: (d+1) indices drawn with
    replacement from the batch, uniform simplex weights, soft labels equal
    to the per-class weight totals. Indices are drawn before weights, which
    fixes the stream order that the d = 1 / pair-mixing identity relies on."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    b = points.shape[0]
    idx = rng.integers(0, b, size=(b, d + 1))
    lam = MixDistribution(d=d).sample_batch(rng, b)
    inputs = np.einsum("bj,bjd->bd", lam, points[idx])
    targets = np.zeros((b, n_classes))
    rows = np.repeat(np.arange(b), d + 1)
    np.add.at(targets, (rows, (labels[idx] - 1).ravel()), lam.ravel())
    return inputs, targets


# -- objective-specific losses -----------------------------------------------------


def erm_loss(model: SoftmaxClassifier, points: np.ndarray, labels: np.ndarray,
             n_classes: int | None = None) -> float:
    """Mean negative log softmax probability of the true labels."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] == 0:
        raise ParameterError("batch must be nonempty")
    k = n_classes or model.n_classes
    return soft_cross_entropy(model, points, one_hot(labels, k))


def mixup_loss(
    model: SoftmaxClassifier,
    points: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    mix: MixDistribution,
    seed: int,
) -> float:
    """Monte Carlo pair-mixing cross-entropy: one sampled pair and uniform
    weight per batch element."""
    if mix.d != 1:
        raise ParameterError("pair mixing uses a 1-dimensional mixing law")
    if np.asarray(points).shape[0] < 2:
        raise ParameterError("need a batch of at least 2 points")
    rng = np.random.default_rng(seed)
    inputs, targets = mixed_batch(points, labels, n_classes, 1, rng)
    return soft_cross_entropy(model, inputs, targets)


def dmixup_loss(
    model: SoftmaxClassifier,
    points: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    d: int,
    mix: MixDistribution,
    seed: int,
) -> float:
    """Monte Carlo (d+1)-point mixing cross-entropy; at d = 1 this equals
    ``mixup_loss`` under the same seed."""
    if mix.d != d:
        raise ParameterError("mix distribution dimension must equal d")
    if np.asarray(points).shape[0] < d + 1:
        raise ParameterError(f"need a batch of at least {d + 1} points")
    rng = np.random.default_rng(seed)
    inputs, targets = mixed_batch(points, labels, n_classes, d, rng)
    return soft_cross_entropy(model, inputs, targets)


# -- Adam loop ------------------------------------------------------------------


class _Adam:
    def __init__(self, params: list[np.ndarray], lr: float, beta1: float, beta2: float, eps: float):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def train(data: LabeledDataset, cfg: TrainConfig) -> SoftmaxClassifier:
    """Train a fresh classifier on the dataset under the configured
    objective. Inputs are standardized by the training data's mean and
    standard deviation (stored on the model). Shuffling, initialization,
    and mixing draws all come from one seeded stream, so identical
    (data, cfg) runs give identical weights. Aborts with
    TrainingDivergedError on a non-finite loss. The per-step loss history
    is recorded on the returned model."""
    if cfg.batch_size > data.n:
        raise ParameterError("batch_size cannot exceed the dataset size")
    rng = np.random.default_rng(cfg.seed)
    sizes = [data.dim, *cfg.hidden, data.n_classes]
    model = SoftmaxClassifier.initialize(sizes, rng)
    scale = data.points.std(axis=0)
    model.set_input_standardization(
        data.points.mean(axis=0), np.where(scale > 0, scale, 1.0)
    )
    adam = _Adam(model.parameters(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    params = model.parameters()
    step = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(data.n)
        for start in range(0, data.n, cfg.batch_size):
            chunk = perm[start : start + cfg.batch_size]
            x, y = data.points[chunk], data.labels[chunk]
            if cfg.objective == "erm":
                inputs, targets = x, one_hot(y, data.n_classes)
            else:
                inputs, targets = mixed_batch(x, y, data.n_classes, cfg.mix_dim, rng)
            loss, grads = soft_cross_entropy_grads(model, inputs, targets)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at step {step}")
            adam.step(params, grads)
            model.loss_history.append((step, loss))
            step += 1
    return model


# -- probes ----------------------------------------------------------------------


@dataclass(frozen=True)
class InterpolationReport:
    """Per-training-point logit margins.

    ``gaps`` holds the true-class logit minus the best other logit;
    ``spreads`` holds the widest difference among the non-true logits. A
    point counts as interpolated when its gap exceeds log k.
    """

    gaps: np.ndarray
    spreads: np.ndarray
    threshold: float
    fraction_interpolating: float

    @property
    def mean_gap(self) -> float:
        return float(self.gaps.mean())

    @property
    def mean_spread(self) -> float:
        return float(self.spreads.mean())


def check_interpolation(model: SoftmaxClassifier, data: LabeledDataset) -> InterpolationReport:
    logits = model.logits(data.points)
    rows = np.arange(data.n)
    true = logits[rows, data.labels - 1]
    others = logits.copy()
    others[rows, data.labels - 1] = -np.inf
    gaps = true - others.max(axis=1)
    finite_others = np.where(np.isinf(others), np.inf, others)
    spreads = others.max(axis=1) - finite_others.min(axis=1)
    threshold = float(np.log(data.n_classes))
    return InterpolationReport(
        gaps=gaps,
        spreads=spreads,
        threshold=threshold,
        fraction_interpolating=float(np.mean(gaps > threshold)),
    )


@dataclass(frozen=True)
class RegularityProbe:
    """Sphere-sampling schedule for measuring how the correct-class logit
    margin decays with distance from the training points."""

    radii: tuple[float, ...] = tuple(float(r) for r in range(1, 11))
    samples_per_sphere: int = 500

    def __post_init__(self):
        radii = tuple(float(r) for r in self.radii)
        if not radii:
            raise ParameterError("radii must be nonempty")
        if any(r < 0 for r in radii) or list(radii) != sorted(radii):
            raise ParameterError("radii must be nonnegative and ascending")
        if self.samples_per_sphere < 1:
            raise ParameterError("samples_per_sphere must be >= 1")
        object.__setattr__(self, "radii", radii)


def logit_gap_probe(
    model: SoftmaxClassifier,
    data: LabeledDataset,
    probe: RegularityProbe,
    seed: int,
) -> np.ndarray:
    """Mean correct-class-vs-best-other logit gap at each probe radius,
    averaged over uniform samples on the radius-r sphere around every
    training point. Radius 0 degenerates to the interpolation gaps. Each
    point uses its own derived seed so sharding over points cannot change
    the result."""
    sums = np.zeros(len(probe.radii))
    count = 0
    for i in range(data.n):
        rng = np.random.default_rng([seed, i])
        center = data.points[i]
        label = data.labels[i]
        for r_idx, radius in enumerate(probe.radii):
            raw = rng.standard_normal((probe.samples_per_sphere, data.dim))
            norms = np.linalg.norm(raw, axis=1, keepdims=True)
            norms[norms == 0.0] = 1.0
            x = center + radius * raw / norms
            logits = model.logits(x)
            true = logits[:, label - 1]
            others = logits.copy()
            others[:, label - 1] = -np.inf
            sums[r_idx] += float((true - others.max(axis=1)).mean())
        count += 1
    return sums / count


def save_loss_history(model: SoftmaxClassifier, path) -> None:
    """CSV ``step,loss`` of the recorded per-step training losses."""
    lines = ["step,loss"]
    for step, loss in model.loss_history:
        lines.append(f"{step},{repr(float(loss))}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
