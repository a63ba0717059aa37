"""Synthetic data distributions with exact posterior oracles.

Two generative families are provided:

* overlapping intervals on the line, where consecutive classes share a
  configurable fraction of their support, and
* a pair of isotropic Gaussians in R^d separated by a mean shift.

Both expose closed-form posteriors p(Y | X = x), which is what makes
oracle temperature fitting and exact KL evaluation possible downstream.
A label-noise injector pairs classes up and flips labels to the partner
class with a fixed probability.

Class labels are 1-based (1..k) everywhere in this package; probability
vectors use position ``i`` for class ``i + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoisePlanError, OutOfSupportError, ParameterError

__all__ = [
    "IntervalSpec",
    "GaussianPairSpec",
    "LabeledDataset",
    "NoisePlan",
    "sample_intervals",
    "interval_posterior",
    "sample_gaussians",
    "gaussian_posterior",
    "inject_label_noise",
    "random_noise_plan",
    "save_dataset",
    "load_dataset",
]


def _fmt(value: float) -> str:
    """Shortest decimal string that round-trips to the same float64."""
    return repr(float(value))


@dataclass(frozen=True)
class LabeledDataset:
    """N points in R^d with integer class labels in 1..k.

    ``seed`` and ``source`` record provenance so any dataset can be
    regenerated bit-identically.
    """

    points: np.ndarray
    labels: np.ndarray
    n_classes: int
    seed: int
    source: str = ""

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim == 1:
            points = points[:, None]
        labels = np.asarray(self.labels, dtype=np.int64)
        if points.ndim != 2 or labels.ndim != 1:
            raise ParameterError("points must be (N, d) and labels (N,)")
        if points.shape[0] != labels.shape[0]:
            raise ParameterError("points and labels must have equal length")
        if labels.size and (labels.min() < 1 or labels.max() > self.n_classes):
            raise ParameterError(f"labels must lie in 1..{self.n_classes}")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class IntervalSpec:
    """Line distribution with k classes on pairwise overlapping unit intervals.

    Class y is uniform on [start(y), start(y) + 1] where
    ``start(y) = floor((y - 1) / 2) * k + alpha * parity(y - 1)``.
    Consecutive odd/even classes overlap on a region of width
    ``1 - alpha``; distinct pairs sit k apart and never touch.
    The class prior is uniform over 1..k.
    """

    k: int
    alpha: float

    def __post_init__(self):
        if self.k < 2 or self.k % 2 != 0:
            raise ParameterError(f"k must be an even integer >= 2, got {self.k}")
        if not (0.0 <= self.alpha <= 1.0):
            raise ParameterError(f"alpha must lie in [0, 1], got {self.alpha}")

    def support_starts(self) -> np.ndarray:
        """start(y) for y = 1..k, as a length-k array."""
        y = np.arange(1, self.k + 1)
        return ((y - 1) // 2) * self.k + self.alpha * ((y - 1) % 2)

    def class_interval(self, y: int) -> tuple[float, float]:
        """Support [lo, hi] of class y."""
        if not 1 <= y <= self.k:
            raise ParameterError(f"class must lie in 1..{self.k}")
        lo = ((y - 1) // 2) * self.k + self.alpha * ((y - 1) % 2)
        return lo, lo + 1.0

    def overlap_interval(self, y: int) -> tuple[float, float]:
        """Overlap [lo, hi] between odd class y and class y + 1 (width 1 - alpha)."""
        if y % 2 != 1 or y >= self.k:
            raise ParameterError("overlap regions are indexed by odd y < k")
        lo, hi = self.class_interval(y)
        return lo + self.alpha, hi

    # -- sampling / posterior -------------------------------------------------

    def sample(self, n: int, seed: int) -> LabeledDataset:
        return sample_intervals(self, n, seed)

    def sample_points(self, n: int, seed: int) -> np.ndarray:
        """Draw n points from the x-marginal (labels discarded)."""
        return self.sample(n, seed).points

    def posterior_batch(self, points: np.ndarray) -> np.ndarray:
        """Exact p(Y | X = x) for each row of ``points``, shape (n, k)."""
        x = np.asarray(points, dtype=np.float64)
        if x.ndim == 2:
            if x.shape[1] != 1:
                raise ParameterError("interval points must be 1-dimensional")
            x = x[:, 0]
        starts = self.support_starts()
        # Membership in each class support, (n, k).
        inside = (x[:, None] >= starts[None, :]) & (x[:, None] <= starts[None, :] + 1.0)
        counts = inside.sum(axis=1)
        if np.any(counts == 0):
            bad = float(x[np.argmax(counts == 0)])
            raise OutOfSupportError(f"x={bad} is outside the support of every class")
        post = inside / counts[:, None]
        return post


@dataclass(frozen=True)
class GaussianPairSpec:
    """Two isotropic unit-covariance Gaussians: class 1 at the origin,
    class 2 at ``mu``. Class priors are 1/2 each; the posterior is a
    logistic function of ``mu @ x``.
    """

    mu: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        if mu.ndim != 1 or mu.size < 1:
            raise ParameterError("mu must be a non-empty vector")
        object.__setattr__(self, "mu", mu)

    @property
    def dim(self) -> int:
        return self.mu.size

    @classmethod
    def constant(cls, value: float, dim: int) -> "GaussianPairSpec":
        """Mean shift value * (1, ..., 1) in R^dim."""
        if dim < 1:
            raise ParameterError("dim must be >= 1")
        return cls(np.full(dim, float(value)))

    def sample(self, n: int, seed: int) -> LabeledDataset:
        return sample_gaussians(self, n, seed)

    def sample_points(self, n: int, seed: int) -> np.ndarray:
        return self.sample(n, seed).points

    def posterior_batch(self, points: np.ndarray) -> np.ndarray:
        x = np.asarray(points, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.dim:
            raise ParameterError(f"points must have dimension {self.dim}")
        # p(Y=2 | x) = sigmoid(mu @ x - |mu|^2 / 2), from the density ratio of
        # N(mu, I) against N(0, I) with equal priors.
        t = x @ self.mu - 0.5 * float(self.mu @ self.mu)
        p2 = _sigmoid(t)
        return np.column_stack([1.0 - p2, p2])


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t, dtype=np.float64)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


# -- operations ---------------------------------------------------------------


def sample_intervals(spec: IntervalSpec, n: int, seed: int) -> LabeledDataset:
    """Draw n labelled points: y uniform over 1..k, then x uniform on the
    class-y interval. Deterministic given seed (PCG64 stream)."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    rng = np.random.default_rng(seed)
    labels = rng.integers(1, spec.k + 1, size=n)
    starts = spec.support_starts()
    x = starts[labels - 1] + rng.random(n)
    return LabeledDataset(
        points=x[:, None],
        labels=labels,
        n_classes=spec.k,
        seed=seed,
        source=f"intervals(k={spec.k},alpha={_fmt(spec.alpha)})",
    )


def interval_posterior(spec: IntervalSpec, x: float) -> np.ndarray:
    """Exact posterior p(Y | X = x): one-hot outside overlaps, (1/2, 1/2) on
    the two overlapping classes inside an overlap region.

    Raises OutOfSupportError when x is in none of the class supports.
    """
    return spec.posterior_batch(np.array([[float(x)]]))[0]


def sample_gaussians(spec: GaussianPairSpec, n: int, seed: int) -> LabeledDataset:
    """Draw n labelled points from the two-Gaussian mixture: y in {1, 2}
    uniform, x standard normal shifted by mu when y = 2."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    rng = np.random.default_rng(seed)
    labels = rng.integers(1, 3, size=n)
    x = rng.standard_normal((n, spec.dim))
    x[labels == 2] += spec.mu
    return LabeledDataset(
        points=x,
        labels=labels,
        n_classes=2,
        seed=seed,
        source=f"gaussians(dim={spec.dim})",
    )


def gaussian_posterior(spec: GaussianPairSpec, x: np.ndarray) -> np.ndarray:
    """Exact two-class posterior at a single point x."""
    return spec.posterior_batch(np.asarray(x, dtype=np.float64)[None, :])[0]


@dataclass(frozen=True)
class NoisePlan:
    """Class-pairing label noise: each label flips to its partner class with
    probability ``rate``. The pairing maps every class to a distinct class
    and is fixed for the run."""

    pairing: dict[int, int] = field(default_factory=dict)
    rate: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.rate <= 1.0):
            raise ParameterError(f"rate must lie in [0, 1], got {self.rate}")
        for y, partner in self.pairing.items():
            if y == partner:
                raise ParameterError(f"class {y} is paired with itself")
        values = list(self.pairing.values())
        if len(set(values)) != len(values):
            raise ParameterError("pairing must be injective")


def random_noise_plan(classes: list[int], rate: float, seed: int) -> NoisePlan:
    """Seeded random pairing with no fixed points (permutations are redrawn
    until none remain), recorded so runs can reproduce it."""
    classes = sorted(set(int(c) for c in classes))
    if len(classes) < 2:
        raise ParameterError("need at least two classes to pair up")
    rng = np.random.default_rng(seed)
    arr = np.array(classes)
    while True:
        perm = rng.permutation(arr)
        if np.all(perm != arr):
            break
    return NoisePlan(pairing=dict(zip(classes, perm.tolist())), rate=rate)


def inject_label_noise(data: LabeledDataset, plan: NoisePlan, seed: int) -> LabeledDataset:
    """Flip each label to its paired class independently with probability
    plan.rate. Points are untouched; deterministic given seed."""
    present = set(np.unique(data.labels).tolist())
    missing = present - set(plan.pairing)
    if missing:
        raise NoisePlanError(f"pairing is missing classes {sorted(missing)}")
    rng = np.random.default_rng(seed)
    flip = rng.random(data.n) < plan.rate
    labels = data.labels.copy()
    partner = np.array([plan.pairing.get(c, c) for c in range(data.n_classes + 1)])
    labels[flip] = partner[labels[flip]]
    return LabeledDataset(
        points=data.points,
        labels=labels,
        n_classes=data.n_classes,
        seed=seed,
        source=f"{data.source}+noise(rate={_fmt(plan.rate)})",
    )


# -- serialization ------------------------------------------------------------


def save_dataset(data: LabeledDataset, path) -> None:
    """Columnar plain text: header line ``dim,k,n,seed`` then one row per
    point with d comma-separated coordinates followed by the label."""
    lines = [f"{data.dim},{data.n_classes},{data.n},{data.seed}"]
    for row, label in zip(data.points, data.labels):
        coords = ",".join(_fmt(v) for v in row)
        lines.append(f"{coords},{label}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(path) -> LabeledDataset:
    with open(path) as fh:
        header = fh.readline().strip()
        try:
            dim, k, n, seed = (int(v) for v in header.split(","))
        except ValueError as exc:
            raise ParameterError(f"malformed dataset header: {header!r}") from exc
        points = np.empty((n, dim))
        labels = np.empty(n, dtype=np.int64)
        for i in range(n):
            parts = fh.readline().strip().split(",")
            if len(parts) != dim + 1:
                raise ParameterError(f"row {i} has {len(parts)} fields, expected {dim + 1}")
            points[i] = [float(v) for v in parts[:dim]]
            labels[i] = int(parts[dim])
    return LabeledDataset(points=points, labels=labels, n_classes=k, seed=seed, source=str(path))
