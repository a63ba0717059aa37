"""Mixing tuples and the closed-form optimal prediction for mixed labels.

A mixing tuple is an ordered (d+1)-tuple of dataset indices whose points
form a non-degenerate, weakly correlated, diameter-bounded simplex. For a
query point z covered by such simplices, the training objective that mixes
d+1 examples admits a closed form for its optimal prediction: accumulate,
over every covering tuple, the density-weighted barycentric mass each class
receives at z, then normalize. This module provides

* exhaustive construction of the admissible tuple set (small N only),
* the barycentric solve z -> lambda and hull membership,
* the per-class mass ``xi`` and the normalized ``optimal_prediction``,
* an independent projected-gradient minimizer of the same pointwise
  objective, used to verify the closed form,
* tuple/lambda samplers for training-style stochastic mixing, and
* a fast vectorized evaluator for the 1-D (pairwise segment) case.

Tuple indices are 0-based positions into the dataset arrays. Admissibility
tolerances: hull membership uses an absolute barycentric tolerance of 1e-9;
the barycentric solve rejects systems whose residual exceeds 1e-8 relative
to the right-hand side.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .datasets import LabeledDataset
from .errors import (
    DegenerateSimplexError,
    InsufficientDataError,
    ParameterError,
    UncoveredPointError,
)

__all__ = [
    "HULL_TOL",
    "MixDistribution",
    "MixingIndexSet",
    "SimplexWeight",
    "MixedPoint",
    "default_diameter_cap",
    "build_mixing_set",
    "lambda_from_point",
    "in_hull",
    "xi",
    "xi_vector",
    "optimal_prediction",
    "pointwise_minimizer",
    "sample_mixed",
    "save_mixing_set",
    "load_mixing_set",
    "mixed_stream_lines",
    "line_segment_prediction",
]

HULL_TOL = 1e-9
SOLVE_RESIDUAL_REL = 1e-8


def _as_points(data) -> np.ndarray:
    if isinstance(data, LabeledDataset):
        return data.points
    pts = np.asarray(data, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


@dataclass(frozen=True)
class MixingIndexSet:
    """Ordered (d+1)-tuple of dataset indices; the last index is the anchor.

    ``diameter_cap`` records the distance bound the tuple was admitted
    under (inf for unconstrained training-mode draws).
    """

    indices: tuple[int, ...]
    diameter_cap: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if len(self.indices) < 2:
            raise ParameterError("a mixing tuple needs at least 2 indices")

    @property
    def d(self) -> int:
        return len(self.indices) - 1


@dataclass(frozen=True)
class SimplexWeight:
    """Barycentric weight vector: components >= -1e-9 and summing to 1.

    Boundary weights (tiny negatives within tolerance) are legal; they
    arise from hull membership at faces.
    """

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise ParameterError("weights must be a vector")
        if abs(vals.sum() - 1.0) > 1e-10:
            raise ParameterError("weights must sum to 1 within 1e-10")
        if np.any(vals < -HULL_TOL):
            raise ParameterError("weights must be nonnegative within tolerance")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class MixDistribution:
    """Mixing-weight distribution on the d-dimensional probability simplex.

    Only the uniform law is implemented; its density is the constant d! in
    the first-d-coordinates chart (the chart the change of variables in the
    closed form uses). ``kind`` is the extension point for other laws.
    """

    d: int
    kind: str = "uniform"

    def __post_init__(self):
        if self.d < 1:
            raise ParameterError("mixing dimension must be >= 1")
        if self.kind != "uniform":
            raise ParameterError(f"unsupported mixing distribution {self.kind!r}")

    def density(self, lam: np.ndarray) -> float:
        return float(math.factorial(self.d))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One uniform draw from the simplex via sorted uniform gaps."""
        return self.sample_batch(rng, 1)[0]

    def sample_batch(self, rng: np.random.Generator, m: int) -> np.ndarray:
        u = np.sort(rng.random((m, self.d)), axis=1)
        padded = np.concatenate(
            [np.zeros((m, 1)), u, np.ones((m, 1))], axis=1
        )
        return np.diff(padded, axis=1)


@dataclass(frozen=True)
class MixedPoint:
    """A sampled convex combination with its provenance and soft label."""

    z: np.ndarray
    sigma: MixingIndexSet
    lam: SimplexWeight
    soft_label: np.ndarray

    def __post_init__(self):
        soft = np.asarray(self.soft_label, dtype=np.float64)
        if abs(soft.sum() - 1.0) > 1e-10:
            raise ParameterError("soft label must sum to 1")
        object.__setattr__(self, "z", np.asarray(self.z, dtype=np.float64))
        object.__setattr__(self, "soft_label", soft)


# -- admissible tuple construction ---------------------------------------------


def default_diameter_cap(points, quantile: float = 0.10) -> float:
    """Default distance bound: the given quantile (10th percentile) of all
    pairwise distances in the dataset. Keeps simplices local."""
    pts = _as_points(points)
    n = pts.shape[0]
    if n < 2:
        raise InsufficientDataError("need at least 2 points for a distance cap")
    dists = []
    chunk = max(1, int(2e6 // max(n, 1)))
    for start in range(0, n - 1, chunk):
        stop = min(start + chunk, n - 1)
        block = np.linalg.norm(pts[start:stop, None, :] - pts[None, :, :], axis=2)
        for row, i in enumerate(range(start, stop)):
            dists.append(block[row, i + 1 :])
    return float(np.quantile(np.concatenate(dists), quantile))


def build_mixing_set(data, d: int, cap: float) -> list[MixingIndexSet]:
    """Enumerate every ordered (d+1)-tuple of dataset indices satisfying the
    three admissibility clauses:

    1. each of the first d points differs from the anchor (last index),
    2. normalized inner products of the difference vectors are <= 1/(2d)
       for every distinct pair, and
    3. all pairwise distances within the tuple are <= cap.

    Enumeration is exhaustive, O(N^(d+1)), in lexicographic index order;
    intended for small N (the verification path, not training).
    """
    pts = _as_points(data)
    n = pts.shape[0]
    if d < 1:
        raise ParameterError("d must be >= 1")
    if d + 1 > n:
        raise InsufficientDataError(f"need at least {d + 1} points, have {n}")

    # Distances feed every clause; the correlation clause follows from the
    # law of cosines, so no per-tuple vector arithmetic is needed.
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    sq = dist**2
    corr_bound = 1.0 / (2.0 * d)
    out: list[MixingIndexSet] = []
    for sigma in itertools.product(range(n), repeat=d + 1):
        a = sigma[d]
        ok = True
        for i in range(d):
            if dist[sigma[i], a] == 0.0:
                ok = False
                break
            if dist[sigma[i], a] > cap:
                ok = False
                break
        if not ok:
            continue
        for i in range(d):
            for j in range(i + 1, d):
                if dist[sigma[i], sigma[j]] > cap:
                    ok = False
                    break
                dot = 0.5 * (sq[sigma[i], a] + sq[sigma[j], a] - sq[sigma[i], sigma[j]])
                if dot > corr_bound * dist[sigma[i], a] * dist[sigma[j], a]:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            out.append(MixingIndexSet(indices=sigma, diameter_cap=float(cap)))
    return out


# -- barycentric coordinates ----------------------------------------------------


def _indices(sigma) -> tuple[int, ...]:
    if isinstance(sigma, MixingIndexSet):
        return sigma.indices
    return tuple(int(i) for i in sigma)


def _solve_barycentric(pts: np.ndarray, idx: tuple[int, ...], z: np.ndarray):
    """Solve the vertex-difference system for z; returns (lambda, |det|)."""
    d = len(idx) - 1
    if pts.shape[1] != d:
        raise ParameterError(
            f"barycentric solve needs ambient dimension == d ({d}), got {pts.shape[1]}"
        )
    anchor = pts[idx[-1]]
    lmat = (pts[list(idx[:-1])] - anchor).T  # columns are difference vectors
    rhs = np.asarray(z, dtype=np.float64).reshape(d) - anchor
    try:
        head = np.linalg.solve(lmat, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateSimplexError(f"singular vertex matrix for tuple {idx}") from exc
    residual = np.linalg.norm(lmat @ head - rhs)
    if residual > SOLVE_RESIDUAL_REL * np.linalg.norm(rhs):
        raise DegenerateSimplexError(
            f"ill-conditioned vertex matrix for tuple {idx} (residual {residual:.3e})"
        )
    lam = np.append(head, 1.0 - head.sum())
    return lam, abs(float(np.linalg.det(lmat)))


def lambda_from_point(points, sigma, z: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of z relative to the tuple's simplex.

    The first d entries solve the difference-vector linear system; the last
    is one minus their sum. Raises DegenerateSimplexError when the system is
    singular or fails the relative-residual check.
    """
    lam, _ = _solve_barycentric(_as_points(points), _indices(sigma), z)
    return lam


def in_hull(points, sigma, z: np.ndarray, tol: float = HULL_TOL) -> bool:
    """True iff every barycentric coordinate of z is >= -tol."""
    lam = lambda_from_point(points, sigma, z)
    return bool(np.all(lam >= -tol))


# -- the closed-form optimal prediction -----------------------------------------


def xi_vector(points, labels, n_classes: int, sigmas, mix: MixDistribution, z) -> np.ndarray:
    """Per-class mass at z: for every covering tuple, weight 1/|det| times
    the mixing density routes each vertex's barycentric coordinate to that
    vertex's class. Returns the length-k vector (zeros when nothing covers z).
    """
    pts = _as_points(points)
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros(n_classes)
    z = np.asarray(z, dtype=np.float64)
    for sigma in sigmas:
        idx = _indices(sigma)
        lam, absdet = _solve_barycentric(pts, idx, z)
        if np.all(lam >= -HULL_TOL):
            w = mix.density(lam) / absdet
            for j, point_index in enumerate(idx):
                out[labels[point_index] - 1] += w * lam[j]
    # Boundary queries admitted within tolerance can carry lambda components
    # as low as -1e-9; masses stay nonnegative by contract.
    return np.maximum(out, 0.0)


def xi(points, labels, n_classes: int, sigmas, mix: MixDistribution, z, y: int) -> float:
    """Class-y mass at z (one component of ``xi_vector``); zero when no
    covering tuple contains class-y points."""
    if not 1 <= y <= n_classes:
        raise ParameterError(f"class must lie in 1..{n_classes}")
    return float(xi_vector(points, labels, n_classes, sigmas, mix, z)[y - 1])


def optimal_prediction(points, labels, n_classes: int, sigmas, mix: MixDistribution, z) -> np.ndarray:
    """Normalized per-class mass at z: the unique minimizer of the pointwise
    mixed-label cross-entropy. Raises UncoveredPointError when no admissible
    tuple covers z."""
    masses = xi_vector(points, labels, n_classes, sigmas, mix, z)
    total = masses.sum()
    if total <= 0.0:
        raise UncoveredPointError("no admissible mixing tuple covers z")
    return masses / total


# -- independent verification oracle --------------------------------------------


def pointwise_minimizer(
    points,
    labels,
    n_classes: int,
    sigmas,
    mix: MixDistribution,
    z,
    tol: float = 1e-8,
    max_iter: int = 10_000,
) -> np.ndarray:
    """Minimize the pointwise mixed-label cross-entropy at z over the
    probability simplex by simplex-projected (entropic mirror / exponentiated)
    gradient descent with backtracking, certified by the KKT residual.

    This is the verification route for ``optimal_prediction``: it assembles
    the per-tuple weighted terms itself (least-squares solves rather than
    the production path) and performs an actual numerical minimization, so
    agreement is evidence for the closed form rather than a tautology.
    Euclidean projected gradient steps stall here when class masses span
    many orders of magnitude (the log barrier forces step sizes below the
    smallest active mass), so the simplex projection is taken in the
    entropic geometry instead.
    """
    pts = _as_points(points)
    labels = np.asarray(labels, dtype=np.int64)
    z = np.asarray(z, dtype=np.float64)

    # Assemble objective terms independently of xi_vector.
    term_weights = []
    term_lams = []
    term_classes = []
    for sigma in sigmas:
        idx = _indices(sigma)
        anchor = pts[idx[-1]]
        amat = (pts[list(idx[:-1])] - anchor).T
        head, *_ = np.linalg.lstsq(amat, z - anchor, rcond=None)
        lam = np.append(head, 1.0 - head.sum())
        recon = lam @ pts[list(idx)]
        if np.linalg.norm(recon - z) > 1e-7 * max(1.0, np.linalg.norm(z)):
            continue
        if np.all(lam >= -HULL_TOL):
            gram_det = abs(float(np.linalg.det(amat.T @ amat)))
            term_weights.append(mix.density(lam) / math.sqrt(gram_det))
            term_lams.append(lam)
            term_classes.append(labels[list(idx)] - 1)
    if not term_weights:
        raise UncoveredPointError("no admissible mixing tuple covers z")

    coeff = np.zeros(n_classes)
    for w, lam, cls in zip(term_weights, term_lams, term_classes):
        for lam_j, c in zip(lam, cls):
            coeff[c] += w * lam_j
    # The minimizer is invariant to scaling the objective; normalizing keeps
    # gradients O(1) so the line search is well conditioned.
    coeff = coeff / coeff.sum()
    active = coeff > 0

    def objective(p: np.ndarray) -> float:
        if np.any(p[active] <= 0.0):
            return math.inf
        return float(-(coeff[active] @ np.log(p[active])))

    def gradient(p: np.ndarray) -> np.ndarray:
        g = np.zeros(n_classes)
        g[active] = -coeff[active] / p[active]
        return g

    p = np.full(n_classes, 1.0 / n_classes)
    fp = objective(p)
    eta = 0.5
    for _ in range(max_iter):
        grad = gradient(p)
        # KKT certificate: at the optimum every active class satisfies
        # coeff / p = nu (= 1 after normalization) and inactive mass is 0.
        kkt = float(np.max(np.abs(coeff[active] / p[active] - 1.0)))
        if kkt < tol and float(p[~active].sum()) < tol:
            return p
        while True:
            scaled = p * np.exp(-eta * (grad - grad.min()))
            cand = scaled / scaled.sum()
            fc = objective(cand)
            if fc <= fp + 1e-16:
                break
            eta *= 0.5
            if eta < 1e-18:
                cand, fc = p, fp
                break
        p, fp = cand, fc
        eta = min(eta * 1.5, 4.0)
    return p


# -- stochastic mixing ----------------------------------------------------------


def sample_mixed(
    data: LabeledDataset,
    d: int,
    mix: MixDistribution,
    seed: int,
    mode: str = "train",
    sigmas: list[MixingIndexSet] | None = None,
) -> MixedPoint:
    """Draw one mixed point: a (d+1)-tuple of dataset indices plus uniform
    simplex weights; the soft label routes each weight to its vertex class.

    ``mode="train"`` draws indices unconstrained (admissibility not
    enforced, matching how stochastic training mixes); ``mode="theory"``
    draws uniformly from a prebuilt admissible tuple set.
    """
    if mix.d != d:
        raise ParameterError("mix distribution dimension must equal d")
    if data.n < d + 1:
        raise InsufficientDataError(f"need at least {d + 1} points, have {data.n}")
    rng = np.random.default_rng(seed)
    if mode == "train":
        idx = tuple(int(i) for i in rng.integers(0, data.n, size=d + 1))
        sigma = MixingIndexSet(indices=idx, diameter_cap=math.inf)
    elif mode == "theory":
        if not sigmas:
            raise InsufficientDataError("theory mode requires a nonempty mixing set")
        sigma = sigmas[int(rng.integers(0, len(sigmas)))]
        idx = sigma.indices
    else:
        raise ParameterError(f"unknown sampling mode {mode!r}")
    lam = mix.sample(rng)
    z = lam @ data.points[list(idx)]
    soft = np.zeros(data.n_classes)
    np.add.at(soft, data.labels[list(idx)] - 1, lam)
    return MixedPoint(z=z, sigma=sigma, lam=SimplexWeight(lam), soft_label=soft)


# -- serialization ---------------------------------------------------------------


def save_mixing_set(sigmas: list[MixingIndexSet], d: int, cap: float, path) -> None:
    """Plain text dump: header ``d,cap,n_sigma`` then one comma-separated
    index tuple per line."""
    lines = [f"{d},{repr(float(cap))},{len(sigmas)}"]
    for sigma in sigmas:
        lines.append(",".join(str(i) for i in sigma.indices))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mixing_set(path) -> tuple[int, float, list[MixingIndexSet]]:
    with open(path) as fh:
        d_str, cap_str, count_str = fh.readline().strip().split(",")
        d, cap, count = int(d_str), float(cap_str), int(count_str)
        sigmas = []
        for _ in range(count):
            idx = tuple(int(v) for v in fh.readline().strip().split(","))
            sigmas.append(MixingIndexSet(indices=idx, diameter_cap=cap))
    return d, cap, sigmas


def mixed_stream_lines(samples: list[MixedPoint]) -> list[str]:
    """Row format for mixed-sample streams: z coordinates then the k
    soft-label values."""
    rows = []
    for s in samples:
        vals = [repr(float(v)) for v in np.atleast_1d(s.z)]
        vals += [repr(float(v)) for v in s.soft_label]
        rows.append(",".join(vals))
    return rows


# -- fast 1-D evaluation ----------------------------------------------------------


def line_segment_prediction(
    points, labels, n_classes: int, cap: float, zs: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized 1-D closed-form prediction for many query points.

    In one dimension the admissible tuples are exactly the point pairs with
    distinct coordinates within ``cap``; a pair covers z when z lies between
    its endpoints. Each covering unordered pair contributes weight
    ``(right - z) / gap^2`` to the left point's class and ``(z - left) / gap^2``
    to the right point's class (both tuple orderings contribute identically,
    so the normalized prediction is unchanged by enumerating them once).

    Returns (predictions (m, k), covered (m,)); uncovered rows are zero.
    Matches ``optimal_prediction`` on covered points.
    """
    x = _as_points(points)[:, 0]
    labels = np.asarray(labels, dtype=np.int64)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    cls = labels[order] - 1
    zs = np.atleast_1d(np.asarray(zs, dtype=np.float64))
    preds = np.zeros((zs.size, n_classes))
    covered = np.zeros(zs.size, dtype=bool)
    lo_i = np.searchsorted(xs, zs - cap, side="left")
    mid_i = np.searchsorted(xs, zs, side="right")
    hi_i = np.searchsorted(xs, zs + cap, side="right")
    for row, z in enumerate(zs):
        left = slice(lo_i[row], mid_i[row])
        right = slice(mid_i[row], hi_i[row])
        xl, xr = xs[left], xs[right]
        if xl.size == 0 or xr.size == 0:
            continue
        gap = xr[None, :] - xl[:, None]
        ok = (gap > 0.0) & (gap <= cap)
        if not ok.any():
            continue
        inv_sq = np.where(ok, 1.0 / np.where(ok, gap, 1.0) ** 2, 0.0)
        w_left = ((xr[None, :] - z) * inv_sq).sum(axis=1)
        w_right = ((z - xl[:, None]) * inv_sq).sum(axis=0)
        acc = np.zeros(n_classes)
        np.add.at(acc, cls[left], w_left)
        np.add.at(acc, cls[right], w_right)
        total = acc.sum()
        if total > 0.0:
            preds[row] = acc / total
            covered[row] = True
    return preds, covered
