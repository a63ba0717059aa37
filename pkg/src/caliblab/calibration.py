"""Calibration metrics and temperature fitting.

Metrics: negative log-likelihood, top-class calibration error under
uniform-width bins (ece) and equal-count bins (ace), and the expected KL
divergence from an exact posterior oracle to the model's predictive
distribution. Temperature fitting minimizes held-out NLL (the empirical
route) or the oracle expected KL (when the generating distribution is
available), both by golden-section search on log T.

Conventions, applied identically everywhere: top-class ties break toward
the lowest class index; zero probabilities are never clamped - a zero at a
true label or under positive posterior mass surfaces as +inf with a flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, TemperatureFitError
from .network import log_softmax, softmax

__all__ = [
    "PredictionSet",
    "BinTable",
    "TemperatureFit",
    "CalibrationReport",
    "ReliabilityDiagram",
    "apply_temperature",
    "nll",
    "ece",
    "ace",
    "expected_kl",
    "expected_kl_probs",
    "oracle_kl_objective",
    "fit_temperature_nll",
    "fit_temperature_oracle",
    "reliability_export",
    "make_report",
    "bin_table_csv",
    "histogram_csv",
]

LOG_T_BRACKET = (math.log(1e-3), math.log(1e3))
LOG_T_TOL = 1e-4


@dataclass(frozen=True)
class PredictionSet:
    """Rows of (probability vector, true label), optionally with the raw
    logits they came from so temperatures can be applied later."""

    probs: np.ndarray
    labels: np.ndarray
    logits: np.ndarray | None = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if probs.ndim != 2 or labels.ndim != 1 or probs.shape[0] != labels.shape[0]:
            raise ParameterError("probs must be (N, k) with labels (N,)")
        if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
            raise ParameterError("probability rows must sum to 1 within 1e-9")
        if np.any(probs < 0):
            raise ParameterError("probabilities must be nonnegative")
        if labels.size and (labels.min() < 1 or labels.max() > probs.shape[1]):
            raise ParameterError("labels must lie in 1..k")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "labels", labels)
        if self.logits is not None:
            object.__setattr__(self, "logits", np.asarray(self.logits, dtype=np.float64))

    @classmethod
    def from_logits(cls, logits: np.ndarray, labels: np.ndarray,
                    temperature: float = 1.0) -> "PredictionSet":
        logits = np.asarray(logits, dtype=np.float64)
        return cls(probs=apply_temperature(logits, temperature), labels=labels, logits=logits)

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    @property
    def n_classes(self) -> int:
        return self.probs.shape[1]

    def confidence(self) -> np.ndarray:
        """Top-class probability per row."""
        return self.probs.max(axis=1)

    def correct(self) -> np.ndarray:
        """Whether the top class (ties to the lowest index) is the label."""
        return np.argmax(self.probs, axis=1) + 1 == self.labels


@dataclass(frozen=True)
class BinTable:
    """Per-bin confidence bounds, count, mean confidence, and accuracy.
    Empty bins carry count 0 and nan for the undefined statistics."""

    lo: np.ndarray
    hi: np.ndarray
    count: np.ndarray
    conf: np.ndarray
    acc: np.ndarray

    def rows(self):
        return zip(self.lo, self.hi, self.count, self.conf, self.acc)


@dataclass(frozen=True)
class TemperatureFit:
    """Result of a 1-D temperature search. ``trace`` lists every probed
    (T, objective) pair, endpoints included."""

    temperature: float
    objective_value: float
    trace: tuple
    bracket: tuple[float, float]

    def __post_init__(self):
        if self.temperature <= 0:
            raise ParameterError("fitted temperature must be positive")


@dataclass(frozen=True)
class ReliabilityDiagram:
    bins: BinTable
    histogram_counts: np.ndarray
    histogram_edges: np.ndarray


@dataclass
class CalibrationReport:
    """Metric bundle for one evaluated model arm."""

    nll: float
    ece: float
    ace: float
    n_bins: int
    seed: int
    bins: BinTable
    accuracy: float
    expected_kl: float | None = None
    temperature: float | None = None
    cal_nll: float | None = None
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def clean(v):
            if v is None:
                return None
            v = float(v)
            return v if math.isfinite(v) else None

        return {
            "nll": clean(self.nll),
            "ece": clean(self.ece),
            "ace": clean(self.ace),
            "expected_kl": clean(self.expected_kl),
            "temperature": clean(self.temperature),
            "cal_nll": clean(self.cal_nll),
            "accuracy": clean(self.accuracy),
            "n_bins": self.n_bins,
            "seed": self.seed,
            "flags": dict(self.flags),
            "bins": [
                {
                    "lo": clean(lo),
                    "hi": clean(hi),
                    "count": int(c),
                    "conf": clean(cf),
                    "acc": clean(ac),
                }
                for lo, hi, c, cf, ac in self.bins.rows()
            ],
        }

    def metric(self, name: str) -> float:
        value = getattr(self, name)
        return float("nan") if value is None else float(value)


# -- temperature application -----------------------------------------------------


def apply_temperature(logits: np.ndarray, temperature: float) -> np.ndarray:
    """softmax(logits / T). Positive T only; the argmax is unchanged for
    every valid T."""
    if temperature <= 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    return softmax(np.asarray(logits, dtype=np.float64) / temperature)


# -- scalar metrics ----------------------------------------------------------------


def nll(preds: PredictionSet) -> float:
    """Mean -log p(true label). A zero probability at a true label yields
    +inf rather than being clamped."""
    if preds.n == 0:
        raise ParameterError("prediction set is empty")
    p_true = preds.probs[np.arange(preds.n), preds.labels - 1]
    if np.any(p_true == 0.0):
        return math.inf
    return float(-np.log(p_true).mean())


def _binned_ece(conf, correct, bin_index, n_bins, lo, hi):
    n = conf.size
    count = np.bincount(bin_index, minlength=n_bins)
    conf_sum = np.bincount(bin_index, weights=conf, minlength=n_bins)
    acc_sum = np.bincount(bin_index, weights=correct.astype(float), minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_conf = np.where(count > 0, conf_sum / np.maximum(count, 1), np.nan)
        mean_acc = np.where(count > 0, acc_sum / np.maximum(count, 1), np.nan)
    nonempty = count > 0
    score = float(
        np.sum((count[nonempty] / n) * np.abs(mean_acc[nonempty] - mean_conf[nonempty]))
    )
    table = BinTable(lo=lo, hi=hi, count=count, conf=mean_conf, acc=mean_acc)
    return score, table


def ece(preds: PredictionSet, n_bins: int = 15):
    """Top-class calibration error with uniform-width confidence bins:
    sum over bins of (count/N) * |accuracy - mean confidence|. Returns
    (score, bin table); empty bins contribute zero."""
    if preds.n == 0:
        raise ParameterError("prediction set is empty")
    conf = preds.confidence()
    bin_index = np.minimum((conf * n_bins).astype(int), n_bins - 1)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    return _binned_ece(conf, preds.correct(), bin_index, n_bins, edges[:-1], edges[1:])


def ace(preds: PredictionSet, n_bins: int = 15):
    """Top-class calibration error with equal-count bins: rows sorted by
    confidence (stable, so ties break by row index) are split into n_bins
    contiguous groups whose sizes differ by at most one, the remainder
    spread over the leading bins."""
    if preds.n < n_bins:
        raise ParameterError(f"need at least {n_bins} rows for {n_bins} equal-count bins")
    conf = preds.confidence()
    correct = preds.correct()
    order = np.argsort(conf, kind="stable")
    base, rem = divmod(preds.n, n_bins)
    sizes = np.full(n_bins, base)
    sizes[:rem] += 1
    bin_index = np.repeat(np.arange(n_bins), sizes)
    inv = np.empty(preds.n, dtype=int)
    inv[order] = bin_index
    stops = np.cumsum(sizes)
    starts = stops - sizes
    lo = conf[order][starts]
    hi = conf[order][stops - 1]
    return _binned_ece(conf, correct, inv, n_bins, lo, hi)


def _mean_kl(posterior: np.ndarray, predicted: np.ndarray) -> float:
    """Mean over rows of KL(posterior || predicted), 0 log 0 = 0; +inf when
    the prediction has zero mass where the posterior does not."""
    support = posterior > 0.0
    if np.any(predicted[support] == 0.0):
        return math.inf
    # log-space difference: safe against subnormal predictions
    log_diff = np.zeros_like(posterior)
    np.subtract(
        np.log(posterior, where=support, out=np.zeros_like(posterior)),
        np.log(predicted, where=support, out=np.zeros_like(predicted)),
        out=log_diff,
        where=support,
    )
    terms = np.zeros_like(posterior)
    np.multiply(posterior, log_diff, out=terms, where=support)
    return float(terms.sum(axis=1).mean())


def _logit_fn(model):
    return model if callable(model) else model.logits


def expected_kl(model, dist, n_mc: int, seed: int, temperature: float = 1.0) -> float:
    """Monte Carlo estimate over X ~ the generating distribution of
    KL(posterior(. | X) || softmax(logits(X) / T))."""
    return oracle_kl_objective(model, dist, n_mc, seed)(temperature)


def expected_kl_probs(prob_fn, dist, n_mc: int, seed: int) -> float:
    """As ``expected_kl`` but for predictors that emit probabilities
    directly (no logits, no temperature)."""
    if n_mc < 1:
        raise ParameterError("n_mc must be >= 1")
    x = dist.sample_points(n_mc, seed)
    posterior = dist.posterior_batch(x)
    return _mean_kl(posterior, np.asarray(prob_fn(x), dtype=np.float64))


def oracle_kl_objective(model, dist, n_mc: int, seed: int):
    """Expected-KL objective as a function of T with common random numbers:
    the Monte Carlo sample, posteriors, and logits are computed once, so the
    1-D search sees a noiseless deterministic curve."""
    if n_mc < 1:
        raise ParameterError("n_mc must be >= 1")
    x = dist.sample_points(n_mc, seed)
    posterior = dist.posterior_batch(x)
    logits = np.asarray(_logit_fn(model)(x), dtype=np.float64)

    def objective(temperature: float) -> float:
        return _mean_kl(posterior, apply_temperature(logits, temperature))

    return objective


# -- temperature fitting -------------------------------------------------------------


def _golden_section(fn, lo: float, hi: float, tol: float):
    """Deterministic golden-section minimization on [lo, hi]; returns the
    best probed point (endpoints included) and the full probe trace."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    trace = []

    def probe(u):
        val = fn(u)
        trace.append((u, val))
        return val

    f_lo, f_hi = probe(lo), probe(hi)
    a, b = lo, hi
    h = b - a
    c = b - inv_phi * h
    d = a + inv_phi * h
    fc, fd = probe(c), probe(d)
    while h > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            h = b - a
            c = b - inv_phi * h
            fc = probe(c)
        else:
            a, c, fc = c, d, fd
            h = b - a
            d = a + inv_phi * h
            fd = probe(d)
    finite = [(u, v) for u, v in trace if math.isfinite(v)]
    if not finite:
        raise TemperatureFitError("objective is non-finite across the whole bracket")
    best_u, best_v = min(finite, key=lambda t: t[1])
    return best_u, best_v, trace


def _fit_temperature(objective) -> TemperatureFit:
    lo, hi = LOG_T_BRACKET
    best_u, best_v, trace = _golden_section(lambda u: objective(math.exp(u)), lo, hi, LOG_T_TOL)
    return TemperatureFit(
        temperature=math.exp(best_u),
        objective_value=best_v,
        trace=tuple((math.exp(u), v) for u, v in trace),
        bracket=(math.exp(lo), math.exp(hi)),
    )


def fit_temperature_nll(logits: np.ndarray, labels: np.ndarray) -> TemperatureFit:
    """Temperature minimizing mean NLL of softmax(logits / T) on the given
    calibration split; golden-section on log T over [1e-3, 1e3] to 1e-4."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise ParameterError("calibration split must be a nonempty (N, k) logit array")
    if logits.shape[0] != labels.shape[0]:
        raise ParameterError("logits and labels must have equal length")
    rows = np.arange(logits.shape[0])

    def objective(temperature: float) -> float:
        logp = log_softmax(logits / temperature)
        return float(-logp[rows, labels - 1].mean())

    return _fit_temperature(objective)


def fit_temperature_oracle(model, dist, n_mc: int, seed: int) -> TemperatureFit:
    """Temperature minimizing the expected KL to the exact posterior, with a
    fixed common-random-numbers sample across all T evaluations."""
    return _fit_temperature(oracle_kl_objective(model, dist, n_mc, seed))


# -- reliability / report assembly -----------------------------------------------------


def reliability_export(preds: PredictionSet, n_bins: int = 15,
                       mode: str = "uniform") -> ReliabilityDiagram:
    """Per-bin accuracy/confidence plus a top-class-confidence histogram
    (uniform edges). ``mode`` picks uniform or equal-count (adaptive) bins
    for the reliability table."""
    if mode == "uniform":
        _, table = ece(preds, n_bins)
    elif mode == "adaptive":
        _, table = ace(preds, n_bins)
    else:
        raise ParameterError(f"unknown binning mode {mode!r}")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    conf = preds.confidence()
    idx = np.minimum((conf * n_bins).astype(int), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    return ReliabilityDiagram(bins=table, histogram_counts=counts, histogram_edges=edges)


def make_report(preds: PredictionSet, n_bins: int, seed: int,
                expected_kl_value: float | None = None,
                temperature: float | None = None,
                cal_nll: float | None = None) -> CalibrationReport:
    nll_value = nll(preds)
    ece_value, bins = ece(preds, n_bins)
    ace_value, _ = ace(preds, n_bins)
    flags = {
        "nll_infinite": not math.isfinite(nll_value),
        "kl_infinite": expected_kl_value is not None and not math.isfinite(expected_kl_value),
    }
    return CalibrationReport(
        nll=nll_value,
        ece=ece_value,
        ace=ace_value,
        n_bins=n_bins,
        seed=seed,
        bins=bins,
        accuracy=float(preds.correct().mean()),
        expected_kl=expected_kl_value,
        temperature=temperature,
        cal_nll=cal_nll,
        flags=flags,
    )


def _csv_value(v) -> str:
    return repr(float(v))


def bin_table_csv(table: BinTable) -> str:
    lines = ["lo,hi,count,conf,acc"]
    for lo, hi, count, conf, acc in table.rows():
        lines.append(
            f"{_csv_value(lo)},{_csv_value(hi)},{int(count)},{_csv_value(conf)},{_csv_value(acc)}"
        )
    return "\n".join(lines) + "\n"


def histogram_csv(diagram: ReliabilityDiagram) -> str:
    lines = ["bin_lo,bin_hi,count"]
    edges = diagram.histogram_edges
    for i, count in enumerate(diagram.histogram_counts):
        lines.append(f"{_csv_value(edges[i])},{_csv_value(edges[i + 1])},{int(count)}")
    return "\n".join(lines) + "\n"
