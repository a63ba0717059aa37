"""Config-driven experiment runner.

Composes the data, training, mixing, and calibration modules into the
desk-scale studies: the Gaussian-pair sweep, the overlapping-interval
sweep, the closed-form-versus-minimizer verification suite, the logit-gap
radius probe, and the temperature-scaling ablation.

Output layout under the chosen directory:

* ``replicate_<r>.csv`` - ``sweep_value,arm,metric,value`` rows, flushed
  as each replicate completes,
* ``summary.csv``       - ``sweep_value,arm,metric,mean,std`` over replicates,
* ``record.json``       - config snapshot, replicate seeds, artifact list,
* kind-specific extras (reliability tables, probe curves, checkpoints).

Everything is reproducible from the config snapshot and base seed: one
seeded stream per (replicate, sweep point, purpose), derived through
numpy's SeedSequence, and replicate seeds follow
``base_seed + replicate_index * 1_000_003``.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import (
    PredictionSet,
    bin_table_csv,
    expected_kl_probs,
    fit_temperature_nll,
    fit_temperature_oracle,
    histogram_csv,
    make_report,
    nll,
    oracle_kl_objective,
    reliability_export,
)
from .config import ExperimentConfig
from .datasets import GaussianPairSpec, IntervalSpec, LabeledDataset
from .errors import ConfigError, ParameterError
from .mixing import (
    MixDistribution,
    build_mixing_set,
    line_segment_prediction,
    optimal_prediction,
    pointwise_minimizer,
)
from .network import load_model, save_model
from .training import (
    RegularityProbe,
    TrainConfig,
    check_interpolation,
    logit_gap_probe,
    save_loss_history,
    train,
)

__all__ = [
    "RunRecord",
    "run_experiment",
    "verify_closed_form",
    "derive_seed",
    "REPLICATE_SEED_STRIDE",
    "METRIC_ORDER",
]

REPLICATE_SEED_STRIDE = 1_000_003

# Stream labels for per-purpose seed derivation.
_S_TRAIN, _S_TEST, _S_CAL, _S_MODEL, _S_TS, _S_KL, _S_PROBE = range(7)

METRIC_ORDER = (
    "nll",
    "ece",
    "ace",
    "accuracy",
    "expected_kl",
    "temperature",
    "cal_nll",
    "interp_fraction",
    "coverage",
    "max_deviation",
    "mean_gap",
)

_MASK = (1 << 63) - 1


def derive_seed(rep_seed: int, *path: int) -> int:
    """Deterministic child seed for one (replicate, ..., purpose) slot."""
    entropy = [int(rep_seed) & _MASK] + [int(p) & _MASK for p in path]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def _fmt(v) -> str:
    return repr(float(v))


@dataclass
class RunRecord:
    """Everything one experiment run produced, minus the raw models."""

    kind: str
    status: str
    config: dict
    replicate_seeds: list[int]
    summary_rows: list[tuple]
    artifacts: list[str]
    wall_clock_s: float = 0.0
    detail: dict = field(default_factory=dict)
    failure: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "status": self.status,
            "config": self.config,
            "replicate_seeds": self.replicate_seeds,
            "summary": [
                {
                    "sweep_value": sv,
                    "arm": arm,
                    "metric": metric,
                    "mean": mean,
                    "std": std,
                }
                for sv, arm, metric, mean, std in self.summary_rows
            ],
            "artifacts": self.artifacts,
            "wall_clock_s": self.wall_clock_s,
            "detail": self.detail,
            "failure": self.failure,
        }

    def summary_value(self, sweep_value: float, arm: str, metric: str) -> float:
        for sv, a, m, mean, _ in self.summary_rows:
            if a == arm and m == metric and np.isclose(sv, sweep_value):
                return mean
        raise KeyError(f"no summary row for ({sweep_value}, {arm}, {metric})")


# -- row bookkeeping -------------------------------------------------------------


class _Rows:
    """Per-replicate metric rows with flush-as-you-go CSV output."""

    def __init__(self, out_dir: Path, arms_order: tuple[str, ...]):
        self.out_dir = out_dir
        self.arms_order = list(arms_order)
        self.by_replicate: dict[int, list[tuple]] = {}

    def add(self, replicate: int, sweep_value: float, arm: str, metric: str, value: float):
        self.by_replicate.setdefault(replicate, []).append(
            (float(sweep_value), arm, metric, float(value))
        )
        if arm not in self.arms_order:
            self.arms_order.append(arm)

    def flush_replicate(self, replicate: int) -> str:
        rows = self.by_replicate.get(replicate, [])
        name = f"replicate_{replicate}.csv"
        lines = ["sweep_value,arm,metric,value"]
        for sv, arm, metric, value in rows:
            lines.append(f"{_fmt(sv)},{arm},{metric},{_fmt(value)}")
        (self.out_dir / name).write_text("\n".join(lines) + "\n")
        return name

    def summary(self) -> list[tuple]:
        grouped: dict[tuple, list[float]] = {}
        sweep_order: list[float] = []
        for rep in sorted(self.by_replicate):
            for sv, arm, metric, value in self.by_replicate[rep]:
                if sv not in sweep_order:
                    sweep_order.append(sv)
                grouped.setdefault((sv, arm, metric), []).append(value)
        out = []
        for sv in sweep_order:
            for arm in self.arms_order:
                for metric in METRIC_ORDER:
                    key = (sv, arm, metric)
                    if key not in grouped:
                        continue
                    vals = grouped[key]
                    mean = float(np.mean(vals))
                    std = 0.0 if len(vals) == 1 else float(np.std(vals, ddof=1))
                    out.append((sv, arm, metric, mean, std))
        return out


def _write_summary(out_dir: Path, summary_rows: list[tuple]) -> str:
    lines = ["sweep_value,arm,metric,mean,std"]
    for sv, arm, metric, mean, std in summary_rows:
        lines.append(f"{_fmt(sv)},{arm},{metric},{_fmt(mean)},{_fmt(std)}")
    (out_dir / "summary.csv").write_text("\n".join(lines) + "\n")
    return "summary.csv"


def _safe(name) -> str:
    return str(name).replace("+", "_").replace("/", "_")


# -- shared model-arm machinery -----------------------------------------------------


def _arm_base(arm: str) -> tuple[str, int, bool]:
    """(objective, d, wants_temperature_scaling) for a model arm name."""
    scaled = arm.endswith("+ts")
    core = arm[:-3] if scaled else arm
    if core == "erm":
        return "erm", 1, scaled
    if core == "mixup":
        return "mixup", 1, scaled
    if core.startswith("dmixup"):
        return "dmixup", int(core[len("dmixup"):]), scaled
    raise ConfigError(f"unknown model arm {arm!r}")


def _train_config(cfg: ExperimentConfig, objective: str, d: int, seed: int) -> TrainConfig:
    tr = cfg.train
    return TrainConfig(
        objective=objective,
        d=d,
        epochs=tr["epochs"],
        batch_size=tr["batch_size"],
        learning_rate=tr["learning_rate"],
        beta1=tr["beta1"],
        beta2=tr["beta2"],
        hidden=tuple(tr["hidden"]),
        seed=seed,
    )


def _split_calibration(data: LabeledDataset, fraction: float, seed: int):
    """Unstratified random holdout of round(fraction * N) points."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.n)
    n_cal = int(round(fraction * data.n))
    cal_idx, fit_idx = perm[:n_cal], perm[n_cal:]
    fit = LabeledDataset(
        points=data.points[fit_idx],
        labels=data.labels[fit_idx],
        n_classes=data.n_classes,
        seed=seed,
        source=f"{data.source}[fit]",
    )
    return fit, data.points[cal_idx], data.labels[cal_idx]


def _model_family_point(cfg, rows, rows_rep, sweep_value, spec, rep_seed, sweep_index,
                        out_dir, write_reliability):
    """Train/evaluate every configured model arm at one sweep point; the
    distribution object provides sampling and the exact posterior for the
    KL metric."""
    dist = cfg.distribution
    metrics = cfg.metrics
    data = spec.sample(dist["n_train"], derive_seed(rep_seed, sweep_index, _S_TRAIN))
    test = spec.sample(dist["n_test"], derive_seed(rep_seed, sweep_index, _S_TEST))
    fit_data, cal_points, cal_labels = _split_calibration(
        data, dist["cal_fraction"], derive_seed(rep_seed, sweep_index, _S_CAL)
    )
    objective_ids = {"erm": 0, "mixup": 1, "dmixup": 2}
    bases: dict[tuple[str, int], object] = {}
    arm_reports = {}
    for arm in cfg.arms:
        objective, d, scaled = _arm_base(arm)
        base_key = (objective, d)
        if base_key not in bases:
            train_seed = derive_seed(
                rep_seed, sweep_index, _S_MODEL, objective_ids[objective], d
            )
            bases[base_key] = train(fit_data, _train_config(cfg, objective, d, train_seed))
        model = bases[base_key]
        cal_logits = model.logits(cal_points)
        if scaled:
            fit = fit_temperature_nll(cal_logits, cal_labels)
            temperature = fit.temperature
        else:
            temperature = 1.0
        test_preds = PredictionSet.from_logits(model.logits(test.points), test.labels,
                                               temperature=temperature)
        cal_nll = nll(PredictionSet.from_logits(cal_logits, cal_labels,
                                                temperature=temperature))
        kl_obj = oracle_kl_objective(
            model.logits, spec, metrics["n_mc"], derive_seed(rep_seed, sweep_index, _S_KL)
        )
        report = make_report(
            test_preds,
            n_bins=metrics["n_bins"],
            seed=rep_seed,
            expected_kl_value=kl_obj(temperature),
            temperature=temperature if scaled else None,
            cal_nll=cal_nll,
        )
        arm_reports[arm] = report
        for metric in ("nll", "ece", "ace", "accuracy", "expected_kl", "cal_nll"):
            value = report.metric(metric)
            if not np.isnan(value):
                rows.add(rows_rep, sweep_value, arm, metric, value)
        if scaled:
            rows.add(rows_rep, sweep_value, arm, "temperature", temperature)
        if write_reliability:
            diagram = reliability_export(test_preds, n_bins=metrics["n_bins"])
            tag = f"sweep{_fmt(sweep_value)}_{_safe(arm)}"
            (out_dir / "reliability").mkdir(exist_ok=True)
            (out_dir / "reliability" / f"{tag}_bins.csv").write_text(
                bin_table_csv(diagram.bins)
            )
            (out_dir / "reliability" / f"{tag}_hist.csv").write_text(histogram_csv(diagram))
    return arm_reports


def _family_specs(cfg: ExperimentConfig) -> list[tuple[float, object]]:
    """(sweep value, distribution spec) pairs for the model-arm kinds."""
    dist = cfg.distribution
    if cfg.kind == "gaussian-sweep":
        return [(mu, GaussianPairSpec.constant(mu, dist["dim"])) for mu in dist["mu_grid"]]
    if dist["family"] == "gaussian":
        return [(dist["mu"], GaussianPairSpec.constant(dist["mu"], dist["dim"]))]
    return [(dist["alpha"], IntervalSpec(k=dist["k"], alpha=dist["alpha"]))]


def _run_model_family(cfg: ExperimentConfig, out_dir: Path) -> RunRecord:
    rows = _Rows(out_dir, cfg.arms)
    artifacts = []
    specs = _family_specs(cfg)
    rep_seeds = [cfg.base_seed + r * REPLICATE_SEED_STRIDE for r in range(cfg.replicates)]
    for r, rep_seed in enumerate(rep_seeds):
        for sweep_index, (sweep_value, spec) in enumerate(specs):
            _model_family_point(
                cfg, rows, r, sweep_value, spec, rep_seed, sweep_index, out_dir,
                write_reliability=(r == 0),
            )
        artifacts.append(rows.flush_replicate(r))
    summary = rows.summary()
    artifacts.append(_write_summary(out_dir, summary))
    return RunRecord(
        kind=cfg.kind,
        status="ok",
        config=cfg.snapshot(),
        replicate_seeds=rep_seeds,
        summary_rows=summary,
        artifacts=artifacts,
    )


# -- interval sweep -----------------------------------------------------------------


def _uniform_fallback_predictor(data: LabeledDataset, cap: float, k: int):
    """Closed-form pairwise predictor over the dataset; query points outside
    every admissible segment fall back to the uniform prediction."""

    def prob_fn(x: np.ndarray) -> np.ndarray:
        preds, covered = line_segment_prediction(data.points, data.labels, k, cap, x[:, 0])
        preds[~covered] = 1.0 / k
        prob_fn.coverage = float(covered.mean())
        return preds

    prob_fn.coverage = float("nan")
    return prob_fn


def _run_interval_sweep(cfg: ExperimentConfig, out_dir: Path) -> RunRecord:
    dist, metrics = cfg.distribution, cfg.metrics
    k = dist["k"]
    rows = _Rows(out_dir, cfg.arms)
    artifacts = []
    rep_seeds = [cfg.base_seed + r * REPLICATE_SEED_STRIDE for r in range(cfg.replicates)]
    for r, rep_seed in enumerate(rep_seeds):
        for ai, alpha in enumerate(dist["alpha_grid"]):
            spec = IntervalSpec(k=k, alpha=alpha)
            data = spec.sample(dist["n_train"], derive_seed(rep_seed, ai, _S_TRAIN))
            eval_seed = derive_seed(rep_seed, ai, _S_KL)
            if "erm+oracle-ts" in cfg.arms:
                model = train(
                    data,
                    _train_config(cfg, "erm", 1, derive_seed(rep_seed, ai, _S_MODEL)),
                )
                fit = fit_temperature_oracle(
                    model.logits, spec, metrics["n_mc"], derive_seed(rep_seed, ai, _S_TS)
                )
                kl_obj = oracle_kl_objective(model.logits, spec, metrics["n_mc"], eval_seed)
                rows.add(r, alpha, "erm+oracle-ts", "expected_kl", kl_obj(fit.temperature))
                rows.add(r, alpha, "erm+oracle-ts", "temperature", fit.temperature)
                rows.add(
                    r, alpha, "erm+oracle-ts", "interp_fraction",
                    check_interpolation(model, data).fraction_interpolating,
                )
            if "dmixup-oracle" in cfg.arms:
                prob_fn = _uniform_fallback_predictor(data, metrics["mix_cap"], k)
                kl = expected_kl_probs(prob_fn, spec, metrics["n_mc"], eval_seed)
                rows.add(r, alpha, "dmixup-oracle", "expected_kl", kl)
                rows.add(r, alpha, "dmixup-oracle", "coverage", prob_fn.coverage)
            if "dmixup1-trained" in cfg.arms:
                model = train(
                    data,
                    _train_config(
                        cfg, "dmixup", 1, derive_seed(rep_seed, ai, _S_MODEL, 1)
                    ),
                )
                kl_obj = oracle_kl_objective(model.logits, spec, metrics["n_mc"], eval_seed)
                rows.add(r, alpha, "dmixup1-trained", "expected_kl", kl_obj(1.0))
        artifacts.append(rows.flush_replicate(r))
    summary = rows.summary()
    artifacts.append(_write_summary(out_dir, summary))
    return RunRecord(
        kind=cfg.kind,
        status="ok",
        config=cfg.snapshot(),
        replicate_seeds=rep_seeds,
        summary_rows=summary,
        artifacts=artifacts,
    )


# -- closed-form verification suite -----------------------------------------------------


def verify_closed_form(points, labels, n_classes: int, d: int, n_queries: int, rng):
    """Compare the closed-form prediction against the numerical minimizer at
    covered query points drawn from random admissible simplices.

    Returns (status, max_deviation, n_tuples); status is "skipped" with nan
    deviation when the dataset admits no mixing tuple (for example all
    points identical)."""
    pts = np.asarray(points, dtype=np.float64)
    cap = float(np.max(np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2))) * 1.01
    if cap == 0.0:
        cap = 1.0
    sigmas = build_mixing_set(pts, d=d, cap=cap)
    if not sigmas:
        return "skipped", float("nan"), 0
    mix = MixDistribution(d=d)
    dev = 0.0
    for _ in range(n_queries):
        sigma = sigmas[int(rng.integers(0, len(sigmas)))]
        lam = mix.sample(rng)
        z = lam @ pts[list(sigma.indices)]
        closed = optimal_prediction(pts, labels, n_classes, sigmas, mix, z)
        numeric = pointwise_minimizer(pts, labels, n_classes, sigmas, mix, z)
        dev = max(dev, float(np.max(np.abs(closed - numeric))))
    return "ok", dev, len(sigmas)


def _run_oracle_verify(cfg: ExperimentConfig, out_dir: Path) -> RunRecord:
    o = cfg.oracle
    rows = _Rows(out_dir, ())
    lines = ["dataset,d,n_points,n_tuples,n_queries,max_deviation,status"]
    worst = 0.0
    skipped = 0
    for t in range(o["n_datasets"]):
        d = o["dims"][t % len(o["dims"])]
        rng = np.random.default_rng(derive_seed(cfg.base_seed, t))
        n = int(rng.integers(d + 2, o["max_points"] + 1))
        pts = rng.normal(size=(n, d))
        labels = rng.integers(1, 4, size=n)
        status, dev, n_tuples = verify_closed_form(pts, labels, 3, d, o["n_queries"], rng)
        if status == "skipped":
            skipped += 1
            lines.append(f"{t},{d},{n},0,0,nan,skipped")
            continue
        worst = max(worst, dev)
        lines.append(f"{t},{d},{n},{n_tuples},{o['n_queries']},{_fmt(dev)},ok")
        rows.add(0, float(d), "oracle", "max_deviation", dev)
    (out_dir / "deviations.csv").write_text("\n".join(lines) + "\n")
    artifacts = [rows.flush_replicate(0), "deviations.csv"]
    summary = rows.summary()
    artifacts.append(_write_summary(out_dir, summary))
    ok = worst <= o["tolerance"]
    return RunRecord(
        kind=cfg.kind,
        status="ok" if ok else "failed",
        config=cfg.snapshot(),
        replicate_seeds=[cfg.base_seed],
        summary_rows=summary,
        artifacts=artifacts,
        detail={
            "max_deviation": worst,
            "tolerance": o["tolerance"],
            "skipped_datasets": skipped,
        },
        failure=None if ok else
        f"closed form deviates from the minimizer by {worst:.3e} > {o['tolerance']:.1e}",
    )


# -- logit-gap radius probe ----------------------------------------------------------


def _run_logit_probe(cfg: ExperimentConfig, out_dir: Path) -> RunRecord:
    dist = cfg.distribution
    spec = IntervalSpec(k=dist["k"], alpha=dist["alpha"])
    data = spec.sample(dist["n_train"], derive_seed(cfg.base_seed, 0, _S_TRAIN))
    artifacts = []
    if cfg.probe["checkpoint"]:
        model = load_model(cfg.probe["checkpoint"])
    else:
        model = train(
            data, _train_config(cfg, "erm", 1, derive_seed(cfg.base_seed, 0, _S_MODEL))
        )
        save_model(model, out_dir / "model.npz")
        save_loss_history(model, out_dir / "loss_history.csv")
        artifacts += ["model.npz", "loss_history.csv"]
    probe = RegularityProbe(
        radii=tuple(cfg.probe["radii"]), samples_per_sphere=cfg.probe["sphere_samples"]
    )
    gaps = logit_gap_probe(model, data, probe, derive_seed(cfg.base_seed, 0, _S_PROBE))
    lines = ["radius,mean_gap"]
    rows = _Rows(out_dir, cfg.arms)
    for radius, gap in zip(probe.radii, gaps):
        lines.append(f"{_fmt(radius)},{_fmt(gap)}")
        rows.add(0, radius, "erm", "mean_gap", gap)
    (out_dir / "gap_curve.csv").write_text("\n".join(lines) + "\n")
    rows.add(0, 0.0, "erm", "interp_fraction",
             check_interpolation(model, data).fraction_interpolating)
    artifacts += ["gap_curve.csv", rows.flush_replicate(0)]
    summary = rows.summary()
    artifacts.append(_write_summary(out_dir, summary))
    return RunRecord(
        kind=cfg.kind,
        status="ok",
        config=cfg.snapshot(),
        replicate_seeds=[cfg.base_seed],
        summary_rows=summary,
        artifacts=artifacts,
    )


# -- dispatch -------------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig, out_dir) -> RunRecord:
    """Run one configured experiment, writing artifacts under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    if cfg.kind in ("gaussian-sweep", "ts-ablation"):
        record = _run_model_family(cfg, out_dir)
    elif cfg.kind == "interval-sweep":
        record = _run_interval_sweep(cfg, out_dir)
    elif cfg.kind == "oracle-verify":
        record = _run_oracle_verify(cfg, out_dir)
    elif cfg.kind == "logit-probe":
        record = _run_logit_probe(cfg, out_dir)
    else:
        raise ParameterError(f"unknown experiment kind {cfg.kind!r}")
    record.wall_clock_s = time.perf_counter() - started
    (out_dir / "record.json").write_text(
        json.dumps(record.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    record.artifacts.append("record.json")
    return record
