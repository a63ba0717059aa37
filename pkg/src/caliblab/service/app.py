"""FastAPI service wrapping the core package.

Endpoints cover the main surfaces: synthetic dataset sampling, label
noise, calibration metric reports, temperature fitting, the closed-form
mixed-label prediction, and synchronous experiment runs. Domain errors
map to HTTP 400; request-shape errors are FastAPI's usual 422.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..calibration import PredictionSet, fit_temperature_nll, make_report
from ..config import parse_config
from ..datasets import (
    GaussianPairSpec,
    IntervalSpec,
    LabeledDataset,
    NoisePlan,
    inject_label_noise,
    random_noise_plan,
)
from ..errors import CalibLabError, ParameterError
from ..experiments import run_experiment
from ..mixing import MixDistribution, build_mixing_set, default_diameter_cap, optimal_prediction
from . import schemas

__all__ = ["create_app", "app"]


def _dataset_response(data: LabeledDataset) -> schemas.DatasetResponse:
    lines = [f"{data.dim},{data.n_classes},{data.n},{data.seed}"]
    for row, label in zip(data.points, data.labels):
        lines.append(",".join(repr(float(v)) for v in row) + f",{label}")
    return schemas.DatasetResponse(
        dim=data.dim,
        k=data.n_classes,
        n=data.n,
        seed=data.seed,
        source=data.source,
        points=[[float(v) for v in row] for row in data.points],
        labels=[int(v) for v in data.labels],
        text="\n".join(lines) + "\n",
    )


def create_app() -> FastAPI:
    app = FastAPI(title="caliblab", version=__version__)

    @app.exception_handler(CalibLabError)
    async def _domain_error(request: Request, exc: CalibLabError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/datasets/sample", response_model=schemas.DatasetResponse)
    def sample_dataset(req: schemas.DatasetRequest):
        if req.kind == "intervals":
            if req.k is None or req.alpha is None:
                raise ParameterError("interval sampling needs k and alpha")
            data = IntervalSpec(k=req.k, alpha=req.alpha).sample(req.n, req.seed)
        else:
            if req.mu is not None:
                spec = GaussianPairSpec(np.asarray(req.mu, dtype=float))
            elif req.mu_value is not None and req.dim is not None:
                spec = GaussianPairSpec.constant(req.mu_value, req.dim)
            else:
                raise ParameterError("gaussian sampling needs mu or (mu_value, dim)")
            data = spec.sample(req.n, req.seed)
        return _dataset_response(data)

    @app.post("/datasets/noise", response_model=schemas.DatasetResponse)
    def noise_dataset(req: schemas.NoiseRequest):
        data = LabeledDataset(
            points=np.asarray(req.dataset.points, dtype=float),
            labels=np.asarray(req.dataset.labels, dtype=np.int64),
            n_classes=req.dataset.k,
            seed=req.dataset.seed,
            source=req.dataset.source,
        )
        if req.pairing is not None:
            plan = NoisePlan(pairing={int(a): int(b) for a, b in req.pairing.items()},
                             rate=req.rate)
        else:
            plan = random_noise_plan(sorted(set(data.labels.tolist())), req.rate, req.seed)
        return _dataset_response(inject_label_noise(data, plan, req.seed))

    @app.post("/metrics/report", response_model=schemas.MetricsResponse)
    def metrics_report(req: schemas.MetricsRequest):
        labels = np.asarray(req.labels, dtype=np.int64)
        if req.logits is not None:
            preds = PredictionSet.from_logits(
                np.asarray(req.logits, dtype=float), labels, temperature=req.temperature
            )
        elif req.probs is not None:
            preds = PredictionSet(probs=np.asarray(req.probs, dtype=float), labels=labels)
        else:
            raise ParameterError("provide probs or logits")
        report = make_report(preds, n_bins=req.n_bins, seed=0)
        return {"report": report.to_dict()}

    @app.post("/temperature/fit", response_model=schemas.TemperatureFitResponse)
    def temperature_fit(req: schemas.TemperatureFitRequest):
        fit = fit_temperature_nll(
            np.asarray(req.logits, dtype=float), np.asarray(req.labels, dtype=np.int64)
        )
        return {
            "temperature": fit.temperature,
            "objective_value": fit.objective_value,
            "bracket": fit.bracket,
            "n_probes": len(fit.trace),
        }

    @app.post("/mixing/optimal-prediction", response_model=schemas.OptimalPredictionResponse)
    def mixing_prediction(req: schemas.OptimalPredictionRequest):
        points = np.asarray(req.points, dtype=float)
        labels = np.asarray(req.labels, dtype=np.int64)
        cap = req.cap if req.cap is not None else default_diameter_cap(points)
        sigmas = build_mixing_set(points, d=req.d, cap=cap)
        pred = optimal_prediction(
            points, labels, req.n_classes, sigmas, MixDistribution(d=req.d),
            np.asarray(req.z, dtype=float),
        )
        return {
            "prediction": [float(v) for v in pred],
            "n_tuples": len(sigmas),
            "cap": float(cap),
        }

    @app.post("/experiments/run", response_model=schemas.ExperimentResponse)
    def experiments_run(req: schemas.ExperimentRequest):
        cfg = parse_config(
            req.config_text,
            base_seed=req.base_seed,
            replicates=req.replicates,
            arms=tuple(req.arms) if req.arms is not None else None,
        )
        inline = req.out_dir is None
        if inline:
            with tempfile.TemporaryDirectory() as tmp:
                record = run_experiment(cfg, tmp)
                artifacts = _collect_artifacts(Path(tmp))
                summary = (Path(tmp) / "summary.csv").read_text()
        else:
            out = Path(req.out_dir)
            record = run_experiment(cfg, out)
            artifacts = []
            summary = (out / "summary.csv").read_text()
        return {
            "kind": record.kind,
            "status": record.status,
            "summary_csv": summary,
            "artifacts": artifacts,
            "out_dir": req.out_dir,
            "wall_clock_s": record.wall_clock_s,
            "detail": record.detail,
            "failure": record.failure,
        }

    return app


def _collect_artifacts(root: Path) -> list[schemas.ArtifactFile]:
    files = []
    for path in sorted(root.rglob("*")):
        if path.is_file():
            try:
                content = path.read_text()
            except UnicodeDecodeError:
                continue  # binary checkpoints stay server-side in inline mode
            files.append(
                schemas.ArtifactFile(path=str(path.relative_to(root)), content=content)
            )
    return files


app = create_app()
