"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class DatasetRequest(BaseModel):
    kind: Literal["intervals", "gaussians"]
    n: int = Field(ge=1)
    seed: int = 0
    # intervals
    k: Optional[int] = None
    alpha: Optional[float] = None
    # gaussians: either an explicit mean vector or value * ones(dim)
    mu: Optional[list[float]] = None
    mu_value: Optional[float] = None
    dim: Optional[int] = None


class DatasetResponse(BaseModel):
    dim: int
    k: int
    n: int
    seed: int
    source: str
    points: list[list[float]]
    labels: list[int]
    text: str


class NoiseRequest(BaseModel):
    dataset: DatasetResponse
    rate: float = Field(ge=0.0, le=1.0)
    seed: int = 0
    pairing: Optional[dict[int, int]] = None


class MetricsRequest(BaseModel):
    probs: Optional[list[list[float]]] = None
    logits: Optional[list[list[float]]] = None
    labels: list[int]
    n_bins: int = 15
    temperature: float = 1.0


class MetricsResponse(BaseModel):
    report: dict


class TemperatureFitRequest(BaseModel):
    logits: list[list[float]]
    labels: list[int]


class TemperatureFitResponse(BaseModel):
    temperature: float
    objective_value: float
    bracket: tuple[float, float]
    n_probes: int


class OptimalPredictionRequest(BaseModel):
    points: list[list[float]]
    labels: list[int]
    n_classes: int = Field(ge=2)
    d: int = Field(ge=1)
    cap: Optional[float] = None
    z: list[float]


class OptimalPredictionResponse(BaseModel):
    prediction: list[float]
    n_tuples: int
    cap: float


class ExperimentRequest(BaseModel):
    config_text: str
    out_dir: Optional[str] = None
    base_seed: Optional[int] = None
    replicates: Optional[int] = None
    arms: Optional[list[str]] = None


class ArtifactFile(BaseModel):
    path: str
    content: str


class ExperimentResponse(BaseModel):
    kind: str
    status: str
    summary_csv: str
    artifacts: list[ArtifactFile]
    out_dir: Optional[str]
    wall_clock_s: float
    detail: dict
    failure: Optional[str] = None
