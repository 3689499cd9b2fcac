"""Request/response models for the experiment service.

Endpoints operate on files reachable from the service process; the CLI
runs the app in-process by default, so paths behave like local CLI args.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class SynthRequest(BaseModel):
    classes: int = Field(ge=1)
    per_class: int = Field(ge=1)
    dim: int = Field(ge=1)
    separation: float = Field(ge=0.0)
    seed: int = 0
    features_out: str
    labels_out: str


class SynthResponse(BaseModel):
    features_path: str
    labels_path: str
    count: int
    dim: int


class TrainRequest(BaseModel):
    config_path: str


class TrainResponse(BaseModel):
    model_path: str
    log_path: str
    epochs: int
    final_objective: float | None = None
    final_val_map: float | None = None


class EvalRequest(BaseModel):
    model_path: str
    config_path: str
    k_values: list[int] = Field(default_factory=list)
    report_out: str
    plot_dists: bool = False
    dists_csv_out: str | None = None
    dists_svg_out: str | None = None


class EvalResponse(BaseModel):
    map: float
    map_at: dict[int, float]
    precision_at: dict[int, float]
    report_path: str
    dists_csv_path: str | None = None
    dists_svg_path: str | None = None


class QueryRequest(BaseModel):
    model_path: str
    codes_path: str
    features_path: str
    k: int = Field(ge=1)


class QueryHit(BaseModel):
    index: int
    distance: int


class QueryResponse(BaseModel):
    results: list[list[QueryHit]]
    warnings: list[str] = Field(default_factory=list)


class ExportCodesRequest(BaseModel):
    model_path: str
    features_path: str
    codes_out: str
    csv_out: str | None = None


class ExportCodesResponse(BaseModel):
    codes_path: str
    csv_path: str | None = None
    count: int
    code_length: int


class PlotDistsRequest(BaseModel):
    model_path: str
    config_path: str
    csv_out: str
    svg_out: str


class PlotDistsResponse(BaseModel):
    csv_path: str
    svg_path: str
    overlap: float
