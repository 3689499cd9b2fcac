"""FastAPI app exposing the train/eval/query/report workflows."""

from __future__ import annotations

from importlib import metadata

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import config as configmod
from .. import data
from ..codes import load_codes, save_codes, write_codes_csv
from ..embedding import encode, load_model, save_model
from ..errors import FileFormatError, InvalidInput, TrainingDiverged
from ..histograms import write_histogram_csv
from ..retrieval import (evaluate_model, hamming_to_all, histogram_overlap,
                         mean_distance_histograms, relevance_from_oracle,
                         write_report_csv)
from ..svg import write_histogram_svg
from ..trainer import train, write_train_log_csv
from . import schemas


def _version() -> str:
    try:
        return metadata.version("mihash")
    except metadata.PackageNotFoundError:
        return "0.0.0"


def create_app() -> FastAPI:
    app = FastAPI(title="mihash", version=_version())

    @app.exception_handler(InvalidInput)
    async def _invalid(request, exc):  # noqa: ANN001
        raise HTTPException(status_code=400, detail=str(exc))

    @app.exception_handler(FileFormatError)
    async def _format(request, exc):  # noqa: ANN001
        raise HTTPException(status_code=400, detail=str(exc))

    @app.exception_handler(FileNotFoundError)
    async def _missing(request, exc):  # noqa: ANN001
        raise HTTPException(status_code=404, detail=str(exc))

    @app.exception_handler(TrainingDiverged)
    async def _diverged(request, exc):  # noqa: ANN001
        raise HTTPException(status_code=409, detail=str(exc))

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=_version())

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest) -> schemas.SynthResponse:
        dataset = data.synth_dataset(req.classes, req.per_class, req.dim,
                                     req.separation, seed=req.seed)
        if req.features_out.endswith(".csv"):
            data.save_features_csv(req.features_out, dataset.features)
        else:
            data.save_features_packed(req.features_out, dataset.features)
        data.save_labels_csv(req.labels_out, dataset.labels)
        return schemas.SynthResponse(features_path=req.features_out,
                                     labels_path=req.labels_out,
                                     count=dataset.count, dim=dataset.dim)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train_endpoint(req: schemas.TrainRequest) -> schemas.TrainResponse:
        cfg = configmod.parse_config(req.config_path)
        dataset = configmod.load_dataset(cfg)
        oracle = configmod.build_oracle(cfg, dataset)
        result = train(dataset, oracle, cfg.train, eval_map=cfg.eval_map)
        save_model(cfg.model_out, result.model)
        write_train_log_csv(cfg.log_out, result.log)
        last = result.log[-1] if result.log else None
        return schemas.TrainResponse(
            model_path=cfg.model_out, log_path=cfg.log_out,
            epochs=len(result.log),
            final_objective=last.mean_objective if last else None,
            final_val_map=last.val_map if last else None)

    def _eval_setup(model_path: str, config_path: str):
        model = load_model(model_path)
        cfg = configmod.parse_config(config_path)
        dataset = configmod.load_dataset(cfg)
        if dataset.dim != model.input_dim:
            raise InvalidInput(
                f"model expects {model.input_dim}-d features, dataset has "
                f"{dataset.dim}-d")
        oracle = configmod.build_oracle(cfg, dataset)
        features = configmod.standardized_features(cfg, dataset)
        return model, cfg, dataset, oracle, features

    def _mean_histograms(model, dataset, oracle, features):
        test = dataset.splits["test"]
        retrieval = dataset.splits["retrieval"]
        query_codes = encode(model, features[test])
        db_codes = encode(model, features[retrieval])
        rel = relevance_from_oracle(oracle, test, retrieval)
        return mean_distance_histograms(query_codes, db_codes, rel)

    @app.post("/eval", response_model=schemas.EvalResponse)
    def eval_endpoint(req: schemas.EvalRequest) -> schemas.EvalResponse:
        model, cfg, dataset, oracle, features = _eval_setup(
            req.model_path, req.config_path)
        report = evaluate_model(model, features, oracle,
                                dataset.splits["test"],
                                dataset.splits["retrieval"],
                                k_values=req.k_values)
        write_report_csv(req.report_out, report)
        dists_csv = dists_svg = None
        if req.plot_dists:
            dists_csv = req.dists_csv_out or req.report_out + ".dists.csv"
            dists_svg = req.dists_svg_out or req.report_out + ".dists.svg"
            p_plus, p_minus = _mean_histograms(model, dataset, oracle, features)
            write_histogram_csv(dists_csv, p_plus, p_minus)
            write_histogram_svg(dists_svg, p_plus, p_minus)
        return schemas.EvalResponse(map=report["map"], map_at=report["map_at"],
                                    precision_at=report["precision_at"],
                                    report_path=req.report_out,
                                    dists_csv_path=dists_csv,
                                    dists_svg_path=dists_svg)

    @app.post("/plot-dists", response_model=schemas.PlotDistsResponse)
    def plot_dists(req: schemas.PlotDistsRequest) -> schemas.PlotDistsResponse:
        model, cfg, dataset, oracle, features = _eval_setup(
            req.model_path, req.config_path)
        p_plus, p_minus = _mean_histograms(model, dataset, oracle, features)
        write_histogram_csv(req.csv_out, p_plus, p_minus)
        write_histogram_svg(req.svg_out, p_plus, p_minus)
        return schemas.PlotDistsResponse(csv_path=req.csv_out,
                                         svg_path=req.svg_out,
                                         overlap=histogram_overlap(p_plus, p_minus))

    @app.post("/query", response_model=schemas.QueryResponse)
    def query(req: schemas.QueryRequest) -> schemas.QueryResponse:
        model = load_model(req.model_path)
        db = load_codes(req.codes_path)
        features = data.load_features(req.features_path)
        if features.shape[1] != model.input_dim:
            raise InvalidInput(
                f"model expects {model.input_dim}-d features, queries have "
                f"{features.shape[1]}-d")
        if db.b != model.code_length:
            raise InvalidInput(
                f"model emits {model.code_length}-bit codes, database holds "
                f"{db.b}-bit codes")
        warnings = []
        k = req.k
        if k > db.count:
            warnings.append(f"k={k} exceeds database size {db.count}; clamped")
            k = db.count
        query_codes = encode(model, features)
        results = []
        for qi in range(query_codes.count):
            dists = hamming_to_all(query_codes[qi], db)
            order = np.argsort(dists, kind="stable")[:k]
            results.append([schemas.QueryHit(index=int(j), distance=int(dists[j]))
                            for j in order])
        return schemas.QueryResponse(results=results, warnings=warnings)

    @app.post("/export-codes", response_model=schemas.ExportCodesResponse)
    def export_codes(req: schemas.ExportCodesRequest) -> schemas.ExportCodesResponse:
        model = load_model(req.model_path)
        features = data.load_features(req.features_path)
        if features.shape[1] != model.input_dim:
            raise InvalidInput(
                f"model expects {model.input_dim}-d features, got "
                f"{features.shape[1]}-d")
        codes = encode(model, features)
        save_codes(req.codes_out, codes)
        if req.csv_out:
            write_codes_csv(req.csv_out, codes)
        return schemas.ExportCodesResponse(codes_path=req.codes_out,
                                           csv_path=req.csv_out,
                                           count=codes.count,
                                           code_length=codes.b)

    return app
