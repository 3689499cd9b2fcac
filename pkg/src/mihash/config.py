"""Flat TOML experiment configs shared by the train and eval workflows.

Every key has a default except the feature path, so a minimal config is
just `dataset_features = "..."`. Unknown keys are rejected by name.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import data
from .errors import InvalidInput
from .trainer import TrainConfig


@dataclass
class ExperimentConfig:
    dataset_features: str
    dataset_labels: str | None = None
    oracle_mode: str = data.SINGLE_LABEL
    metric_percentile: float = 5.0
    oracle_pair_budget: int = data.DEFAULT_PAIR_BUDGET
    oracle_seed: int = 0
    test_count: int | None = None
    train_count: int | None = None
    split_seed: int = 0
    eval_map: bool = False
    model_out: str = "model.mih1"
    log_out: str = "train_log.csv"
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)


_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}
_TOP_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"train"}


def parse_config(path) -> ExperimentConfig:
    """Parse a flat TOML file into an ExperimentConfig.

    Raises InvalidInput naming any unknown key.
    """
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise InvalidInput(f"{path}: {exc}") from exc
    train_kwargs = {}
    top_kwargs = {}
    for key, value in raw.items():
        if key in _TRAIN_KEYS:
            train_kwargs[key] = value
        elif key in _TOP_KEYS:
            top_kwargs[key] = value
        else:
            raise InvalidInput(f"{path}: unknown config key '{key}'")
    if "dataset_features" not in top_kwargs:
        raise InvalidInput(f"{path}: missing required key 'dataset_features'")
    cfg = ExperimentConfig(train=TrainConfig(**train_kwargs), **top_kwargs)
    base = Path(path).parent
    for key in ("dataset_features", "dataset_labels", "model_out", "log_out"):
        value = getattr(cfg, key)
        if value is not None:
            setattr(cfg, key, str((base / value).resolve()))
    return cfg


def load_dataset(cfg: ExperimentConfig) -> data.Dataset:
    features = data.load_features(cfg.dataset_features)
    labels = data.load_labels_csv(cfg.dataset_labels) if cfg.dataset_labels else None
    count = features.shape[0]
    test_count = cfg.test_count if cfg.test_count is not None else max(1, count // 10)
    splits = data.make_splits(count, test_count=test_count,
                              train_count=cfg.train_count, seed=cfg.split_seed)
    return data.Dataset(features=features, labels=labels, splits=splits)


def build_oracle(cfg: ExperimentConfig, dataset: data.Dataset) -> data.AffinityOracle:
    return data.build_oracle(dataset, cfg.oracle_mode,
                             percentile=cfg.metric_percentile,
                             seed=cfg.oracle_seed,
                             pair_budget=cfg.oracle_pair_budget)


def standardized_features(cfg: ExperimentConfig,
                          dataset: data.Dataset) -> np.ndarray:
    """Features as the trained model saw them (standardize stats from train)."""
    if not cfg.train.standardize:
        return dataset.features
    train_idx = dataset.splits.get("train")
    fit_on = dataset.features[train_idx] if train_idx is not None else dataset.features
    return data.Standardizer.fit(fit_on).transform(dataset.features)
