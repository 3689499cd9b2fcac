"""Minibatch SGD training of a hash model against the batch MI objective.

The objective is maximized; internally its negation is fed to a standard
momentum + weight-decay minimizer. Runs are deterministic under a fixed
seed: one seed sequence feeds weight initialization and batch sampling,
and all reductions are sequential.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .batch_gradients import AffinityMatrix, BatchWorkspace, efficient_jacobian
from .data import Dataset, Standardizer
from .embedding import HashModel, gaussian_init, relax, relax_jacobian_diag
from .errors import InvalidInput, TrainingDiverged


@dataclass
class TrainConfig:
    code_length: int = 16
    batch_size: int = 256
    epochs: int = 20
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_decay_factor: float = 0.5
    lr_decay_period: int = 10
    gamma: float = 1.0
    seed: int = 0
    balanced_sampling: bool = False
    standardize: bool = False
    deterministic: bool = True

    def __post_init__(self) -> None:
        checks = [
            (self.code_length >= 1, "code_length must be >= 1"),
            (self.batch_size >= 2, "batch_size must be >= 2"),
            (self.epochs >= 0, "epochs must be >= 0"),
            (self.lr > 0, "lr must be positive"),
            (0 <= self.momentum < 1, "momentum must be in [0, 1)"),
            (self.weight_decay >= 0, "weight_decay must be non-negative"),
            (0 < self.lr_decay_factor <= 1, "lr_decay_factor must be in (0, 1]"),
            (self.lr_decay_period >= 1, "lr_decay_period must be >= 1"),
            (self.gamma > 0, "gamma must be positive"),
        ]
        for ok, message in checks:
            if not ok:
                raise InvalidInput(message)


@dataclass
class OptimizerState:
    velocity: np.ndarray
    step_count: int = 0
    current_lr: float = 0.0


@dataclass
class TrainLogRow:
    epoch: int
    mean_objective: float
    lr: float
    val_map: float | None = None


@dataclass
class TrainResult:
    model: HashModel
    log: list[TrainLogRow] = field(default_factory=list)


def sample_minibatch(dataset: Dataset, oracle, m: int, rng: np.random.Generator,
                     *, split: str = "train", balanced: bool = False):
    """Draw m distinct items from a split and materialize their affinity.

    Returns (feature block (m, n), AffinityMatrix, chosen global indices).
    """
    pool = dataset.splits.get(split)
    if pool is None:
        pool = np.arange(dataset.count)
    if pool.size < m:
        raise InvalidInput(f"split '{split}' has {pool.size} items, need {m}")
    if balanced:
        chosen = _balanced_choice(dataset, pool, m, rng)
    else:
        chosen = rng.choice(pool, size=m, replace=False)
    affinity = AffinityMatrix(neighbors=oracle.pairwise(chosen))
    return dataset.features[chosen], affinity, chosen


def _balanced_choice(dataset: Dataset, pool: np.ndarray, m: int,
                     rng: np.random.Generator) -> np.ndarray:
    if dataset.labels is None or dataset.labels.ndim != 1:
        raise InvalidInput("balanced sampling needs single labels")
    labels = dataset.labels[pool]
    classes = np.unique(labels)
    quota = np.full(classes.size, m // classes.size)
    quota[: m % classes.size] += 1
    picked: list[np.ndarray] = []
    for cls, want in zip(classes, quota):
        members = pool[labels == cls]
        take = min(want, members.size)
        picked.append(rng.choice(members, size=take, replace=False))
    chosen = np.concatenate(picked)
    if chosen.size < m:  # top up from the rest when a class ran short
        rest = np.setdiff1d(pool, chosen)
        chosen = np.concatenate(
            [chosen, rng.choice(rest, size=m - chosen.size, replace=False)])
    return chosen


def backprop_to_weights(model: HashModel, features: np.ndarray,
                        batch_jacobian: np.ndarray) -> np.ndarray:
    """Chain the code-space Jacobian through the sigmoid into the weights."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if batch_jacobian.shape != (model.code_length, x.shape[0]):
        raise InvalidInput(
            f"batch jacobian shape {batch_jacobian.shape} does not match "
            f"(b={model.code_length}, M={x.shape[0]})")
    slope = relax_jacobian_diag(model.activations(x), model.gamma)  # (b, M)
    return (batch_jacobian * slope) @ x


def sgd_step(weights: np.ndarray, grad: np.ndarray, state: OptimizerState,
             config: TrainConfig):
    """Momentum update on the negated objective; mutates weights and state."""
    if not np.isfinite(grad).all():
        raise TrainingDiverged(
            f"non-finite gradient at step {state.step_count}; try a lower lr")
    grad_loss = -grad + config.weight_decay * weights
    state.velocity *= config.momentum
    state.velocity -= state.current_lr * grad_loss
    weights += state.velocity
    state.step_count += 1
    if not np.isfinite(weights).all():
        raise TrainingDiverged(
            f"non-finite weights at step {state.step_count}; try a lower lr")
    return weights, state


def train(dataset: Dataset, oracle, config: TrainConfig, *,
          eval_map: bool = False) -> TrainResult:
    """Run the full schedule and return the model plus a per-epoch log."""
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    init_rng = np.random.default_rng(seeds[0])
    batch_rng = np.random.default_rng(seeds[1])

    features = dataset.features
    if config.standardize:
        train_idx = dataset.splits.get("train")
        fit_on = features[train_idx] if train_idx is not None else features
        features = Standardizer.fit(fit_on).transform(features)
        dataset = Dataset(features=features, labels=dataset.labels,
                          splits=dict(dataset.splits))

    model = gaussian_init(dataset.dim, config.code_length, config.gamma,
                          seed=init_rng)
    state = OptimizerState(velocity=np.zeros_like(model.weights),
                           current_lr=config.lr)
    pool = dataset.splits.get("train")
    pool_size = pool.size if pool is not None else dataset.count
    if pool_size < config.batch_size:
        raise InvalidInput(
            f"training split of {pool_size} items cannot fill batches of "
            f"{config.batch_size}")
    steps_per_epoch = max(1, pool_size // config.batch_size)

    workspace = BatchWorkspace()
    log: list[TrainLogRow] = []
    for epoch in range(config.epochs):
        state.current_lr = config.lr * config.lr_decay_factor ** (
            epoch // config.lr_decay_period)
        batch_objectives = np.empty(steps_per_epoch)
        for step in range(steps_per_epoch):
            block, affinity, _ = sample_minibatch(
                dataset, oracle, config.batch_size, batch_rng,
                balanced=config.balanced_sampling)
            codes = relax(model.activations(block), config.gamma)
            grads = efficient_jacobian(codes, affinity, workspace)
            weight_grad = backprop_to_weights(model, block, grads.jacobian)
            sgd_step(model.weights, weight_grad, state, config)
            batch_objectives[step] = grads.objective
        val_map = _validation_map(model, dataset, oracle) if eval_map else None
        log.append(TrainLogRow(epoch=epoch,
                               mean_objective=float(batch_objectives.mean()),
                               lr=state.current_lr, val_map=val_map))
    return TrainResult(model=model, log=log)


def _validation_map(model: HashModel, dataset: Dataset, oracle) -> float | None:
    test = dataset.splits.get("test")
    retrieval = dataset.splits.get("retrieval")
    if test is None or retrieval is None or test.size == 0:
        return None
    from .retrieval import evaluate_model

    return evaluate_model(model, dataset.features, oracle, test, retrieval)["map"]


def write_train_log_csv(path, log: list[TrainLogRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_objective", "lr", "val_map"])
        for row in log:
            val = "" if row.val_map is None else f"{row.val_map:.17g}"
            writer.writerow([row.epoch, f"{row.mean_objective:.17g}",
                             f"{row.lr:.17g}", val])
