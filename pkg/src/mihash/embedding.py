"""Linear hash models: sign-thresholded codes and their sigmoid relaxation.

A model maps an n-dimensional feature vector to b activations through a
single linear layer (no bias; append a constant feature to emulate one).
Thresholding at zero gives the binary code; the scaled-sigmoid relaxation
gives a differentiable surrogate in (-1, 1)^b.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .codes import BinaryCode, BinaryCodeSet, pack_signs
from .errors import FileFormatError, InvalidInput

MODEL_MAGIC = b"MIH1"

# Largest double strictly inside the open interval; keeps relaxed codes
# off the +-1 boundary even when the sigmoid saturates in float64.
_OPEN_ONE = np.nextafter(1.0, 0.0)


@dataclass
class HashModel:
    """Weight matrix (b rows, one per bit function) plus sigmoid steepness."""

    weights: np.ndarray  # (b, n) float64
    gamma: float = 1.0

    def __post_init__(self) -> None:
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or min(self.weights.shape) < 1:
            raise InvalidInput(f"weights must be a b x n matrix, got {self.weights.shape}")
        if not np.isfinite(self.weights).all():
            raise InvalidInput("weights must be finite")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise InvalidInput(f"gamma must be positive, got {self.gamma}")

    @property
    def code_length(self) -> int:
        return self.weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]

    def activations(self, features: np.ndarray) -> np.ndarray:
        """Linear activations for one vector (n,) -> (b,) or a block (M, n) -> (b, M)."""
        x = np.asarray(features, dtype=np.float64)
        if x.shape[-1] != self.input_dim:
            raise InvalidInput(
                f"feature dimension {x.shape[-1]} != model input_dim {self.input_dim}"
            )
        if not np.isfinite(x).all():
            raise InvalidInput("features must be finite")
        if x.ndim == 1:
            return self.weights @ x
        return self.weights @ x.T


def gaussian_init(input_dim: int, code_length: int, gamma: float = 1.0,
                  seed: int = 0) -> HashModel:
    """Seeded i.i.d. Gaussian weights with std 1/sqrt(n).

    This is the random-projection (LSH-style) starting point; the scale
    keeps initial activations O(1) for unit-scale features.
    """
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 1.0 / np.sqrt(input_dim), size=(code_length, input_dim))
    return HashModel(weights=w, gamma=gamma)


def forward_linear(model: HashModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInput(f"expected a single feature vector, got shape {x.shape}")
    return model.activations(x)


def relax(activations: np.ndarray, gamma: float) -> np.ndarray:
    """2*sigmoid(gamma*f) - 1, elementwise; strictly inside (-1, 1)."""
    if not (np.isfinite(gamma) and gamma > 0):
        raise InvalidInput(f"gamma must be positive, got {gamma}")
    f = np.asarray(activations, dtype=np.float64)
    if not np.isfinite(f).all():
        raise InvalidInput("activations must be finite")
    # 2*sigmoid(z) - 1 == tanh(z/2); clip keeps the interval open under saturation
    return np.clip(np.tanh(0.5 * gamma * f), -_OPEN_ONE, _OPEN_ONE)


def relax_jacobian_diag(activations: np.ndarray, gamma: float) -> np.ndarray:
    """Elementwise derivative of relax: 2*gamma*sigmoid(z)*(1-sigmoid(z))."""
    if not (np.isfinite(gamma) and gamma > 0):
        raise InvalidInput(f"gamma must be positive, got {gamma}")
    f = np.asarray(activations, dtype=np.float64)
    if not np.isfinite(f).all():
        raise InvalidInput("activations must be finite")
    t = np.tanh(0.5 * gamma * f)
    # floor at the smallest normal double so the diagonal stays positive
    # even where the sigmoid derivative underflows
    return np.fmax(0.5 * gamma * (1.0 - t * t), np.finfo(np.float64).tiny)


def sign_codes(activations: np.ndarray) -> np.ndarray:
    """Threshold activations to {-1,+1} int8; exact zero maps to +1."""
    f = np.asarray(activations)
    if not np.isfinite(f).all():
        raise InvalidInput("activations must be finite")
    return np.where(f >= 0, 1, -1).astype(np.int8)


def binarize(activations: np.ndarray) -> BinaryCode:
    return BinaryCode.from_signs(sign_codes(activations))


def encode(model: HashModel, features: np.ndarray) -> BinaryCodeSet:
    """Binary codes for a feature block (N, n)."""
    acts = model.activations(np.atleast_2d(np.asarray(features, dtype=np.float64)))
    signs = sign_codes(acts.T)  # (N, b)
    return BinaryCodeSet(words=pack_signs(signs), b=model.code_length)


def relaxed_codes(model: HashModel, features: np.ndarray) -> np.ndarray:
    """Relaxed code matrix, b rows x M columns, for a feature block (M, n)."""
    acts = model.activations(np.atleast_2d(np.asarray(features, dtype=np.float64)))
    return relax(acts, model.gamma)


def save_model(path, model: HashModel) -> None:
    """Write the "MIH1" model file: magic, n, b, gamma, then row-major weights."""
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<IId", model.input_dim, model.code_length, model.gamma))
        fh.write(np.ascontiguousarray(model.weights, dtype="<f8").tobytes())


def load_model(path) -> HashModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MODEL_MAGIC:
            raise FileFormatError(f"{path}: bad magic {magic!r}, expected MIH1")
        n, b, gamma = struct.unpack("<IId", fh.read(16))
        raw = fh.read(b * n * 8)
        if len(raw) != b * n * 8:
            raise FileFormatError(f"{path}: truncated weight payload")
        weights = np.frombuffer(raw, dtype="<f8").reshape(b, n)
    return HashModel(weights=weights.copy(), gamma=gamma)


def model_to_json(model: HashModel) -> str:
    """Debug export of the full model as JSON text."""
    return json.dumps(
        {
            "input_dim": model.input_dim,
            "code_length": model.code_length,
            "gamma": model.gamma,
            "weights": model.weights.tolist(),
        }
    )


def model_from_json(text: str) -> HashModel:
    obj = json.loads(text)
    return HashModel(weights=np.asarray(obj["weights"], dtype=np.float64),
                     gamma=float(obj["gamma"]))
