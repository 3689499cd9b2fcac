"""Distance histograms: relaxed Hamming distances and triangular soft binning.

Bins sit at the integers 0..b and the triangular kernel uses unit spacing,
so the soft weights form a partition of unity on [0, b] and agree exactly
with hard binning at integer distances.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput

# tolerance for distances that land epsilon outside [0, b] through rounding
_RANGE_SLACK = 1e-9


def relaxed_hamming(u: np.ndarray, v: np.ndarray) -> float:
    """(b - u.v)/2 for relaxed codes; equals the bit count on +-1 vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1 or u.shape[0] == 0:
        raise InvalidInput(f"codes must be equal-length, non-empty vectors; "
                           f"got {u.shape} and {v.shape}")
    if not (np.isfinite(u).all() and np.isfinite(v).all()):
        raise InvalidInput("relaxed codes must be finite")
    if np.abs(u).max(initial=0.0) > 1.0 or np.abs(v).max(initial=0.0) > 1.0:
        raise InvalidInput("relaxed code entries must lie in [-1, 1]")
    b = u.shape[0]
    d = 0.5 * (b - float(u @ v))
    return float(min(max(d, 0.0), b))


def triangular_weight(d, l: int, delta: float = 1.0):
    """Kernel weight max{0, 1 - |d - l|/delta}; vectorized over d."""
    if delta <= 0:
        raise InvalidInput(f"delta must be positive, got {delta}")
    d = np.asarray(d, dtype=np.float64)
    out = np.maximum(0.0, 1.0 - np.abs(d - l) / delta)
    return float(out) if out.ndim == 0 else out


def triangular_subgrad(d, l: int, delta: float = 1.0):
    """Subgradient of the triangular weight in d.

    +1/delta on (l-delta, l), -1/delta on (l, l+delta), 0 elsewhere and at
    the kinks d = l, l +- delta (a valid, deterministic subdifferential pick).
    """
    if delta <= 0:
        raise InvalidInput(f"delta must be positive, got {delta}")
    d = np.asarray(d, dtype=np.float64)
    rising = (d > l - delta) & (d < l)
    falling = (d > l) & (d < l + delta)
    out = (rising.astype(np.float64) - falling.astype(np.float64)) / delta
    return float(out) if out.ndim == 0 else out


def _check_distance_range(d: np.ndarray, b: int) -> np.ndarray:
    if d.size == 0:
        raise InvalidInput("distance list must be non-empty")
    if not np.isfinite(d).all():
        raise InvalidInput("distances must be finite")
    if d.min() < -_RANGE_SLACK or d.max() > b + _RANGE_SLACK:
        raise InvalidInput(f"distances must lie in [0, {b}]")
    return np.clip(d, 0.0, float(b))


def soft_histogram(distances, b: int, delta: float = 1.0) -> np.ndarray:
    """Normalized soft histogram over bins 0..b via the triangular kernel."""
    if delta != 1.0:
        raise InvalidInput("soft binning requires delta == 1 (the bin spacing)")
    d = _check_distance_range(np.asarray(distances, dtype=np.float64).ravel(), b)
    lo = np.floor(d).astype(np.intp)
    frac = d - lo
    hist = np.zeros(b + 2)  # extra slot absorbs lo+1 when d == b (weight 0)
    np.add.at(hist, lo, 1.0 - frac)
    np.add.at(hist, lo + 1, frac)
    return hist[: b + 1] / d.size


def hard_histogram(distances, b: int) -> np.ndarray:
    """Normalized counts of integer distances over bins 0..b."""
    d = np.asarray(distances)
    if d.size == 0:
        raise InvalidInput("distance list must be non-empty")
    di = np.rint(d).astype(np.intp)
    if not np.array_equal(di, np.asarray(d, dtype=np.float64)):
        raise InvalidInput("hard binning requires integer distances")
    if di.min() < 0 or di.max() > b:
        raise InvalidInput(f"distances must lie in {{0..{b}}}")
    return np.bincount(di.ravel(), minlength=b + 1).astype(np.float64) / d.size


@dataclass
class DistanceHistogramPair:
    """Per-query conditional distance distributions over bins 0..b.

    Populations may be empty; an empty side has an all-zero histogram and
    contributes zero prior mass.
    """

    p_plus: np.ndarray  # (b+1,)
    p_minus: np.ndarray  # (b+1,)
    n_plus: int
    n_minus: int

    def __post_init__(self) -> None:
        self.p_plus = np.asarray(self.p_plus, dtype=np.float64)
        self.p_minus = np.asarray(self.p_minus, dtype=np.float64)
        if self.p_plus.shape != self.p_minus.shape or self.p_plus.ndim != 1:
            raise InvalidInput("histogram pair must be two equal-length vectors")
        if self.n_plus < 0 or self.n_minus < 0:
            raise InvalidInput("population counts must be non-negative")
        for name, hist, count in (("p_plus", self.p_plus, self.n_plus),
                                  ("p_minus", self.p_minus, self.n_minus)):
            if hist.min(initial=0.0) < -1e-12:
                raise InvalidInput(f"{name} has a negative entry")
            total = hist.sum()
            if count == 0:
                if total != 0.0:
                    raise InvalidInput(f"{name} must be all-zero for an empty population")
            elif abs(total - 1.0) > 1e-9:
                raise InvalidInput(f"{name} sums to {total}, expected 1")

    @property
    def bins(self) -> int:
        return self.p_plus.shape[0]

    @property
    def prior_plus(self) -> float:
        total = self.n_plus + self.n_minus
        return self.n_plus / total if total else 0.0

    @property
    def prior_minus(self) -> float:
        total = self.n_plus + self.n_minus
        return self.n_minus / total if total else 0.0

    @classmethod
    def from_distances(cls, plus_distances, minus_distances, b: int,
                       soft: bool = True) -> "DistanceHistogramPair":
        binner = soft_histogram if soft else hard_histogram
        plus = np.asarray(plus_distances, dtype=np.float64).ravel()
        minus = np.asarray(minus_distances, dtype=np.float64).ravel()
        return cls(
            p_plus=binner(plus, b) if plus.size else np.zeros(b + 1),
            p_minus=binner(minus, b) if minus.size else np.zeros(b + 1),
            n_plus=plus.size,
            n_minus=minus.size,
        )


def write_histogram_csv(path, p_plus: np.ndarray, p_minus: np.ndarray) -> None:
    """Dump a histogram pair for the CLI plotter: bin, p_plus, p_minus."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin", "p_plus", "p_minus"])
        for l, (a, c) in enumerate(zip(p_plus, p_minus)):
            writer.writerow([l, f"{a:.17g}", f"{c:.17g}"])
