"""Mutual information between Hamming distance and neighbor membership.

All entropies are in nats. A query whose neighbor or non-neighbor
population is empty carries no membership uncertainty, so its mutual
information and gradients are defined to be zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .histograms import DistanceHistogramPair

# log floor for empty bins inside gradient formulas
EPS = 1e-12


def entropy(p: np.ndarray) -> float:
    """-sum p ln p with 0 ln 0 := 0; accepts an all-zero vector (entropy 0)."""
    p = np.asarray(p, dtype=np.float64)
    if p.min(initial=0.0) < -1e-12:
        raise InvalidInput("probabilities must be non-negative")
    total = p.sum()
    if total == 0.0:
        return 0.0
    if abs(total - 1.0) > 1e-9:
        raise InvalidInput(f"probabilities sum to {total}, expected 1")
    mask = p > 0
    return float(-(p[mask] * np.log(p[mask])).sum())


@dataclass(frozen=True)
class MIValue:
    value: float          # I(D;C), nats
    h_d: float            # entropy of the distance marginal
    h_d_given_c: float    # conditional entropy of distance given membership
    h_c: float            # entropy of the membership prior


def _binary_entropy(prior: float) -> float:
    if prior <= 0.0 or prior >= 1.0:
        return 0.0
    return float(-(prior * np.log(prior) + (1 - prior) * np.log(1 - prior)))


def mutual_information(h: DistanceHistogramPair) -> MIValue:
    """I = H(D) - [p+ H(D|c=1) + p- H(D|c=0)] from one query's histogram pair."""
    if h.n_plus == 0 or h.n_minus == 0:
        return MIValue(0.0, 0.0, 0.0, 0.0)
    pp, pm = h.prior_plus, h.prior_minus
    marginal = pp * h.p_plus + pm * h.p_minus
    h_d = entropy(marginal)
    h_d_given_c = pp * entropy(h.p_plus) + pm * entropy(h.p_minus)
    value = h_d - h_d_given_c
    if value < 0.0:
        if value < -1e-12:
            raise InvalidInput(f"negative mutual information {value}; bad histograms")
        value = 0.0
    return MIValue(value, h_d, h_d_given_c, _binary_entropy(pp))


def mi_grad_wrt_histograms(h: DistanceHistogramPair) -> tuple[np.ndarray, np.ndarray]:
    """Partials of I in the raw histogram coordinates.

    Entry l of the plus vector is prior_plus * (ln p+_l - ln p_l) with both
    masses floored at EPS inside the logs; entries where the conditional and
    the marginal mass both vanish are exactly zero. Mirrored for minus.
    """
    bins = h.bins
    if h.n_plus == 0 or h.n_minus == 0:
        return np.zeros(bins), np.zeros(bins)
    pp, pm = h.prior_plus, h.prior_minus
    marginal = pp * h.p_plus + pm * h.p_minus
    log_marg = np.log(np.maximum(marginal, EPS))
    grad_plus = pp * (np.log(np.maximum(h.p_plus, EPS)) - log_marg)
    grad_minus = pm * (np.log(np.maximum(h.p_minus, EPS)) - log_marg)
    grad_plus[(h.p_plus < EPS) & (marginal < EPS)] = 0.0
    grad_minus[(h.p_minus < EPS) & (marginal < EPS)] = 0.0
    return grad_plus, grad_minus
