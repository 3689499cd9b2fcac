"""Hamming-space retrieval and ranking metrics.

Ranking is a stable sort on XOR+popcount distances: ties are broken by
ascending database index so every metric is deterministic. Per-query work
parallelizes across a thread pool capped by the MIHASH_THREADS env var.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .codes import BinaryCode, BinaryCodeSet, hamming_to_all
from .embedding import HashModel, encode, gaussian_init
from .errors import InvalidInput


def max_workers() -> int:
    env = os.environ.get("MIHASH_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise InvalidInput(f"MIHASH_THREADS must be an integer, got {env!r}") from exc
        if value < 1:
            raise InvalidInput("MIHASH_THREADS must be >= 1")
        return value
    return os.cpu_count() or 1


@dataclass
class RankedList:
    ordering: np.ndarray   # permutation of database indices
    distances: np.ndarray  # non-decreasing Hamming distances along ordering


def rank_database(query: BinaryCode, db: BinaryCodeSet) -> RankedList:
    """Full database ordering by Hamming distance, stable in index."""
    dists = hamming_to_all(query, db)
    order = np.argsort(dists, kind="stable")  # radix sort on uint16
    return RankedList(ordering=order, distances=dists[order])


def average_precision(relevance, k: int | None = None) -> float:
    """AP of a ranked relevance sequence.

    With a cutoff the denominator is min(total relevant, k); a query with
    no relevant item scores 0.
    """
    flags = np.asarray(relevance, dtype=bool)
    if flags.size == 0:
        raise InvalidInput("ranking must contain at least one item")
    if k is not None:
        if k <= 0:
            raise InvalidInput(f"cutoff must be positive, got {k}")
        total_relevant = int(flags.sum())
        flags = flags[:k]
        denom = min(total_relevant, k)
    else:
        denom = int(flags.sum())
    if denom == 0:
        return 0.0
    hits = np.flatnonzero(flags)
    precisions = np.cumsum(flags)[hits] / (hits + 1.0)
    return float(precisions.sum() / denom)


def precision_at_k(relevance, k: int) -> float:
    flags = np.asarray(relevance, dtype=bool)
    if not 1 <= k <= flags.size:
        raise InvalidInput(f"k must be in [1, {flags.size}], got {k}")
    return float(flags[:k].sum() / k)


RelevanceSource = Callable[[int], np.ndarray]


def _relevance_fn(relevance) -> RelevanceSource:
    if callable(relevance):
        return relevance
    matrix = np.asarray(relevance, dtype=bool)
    return lambda qi: matrix[qi]


def mean_average_precision(queries: BinaryCodeSet, db: BinaryCodeSet,
                           relevance, k: int | None = None) -> float:
    """Mean AP over queries; relevance is a (Q, N) bool array or a callable.

    Zero-relevant queries count as AP 0 in the mean.
    """
    if queries.count == 0:
        raise InvalidInput("query set must be non-empty")
    rel = _relevance_fn(relevance)

    def one(qi: int) -> float:
        ranked = rank_database(queries[qi], db)
        return average_precision(rel(qi)[ranked.ordering], k)

    aps = _map_queries(one, queries.count)
    return float(np.mean(aps))


def _map_queries(fn: Callable[[int], object], count: int) -> list:
    """Apply fn per query index, preserving order; threaded when allowed."""
    workers = min(max_workers(), count)
    if workers <= 1:
        return [fn(qi) for qi in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


def lsh_codes(features: np.ndarray, b: int, seed: int = 0) -> BinaryCodeSet:
    """Sign-thresholded Gaussian random projections (untrained baseline)."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    model = gaussian_init(features.shape[1], b, seed=seed)
    return encode(model, features)


def mean_distance_histograms(queries: BinaryCodeSet, db: BinaryCodeSet,
                             relevance) -> tuple[np.ndarray, np.ndarray]:
    """Neighbor/non-neighbor distance distributions averaged over queries.

    Each query with a non-empty population contributes its normalized
    histogram; queries with an empty side are skipped for that side.
    """
    from .histograms import hard_histogram

    rel = _relevance_fn(relevance)
    b = db.b
    sum_plus = np.zeros(b + 1)
    sum_minus = np.zeros(b + 1)
    used_plus = used_minus = 0
    for qi in range(queries.count):
        dists = hamming_to_all(queries[qi], db)
        flags = rel(qi)
        if flags.any():
            sum_plus += hard_histogram(dists[flags], b)
            used_plus += 1
        if (~flags).any():
            sum_minus += hard_histogram(dists[~flags], b)
            used_minus += 1
    return (sum_plus / max(used_plus, 1), sum_minus / max(used_minus, 1))


def histogram_overlap(p_plus: np.ndarray, p_minus: np.ndarray) -> float:
    """Shared mass sum_l min(p+_l, p-_l); 0 means perfectly separated."""
    return float(np.minimum(p_plus, p_minus).sum())


def mean_query_mi(queries: BinaryCodeSet, db: BinaryCodeSet, relevance) -> float:
    """Mean per-query mutual information from hard distance histograms."""
    from .histograms import DistanceHistogramPair
    from .information import mutual_information

    rel = _relevance_fn(relevance)
    b = db.b

    def one(qi: int) -> float:
        dists = hamming_to_all(queries[qi], db)
        flags = rel(qi)
        pair = DistanceHistogramPair.from_distances(
            dists[flags], dists[~flags], b, soft=False)
        return mutual_information(pair).value

    return float(np.mean(_map_queries(one, queries.count)))


def relevance_from_oracle(oracle, query_indices: np.ndarray,
                          db_indices: np.ndarray) -> RelevanceSource:
    """Adapt a dataset-level oracle to per-query relevance over a db split."""
    query_indices = np.asarray(query_indices, dtype=np.intp)
    db_indices = np.asarray(db_indices, dtype=np.intp)
    return lambda qi: oracle.row(int(query_indices[qi]), db_indices)


def evaluate_model(model: HashModel, features: np.ndarray, oracle,
                   query_indices: np.ndarray, db_indices: np.ndarray,
                   k_values: Sequence[int] = ()) -> dict:
    """mAP, mAP@K and precision@K for a model over a query/database split.

    Each query is ranked once; every metric reads the same ranked
    relevance sequence, so tie handling is identical across them.
    """
    features = np.asarray(features, dtype=np.float64)
    query_codes = encode(model, features[query_indices])
    db_codes = encode(model, features[db_indices])
    rel = relevance_from_oracle(oracle, query_indices, db_indices)
    cutoffs = [int(k) for k in k_values]

    def one(qi: int) -> tuple:
        ranked_rel = rel(qi)[rank_database(query_codes[qi], db_codes).ordering]
        row = [average_precision(ranked_rel)]
        for k in cutoffs:
            row.append(average_precision(ranked_rel, k=k))
            row.append(precision_at_k(ranked_rel, min(k, db_codes.count)))
        return tuple(row)

    per_query = np.asarray(_map_queries(one, query_codes.count))
    means = per_query.mean(axis=0)
    report: dict = {"map": float(means[0]), "map_at": {}, "precision_at": {}}
    for pos, k in enumerate(cutoffs):
        report["map_at"][k] = float(means[1 + 2 * pos])
        report["precision_at"][k] = float(means[2 + 2 * pos])
    return report


def write_report_csv(path, report: dict) -> None:
    """Metric report rows: metric, k, value."""
    with open(path, "w", newline="") as fh:
        fh.write("metric,k,value\n")
        fh.write(f"map,,{report['map']:.17g}\n")
        for k, v in sorted(report.get("map_at", {}).items()):
            fh.write(f"map_at,{k},{v:.17g}\n")
        for k, v in sorted(report.get("precision_at", {}).items()):
            fh.write(f"precision_at,{k},{v:.17g}\n")
