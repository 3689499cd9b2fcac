import time

import numpy as np
import pytest

from mihash.codes import BinaryCode, BinaryCodeSet
from mihash.data import build_oracle, synth_dataset
from mihash.embedding import encode, gaussian_init
from mihash.errors import InvalidInput
from mihash.retrieval import (average_precision, evaluate_model,
                              histogram_overlap, lsh_codes,
                              mean_average_precision,
                              mean_distance_histograms, mean_query_mi,
                              precision_at_k, rank_database,
                              relevance_from_oracle, write_report_csv)

# ---------------------------------------------------------------------------
# independent plain-loop oracle, written from the AP definition


def loop_hamming(a_signs, b_signs):
    return sum(1 for x, y in zip(a_signs, b_signs) if x != y)


def loop_rank(query_signs, db_signs):
    dists = [loop_hamming(query_signs, row) for row in db_signs]
    return sorted(range(len(db_signs)), key=lambda j: (dists[j], j))


def loop_ap(flags_in_rank_order, k=None):
    flags = list(flags_in_rank_order)
    total_relevant = sum(flags)
    if k is not None:
        denom = min(total_relevant, k)
        flags = flags[:k]
    else:
        denom = total_relevant
    if denom == 0:
        return 0.0
    hits = 0
    acc = 0.0
    for rank, flag in enumerate(flags, start=1):
        if flag:
            hits += 1
            acc += hits / rank
    return acc / denom


def loop_map(query_signs, db_signs, relevance, k=None):
    total = 0.0
    for qi in range(len(query_signs)):
        order = loop_rank(query_signs[qi], db_signs)
        total += loop_ap([relevance[qi][j] for j in order], k)
    return total / len(query_signs)


# ---------------------------------------------------------------------------


def test_rank_exact_match_first(rng):
    signs = rng.choice([-1, 1], size=(10, 12))
    db = BinaryCodeSet.from_signs(signs)
    ranked = rank_database(BinaryCode.from_signs(signs[4]), db)
    assert ranked.distances[0] == 0
    assert signs[ranked.ordering[0]].tolist() == signs[4].tolist()


def test_rank_two_items_by_distance():
    db = BinaryCodeSet.from_signs(np.array([
        [1, 1, -1, -1, -1, 1, 1, 1],   # distance 3 from query
        [1, 1, 1, 1, 1, 1, 1, -1],     # distance 1
    ]))
    ranked = rank_database(BinaryCode.from_signs(np.ones(8)), db)
    assert ranked.ordering.tolist() == [1, 0]
    assert ranked.distances.tolist() == [1, 3]


def test_rank_all_equal_uses_index_tie_rule():
    db = BinaryCodeSet.from_signs(np.ones((6, 9)))
    ranked = rank_database(BinaryCode.from_signs(np.ones(9)), db)
    assert ranked.ordering.tolist() == list(range(6))
    assert (np.diff(ranked.distances.astype(int)) >= 0).all()


def test_rank_matches_loop_oracle(rng):
    signs = rng.choice([-1, 1], size=(15, 10))
    db = BinaryCodeSet.from_signs(signs)
    q = rng.choice([-1, 1], size=10)
    ranked = rank_database(BinaryCode.from_signs(q), db)
    assert ranked.ordering.tolist() == loop_rank(q.tolist(), signs.tolist())


def test_average_precision_known_cases():
    assert average_precision([1, 1, 1, 0, 0]) == 1.0
    assert average_precision([1, 0, 1]) == pytest.approx(0.833333333333333,
                                                         abs=1e-12)
    assert average_precision([0, 0, 0]) == 0.0


def test_average_precision_cutoff_and_errors():
    assert average_precision([1, 0, 1, 1], k=2) == pytest.approx(
        loop_ap([1, 0, 1, 1], k=2))
    with pytest.raises(InvalidInput):
        average_precision([1, 0], k=0)
    with pytest.raises(InvalidInput):
        average_precision([])


def test_precision_at_k():
    assert precision_at_k([1, 1, 0, 0], 2) == 1.0
    assert precision_at_k([0, 0, 1, 1], 2) == 0.0
    assert precision_at_k([1, 0, 1, 0], 4) == 0.5
    with pytest.raises(InvalidInput):
        precision_at_k([1, 0], 3)


def test_map_single_query_equals_ap(rng):
    signs = rng.choice([-1, 1], size=(8, 6))
    db = BinaryCodeSet.from_signs(signs)
    q = BinaryCodeSet.from_signs(signs[2][None, :])
    rel = rng.random(8) < 0.4
    ranked = rank_database(q[0], db)
    assert mean_average_precision(q, db, rel[None, :]) == pytest.approx(
        average_precision(rel[ranked.ordering]))


def test_map_duplicated_queries_invariant(rng):
    signs = rng.choice([-1, 1], size=(12, 8))
    db = BinaryCodeSet.from_signs(signs)
    q = rng.choice([-1, 1], size=(3, 8))
    rel = rng.random((3, 12)) < 0.3
    single = mean_average_precision(BinaryCodeSet.from_signs(q), db, rel)
    doubled = mean_average_precision(
        BinaryCodeSet.from_signs(np.vstack([q, q])), db, np.vstack([rel, rel]))
    assert doubled == pytest.approx(single, abs=1e-15)


def test_map_matches_loop_oracle_on_random_instances(rng):
    for _ in range(50):
        n_db = int(rng.integers(1, 21))
        n_q = int(rng.integers(1, 4))
        b = int(rng.choice([4, 8, 16]))
        db_signs = rng.choice([-1, 1], size=(n_db, b))
        q_signs = rng.choice([-1, 1], size=(n_q, b))
        rel = rng.random((n_q, n_db)) < 0.35
        k = None if rng.random() < 0.5 else int(rng.integers(1, n_db + 1))
        ours = mean_average_precision(BinaryCodeSet.from_signs(q_signs),
                                      BinaryCodeSet.from_signs(db_signs),
                                      rel, k=k)
        reference = loop_map(q_signs.tolist(), db_signs.tolist(),
                             rel.tolist(), k)
        assert abs(ours - reference) < 1e-12


def test_map_full_cutoff_equals_no_cutoff(rng):
    signs = rng.choice([-1, 1], size=(14, 8))
    db = BinaryCodeSet.from_signs(signs)
    q = BinaryCodeSet.from_signs(rng.choice([-1, 1], size=(4, 8)))
    rel = rng.random((4, 14)) < 0.4
    assert mean_average_precision(q, db, rel, k=14) == pytest.approx(
        mean_average_precision(q, db, rel), abs=1e-15)


def test_lsh_codes_deterministic_and_sized(rng):
    x = rng.normal(size=(30, 12))
    a = lsh_codes(x, 24, seed=3)
    b = lsh_codes(x, 24, seed=3)
    c = lsh_codes(x, 24, seed=4)
    assert np.array_equal(a.words, b.words)
    assert not np.array_equal(a.words, c.words)
    assert a.b == 24 and a.count == 30


def test_lsh_beats_random_guessing_on_separated_clusters():
    ds = synth_dataset(2, 150, 16, 10.0, seed=6, test_count=30)
    oracle = build_oracle(ds, "single_label")
    test, retr = ds.splits["test"], ds.splits["retrieval"]
    rel = relevance_from_oracle(oracle, test, retr)
    q = lsh_codes(ds.features[test], 32, seed=0)
    db = lsh_codes(ds.features[retr], 32, seed=0)
    prior = np.mean([rel(i).mean() for i in range(test.size)])
    assert mean_average_precision(q, db, rel) > prior + 0.1


def test_threads_env_does_not_change_results(rng, monkeypatch):
    signs = rng.choice([-1, 1], size=(40, 16))
    db = BinaryCodeSet.from_signs(signs)
    q = BinaryCodeSet.from_signs(rng.choice([-1, 1], size=(10, 16)))
    rel = rng.random((10, 40)) < 0.3
    monkeypatch.setenv("MIHASH_THREADS", "1")
    serial = mean_average_precision(q, db, rel)
    monkeypatch.setenv("MIHASH_THREADS", "4")
    threaded = mean_average_precision(q, db, rel)
    assert serial == threaded
    monkeypatch.setenv("MIHASH_THREADS", "zero")
    with pytest.raises(InvalidInput):
        mean_average_precision(q, db, rel)


def test_ranking_throughput_one_million_codes(rng):
    words = rng.integers(0, 2**63, size=(1_000_000, 1), dtype=np.int64)
    db = BinaryCodeSet(words=words.astype(np.uint64), b=64)
    query = db[1234]
    rank_database(query, db)  # warm caches
    best = np.inf
    for _ in range(3):
        t0 = time.perf_counter()
        rank_database(query, db)
        best = min(best, time.perf_counter() - t0)
    assert best < 0.050


def test_mean_histograms_and_overlap(rng):
    ds = synth_dataset(2, 100, 16, 10.0, seed=2, test_count=20)
    oracle = build_oracle(ds, "single_label")
    test, retr = ds.splits["test"], ds.splits["retrieval"]
    model = gaussian_init(16, 12, seed=1)
    q = encode(model, ds.features[test])
    db = encode(model, ds.features[retr])
    rel = relevance_from_oracle(oracle, test, retr)
    p_plus, p_minus = mean_distance_histograms(q, db, rel)
    assert p_plus.shape == (13,) and p_minus.shape == (13,)
    assert p_plus.sum() == pytest.approx(1.0, abs=1e-9)
    assert p_minus.sum() == pytest.approx(1.0, abs=1e-9)
    overlap = histogram_overlap(p_plus, p_minus)
    assert 0.0 <= overlap <= 1.0
    assert mean_query_mi(q, db, rel) >= 0.0


def test_evaluate_model_report_and_csv(tmp_path):
    ds = synth_dataset(3, 80, 12, 8.0, seed=9, test_count=24)
    oracle = build_oracle(ds, "single_label")
    model = gaussian_init(12, 16, seed=0)
    report = evaluate_model(model, ds.features, oracle, ds.splits["test"],
                            ds.splits["retrieval"], k_values=[5, 20])
    assert 0.0 <= report["map"] <= 1.0
    assert set(report["map_at"]) == {5, 20}
    assert set(report["precision_at"]) == {5, 20}
    path = tmp_path / "report.csv"
    write_report_csv(path, report)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "metric,k,value"
    assert len(lines) == 6
