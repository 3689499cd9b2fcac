import numpy as np
import pytest

from conftest import fd_batch_jacobian, max_rel_err, sample_clean_batch
from mihash.batch_gradients import (AffinityMatrix, BinScratch,
                                    batch_histograms, efficient_jacobian,
                                    minibatch_objective, naive_jacobian,
                                    pairwise_relaxed_distances)
from mihash.codes import BinaryCode, hard_hamming
from mihash.errors import InvalidInput
from mihash.histograms import hard_histogram, relaxed_hamming


def test_affinity_validation():
    with pytest.raises(InvalidInput):
        AffinityMatrix(neighbors=np.array([[True, True], [False, True]]))
    aff = AffinityMatrix.from_labels([0, 0, 1])
    assert aff.plus_mask().sum() == 2  # the one same-class pair, both ways
    assert not aff.plus_mask().diagonal().any()
    assert not aff.minus_mask().diagonal().any()


def test_pairwise_distances_identical_and_opposite_columns():
    ones = np.ones((5, 2))
    assert pairwise_relaxed_distances(ones)[0, 1] == 0.0
    opp = np.column_stack([np.ones(5), -np.ones(5)])
    assert pairwise_relaxed_distances(opp)[0, 1] == 5.0


def test_pairwise_distances_match_elementwise(rng):
    codes = rng.uniform(-1, 1, size=(6, 8))
    dist = pairwise_relaxed_distances(codes)
    assert np.array_equal(dist, dist.T)
    for i in range(8):
        for j in range(8):
            if i != j:
                assert dist[i, j] == pytest.approx(
                    relaxed_hamming(codes[:, i], codes[:, j]), abs=1e-12)


def test_pairwise_distances_rejects_tiny_batch():
    with pytest.raises(InvalidInput):
        pairwise_relaxed_distances(np.ones((4, 1)))


def test_batch_histograms_two_neighbors():
    # two neighbors at relaxed distance 1: one-hot p_plus, empty p_minus
    codes = np.array([[1.0, 1.0], [1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
    aff = AffinityMatrix.from_labels([0, 0])
    dist = pairwise_relaxed_distances(codes)
    pairs = batch_histograms(dist, aff, b=4)
    assert pairs[0].p_plus.tolist() == [0, 1, 0, 0, 0]
    assert not pairs[0].p_minus.any()
    assert pairs[0].n_minus == 0


def test_batch_histograms_all_same_class():
    codes = np.sign(np.random.default_rng(0).normal(size=(4, 5)))
    aff = AffinityMatrix.from_labels([7] * 5)
    pairs = batch_histograms(pairwise_relaxed_distances(codes), aff, b=4)
    assert all(not p.p_minus.any() and p.n_minus == 0 for p in pairs)


def test_batch_histograms_match_hard_on_sign_codes(rng):
    signs = rng.choice([-1.0, 1.0], size=(8, 10))
    labels = rng.integers(0, 3, size=10)
    aff = AffinityMatrix.from_labels(labels)
    dist = pairwise_relaxed_distances(signs)
    pairs = batch_histograms(dist, aff, b=8)
    for i in range(10):
        plus = [hard_hamming(BinaryCode.from_signs(signs[:, i]),
                             BinaryCode.from_signs(signs[:, j]))
                for j in range(10) if j != i and labels[j] == labels[i]]
        if plus:
            assert np.allclose(pairs[i].p_plus, hard_histogram(plus, 8),
                               atol=1e-12)


def test_objective_all_same_class_is_zero(rng):
    codes = rng.uniform(-0.9, 0.9, size=(4, 6))
    aff = AffinityMatrix.from_labels([1] * 6)
    assert minibatch_objective(codes, aff) == 0.0


def test_objective_identical_codes_mixed_classes_is_zero():
    codes = np.tile(np.array([[0.3], [-0.2], [0.7]]), (1, 5))
    aff = AffinityMatrix.from_labels([0, 1, 0, 1, 0])
    assert minibatch_objective(codes, aff) == pytest.approx(0.0, abs=1e-12)


def test_objective_two_disjoint_classes_hand_value():
    # M=4 balanced, classes at opposite 4-bit corners: every query sees its
    # neighbor at distance 0 and both non-neighbors at distance 4, so
    # I_i = H((1/3, 2/3)); frozen from the 4-point joint enumeration
    plus = np.ones(4)
    codes = np.column_stack([plus, plus, -plus, -plus])
    aff = AffinityMatrix.from_labels([0, 0, 1, 1])
    expected = -(1 / 3) * np.log(1 / 3) - (2 / 3) * np.log(2 / 3)
    assert expected == pytest.approx(0.636514168294813, abs=1e-12)
    assert minibatch_objective(codes, aff) == pytest.approx(expected, abs=1e-12)


def test_objective_bounded_by_ln2(rng):
    for _ in range(30):
        m = int(rng.integers(2, 12))
        codes = rng.uniform(-1, 1, size=(5, m))
        aff = AffinityMatrix.from_labels(rng.integers(0, 3, size=m))
        obj = minibatch_objective(codes, aff)
        assert 0.0 <= obj <= np.log(2) + 1e-12


def test_objective_equals_mean_per_query_mi(rng):
    codes, aff = sample_clean_batch(rng, b=6, m=10)
    out = efficient_jacobian(codes, aff)
    assert out.objective == pytest.approx(out.per_query_mi.mean(), abs=1e-12)


def test_objective_composes_from_single_query_api(rng):
    # independent route: per-query soft histograms + MI via the public
    # single-query operations must average to the batch objective
    from mihash.histograms import DistanceHistogramPair
    from mihash.information import mutual_information

    codes, aff = sample_clean_batch(rng, b=6, m=12)
    dist = pairwise_relaxed_distances(codes)
    values = []
    for i in range(12):
        pair = DistanceHistogramPair.from_distances(
            dist[i, aff.plus_mask()[i]], dist[i, aff.minus_mask()[i]], b=6)
        values.append(mutual_information(pair).value)
    assert minibatch_objective(codes, aff) == pytest.approx(
        np.mean(values), abs=1e-12)


def test_naive_jacobian_zero_for_same_class(rng):
    codes = rng.uniform(-0.9, 0.9, size=(3, 5))
    aff = AffinityMatrix.from_labels([2] * 5)
    out = naive_jacobian(codes, aff)
    assert not out.jacobian.any()
    out2 = efficient_jacobian(codes, aff)
    assert not out2.jacobian.any()


def test_naive_jacobian_matches_finite_differences(rng):
    codes, aff = sample_clean_batch(rng, b=4, m=8)
    fd = fd_batch_jacobian(codes, aff)
    out = naive_jacobian(codes, aff)
    assert max_rel_err(out.jacobian, fd) < 1e-4


def test_moving_neighbor_toward_query_raises_objective():
    # two-bin toy (b=1) with neighbor mass already left of non-neighbor
    # mass: nudging the neighbor toward the query sharpens the separation,
    # so the objective must not decrease. (In the mirrored configuration MI
    # is symmetric under bin relabeling, so the same move would hurt.)
    query, neighbor, non_neighbor = 0.9, 0.5, -0.8
    aff = AffinityMatrix.from_labels([0, 0, 1])
    h = 1e-3

    def objective_at(t):
        moved = neighbor + t * (query - neighbor)
        return minibatch_objective(np.array([[query, moved, non_neighbor]]), aff)

    assert objective_at(+h) > objective_at(-h)


def test_efficient_matches_naive_on_random_batches(rng):
    for m in (2, 4, 8, 16):
        for b in (2, 4, 8):
            codes = rng.uniform(-0.99, 0.99, size=(b, m))
            aff = AffinityMatrix.from_labels(rng.integers(0, 3, size=m))
            a = naive_jacobian(codes, aff)
            e = efficient_jacobian(codes, aff)
            assert np.abs(a.jacobian - e.jacobian).max() < 1e-10
            assert a.objective == pytest.approx(e.objective, abs=1e-12)


def test_efficient_matches_finite_differences(rng):
    for _ in range(5):
        m = int(rng.integers(4, 10))
        codes, aff = sample_clean_batch(rng, b=5, m=m)
        fd = fd_batch_jacobian(codes, aff)
        out = efficient_jacobian(codes, aff)
        assert max_rel_err(out.jacobian, fd) < 1e-4


def test_bin_scratch_matrices_symmetric_zero_diagonal(rng):
    codes, aff = sample_clean_batch(rng, b=6, m=12)
    dist = pairwise_relaxed_distances(codes)
    scratch = BinScratch(dist, aff, b=6)
    for l in range(7):
        b_plus, b_minus = scratch.bin_matrices(l)
        assert np.array_equal(b_plus, b_plus.T)
        assert np.array_equal(b_minus, b_minus.T)
        assert not b_plus.diagonal().any()
        assert not b_minus.diagonal().any()


def test_jacobian_permutation_equivariance(rng):
    codes, aff = sample_clean_batch(rng, b=4, m=9)
    perm = rng.permutation(9)
    out = efficient_jacobian(codes, aff)
    permuted = efficient_jacobian(
        codes[:, perm],
        AffinityMatrix(neighbors=aff.neighbors[np.ix_(perm, perm)]))
    assert np.allclose(permuted.jacobian, out.jacobian[:, perm], atol=1e-12)
    assert np.allclose(permuted.per_query_mi, out.per_query_mi[perm], atol=1e-12)


def test_quadratic_scaling_of_efficient_path():
    import time

    from mihash.batch_gradients import BatchWorkspace

    rng = np.random.default_rng(7)
    b = 16
    setups = {}
    for m in (256, 512):
        codes = rng.uniform(-0.99, 0.99, size=(b, m))
        aff = AffinityMatrix.from_labels(rng.integers(0, 10, size=m))
        ws = BatchWorkspace()
        efficient_jacobian(codes, aff, ws)  # warmup + jit
        setups[m] = (codes, aff, ws)

    def best_of(m, tries=3):
        codes, aff, ws = setups[m]
        best = np.inf
        for _ in range(tries):
            t0 = time.perf_counter()
            efficient_jacobian(codes, aff, ws)
            best = min(best, time.perf_counter() - t0)
        return best

    # interleave sizes so machine noise hits both alike
    ratios = [best_of(512) / best_of(256) for _ in range(10)]
    assert np.median(ratios) <= 4.5
