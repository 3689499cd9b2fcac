"""Minibatch objective and its Jacobian with respect to the relaxed codes.

Every batch item serves once as the query against the other M-1 items; the
objective is the mean of the per-query mutual information values. Two
gradient paths are provided: a literal per-query reference (chain rule
through each histogram bin) and the matrix form

    -(codes / 2M) * sum_l (A_l+ B_l+  +  B_l+ A_l+  +  A_l- B_l-  +  B_l- A_l-)

where A_l is the diagonal of per-query bin weights and B_l the masked
subgradient matrix. Diagonal products are row/column scalings, and since a
pair's triangular subgradient is nonzero in at most two bins the sum over
l collapses to per-pair alpha differences, so the whole Jacobian costs
O(b M^2) with a small constant. The two paths must agree to rounding error.

The hot passes are fused jit kernels (one histogram pass, one weight-sum
pass over the pair matrix); BinScratch realizes the same per-bin A_l/B_l
quantities densely in numpy for verification. Repeated callers (the
trainer, benchmarks) pass a BatchWorkspace whose buffers are allocated
once per batch shape and reused.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InvalidInput
from .histograms import DistanceHistogramPair, triangular_subgrad
from .information import EPS, mi_grad_wrt_histograms


@dataclass
class AffinityMatrix:
    """Symmetric in-batch neighbor relation; the diagonal marks self.

    Self pairs are excluded from both populations, so entry (i, i) never
    enters a histogram regardless of its stored value.
    """

    neighbors: np.ndarray  # (M, M) bool

    def __post_init__(self) -> None:
        a = np.asarray(self.neighbors, dtype=bool)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidInput(f"affinity must be square, got {a.shape}")
        if not np.array_equal(a, a.T):
            raise InvalidInput("affinity must be symmetric")
        self.neighbors = a

    @property
    def size(self) -> int:
        return self.neighbors.shape[0]

    def plus_mask(self) -> np.ndarray:
        mask = self.neighbors.copy()
        np.fill_diagonal(mask, False)
        return mask

    def minus_mask(self) -> np.ndarray:
        mask = ~self.neighbors
        np.fill_diagonal(mask, False)
        return mask

    @classmethod
    def from_labels(cls, labels) -> "AffinityMatrix":
        labels = np.asarray(labels)
        return cls(neighbors=labels[:, None] == labels[None, :])


@dataclass
class BatchGradients:
    jacobian: np.ndarray      # (b, M), d objective / d relaxed codes
    objective: float          # mean per-query mutual information
    per_query_mi: np.ndarray  # (M,)


class BatchWorkspace:
    """Named scratch buffers, allocated once per shape and reused."""

    def __init__(self) -> None:
        self._buffers: dict[str, np.ndarray] = {}

    def get(self, name: str, shape: tuple[int, ...], dtype=np.float64) -> np.ndarray:
        buf = self._buffers.get(name)
        if buf is None or buf.shape != shape or buf.dtype != dtype:
            buf = np.empty(shape, dtype=dtype)
            self._buffers[name] = buf
        return buf


def _validate_codes(codes) -> np.ndarray:
    c = np.asarray(codes, dtype=np.float64)
    if c.ndim != 2:
        raise InvalidInput(f"codes must be a b x M matrix, got shape {c.shape}")
    if c.shape[1] < 2:
        raise InvalidInput("a batch needs at least 2 items")
    if not np.isfinite(c).all() or np.abs(c).max() > 1.0:
        raise InvalidInput("relaxed code entries must lie in [-1, 1]")
    return c


def pairwise_relaxed_distances(codes: np.ndarray,
                               workspace: BatchWorkspace | None = None) -> np.ndarray:
    """Symmetric matrix of relaxed Hamming distances between code columns.

    With a workspace the returned matrix aliases a reused buffer.
    """
    c = _validate_codes(codes)
    b, m = c.shape
    ws = workspace or BatchWorkspace()
    gram = np.matmul(c.T, c, out=ws.get("gram", (m, m)))
    flipped = ws.get("gram_t", (m, m))
    np.copyto(flipped, gram.T)
    # dist = (b - (gram + gram.T)/2) / 2, symmetric despite BLAS rounding
    np.add(gram, flipped, out=gram)
    np.multiply(gram, -0.25, out=gram)
    np.add(gram, 0.5 * b, out=gram)
    np.clip(gram, 0.0, float(b), out=gram)
    return gram


@njit(cache=True)
def _hist_counts_kernel(codes_t, neighbors):
    """Soft-binned neighbor/non-neighbor mass per query, in one fused pass.

    codes_t is the (M, b) transposed code matrix so the per-pair inner
    product runs over contiguous memory. Returns unnormalized histograms
    over b+2 slots (the last slot only ever receives zero weight, from
    pairs at exactly the maximal distance).
    """
    m, b = codes_t.shape
    p_plus = np.zeros((m, b + 2))
    p_minus = np.zeros((m, b + 2))
    n_plus = np.zeros(m, dtype=np.int64)
    n_minus = np.zeros(m, dtype=np.int64)
    for i in range(m):
        for j in range(m):
            if j == i:
                continue
            dot = 0.0
            for k in range(b):
                dot += codes_t[i, k] * codes_t[j, k]
            d = 0.5 * (b - dot)
            if d < 0.0:
                d = 0.0
            elif d > b:
                d = float(b)
            q = int(d)
            frac = d - q
            if neighbors[i, j]:
                n_plus[i] += 1
                p_plus[i, q] += 1.0 - frac
                p_plus[i, q + 1] += frac
            else:
                n_minus[i] += 1
                p_minus[i, q] += 1.0 - frac
                p_minus[i, q + 1] += frac
    return p_plus, p_minus, n_plus, n_minus


@njit(cache=True)
def _weight_sum_kernel(codes_t, neighbors, alpha_plus, alpha_minus, out):
    """Entry (i,j) of sum_l (A_l B_l + B_l A_l) over both populations.

    The triangular subgradient of pair (i,j) is -1 in bin q = floor(d) and
    +1 in bin q+1 (zero for pairs exactly on a bin center), so the bin sum
    collapses to alpha differences of the two gathered bins.
    """
    m, b = codes_t.shape
    for i in range(m):
        for j in range(m):
            if j == i:
                out[i, j] = 0.0
                continue
            dot = 0.0
            for k in range(b):
                dot += codes_t[i, k] * codes_t[j, k]
            d = 0.5 * (b - dot)
            if d < 0.0:
                d = 0.0
            elif d > b:
                d = float(b)
            q = int(d)
            frac = d - q
            if frac > 0.0:
                alpha = alpha_plus if neighbors[i, j] else alpha_minus
                out[i, j] = (alpha[i, q + 1] - alpha[i, q]
                             + alpha[j, q + 1] - alpha[j, q])
            else:
                out[i, j] = 0.0
    return out


def _population_histograms(frac, flat_lo, flat_hi, mask, weight_buf, b: int):
    m = mask.shape[0]
    np.subtract(1.0, frac, out=weight_buf)
    np.multiply(weight_buf, mask, out=weight_buf)
    hist = np.bincount(flat_lo.ravel(), weights=weight_buf.ravel(),
                       minlength=m * (b + 2))
    np.multiply(frac, mask, out=weight_buf)
    hist += np.bincount(flat_hi.ravel(), weights=weight_buf.ravel(),
                        minlength=m * (b + 2))
    hist = hist.reshape(m, b + 2)[:, : b + 1]
    counts = mask.sum(axis=1)
    np.divide(hist, np.maximum(counts, 1)[:, None], out=hist)
    return hist, counts


def _row_entropy(p: np.ndarray) -> np.ndarray:
    safe = np.where(p > 0, p, 1.0)
    return -(p * np.log(safe)).sum(axis=1)


def _per_query_mi_arrays(p_plus, p_minus, n_plus, n_minus) -> np.ndarray:
    total = n_plus + n_minus
    live = (n_plus > 0) & (n_minus > 0)
    pri_plus = np.divide(n_plus, np.maximum(total, 1), dtype=np.float64)
    pri_minus = np.divide(n_minus, np.maximum(total, 1), dtype=np.float64)
    marginal = pri_plus[:, None] * p_plus + pri_minus[:, None] * p_minus
    mi = _row_entropy(marginal) - (pri_plus * _row_entropy(p_plus)
                                   + pri_minus * _row_entropy(p_minus))
    mi[~live] = 0.0
    np.clip(mi, 0.0, None, out=mi)
    return mi


def _grad_wrt_histogram_arrays(p_plus, p_minus, n_plus, n_minus):
    """Vectorized partials of each query's MI in raw histogram coordinates.

    Same flooring policy as mi_grad_wrt_histograms, applied row-wise.
    """
    total = n_plus + n_minus
    live = (n_plus > 0) & (n_minus > 0)
    pri_plus = np.divide(n_plus, np.maximum(total, 1), dtype=np.float64)
    pri_minus = np.divide(n_minus, np.maximum(total, 1), dtype=np.float64)
    marginal = pri_plus[:, None] * p_plus + pri_minus[:, None] * p_minus
    log_marg = np.log(np.maximum(marginal, EPS))
    g_plus = pri_plus[:, None] * (np.log(np.maximum(p_plus, EPS)) - log_marg)
    g_minus = pri_minus[:, None] * (np.log(np.maximum(p_minus, EPS)) - log_marg)
    g_plus[(p_plus < EPS) & (marginal < EPS)] = 0.0
    g_minus[(p_minus < EPS) & (marginal < EPS)] = 0.0
    g_plus[~live] = 0.0
    g_minus[~live] = 0.0
    return g_plus, g_minus


class BinScratch:
    """Per-bin diagonal weights and subgradient matrices for one batch.

    This is the dense numpy realization of the quantities the fused kernels
    consume: alpha_[plus|minus][i, l] is the A_l diagonal, bin_matrices(l)
    the B_l pair. accumulate_weights exploits that every B_l entry is
    nonzero in at most two bins (floor(d) and floor(d)+1), so the bin sum
    reduces to a gather over alpha differences; accumulate_weights_per_bin
    is the literal bin-by-bin loop. Tests pin all three routes together.
    """

    def __init__(self, distances: np.ndarray, affinity: AffinityMatrix,
                 b: int, workspace: BatchWorkspace | None = None) -> None:
        self.b = b
        self._ws = ws = workspace or BatchWorkspace()
        m = distances.shape[0]
        self._m = m

        lo_f = np.floor(distances, out=ws.get("lo_f", (m, m)))
        frac = np.subtract(distances, lo_f, out=ws.get("frac", (m, m)))
        lo = ws.get("lo", (m, m), np.intp)
        np.copyto(lo, lo_f, casting="unsafe")
        self._lo = lo
        self._frac = frac

        self.plus_mask = ws.get("plus_mask", (m, m), bool)
        np.copyto(self.plus_mask, affinity.neighbors)
        np.fill_diagonal(self.plus_mask, False)
        self.minus_mask = ws.get("minus_mask", (m, m), bool)
        np.logical_not(affinity.neighbors, out=self.minus_mask)
        np.fill_diagonal(self.minus_mask, False)

        rows = np.arange(m, dtype=np.intp)[:, None]
        flat_lo = np.add(rows * (b + 2), lo, out=ws.get("flat", (m, m), np.intp))
        flat_hi = np.add(flat_lo, 1, out=ws.get("flat_hi", (m, m), np.intp))
        weight_buf = ws.get("weights", (m, m))
        p_plus, n_plus = _population_histograms(frac, flat_lo, flat_hi,
                                                self.plus_mask, weight_buf, b)
        p_minus, n_minus = _population_histograms(frac, flat_lo, flat_hi,
                                                  self.minus_mask, weight_buf, b)
        self.per_query_mi = _per_query_mi_arrays(p_plus, p_minus, n_plus, n_minus)
        g_plus, g_minus = _grad_wrt_histogram_arrays(p_plus, p_minus,
                                                     n_plus, n_minus)
        # alpha_{l,i} = (dI_i/dp_{i,l}) / N_i; zeroed rows for dead queries
        self.alpha_plus = g_plus / np.maximum(n_plus, 1)[:, None]
        self.alpha_minus = g_minus / np.maximum(n_minus, 1)[:, None]

        # off-center pairs carry subgradient -1 in bin q and +1 in bin q+1;
        # exactly-centered pairs are masked out and gather bin 0 harmlessly
        self._off_center = np.greater(frac, 0.0, out=ws.get("off", (m, m), bool))
        gather = np.multiply(lo, self._off_center,
                             out=ws.get("gather", (m, m), np.intp))
        gather += rows * (b + 1)
        self._gather_lo = gather
        self._gather_hi = np.add(gather, 1, out=ws.get("gather_hi", (m, m), np.intp))

    def _subgrad_matrix(self, l: int) -> np.ndarray:
        rising = (self._lo == l - 1) & self._off_center
        falling = (self._lo == l) & self._off_center
        g = rising.astype(np.float64)
        np.subtract(g, falling, out=g)
        return g

    def bin_matrices(self, l: int) -> tuple[np.ndarray, np.ndarray]:
        """Dense (B_l plus, B_l minus) for one bin."""
        g = self._subgrad_matrix(l)
        return g * self.plus_mask, g * self.minus_mask

    def accumulate_weights(self, out: np.ndarray) -> None:
        """Add sum_l (A_l B_l + B_l A_l) for both populations into out.

        Entry (i, j) of the sum is mask(i,j) * sum_l subgrad_l(d_ij) *
        (alpha[i, l] + alpha[j, l]), and the subgradient picks out bins
        q+1 (weight +1) and q (weight -1) only.
        """
        m = self._m
        diff = self._ws.get("diff", (m, m))
        step = self._ws.get("step", (m, m))
        for mask, alpha in ((self.plus_mask, self.alpha_plus),
                            (self.minus_mask, self.alpha_minus)):
            flat = alpha.ravel()
            np.take(flat, self._gather_lo, out=diff)
            np.negative(diff, out=diff)
            np.take(flat, self._gather_hi, out=step)
            np.add(diff, step, out=diff)  # alpha[i, q+1] - alpha[i, q]
            np.copyto(step, diff.T)
            np.add(diff, step, out=diff)  # + alpha[j, q+1] - alpha[j, q]
            np.multiply(diff, self._off_center, out=diff)
            np.multiply(diff, mask, out=diff)
            np.add(out, diff, out=out)

    def accumulate_weights_per_bin(self, out: np.ndarray) -> None:
        """Reference bin-by-bin accumulation of the same sum (for testing)."""
        for l in range(self.b + 1):
            b_plus, b_minus = self.bin_matrices(l)
            for bmat, alpha in ((b_plus, self.alpha_plus[:, l]),
                                (b_minus, self.alpha_minus[:, l])):
                out += alpha[:, None] * bmat  # A_l B_l: row scaling
                out += bmat * alpha[None, :]  # B_l A_l: column scaling


def _histogram_arrays(distances: np.ndarray, affinity: AffinityMatrix, b: int,
                      workspace: BatchWorkspace | None = None):
    ws = workspace or BatchWorkspace()
    m = distances.shape[0]
    lo_f = np.floor(distances, out=ws.get("lo_f", (m, m)))
    frac = np.subtract(distances, lo_f, out=ws.get("frac", (m, m)))
    lo = ws.get("lo", (m, m), np.intp)
    np.copyto(lo, lo_f, casting="unsafe")
    rows = np.arange(m, dtype=np.intp)[:, None]
    flat_lo = np.add(rows * (b + 2), lo, out=ws.get("flat", (m, m), np.intp))
    flat_hi = np.add(flat_lo, 1, out=ws.get("flat_hi", (m, m), np.intp))
    weight_buf = ws.get("weights", (m, m))
    p_plus, n_plus = _population_histograms(frac, flat_lo, flat_hi,
                                            affinity.plus_mask(),
                                            weight_buf, b)
    p_minus, n_minus = _population_histograms(frac, flat_lo, flat_hi,
                                              affinity.minus_mask(),
                                              weight_buf, b)
    return p_plus, p_minus, n_plus, n_minus


def batch_histograms(distances: np.ndarray, affinity: AffinityMatrix,
                     b: int) -> list[DistanceHistogramPair]:
    """Per-query soft histogram pairs over the other M-1 batch items."""
    distances = np.asarray(distances, dtype=np.float64)
    if distances.shape != (affinity.size, affinity.size):
        raise InvalidInput("distance matrix and affinity shapes disagree")
    p_plus, p_minus, n_plus, n_minus = _histogram_arrays(distances, affinity, b)
    return [
        DistanceHistogramPair(p_plus=p_plus[i], p_minus=p_minus[i],
                              n_plus=int(n_plus[i]), n_minus=int(n_minus[i]))
        for i in range(affinity.size)
    ]


def _fused_histogram_arrays(codes_t: np.ndarray, affinity: AffinityMatrix):
    raw_plus, raw_minus, n_plus, n_minus = _hist_counts_kernel(
        codes_t, affinity.neighbors)
    b = codes_t.shape[1]
    p_plus = raw_plus[:, : b + 1] / np.maximum(n_plus, 1)[:, None]
    p_minus = raw_minus[:, : b + 1] / np.maximum(n_minus, 1)[:, None]
    return p_plus, p_minus, n_plus, n_minus


def minibatch_objective(codes: np.ndarray, affinity: AffinityMatrix) -> float:
    """Mean per-query mutual information over the batch, in [0, ln 2]."""
    codes = _validate_codes(codes)
    codes_t = np.ascontiguousarray(codes.T)
    mi = _per_query_mi_arrays(*_fused_histogram_arrays(codes_t, affinity))
    return float(mi.mean())


def efficient_jacobian(codes: np.ndarray, affinity: AffinityMatrix,
                       workspace: BatchWorkspace | None = None) -> BatchGradients:
    """Matrix-form Jacobian: -(codes / 2M) sum_l (A_l B_l + B_l A_l) per population."""
    codes = _validate_codes(codes)
    b, m = codes.shape
    ws = workspace or BatchWorkspace()
    codes_t = np.ascontiguousarray(codes.T)
    p_plus, p_minus, n_plus, n_minus = _fused_histogram_arrays(codes_t, affinity)
    per_query_mi = _per_query_mi_arrays(p_plus, p_minus, n_plus, n_minus)
    g_plus, g_minus = _grad_wrt_histogram_arrays(p_plus, p_minus, n_plus, n_minus)
    # alpha_{l,i} = (dI_i/dp_{i,l}) / N_i; rows of dead queries are zero
    alpha_plus = g_plus / np.maximum(n_plus, 1)[:, None]
    alpha_minus = g_minus / np.maximum(n_minus, 1)[:, None]
    weight_sum = _weight_sum_kernel(codes_t, affinity.neighbors,
                                    alpha_plus, alpha_minus,
                                    ws.get("weight_sum", (m, m)))
    jacobian = codes @ weight_sum
    jacobian *= -1.0 / (2.0 * m)
    return BatchGradients(jacobian=jacobian,
                          objective=float(per_query_mi.mean()),
                          per_query_mi=per_query_mi)


def naive_jacobian(codes: np.ndarray, affinity: AffinityMatrix) -> BatchGradients:
    """Reference Jacobian: explicit per-query, per-bin, per-column chain rule."""
    codes = np.asarray(codes, dtype=np.float64)
    b, m = codes.shape
    distances = pairwise_relaxed_distances(codes)
    pairs = batch_histograms(distances, affinity, b)
    jacobian = np.zeros((b, m))
    per_query_mi = np.empty(m)
    plus_mask = affinity.plus_mask()
    for i in range(m):
        pair = pairs[i]
        per_query_mi[i] = _per_query_mi_arrays(
            pair.p_plus[None, :], pair.p_minus[None, :],
            np.array([pair.n_plus]), np.array([pair.n_minus]))[0]
        if pair.n_plus == 0 or pair.n_minus == 0:
            continue
        d_i_dp_plus, d_i_dp_minus = mi_grad_wrt_histograms(pair)
        for l in range(b + 1):
            for j in range(m):
                if j == i:
                    continue
                slope = triangular_subgrad(distances[i, j], l)
                if slope == 0.0:
                    continue
                if plus_mask[i, j]:
                    scale = d_i_dp_plus[l] * slope / (2.0 * pair.n_plus)
                else:
                    scale = d_i_dp_minus[l] * slope / (2.0 * pair.n_minus)
                # d p_{i,l} / d code_j carries the query column; the query
                # column accumulates every database item's contribution
                jacobian[:, j] -= scale * codes[:, i]
                jacobian[:, i] -= scale * codes[:, j]
    jacobian /= m
    return BatchGradients(jacobian=jacobian,
                          objective=float(per_query_mi.mean()),
                          per_query_mi=per_query_mi)
