import numpy as np
import pytest

from mihash.batch_gradients import AffinityMatrix, pairwise_relaxed_distances

acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)


def sample_clean_batch(rng, b, m, margin=1e-3, classes=3, max_tries=500):
    """Random relaxed codes whose pairwise distances stay off bin centers.

    Finite-difference checks need every distance at least `margin` away
    from the triangular-kernel kinks (the integers).
    """
    for _ in range(max_tries):
        codes = rng.uniform(-0.97, 0.97, size=(b, m))
        labels = rng.integers(0, classes, size=m)
        dist = pairwise_relaxed_distances(codes)
        off_diag = dist[~np.eye(m, dtype=bool)]
        if np.abs(off_diag - np.round(off_diag)).min() > margin:
            return codes, AffinityMatrix.from_labels(labels)
    raise RuntimeError("could not sample a kink-free batch")


def fd_batch_jacobian(codes, affinity, h=1e-6):
    """Central finite differences of the batch objective, coordinate-wise."""
    from mihash.batch_gradients import minibatch_objective

    jac = np.zeros_like(codes)
    for i in range(codes.shape[0]):
        for j in range(codes.shape[1]):
            up = codes.copy()
            up[i, j] += h
            down = codes.copy()
            down[i, j] -= h
            jac[i, j] = (minibatch_objective(up, affinity)
                         - minibatch_objective(down, affinity)) / (2 * h)
    return jac


def max_rel_err(analytic, reference, floor=1e-8):
    analytic = np.asarray(analytic, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    denom = np.maximum(np.abs(reference), floor)
    return float((np.abs(analytic - reference) / denom).max())


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
