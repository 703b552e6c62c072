import itertools

import numpy as np
import pytest
from scipy.stats import spearmanr

from langrep.distances import DistanceMatrix
from langrep.stats import CorrelationError, correlation_table, mantel_test, matrix_correlation, spearman


def random_matrix(langs, rng):
    n = len(langs)
    v = rng.uniform(0.1, 1.0, size=(n, n))
    v = np.triu(v, 1)
    return DistanceMatrix(tuple(langs), v + v.T)


def test_spearman_examples():
    x = np.arange(1.0, 8.0)
    assert spearman(x, x**2)[0] == pytest.approx(1.0)
    assert spearman(x, -x)[0] == pytest.approx(-1.0)
    assert spearman([1, 2, 3], [3, 1, 2])[0] == pytest.approx(-0.5)


def test_spearman_errors():
    with pytest.raises(CorrelationError):
        spearman([1, 2], [2, 1])
    with pytest.raises(CorrelationError, match="variance"):
        spearman([1, 1, 1, 1], [1, 2, 3, 4])


def test_spearman_matches_scipy_with_ties():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(5, 40))
        x = rng.integers(0, 6, n).astype(float)
        y = x + rng.integers(0, 4, n)
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            continue
        rho, p = spearman(x, y)
        ref = spearmanr(x, y)
        assert rho == pytest.approx(ref.statistic, abs=1e-12)
        assert p == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-300)


def test_spearman_monotone_invariance():
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=30), rng.normal(size=30)
    assert spearman(np.exp(x), y**3)[0] == spearman(x, y)[0]


def test_matrix_correlation_examples():
    rng = np.random.default_rng(2)
    A = random_matrix("abcde", rng)
    assert matrix_correlation(A, A)[0] == pytest.approx(1.0)
    B = DistanceMatrix(A.languages, np.sqrt(A.values) * 3)
    assert matrix_correlation(A, B)[0] == pytest.approx(1.0)


def test_matrix_correlation_hand_built_swap():
    langs = ("a", "b", "c", "d")
    vals = [1, 2, 3, 4, 5, 6]
    swapped = [2, 1, 3, 4, 5, 6]

    def build(v):
        M = np.zeros((4, 4))
        for (i, j), x in zip(itertools.combinations(range(4), 2), v):
            M[i, j] = M[j, i] = x
        return DistanceMatrix(langs, M)

    # brute-force rank formula: one adjacent swap of six ranks, sum d^2 = 2
    want = 1 - 6 * 2 / (6 * (36 - 1))
    assert matrix_correlation(build(vals), build(swapped))[0] == pytest.approx(want)


def test_matrix_correlation_alignment_and_mismatch():
    rng = np.random.default_rng(3)
    A, B = random_matrix("abcdef", rng), random_matrix("abcdef", rng)
    order = list("fdbace")
    assert matrix_correlation(A.reorder(order), B.reorder(order))[0] == pytest.approx(matrix_correlation(A, B)[0])
    assert matrix_correlation(A, B.reorder(order))[0] == pytest.approx(matrix_correlation(A, B)[0])
    with pytest.raises(CorrelationError):
        matrix_correlation(A, random_matrix("abcdeg", rng))


def test_mantel_identity_and_edge():
    A = random_matrix("abcdefgh", np.random.default_rng(4))
    assert mantel_test(A, A, permutations=999, seed=0) <= 0.01
    assert mantel_test(A, A, permutations=0) == 1.0
    assert mantel_test(A, A, 99, seed=3) == mantel_test(A, A, 99, seed=3)


def test_mantel_null_rarely_significant():
    rng = np.random.default_rng(5)
    ps = [mantel_test(random_matrix("abcdefgh", rng), random_matrix("abcdefgh", rng), 199, seed=s) for s in range(40)]
    assert np.mean(np.array(ps) > 0.001) >= 0.95


def test_mantel_minimum_as_permutations_grow():
    A = random_matrix("abcdefgh", np.random.default_rng(6))
    assert mantel_test(A, A, 99) == pytest.approx(1 / 100)
    assert mantel_test(A, A, 999) <= mantel_test(A, A, 99)


def test_correlation_table_cases():
    rng = np.random.default_rng(7)
    A = random_matrix("abcdefgh", rng)
    single = correlation_table({"A": A})
    assert single.rho.shape == (1, 1) and single.rho[0, 0] == 1.0
    dup = correlation_table({"A": A, "A2": A, "B": random_matrix("abcdefgh", rng)})
    assert dup.rho[0, 1] == pytest.approx(1.0) and dup.stars[0, 1]
    assert np.allclose(dup.rho, dup.rho.T) and np.all(np.abs(dup.rho) <= 1 + 1e-12)
    assert np.all((dup.p >= 0) & (dup.p <= 1))
    csv = dup.to_csv().splitlines()
    assert csv[0].split(",")[:5] == ["a", "b", "rho", "p", "star"]
    assert "*" in dup.heatmap()
