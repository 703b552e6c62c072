"""Rank correlation between distance matrices, with t-test and Mantel p-values."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .distances import DistanceMatrix

STAR_ALPHA = 0.001


class CorrelationError(ValueError):
    pass


def average_ranks(x) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _pearson(a, b):
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if den == 0:
        raise CorrelationError("zero rank variance: correlation undefined")
    return float(np.clip(np.dot(a, b) / den, -1.0, 1.0))


def spearman(x, y) -> tuple[float, float]:
    """Spearman's rho with a two-sided p-value from the t approximation."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise CorrelationError("x and y must be 1-D and of equal length")
    n = len(x)
    if n < 3:
        raise CorrelationError("need at least 3 observations")
    rho = _pearson(average_ranks(x), average_ranks(y))
    if abs(rho) == 1.0:
        return rho, 0.0
    t = rho * np.sqrt((n - 2) / (1 - rho**2))
    return rho, float(2 * sps.t.sf(abs(t), n - 2))


def _aligned(A: DistanceMatrix, B: DistanceMatrix) -> DistanceMatrix:
    if set(A.languages) != set(B.languages):
        raise CorrelationError(
            f"language sets differ between {A.label or 'A'} and {B.label or 'B'}: "
            f"{sorted(set(A.languages) ^ set(B.languages))}"
        )
    return B.reorder(A.languages)


def matrix_correlation(A: DistanceMatrix, B: DistanceMatrix) -> tuple[float, float]:
    """Spearman correlation of the upper triangles after aligning B to A's order."""
    return spearman(A.condensed(), _aligned(A, B).condensed())


def mantel_test(A: DistanceMatrix, B: DistanceMatrix, permutations: int = 999, seed: int = 0) -> float:
    """Two-sided permutation p-value for the Spearman matrix correlation.

    Language labels of B are shuffled; ``p = (1 + hits) / (1 + permutations)``.
    """
    if permutations < 0:
        raise ValueError("permutations must be >= 0")
    B = _aligned(A, B)
    if permutations == 0:
        return 1.0
    a = average_ranks(A.condensed())
    iu = np.triu_indices(len(A), k=1)
    observed = abs(_pearson(a, average_ranks(B.condensed())))
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(permutations):
        perm = rng.permutation(len(A))
        b = B.values[np.ix_(perm, perm)][iu]
        try:
            r = abs(_pearson(a, average_ranks(b)))
        except CorrelationError:
            continue
        # tolerance keeps exact ties (e.g. A vs A) counted despite rounding
        if r >= observed - 1e-12:
            hits += 1
    return (1 + hits) / (1 + permutations)


@dataclass
class CorrTable:
    labels: list[str]
    rho: np.ndarray
    p: np.ndarray
    mantel_p: np.ndarray | None = None

    @property
    def stars(self) -> np.ndarray:
        return self.p < STAR_ALPHA

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["a", "b", "rho", "p", "star"]
        if self.mantel_p is not None:
            header.append("mantel_p")
        w.writerow(header)
        for i, j in zip(*np.triu_indices(len(self.labels), k=1)):
            row = [self.labels[i], self.labels[j], f"{self.rho[i, j]:.9g}", f"{self.p[i, j]:.9g}", "*" if self.stars[i, j] else ""]
            if self.mantel_p is not None:
                row.append(f"{self.mantel_p[i, j]:.9g}")
            w.writerow(row)
        return buf.getvalue()

    def heatmap(self) -> str:
        """Plain-text lower-triangle table of rho with significance stars."""
        width = max(8, max(len(x) for x in self.labels) + 1)
        lines = [" " * width + "".join(f"{x:>{width}}" for x in self.labels)]
        for i, a in enumerate(self.labels):
            cells = []
            for j in range(len(self.labels)):
                if j > i:
                    cells.append(" " * width)
                else:
                    star = "*" if i != j and self.stars[i, j] else " "
                    cells.append(f"{self.rho[i, j]:>{width - 1}.2f}{star}")
            lines.append(f"{a:<{width}}" + "".join(cells))
        return "\n".join(lines) + "\n"


def correlation_table(matrices, *, mantel_permutations: int = 0, seed: int = 0) -> CorrTable:
    """Pairwise Spearman table over a labelled list of matrices.

    ``matrices`` is a dict label -> DistanceMatrix or a list of matrices
    carrying their own labels.
    """
    if isinstance(matrices, dict):
        items = list(matrices.items())
    else:
        items = [(m.label, m) for m in matrices]
    k = len(items)
    rho = np.eye(k)
    p = np.zeros((k, k))
    mp = np.zeros((k, k)) if mantel_permutations else None
    for i, j in itertools.combinations(range(k), 2):
        r, pv = matrix_correlation(items[i][1], items[j][1])
        rho[i, j] = rho[j, i] = r
        p[i, j] = p[j, i] = pv
        if mp is not None:
            mp[i, j] = mp[j, i] = mantel_test(items[i][1], items[j][1], mantel_permutations, seed)
    return CorrTable([lab for lab, _ in items], rho, p, mp)

