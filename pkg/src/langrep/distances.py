"""Pairwise language distance matrices: genetic, geographic, structural, embedding."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus_io import Treebank
from .tree import DendroTree, leaf_distance

EARTH_RADIUS_KM = 6371.0088


class DistanceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Labelled symmetric matrix with zero diagonal and non-negative finite entries."""

    languages: tuple[str, ...]
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        langs = tuple(self.languages)
        n = len(langs)
        if vals.shape != (n, n):
            raise DistanceError(f"{self.label}: shape {vals.shape} does not match {n} languages")
        if len(set(langs)) != n:
            raise DistanceError(f"{self.label}: duplicate language IDs")
        if not np.all(np.isfinite(vals)):
            raise DistanceError(f"{self.label}: non-finite entries")
        if np.any(vals < 0):
            raise DistanceError(f"{self.label}: negative entries")
        if np.any(np.abs(vals - vals.T) > 1e-12):
            raise DistanceError(f"{self.label}: matrix is not symmetric")
        if np.any(np.diag(vals) != 0):
            raise DistanceError(f"{self.label}: non-zero diagonal")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "languages", langs)

    def __len__(self):
        return len(self.languages)

    def __getitem__(self, pair):
        a, b = pair
        return float(self.values[self.languages.index(a), self.languages.index(b)])

    def reorder(self, languages) -> DistanceMatrix:
        """Subset and/or permute rows and columns to ``languages``."""
        languages = tuple(languages)
        missing = [lang for lang in languages if lang not in self.languages]
        if missing:
            raise DistanceError(f"{self.label}: languages not in matrix: {missing}")
        idx = [self.languages.index(lang) for lang in languages]
        return DistanceMatrix(languages, self.values[np.ix_(idx, idx)], self.label)

    def condensed(self) -> np.ndarray:
        """Strict upper triangle, row-major."""
        return self.values[np.triu_indices(len(self), k=1)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.label or "lang", *self.languages])
        for lang, row in zip(self.languages, self.values):
            w.writerow([lang, *(f"{x:.9g}" for x in row)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, label: str | None = None) -> DistanceMatrix:
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        header = rows[0]
        langs = header[1:]
        if [r[0] for r in rows[1:]] != langs:
            raise DistanceError("row labels do not match column labels")
        vals = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
        # 9 significant digits can break exact symmetry only if the writer was not us
        vals = (vals + vals.T) / 2
        head = header[0] if header[0] != "lang" else ""
        return cls(tuple(langs), vals, head if label is None else label)

    def write(self, path):
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def read(cls, path, label=None):
        return cls.from_csv(Path(path).read_text(encoding="utf-8"), label)


def _symmetrize(vals: np.ndarray) -> np.ndarray:
    vals = (vals + vals.T) / 2
    np.fill_diagonal(vals, 0.0)
    return np.maximum(vals, 0.0)


def cosine_distance_matrix(vectors: np.ndarray) -> np.ndarray:
    """``1 - cos`` between rows. Zero rows are rejected."""
    x = np.asarray(vectors, dtype=float)
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0):
        raise DistanceError("cosine distance undefined for a zero vector")
    unit = x / norms[:, None]
    sim = np.clip(unit @ unit.T, -1.0, 1.0)
    return _symmetrize(1.0 - sim)


def embedding_distance(vectors, label="embedding") -> DistanceMatrix:
    """Cosine distances between language vectors.

    ``vectors`` is a mapping lang -> vector or a sequence of objects with
    ``language`` and ``vec`` attributes.
    """
    if isinstance(vectors, dict):
        langs, mat = list(vectors), [vectors[k] for k in vectors]
    else:
        langs, mat = [v.language for v in vectors], [v.vec for v in vectors]
    return DistanceMatrix(tuple(langs), cosine_distance_matrix(np.array(mat)), label)


# Structural -----------------------------------------------------------------


@dataclass(frozen=True)
class StructVector:
    """Relative frequencies of dependency links keyed by (head_upos, dep_upos, deprel, dir).

    ``dir`` is ``R`` when the head is to the right of the dependent, ``L``
    otherwise (the same convention as the deprel abstraction level).
    """

    language: str
    features: dict

    def __post_init__(self):
        total = sum(self.features.values())
        if any(v <= 0 for v in self.features.values()):
            raise DistanceError("structural features must be positive")
        if abs(total - 1.0) > 1e-9:
            raise DistanceError(f"structural features sum to {total}, not 1")


def link_counts(treebank: Treebank) -> Counter:
    counts = Counter()
    for sent in treebank.sentences:
        toks = sent.tokens
        for t in toks:
            if t.head == 0:
                continue
            head = toks[t.head - 1]
            counts[(head.upos, t.upos, t.deprel, "R" if t.head > t.index else "L")] += 1
    return counts


def structural_vector(treebank: Treebank) -> StructVector:
    counts = link_counts(treebank)
    total = sum(counts.values())
    if total == 0:
        raise DistanceError(f"{treebank.language}: treebank has no dependency links")
    return StructVector(treebank.language, {k: c / total for k, c in sorted(counts.items())})


def structural_matrix(vectors) -> tuple[list, np.ndarray]:
    """Dense matrix over the union of observed keys (sorted)."""
    keys = sorted(set().union(*(v.features for v in vectors)))
    col = {k: i for i, k in enumerate(keys)}
    mat = np.zeros((len(vectors), len(keys)))
    for r, v in enumerate(vectors):
        for k, f in v.features.items():
            mat[r, col[k]] = f
    return keys, mat


def structural_distance(vectors, label="structural") -> DistanceMatrix:
    _, mat = structural_matrix(vectors)
    return DistanceMatrix(tuple(v.language for v in vectors), cosine_distance_matrix(mat), label)


def struct_vectors_tsv(vectors) -> str:
    lines = ["lang\thead_upos\tdep_upos\tdeprel\tdir\tfreq"]
    for v in vectors:
        for (h, d, rel, direction), f in sorted(v.features.items()):
            lines.append(f"{v.language}\t{h}\t{d}\t{rel}\t{direction}\t{f:.9g}")
    return "\n".join(lines) + "\n"


# Geographic -----------------------------------------------------------------


def haversine(lat1, lon1, lat2, lon2, radius=EARTH_RADIUS_KM) -> float:
    """Great-circle distance in km between two points given in decimal degrees."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * radius * math.asin(min(1.0, math.sqrt(a)))


def geo_distance(table, languages, label="geographic") -> DistanceMatrix:
    languages = list(languages)
    missing = [lang for lang in languages if lang not in table]
    if missing:
        raise DistanceError(f"no coordinates for {missing}")
    n = len(languages)
    vals = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            vals[i, j] = vals[j, i] = haversine(*table[languages[i]], *table[languages[j]])
    return DistanceMatrix(tuple(languages), vals, label)


# Genetic --------------------------------------------------------------------


def genetic_distance(gold: DendroTree, languages, label="genetic") -> DistanceMatrix:
    """Weighted path length between leaves of the gold tree."""
    languages = list(languages)
    leaves = set(gold.leaf_names())
    absent = [lang for lang in languages if lang not in leaves]
    if absent:
        raise DistanceError(f"languages not in gold tree: {absent}")
    pairs = gold.leaf_pair_distances()
    n = len(languages)
    vals = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            vals[i, j] = vals[j, i] = leaf_distance(pairs, languages[i], languages[j])
    return DistanceMatrix(tuple(languages), vals, label)
