import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from langrep.clustering import random_tree
from langrep.corpus_io import Sentence, Token, Treebank
from langrep.distances import (
    DistanceError,
    DistanceMatrix,
    StructVector,
    geo_distance,
    genetic_distance,
    haversine,
    struct_vectors_tsv,
    structural_distance,
    structural_vector,
)
from langrep.tree import parse_newick

HALF_CIRCUMFERENCE = math.pi * 6371.0088


def test_matrix_invariants_enforced():
    with pytest.raises(DistanceError, match="symmetric"):
        DistanceMatrix(("a", "b"), np.array([[0, 1], [2, 0.0]]))
    with pytest.raises(DistanceError, match="diagonal"):
        DistanceMatrix(("a", "b"), np.array([[1, 1], [1, 0.0]]))
    with pytest.raises(DistanceError, match="negative"):
        DistanceMatrix(("a", "b"), np.array([[0, -1], [-1, 0.0]]))
    with pytest.raises(DistanceError, match="non-finite"):
        DistanceMatrix(("a", "b"), np.array([[0, np.nan], [np.nan, 0.0]]))


def test_matrix_csv_round_trip():
    m = DistanceMatrix(("x", "y", "z"), np.array([[0, 1 / 3, 2], [1 / 3, 0, 5], [2, 5, 0.0]]), "geo")
    text = m.to_csv()
    assert text.splitlines()[0] == "geo,x,y,z"
    back = DistanceMatrix.from_csv(text)
    assert back.languages == m.languages
    np.testing.assert_allclose(back.values, m.values, rtol=1e-8)
    r = m.reorder(["z", "x", "y"])
    assert r["z", "y"] == 5 and r["x", "z"] == 2


def test_structural_vector_hand_count():
    tb = Treebank("en", (Sentence((Token(1, "the", "DET", 2, "det"), Token(2, "cat", "NOUN", 0, "root"))),))
    assert structural_vector(tb).features == {("NOUN", "DET", "det", "R"): 1.0}


def test_structural_vector_equal_counts():
    s = Sentence((Token(1, "a", "DET", 2, "det"), Token(2, "b", "NOUN", 0, "root"), Token(3, "c", "ADJ", 2, "amod")))
    assert sorted(structural_vector(Treebank("x", (s,))).features.values()) == [0.5, 0.5]


def test_structural_vector_needs_links():
    tb = Treebank("x", (Sentence((Token(1, "a", "NOUN", 0, "root"),)),))
    with pytest.raises(DistanceError, match="no dependency links"):
        structural_vector(tb)


def test_structural_distance_cases():
    a = StructVector("a", {"k1": 0.5, "k2": 0.5})
    b = StructVector("b", {"k1": 1.0})
    c = StructVector("c", {"k3": 1.0})
    d = structural_distance([a, b, c, StructVector("a2", {"k1": 0.5, "k2": 0.5})])
    assert d["a", "a2"] == pytest.approx(0.0, abs=1e-12)
    assert d["a", "c"] == pytest.approx(1.0)
    assert d["a", "b"] == pytest.approx(1 - 0.5 / math.sqrt(0.5), abs=1e-12)
    assert d["a", "b"] == pytest.approx(0.2929, abs=1e-4)


def test_struct_vector_rejects_bad_frequencies():
    with pytest.raises(DistanceError):
        StructVector("x", {"a": 0.7})
    with pytest.raises(DistanceError):
        StructVector("x", {"a": 1.0, "b": 0.0})


def naive_links(treebank):
    # two passes: collect head rows, then count
    counts = Counter()
    for s in treebank.sentences:
        upos = {t.index: t.upos for t in s.tokens}
        for t in s.tokens:
            if t.head:
                side = "L" if t.index > t.head else "R"
                counts[(upos[t.head], t.upos, t.deprel, side)] += 1
    total = sum(counts.values())
    return {k: v / total for k, v in counts.items()}


def test_structural_vector_matches_naive_oracle():
    rng = np.random.default_rng(4)
    for _ in range(100):
        sents = []
        for _ in range(rng.integers(1, 5)):
            n = int(rng.integers(2, 8))
            root = int(rng.integers(1, n + 1))
            toks = []
            for i in range(1, n + 1):
                head = 0 if i == root else int(rng.choice([j for j in range(1, n + 1) if j != i]))
                toks.append(Token(i, "w", str(rng.choice(["A", "B", "C"])), head, str(rng.choice(["x", "y"]))))
            sents.append(Sentence(tuple(toks)))
        tb = Treebank("t", tuple(sents))
        want = naive_links(tb)
        got = structural_vector(tb).features
        assert got.keys() == want.keys()
        for k in want:
            assert got[k] == pytest.approx(want[k], abs=1e-15)


def test_geo_examples():
    assert haversine(10, 20, 10, 20) == 0.0
    assert haversine(0, 0, 0, 180) == pytest.approx(20015.1, abs=0.1)
    assert haversine(90, 0, -90, 0) == pytest.approx(20015.1, abs=0.1)
    assert haversine(0, 0, 0, 180) == pytest.approx(HALF_CIRCUMFERENCE, rel=1e-12)
    with pytest.raises(DistanceError, match="zz"):
        geo_distance({"a": (0, 0)}, ["a", "zz"])


coord = st.tuples(st.floats(-90, 90), st.floats(-180, 180))


@given(coord, coord, coord)
def test_geo_symmetric_and_triangle(x, y, z):
    assert haversine(*x, *y) == pytest.approx(haversine(*y, *x), abs=1e-6)
    assert haversine(*x, *z) <= haversine(*x, *y) + haversine(*y, *z) + 1e-6


def test_genetic_examples():
    g = genetic_distance(parse_newick("((A:1,B:1):1,C:2);"), ["A", "B", "C"])
    assert (g["A", "B"], g["A", "C"], g["B", "C"]) == (2, 4, 4)
    assert g["A", "A"] == 0
    star = parse_newick("(" + ",".join(f"L{i}:1" for i in range(6)) + ");")
    s = genetic_distance(star, [f"L{i}" for i in range(6)])
    assert np.all(s.condensed() == 2)
    with pytest.raises(DistanceError, match="Q"):
        genetic_distance(star, ["L0", "Q"])


def brute_paths(tree):
    """Enumerate root paths and subtract the shared prefix for each pair."""
    paths = {}

    def walk(node, path):
        path = path + [(id(node), node.length)]
        if node.is_leaf():
            paths[node.name] = path
        for c in node.children:
            walk(c, path)

    walk(tree.root, [])
    out = {}
    for a, b in itertools.combinations(sorted(paths), 2):
        pa, pb = paths[a], paths[b]
        k = 0
        while k < min(len(pa), len(pb)) and pa[k][0] == pb[k][0]:
            k += 1
        out[a, b] = sum(w for _, w in pa[k:]) + sum(w for _, w in pb[k:])
    return out


def test_genetic_four_point_condition_and_oracle():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(4, 9))
        names = [f"L{i}" for i in range(n)]
        t = random_tree(names, rng)
        for node in t.preorder():
            node.length = float(rng.uniform(0.1, 3))
        g = genetic_distance(t, names)
        oracle = brute_paths(t)
        for (a, b), v in oracle.items():
            assert g[a, b] == pytest.approx(v, abs=1e-12)
        for w, x, y, z in itertools.combinations(names, 4):
            s = sorted([g[w, x] + g[y, z], g[w, y] + g[x, z], g[w, z] + g[x, y]])
            assert s[2] == pytest.approx(s[1], abs=1e-9)


def test_struct_tsv_format():
    text = struct_vectors_tsv([StructVector("en", {("NOUN", "DET", "det", "R"): 1.0})])
    assert text.splitlines() == ["lang\thead_upos\tdep_upos\tdeprel\tdir\tfreq", "en\tNOUN\tDET\tdet\tR\t1"]
