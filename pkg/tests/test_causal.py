import itertools

import networkx as nx
import numpy as np
import pytest

from langrep.causal import (
    GENUINE,
    POTENTIAL,
    SPURIOUS,
    UNDETERMINED,
    CITestConfig,
    CITestError,
    MarkedPDAG,
    SampleTable,
    ci_test,
    export_dot,
    ic_star,
    orient,
    partial_correlation,
)
from langrep.distances import DistanceMatrix


def simulate(dag: nx.DiGraph, n, rng):
    """Linear-Gaussian data with coefficients away from zero."""
    cols = {}
    for v in nx.topological_sort(dag):
        x = rng.normal(size=n)
        for u in dag.predecessors(v):
            x += rng.choice([-1, 1]) * rng.uniform(0.5, 1.5) * cols[u]
        cols[v] = x
    names = sorted(dag.nodes)
    return SampleTable(names, np.column_stack([cols[v] for v in names]))


def separated(dag, a, b, z):
    return nx.is_d_separator(dag, {a}, {b}, set(z))


def oracle(dag):
    """Skeleton and unshielded colliders from d-separation."""
    names = sorted(dag.nodes)
    adj = set()
    for a, b in itertools.combinations(names, 2):
        rest = [v for v in names if v not in (a, b)]
        if not any(separated(dag, a, b, z) for k in range(len(rest) + 1) for z in itertools.combinations(rest, k)):
            adj.add(frozenset((a, b)))
    colliders = set()
    for a, b in itertools.combinations(names, 2):
        if frozenset((a, b)) in adj:
            continue
        for c in names:
            if frozenset((a, c)) in adj and frozenset((b, c)) in adj and dag.has_edge(a, c) and dag.has_edge(b, c):
                colliders.add((a, b, c))
    return adj, colliders


def matches_oracle(g: MarkedPDAG, dag):
    adj, colliders = oracle(dag)
    if g.adjacent != adj:
        return False
    for a, b in itertools.combinations(g.nodes, 2):
        if g.is_adjacent(a, b):
            continue
        for c in g.nodes:
            if g.is_adjacent(a, c) and g.is_adjacent(b, c):
                found = (a, c) in g.arrows and (b, c) in g.arrows
                if found != ((a, b, c) in colliders):
                    return False
    return True


CHAIN = nx.DiGraph([("A", "B"), ("B", "C")])
FORK = nx.DiGraph([("B", "A"), ("B", "C")])
COLLIDER = nx.DiGraph([("A", "C"), ("B", "C")])


# ci_test ----------------------------------------------------------------------


def test_independent_uniforms_pass_at_alpha():
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(200):
        t = SampleTable(["x", "y"], rng.uniform(size=(2000, 2)))
        hits += ci_test(t, "x", "y")[0]
    assert hits / 200 >= 0.99


def test_collider_conditioning_creates_dependence():
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=2000), rng.normal(size=2000)
    t = SampleTable(["x", "y", "z"], np.column_stack([x, y, x + y]))
    indep, p = ci_test(t, "x", "y", ["z"])
    assert not indep and p < 0.001
    assert ci_test(t, "x", "y")[0]


def test_identical_columns_fully_dependent():
    x = np.random.default_rng(2).normal(size=100)
    t = SampleTable(["x", "y"], np.column_stack([x, x]))
    indep, p = ci_test(t, "x", "y")
    assert not indep and p == pytest.approx(0.0, abs=1e-300)


def test_ci_errors():
    rng = np.random.default_rng(3)
    t = SampleTable(list("abcd"), rng.normal(size=(5, 4)))
    with pytest.raises(CITestError):
        ci_test(t, "a", "b", ["c", "d"])
    z = rng.normal(size=50)
    s = SampleTable(list("xyzw"), np.column_stack([rng.normal(size=50), rng.normal(size=50), z, z]))
    with pytest.raises(CITestError, match="singular"):
        ci_test(s, "x", "y", ["z", "w"])
    with pytest.raises(ValueError):
        CITestConfig(alpha=1.5)


def test_partial_correlation_matches_residual_regression():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(500, 4))
    X[:, 1] += X[:, 2]
    X[:, 0] += X[:, 2] - X[:, 3]
    corr = np.corrcoef(X, rowvar=False)
    Z = np.column_stack([np.ones(500), X[:, 2:]])
    rx = X[:, 0] - Z @ np.linalg.lstsq(Z, X[:, 0], rcond=None)[0]
    ry = X[:, 1] - Z @ np.linalg.lstsq(Z, X[:, 1], rcond=None)[0]
    assert partial_correlation(corr, 0, 1, [2, 3]) == pytest.approx(np.corrcoef(rx, ry)[0, 1], abs=1e-10)


# ic_star ----------------------------------------------------------------------


def test_chain():
    g = ic_star(simulate(CHAIN, 2000, np.random.default_rng(5)))
    assert not g.is_adjacent("A", "C") and g.sepset("A", "C") == ("B",)
    assert g.is_adjacent("A", "B") and g.is_adjacent("B", "C")
    assert g.edge_mark("A", "B") != SPURIOUS and g.edge_mark("B", "C") != SPURIOUS
    assert ("A", "B") not in g.arrows or ("C", "B") not in g.arrows


def test_collider():
    g = ic_star(simulate(COLLIDER, 2000, np.random.default_rng(6)))
    assert not g.is_adjacent("A", "B")
    assert ("A", "C") in g.arrows and ("B", "C") in g.arrows
    assert g.edge_mark("A", "C") == POTENTIAL


def test_all_independent_is_edgeless():
    t = SampleTable(list("abcd"), np.random.default_rng(7).normal(size=(2000, 4)))
    g = ic_star(t)
    assert g.edges() == []
    assert export_dot(g).count("->") == 0


def test_r1_marks_genuine():
    # A -> C <- B, C -> D: the head at C propagates to a genuine C -> D
    dag = nx.DiGraph([("A", "C"), ("B", "C"), ("C", "D")])
    g = ic_star(simulate(dag, 3000, np.random.default_rng(8)))
    assert g.edge_mark("C", "D") == GENUINE
    assert ("C", "D") in g.edges() or ("C", "D", GENUINE) in g.edges()


def test_r2_adds_head_along_marked_path():
    g = MarkedPDAG(list("abc"))
    g.adjacent = {frozenset("ab"), frozenset("bc"), frozenset("ac")}
    g.arrows = {("a", "b"), ("b", "c")}
    g.marked = {("a", "b"), ("b", "c")}
    orient(g)
    assert ("a", "c") in g.arrows


def test_marks_never_downgraded():
    rng = np.random.default_rng(9)
    for _ in range(20):
        dag = nx.gnp_random_graph(5, 0.5, seed=int(rng.integers(1 << 30)), directed=True)
        dag = nx.DiGraph([(f"v{u}", f"v{v}") for u, v in dag.edges if u < v])
        dag.add_nodes_from(f"v{i}" for i in range(5))
        g = ic_star(simulate(dag, 1000, rng))
        before = set(g.marked)
        orient(g)
        assert before <= g.marked


def test_sepset_bookkeeping_against_ci_test():
    rng = np.random.default_rng(10)
    dag = nx.DiGraph([("A", "B"), ("B", "C"), ("D", "C"), ("A", "E")])
    t = simulate(dag, 2000, rng)
    g = ic_star(t)
    for a, b in itertools.combinations(g.nodes, 2):
        if g.is_adjacent(a, b):
            assert g.sepset(a, b) is None
            rest = [v for v in g.nodes if v not in (a, b)]
            for k in range(len(rest) + 1):
                for z in itertools.combinations(rest, k):
                    assert not ci_test(t, a, b, z)[0]
        else:
            assert ci_test(t, a, b, g.sepset(a, b))[0]


def test_row_permutation_invariance():
    rng = np.random.default_rng(11)
    t = simulate(nx.DiGraph([("A", "C"), ("B", "C"), ("C", "D")]), 1500, rng)
    p = rng.permutation(t.n)
    g1, g2 = ic_star(t), ic_star(SampleTable(t.variables, t.data[p]))
    assert g1.edges() == g2.edges() and g1.sepsets == g2.sepsets


def random_polytree(rng, n_nodes):
    """Random tree skeleton with random edge directions.

    With one path per pair, path effects cannot cancel, so the simulated
    distribution is faithful to the graph the oracle reads.
    """
    names = [chr(ord("A") + i) for i in range(n_nodes)]
    skel = nx.random_labeled_tree(n_nodes, seed=int(rng.integers(1 << 30)))
    dag = nx.DiGraph()
    dag.add_nodes_from(names)
    for u, v in skel.edges:
        if rng.random() < 0.5:
            u, v = v, u
        dag.add_edge(names[u], names[v])
    return dag


def test_skeleton_matches_d_separation_oracle_on_small_dags():
    rng = np.random.default_rng(12)
    ok = 0
    for _ in range(100):
        dag = random_polytree(rng, int(rng.integers(3, 6)))
        g = ic_star(simulate(dag, 5000, rng))
        ok += g.adjacent == oracle(dag)[0]
    assert ok >= 95


def test_export_dot_styles():
    g = MarkedPDAG(["x", "y", "z w"])
    assert export_dot(g).count(";") == 4  # node statement plus three nodes
    g.adjacent = {frozenset("xy")}
    g.arrows = {("x", "y")}
    g.marked = {("x", "y")}
    dot = export_dot(g)
    assert dot.count("->") == 1 and '"x" -> "y" [style=solid' in dot
    assert '"z w"' in dot
    g.arrows.add(("y", "x"))
    assert "dir=both" in export_dot(g)
    g.arrows = set()
    g.marked = set()
    assert g.edges() == [("x", "y", UNDETERMINED)] and "dir=none" in export_dot(g)


def test_sample_table_from_matrices_and_csv():
    langs = ("a", "b", "c")
    m1 = DistanceMatrix(langs, np.array([[0, 1, 2], [1, 0, 3], [2, 3, 0.0]]), "one")
    m2 = m1.reorder(["c", "a", "b"])
    t = SampleTable.from_matrices({"one": m1, "two": m2})
    assert t.n == 3 and np.array_equal(t.column("one"), t.column("two"))
    back = SampleTable.from_csv(t.to_csv())
    assert back.variables == ["one", "two"] and np.allclose(back.data, t.data)
    with pytest.raises(ValueError):
        SampleTable(["x"], np.array([[np.nan]]))
