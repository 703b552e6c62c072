"""IC* structure search over distance variables.

Rows of a :class:`SampleTable` are unordered language pairs and columns are
distance measures. Pairs share languages, so rows are not truly independent;
the search treats them as if they were (``SampleTable.CAVEAT``).
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .distances import DistanceMatrix
from .stats import average_ranks

GENUINE = "genuine"
POTENTIAL = "potential"
SPURIOUS = "spurious"
UNDETERMINED = "undetermined"

# default node set: the seven variables of the reference analysis (no Func model)
DEFAULT_VARIABLES = ("genetic", "geographic", "structural", "raw", "pos", "phrase", "deprel")


class CITestError(ValueError):
    pass


@dataclass
class SampleTable:
    variables: list[str]
    data: np.ndarray  # rows x variables

    CAVEAT = "rows are language pairs that share languages; they are treated as i.i.d. samples"

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[1] != len(self.variables):
            raise ValueError("data must be 2-D with one column per variable")
        if len(set(self.variables)) != len(self.variables):
            raise ValueError("duplicate variable names")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("sample table has missing or non-finite values")

    @property
    def n(self):
        return self.data.shape[0]

    def column(self, name):
        return self.data[:, self.variables.index(name)]

    def select(self, names) -> SampleTable:
        idx = [self.variables.index(v) for v in names]
        return SampleTable(list(names), self.data[:, idx])

    @classmethod
    def from_matrices(cls, matrices) -> SampleTable:
        """One column per matrix, one row per language pair (aligned by ID)."""
        items = list(matrices.items()) if isinstance(matrices, dict) else [(m.label, m) for m in matrices]
        ref: DistanceMatrix = items[0][1]
        cols = [m.reorder(ref.languages).condensed() for _, m in items]
        return cls([lab for lab, _ in items], np.column_stack(cols))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.variables)
        for row in self.data:
            w.writerow([f"{x:.9g}" for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> SampleTable:
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        return cls(rows[0], np.array([[float(x) for x in r] for r in rows[1:]]))


@dataclass
class CITestConfig:
    alpha: float = 0.001
    max_cond: int | None = None  # None: |V| - 2
    test: str = "spearman"  # or "pearson" (Gaussian partial correlation)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.test not in ("spearman", "pearson"):
            raise ValueError(f"unknown CI test {self.test!r}")


class _Correlations:
    """Cached (rank) correlation matrix of a table."""

    def __init__(self, table: SampleTable, test: str):
        data = table.data
        if test == "spearman":
            data = np.column_stack([average_ranks(c) for c in data.T])
        sd = data.std(axis=0)
        if np.any(sd == 0):
            bad = [v for v, s in zip(table.variables, sd) if s == 0]
            raise CITestError(f"constant column(s): {bad}")
        self.corr = np.corrcoef(data, rowvar=False)
        self.n = table.n
        self.index = {v: i for i, v in enumerate(table.variables)}


def partial_correlation(corr: np.ndarray, i: int, j: int, cond) -> float:
    idx = [i, j, *cond]
    sub = corr[np.ix_(idx, idx)]
    # residual covariance of (x, y) after regressing out the conditioning set
    resid = sub[:2, :2]
    if cond:
        csub = sub[2:, 2:]
        if np.linalg.cond(csub) > 1e12:
            raise CITestError("singular conditioning submatrix")
        resid = resid - sub[:2, 2:] @ np.linalg.solve(csub, sub[2:, :2])
    vx, vy = resid[0, 0], resid[1, 1]
    if vx <= 1e-12 or vy <= 1e-12:
        # x or y is (numerically) a deterministic function of the rest
        return float(np.sign(resid[0, 1]) or 1.0)
    return float(np.clip(resid[0, 1] / np.sqrt(vx * vy), -1.0, 1.0))


def _fisher_p(r, n, k):
    dof = n - k - 3
    if dof <= 0:
        raise CITestError(f"conditioning set of size {k} too large for n={n}")
    if abs(r) >= 1.0:
        return 0.0
    z = np.arctanh(r) * np.sqrt(dof)
    return float(2 * sps.norm.sf(abs(z)))


def ci_test(table: SampleTable, x: str, y: str, z=(), config: CITestConfig | None = None, *, _cache=None) -> tuple[bool, float]:
    """Partial (rank) correlation test of x _||_ y | z with Fisher's z.

    Returns ``(independent, p)``; independent means ``p >= alpha``.
    """
    config = config or CITestConfig()
    c = _cache or _Correlations(table, config.test)
    z = list(z)
    if len(z) >= table.n - 3:
        raise CITestError(f"conditioning set of size {len(z)} too large for n={table.n}")
    r = partial_correlation(c.corr, c.index[x], c.index[y], [c.index[v] for v in z])
    p = _fisher_p(r, c.n, len(z))
    return p >= config.alpha, p


@dataclass
class MarkedPDAG:
    """Output of IC*: adjacencies with arrowheads and genuine marks.

    ``arrows`` holds ``(a, b)`` when the a-b edge has an arrowhead at b;
    ``marked`` holds ``(a, b)`` for a genuine a -> b edge.
    """

    nodes: list[str]
    adjacent: set = field(default_factory=set)  # frozensets
    arrows: set = field(default_factory=set)
    marked: set = field(default_factory=set)
    sepsets: dict = field(default_factory=dict)  # (a, b) in node order -> tuple
    pvalues: dict = field(default_factory=dict)

    def _key(self, a, b):
        return (a, b) if self.nodes.index(a) < self.nodes.index(b) else (b, a)

    def is_adjacent(self, a, b):
        return frozenset((a, b)) in self.adjacent

    def neighbours(self, a):
        return [b for b in self.nodes if b != a and self.is_adjacent(a, b)]

    def sepset(self, a, b):
        return self.sepsets.get(self._key(a, b))

    def edges(self) -> list[tuple[str, str, str]]:
        """``(source, target, mark)``; spurious/undetermined edges use node order."""
        out = []
        for a, b in itertools.combinations(self.nodes, 2):
            if not self.is_adjacent(a, b):
                continue
            at_a, at_b = (b, a) in self.arrows, (a, b) in self.arrows
            if at_a and at_b:
                out.append((a, b, SPURIOUS))
            elif at_b:
                out.append((a, b, GENUINE if (a, b) in self.marked else POTENTIAL))
            elif at_a:
                out.append((b, a, GENUINE if (b, a) in self.marked else POTENTIAL))
            else:
                out.append((a, b, UNDETERMINED))
        return out

    def edge_mark(self, a, b):
        for s, t, mark in self.edges():
            if {s, t} == {a, b}:
                return mark
        return None

    def sepsets_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["a", "b", "sepset", "p"])
        for (a, b), s in sorted(self.sepsets.items(), key=lambda kv: (self.nodes.index(kv[0][0]), self.nodes.index(kv[0][1]))):
            w.writerow([a, b, ";".join(s), f"{self.pvalues[(a, b)]:.9g}"])
        return buf.getvalue()


def skeleton(table: SampleTable, config: CITestConfig | None = None) -> MarkedPDAG:
    """Adjacency search: a pair is cut as soon as some subset of the other
    variables (sizes 0, 1, ... up to ``max_cond``) makes it independent."""
    config = config or CITestConfig()
    cache = _Correlations(table, config.test)
    nodes = list(table.variables)
    max_cond = len(nodes) - 2 if config.max_cond is None else config.max_cond
    g = MarkedPDAG(nodes)
    for a, b in itertools.combinations(nodes, 2):
        rest = [v for v in nodes if v not in (a, b)]
        found = None
        for size in range(0, min(max_cond, len(rest)) + 1):
            for z in itertools.combinations(rest, size):
                indep, p = ci_test(table, a, b, z, config, _cache=cache)
                if indep:
                    found = (z, p)
                    break
            if found:
                break
        if found:
            g.sepsets[(a, b)] = tuple(found[0])
            g.pvalues[(a, b)] = found[1]
        else:
            g.adjacent.add(frozenset((a, b)))
    return g


def _marked_path(g: MarkedPDAG, start, goal) -> bool:
    seen, stack = {start}, [start]
    while stack:
        u = stack.pop()
        for (s, t) in g.marked:
            if s == u and t not in seen:
                if t == goal:
                    return True
                seen.add(t)
                stack.append(t)
    return False


def orient(g: MarkedPDAG) -> MarkedPDAG:
    """Collider detection followed by the IC* propagation rules (in place)."""
    nodes = g.nodes
    # colliders
    for a, b in itertools.combinations(nodes, 2):
        if g.is_adjacent(a, b):
            continue
        sep = set(g.sepset(a, b) or ())
        for c in nodes:
            if c in (a, b) or c in sep:
                continue
            if g.is_adjacent(a, c) and g.is_adjacent(b, c):
                g.arrows.add((a, c))
                g.arrows.add((b, c))

    changed = True
    while changed:
        changed = False
        # R1: a *-> c, c - b without a head at c, a and b not adjacent  =>  c -*-> b
        for a, b in itertools.permutations(nodes, 2):
            if g.is_adjacent(a, b):
                continue
            for c in nodes:
                if c in (a, b) or not (g.is_adjacent(a, c) and g.is_adjacent(b, c)):
                    continue
                if (a, c) in g.arrows and (b, c) not in g.arrows and (c, b) not in g.marked:
                    g.arrows.add((c, b))
                    g.marked.add((c, b))
                    changed = True
        # R2: a marked directed path a ~> b plus an a - b edge  =>  arrowhead at b
        for a, b in itertools.permutations(nodes, 2):
            if not g.is_adjacent(a, b) or (a, b) in g.arrows or (b, a) in g.marked:
                continue
            if _marked_path(g, a, b):
                g.arrows.add((a, b))
                changed = True
    return g


def ic_star(table: SampleTable, config: CITestConfig | None = None) -> MarkedPDAG:
    return orient(skeleton(table, config))


_DOT_STYLE = {
    GENUINE: "style=solid",
    POTENTIAL: "style=dashed",
    SPURIOUS: "dir=both, style=dashed",
    UNDETERMINED: "dir=none",
}


def _dot_id(name):
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(g: MarkedPDAG, name: str = "ic_star") -> str:
    """Graphviz text. Genuine edges are solid arrows, potential ones dashed,
    spurious ones double-headed and undetermined ones plain lines."""
    lines = [f"digraph {name} {{", "  node [shape=circle];"]
    for node in g.nodes:
        lines.append(f"  {_dot_id(node)};")
    for s, t, mark in g.edges():
        lines.append(f"  {_dot_id(s)} -> {_dot_id(t)} [{_DOT_STYLE[mark]}, label={mark}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
