"""Ward clustering into dendrograms and comparison of trees by leaf-pair distances."""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .distances import DistanceMatrix, cosine_distance_matrix
from .tree import DendroTree, Node, emit_newick, leaf_distance, parse_newick

__all__ = [
    "BaselineResult",
    "emit_newick",
    "leaf_pair_distances",
    "parse_newick",
    "random_tree",
    "random_tree_baseline",
    "tree_distance",
    "ward_cluster",
    "ward_linkage",
]


class TreeMismatchError(ValueError):
    pass


def ward_linkage(dist) -> np.ndarray:
    """Agglomerate with Ward's Lance-Williams update.

    Returns a scipy-style linkage matrix: row ``k`` merges clusters
    ``Z[k, 0]`` and ``Z[k, 1]`` (leaves are ``0..n-1``, the ``k``-th merge
    creates cluster ``n + k``) at height ``Z[k, 2]`` with ``Z[k, 3]`` members.
    Ties go to the lexicographically lowest pair of cluster ids.
    """
    d = np.array(dist, dtype=float)
    n = d.shape[0]
    if n < 2:
        raise ValueError("need at least two items to cluster")
    if not np.all(np.isfinite(d)):
        raise ValueError("non-finite distances")
    # distances between active clusters, keyed by cluster id
    D = {}
    for i in range(n):
        for j in range(i + 1, n):
            D[(i, j)] = d[i, j]
    size = {i: 1 for i in range(n)}
    Z = np.zeros((n - 1, 4))
    for step in range(n - 1):
        best = None
        for key in sorted(D):
            if best is None or D[key] < D[best]:
                best = key
        i, j = best
        dij = D.pop(best)
        new = n + step
        ni, nj = size.pop(i), size.pop(j)
        for k in list(size):
            dki = D.pop((min(i, k), max(i, k)))
            dkj = D.pop((min(j, k), max(j, k)))
            nk = size[k]
            val = ((nk + ni) * dki**2 + (nk + nj) * dkj**2 - nk * dij**2) / (nk + ni + nj)
            D[(k, new)] = np.sqrt(max(val, 0.0))
        size[new] = ni + nj
        Z[step] = (i, j, dij, ni + nj)
    return Z


def linkage_to_tree(Z: np.ndarray, names) -> DendroTree:
    """Ultrametric tree: each node sits at half its merge height."""
    names = list(names)
    n = len(names)
    nodes = {i: Node(names[i]) for i in range(n)}
    height = {i: 0.0 for i in range(n)}
    for step, (a, b, h, _) in enumerate(Z):
        a, b = int(a), int(b)
        node = Node(None, 1.0, [nodes.pop(a), nodes.pop(b)])
        for child, cid in zip(node.children, (a, b)):
            child.length = max(h - height[cid], 0.0) / 2
        nodes[n + step] = node
        height[n + step] = h
    (root,) = nodes.values()
    root.length = 0.0
    return DendroTree(root)


def ward_cluster(data, names=None) -> DendroTree:
    """Ward-linkage dendrogram.

    ``data`` is a :class:`DistanceMatrix`, or a 2-D array of row vectors (in
    which case ``names`` is required and cosine distance is used).
    """
    if isinstance(data, DistanceMatrix):
        return linkage_to_tree(ward_linkage(data.values), data.languages)
    if names is None:
        raise ValueError("names are required when clustering raw vectors")
    return linkage_to_tree(ward_linkage(cosine_distance_matrix(data)), names)


def leaf_pair_distances(tree: DendroTree) -> dict[tuple[str, str], float]:
    return tree.leaf_pair_distances()


def tree_distance(gold: DendroTree, generated: DendroTree, normalize: bool = False) -> float:
    """Sum of squared differences of leaf-pair path lengths.

    With ``normalize``, each tree's pair distances are first divided by their
    mean and the sum is divided by the number of pairs, which makes scores
    comparable across trees with different edge scales.
    """
    a, b = set(gold.leaf_names()), set(generated.leaf_names())
    if a != b:
        raise TreeMismatchError(f"leaf sets differ: {sorted(a ^ b)}")
    if len(a) < 2:
        return 0.0
    pg, pt = gold.leaf_pair_distances(), generated.leaf_pair_distances()
    keys = sorted(pg)
    x = np.array([pg[k] for k in keys])
    y = np.array([leaf_distance(pt, *k) for k in keys])
    if normalize:
        if x.mean() == 0 or y.mean() == 0:
            raise ValueError("cannot normalize a tree whose leaf-pair distances are all zero")
        return float(np.sum((x / x.mean() - y / y.mean()) ** 2) / len(keys))
    return float(np.sum((x - y) ** 2))


def random_tree(leaves, rng: np.random.Generator) -> DendroTree:
    """Binary tree from uniformly random sequential merges.

    The k-th merge sits at height k, so the tree is ultrametric like a Ward
    dendrogram; edge weights are height differences.
    """
    pool = [(Node(name), 0) for name in leaves]
    for step in range(1, len(pool)):
        i, j = sorted(rng.choice(len(pool), size=2, replace=False))
        b, hb = pool.pop(j)
        a, ha = pool.pop(i)
        a.length, b.length = float(step - ha), float(step - hb)
        pool.append((Node(None, 0.0, [a, b]), step))
    return DendroTree(pool[0][0])


@dataclass
class BaselineResult:
    mean: float
    std: float
    samples: np.ndarray

    def percentile(self, score: float) -> float:
        """Percentage of random samples scoring at or below ``score``."""
        return 100.0 * float(np.mean(self.samples <= score))


def _baseline_shard(args):
    newick, trials, seed_seq = args
    gold = parse_newick(newick)
    leaves = sorted(gold.leaf_names())
    rng = np.random.default_rng(seed_seq)
    return [tree_distance(gold, random_tree(leaves, rng), normalize=True) for _ in range(trials)]


def random_tree_baseline(gold: DendroTree, trials: int = 1000, seed: int = 0, *, shard_size: int = 250, workers: int = 1) -> BaselineResult:
    """Score random topologies against ``gold`` (normalized mode).

    Trials are split into shards whose seeds derive from ``seed``; the result
    does not depend on ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    counts = [min(shard_size, trials - s) for s in range(0, trials, shard_size)]
    seeds = np.random.SeedSequence(seed).spawn(len(counts))
    jobs = [(emit_newick(gold), c, s) for c, s in zip(counts, seeds)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_baseline_shard, jobs))
    else:
        parts = [_baseline_shard(j) for j in jobs]
    samples = np.array(list(itertools.chain.from_iterable(parts)))
    return BaselineResult(float(samples.mean()), float(samples.std(ddof=1)) if len(samples) > 1 else 0.0, samples)
