"""Weighted rooted trees over language leaves, with Newick I/O."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field


class NewickError(ValueError):
    pass


@dataclass(eq=False)
class Node:
    name: str | None = None
    length: float = 1.0
    children: list[Node] = field(default_factory=list)

    def is_leaf(self):
        return not self.children


class DendroTree:
    """A rooted tree whose leaves are named languages.

    Edge weights live on the child node (``Node.length`` is the weight of the
    edge to the parent); the root's own length is ignored.
    """

    def __init__(self, root: Node):
        self.root = root
        names = [leaf.name for leaf in self.leaves()]
        if any(not name for name in names):
            raise NewickError("unnamed leaf")
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise NewickError(f"duplicate leaf names: {', '.join(dupes)}")
        for node in self.preorder():
            if node is not root and not node.length >= 0:
                raise NewickError(f"negative or NaN edge weight {node.length!r}")

    def preorder(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def leaves(self):
        return [n for n in self.preorder() if n.is_leaf()]

    def leaf_names(self) -> list[str]:
        return [n.name for n in self.leaves()]

    def __len__(self):
        return len(self.leaves())

    def __repr__(self):
        return f"DendroTree({emit_newick(self)!r})"

    def root_distances(self) -> dict[str, tuple[float, tuple[int, ...]]]:
        """Map leaf name to (distance from root, path of node ids from root)."""
        out = {}
        stack = [(self.root, 0.0, (id(self.root),))]
        while stack:
            node, depth, path = stack.pop()
            if node.is_leaf():
                out[node.name] = (depth, path)
            for child in node.children:
                stack.append((child, depth + child.length, path + (id(child),)))
        return out

    def leaf_pair_distances(self) -> dict[tuple[str, str], float]:
        """Weighted path length between every unordered pair of leaves.

        Keys are ``(a, b)`` with ``a < b``; self-distances are implicit zeros
        (see :func:`leaf_distance`).
        """
        depths = {}
        stack = [(self.root, 0.0)]
        while stack:
            node, depth = stack.pop()
            depths[id(node)] = depth
            stack.extend((c, depth + c.length) for c in node.children)
        info = self.root_distances()
        out = {}
        for a, b in itertools.combinations(sorted(info), 2):
            (da, pa), (db, pb) = info[a], info[b]
            k = 0
            while k < min(len(pa), len(pb)) and pa[k] == pb[k]:
                k += 1
            lca = depths[pa[k - 1]]
            out[(a, b)] = (da - lca) + (db - lca)
        return out

    def scaled(self, factor: float) -> DendroTree:
        return DendroTree(_map_nodes(self.root, lambda n: Node(n.name, n.length * factor)))

    def relabeled(self, mapping: dict[str, str]) -> DendroTree:
        return DendroTree(
            _map_nodes(self.root, lambda n: Node(mapping.get(n.name, n.name) if n.is_leaf() else n.name, n.length))
        )

    def restricted(self, keep) -> DendroTree:
        """Induced subtree on the leaves in ``keep``; unary nodes are spliced out."""
        keep = set(keep)

        def prune(node):
            if node.is_leaf():
                return Node(node.name, node.length) if node.name in keep else None
            kids = [k for k in (prune(c) for c in node.children) if k is not None]
            if not kids:
                return None
            if len(kids) == 1:
                only = kids[0]
                return Node(only.name, only.length + node.length, only.children)
            return Node(node.name, node.length, kids)

        root = prune(self.root)
        if root is None:
            raise ValueError("no leaves left after restriction")
        return DendroTree(root)


def _map_nodes(node, make):
    new = make(node)
    new.children = [_map_nodes(c, make) for c in node.children]
    return new


def leaf_distance(pairs: dict[tuple[str, str], float], a: str, b: str) -> float:
    if a == b:
        return 0.0
    return pairs[(a, b)] if a < b else pairs[(b, a)]


# Newick ---------------------------------------------------------------------

_SPECIAL = set("(),:;'[] \t\n\r")


def parse_newick(text: str) -> DendroTree:
    """Parse one Newick tree terminated by ``;``.

    Missing branch lengths default to 1.0. Quoted labels (``'...'`` with
    ``''`` as an escaped quote) and ``[...]`` comments are supported.
    """
    p = _NewickParser(text)
    root = p.parse()
    return DendroTree(root)


class _NewickParser:
    def __init__(self, text):
        self.s = text
        self.i = 0

    def error(self, msg):
        raise NewickError(f"{msg} at position {self.i}")

    def skip(self):
        s = self.s
        while self.i < len(s):
            if s[self.i].isspace():
                self.i += 1
            elif s[self.i] == "[":
                end = s.find("]", self.i)
                if end < 0:
                    self.error("unterminated comment")
                self.i = end + 1
            else:
                break

    def peek(self):
        self.skip()
        return self.s[self.i] if self.i < len(self.s) else ""

    def parse(self):
        node = self.subtree(depth=0)
        if self.peek() != ";":
            if self.peek() == ")":
                self.error("unbalanced parentheses: unexpected ')'")
            self.error("expected ';'")
        self.i += 1
        if self.peek():
            self.error("trailing characters after ';'")
        return node

    def subtree(self, depth):
        node = Node()
        if self.peek() == "(":
            self.i += 1
            while True:
                node.children.append(self.subtree(depth + 1))
                c = self.peek()
                if c == ",":
                    self.i += 1
                elif c == ")":
                    self.i += 1
                    break
                elif c in ("", ";"):
                    self.error("unbalanced parentheses: missing ')'")
                else:
                    self.error(f"unexpected {c!r}")
        node.name = self.label()
        if self.peek() == ":":
            self.i += 1
            node.length = self.number()
        return node

    def label(self):
        self.skip()
        s = self.s
        if self.i < len(s) and s[self.i] == "'":
            out = []
            self.i += 1
            while True:
                if self.i >= len(s):
                    self.error("unterminated quoted label")
                ch = s[self.i]
                if ch == "'":
                    if s[self.i + 1 : self.i + 2] == "'":
                        out.append("'")
                        self.i += 2
                        continue
                    self.i += 1
                    return "".join(out)
                out.append(ch)
                self.i += 1
        start = self.i
        while self.i < len(s) and s[self.i] not in _SPECIAL:
            self.i += 1
        # unquoted underscores stand for blanks in Newick
        return s[start : self.i].replace("_", " ") or None

    def number(self):
        self.skip()
        start = self.i
        s = self.s
        while self.i < len(s) and s[self.i] not in _SPECIAL:
            self.i += 1
        try:
            return float(s[start : self.i])
        except ValueError:
            self.error(f"bad branch length {s[start:self.i]!r}")


def _quote(name: str) -> str:
    if name and not any(ch in _SPECIAL or ch == "_" for ch in name):
        return name
    if name and " " in name and not any(ch in _SPECIAL - {" "} or ch == "_" for ch in name):
        return name.replace(" ", "_")
    return "'" + name.replace("'", "''") + "'"


def emit_newick(tree: DendroTree) -> str:
    """Serialize with every edge weight written in shortest round-trip form."""

    def rec(node, is_root):
        if node.is_leaf():
            out = _quote(node.name)
        else:
            out = "(" + ",".join(rec(c, False) for c in node.children) + ")"
            if node.name:
                out += _quote(node.name)
        if not is_root:
            out += ":" + repr(float(node.length))
        return out

    return rec(tree.root, True) + ";"
