"""Synthetic languages evolved along a known tree.

A root stochastic dependency grammar (word-order and attachment
probabilities on the logit scale) is copied down a binary ultrametric tree.
Along each edge every logit drifts as Brownian motion, so the mutation rate
per unit of branch length is fixed. Each leaf language then emits a treebank,
matching constituency trees, and a coordinate.

``python -m langrep.synthetic OUTDIR`` writes a fixture with a manifest.
"""

from __future__ import annotations

import argparse
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus_io import Sentence, Token, Treebank, write_conllu
from .tree import DendroTree, Node, emit_newick

# probability that the dependent precedes its head, per relation
DIRECTION_PARAMS = ("nsubj", "obj", "obl", "advmod", "aux", "det", "amod", "nummod", "nmod", "case", "adj_advmod")
# probability that an optional dependent is present
PRESENCE_PARAMS = ("p_nsubj", "p_obj", "p_obl", "p_advmod", "p_aux", "p_det", "p_amod", "p_nummod", "p_nmod", "p_adj_advmod", "p_subj_pron")
PARAMS = DIRECTION_PARAMS + PRESENCE_PARAMS

# same-side dependents are placed nearest-first in this order
_CLOSENESS = ("case", "aux", "obj", "amod", "nummod", "det", "adj_advmod", "advmod", "nmod", "obl", "nsubj", "punct")

LEXICON = {
    "NOUN": ["tak", "molo", "firen", "sabu", "gret", "nolla", "vim", "darok"],
    "VERB": ["kessa", "bilon", "tarri", "vunde", "palk", "seno"],
    "ADJ": ["rudi", "lompa", "kesh", "avel"],
    "ADV": ["sil", "munno", "tevva"],
    "NUM": ["un", "dov", "tre"],
    "DET": ["la", "ke"],
    "ADP": ["en", "ba", "du"],
    "AUX": ["ha", "vos"],
    "PRON": ["mi", "tu", "sa"],
    "PUNCT": ["."],
}
PHRASE_LABEL = {"NOUN": "NP", "VERB": "VP", "ADJ": "AP", "ADV": "ADVP", "PRON": "NP", "NUM": "QP"}


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class Grammar:
    logits: dict[str, float]

    def prob(self, name):
        return float(_sigmoid(self.logits[name]))


@dataclass
class _Node:
    upos: str
    form: str
    deprel: str = "root"
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)


def _generate(grammar: Grammar, rng: np.random.Generator, max_nmod_depth=1) -> _Node:
    def word(pos):
        return LEXICON[pos][rng.integers(len(LEXICON[pos]))]

    def attach(head, dep, rel, param):
        dep.deprel = rel
        (head.left if rng.random() < grammar.prob(param) else head.right).append(dep)

    def noun(with_case, depth):
        n = _Node("NOUN", word("NOUN"))
        if with_case:
            attach(n, _Node("ADP", word("ADP")), "case", "case")
        if rng.random() < grammar.prob("p_det"):
            attach(n, _Node("DET", word("DET")), "det", "det")
        if rng.random() < grammar.prob("p_amod"):
            adj = _Node("ADJ", word("ADJ"))
            if rng.random() < grammar.prob("p_adj_advmod"):
                attach(adj, _Node("ADV", word("ADV")), "advmod", "adj_advmod")
            attach(n, adj, "amod", "amod")
        if rng.random() < grammar.prob("p_nummod"):
            attach(n, _Node("NUM", word("NUM")), "nummod", "nummod")
        if depth < max_nmod_depth and rng.random() < grammar.prob("p_nmod"):
            attach(n, noun(True, depth + 1), "nmod", "nmod")
        return n

    v = _Node("VERB", word("VERB"))
    if rng.random() < grammar.prob("p_nsubj"):
        subj = _Node("PRON", word("PRON")) if rng.random() < grammar.prob("p_subj_pron") else noun(False, 0)
        attach(v, subj, "nsubj", "nsubj")
    if rng.random() < grammar.prob("p_obj"):
        attach(v, noun(False, 0), "obj", "obj")
    if rng.random() < grammar.prob("p_obl"):
        attach(v, noun(True, 0), "obl", "obl")
    if rng.random() < grammar.prob("p_advmod"):
        attach(v, _Node("ADV", word("ADV")), "advmod", "advmod")
    if rng.random() < grammar.prob("p_aux"):
        attach(v, _Node("AUX", word("AUX")), "aux", "aux")
    punct = _Node("PUNCT", ".", "punct")
    v.right.append(punct)
    return v


def _rank(node):
    return _CLOSENESS.index(node.deprel) if node.deprel in _CLOSENESS else len(_CLOSENESS)


def _linearize(node, out):
    # nearest dependents sit next to the head; punctuation always ends the clause
    left = sorted(node.left, key=_rank, reverse=True)
    right = sorted(node.right, key=lambda n: (n.deprel == "punct", _rank(n)))
    for d in left:
        _linearize(d, out)
    out.append(node)
    for d in right:
        _linearize(d, out)
    return out


def _bracket(node):
    left = sorted(node.left, key=_rank, reverse=True)
    right = sorted(node.right, key=lambda n: (n.deprel == "punct", _rank(n)))
    pre = f"({node.upos} {node.form})"
    if not left and not right:
        return pre
    label = "S" if node.deprel == "root" else PHRASE_LABEL.get(node.upos, node.upos + "P")
    parts = [_bracket(d) for d in left] + [pre] + [_bracket(d) for d in right]
    return f"({label} {' '.join(parts)})"


def sample_sentence(grammar: Grammar, rng, sent_id=None) -> tuple[Sentence, str]:
    root = _generate(grammar, rng)
    order = _linearize(root, [])
    index = {id(n): i + 1 for i, n in enumerate(order)}
    heads = {}

    def walk(n, head):
        heads[id(n)] = head
        for d in n.left + n.right:
            walk(d, index[id(n)])

    walk(root, 0)
    tokens = tuple(Token(index[id(n)], n.form, n.upos, heads[id(n)], n.deprel) for n in order)
    return Sentence(tokens, sent_id), _bracket(root)


def coalescent_tree(names, rng) -> DendroTree:
    """Random ultrametric tree: with k lineages the next merge waits
    Exp(k(k-1)/2); heights are rescaled so the root sits at 1."""
    pool = [(Node(name), 0.0) for name in names]
    t = 0.0
    while len(pool) > 1:
        k = len(pool)
        t += rng.exponential(2.0 / (k * (k - 1)))
        i, j = sorted(rng.choice(k, size=2, replace=False))
        b, hb = pool.pop(j)
        a, ha = pool.pop(i)
        a.length, b.length = t - ha, t - hb
        pool.append((Node(None, 0.0, [a, b]), t))
    root = pool[0][0]
    return DendroTree(root).scaled(1.0 / t)


def evolve(tree: DendroTree, root: Grammar, drift: float, rng) -> dict[str, Grammar]:
    """Copy the root grammar down the tree. Along an edge of length ``t`` every
    logit moves by N(0, drift^2 * t), i.e. a fixed mutation rate per unit length."""
    out = {}
    stack = [(tree.root, root)]
    while stack:
        node, g = stack.pop()
        if node.is_leaf():
            out[node.name] = g
            continue
        for child in node.children:
            sd = drift * np.sqrt(child.length)
            logits = {name: g.logits[name] + float(rng.normal(0.0, sd)) for name in PARAMS}
            stack.append((child, Grammar(logits)))
    return out


def language_codes(n):
    letters = "abcdefghijklmnopqrstuvwxyz"
    return [f"q{letters[i]}" if n <= 26 else f"q{letters[i // 26]}{letters[i % 26]}" for i in range(n)]


@dataclass
class SyntheticCorpus:
    tree: DendroTree
    grammars: dict[str, Grammar]
    treebanks: dict[str, Treebank]
    brackets: dict[str, list[str]]
    coordinates: dict[str, tuple[float, float]]

    @property
    def languages(self):
        return list(self.treebanks)


def generate(n_languages=12, sentences=300, seed=0, drift=2.0) -> SyntheticCorpus:
    rng = np.random.default_rng(seed)
    tree = coalescent_tree(language_codes(n_languages), rng)
    root = Grammar({name: float(rng.normal(0.0, 1.0)) for name in PARAMS})
    grammars = evolve(tree, root, drift, rng)
    langs = sorted(grammars)
    treebanks, brackets = {}, {}
    for lang in langs:
        sents, brs = [], []
        for s in range(sentences):
            sent, br = sample_sentence(grammars[lang], rng, f"{lang}-{s + 1}")
            sents.append(sent)
            brs.append(br)
        treebanks[lang] = Treebank(lang, tuple(sents))
        brackets[lang] = brs
    # speaker locations drift along the same tree
    coords = {}
    stack = [(tree.root, np.array([50.0, 10.0]))]
    while stack:
        node, loc = stack.pop()
        if node.is_leaf():
            coords[node.name] = (float(np.clip(loc[0], -89, 89)), float((loc[1] + 180) % 360 - 180))
        for child in node.children:
            stack.append((child, loc + rng.normal(0.0, 8.0 * np.sqrt(child.length), size=2)))
    return SyntheticCorpus(tree, grammars, treebanks, brackets, {k: coords[k] for k in langs})


def write_fixture(corpus: SyntheticCorpus, directory, *, seed=0, levels=("raw", "func", "pos", "phrase", "deprel"), train=None) -> Path:
    """Write corpus files plus a ``manifest.toml`` and return the manifest path."""
    d = Path(directory)
    (d / "conllu").mkdir(parents=True, exist_ok=True)
    (d / "phrase").mkdir(exist_ok=True)
    langs = corpus.languages
    for lang in langs:
        (d / "conllu" / f"{lang}.conllu").write_text(write_conllu(corpus.treebanks[lang]), encoding="utf-8")
        (d / "phrase" / f"{lang}.txt").write_text("\n".join(corpus.brackets[lang]) + "\n", encoding="utf-8")
    (d / "gold.nwk").write_text(emit_newick(corpus.tree) + "\n", encoding="utf-8")
    (d / "coordinates.csv").write_text(
        "lang,lat,lon\n" + "".join(f"{k},{lat:.6f},{lon:.6f}\n" for k, (lat, lon) in corpus.coordinates.items()),
        encoding="utf-8",
    )
    train = train or {}
    lines = [
        f"seed = {seed}",
        f"languages = {json.dumps(langs)}",
        f"levels = {json.dumps(list(levels))}",
        'gold_tree = "gold.nwk"',
        'coordinates = "coordinates.csv"',
        "",
        "[conllu]",
        *(f'{lang} = "conllu/{lang}.conllu"' for lang in langs),
        "",
        "[bracketed]",
        *(f'{lang} = "phrase/{lang}.txt"' for lang in langs),
        "",
        "[train]",
        *(f"{k} = {json.dumps(v)}" for k, v in train.items()),
        "",
        "[baseline]",
        "trials = 1000",
    ]
    path = d / "manifest.toml"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def main(argv=None):
    p = argparse.ArgumentParser(prog="python -m langrep.synthetic", description="Write a synthetic fixture.")
    p.add_argument("out")
    p.add_argument("--languages", type=int, default=12)
    p.add_argument("--sentences", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--drift", type=float, default=2.0)
    p.add_argument("--epochs", type=int, default=20)
    args = p.parse_args(argv)
    corpus = generate(args.languages, args.sentences, args.seed, args.drift)
    path = write_fixture(corpus, args.out, seed=args.seed, train={"preset": "desk", "epochs": args.epochs})
    print(path)


if __name__ == "__main__":
    main()
