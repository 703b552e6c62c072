"""Rewrite annotated sentences into symbol streams at five levels of abstraction.

Levels:

``raw``     lowercased characters of the sentence (space shown as ``␣``)
``func``    function words kept as lowercased forms, everything else as UPOS
``pos``     UPOS tags only
``phrase``  linearized constituency tree with content words replaced by POS
``deprel``  one ``deprel:upos:dir:head_upos`` tuple per token
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .corpus_io import BracketTree, Sentence, Treebank

LEVELS = ("raw", "func", "pos", "phrase", "deprel")
EOS = "</s>"
SPACE = "␣"

# UD closed classes
DEFAULT_FUNC_UPOS = frozenset({"ADP", "AUX", "CCONJ", "DET", "PART", "PRON", "SCONJ", "PUNCT"})


class AbstractionError(ValueError):
    pass


@dataclass(frozen=True)
class SymbolSequence:
    language: str
    symbols: tuple[str, ...]
    level: str

    def __post_init__(self):
        if self.level not in LEVELS:
            raise AbstractionError(f"unknown level {self.level!r}")
        if not self.symbols:
            raise AbstractionError("empty symbol sequence")
        if not all(self.symbols):
            raise AbstractionError("empty symbol in sequence")

    def __len__(self):
        return len(self.symbols)


def _clean(symbol: str) -> str:
    # one symbol must never contain whitespace: files store symbols space-separated
    return "".join(SPACE if ch.isspace() else ch for ch in symbol)


def _seq(language, symbols, level, eos):
    symbols = [_clean(s) for s in symbols]
    if eos:
        symbols.append(EOS)
    return SymbolSequence(language, tuple(symbols), level)


def to_raw(sentence: Sentence, language: str = "", *, tokens: bool = False, eos: bool = False) -> SymbolSequence:
    """Character stream of the lowercased sentence; ``tokens=True`` gives word symbols."""
    forms = [t.form.lower() for t in sentence.tokens]
    if tokens:
        return _seq(language, forms, "raw", eos)
    return _seq(language, list(" ".join(forms)), "raw", eos)


def to_func_pos(sentence: Sentence, func_upos=DEFAULT_FUNC_UPOS, language: str = "", *, eos: bool = False) -> SymbolSequence:
    if not func_upos:
        raise AbstractionError("function-word UPOS set must be non-empty")
    syms = [t.form.lower() if t.upos in func_upos else t.upos for t in sentence.tokens]
    return _seq(language, syms, "func", eos)


def to_pos(sentence: Sentence, language: str = "", *, eos: bool = False) -> SymbolSequence:
    return _seq(language, [t.upos for t in sentence.tokens], "pos", eos)


def deprel_symbol(deprel: str, upos: str, direction: str, head_upos: str) -> str:
    return f"{deprel}:{upos}:{direction}:{head_upos}"


def to_deprel(sentence: Sentence, language: str = "", *, eos: bool = False) -> SymbolSequence:
    """One tuple per token. ``R`` means the head lies to the right of the token."""
    toks = sentence.tokens
    syms = []
    for t in toks:
        if t.head == 0:
            syms.append(deprel_symbol(t.deprel, t.upos, "ROOT", "ROOT"))
        else:
            direction = "R" if t.head > t.index else "L"
            syms.append(deprel_symbol(t.deprel, t.upos, direction, toks[t.head - 1].upos))
    return _seq(language, syms, "deprel", eos)


def to_phrase(tree: BracketTree, func_upos=DEFAULT_FUNC_UPOS, lexicon=None, language: str = "", *, eos: bool = False) -> SymbolSequence:
    """Linearize a constituency tree.

    Preterminal brackets are dropped: a terminal becomes its POS, or the
    lowercased word when the POS is a function class. A bare terminal whose
    parent is a phrase (not a preterminal) is tagged through ``lexicon``
    (form -> UPOS) if given, otherwise it is an error.
    """
    lexicon = lexicon or {}
    out: list[str] = []

    def terminal(word, pos):
        out.append(word.lower() if pos in func_upos else pos)

    def walk(node: BracketTree):
        if node.is_preterminal():
            terminal(node.children[0], node.label)
            return
        out.append("(")
        out.append(node.label)
        for child in node.children:
            if isinstance(child, str):
                pos = lexicon.get(child) or lexicon.get(child.lower())
                if pos is None:
                    raise AbstractionError(f"terminal {child!r} has no preterminal parent under ({node.label} ...)")
                terminal(child, pos)
            else:
                walk(child)
        out.append(")")

    walk(tree)
    return _seq(language, out, "phrase", eos)


def abstract_treebank(treebank: Treebank, level: str, func_upos=DEFAULT_FUNC_UPOS, *, raw_tokens=False) -> list[SymbolSequence]:
    """Apply one token-level transform to every sentence (``</s>`` appended)."""
    lang = treebank.language
    if level == "raw":
        return [to_raw(s, lang, tokens=raw_tokens, eos=True) for s in treebank.sentences]
    if level == "func":
        return [to_func_pos(s, func_upos, lang, eos=True) for s in treebank.sentences]
    if level == "pos":
        return [to_pos(s, lang, eos=True) for s in treebank.sentences]
    if level == "deprel":
        return [to_deprel(s, lang, eos=True) for s in treebank.sentences]
    if level == "phrase":
        raise AbstractionError("phrase level needs bracketed trees; use abstract_trees")
    raise AbstractionError(f"unknown level {level!r}")


def abstract_trees(trees, language: str, func_upos=DEFAULT_FUNC_UPOS, lexicon=None) -> list[SymbolSequence]:
    return [to_phrase(t, func_upos, lexicon, language, eos=True) for t in trees]


def vocabulary_census(sequences) -> Counter:
    """Count of every distinct symbol across sequences."""
    counts = Counter()
    for seq in sequences:
        counts.update(seq.symbols)
    return counts
