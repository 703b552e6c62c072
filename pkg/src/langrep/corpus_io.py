"""Readers for annotated corpora, constituency trees, coordinates and run manifests."""

from __future__ import annotations

import csv
import io
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .tree import DendroTree, NewickError, parse_newick

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "BracketTree",
    "CorpusError",
    "CorpusManifest",
    "ParseError",
    "Sentence",
    "Token",
    "Treebank",
    "ValidationError",
    "load_manifest",
    "parse_bracketed",
    "parse_conllu",
    "parse_newick",
    "read_coordinates",
    "NewickError",
]


class CorpusError(ValueError):
    pass


class ParseError(CorpusError):
    pass


class ValidationError(CorpusError):
    pass


@dataclass(frozen=True)
class Token:
    index: int
    form: str
    upos: str
    head: int
    deprel: str

    def __post_init__(self):
        if self.index < 1:
            raise ValidationError(f"token index {self.index} < 1")
        if self.head < 0:
            raise ValidationError(f"token {self.index}: negative head {self.head}")
        if self.head == self.index:
            raise ValidationError(f"token {self.index} is its own head")
        if not self.upos or not self.deprel:
            raise ValidationError(f"token {self.index}: empty UPOS or deprel")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    sent_id: str | None = None

    def __post_init__(self):
        n = len(self.tokens)
        where = f"sentence {self.sent_id}" if self.sent_id else "sentence"
        if n == 0:
            raise ValidationError(f"{where}: no tokens")
        for pos, tok in enumerate(self.tokens, 1):
            if tok.index != pos:
                raise ValidationError(f"{where}: token indices not contiguous at {tok.index}")
            if tok.head > n:
                raise ValidationError(f"{where}: head {tok.head} of token {tok.index} out of range 0..{n}")
        if not any(t.head == 0 for t in self.tokens):
            raise ValidationError(f"{where}: no root token")

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class Treebank:
    language: str
    sentences: tuple[Sentence, ...]

    def __post_init__(self):
        if not self.language:
            raise ValidationError("treebank language is empty")
        if not self.sentences:
            raise ValidationError(f"treebank {self.language}: no sentences")


_SENT_ID = re.compile(r"#\s*sent_id\s*=\s*(.*\S)")


def parse_conllu(text: str, language: str) -> Treebank:
    """Parse CoNLL-U text into a validated :class:`Treebank`.

    Only ID, FORM, UPOS, HEAD and DEPREL are kept. Multiword-token ranges
    (``3-4``) and empty nodes (``5.1``) are dropped.
    """
    sentences = []
    rows: list[Token] = []
    sent_id = None
    start_line = 1

    def flush():
        nonlocal rows, sent_id
        if rows:
            try:
                sentences.append(Sentence(tuple(rows), sent_id or f"line {start_line}"))
            except ValidationError as e:
                raise ValidationError(f"{language}: {e}") from None
        rows = []
        sent_id = None

    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.rstrip("\r")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            m = _SENT_ID.match(line)
            if m:
                sent_id = m.group(1)
            continue
        if not rows:
            start_line = lineno
        cols = line.split("\t")
        if len(cols) != 10:
            raise ParseError(f"line {lineno}: expected 10 tab-separated columns, got {len(cols)}")
        tid = cols[0]
        if "-" in tid or "." in tid:
            continue
        try:
            index, head = int(tid), int(cols[6])
        except ValueError:
            raise ParseError(f"line {lineno}: non-integer ID or HEAD ({tid!r}, {cols[6]!r})") from None
        try:
            rows.append(Token(index, cols[1], cols[3], head, cols[7]))
        except ValidationError as e:
            raise ValidationError(f"line {lineno}: {e}") from None
    flush()
    if not sentences:
        raise ParseError("no sentences")
    return Treebank(language, tuple(sentences))


def read_conllu(path, language: str) -> Treebank:
    return parse_conllu(Path(path).read_text(encoding="utf-8"), language)


def write_conllu(treebank: Treebank) -> str:
    """Minimal CoNLL-U writer (unused columns are ``_``)."""
    out = []
    for sent in treebank.sentences:
        if sent.sent_id:
            out.append(f"# sent_id = {sent.sent_id}")
        for t in sent.tokens:
            out.append("\t".join([str(t.index), t.form, "_", t.upos, "_", "_", str(t.head), t.deprel, "_", "_"]))
        out.append("")
    return "\n".join(out) + "\n"


# Bracketed trees ------------------------------------------------------------


@dataclass
class BracketTree:
    label: str
    children: list[BracketTree | str] = field(default_factory=list)

    def is_preterminal(self):
        return len(self.children) == 1 and isinstance(self.children[0], str)

    def __str__(self):
        inner = " ".join(c if isinstance(c, str) else str(c) for c in self.children)
        return f"({self.label} {inner})" if inner else f"({self.label})"


_BRACKET_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def _parse_one_bracketed(line: str, lineno: int) -> BracketTree:
    stack: list[BracketTree] = []
    root = None
    expect_label = False
    for m in _BRACKET_TOKEN.finditer(line):
        tok, pos = m.group(), m.start()
        where = f"line {lineno}, column {pos + 1}"
        if expect_label:
            if tok in "()":
                raise ParseError(f"{where}: expected label after '('")
            node = BracketTree(tok)
            if stack:
                stack[-1].children.append(node)
            elif root is not None:
                raise ParseError(f"{where}: more than one tree on the line")
            else:
                root = node
            stack.append(node)
            expect_label = False
        elif tok == "(":
            expect_label = True
        elif tok == ")":
            if not stack:
                raise ParseError(f"{where}: unbalanced parentheses (extra ')')")
            node = stack.pop()
            if not node.children:
                raise ValidationError(f"{where}: empty constituent ({node.label})")
        else:
            if not stack:
                raise ParseError(f"{where}: terminal {tok!r} outside any constituent")
            stack[-1].children.append(tok)
    if expect_label or stack:
        raise ParseError(f"line {lineno}, column {len(line)}: unbalanced parentheses (missing ')')")
    if root is None:
        raise ParseError(f"line {lineno}: no tree")
    return root


def parse_bracketed(text: str) -> list[BracketTree]:
    """Parse PTB-style trees, one per non-blank line."""
    trees = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.strip():
            trees.append(_parse_one_bracketed(line, lineno))
    return trees


def read_bracketed(path) -> list[BracketTree]:
    return parse_bracketed(Path(path).read_text(encoding="utf-8"))


# Gold tree and coordinates --------------------------------------------------


def read_newick(path) -> DendroTree:
    return parse_newick(Path(path).read_text(encoding="utf-8"))


def parse_coordinates(text: str) -> dict[str, tuple[float, float]]:
    """Parse ``lang,lat,lon`` CSV (a header row is optional)."""
    table = {}
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), 1):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 3:
            raise ParseError(f"coordinates line {lineno}: expected lang,lat,lon")
        lang, lat, lon = (c.strip() for c in row)
        try:
            lat_f, lon_f = float(lat), float(lon)
        except ValueError:
            if lineno == 1:
                continue  # header
            raise ParseError(f"coordinates line {lineno}: non-numeric coordinate") from None
        if not (-90 <= lat_f <= 90 and -180 <= lon_f <= 180):
            raise ValidationError(f"coordinates line {lineno}: ({lat_f}, {lon_f}) out of range")
        if lang in table:
            raise ValidationError(f"coordinates line {lineno}: duplicate language {lang}")
        table[lang] = (lat_f, lon_f)
    return table


def read_coordinates(path) -> dict[str, tuple[float, float]]:
    return parse_coordinates(Path(path).read_text(encoding="utf-8"))


# Manifest -------------------------------------------------------------------

RESOURCES = ("conllu", "bracketed", "structural")


@dataclass
class CorpusManifest:
    """Run manifest, read from TOML. See README for the schema."""

    languages: list[str]
    conllu: dict[str, Path] = field(default_factory=dict)
    bracketed: dict[str, Path] = field(default_factory=dict)
    structural: dict[str, Path] = field(default_factory=dict)
    gold_tree: Path | None = None
    coordinates: Path | None = None
    seed: int = 0
    levels: list[str] = field(default_factory=lambda: ["pos", "deprel"])
    func_upos: list[str] | None = None
    missing: dict[str, list[str]] = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    causal: dict = field(default_factory=dict)
    baseline: dict = field(default_factory=dict)
    path: Path | None = None

    def treebank_paths(self) -> dict[str, Path]:
        """CoNLL-U files for structural vectors; falls back to the LM corpus."""
        return self.structural or self.conllu


def load_manifest(path) -> CorpusManifest:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as e:
        raise ParseError(f"{path}: {e}") from None
    return manifest_from_dict(raw, base=path.parent, path=path)


def manifest_from_dict(raw: dict, base: Path = Path("."), path: Path | None = None) -> CorpusManifest:
    raw = dict(raw)
    languages = raw.pop("languages", None)
    if not languages or not all(isinstance(x, str) and x for x in languages):
        raise ValidationError("manifest: 'languages' must be a non-empty list of IDs")
    if len(set(languages)) != len(languages):
        raise ValidationError("manifest: duplicate language IDs")

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    kwargs = {}
    for res in RESOURCES:
        table = raw.pop(res, {})
        if not isinstance(table, dict):
            raise ValidationError(f"manifest: [{res}] must be a table of lang = path")
        kwargs[res] = {lang: resolve(p) for lang, p in table.items()}
    for key in ("gold_tree", "coordinates"):
        if key in raw:
            kwargs[key] = resolve(raw.pop(key))
    known = {"seed", "levels", "func_upos", "missing", "train", "causal", "baseline"}
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"manifest: unknown keys {sorted(unknown)}")
    kwargs.update(raw)
    m = CorpusManifest(languages=list(languages), path=path, **kwargs)

    for res in RESOURCES:
        table = getattr(m, res)
        if not table:
            continue
        missing = set(m.missing.get(res, []))
        extra = set(table) - set(languages)
        if extra:
            raise ValidationError(f"manifest: [{res}] lists undeclared languages {sorted(extra)}")
        absent = [lang for lang in languages if lang not in table and lang not in missing]
        if absent:
            raise ValidationError(
                f"manifest: [{res}] has no entry for {absent}; add them or list them under missing.{res}"
            )
    return m
