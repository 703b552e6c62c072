"""Command-line pipeline: manifest in, run directory of plain-text artifacts out.

Run directory layout::

    run.meta                       JSON: command, config path + hash, seed, settings, versions
    symbols/<level>/<lang>.txt     one sentence per line, symbols separated by spaces
    symbols/<level>/census.tsv     symbol counts
    model/<level>.npz              LM checkpoint
    vectors/<level>.csv            language vectors
    loss/<level>.csv               loss curve
    distances/<name>.csv           genetic, geographic, structural and one per level
    distances/structural_vectors.tsv
    trees/<name>.nwk               Ward trees for each level and the structural matrix
    baseline.csv                   random-tree scores
    tree_dist.csv                  tree distances to the gold tree
    correlations.csv, heatmap.txt
    samples.csv, sepsets.csv, causal.dot
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .abstraction import DEFAULT_FUNC_UPOS, EOS, LEVELS, AbstractionError, SymbolSequence, abstract_treebank, abstract_trees, vocabulary_census
from .causal import DEFAULT_VARIABLES, CITestConfig, CITestError, SampleTable, export_dot, ic_star
from .clustering import TreeMismatchError, random_tree_baseline, tree_distance, ward_cluster
from .corpus_io import (
    CorpusManifest,
    ParseError,
    ValidationError,
    load_manifest,
    read_bracketed,
    read_conllu,
    read_coordinates,
    read_newick,
)
from .distances import (
    DistanceError,
    DistanceMatrix,
    geo_distance,
    genetic_distance,
    struct_vectors_tsv,
    structural_distance,
    structural_vector,
)
from .langmodel import ModelError, TrainConfig, embedding_distance, train, vectors_from_csv, vectors_to_csv, write_loss_curve
from .stats import CorrelationError, correlation_table
from .tree import NewickError, emit_newick

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2  # argparse's own code
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_INPUT = 5
EXIT_COMPUTE = 6


class MissingArtifact(Exception):
    """An upstream file the stage depends on does not exist."""

    def __init__(self, path, hint):
        super().__init__(f"missing {path} ({hint})")


class ConfigError(Exception):
    pass


def _need(path: Path, hint: str) -> Path:
    if not path.exists():
        raise MissingArtifact(path, hint)
    return path


# run context ------------------------------------------------------------------


class Run:
    def __init__(self, args):
        self.out = Path(args.out)
        self.overrides = list(args.set or [])
        config = args.config
        meta_path = self.out / "run.meta"
        if config is None and meta_path.exists():
            config = json.loads(meta_path.read_text(encoding="utf-8"))["config"]
        if config is None:
            raise ConfigError("no --config given and no run.meta in the output directory")
        self.config_path = Path(config).resolve()
        if not self.config_path.exists():
            raise ConfigError(f"config file {self.config_path} does not exist")
        self.manifest: CorpusManifest = load_manifest(self.config_path)
        self._apply_overrides()
        self.seed = self.manifest.seed if args.seed is None else args.seed
        levels = getattr(args, "level", None) or self.manifest.levels
        bad = [lv for lv in levels if lv not in LEVELS]
        if bad:
            raise ConfigError(f"unknown level(s) {bad}; choose from {list(LEVELS)}")
        self.levels = list(levels)
        self.train_config = self._train_config()
        self.out.mkdir(parents=True, exist_ok=True)

    def _apply_overrides(self):
        sections = {"train": self.manifest.train, "causal": self.manifest.causal, "baseline": self.manifest.baseline}
        for item in self.overrides:
            key, sep, value = item.partition("=")
            section, dot, name = key.partition(".")
            if not sep or not dot or section not in sections:
                raise ConfigError(f"bad --set {item!r}; expected train.NAME=VALUE, causal.NAME=VALUE or baseline.NAME=VALUE")
            try:
                sections[section][name] = json.loads(value)
            except json.JSONDecodeError:
                sections[section][name] = value

    def _train_config(self) -> TrainConfig:
        raw = dict(self.manifest.train)
        preset = raw.pop("preset", None)
        known = {f.name for f in fields(TrainConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown train settings {sorted(unknown)}")
        raw["seed"] = self.seed
        try:
            if preset == "desk":
                return TrainConfig.desk(**raw)
            if preset not in (None, "default"):
                raise ConfigError(f"unknown train preset {preset!r}")
            return TrainConfig(**raw)
        except (TypeError, ModelError) as e:
            raise ConfigError(f"train settings: {e}") from None

    @property
    def func_upos(self):
        return frozenset(self.manifest.func_upos) if self.manifest.func_upos else DEFAULT_FUNC_UPOS

    def config_hash(self) -> str:
        h = hashlib.sha256(self.config_path.read_bytes())
        h.update(json.dumps(self.overrides).encode())
        return h.hexdigest()

    def write_meta(self, command):
        meta = {
            "command": command,
            "config": str(self.config_path),
            "config_sha256": self.config_hash(),
            "overrides": self.overrides,
            "seed": self.seed,
            "levels": self.levels,
            "train": asdict(self.train_config),
            "causal": self.manifest.causal,
            "baseline": self.manifest.baseline,
            "versions": {
                "langrep": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        }
        (self.out / "run.meta").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def write(self, rel, text):
        path = self.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return path

    def languages(self):
        return list(self.manifest.languages)

    def level_languages(self, level):
        """Languages with input for ``level``, in manifest order."""
        table = self.manifest.bracketed if level == "phrase" else self.manifest.conllu
        return [lang for lang in self.manifest.languages if lang in table]

    def gold(self):
        if self.manifest.gold_tree is None:
            raise ConfigError("manifest has no gold_tree")
        return read_newick(_need(self.manifest.gold_tree, "gold tree named in the manifest"))


def _log(msg):
    print(msg, file=sys.stderr)


# stages -----------------------------------------------------------------------


def cmd_abstract(run: Run):
    m = run.manifest
    for level in run.levels:
        seqs = []
        if level == "phrase":
            if not m.bracketed:
                raise ConfigError("level 'phrase' needs bracketed trees: add a [bracketed] table to the manifest")
            for lang in run.level_languages(level):
                seqs.append((lang, abstract_trees(read_bracketed(_need(m.bracketed[lang], "bracketed file")), lang, run.func_upos)))
        else:
            if not m.conllu:
                raise ConfigError(f"level {level!r} needs CoNLL-U treebanks: add a [conllu] table to the manifest")
            for lang in run.level_languages(level):
                tb = read_conllu(_need(m.conllu[lang], "CoNLL-U file"), lang)
                seqs.append((lang, abstract_treebank(tb, level, run.func_upos)))
        for lang, ss in seqs:
            lines = [" ".join(s.symbols[:-1] if s.symbols[-1] == EOS else s.symbols) for s in ss]
            run.write(f"symbols/{level}/{lang}.txt", "\n".join(lines) + "\n")
        census = vocabulary_census(s for _, ss in seqs for s in ss)
        run.write(f"symbols/{level}/census.tsv", "".join(f"{sym}\t{c}\n" for sym, c in sorted(census.items())))
        print(f"{level}: {len(census)} distinct symbols over {len(seqs)} languages")


def _read_symbols(run: Run, level) -> list[SymbolSequence]:
    seqs = []
    for lang in run.level_languages(level):
        path = _need(run.out / "symbols" / level / f"{lang}.txt", "run the 'abstract' stage first")
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                seqs.append(SymbolSequence(lang, tuple(line.split(" ")) + (EOS,), level))
    return seqs


def cmd_train(run: Run):
    for level in run.levels:
        seqs = _read_symbols(run, level)

        def progress(epoch, loss, _model, level=level):
            _log(f"[{level}] epoch {epoch}: loss {loss:.4f}")

        model, vectors, curve = train(seqs, run.train_config, progress=progress)
        (run.out / "model").mkdir(parents=True, exist_ok=True)
        model.save(run.out / "model" / f"{level}.npz")
        run.write(f"vectors/{level}.csv", vectors_to_csv(vectors))
        (run.out / "loss").mkdir(parents=True, exist_ok=True)
        write_loss_curve(curve, run.out / "loss" / f"{level}.csv")
        print(f"{level}: loss {curve[0]:.4f} -> {curve[-1]:.4f} after {len(curve) - 1} epochs")


def _read_vectors(run: Run, level):
    path = _need(run.out / "vectors" / f"{level}.csv", "run the 'train' stage first")
    return vectors_from_csv(path.read_text(encoding="utf-8"))


def cmd_distances(run: Run):
    m = run.manifest
    langs = run.languages()
    written = []
    if m.gold_tree is not None:
        gold = run.gold()
        leaves = set(gold.leaf_names())
        excluded = [lang for lang in langs if lang not in leaves]
        if excluded:
            print(f"genetic: excluding languages not in the gold tree: {' '.join(excluded)}")
        written.append(genetic_distance(gold, [lang for lang in langs if lang in leaves]))
    if m.coordinates is not None:
        written.append(geo_distance(read_coordinates(_need(m.coordinates, "coordinates file")), langs))
    tb_paths = m.treebank_paths()
    if tb_paths:
        svs = [structural_vector(read_conllu(_need(tb_paths[lang], "treebank"), lang)) for lang in langs if lang in tb_paths]
        run.write("distances/structural_vectors.tsv", struct_vectors_tsv(svs))
        written.append(structural_distance(svs))
    for level in run.levels:
        written.append(embedding_distance(_read_vectors(run, level), level))
    for d in written:
        run.write(f"distances/{d.label}.csv", d.to_csv())
    print("distances: " + ", ".join(d.label for d in written))


def _read_distance(run: Run, name) -> DistanceMatrix:
    path = _need(run.out / "distances" / f"{name}.csv", "run the 'distances' stage first")
    return DistanceMatrix.read(path, name)


def cmd_cluster(run: Run):
    names = []
    for level in run.levels:
        vecs = _read_vectors(run, level)
        tree = ward_cluster(embedding_distance(vecs, level))
        run.write(f"trees/{level}.nwk", emit_newick(tree) + "\n")
        names.append(level)
    if (run.out / "distances" / "structural.csv").exists():
        run.write("trees/structural.nwk", emit_newick(ward_cluster(_read_distance(run, "structural"))) + "\n")
        names.append("structural")
    print("trees: " + ", ".join(names))


def _baseline_params(run: Run):
    b = dict(run.manifest.baseline)
    trials, workers = int(b.pop("trials", 1000)), int(b.pop("workers", 1))
    if b:
        raise ConfigError(f"unknown baseline settings {sorted(b)}")
    return trials, workers


def cmd_baseline(run: Run):
    trials, workers = _baseline_params(run)
    res = random_tree_baseline(run.gold(), trials=trials, seed=run.seed, workers=workers)
    run.write("baseline.csv", "trial,normalized\n" + "".join(f"{i},{v:.9g}\n" for i, v in enumerate(res.samples)))
    print(f"random baseline over {trials} trees: {res.mean:.4f} ± {res.std:.4f}")
    return res


def _read_baseline(run: Run):
    path = run.out / "baseline.csv"
    if not path.exists():
        return None
    rows = path.read_text(encoding="utf-8").splitlines()[1:]
    return np.array([float(r.split(",")[1]) for r in rows if r])


def cmd_tree_dist(run: Run):
    gold = run.gold()
    tree_files = sorted((run.out / "trees").glob("*.nwk")) if (run.out / "trees").exists() else []
    if not tree_files:
        raise MissingArtifact(run.out / "trees", "run the 'cluster' stage first")
    samples = _read_baseline(run)
    lines = ["tree,raw,normalized,baseline_mean,baseline_std,percentile"]
    if samples is not None:
        mean, std = samples.mean(), samples.std(ddof=1)
        print(f"random baseline: {mean:.4f} ± {std:.4f} (n={len(samples)})")
    for path in tree_files:
        tree = read_newick(path)
        common = [lang for lang in gold.leaf_names() if lang in set(tree.leaf_names())]
        g = gold.restricted(common) if len(common) < len(gold.leaf_names()) else gold
        extra = sorted(set(tree.leaf_names()) - set(common))
        if extra:
            print(f"{path.stem}: scoring without languages absent from the gold tree: {' '.join(extra)}")
            tree = tree.restricted(common)
        raw, norm = tree_distance(g, tree), tree_distance(g, tree, normalize=True)
        if samples is not None:
            pct = 100.0 * float(np.mean(samples <= norm))
            lines.append(f"{path.stem},{raw:.9g},{norm:.9g},{mean:.9g},{std:.9g},{pct:.9g}")
            print(f"{path.stem}: Dist {norm:.4f} (raw {raw:.4f}), percentile {pct:.1f}")
        else:
            lines.append(f"{path.stem},{raw:.9g},{norm:.9g},,,")
            print(f"{path.stem}: Dist {norm:.4f} (raw {raw:.4f})")
    run.write("tree_dist.csv", "\n".join(lines) + "\n")


def _distance_names(run: Run):
    fixed = [n for n in ("genetic", "geographic", "structural") if (run.out / "distances" / f"{n}.csv").exists()]
    return fixed + list(run.levels)


def _aligned(run: Run, names) -> dict[str, DistanceMatrix]:
    """Read matrices and restrict them to the languages they all cover."""
    matrices = {name: _read_distance(run, name) for name in names}
    common = [lang for lang in run.languages() if all(lang in m.languages for m in matrices.values())]
    if len(common) < 3:
        raise ConfigError(f"only {len(common)} languages are shared by {sorted(matrices)}; need at least 3")
    return {name: m.reorder(common) for name, m in matrices.items()}


def cmd_correlate(run: Run):
    perms = int(run.manifest.causal.get("mantel_permutations", 999))
    matrices = _aligned(run, _distance_names(run))
    table = correlation_table(matrices, mantel_permutations=perms, seed=run.seed)
    run.write("correlations.csv", table.to_csv())
    run.write("heatmap.txt", table.heatmap())
    print(table.heatmap(), end="")


def cmd_causal(run: Run):
    c = dict(run.manifest.causal)
    c.pop("mantel_permutations", None)
    variables = c.pop("variables", None) or [v for v in DEFAULT_VARIABLES if v in _distance_names(run)]
    try:
        config = CITestConfig(**c)
    except TypeError as e:
        raise ConfigError(f"causal settings: {e}") from None
    table = SampleTable.from_matrices(_aligned(run, variables))
    g = ic_star(table, config)
    run.write("samples.csv", table.to_csv())
    run.write("sepsets.csv", g.sepsets_csv())
    run.write("causal.dot", export_dot(g))
    print(f"IC* over {len(variables)} variables and {table.n} language pairs; note: {SampleTable.CAVEAT}")
    for s, t, mark in g.edges():
        print(f"  {s} - {t}: {mark}")


STAGES = {
    "abstract": cmd_abstract,
    "train": cmd_train,
    "distances": cmd_distances,
    "cluster": cmd_cluster,
    "baseline": cmd_baseline,
    "tree-dist": cmd_tree_dist,
    "correlate": cmd_correlate,
    "causal": cmd_causal,
}


def cmd_pipeline(run: Run):
    for name, stage in STAGES.items():
        _log(f"== {name}")
        stage(run)


# entry point ------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="langrep", description="Language representations from multilingual language models.")
    p.add_argument("--config", help="manifest TOML (default: the one recorded in OUT/run.meta)")
    p.add_argument("--out", default="run", help="run directory (default: ./run)")
    p.add_argument("--seed", type=int, help="master seed (default: the manifest's)")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a train/causal/baseline setting")
    p.add_argument("--version", action="version", version=f"langrep {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "abstract": "rewrite corpora into symbol sequences",
        "train": "train one language model per level",
        "distances": "genetic, geographic, structural and embedding distances",
        "cluster": "Ward trees from language vectors",
        "baseline": "random-tree baseline against the gold tree",
        "tree-dist": "score trees against the gold tree",
        "correlate": "Spearman correlations between distance matrices",
        "causal": "IC* over the distance variables",
        "pipeline": "run every stage in order",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        if name in ("abstract", "train", "distances", "cluster", "correlate", "causal", "pipeline"):
            sp.add_argument("--level", action="append", choices=LEVELS, help="restrict to these levels (repeatable)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = Run(args)
        (cmd_pipeline if args.command == "pipeline" else STAGES[args.command])(run)
        run.write_meta(args.command)
    except MissingArtifact as e:
        _log(f"error: {e}")
        return EXIT_MISSING
    except (ConfigError, ValidationError, AbstractionError, ModelError) as e:
        _log(f"error: {e}")
        return EXIT_CONFIG
    except (ParseError, NewickError) as e:
        _log(f"error: {e}")
        return EXIT_INPUT
    except (DistanceError, CorrelationError, CITestError, TreeMismatchError) as e:
        _log(f"error: {e}")
        return EXIT_COMPUTE
    except FileNotFoundError as e:
        _log(f"error: {e}")
        return EXIT_MISSING
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
