"""Multilingual next-symbol LSTM language model with learned language vectors.

Every input step feeds ``concat(symbol_embedding, language_embedding)`` to a
two-layer LSTM; a softmax layer predicts the next symbol. The language
embedding table is trained with everything else, and its rows are the
language vectors used downstream.

Everything runs in float64 numpy on one thread, so a fixed seed reproduces
the loss curve and the vectors bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .abstraction import EOS
from .distances import DistanceMatrix, embedding_distance as _embedding_distance

UNK = "<unk>"
CHECKPOINT_VERSION = "langrep-lm/1"


class ModelError(ValueError):
    pass


@dataclass
class TrainConfig:
    lang_dim: int = 64
    sym_dim: int = 128
    hidden: int = 256
    lr: float = 1.0
    batch_size: int = 32
    seq_len: int = 35
    epochs: int = 10
    seed: int = 0
    clip: float = 5.0
    init_scale: float = 0.1
    lang_init_std: float = 0.1
    lang_all_layers: bool = False
    lang_decay: float = 0.0  # L2 penalty on language vectors
    min_freq: int | None = None  # None: 2 for the raw level, 1 otherwise

    def __post_init__(self):
        for name in ("lang_dim", "sym_dim", "hidden", "batch_size", "seq_len", "epochs"):
            if int(getattr(self, name)) < 1:
                raise ModelError(f"{name} must be positive")
        for name in ("lr", "clip", "init_scale", "lang_init_std"):
            if not getattr(self, name) > 0:
                raise ModelError(f"{name} must be positive")

    @classmethod
    def desk(cls, **overrides):
        """Small preset for tests and the bundled fixture."""
        base = dict(lang_dim=8, sym_dim=16, hidden=32, seq_len=20, batch_size=16)
        base.update(overrides)
        return cls(**base)


class Vocab:
    def __init__(self, symbols):
        rest = sorted(set(symbols) - {UNK, EOS})
        self.symbols = [UNK, EOS, *rest]
        self.index = {s: i for i, s in enumerate(self.symbols)}

    @classmethod
    def build(cls, sequences, min_freq=1):
        counts = Counter()
        for seq in sequences:
            counts.update(seq.symbols)
        return cls(s for s, c in counts.items() if c >= min_freq)

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, symbol):
        return symbol in self.index

    def encode(self, symbols):
        unk = self.index[UNK]
        return [self.index.get(s, unk) for s in symbols]


@dataclass(frozen=True)
class LanguageVector:
    language: str
    vec: np.ndarray


def vectors_to_csv(vectors) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    k = len(vectors[0].vec)
    w.writerow(["lang", *(f"v{i + 1}" for i in range(k))])
    for v in vectors:
        w.writerow([v.language, *(repr(float(x)) for x in v.vec)])
    return buf.getvalue()


def vectors_from_csv(text: str) -> list[LanguageVector]:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    return [LanguageVector(r[0], np.array([float(x) for x in r[1:]])) for r in rows[1:]]


# LSTM layer -------------------------------------------------------------------


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_forward(X, Wx, Wh, b):
    """X: (B, T, D). Gate order in the weight rows is i, f, o, g."""
    B, T, _ = X.shape
    H = Wh.shape[1]
    pre = X @ Wx.T + b
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((B, T, H))
    cache = []
    for t in range(T):
        a = pre[:, t] + h @ Wh.T
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H : 2 * H])
        o = _sigmoid(a[:, 2 * H : 3 * H])
        g = np.tanh(a[:, 3 * H :])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, t] = h
        cache.append((i, f, o, g, c_prev, tc, h_prev))
    return hs, cache


def lstm_backward(dH, X, Wx, Wh, cache):
    B, T, _ = dH.shape
    H = Wh.shape[1]
    dA = np.empty((B, T, 4 * H))
    dWh = np.zeros_like(Wh)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in reversed(range(T)):
        i, f, o, g, c_prev, tc, h_prev = cache[t]
        dh = dH[:, t] + dh_next
        dc = dc_next + dh * o * (1 - tc * tc)
        da = np.concatenate(
            [dc * g * i * (1 - i), dc * c_prev * f * (1 - f), dh * tc * o * (1 - o), dc * i * (1 - g * g)],
            axis=1,
        )
        dA[:, t] = da
        dWh += da.T @ h_prev
        dh_next = da @ Wh
        dc_next = dc * f
    flat = dA.reshape(B * T, 4 * H)
    dWx = flat.T @ X.reshape(B * T, -1)
    db = flat.sum(axis=0)
    dX = dA @ Wx
    return dX, dWx, dWh, db


# Model ------------------------------------------------------------------------


@dataclass
class Batch:
    langs: np.ndarray  # (B,)
    inputs: np.ndarray  # (B, T) symbol ids
    targets: np.ndarray  # (B, T)
    mask: np.ndarray  # (B, T) 1.0 where a target counts

    def __len__(self):
        return len(self.langs)


@dataclass
class LanguageModel:
    vocab: Vocab
    languages: list[str]
    params: dict[str, np.ndarray]
    config: TrainConfig
    level: str = ""
    loss_curve: list[float] = field(default_factory=list)

    PARAM_ORDER = ("E_sym", "E_lang", "W1x", "W1h", "b1", "W2x", "W2h", "b2", "W_out", "b_out")

    @classmethod
    def initialize(cls, vocab, languages, config: TrainConfig, level="", rng=None):
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        V, L, k, ds, H = len(vocab), len(languages), config.lang_dim, config.sym_dim, config.hidden
        s = config.init_scale
        in2 = H + (k if config.lang_all_layers else 0)

        def u(*shape):
            return rng.uniform(-s, s, size=shape)

        p = {
            "E_sym": u(V, ds),
            "E_lang": rng.normal(0.0, config.lang_init_std, size=(L, k)),
            "W1x": u(4 * H, ds + k),
            "W1h": u(4 * H, H),
            "b1": np.zeros(4 * H),
            "W2x": u(4 * H, in2),
            "W2h": u(4 * H, H),
            "b2": np.zeros(4 * H),
            "W_out": u(V, H),
            "b_out": np.zeros(V),
        }
        for b in ("b1", "b2"):
            p[b][H : 2 * H] = 1.0  # forget gate bias
        return cls(vocab, list(languages), p, config, level)

    def check(self):
        p, V, L = self.params, len(self.vocab), len(self.languages)
        k, H = p["E_lang"].shape[1], p["W1h"].shape[1]
        ds = p["E_sym"].shape[1]
        in2 = H + (k if self.config.lang_all_layers else 0)
        want = {
            "E_sym": (V, ds), "E_lang": (L, k), "W1x": (4 * H, ds + k), "W1h": (4 * H, H), "b1": (4 * H,),
            "W2x": (4 * H, in2), "W2h": (4 * H, H), "b2": (4 * H,), "W_out": (V, H), "b_out": (V,),
        }  # fmt: skip
        for name, shape in want.items():
            if p[name].shape != shape:
                raise ModelError(f"parameter {name} has shape {p[name].shape}, expected {shape}")
            if not np.all(np.isfinite(p[name])):
                raise ModelError(f"parameter {name} has non-finite entries")

    # forward / backward

    def _forward(self, batch: Batch, keep=True):
        p = self.params
        lang = p["E_lang"][batch.langs]  # (B, k)
        B, T = batch.inputs.shape
        lang_t = np.broadcast_to(lang[:, None, :], (B, T, lang.shape[1]))
        X1 = np.concatenate([p["E_sym"][batch.inputs], lang_t], axis=2)
        H1, c1 = lstm_forward(X1, p["W1x"], p["W1h"], p["b1"])
        X2 = np.concatenate([H1, lang_t], axis=2) if self.config.lang_all_layers else H1
        H2, c2 = lstm_forward(X2, p["W2x"], p["W2h"], p["b2"])
        logits = H2 @ p["W_out"].T + p["b_out"]
        logits -= logits.max(axis=2, keepdims=True)
        expl = np.exp(logits)
        probs = expl / expl.sum(axis=2, keepdims=True)
        logp = logits - np.log(expl.sum(axis=2, keepdims=True))
        tgt = np.take_along_axis(logp, batch.targets[..., None], axis=2)[..., 0]
        count = batch.mask.sum()
        loss = float(-(tgt * batch.mask).sum() / count)
        if not keep:
            return loss, probs
        return loss, (X1, c1, X2, c2, H2, probs, count)

    def loss(self, batch: Batch) -> float:
        return self._forward(batch, keep=False)[0]

    def loss_and_grads(self, batch: Batch):
        p = self.params
        loss, (X1, c1, X2, c2, H2, probs, count) = self._forward(batch)
        B, T = batch.inputs.shape
        dlogits = probs.copy()
        np.put_along_axis(dlogits, batch.targets[..., None], np.take_along_axis(dlogits, batch.targets[..., None], axis=2) - 1.0, axis=2)
        dlogits *= (batch.mask / count)[..., None]
        g = {}
        g["W_out"] = dlogits.reshape(B * T, -1).T @ H2.reshape(B * T, -1)
        g["b_out"] = dlogits.sum(axis=(0, 1))
        dH2 = dlogits @ p["W_out"]
        dX2, g["W2x"], g["W2h"], g["b2"] = lstm_backward(dH2, X2, p["W2x"], p["W2h"], c2)
        H = p["W1h"].shape[1]
        dH1 = dX2[:, :, :H]
        dlang = np.zeros((B, p["E_lang"].shape[1]))
        if self.config.lang_all_layers:
            dlang += dX2[:, :, H:].sum(axis=1)
        dX1, g["W1x"], g["W1h"], g["b1"] = lstm_backward(dH1, X1, p["W1x"], p["W1h"], c1)
        ds = p["E_sym"].shape[1]
        dlang += dX1[:, :, ds:].sum(axis=1)
        g["E_sym"] = np.zeros_like(p["E_sym"])
        np.add.at(g["E_sym"], batch.inputs, dX1[:, :, :ds])
        g["E_lang"] = np.zeros_like(p["E_lang"])
        np.add.at(g["E_lang"], batch.langs, dlang)
        return loss, g

    # inference

    def language_index(self, language):
        try:
            return self.languages.index(language)
        except ValueError:
            raise ModelError(f"unknown language {language!r}") from None

    def next_distribution(self, language: str, prefix) -> np.ndarray:
        """P(next symbol | prefix) over ``self.vocab.symbols``; the state starts at zero."""
        li = self.language_index(language)
        ids = self.vocab.encode(list(prefix)) or [self.vocab.index[EOS]]
        inputs = np.array([ids])
        batch = Batch(np.array([li]), inputs, np.zeros_like(inputs), np.ones(inputs.shape))
        _, probs = self._forward(batch, keep=False)
        return probs[0, -1]

    def language_vectors(self) -> list[LanguageVector]:
        return [LanguageVector(lang, self.params["E_lang"][i].copy()) for i, lang in enumerate(self.languages)]

    # persistence

    def save(self, path):
        meta = {
            "version": CHECKPOINT_VERSION,
            "level": self.level,
            "languages": self.languages,
            "vocab": self.vocab.symbols,
            "config": asdict(self.config),
            "shapes": {k: list(v.shape) for k, v in self.params.items()},
            "loss_curve": self.loss_curve,
        }
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **self.params)

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["__meta__"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ModelError(f"{path}: unsupported checkpoint version {meta.get('version')!r}")
            params = {k: z[k].copy() for k in cls.PARAM_ORDER}
        for k, shape in meta["shapes"].items():
            if list(params[k].shape) != shape:
                raise ModelError(f"{path}: {k} shape {params[k].shape} disagrees with header {shape}")
        vocab = Vocab([])
        vocab.symbols = meta["vocab"]
        vocab.index = {s: i for i, s in enumerate(vocab.symbols)}
        model = cls(vocab, meta["languages"], params, TrainConfig(**meta["config"]), meta["level"], meta["loss_curve"])
        model.check()
        return model


# Data -------------------------------------------------------------------------


def make_segments(model: LanguageModel, sequences, seq_len: int):
    """Cut each language's symbol stream into windows of ``seq_len`` predictions.

    A stream is ``</s>`` followed by the language's sequences, each ending in
    ``</s>``. Returns a list of (language index, ids) with ``len(ids) <= seq_len + 1``.
    """
    eos = model.vocab.index[EOS]
    streams: dict[int, list[int]] = {}
    for seq in sequences:
        li = model.language_index(seq.language)
        ids = model.vocab.encode(seq.symbols)
        if not ids or ids[-1] != eos:
            ids.append(eos)
        streams.setdefault(li, [eos]).extend(ids)
    segments = []
    for li in sorted(streams):
        s = streams[li]
        for start in range(0, len(s) - 1, seq_len):
            segments.append((li, s[start : start + seq_len + 1]))
    return segments


def collate(segments) -> Batch:
    T = max(len(ids) for _, ids in segments) - 1
    B = len(segments)
    inputs = np.zeros((B, T), dtype=np.int64)
    targets = np.zeros((B, T), dtype=np.int64)
    mask = np.zeros((B, T))
    for r, (_, ids) in enumerate(segments):
        n = len(ids) - 1
        inputs[r, :n] = ids[:-1]
        targets[r, :n] = ids[1:]
        mask[r, :n] = 1.0
    return Batch(np.array([li for li, _ in segments]), inputs, targets, mask)


def evaluate(model: LanguageModel, segments, batch_size=256) -> float:
    """Mean per-symbol cross-entropy (nats) over all segments."""
    total = count = 0.0
    for start in range(0, len(segments), batch_size):
        b = collate(segments[start : start + batch_size])
        n = b.mask.sum()
        total += model.loss(b) * n
        count += n
    return total / count


# Training ---------------------------------------------------------------------


def _clip(grads, max_norm):
    norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def train(sequences, config: TrainConfig | None = None, *, progress=None):
    """Train from scratch with plain SGD and global-norm clipping.

    Returns ``(model, language_vectors, loss_curve)``. ``loss_curve[0]`` is the
    full-data cross-entropy at initialization and ``loss_curve[e]`` the value
    after epoch ``e``.
    """
    config = config or TrainConfig()
    sequences = list(sequences)
    if not sequences:
        raise ModelError("no training sequences")
    levels = {s.level for s in sequences}
    if len(levels) != 1:
        raise ModelError(f"mixed abstraction levels {sorted(levels)}")
    level = levels.pop()
    languages = list(dict.fromkeys(s.language for s in sequences))
    if len(languages) < 2:
        raise ModelError("need at least two languages: a single language vector is not identifiable")
    min_freq = config.min_freq if config.min_freq is not None else (2 if level == "raw" else 1)
    vocab = Vocab.build(sequences, min_freq)
    rng = np.random.default_rng(config.seed)
    model = LanguageModel.initialize(vocab, languages, config, level, rng)
    segments = make_segments(model, sequences, config.seq_len)
    curve = [evaluate(model, segments)]
    for epoch in range(config.epochs):
        order = rng.permutation(len(segments))
        for start in range(0, len(order), config.batch_size):
            batch = collate([segments[i] for i in order[start : start + config.batch_size]])
            _, grads = model.loss_and_grads(batch)
            _clip(grads, config.clip)
            if config.lang_decay:
                grads["E_lang"] += config.lang_decay * model.params["E_lang"]
            for name, g in grads.items():
                model.params[name] -= config.lr * g
        curve.append(evaluate(model, segments))
        if progress:
            progress(epoch + 1, curve[-1], model)
    model.check()
    model.loss_curve = curve
    return model, model.language_vectors(), curve


def embedding_distance(vectors, label="embedding") -> DistanceMatrix:
    """Cosine distance matrix between language vectors."""
    return _embedding_distance(vectors, label)


# Gradient check -----------------------------------------------------------------


def grad_check(model: LanguageModel, batch: Batch, epsilon: float = 1e-5, n_coords: int = 100, seed: int = 0) -> float:
    """Max relative error between backprop and central differences.

    Coordinates are drawn across all parameter arrays. The relative error is
    ``|a - n| / max(|a|, |n|, 1e-6)``; the floor keeps exactly-zero
    gradients from dividing by zero.
    """
    if not epsilon > 0:
        raise ModelError("epsilon must be positive")
    _, grads = model.loss_and_grads(batch)
    rng = np.random.default_rng(seed)
    names = list(model.PARAM_ORDER)
    per = max(1, -(-n_coords // len(names)))
    worst = 0.0
    for name in names:
        arr = model.params[name]
        flat = arr.reshape(-1)
        for idx in rng.choice(flat.size, size=min(per, flat.size), replace=False):
            old = flat[idx]
            flat[idx] = old + epsilon
            up = model.loss(batch)
            flat[idx] = old - epsilon
            down = model.loss(batch)
            flat[idx] = old
            num = (up - down) / (2 * epsilon)
            ana = grads[name].reshape(-1)[idx]
            err = abs(ana - num) / max(abs(ana), abs(num), 1e-6)
            worst = max(worst, err)
    return worst


def grad_norm(model: LanguageModel, batch: Batch) -> float:
    _, grads = model.loss_and_grads(batch)
    return math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))


def write_loss_curve(curve, path):
    Path(path).write_text("epoch,loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(curve)), encoding="utf-8")
