"""Hashed n-gram featurizer and a one-hidden-layer text classifier.

The model is an embedding bag over FNV-1a hashed n-grams, followed by a
tanh layer that yields the sample representation ``v`` and a softmax
head that yields class probabilities::

    h = mean of bucket embeddings (count weighted)
    v = tanh(h W1 + b1)
    probs = softmax(dropout(v) W2 + b2)

Forward and backward run on a whole batch at once.  All training math
is float64.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import scipy.sparse as sp

from .dataset import PAIR, SEQUENCE, TOKEN

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class EncoderConfig:
    hash_buckets: int = 1 << 14
    embed_dim: int = 32
    repr_dim: int = 32
    dropout_rate: float = 0.1
    ngram_orders: tuple[int, ...] = (1, 2)
    window: int = 2

    def __post_init__(self):
        object.__setattr__(self, "ngram_orders", tuple(sorted(set(self.ngram_orders))))
        for name in ("hash_buckets", "embed_dim", "repr_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if not self.ngram_orders or min(self.ngram_orders) < 1:
            raise ValueError("ngram_orders must be positive integers")
        if self.window < 0:
            raise ValueError("window must be >= 0")


def fnv1a_64(s: str) -> int:
    h = FNV_OFFSET
    for byte in s.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def tokenize(text: str) -> list[str]:
    return text.lower().split()


@dataclass
class UnitFeatures:
    counts: dict[int, int]
    kind: str = SEQUENCE


def _ngrams(tokens, orders, prefix=""):
    for n in orders:
        for i in range(len(tokens) - n + 1):
            yield prefix + " ".join(tokens[i:i + n])


def _bag(strings, buckets) -> dict[int, int]:
    counts: dict[int, int] = {}
    for s in strings:
        b = fnv1a_64(s) % buckets
        counts[b] = counts.get(b, 0) + 1
    return counts


def _token_strings(tokens, i, window):
    # position-tagged context window around token i
    out = []
    for off in range(-window, window + 1):
        j = i + off
        tok = tokens[j] if 0 <= j < len(tokens) else ("<s>" if j < 0 else "</s>")
        out.append(f"{off}|{tok}")
    out.append(tokens[i])
    return out


def _pair_strings(a, b, orders):
    out = list(_ngrams(a, orders, "a|")) + list(_ngrams(b, orders, "b|"))
    # features that cross the sentence boundary
    out.append(f"x|{a[-1]} {b[0]}")
    out.extend(f"both|{t}" for t in sorted(set(a) & set(b)))
    return out


def featurize(text, task_kind: str = SEQUENCE, config: EncoderConfig | None = None,
              text_b: str | None = None) -> list[UnitFeatures]:
    """Hash a text (or a sentence pair, or a token sequence) into feature units.

    Sequence and pair tasks yield one unit.  Token tasks yield one unit
    per token; ``text`` may then be a string or a list of tokens.
    """
    config = config or EncoderConfig()
    tokens = tokenize(text) if isinstance(text, str) else [t.lower() for t in text]
    if not tokens:
        raise ValueError("empty text")
    B = config.hash_buckets
    if task_kind == SEQUENCE:
        return [UnitFeatures(_bag(_ngrams(tokens, config.ngram_orders), B), SEQUENCE)]
    if task_kind == PAIR:
        other = tokenize(text_b or "")
        if not other:
            raise ValueError("empty second text in sentence pair")
        return [UnitFeatures(_bag(_pair_strings(tokens, other, config.ngram_orders), B), PAIR)]
    if task_kind == TOKEN:
        return [UnitFeatures(_bag(_token_strings(tokens, i, config.window), B), TOKEN)
                for i in range(len(tokens))]
    raise ValueError(f"unknown task kind {task_kind!r}")


def sample_features(sample, task_kind: str, config: EncoderConfig) -> UnitFeatures:
    if task_kind == TOKEN:
        tokens = [t.lower() for t in sample.context]
        return UnitFeatures(_bag(_token_strings(tokens, sample.position, config.window),
                                 config.hash_buckets), TOKEN)
    return featurize(sample.text, task_kind, config, sample.text_b)[0]


def feature_matrix(units, config: EncoderConfig) -> sp.csr_matrix:
    """Stack units into a row-normalized sparse matrix (rows sum to 1)."""
    indptr = [0]
    indices = []
    data = []
    for u in units:
        total = sum(u.counts.values())
        for b in sorted(u.counts):
            indices.append(b)
            data.append(u.counts[b] / total)
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), indptr),
        shape=(len(indptr) - 1, config.hash_buckets),
    )


PARAM_NAMES = ("embedding", "w_hidden", "b_hidden", "w_head", "b_head")
BIAS_NAMES = frozenset({"b_hidden", "b_head"})


@dataclass
class ModelParams:
    embedding: np.ndarray
    w_hidden: np.ndarray
    b_hidden: np.ndarray
    w_head: np.ndarray
    b_head: np.ndarray

    @classmethod
    def init(cls, config: EncoderConfig, n_classes: int, seed=0,
             scale: float = 1.0) -> "ModelParams":
        rng = np.random.default_rng(seed)
        e, d = config.embed_dim, config.repr_dim
        return cls(
            embedding=rng.normal(0.0, scale, (config.hash_buckets, e)),
            w_hidden=rng.normal(0.0, 1.0 / np.sqrt(e), (e, d)),
            b_hidden=np.zeros(d),
            w_head=rng.normal(0.0, 1.0 / np.sqrt(d), (d, n_classes)),
            b_head=np.zeros(n_classes),
        )

    @classmethod
    def zeros(cls, config: EncoderConfig, n_classes: int) -> "ModelParams":
        e, d = config.embed_dim, config.repr_dim
        return cls(np.zeros((config.hash_buckets, e)), np.zeros((e, d)), np.zeros(d),
                   np.zeros((d, n_classes)), np.zeros(n_classes))

    def items(self):
        return [(name, getattr(self, name)) for name in PARAM_NAMES]

    def copy(self) -> "ModelParams":
        return ModelParams(*(a.copy() for _, a in self.items()))

    def zeros_like(self) -> "ModelParams":
        return ModelParams(*(np.zeros_like(a) for _, a in self.items()))

    @property
    def n_classes(self) -> int:
        return self.b_head.shape[0]

    def shapes(self) -> tuple:
        return tuple(a.shape for _, a in self.items())

    def allclose(self, other, **kw) -> bool:
        return all(np.allclose(a, b, **kw) for (_, a), (_, b) in zip(self.items(), other.items()))

    def equal(self, other) -> bool:
        return all(np.array_equal(a, b) for (_, a), (_, b) in zip(self.items(), other.items()))


@dataclass
class Cache:
    x: sp.csr_matrix
    h: np.ndarray
    v: np.ndarray
    mask: np.ndarray | None
    probs: np.ndarray
    shapes: tuple


@dataclass
class ForwardResult:
    v: np.ndarray
    probs: np.ndarray
    cache: Cache = field(repr=False)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: ModelParams, x, train: bool = False, rng=None,
            dropout_rate: float = 0.0) -> ForwardResult:
    """Batch forward pass.

    ``x`` is a feature matrix from :func:`feature_matrix` (or a list of
    units, which is stacked first).  Dropout is applied to the head input
    only in train mode, with inverted scaling.
    """
    if not sp.issparse(x):
        x = feature_matrix(x, EncoderConfig(hash_buckets=params.embedding.shape[0],
                                            embed_dim=params.embedding.shape[1],
                                            repr_dim=params.w_hidden.shape[1]))
    if x.shape[1] != params.embedding.shape[0]:
        raise ValueError("feature width does not match embedding table")
    h = np.asarray(x @ params.embedding)
    v = np.tanh(h @ params.w_hidden + params.b_hidden)
    mask = None
    if train and dropout_rate > 0.0:
        if rng is None:
            raise ValueError("train-mode dropout needs an rng")
        keep = rng.random(v.shape) >= dropout_rate
        mask = keep / (1.0 - dropout_rate)
    head_in = v if mask is None else v * mask
    probs = softmax(head_in @ params.w_head + params.b_head)
    return ForwardResult(v, probs, Cache(x, h, v, mask, probs, params.shapes()))


def backward(params: ModelParams, cache: Cache, dprobs=None, dv=None) -> ModelParams:
    """Reverse-mode gradients of a scalar loss given its partials with
    respect to ``probs`` and ``v`` (either may be None for zero)."""
    if cache.shapes != params.shapes():
        raise ValueError("cache was produced with parameters of a different shape")
    probs, v, mask = cache.probs, cache.v, cache.mask
    if dprobs is None:
        dprobs = np.zeros_like(probs)
    dlogits = probs * (dprobs - np.sum(dprobs * probs, axis=1, keepdims=True))
    head_in = v if mask is None else v * mask
    d_w_head = head_in.T @ dlogits
    d_b_head = dlogits.sum(axis=0)
    d_head_in = dlogits @ params.w_head.T
    dv_total = d_head_in if mask is None else d_head_in * mask
    if dv is not None:
        dv_total = dv_total + dv
    dz = dv_total * (1.0 - v * v)
    d_w_hidden = cache.h.T @ dz
    d_b_hidden = dz.sum(axis=0)
    dh = dz @ params.w_hidden.T
    d_embedding = np.asarray(cache.x.T @ dh)
    return ModelParams(d_embedding, d_w_hidden, d_b_hidden, d_w_head, d_b_head)


def grad_check(params: ModelParams, x, loss_fn, epsilon: float = 1e-5,
               max_entries: int | None = None, seed=0) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``loss_fn(probs, v)`` returns ``(value, dprobs, dv)``.  Runs in eval
    mode.  With ``max_entries`` only that many randomly chosen entries per
    tensor are probed (embedding rows touched by ``x`` are preferred).
    """
    res = forward(params, x)
    _, gp, gv = loss_fn(res.probs, res.v)
    grads = backward(params, res.cache, gp, gv)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for (name, arr), (_, g) in zip(params.items(), grads.items()):
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        if name == "embedding" and sp.issparse(res.cache.x):
            rows = np.unique(res.cache.x.indices)
            cols = arr.shape[1]
            candidates = (rows[:, None] * cols + np.arange(cols)).reshape(-1)
        else:
            candidates = np.arange(flat.size)
        if max_entries is not None and candidates.size > max_entries:
            candidates = rng.choice(candidates, max_entries, replace=False)
        for i in candidates:
            old = flat[i]
            flat[i] = old + epsilon
            up = loss_fn(*_probe(params, res.cache.x))[0]
            flat[i] = old - epsilon
            down = loss_fn(*_probe(params, res.cache.x))[0]
            flat[i] = old
            numeric = (up - down) / (2 * epsilon)
            analytic = gflat[i]
            denom = max(abs(analytic), abs(numeric), 1e-12)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst


def _probe(params, x):
    r = forward(params, x)
    return r.probs, r.v


# -- checkpoints --------------------------------------------------------------

MAGIC = b"CSNCKPT1"


def save_checkpoint(path, params: ModelParams, config: EncoderConfig, classes, meta=None):
    """Write a checkpoint.

    Layout: 8-byte magic ``CSNCKPT1``, an unsigned 64-bit little-endian
    manifest length, the UTF-8 JSON manifest, then every tensor as
    float64 little-endian values in manifest order (C order).
    """
    tensors = []
    offset = 0
    for name, arr in params.items():
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    cfg = asdict(config)
    cfg["ngram_orders"] = list(config.ngram_orders)
    manifest = {"format": 1, "encoder": cfg, "classes": list(classes),
                "tensors": tensors, "meta": meta or {}}
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in params.items():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns ``(params, encoder_config, classes, meta)``."""
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (n,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(n).decode("utf-8"))
        payload = fh.read()
    known = {f.name for f in fields(EncoderConfig)}
    config = EncoderConfig(**{k: v for k, v in manifest["encoder"].items() if k in known})
    arrays = {}
    for t in manifest["tensors"]:
        count = int(np.prod(t["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=t["offset"])
        arrays[t["name"]] = arr.reshape(t["shape"]).astype(np.float64)
    params = ModelParams(**arrays)
    return params, config, manifest["classes"], manifest.get("meta", {})
