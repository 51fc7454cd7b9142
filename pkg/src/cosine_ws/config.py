"""Training configuration and its flat ``key = value`` file format.

The file is flat TOML: one key per line, values are strings, numbers or
booleans.  Unknown keys and mistyped values are rejected; missing keys
take the defaults below (the AGNews column of the original
hyper-parameter table where one exists).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .encoder import EncoderConfig
from .objectives import METRICS, SIMILARITIES, ContrastiveConfig

WEAK_ONLY = "weak-only"
SEMI = "semi-supervised"
TRANSDUCTIVE = "transductive"
MODES = (WEAK_ONLY, SEMI, TRANSDUCTIVE)

SUPERVISIONS = ("weak", "gold")

_ALIASES = {"lambda": "lam", "t1": "T1", "t2": "T2", "t3": "T3"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    # stage budgets and pseudo-label refresh period
    T1: int = 160
    T2: int = 3000
    T3: int = 250
    xi: float = 0.6
    lam: float = 0.1
    gamma: float = 1.0
    beta: float = 10.0
    distance: str = "scaled-euclidean"
    similarity: str = "hard"
    exhaustive_pairs: bool = False
    learning_rate: float = 1e-5
    weight_decay: float = 1e-4
    warmup_ratio: float = 0.1
    batch_size: int = 32
    seed: int = 0
    use_soft_labels: bool = True
    use_r1: bool = True
    use_r2: bool = True
    use_reweighting: bool = True
    mode: str = WEAK_ONLY
    supervision: str = "weak"
    n_clean: int = 0
    corruption_ratio: float = 0.0
    eval_every: int = 0
    # encoder
    hash_buckets: int = 1 << 14
    embed_dim: int = 32
    repr_dim: int = 32
    dropout: float = 0.1
    max_ngram: int = 2
    window: int = 2
    init_scale: float = 1.0

    def __post_init__(self):
        validate(self)

    @property
    def encoder(self) -> EncoderConfig:
        return EncoderConfig(self.hash_buckets, self.embed_dim, self.repr_dim, self.dropout,
                             tuple(range(1, self.max_ngram + 1)), self.window)

    @property
    def contrastive(self) -> ContrastiveConfig:
        return ContrastiveConfig(self.distance, self.similarity, self.gamma, self.beta,
                                 self.exhaustive_pairs)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def validate(c: TrainConfig) -> None:
    def need(cond, key, msg):
        if not cond:
            raise ConfigError(f"{key}: {msg}")

    for f in fields(c):
        val = getattr(c, f.name)
        kind = f.type if isinstance(f.type, type) else {"int": int, "float": float,
                                                        "bool": bool, "str": str}[f.type]
        if kind is float:
            ok = isinstance(val, (int, float)) and not isinstance(val, bool) and math.isfinite(val)
        elif kind is int:
            ok = isinstance(val, int) and not isinstance(val, bool)
        else:
            ok = isinstance(val, kind)
        need(ok, f.name, f"expected {kind.__name__}, got {val!r}")
    need(c.T1 >= 0, "T1", "must be >= 0")
    need(c.T2 >= 0, "T2", "must be >= 0")
    need(c.T3 >= 0, "T3", "must be >= 0")
    need(c.T3 >= 1 or c.T2 == 0, "T3", "must be >= 1 when T2 > 0")
    need(0.0 <= c.xi <= 1.0, "xi", "must be in [0, 1]")
    need(c.lam >= 0, "lam", "must be >= 0")
    need(c.gamma >= 0, "gamma", "must be >= 0")
    need(c.beta > 0, "beta", "must be > 0")
    need(c.distance in METRICS, "distance", f"one of {METRICS}")
    need(c.similarity in SIMILARITIES, "similarity", f"one of {SIMILARITIES}")
    need(c.learning_rate >= 0, "learning_rate", "must be >= 0")
    need(c.weight_decay >= 0, "weight_decay", "must be >= 0")
    need(0.0 <= c.warmup_ratio <= 1.0, "warmup_ratio", "must be in [0, 1]")
    need(c.batch_size >= 1, "batch_size", "must be >= 1")
    need(c.mode in MODES, "mode", f"one of {MODES}")
    need(c.supervision in SUPERVISIONS, "supervision", f"one of {SUPERVISIONS}")
    need(c.n_clean >= 0, "n_clean", "must be >= 0")
    need(c.mode == SEMI or c.n_clean == 0, "n_clean", "only used in semi-supervised mode")
    need(0.0 <= c.corruption_ratio <= 1.0, "corruption_ratio", "must be in [0, 1]")
    need(c.eval_every >= 0, "eval_every", "must be >= 0")
    for key in ("hash_buckets", "embed_dim", "repr_dim", "max_ngram"):
        need(getattr(c, key) >= 1, key, "must be >= 1")
    need(0.0 <= c.dropout < 1.0, "dropout", "must be in [0, 1)")
    need(c.window >= 0, "window", "must be >= 0")
    need(c.init_scale > 0, "init_scale", "must be > 0")


def from_dict(values: dict, base: TrainConfig | None = None) -> TrainConfig:
    known = {f.name: f for f in fields(TrainConfig)}
    kwargs = {}
    for key, val in values.items():
        name = _ALIASES.get(key, key)
        if name not in known:
            raise ConfigError(f"{key}: unknown key")
        # integers are fine where floats are expected
        if known[name].type in ("float", float) and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        kwargs[name] = val
    return dataclasses.replace(base or TrainConfig(), **kwargs)


def load_config(path) -> TrainConfig:
    with open(path, "rb") as fh:
        try:
            values = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    for key, val in values.items():
        if isinstance(val, (dict, list)):
            raise ConfigError(f"{key}: nested values are not allowed")
    return from_dict(values)


def _fmt(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, str):
        return '"' + val.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return repr(val)


def dump_config(config: TrainConfig) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in config.to_dict().items())


def save_config(config: TrainConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_config(config))
