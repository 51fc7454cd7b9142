"""Deterministic synthetic weak-supervision benchmark.

Every document mixes shared noise words with a few class-indicative
words.  A keyword rule set covers a controllable fraction of documents;
a controllable fraction of the rule hits come from rules wired to the
wrong class, which sets the rule precision.  Sampling draws integers
only, so the corpus is bit-identical across platforms for a given seed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, Sample, save_jsonl
from .weak_rules import KEYWORD, LabelSpace, Rule, RuleSet, label_dataset

_PPM = 1_000_000
_SYLLABLES = ("ba", "ke", "di", "mo", "ru", "sa", "to", "li", "ne", "vo",
              "pa", "gu", "fe", "zi", "lo", "ha", "mi", "tu", "re", "so")


class InfeasibleSpec(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    n_classes: int = 4
    vocab_size: int = 2000
    keywords_per_class: int = 30
    rules_per_class: int = 8
    samples: dict = field(default_factory=lambda: {"train": 2000, "dev": 0, "test": 500})
    coverage: float = 0.6
    precision: float = 0.75
    seed: int = 7
    # document shape
    noise_words: tuple[int, int] = (8, 16)
    class_words: tuple[int, int] = (2, 4)
    # chance that a class-indicative word is drawn from the document's own class
    class_word_purity: float = 0.8

    def to_json(self) -> dict:
        d = asdict(self)
        d["noise_words"] = list(self.noise_words)
        d["class_words"] = list(self.class_words)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SyntheticSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InfeasibleSpec(f"unknown synthetic spec keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("noise_words", "class_words"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SyntheticSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _word(i: int) -> str:
    # distinct integers give distinct words
    n = len(_SYLLABLES)
    parts = [_SYLLABLES[i % n]]
    i //= n
    while i:
        parts.append(_SYLLABLES[i % n])
        i //= n
    while len(parts) < 3:
        parts.append("x")
    return "".join(reversed(parts))


def _check(spec: SyntheticSpec):
    if spec.n_classes < 2:
        raise InfeasibleSpec("need at least 2 classes")
    if not 0.0 < spec.coverage <= 1.0:
        raise InfeasibleSpec("coverage target must be in (0, 1]")
    if not 0.0 < spec.precision <= 1.0:
        raise InfeasibleSpec("precision target must be in (0, 1]")
    if spec.rules_per_class < 1:
        raise InfeasibleSpec("need at least one rule per class")
    if spec.precision < 1.0 and spec.rules_per_class < 2:
        raise InfeasibleSpec("precision below 1 needs at least 2 rules per class "
                             "(one correctly and one wrongly wired)")
    if spec.keywords_per_class < 1 or spec.vocab_size < 1:
        raise InfeasibleSpec("vocabulary sizes must be positive")
    lo, hi = spec.noise_words
    if not 0 <= lo <= hi:
        raise InfeasibleSpec("bad noise_words range")
    lo, hi = spec.class_words
    if not 0 <= lo <= hi:
        raise InfeasibleSpec("bad class_words range")
    if not 0.0 <= spec.class_word_purity <= 1.0:
        raise InfeasibleSpec("class_word_purity must be in [0, 1]")
    if any(v < 0 for v in spec.samples.values()) or not sum(spec.samples.values()):
        raise InfeasibleSpec("sample counts must be non-negative and not all zero")
    if set(spec.samples) - {"train", "dev", "test"}:
        raise InfeasibleSpec("samples keys must be train/dev/test")


def generate_benchmark(spec: SyntheticSpec) -> tuple[Dataset, RuleSet]:
    _check(spec)
    C = spec.n_classes
    R = spec.rules_per_class
    rng = np.random.default_rng(spec.seed)

    base = 0
    noise = [_word(base + i) for i in range(spec.vocab_size)]
    base += spec.vocab_size
    indicative = [[_word(base + c * spec.keywords_per_class + j)
                   for j in range(spec.keywords_per_class)] for c in range(C)]
    base += C * spec.keywords_per_class
    rule_words = [[_word(base + c * R + j) for j in range(R)] for c in range(C)]

    # the first n_wrong rule words of each class fire on that class but
    # vote for another one
    n_wrong = 0 if spec.precision >= 1.0 else min(max(round((1 - spec.precision) * R), 1), R - 1)
    rules = []
    for c in range(C):
        for j, w in enumerate(rule_words[c]):
            target = (c + 1 + j % (C - 1)) % C if j < n_wrong else c
            rules.append(Rule(KEYWORD, (w,), target))
    names = tuple(f"c{k}" for k in range(C))
    space = LabelSpace(names)
    ruleset = RuleSet(space, tuple(rules))

    cov_ppm = round(spec.coverage * _PPM)
    wrong_ppm = round((1 - spec.precision) * _PPM)
    pure_ppm = round(spec.class_word_purity * _PPM)
    samples = []
    for split in ("train", "dev", "test"):
        for k in range(spec.samples.get(split, 0)):
            y = int(rng.integers(C))
            words = [noise[i] for i in rng.integers(spec.vocab_size,
                                                    size=int(rng.integers(spec.noise_words[0],
                                                                          spec.noise_words[1] + 1)))]
            for _ in range(int(rng.integers(spec.class_words[0], spec.class_words[1] + 1))):
                c = y if rng.integers(_PPM) < pure_ppm else int(rng.integers(C))
                words.append(indicative[c][int(rng.integers(spec.keywords_per_class))])
            if rng.integers(_PPM) < cov_ppm:
                if n_wrong and rng.integers(_PPM) < wrong_ppm:
                    words.append(rule_words[y][int(rng.integers(n_wrong))])
                else:
                    words.append(rule_words[y][n_wrong + int(rng.integers(R - n_wrong))])
            order = rng.permutation(len(words))
            text = " ".join(words[i] for i in order)
            samples.append(Sample(id=f"{split}-{k:05d}", text=text, gold=y, split=split))
    dataset = Dataset(samples, space)

    _, stats = label_dataset(ruleset, dataset)
    if abs(stats.coverage - spec.coverage) > 0.05 or abs(stats.precision - spec.precision) > 0.05:
        raise InfeasibleSpec(
            f"generated rules miss targets: coverage {stats.coverage:.3f}, "
            f"precision {stats.precision:.3f}")
    return dataset, ruleset


def write_benchmark(spec: SyntheticSpec, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset, rules = generate_benchmark(spec)
    data_path = out / "data.jsonl"
    rules_path = out / "rules.json"
    save_jsonl(dataset, data_path)
    rules.save(rules_path)
    with open(out / "synthetic_spec.json", "w", encoding="utf-8") as fh:
        json.dump(spec.to_json(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return data_path, rules_path
