"""Keyword and pattern labeling functions.

Rules map a text to a class index or abstain.  A rule set is applied to
every sample, matching rules vote, and ties or empty votes abstain.
"""

from __future__ import annotations

import dataclasses
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ABSTAIN = -1

KEYWORD = "keyword"
PATTERN = "pattern"


class RuleError(ValueError):
    """Raised for malformed label spaces, rules and rule files."""


@dataclass(frozen=True)
class LabelSpace:
    classes: tuple[str, ...]
    others_class: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if len(self.classes) < 2:
            raise RuleError("label space needs at least 2 classes")
        if any(not isinstance(c, str) or not c for c in self.classes):
            raise RuleError("class names must be non-empty strings")
        if len(set(self.classes)) != len(self.classes):
            raise RuleError("class names must be unique")
        if self.others_class is not None and self.others_class not in self.classes:
            raise RuleError(f"others class {self.others_class!r} not in classes")

    def __len__(self):
        return len(self.classes)

    def index(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise RuleError(f"unknown class {name!r}") from None

    @property
    def others_index(self) -> int | None:
        return None if self.others_class is None else self.index(self.others_class)


@dataclass(frozen=True)
class Rule:
    """A labeling function.

    ``payload`` is a tuple of lowercase keywords for keyword rules and a
    regular expression string for pattern rules.
    """

    kind: str
    payload: tuple[str, ...] | str
    target: int
    _regex: re.Pattern = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == KEYWORD:
            if isinstance(self.payload, str):
                raise RuleError("keyword payload must be a list of strings")
            words = tuple(self.payload)
            if not words or any(not isinstance(w, str) or not w.strip() for w in words):
                raise RuleError("keyword rules need a non-empty list of non-empty keywords")
            words = tuple(w.lower() for w in words)
            object.__setattr__(self, "payload", words)
            # longest first so alternation prefers the full phrase
            alts = "|".join(re.escape(w) for w in sorted(words, key=len, reverse=True))
            regex = re.compile(rf"(?<!\w)(?:{alts})(?!\w)", re.IGNORECASE)
        elif self.kind == PATTERN:
            if not isinstance(self.payload, str):
                raise RuleError("pattern payload must be a string")
            try:
                regex = re.compile(self.payload)
            except re.error as exc:
                raise RuleError(f"invalid pattern {self.payload!r}: {exc}") from None
        else:
            raise RuleError(f"unknown rule kind {self.kind!r}")
        if not isinstance(self.target, (int, np.integer)) or self.target < 0:
            raise RuleError(f"invalid rule target {self.target!r}")
        object.__setattr__(self, "target", int(self.target))
        object.__setattr__(self, "_regex", regex)

    def matches(self, text: str) -> bool:
        return self._regex.search(text) is not None


@dataclass(frozen=True)
class RuleSet:
    label_space: LabelSpace
    rules: tuple[Rule, ...]

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        C = len(self.label_space)
        for rule in self.rules:
            if rule.target >= C:
                raise RuleError(f"rule target {rule.target} out of range for {C} classes")

    def __len__(self):
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def matches(self, text: str) -> list[int]:
        """Targets of all rules firing on ``text``, one per rule."""
        return [r.target for r in self.rules if r.matches(text)]

    def label(self, text: str) -> int:
        return vote(self.matches(text))

    # -- rule file -------------------------------------------------------

    def to_json(self) -> list:
        names = self.label_space.classes
        out: list = [{"classes": list(names), "others": self.label_space.others_class}]
        for r in self.rules:
            payload = list(r.payload) if r.kind == KEYWORD else r.payload
            out.append({"kind": r.kind, "payload": payload, "target": names[r.target]})
        return out

    @classmethod
    def from_json(cls, obj) -> "RuleSet":
        if not isinstance(obj, list) or not obj or not isinstance(obj[0], dict):
            raise RuleError("rule file must be a JSON array starting with a header object")
        header, *entries = obj
        if "classes" not in header:
            raise RuleError("rule file header must declare 'classes'")
        space = LabelSpace(tuple(header["classes"]), header.get("others"))
        rules = []
        for i, entry in enumerate(entries):
            if not isinstance(entry, dict) or set(entry) != {"kind", "payload", "target"}:
                raise RuleError(f"rule #{i}: expected keys kind, payload, target")
            rules.append(Rule(entry["kind"], entry["payload"], space.index(entry["target"])))
        return cls(space, tuple(rules))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1, ensure_ascii=False)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RuleSet":
        with open(path, encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise RuleError(f"{path}: {exc}") from None
        return cls.from_json(obj)


@dataclass(frozen=True)
class CoverageStats:
    coverage: float
    precision: float | None
    per_rule_hits: tuple[int, ...]
    n: int
    covered: int

    def to_json(self) -> dict:
        return dataclasses.asdict(self) | {"per_rule_hits": list(self.per_rule_hits)}


def apply_rule(rule: Rule, text: str) -> int | None:
    return rule.target if rule.matches(text) else None


def vote(matches: Iterable[int]) -> int:
    """Majority vote over rule outputs; empty input or a tie for the top
    count abstains."""
    counts = Counter(matches).most_common()
    if not counts:
        return ABSTAIN
    if len(counts) > 1 and counts[0][1] == counts[1][1]:
        return ABSTAIN
    return int(counts[0][0])


def label_dataset(rules: RuleSet, dataset):
    """Weak-label every sample of ``dataset``.

    Returns a copy of the dataset with ``weak`` filled in, and the
    coverage statistics.  Precision counts only covered samples that
    carry a gold label.
    """
    samples = dataset.samples
    if not samples:
        raise RuleError("empty dataset")
    hits = [0] * len(rules)
    weak_labels = []
    covered = correct = with_gold = 0
    for s in samples:
        text = s.rule_text
        fired = []
        for k, r in enumerate(rules.rules):
            if r.matches(text):
                hits[k] += 1
                fired.append(r.target)
        weak = vote(fired)
        if weak != ABSTAIN:
            covered += 1
            if s.gold is not None:
                with_gold += 1
                correct += int(s.gold == weak)
        weak_labels.append(weak)
    stats = CoverageStats(
        coverage=covered / len(samples),
        precision=correct / with_gold if with_gold else None,
        per_rule_hits=tuple(hits),
        n=len(samples),
        covered=covered,
    )
    return dataset.with_weak(weak_labels), stats


def corrupt_labels(labels: Sequence[int], ratio: float, seed, n_classes: int) -> list[int]:
    """Flip each label with probability ``ratio`` to a uniformly drawn
    different class."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"corruption ratio must be in [0, 1], got {ratio}")
    if n_classes < 2:
        raise ValueError("need at least 2 classes to corrupt labels")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError("labels out of range")
    rng = np.random.default_rng(seed)
    flip = rng.random(labels.size) < ratio
    shift = rng.integers(1, n_classes, size=labels.size)
    out = np.where(flip, (labels + shift) % n_classes, labels)
    return out.tolist()
