"""Samples, datasets and the JSON-lines dataset file.

One line per record::

    {"id": "s1", "text": "...", "gold": "sports", "split": "train"}
    {"id": "p1", "text_a": "...", "text_b": "...", "gold": null, "split": "test"}
    {"id": "t1", "tokens": ["..", ".."], "labels": ["O", "loc"], "split": "dev"}

Token records are expanded into one sample per token on load and
regrouped on save.  A ``weak`` key (class name or null, a list for token
records) is written once the dataset has been weak-labeled.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .weak_rules import ABSTAIN, LabelSpace

SEQUENCE = "sequence"
TOKEN = "token"
PAIR = "pair"
TASKS = (SEQUENCE, TOKEN, PAIR)
SPLITS = ("train", "dev", "test")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Sample:
    id: str
    text: str
    gold: int | None = None
    split: str = "train"
    weak: int = ABSTAIN
    text_b: str | None = None
    # token task only: the full token sequence and this token's position
    context: tuple[str, ...] | None = None
    position: int | None = None
    group: str | None = None

    @property
    def rule_text(self) -> str:
        if self.text_b is not None:
            return f"{self.text} {self.text_b}"
        return self.text


@dataclass(frozen=True)
class Dataset:
    samples: list[Sample]
    label_space: LabelSpace
    task: str = SEQUENCE
    labeled: bool = field(default=False, compare=False)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def split(self, *names: str) -> list[Sample]:
        return [s for s in self.samples if s.split in names]

    def with_weak(self, weak) -> "Dataset":
        samples = [dataclasses.replace(s, weak=int(w)) for s, w in zip(self.samples, weak)]
        return dataclasses.replace(self, samples=samples, labeled=True)


def _class_or_none(space: LabelSpace, name, what: str, rid: str):
    if name is None:
        return None
    try:
        return space.index(name)
    except ValueError:
        raise DatasetError(f"record {rid!r}: {what} {name!r} not in label space") from None


def _record_task(rec: dict) -> str:
    if "tokens" in rec:
        return TOKEN
    if "text_a" in rec:
        return PAIR
    if "text" in rec:
        return SEQUENCE
    raise DatasetError(f"record {rec.get('id')!r}: no text, text_a/text_b or tokens field")


def parse_records(records, space: LabelSpace) -> Dataset:
    samples: list[Sample] = []
    task = None
    ids = set()
    labeled = False
    for rec in records:
        rid = rec.get("id")
        if not isinstance(rid, str):
            raise DatasetError(f"record without string id: {rec!r}")
        if rid in ids:
            raise DatasetError(f"duplicate id {rid!r}")
        ids.add(rid)
        kind = _record_task(rec)
        if task is None:
            task = kind
        elif kind != task:
            raise DatasetError(f"record {rid!r}: mixed task kinds ({task} and {kind})")
        split = rec.get("split", "train")
        if split not in SPLITS:
            raise DatasetError(f"record {rid!r}: unknown split {split!r}")
        labeled = labeled or "weak" in rec

        if kind == TOKEN:
            tokens = rec["tokens"]
            golds = rec.get("labels", [None] * len(tokens))
            weaks = rec.get("weak", [None] * len(tokens))
            if len(golds) != len(tokens) or len(weaks) != len(tokens):
                raise DatasetError(f"record {rid!r}: tokens and labels differ in length")
            if not tokens:
                raise DatasetError(f"record {rid!r}: empty token list")
            ctx = tuple(tokens)
            for i, tok in enumerate(tokens):
                w = _class_or_none(space, weaks[i], "weak label", rid)
                samples.append(Sample(
                    id=f"{rid}#{i}", text=tok, split=split,
                    gold=_class_or_none(space, golds[i], "gold", rid),
                    weak=ABSTAIN if w is None else w,
                    context=ctx, position=i, group=rid,
                ))
        else:
            text = rec["text_a"] if kind == PAIR else rec["text"]
            w = _class_or_none(space, rec.get("weak"), "weak label", rid)
            samples.append(Sample(
                id=rid, text=text, split=split,
                gold=_class_or_none(space, rec.get("gold"), "gold", rid),
                weak=ABSTAIN if w is None else w,
                text_b=rec.get("text_b") if kind == PAIR else None,
            ))
    return Dataset(samples, space, task or SEQUENCE, labeled)


def to_records(ds: Dataset) -> list[dict]:
    names = ds.label_space.classes

    def name(i):
        return None if i is None or i == ABSTAIN else names[i]

    out = []
    if ds.task == TOKEN:
        groups: dict[str, list[Sample]] = {}
        for s in ds.samples:
            groups.setdefault(s.group, []).append(s)
        for gid, toks in groups.items():
            toks.sort(key=lambda s: s.position)
            rec = {"id": gid, "tokens": list(toks[0].context),
                   "labels": [name(s.gold) for s in toks], "split": toks[0].split}
            if ds.labeled:
                rec["weak"] = [name(s.weak) for s in toks]
            out.append(rec)
        return out
    for s in ds.samples:
        if ds.task == PAIR:
            rec = {"id": s.id, "text_a": s.text, "text_b": s.text_b}
        else:
            rec = {"id": s.id, "text": s.text}
        rec["gold"] = name(s.gold)
        rec["split"] = s.split
        if ds.labeled:
            rec["weak"] = name(s.weak)
        out.append(rec)
    return out


def load_jsonl(path, space: LabelSpace) -> Dataset:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
    return parse_records(records, space)


def save_jsonl(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in to_records(ds):
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
