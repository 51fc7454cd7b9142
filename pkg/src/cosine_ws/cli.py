"""Command-line entry point.

Subcommands: ``gen``, ``label``, ``train``, ``eval``, ``corrupt`` and
``ablate``.  Exit status is 0 on success, 1 on a usage error and 2 when
an input file or configuration fails validation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, TrainConfig, from_dict, load_config
from .dataset import DatasetError, load_jsonl, save_jsonl
from .encoder import feature_matrix, forward, load_checkpoint, sample_features, save_checkpoint
from .evaluation import evaluate, write_bins_csv
from .synthetic import InfeasibleSpec, SyntheticSpec, write_benchmark
from .trainer import GradientOverflow, run, write_metrics
from .weak_rules import ABSTAIN, LabelSpace, RuleError, RuleSet, corrupt_labels, label_dataset

log = logging.getLogger("cosine_ws")

ABLATIONS = {
    "full": {},
    "w/o R1": {"use_r1": False},
    "w/o R2": {"use_r2": False},
    "w/o reweighting": {"use_reweighting": False},
    "w/o soft labels": {"use_soft_labels": False},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _dump(obj, path=None):
    text = json.dumps(obj, indent=1, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _space_for_data(args) -> LabelSpace:
    if getattr(args, "rules", None):
        return RuleSet.load(args.rules).label_space
    if getattr(args, "classes", None):
        return LabelSpace(tuple(c.strip() for c in args.classes.split(",")))
    raise UsageError("need --rules or --classes to know the label space")


def cmd_gen(args):
    spec = SyntheticSpec.load(args.spec) if args.spec else SyntheticSpec()
    data, rules = write_benchmark(spec, args.out)
    log.info("wrote %s and %s", data, rules)


def cmd_label(args):
    rules = RuleSet.load(args.rules)
    ds = load_jsonl(args.data, rules.label_space)
    labeled, stats = label_dataset(rules, ds)
    save_jsonl(labeled, args.out)
    _dump(stats.to_json(), args.stats)


def _train_config(args) -> TrainConfig:
    cfg = load_config(args.config) if args.config else TrainConfig()
    overrides = {}
    for item in args.set or []:
        key, _, raw = item.partition("=")
        try:
            overrides[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key.strip()] = raw.strip()
    return from_dict(overrides, cfg) if overrides else cfg


def cmd_train(args):
    cfg = _train_config(args)
    rules = RuleSet.load(args.rules) if args.rules else None
    space = rules.label_space if rules else _space_for_data(args)
    ds = load_jsonl(args.data, space)
    if rules is None and not ds.labeled and cfg.supervision == "weak":
        raise DatasetError("dataset carries no weak labels; pass --rules or run `label` first")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run(cfg, ds, rules, keep_init=True)
    classes = list(space.classes)
    save_checkpoint(out / "init.ckpt", result.init_params, cfg.encoder, classes, {"stage": 1})
    save_checkpoint(out / "model.ckpt", result.params, cfg.encoder, classes, {"stage": 2})
    write_metrics(result.state.history, out / "metrics.jsonl")
    _dump(result.report, out / "report.json")
    log.info("final: %s", json.dumps(result.report.get("final"), sort_keys=True))


def cmd_eval(args):
    params, enc, classes, _ = load_checkpoint(args.checkpoint)
    space = LabelSpace(tuple(classes), args.others)
    ds = load_jsonl(args.data, space)
    members = [s for s in ds.split(args.split) if s.gold is not None]
    if not members:
        raise DatasetError(f"split {args.split!r} has no gold-labeled samples")
    x = feature_matrix([sample_features(s, ds.task, enc) for s in members], enc)
    probs = forward(params, x).probs
    report = evaluate(probs, np.array([s.gold for s in members]), space.others_index, args.bins)
    _dump(report.to_json(), args.out)
    if args.bins_csv:
        write_bins_csv(report.confidence_bins, args.bins_csv)
    if args.curve:
        if not args.metrics:
            raise UsageError("--curve needs --metrics")
        _learning_curve(args.metrics, args.curve)


def _learning_curve(metrics_path, out_path):
    with open(metrics_path, encoding="utf-8") as fh, open(out_path, "w", newline="") as out:
        w = csv.writer(out)
        w.writerow(["stage", "step", "split", "accuracy", "micro_f1"])
        for line in fh:
            rec = json.loads(line)
            if rec.get("kind") == "eval":
                w.writerow([rec["stage"], rec["step"], rec["split"], rec["accuracy"],
                            "" if rec["micro_f1"] is None else rec["micro_f1"]])


def cmd_corrupt(args):
    if not 0.0 <= args.ratio <= 1.0:
        raise ConfigError(f"ratio: must be in [0, 1], got {args.ratio}")
    space = _space_for_data(args)
    ds = load_jsonl(args.data, space)
    field = args.field
    idx = [i for i, s in enumerate(ds.samples)
           if getattr(s, field) is not None and getattr(s, field) != ABSTAIN]
    new = corrupt_labels([getattr(ds.samples[i], field) for i in idx], args.ratio, args.seed,
                         len(space))
    samples = list(ds.samples)
    for i, lab in zip(idx, new):
        samples[i] = dataclasses.replace(samples[i], **{field: lab})
    save_jsonl(dataclasses.replace(ds, samples=samples), args.out)


def cmd_ablate(args):
    base = _train_config(args)
    rules = RuleSet.load(args.rules) if args.rules else None
    space = rules.label_space if rules else _space_for_data(args)
    ds = load_jsonl(args.data, space)
    if args.matrix:
        with open(args.matrix, encoding="utf-8") as fh:
            matrix = json.load(fh)
    else:
        matrix = ABLATIONS
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = []
    for name, overrides in matrix.items():
        accs = []
        for seed in seeds:
            cfg = from_dict(dict(overrides, seed=seed), base)
            res = run(cfg, ds, rules)
            split = next(iter(res.report["final"]), None)
            if split is None:
                raise DatasetError("no gold-labeled dev/test split to evaluate on")
            accs.append(res.report["final"][split]["accuracy"])
            log.info("%s seed %d: %.4f", name, seed, accs[-1])
        rows.append({"variant": name, "mean_accuracy": float(np.mean(accs)),
                     "std_accuracy": float(np.std(accs)),
                     "per_seed": " ".join(f"{a:.4f}" for a in accs)})
    fields = ["variant", "mean_accuracy", "std_accuracy", "per_seed"]
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.out:
            out.close()


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cosine-ws", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate the synthetic benchmark")
    g.add_argument("--spec", help="synthetic spec JSON (defaults if omitted)")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_gen)

    lab = sub.add_parser("label", help="weak-label a dataset with a rule file")
    lab.add_argument("--rules", required=True)
    lab.add_argument("--data", required=True)
    lab.add_argument("--out", required=True, help="weak-labeled dataset (JSON lines)")
    lab.add_argument("--stats", help="coverage statistics JSON (stdout if omitted)")
    lab.set_defaults(func=cmd_label)

    def train_args(sp):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
        sp.add_argument("--data", required=True)
        sp.add_argument("--rules", help="rule file; omit to use the weak labels in --data")
        sp.add_argument("--classes", help="comma-separated class names when --rules is omitted")

    tr = sub.add_parser("train", help="initialize and self-train a model")
    train_args(tr)
    tr.add_argument("--out", required=True, help="output directory")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--split", default="test", choices=("train", "dev", "test"))
    ev.add_argument("--others", help="class excluded from micro-F1")
    ev.add_argument("--bins", type=int, default=10)
    ev.add_argument("--out", help="report JSON (stdout if omitted)")
    ev.add_argument("--bins-csv", help="confidence bins as CSV")
    ev.add_argument("--metrics", help="metrics JSON lines from `train`")
    ev.add_argument("--curve", help="learning curve CSV built from --metrics")
    ev.set_defaults(func=cmd_eval)

    co = sub.add_parser("corrupt", help="randomly flip labels")
    co.add_argument("--data", required=True)
    co.add_argument("--ratio", type=float, required=True)
    co.add_argument("--seed", type=int, default=0)
    co.add_argument("--field", choices=("gold", "weak"), default="gold")
    co.add_argument("--rules", help="rule file supplying the label space")
    co.add_argument("--classes", help="comma-separated class names")
    co.add_argument("--out", required=True)
    co.set_defaults(func=cmd_corrupt)

    ab = sub.add_parser("ablate", help="train every variant of a config matrix over seeds")
    train_args(ab)
    ab.add_argument("--matrix", help='JSON object {"variant": {overrides}}; standard ablations if omitted')
    ab.add_argument("--seeds", default="1,2,3")
    ab.add_argument("--out", help="CSV table (stdout if omitted)")
    ab.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"cosine-ws {args.command}: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, DatasetError, RuleError, InfeasibleSpec, GradientOverflow,
            ValueError, OSError) as exc:
        print(f"cosine-ws {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
