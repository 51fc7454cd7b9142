"""Two-stage training: weak-label initialization, then contrastive self-training.

Stage 1 fits the model to the weak labels for a fixed, small number of
steps.  Stage 2 repeatedly refreshes soft pseudo-labels for the whole
pool and trains on the confident part of each minibatch with the
reweighted KL loss, the contrastive regularizer and the confidence
regularizer.  Each stage gets a fresh AdamW state and its own linear
warmup/decay schedule.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import objectives as obj
from .config import SEMI, TRANSDUCTIVE, ConfigError, TrainConfig
from .dataset import Dataset
from .encoder import BIAS_NAMES, ModelParams, backward, feature_matrix, forward, sample_features
from .evaluation import evaluate
from .weak_rules import ABSTAIN, RuleSet, corrupt_labels, label_dataset

log = logging.getLogger(__name__)

BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


class GradientOverflow(ArithmeticError):
    pass


def lr_schedule(step: int, total_steps: int, base_lr: float, warmup_ratio: float) -> float:
    """Linear ramp from 0 to ``base_lr`` over the warmup fraction, then
    linear decay to 0 at ``total_steps``."""
    if total_steps <= 0:
        return 0.0
    step = min(max(step, 0), total_steps)
    warm = warmup_ratio * total_steps
    if step < warm:
        return base_lr * step / warm
    return base_lr * (total_steps - step) / (total_steps - warm)


@dataclass
class OptimizerState:
    m: ModelParams
    v: ModelParams
    step: int = 0

    @classmethod
    def fresh(cls, params: ModelParams) -> "OptimizerState":
        return cls(params.zeros_like(), params.zeros_like())


def adamw_step(params: ModelParams, grads: ModelParams, state: OptimizerState,
               lr: float, weight_decay: float) -> ModelParams:
    """One AdamW update, in place.  Biases are not decayed."""
    for _, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise GradientOverflow("gradient overflow")
    state.step += 1
    t = state.step
    c1 = 1.0 - BETA1 ** t
    c2 = 1.0 - BETA2 ** t
    for (name, p), (_, g), (_, m), (_, v) in zip(params.items(), grads.items(),
                                                state.m.items(), state.v.items()):
        if weight_decay and name not in BIAS_NAMES:
            p -= lr * weight_decay * p
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return params


class Batcher:
    """Minibatches from successive random permutations of ``range(n)``."""

    def __init__(self, n: int, batch_size: int, rng):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = rng
        self._order = np.empty(0, dtype=np.int64)

    def next(self) -> np.ndarray:
        if self._order.size < self.batch_size:
            self._order = np.concatenate([self._order, self.rng.permutation(self.n)])
        out, self._order = self._order[:self.batch_size], self._order[self.batch_size:]
        return out


@dataclass
class Pool:
    """Training instances with cached features.

    ``labels`` holds stage-1 supervision (ABSTAIN where none) and
    ``clean`` marks samples whose gold labels are revealed in
    semi-supervised mode.
    """

    x: object
    labels: np.ndarray
    clean: np.ndarray
    clean_labels: np.ndarray

    def __len__(self):
        return self.x.shape[0]

    @property
    def labeled_index(self) -> np.ndarray:
        return np.flatnonzero(self.labels != ABSTAIN)


@dataclass
class TrainerState:
    pseudo_labels: np.ndarray | None = None
    history: list = field(default_factory=list)
    stage: int = 0
    global_step: int = 0
    refreshes: int = 0
    skipped: int = 0
    updates: int = 0

    def record(self, **rec):
        self.history.append(rec)


@dataclass
class RunResult:
    params: ModelParams
    state: TrainerState
    report: dict
    init_params: ModelParams | None = None


def _streams(seed: int):
    names = ("init", "batch", "dropout", "pairs", "corrupt", "clean")
    seqs = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(s) for n, s in zip(names, seqs)}


def init_stage(params: ModelParams, pool: Pool, config: TrainConfig, state: TrainerState,
               rngs, evaluator=None) -> ModelParams:
    """Fit the weak labels with cross entropy for exactly ``T1`` steps."""
    idx = pool.labeled_index
    if idx.size == 0:
        raise ValueError("no weakly labeled samples for initialization")
    state.stage = 1
    opt = OptimizerState.fresh(params)
    batcher = Batcher(idx.size, config.batch_size, rngs["batch"])
    for t in range(config.T1):
        rows = idx[batcher.next()]
        lr = lr_schedule(t, config.T1, config.learning_rate, config.warmup_ratio)
        res = forward(params, pool.x[rows], train=True, rng=rngs["dropout"],
                      dropout_rate=config.dropout)
        loss, gp = obj.cross_entropy_and_grad(res.probs, pool.labels[rows])
        adamw_step(params, backward(params, res.cache, gp), opt, lr, config.weight_decay)
        state.global_step += 1
        state.updates += 1
        state.record(kind="step", stage=1, step=t, lr=lr, L_c=loss, R1=0.0, R2=0.0, L=loss,
                     n_confident=int(rows.size))
        if evaluator and config.eval_every and (t + 1) % config.eval_every == 0:
            evaluator(params, 1, t + 1)
    return params


def refresh_pseudo_labels(params: ModelParams, pool: Pool, use_soft_labels: bool = True,
                          batch_size: int = 4096) -> np.ndarray:
    """Pseudo-labels for every pool sample from an eval-mode forward pass.

    Soft labels use the whole pool as the frequency batch.  Clean samples
    keep their one-hot gold labels.
    """
    n = len(pool)
    if n == 0:
        raise ValueError("empty pool")
    probs = np.concatenate([forward(params, pool.x[i:i + batch_size]).probs
                            for i in range(0, n, batch_size)])
    if use_soft_labels:
        table = obj.soft_pseudo(probs)
    else:
        table = obj.one_hot(obj.hard_pseudo(probs), probs.shape[1])
    if pool.clean.any():
        table[pool.clean] = obj.one_hot(pool.clean_labels[pool.clean], probs.shape[1])
    return table


def self_train_step(params, pool, table, rows, config: TrainConfig, rngs):
    """Loss terms and gradients for one stage-2 minibatch.

    Returns ``None`` when no batch member passes the confidence threshold.
    """
    soft = table[rows]
    sel = obj.select_confident(soft, config.xi)
    if len(sel) == 0:
        return None
    rows = rows[sel.indices]
    soft = soft[sel.indices]
    weights = sel.weights if config.use_reweighting else np.ones(len(sel))
    res = forward(params, pool.x[rows], train=True, rng=rngs["dropout"],
                  dropout_rate=config.dropout)
    l_c, dprobs = obj.classification_loss_and_grad(res.probs, soft, weights)
    r1, dv = 0.0, None
    if config.use_r1:
        r1, dv = obj.contrastive_regularizer_and_grad(res.v, soft, config.contrastive,
                                                      rngs["pairs"])
    r2 = 0.0
    if config.use_r2:
        r2, g2 = obj.confidence_regularizer_and_grad(res.probs)
        dprobs = dprobs + config.lam * g2
    total = obj.total_loss(l_c, r1, r2, config.lam, config.use_r1, config.use_r2)
    grads = backward(params, res.cache, dprobs, dv)
    return {"L_c": l_c, "R1": r1, "R2": r2, "L": total, "n_confident": int(rows.size)}, grads


def self_train_stage(params: ModelParams, pool: Pool, config: TrainConfig, state: TrainerState,
                     rngs, evaluator=None) -> ModelParams:
    """``T2`` minibatch steps with a pseudo-label refresh every ``T3`` steps
    and once more after the last step."""
    if config.T2 > 0 and config.T3 < 1:
        raise ConfigError("T3: must be >= 1 when T2 > 0")
    state.stage = 2
    opt = OptimizerState.fresh(params)
    batcher = Batcher(len(pool), config.batch_size, rngs["batch"])
    for t in range(config.T2):
        if t % config.T3 == 0:
            state.pseudo_labels = refresh_pseudo_labels(params, pool, config.use_soft_labels)
            state.refreshes += 1
        rows = batcher.next()
        lr = lr_schedule(t, config.T2, config.learning_rate, config.warmup_ratio)
        out = self_train_step(params, pool, state.pseudo_labels, rows, config, rngs)
        state.global_step += 1
        if out is None:
            state.skipped += 1
            log.debug("stage 2 step %d: empty confident set, skipped", t)
            state.record(kind="step", stage=2, step=t, lr=lr, L_c=0.0, R1=0.0, R2=0.0, L=0.0,
                         n_confident=0, skipped=True)
        else:
            terms, grads = out
            adamw_step(params, grads, opt, lr, config.weight_decay)
            state.updates += 1
            state.record(kind="step", stage=2, step=t, lr=lr, **terms)
        if evaluator and config.eval_every and (t + 1) % config.eval_every == 0:
            evaluator(params, 2, t + 1)
    state.pseudo_labels = refresh_pseudo_labels(params, pool, config.use_soft_labels)
    state.refreshes += 1
    return params


def build_pools(config: TrainConfig, dataset: Dataset, rngs):
    """Stage-1 and stage-2 pools for the configured mode.

    Stage 1 uses the weak labels (or the gold labels when
    ``supervision = "gold"``) of the training split, optionally corrupted.
    Stage 2 uses every training instance.  Transductive mode adds the
    dev and test instances (without their gold labels) to both.
    Semi-supervised mode reveals ``n_clean`` gold labels from the
    training split.
    """
    splits = ("train", "dev", "test") if config.mode == TRANSDUCTIVE else ("train",)
    members = [i for i, s in enumerate(dataset.samples) if s.split in splits]
    if not members:
        raise ValueError("no training samples")
    samples = [dataset.samples[i] for i in members]
    C = len(dataset.label_space)
    if config.supervision == "gold":
        labels = np.array([s.gold if (s.gold is not None and s.split == "train") else ABSTAIN
                           for s in samples], dtype=np.int64)
    else:
        labels = np.array([s.weak for s in samples], dtype=np.int64)
    if config.corruption_ratio > 0:
        have = np.flatnonzero(labels != ABSTAIN)
        labels[have] = corrupt_labels(labels[have], config.corruption_ratio, rngs["corrupt"], C)
    clean = np.zeros(len(samples), dtype=bool)
    clean_labels = np.full(len(samples), ABSTAIN, dtype=np.int64)
    if config.mode == SEMI and config.n_clean > 0:
        cand = np.array([k for k, s in enumerate(samples)
                         if s.split == "train" and s.gold is not None], dtype=np.int64)
        if cand.size < config.n_clean:
            raise ValueError(f"n_clean={config.n_clean} exceeds {cand.size} gold-labeled samples")
        pick = np.sort(rngs["clean"].permutation(cand)[:config.n_clean])
        clean[pick] = True
        clean_labels[pick] = [samples[k].gold for k in pick]
        labels[pick] = clean_labels[pick]
    enc = config.encoder
    x = feature_matrix([sample_features(s, dataset.task, enc) for s in samples], enc)
    return Pool(x, labels, clean, clean_labels), members


def eval_split(dataset: Dataset) -> str | None:
    for name in ("test", "dev"):
        if any(s.gold is not None for s in dataset.split(name)):
            return name
    return None


def run(config: TrainConfig, dataset: Dataset, rules: RuleSet | None = None,
        eval_splits=None, keep_init: bool = False) -> RunResult:
    """Weak-label, initialize and self-train; deterministic given ``config.seed``.

    The report holds the evaluation after each stage under ``"init"`` and
    ``"final"``, plus rule coverage statistics when ``rules`` is given.
    """
    report: dict = {}
    if rules is not None:
        dataset, stats = label_dataset(rules, dataset)
        report["coverage"] = stats.to_json()
    rngs = _streams(config.seed)
    pool, _ = build_pools(config, dataset, rngs)
    params = ModelParams.init(config.encoder, len(dataset.label_space), rngs["init"],
                              config.init_scale)
    state = TrainerState()

    if eval_splits is None:
        default = eval_split(dataset)
        eval_splits = [default] if default else []
    enc = config.encoder
    eval_sets = {}
    for name in eval_splits:
        members = [s for s in dataset.split(name) if s.gold is not None]
        if members:
            x = feature_matrix([sample_features(s, dataset.task, enc) for s in members], enc)
            eval_sets[name] = (x, np.array([s.gold for s in members]))

    def evaluator(p, stage, step):
        out = {}
        for name, (x, golds) in eval_sets.items():
            rep = evaluate(forward(p, x).probs, golds, dataset.label_space.others_index)
            state.record(kind="eval", stage=stage, step=step, split=name,
                         accuracy=rep.accuracy, micro_f1=rep.micro_f1)
            out[name] = rep
        return out

    init_stage(params, pool, config, state, rngs, evaluator)
    report["init"] = {k: r.to_json() for k, r in evaluator(params, 1, config.T1).items()}
    init_params = params.copy() if keep_init else None
    self_train_stage(params, pool, config, state, rngs, evaluator)
    report["final"] = {k: r.to_json() for k, r in evaluator(params, 2, config.T2).items()}
    report["refreshes"] = state.refreshes
    report["skipped_steps"] = state.skipped
    report["updates"] = state.updates
    return RunResult(params, state, report, init_params)


def write_metrics(history, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in history:
            fh.write(json.dumps(rec, sort_keys=True, allow_nan=False) + "\n")


def expected_refreshes(T2: int, T3: int) -> int:
    return (math.ceil(T2 / T3) if T2 else 0) + 1
