"""Losses and regularizers for weakly supervised self-training.

Everything here is a pure function of probability vectors, soft labels
and representations.  Functions named ``*_and_grad`` also return the
partial derivatives the encoder's backward pass consumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-12

SCALED_EUCLIDEAN = "scaled-euclidean"
COSINE = "cosine"
METRICS = (SCALED_EUCLIDEAN, COSINE)

HARD = "hard"
KL_SOFT = "kl-soft"
L2_SOFT = "l2-soft"
SIMILARITIES = (HARD, KL_SOFT, L2_SOFT)


class DegeneratePseudoLabel(ValueError):
    pass


@dataclass(frozen=True)
class ContrastiveConfig:
    distance_metric: str = SCALED_EUCLIDEAN
    similarity_mode: str = HARD
    margin: float = 1.0
    beta: float = 10.0
    exhaustive: bool = False

    def __post_init__(self):
        if self.distance_metric not in METRICS:
            raise ValueError(f"unknown distance metric {self.distance_metric!r}")
        if self.similarity_mode not in SIMILARITIES:
            raise ValueError(f"unknown similarity mode {self.similarity_mode!r}")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if self.beta <= 0:
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class ConfidentSelection:
    indices: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.indices)


def cross_entropy(probs, gold: int) -> float:
    return float(-np.log(max(probs[gold], EPS)))


def cross_entropy_and_grad(probs: np.ndarray, golds) -> tuple[float, np.ndarray]:
    """Mean cross entropy over a batch and its gradient w.r.t. ``probs``."""
    n = probs.shape[0]
    rows = np.arange(n)
    p = probs[rows, golds]
    safe = np.maximum(p, EPS)
    grad = np.zeros_like(probs)
    grad[rows, golds] = np.where(p > EPS, -1.0 / safe, 0.0) / n
    return float(-np.log(safe).mean()), grad


def hard_pseudo(probs):
    """Argmax class; ties go to the lowest index.  Works row-wise on 2-D input."""
    return np.argmax(np.asarray(probs), axis=-1)


def one_hot(labels, n_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def soft_pseudo(batch_probs) -> np.ndarray:
    """Sharpened, frequency-normalized soft labels for a batch.

    Each squared probability is divided by its class's summed squared
    probability over the batch, then rows are renormalized.  Classes with
    zero batch frequency are skipped.
    """
    p = np.asarray(batch_probs, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] == 0:
        raise ValueError("soft_pseudo needs a non-empty 2-D batch")
    sq = p * p
    freq = sq.sum(axis=0)
    live = freq > 0
    scaled = np.zeros_like(sq)
    scaled[:, live] = sq[:, live] / freq[live]
    norm = scaled.sum(axis=1, keepdims=True)
    if np.any(norm <= 0):
        raise DegeneratePseudoLabel("degenerate pseudo-label")
    return scaled / norm


def entropy(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    logp = np.log(np.where(p > 0, p, 1.0))
    return -np.sum(p * logp, axis=-1)


def sample_weight(soft_label) -> np.ndarray | float:
    """Confidence weight ``1 - H(y) / log C``; row-wise for 2-D input."""
    soft_label = np.asarray(soft_label, dtype=np.float64)
    C = soft_label.shape[-1]
    w = 1.0 - entropy(soft_label) / np.log(C)
    w = np.clip(w, 0.0, 1.0)
    return float(w) if w.ndim == 0 else w


def select_confident(soft_labels, threshold: float) -> ConfidentSelection:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("confidence threshold must be in [0, 1]")
    w = sample_weight(np.atleast_2d(soft_labels))
    keep = np.flatnonzero(w >= threshold)
    return ConfidentSelection(keep, w[keep])


def kl_div(p, q) -> float | np.ndarray:
    """KL(p || q) with ``0 log 0 = 0`` and q clamped at 1e-12; row-wise on 2-D input."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    pos = p > 0
    logp = np.log(np.where(pos, p, 1.0))
    logq = np.log(np.maximum(q, EPS))
    out = np.sum(np.where(pos, p * (logp - logq), 0.0), axis=-1)
    return float(out) if out.ndim == 0 else out


def _kl_grad_q(p, q):
    # d KL(p||q) / dq, zero where the clamp is active
    return np.where(q > EPS, -p / np.maximum(q, EPS), 0.0)


def classification_loss_and_grad(probs, soft, weights) -> tuple[float, np.ndarray]:
    """Weighted mean KL(soft || probs) over the confident rows given.

    ``probs``, ``soft`` and ``weights`` are already restricted to the
    confident set.
    """
    n = probs.shape[0]
    if n == 0:
        raise ValueError("empty confident set")
    weights = np.asarray(weights, dtype=np.float64)
    value = float(np.sum(weights * kl_div(soft, probs)) / n)
    grad = weights[:, None] * _kl_grad_q(soft, probs) / n
    return value, grad


def classification_loss(selection: ConfidentSelection, probs, soft) -> float:
    idx = selection.indices
    return classification_loss_and_grad(np.asarray(probs)[idx], np.asarray(soft)[idx],
                                         selection.weights)[0]


def pair_similarity(soft_i, soft_j, mode: str = HARD, beta: float = 10.0) -> float:
    soft_i = np.asarray(soft_i, dtype=np.float64)
    soft_j = np.asarray(soft_j, dtype=np.float64)
    if mode == HARD:
        return float(np.argmax(soft_i) == np.argmax(soft_j))
    if mode == KL_SOFT:
        sym = kl_div(soft_i, soft_j) + kl_div(soft_j, soft_i)
        return float(np.exp(-0.5 * beta * sym))
    if mode == L2_SOFT:
        return float(1.0 - 0.5 * np.sum((soft_i - soft_j) ** 2))
    raise ValueError(f"unknown similarity mode {mode!r}")


def _similarities(soft, i, j, mode, beta) -> np.ndarray:
    si, sj = soft[i], soft[j]
    if mode == HARD:
        return (np.argmax(si, axis=1) == np.argmax(sj, axis=1)).astype(np.float64)
    if mode == KL_SOFT:
        return np.exp(-0.5 * beta * (kl_div(si, sj) + kl_div(sj, si)))
    if mode == L2_SOFT:
        return 1.0 - 0.5 * np.sum((si - sj) ** 2, axis=1)
    raise ValueError(f"unknown similarity mode {mode!r}")


def pair_distance(v_i, v_j, metric: str = SCALED_EUCLIDEAN) -> float:
    v_i = np.asarray(v_i, dtype=np.float64)
    v_j = np.asarray(v_j, dtype=np.float64)
    if metric == SCALED_EUCLIDEAN:
        return float(np.sum((v_i - v_j) ** 2) / v_i.shape[-1])
    if metric == COSINE:
        ni, nj = np.linalg.norm(v_i), np.linalg.norm(v_j)
        if ni <= EPS or nj <= EPS:
            raise ValueError("zero-norm representation")
        return float(1.0 - np.dot(v_i, v_j) / (ni * nj))
    raise ValueError(f"unknown distance metric {metric!r}")


def _distances_and_grad(vi, vj, metric):
    """Row-wise distances and their gradients w.r.t. ``vi`` and ``vj``."""
    if metric == SCALED_EUCLIDEAN:
        diff = vi - vj
        dim = vi.shape[1]
        return np.sum(diff * diff, axis=1) / dim, 2.0 * diff / dim, -2.0 * diff / dim
    if metric == COSINE:
        ni = np.linalg.norm(vi, axis=1, keepdims=True)
        nj = np.linalg.norm(vj, axis=1, keepdims=True)
        if np.any(ni <= EPS) or np.any(nj <= EPS):
            raise ValueError("zero-norm representation")
        cos = np.sum(vi * vj, axis=1, keepdims=True) / (ni * nj)
        dcos_i = vj / (ni * nj) - cos * vi / ni**2
        dcos_j = vi / (ni * nj) - cos * vj / nj**2
        return 1.0 - cos[:, 0], -dcos_i, -dcos_j
    raise ValueError(f"unknown distance metric {metric!r}")


def contrastive_pair_loss(d, W, margin: float = 1.0):
    """``W d^2 + (1 - W) max(0, margin - d)^2``; elementwise on arrays."""
    gap = np.maximum(0.0, margin - np.asarray(d, dtype=np.float64))
    out = W * np.square(d) + (1.0 - W) * gap * gap
    return float(out) if np.ndim(out) == 0 else out


def _pair_loss_grad_d(d, W, margin):
    return 2.0 * W * d - 2.0 * (1.0 - W) * np.maximum(0.0, margin - d)


def sample_pairs(n: int, rng=None, exhaustive: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Unordered index pairs ``i < j``.

    Exhaustive mode returns all of them; otherwise ``n`` pairs are drawn
    uniformly without replacement (all pairs when fewer exist).
    """
    i, j = np.triu_indices(n, k=1)
    total = i.size
    if exhaustive or total <= n:
        return i, j
    if rng is None:
        raise ValueError("pair sampling needs an rng")
    pick = np.sort(rng.choice(total, size=n, replace=False))
    return i[pick], j[pick]


def contrastive_regularizer_and_grad(reps, soft, config: ContrastiveConfig = ContrastiveConfig(),
                                     rng=None) -> tuple[float, np.ndarray]:
    """Mean pair loss over sampled pairs of the confident set, and its
    gradient w.r.t. ``reps``.  Fewer than two members gives zero."""
    reps = np.asarray(reps, dtype=np.float64)
    soft = np.asarray(soft, dtype=np.float64)
    grad = np.zeros_like(reps)
    n = reps.shape[0]
    if n < 2:
        return 0.0, grad
    i, j = sample_pairs(n, rng, config.exhaustive)
    W = _similarities(soft, i, j, config.similarity_mode, config.beta)
    d, ddi, ddj = _distances_and_grad(reps[i], reps[j], config.distance_metric)
    losses = contrastive_pair_loss(d, W, config.margin)
    m = i.size
    g = _pair_loss_grad_d(d, W, config.margin)[:, None] / m
    np.add.at(grad, i, g * ddi)
    np.add.at(grad, j, g * ddj)
    return float(np.mean(losses)), grad


def contrastive_regularizer(reps, soft, config: ContrastiveConfig = ContrastiveConfig(),
                            rng=None) -> float:
    return contrastive_regularizer_and_grad(reps, soft, config, rng)[0]


def confidence_regularizer_and_grad(probs) -> tuple[float, np.ndarray]:
    """Mean KL(uniform || probs); zero for an empty selection."""
    probs = np.asarray(probs, dtype=np.float64)
    n = probs.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(probs)
    u = np.full_like(probs, 1.0 / probs.shape[1])
    return float(np.mean(kl_div(u, probs))), _kl_grad_q(u, probs) / n


def confidence_regularizer(probs) -> float:
    return confidence_regularizer_and_grad(probs)[0]


def total_loss(l_c: float, r1: float, r2: float, lam: float,
               use_r1: bool = True, use_r2: bool = True) -> float:
    if lam < 0:
        raise ValueError("regularization weight must be non-negative")
    return l_c + (r1 if use_r1 else 0.0) + (lam * r2 if use_r2 else 0.0)
