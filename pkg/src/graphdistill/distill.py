"""Loss functions for group distillation.

Three families:
  * supervised cross-entropy (single-label softmax or multi-label binary);
  * global knowledge sharing: temperature-softened predictions pulled toward
    the detached average of the peers' predictions via a KL term scaled by
    T^2 so its gradient magnitude stays comparable across temperatures;
  * local knowledge sharing: a cycle of adversarial discriminators, where
    discriminator m is trained to tell student m's node embeddings (fake)
    from student (m+1 mod M)'s (real), and student m is rewarded for fooling
    its own discriminator.

Plus the two classic baselines: fixed-teacher distillation and hidden-layer
regression through a learned projection.

Detachment contract: peer averages, teacher outputs, and embeddings fed to a
discriminator being *trained* are constants; gradients never cross them.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Array,
    Tensor,
    add,
    clamp_min,
    log,
    log_sigmoid,
    log_softmax_rows,
    masked_mean,
    matmul,
    mean_all,
    mul,
    neg,
    row_sum,
    scale,
    sigmoid,
    softmax_rows,
    square,
    sub,
)

EPS = 1e-12


@dataclass
class LossWeights:
    alpha: float = 1.0   # adversarial (embedding-sharing) weight
    beta: float = 1.0    # prediction-sharing weight

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise ValueError("loss weights must be finite")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")


def _constant(x) -> Array:
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# softened predictions and peer targets
# ---------------------------------------------------------------------------

def softened_probs(logits: Tensor, temperature: float) -> Tensor:
    """Row softmax of logits / T."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return softmax_rows(scale(logits, 1.0 / temperature))


def softened_bernoulli(logits: Tensor, temperature: float) -> Tensor:
    """Per-class sigmoid of logits / T (multi-label analogue)."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return sigmoid(scale(logits, 1.0 / temperature))


def peer_average(probs: Sequence, m: int) -> Tensor:
    """Average of every group member's predictions except member m, as a
    constant target: no gradient reaches the peers."""
    if len(probs) < 2:
        raise ValueError("peer average needs a group of at least 2")
    if not 0 <= m < len(probs):
        raise ValueError(f"member index {m} out of range")
    peers = [_constant(p) for j, p in enumerate(probs) if j != m]
    return Tensor(sum(peers) / len(peers))


# ---------------------------------------------------------------------------
# global knowledge sharing
# ---------------------------------------------------------------------------

def global_kd_loss(student_probs: Tensor, target_probs, temperature: float,
                   direction: str = "target_first") -> Tensor:
    """T^2 times the mean-over-nodes KL divergence between the softened
    student distribution and the fixed target distribution.

    direction selects the argument order: "target_first" (default) computes
    KL(target || student), "student_first" the reverse.
    """
    t = np.clip(_constant(target_probs), EPS, None)
    q = clamp_min(student_probs, EPS)
    if direction == "target_first":
        entropy = (t * np.log(t)).sum(axis=1, keepdims=True)  # constant part
        kl_nodes = sub(Tensor(entropy), row_sum(mul(Tensor(t), log(q))))
    elif direction == "student_first":
        kl_nodes = row_sum(mul(q, sub(log(q), Tensor(np.log(t)))))
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return scale(mean_all(kl_nodes), float(temperature) ** 2)


def multilabel_kd_loss(student_probs: Tensor, target_probs, temperature: float,
                       direction: str = "target_first") -> Tensor:
    """Multi-label variant: per-class Bernoulli KL, summed over classes and
    averaged over nodes, with the same T^2 prefactor."""
    t = np.clip(_constant(target_probs), EPS, 1.0 - EPS)
    p = clamp_min(student_probs, EPS)
    one_minus_p = clamp_min(sub(Tensor(np.ones(student_probs.shape)), student_probs), EPS)
    if direction == "target_first":
        entropy = (t * np.log(t) + (1 - t) * np.log(1 - t)).sum(axis=1, keepdims=True)
        cross = add(row_sum(mul(Tensor(t), log(p))),
                    row_sum(mul(Tensor(1 - t), log(one_minus_p))))
        kl_nodes = sub(Tensor(entropy), cross)
    elif direction == "student_first":
        kl_nodes = add(
            row_sum(mul(p, sub(log(p), Tensor(np.log(t))))),
            row_sum(mul(one_minus_p, sub(log(one_minus_p), Tensor(np.log(1 - t))))))
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return scale(mean_all(kl_nodes), float(temperature) ** 2)


# ---------------------------------------------------------------------------
# cyclic adversarial scheme
# ---------------------------------------------------------------------------

def cyclic_pairs(group_size: int) -> list[tuple[int, int]]:
    """(fake, real) index pairs: discriminator m scores student m as fake and
    its cyclic successor as real. Groups below 2 have no pairs."""
    if group_size < 2:
        return []
    return [(m, (m + 1) % group_size) for m in range(group_size)]


def discriminator_loss(fake_scores: Tensor, real_scores: Tensor) -> Tensor:
    """One pair's contribution: mean log-sigmoid of the fake scores minus
    mean log-sigmoid of the real scores. Minimizing drives D(fake) toward 0
    and D(real) toward 1. Caller guarantees the embeddings behind the scores
    are detached."""
    if fake_scores.shape[0] != real_scores.shape[0]:
        raise ValueError("fake and real scores must cover the same node count")
    return sub(mean_all(log_sigmoid(fake_scores)), mean_all(log_sigmoid(real_scores)))


def generator_loss(own_scores: Tensor) -> Tensor:
    """One student's confusion term: -mean log-sigmoid of its own
    discriminator's scores. Caller freezes the discriminator parameters."""
    return neg(mean_all(log_sigmoid(own_scores)))


# ---------------------------------------------------------------------------
# supervised and total
# ---------------------------------------------------------------------------

def supervised_loss(logits: Tensor, labels: Array, mask: Array,
                    multi_label: bool = False) -> Tensor:
    """Cross-entropy over the masked nodes: softmax CE for single-label,
    mean-per-class binary CE on raw logits for multi-label."""
    mask = np.asarray(mask, dtype=bool)
    n, k = logits.shape
    if multi_label:
        y = np.asarray(labels, dtype=np.float64)
        if y.shape != (n, k):
            raise ValueError(f"labels shape {y.shape} does not match logits {(n, k)}")
        entries = neg(add(mul(Tensor(y), log_sigmoid(logits)),
                          mul(Tensor(1.0 - y), log_sigmoid(neg(logits)))))
        return masked_mean(scale(row_sum(entries), 1.0 / k), mask)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (n,):
        raise ValueError(f"labels shape {y.shape} does not match {n} nodes")
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"label out of range [0, {k})")
    onehot = np.zeros((n, k))
    onehot[np.arange(n), y] = 1.0
    ce_nodes = neg(row_sum(mul(Tensor(onehot), log_softmax_rows(logits))))
    return masked_mean(ce_nodes, mask)


def total_loss(ce: Tensor, l_g: Tensor | None, l_b: Tensor | None,
               weights: LossWeights) -> Tensor:
    """ce + alpha * l_g + beta * l_b; a zero weight (or a missing term)
    contributes nothing, so alpha=beta=0 returns ce itself."""
    out = ce
    if weights.alpha != 0 and l_g is not None:
        out = add(out, scale(l_g, weights.alpha))
    if weights.beta != 0 and l_b is not None:
        out = add(out, scale(l_b, weights.beta))
    return out


# ---------------------------------------------------------------------------
# fixed-teacher baselines
# ---------------------------------------------------------------------------

def _stable_softmax(z: Array, temperature: float) -> Array:
    z = np.asarray(z, dtype=np.float64) / temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def vanilla_kd_loss(student_logits: Tensor, teacher_logits, labels: Array,
                    mask: Array, temperature: float, alpha: float,
                    multi_label: bool = False,
                    direction: str = "target_first") -> Tensor:
    """Fixed-teacher distillation: supervised CE on the masked nodes plus
    alpha * T^2 * mean-node KL toward the teacher's softened predictions.
    Teacher logits are constants. alpha=0 reduces to the CE exactly."""
    ce = supervised_loss(student_logits, labels, mask, multi_label)
    if alpha == 0:
        return ce
    t_logits = _constant(teacher_logits)
    if multi_label:
        target = 1.0 / (1.0 + np.exp(-t_logits / temperature))
        kd = multilabel_kd_loss(softened_bernoulli(student_logits, temperature),
                                target, temperature, direction)
    else:
        target = _stable_softmax(t_logits, temperature)
        kd = global_kd_loss(softened_probs(student_logits, temperature),
                            target, temperature, direction)
    return add(ce, scale(kd, alpha))


def fitnet_loss(student_hidden: Tensor, teacher_hidden, weight: Tensor,
                bias: Tensor) -> Tensor:
    """Half mean squared error between the linearly projected student
    embedding and the detached teacher embedding; the projection is trained
    jointly with the student."""
    target = _constant(teacher_hidden)
    projected = add(matmul(student_hidden, weight), bias)
    if projected.shape != target.shape:
        raise ValueError(
            f"projection output {projected.shape} does not match teacher {target.shape}")
    return scale(mean_all(square(sub(projected, Tensor(target)))), 0.5)
