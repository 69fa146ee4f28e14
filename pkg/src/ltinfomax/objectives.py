"""The semi-supervised InfoMax training objective and its pieces.

The composite loss has three terms:

    total = marginal_weight * (-H_alpha(pi)) + H(Y|X_L) + H(Yhat|X_U)

where ``pi`` is the batch estimate of the predicted class marginal,
``H_alpha`` is the Tsallis alpha-entropy (Shannon at alpha = 1),
``H(Y|X_L)`` is plain cross-entropy on labeled logits and
``H(Yhat|X_U)`` is confidence-thresholded pseudo cross-entropy between a
weak and a strong view of each unlabeled sample. Every operation here is
a pure function and comes with an analytic gradient with respect to the
input logits, verified against central finite differences in the tests.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numerics import LOG_EPS, argmax_lowest, check_prob_vector, log_softmax, softmax


@dataclass(frozen=True)
class LossConfig:
    """Hyperparameters of the composite objective.

    alpha: Tsallis entropy order (> 0); alpha = 1 dispatches to Shannon.
    tau: confidence threshold for pseudo-labels. Values > 1 are legal and
        reject every unlabeled sample (used for supervised-only reductions).
    marginal_weight: coefficient on the -H_alpha(pi) term.
    include_strong_in_marginal: also average strong-branch predictions
        into the marginal estimate (off by default: labeled + weak only).
    marginal_momentum: 0 uses the pure batch marginal; m in (0, 1) blends
        m * running_estimate + (1 - m) * batch_estimate, with gradients
        flowing only through the batch part.
    """

    alpha: float = 1.5
    tau: float = 0.95
    marginal_weight: float = 1.0
    include_strong_in_marginal: bool = False
    marginal_momentum: float = 0.0

    def __post_init__(self):
        if not (self.alpha > 0):
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if not (self.tau > 0):
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if self.marginal_weight < 0:
            raise ConfigError("marginal_weight must be >= 0")
        if not (0 <= self.marginal_momentum < 1):
            raise ConfigError("marginal_momentum must be in [0, 1)")


@dataclass(frozen=True)
class LossBreakdown:
    """The three loss terms plus their weighted sum.

    ``neg_marginal_entropy`` stores the unweighted -H_alpha(pi);
    ``total`` applies ``marginal_weight`` to it.
    """

    neg_marginal_entropy: float
    labeled_ce: float
    pseudo_ce: float
    total: float
    accepted_fraction: float

    def to_dict(self):
        return {
            "neg_marginal_entropy": self.neg_marginal_entropy,
            "labeled_ce": self.labeled_ce,
            "pseudo_ce": self.pseudo_ce,
            "total": self.total,
            "accepted_fraction": self.accepted_fraction,
        }


@dataclass(frozen=True)
class LabeledBatch:
    """Logits (L, K) with integer labels (L,) in {0..K-1}."""

    logits: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if logits.ndim != 2:
            raise ValueError("labeled logits must be 2-D (batch, classes)")
        if labels.shape != (logits.shape[0],):
            raise ValueError("labels length must match logits batch size")
        if logits.shape[0] and (labels.min() < 0 or labels.max() >= logits.shape[1]):
            raise ValueError("labels out of range")
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.logits.shape[0]


@dataclass(frozen=True)
class UnlabeledBatch:
    """Weak- and strong-view logits of the same unlabeled samples, both (U, K)."""

    weak_logits: np.ndarray
    strong_logits: np.ndarray

    def __post_init__(self):
        weak = np.asarray(self.weak_logits, dtype=np.float64)
        strong = np.asarray(self.strong_logits, dtype=np.float64)
        if weak.ndim != 2 or strong.ndim != 2:
            raise ValueError("unlabeled logits must be 2-D (batch, classes)")
        if weak.shape != strong.shape:
            raise ValueError("weak and strong logits must have identical shapes")
        object.__setattr__(self, "weak_logits", weak)
        object.__setattr__(self, "strong_logits", strong)

    def __len__(self):
        return self.weak_logits.shape[0]


@dataclass(frozen=True)
class LossGradients:
    """d(total)/d(logit) for every input logit, shaped like the inputs."""

    labeled: np.ndarray
    weak: np.ndarray
    strong: np.ndarray


def shannon_entropy(p, validate=True):
    """-sum(p log p) with natural log, in [0, log K]."""
    if validate:
        p = check_prob_vector(p)
    else:
        p = np.asarray(p, dtype=np.float64)
    return float(-np.sum(p * np.log(np.maximum(p, LOG_EPS))))


def tsallis_entropy(p, alpha, validate=True):
    """Tsallis alpha-entropy (1 - sum(p^alpha)) / (alpha - 1).

    alpha = 1 returns the Shannon entropy (the analytic limit). Raises
    ConfigError for alpha <= 0.
    """
    if not (alpha > 0):
        raise ConfigError(f"alpha must be > 0, got {alpha}")
    if validate:
        p = check_prob_vector(p)
    else:
        p = np.asarray(p, dtype=np.float64)
    if alpha == 1:
        return shannon_entropy(p, validate=False)
    return float((1.0 - np.sum(np.maximum(p, 0.0) ** alpha)) / (alpha - 1.0))


def tsallis_entropy_grad(p, alpha, validate=True):
    """Per-coordinate derivative of ``tsallis_entropy``.

    -alpha * p^(alpha-1) / (alpha - 1) for alpha != 1, -(log p + 1) at the
    Shannon limit. Inputs are clamped to >= LOG_EPS so one-hot vectors are
    safe even for alpha < 1.
    """
    if not (alpha > 0):
        raise ConfigError(f"alpha must be > 0, got {alpha}")
    if validate:
        p = check_prob_vector(p)
    p = np.maximum(np.asarray(p, dtype=np.float64), LOG_EPS)
    if alpha == 1:
        return -(np.log(p) + 1.0)
    return -alpha / (alpha - 1.0) * p ** (alpha - 1.0)


def estimate_marginal(all_probs):
    """Mean of the given probability vectors: pi_k = (1/N) sum_i p_ik."""
    probs = np.asarray(all_probs, dtype=np.float64)
    if probs.size == 0:
        raise ValueError("cannot estimate a marginal from an empty batch")
    if probs.ndim == 1:
        probs = probs[None, :]
    check_prob_vector(probs, ndim_ok=(2,))
    return probs.mean(axis=0)


def cross_entropy(batch):
    """Mean -log softmax(logits)[label] over a labeled batch."""
    if len(batch) == 0:
        raise ValueError("cross_entropy on an empty batch")
    logp = log_softmax(batch.logits)
    picked = logp[np.arange(len(batch)), batch.labels]
    return float(-picked.mean())


def pseudo_cross_entropy(batch, tau):
    """Thresholded pseudo cross-entropy between weak and strong views.

    A sample contributes -log softmax(strong)[yhat] where yhat is the
    argmax of the weak-view softmax, but only when the weak max-prob
    reaches ``tau``. The sum is divided by the full batch size (rejected
    samples contribute 0). Pseudo-labels and the acceptance indicator are
    constants of the forward pass: no gradient flows through the weak
    branch here.

    Returns (loss, accepted_fraction); an empty batch yields (0.0, 0.0).
    """
    if not (tau > 0):
        raise ConfigError(f"tau must be > 0, got {tau}")
    if len(batch) == 0:
        return 0.0, 0.0
    weak_p = softmax(batch.weak_logits)
    accepted = weak_p.max(axis=1) >= tau
    if not accepted.any():
        return 0.0, 0.0
    pseudo = argmax_lowest(weak_p)
    logp_strong = log_softmax(batch.strong_logits)
    picked = logp_strong[np.arange(len(batch)), pseudo]
    loss = float(-(picked * accepted).sum() / len(batch))
    return loss, float(accepted.mean())


def _marginal_pieces(labeled, unlabeled, cfg):
    """Participating softmax matrices for the marginal estimate.

    Returns (probs_list, tags) where tags name the branch each matrix
    belongs to ('labeled', 'weak', 'strong').
    """
    pieces, tags = [], []
    if labeled is not None and len(labeled):
        pieces.append(softmax(labeled.logits))
        tags.append("labeled")
    if unlabeled is not None and len(unlabeled):
        pieces.append(softmax(unlabeled.weak_logits))
        tags.append("weak")
        if cfg.include_strong_in_marginal:
            pieces.append(softmax(unlabeled.strong_logits))
            tags.append("strong")
    return pieces, tags


def _loss_and_grads(labeled, unlabeled, cfg, running_marginal=None, want_grads=True):
    n_lab = len(labeled) if labeled is not None else 0
    n_unl = len(unlabeled) if unlabeled is not None else 0
    if n_lab == 0 and n_unl == 0:
        raise ValueError("both batches are empty")

    pieces, tags = _marginal_pieces(labeled, unlabeled, cfg)
    n_total = sum(p.shape[0] for p in pieces)
    pi_batch = np.concatenate(pieces, axis=0).mean(axis=0)

    m = cfg.marginal_momentum
    if m > 0 and running_marginal is not None:
        pi_eval = m * np.asarray(running_marginal, dtype=np.float64) + (1 - m) * pi_batch
        batch_scale = 1.0 - m
    else:
        pi_eval = pi_batch
        batch_scale = 1.0

    neg_marg = -tsallis_entropy(pi_eval, cfg.alpha, validate=False)

    labeled_ce = cross_entropy(labeled) if n_lab else 0.0
    if n_unl:
        pseudo_ce, accepted = pseudo_cross_entropy(unlabeled, cfg.tau)
    else:
        pseudo_ce, accepted = 0.0, 0.0

    total = cfg.marginal_weight * neg_marg + labeled_ce + pseudo_ce
    breakdown = LossBreakdown(
        neg_marginal_entropy=neg_marg,
        labeled_ce=labeled_ce,
        pseudo_ce=pseudo_ce,
        total=total,
        accepted_fraction=accepted,
    )
    if not want_grads:
        return breakdown, None, pi_batch

    K = pi_batch.shape[0]
    g_lab = np.zeros((n_lab, K))
    g_weak = np.zeros((n_unl, K))
    g_strong = np.zeros((n_unl, K))

    # marginal term: d(-H_a)/dpi chained through each participating softmax
    if cfg.marginal_weight > 0:
        g_pi = -tsallis_entropy_grad(pi_eval, cfg.alpha, validate=False)
        coef = cfg.marginal_weight * batch_scale / n_total
        targets = {"labeled": g_lab, "weak": g_weak, "strong": g_strong}
        for probs, tag in zip(pieces, tags):
            inner = probs @ g_pi                      # <g, p_i> per row
            targets[tag] += coef * probs * (g_pi[None, :] - inner[:, None])

    # labeled cross-entropy: (p - onehot) / L
    if n_lab:
        p_lab = softmax(labeled.logits)
        g = p_lab.copy()
        g[np.arange(n_lab), labeled.labels] -= 1.0
        g_lab += g / n_lab

    # pseudo cross-entropy: mask * (p_strong - onehot(yhat)) / U, strong only
    if n_unl:
        weak_p = softmax(unlabeled.weak_logits)
        mask = weak_p.max(axis=1) >= cfg.tau
        if mask.any():
            pseudo = argmax_lowest(weak_p)
            p_str = softmax(unlabeled.strong_logits)
            g = p_str.copy()
            g[np.arange(n_unl), pseudo] -= 1.0
            g_strong += (mask[:, None] * g) / n_unl

    return breakdown, LossGradients(labeled=g_lab, weak=g_weak, strong=g_strong), pi_batch


def infomax_loss(labeled, unlabeled, cfg, running_marginal=None):
    """Forward pass of the composite objective.

    Args:
        labeled: LabeledBatch or None.
        unlabeled: UnlabeledBatch or None.
        cfg: LossConfig.
        running_marginal: optional running estimate of pi, blended in when
            cfg.marginal_momentum > 0.

    Returns a LossBreakdown. With alpha = 1 and marginal_weight = 0 this
    reduces exactly to the plain semi-supervised baseline.
    """
    breakdown, _, _ = _loss_and_grads(labeled, unlabeled, cfg, running_marginal, want_grads=False)
    return breakdown


def infomax_loss_grad(labeled, unlabeled, cfg, running_marginal=None):
    """Analytic gradient of infomax_loss().total w.r.t. every input logit.

    Weak logits receive gradient only through the marginal estimate;
    pseudo-labels and the acceptance indicator are treated as constants.
    """
    _, grads, _ = _loss_and_grads(labeled, unlabeled, cfg, running_marginal)
    return grads


def infomax_loss_and_grad(labeled, unlabeled, cfg, running_marginal=None):
    """Forward and backward in one pass.

    Returns (LossBreakdown, LossGradients, batch_marginal) where
    batch_marginal is the pure batch estimate of pi (before momentum
    blending), which callers maintaining a running estimate fold in.
    """
    return _loss_and_grads(labeled, unlabeled, cfg, running_marginal)


def pseudo_cross_entropy_grad(batch, tau):
    """Gradients of pseudo_cross_entropy w.r.t. (weak, strong) logits.

    The weak gradient is identically zero (stop-gradient semantics).
    """
    if not (tau > 0):
        raise ConfigError(f"tau must be > 0, got {tau}")
    n = len(batch)
    if n == 0:
        return np.zeros((0, 0)), np.zeros((0, 0))
    weak_p = softmax(batch.weak_logits)
    g_weak = np.zeros_like(weak_p)
    g_strong = np.zeros_like(weak_p)
    mask = weak_p.max(axis=1) >= tau
    if mask.any():
        pseudo = argmax_lowest(weak_p)
        p_str = softmax(batch.strong_logits)
        g = p_str.copy()
        g[np.arange(n), pseudo] -= 1.0
        g_strong = (mask[:, None] * g) / n
    return g_weak, g_strong
