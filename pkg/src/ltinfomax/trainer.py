"""Small fully-connected classifier with self-contained backpropagation.

The network is rectifier-activated, trained by SGD with momentum on
mixed labeled/unlabeled mini-batches under the composite InfoMax
objective. Four independent RNG streams are derived from the run seed
(init, labeled sampling, unlabeled ordering, augmentation), so dropping
the unlabeled side of training leaves every other draw untouched; that
is what makes the supervised-only reduction bit-identical.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import AugmentConfig, augment_pair
from .errors import DivergenceError
from .numerics import argmax_lowest, softmax
from .objectives import (
    LabeledBatch,
    LossConfig,
    UnlabeledBatch,
    infomax_loss_and_grad,
)

_STREAM_INIT, _STREAM_LABELED, _STREAM_UNLABELED, _STREAM_AUGMENT = range(4)


@dataclass
class MlpModel:
    """Dense rectifier network; weights[i] maps layer i to i+1."""

    weights: list
    biases: list

    @property
    def layer_sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def num_classes(self):
        return self.weights[-1].shape[1]

    def copy(self):
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass(frozen=True)
class TrainerConfig:
    """Network shape, optimizer and batch composition."""

    hidden: tuple = (64, 64)
    epochs: int = 20
    learning_rate: float = 0.03
    momentum: float = 0.9
    labeled_batch: int = 16
    unlabeled_batch: int = 64
    loss: LossConfig = field(default_factory=LossConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 <= self.momentum < 1):
            raise ValueError("momentum must be in [0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class TrainState:
    """Mutable state of one training run (single-writer)."""

    model: MlpModel
    config: TrainerConfig
    seed: int
    epoch: int = 0
    velocities: tuple = None
    running_marginal: np.ndarray = None
    history: list = field(default_factory=list)
    rngs: dict = field(default_factory=dict)


def init_mlp(layer_sizes, rng):
    """He-scaled Gaussian weights, zero biases."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases)


def forward(model, x):
    """Logits for a single feature vector or a (N, d) batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[1] != model.weights[0].shape[0]:
        raise ValueError(
            f"input dim {a.shape[1]} does not match model dim {model.weights[0].shape[0]}"
        )
    n_layers = len(model.weights)
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ w + b
        if i < n_layers - 1:
            a = np.maximum(a, 0.0)
    return a[0] if single else a


def _forward_cached(model, x):
    """Forward pass keeping pre-activations for backprop."""
    a = np.asarray(x, dtype=np.float64)
    pre, acts = [], [a]
    n_layers = len(model.weights)
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ w + b
        pre.append(z)
        acts.append(np.maximum(z, 0.0) if i < n_layers - 1 else z)
    return acts[-1], (pre, acts)


def _backprop(model, cache, dlogits):
    """Parameter gradients given d(loss)/d(logits)."""
    pre, acts = cache
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    delta = dlogits
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0)
    return grads_w, grads_b


def _zero_grads(model):
    return ([np.zeros_like(w) for w in model.weights],
            [np.zeros_like(b) for b in model.biases])


def _accumulate(target, extra):
    for t, e in zip(target[0], extra[0]):
        t += e
    for t, e in zip(target[1], extra[1]):
        t += e


def make_state(config, input_dim, num_classes, seed):
    """Fresh TrainState with isolated RNG streams derived from the seed."""
    rngs = {
        name: np.random.default_rng(np.random.SeedSequence([int(seed), stream]))
        for name, stream in (
            ("init", _STREAM_INIT),
            ("labeled", _STREAM_LABELED),
            ("unlabeled", _STREAM_UNLABELED),
            ("augment", _STREAM_AUGMENT),
        )
    }
    sizes = [input_dim, *config.hidden, num_classes]
    model = init_mlp(sizes, rngs["init"])
    velocities = _zero_grads(model)
    return TrainState(model=model, config=config, seed=int(seed),
                      velocities=velocities, rngs=rngs)


def train_step(state, labeled_x, labeled_y, unlabeled_x, loss_cfg=None):
    """One SGD step on a mixed mini-batch.

    Builds weak/strong views of the unlabeled features, runs the three
    forward branches, backpropagates the analytic objective gradient and
    applies the momentum update. Pass unlabeled_x=None (or empty) for a
    purely supervised step. Returns the forward LossBreakdown.
    """
    cfg = state.config
    loss_cfg = loss_cfg or cfg.loss
    model = state.model

    def checked(logits, branch):
        if not np.all(np.isfinite(logits)):
            raise DivergenceError(
                f"non-finite {branch} logits at epoch {state.epoch} "
                f"(seed {state.seed}); max |param| = "
                f"{max(float(np.abs(w).max()) for w in model.weights):.3g}"
            )
        return logits

    labeled_batch = None
    lab_cache = None
    if labeled_x is not None and len(labeled_x):
        lab_logits, lab_cache = _forward_cached(model, labeled_x)
        labeled_batch = LabeledBatch(checked(lab_logits, "labeled"), labeled_y)

    unlabeled_batch = None
    weak_cache = strong_cache = None
    if unlabeled_x is not None and len(unlabeled_x):
        weak_x, strong_x = augment_pair(unlabeled_x, state.rngs["augment"], cfg.augment)
        weak_logits, weak_cache = _forward_cached(model, weak_x)
        strong_logits, strong_cache = _forward_cached(model, strong_x)
        unlabeled_batch = UnlabeledBatch(checked(weak_logits, "weak"),
                                         checked(strong_logits, "strong"))

    breakdown, grads, pi_batch = infomax_loss_and_grad(
        labeled_batch, unlabeled_batch, loss_cfg, state.running_marginal
    )
    if not np.isfinite(breakdown.total):
        raise DivergenceError(
            f"non-finite loss at epoch {state.epoch} (seed {state.seed}): {breakdown.to_dict()}"
        )

    param_grads = _zero_grads(model)
    if labeled_batch is not None:
        _accumulate(param_grads, _backprop(model, lab_cache, grads.labeled))
    if unlabeled_batch is not None:
        if np.any(grads.weak):
            _accumulate(param_grads, _backprop(model, weak_cache, grads.weak))
        if np.any(grads.strong):
            _accumulate(param_grads, _backprop(model, strong_cache, grads.strong))

    lr, mu = cfg.learning_rate, cfg.momentum
    vw, vb = state.velocities
    for w, v, g in zip(model.weights, vw, param_grads[0]):
        v *= mu
        v -= lr * g
        w += v
    for b, v, g in zip(model.biases, vb, param_grads[1]):
        v *= mu
        v -= lr * g
        b += v

    if loss_cfg.marginal_momentum > 0:
        m = loss_cfg.marginal_momentum
        if state.running_marginal is None:
            state.running_marginal = pi_batch
        else:
            state.running_marginal = m * state.running_marginal + (1 - m) * pi_batch

    return breakdown


def _pool_sources(sources):
    dims = {d.dim for d in sources}
    ks = {d.num_classes for d in sources}
    if len(dims) != 1 or len(ks) != 1:
        raise ValueError("source domains must share feature dim and class count")
    xs, ys, us = [], [], []
    for d in sources:
        x, y = d.labeled()
        xs.append(x)
        ys.append(y)
        us.append(d.unlabeled())
    return (np.concatenate(xs), np.concatenate(ys), np.concatenate(us),
            dims.pop(), ks.pop())


def train(config, sources, seed, supervised_only=False):
    """Train on pooled source domains; deterministic given the seed.

    Per step a labeled mini-batch is resampled with replacement and an
    unlabeled mini-batch is taken from a per-epoch shuffle of the pooled
    unlabeled features. ``supervised_only`` skips the unlabeled side
    entirely but keeps the same step schedule and labeled draws, so a
    run with marginal_weight = 0 and tau > 1 lands on bit-identical
    parameters.
    """
    if len(sources) < 2:
        raise ValueError("need at least 2 source domains")
    lab_x, lab_y, unl_x, dim, num_classes = _pool_sources(sources)
    if len(lab_x) == 0:
        raise ValueError("no labeled samples in the source pool")

    state = make_state(config, dim, num_classes, seed)
    n_unl = len(unl_x)
    if n_unl:
        steps = max(1, n_unl // config.unlabeled_batch)
    else:
        steps = max(1, len(lab_x) // config.labeled_batch)

    for epoch in range(config.epochs):
        state.epoch = epoch
        if n_unl and not supervised_only:
            order = state.rngs["unlabeled"].permutation(n_unl)
        step_records = []
        for s in range(steps):
            lab_idx = state.rngs["labeled"].choice(len(lab_x), size=config.labeled_batch,
                                                   replace=True)
            if n_unl and not supervised_only:
                chunk = order[s * config.unlabeled_batch:(s + 1) * config.unlabeled_batch]
                if len(chunk) == 0:
                    chunk = order[:config.unlabeled_batch]
                batch_unl = unl_x[chunk]
            else:
                batch_unl = None
            breakdown = train_step(state, lab_x[lab_idx], lab_y[lab_idx], batch_unl)
            step_records.append(breakdown.to_dict())
        means = {k: float(np.mean([r[k] for r in step_records])) for k in step_records[0]}
        means["epoch"] = epoch
        state.history.append(means)
        state.epoch = epoch + 1
    return state


@dataclass(frozen=True)
class EvalReport:
    """Accuracy, per-class accuracy, confusion counts and predicted marginal."""

    accuracy: float
    per_class_accuracy: np.ndarray
    confusion: np.ndarray
    predicted_marginal: np.ndarray

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "per_class_accuracy": self.per_class_accuracy.tolist(),
            "confusion": self.confusion.tolist(),
            "predicted_marginal": self.predicted_marginal.tolist(),
        }


def evaluate(model, target):
    """Argmax evaluation over every row of the target domain (read-only)."""
    if target.n_samples == 0:
        raise ValueError("cannot evaluate on an empty target")
    k = target.num_classes
    if model.num_classes != k:
        raise ValueError("model and target disagree on the number of classes")
    logits = forward(model, target.features)
    probs = softmax(logits)
    preds = argmax_lowest(logits)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (target.labels, preds), 1)
    row_sums = confusion.sum(axis=1)
    per_class = np.divide(np.diag(confusion), row_sums,
                          out=np.zeros(k, dtype=np.float64), where=row_sums > 0)
    return EvalReport(
        accuracy=float(np.trace(confusion) / confusion.sum()),
        per_class_accuracy=per_class,
        confusion=confusion,
        predicted_marginal=probs.mean(axis=0),
    )


def parameter_gradients(model, labeled_x, labeled_y, weak_x, strong_x, loss_cfg,
                        running_marginal=None):
    """Objective gradient w.r.t. every network parameter, flattened.

    Runs the three forward branches on fixed (already augmented) inputs
    and backpropagates the analytic objective gradient; the verification
    path for finite-difference checks through the whole network.

    Returns (LossBreakdown, flat gradient aligned with flatten_params).
    """
    labeled_batch = None
    lab_cache = None
    if labeled_x is not None and len(labeled_x):
        lab_logits, lab_cache = _forward_cached(model, labeled_x)
        labeled_batch = LabeledBatch(lab_logits, labeled_y)
    unlabeled_batch = None
    weak_cache = strong_cache = None
    if weak_x is not None and len(weak_x):
        weak_logits, weak_cache = _forward_cached(model, weak_x)
        strong_logits, strong_cache = _forward_cached(model, strong_x)
        unlabeled_batch = UnlabeledBatch(weak_logits, strong_logits)

    breakdown, grads, _ = infomax_loss_and_grad(
        labeled_batch, unlabeled_batch, loss_cfg, running_marginal
    )
    param_grads = _zero_grads(model)
    if labeled_batch is not None:
        _accumulate(param_grads, _backprop(model, lab_cache, grads.labeled))
    if unlabeled_batch is not None:
        _accumulate(param_grads, _backprop(model, weak_cache, grads.weak))
        _accumulate(param_grads, _backprop(model, strong_cache, grads.strong))
    flat = np.concatenate(
        [np.concatenate([w.ravel(), b.ravel()])
         for w, b in zip(param_grads[0], param_grads[1])]
    )
    return breakdown, flat


def flatten_params(model):
    """All parameters as one flat vector (weights then bias per layer)."""
    parts = []
    for w, b in zip(model.weights, model.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def model_from_flat(template, flat):
    """Rebuild a model shaped like ``template`` from a flat vector."""
    flat = np.asarray(flat, dtype=np.float64)
    weights, biases, pos = [], [], 0
    for w, b in zip(template.weights, template.biases):
        weights.append(flat[pos:pos + w.size].reshape(w.shape).copy())
        pos += w.size
        biases.append(flat[pos:pos + b.size].copy())
        pos += b.size
    if pos != flat.size:
        raise ValueError("flat vector length does not match the template")
    return MlpModel(weights, biases)


def save_model(model, path):
    """Flat text dump with a dimension header; repr-exact floats."""
    sizes = ",".join(str(s) for s in model.layer_sizes)
    with open(path, "w") as fh:
        fh.write("# ltinfomax-mlp v1\n")
        fh.write(f"# layers={sizes}\n")
        for v in flatten_params(model):
            fh.write(format(v, ".17g") + "\n")


def load_model(path):
    """Inverse of save_model."""
    sizes = None
    values = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "layers=" in line:
                    sizes = [int(t) for t in line.split("layers=")[1].split(",")]
                continue
            values.append(float(line))
    if sizes is None:
        raise ValueError("missing layers= header")
    template = init_mlp(sizes, np.random.default_rng(0))
    return model_from_flat(template, np.asarray(values))
