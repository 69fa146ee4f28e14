"""Synthetic multi-domain data with a long-tailed labeled subset.

A world is a set of shared class centroids; each domain translates them
by its own mean shift and mixes feature axes through a seeded orthogonal
transform of controllable strength, so the input distribution differs
across domains while the label distribution is shared. Labeled subsets
follow an exponentially decaying per-class count profile with head/tail
ratio gamma, the class order reshuffled per seed.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm


@dataclass(frozen=True)
class LongTailSpec:
    """Per-class labeled budget profile.

    num_classes: K >= 2.
    per_class: nominal labeled samples per class (m_L >= 1); the total
        labeled budget is per_class * num_classes.
    gamma: head/tail imbalance factor (>= 1); gamma = 1 is balanced.
    class_order: optional explicit permutation mapping rank -> class id;
        when None, split_labeled_unlabeled draws one from its seed.
    """

    num_classes: int
    per_class: int
    gamma: float
    class_order: tuple = None

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.per_class < 1:
            raise ValueError("per_class must be >= 1")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.class_order is not None:
            order = tuple(int(c) for c in self.class_order)
            if sorted(order) != list(range(self.num_classes)):
                raise ValueError("class_order must be a permutation of 0..K-1")
            object.__setattr__(self, "class_order", order)


@dataclass(frozen=True)
class DomainSpec:
    """One synthetic domain: translation + seeded orthogonal mixing + noise."""

    domain_id: int
    mean_shift: np.ndarray
    rotation_seed: int
    noise_scale: float
    rotation_strength: float = 0.15

    def __post_init__(self):
        if self.noise_scale <= 0:
            raise ValueError("noise_scale must be > 0")
        if self.rotation_strength < 0:
            raise ValueError("rotation_strength must be >= 0")
        object.__setattr__(self, "mean_shift", np.asarray(self.mean_shift, dtype=np.float64))


@dataclass(frozen=True)
class DomainDataset:
    """Feature matrix with labels and a labeled/unlabeled index split."""

    features: np.ndarray
    labels: np.ndarray
    labeled_indices: np.ndarray
    unlabeled_indices: np.ndarray
    num_classes: int
    domain_id: int = 0
    seed: int = 0

    def __post_init__(self):
        # private copies; the dataset is immutable after construction
        feats = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        lab = np.array(self.labeled_indices, dtype=np.int64)
        unl = np.array(self.unlabeled_indices, dtype=np.int64)
        if feats.ndim != 2 or labels.shape != (feats.shape[0],):
            raise ValueError("features must be (N, d) with matching labels")
        n = feats.shape[0]
        merged = np.concatenate([lab, unl])
        if len(np.unique(merged)) != len(merged):
            raise ValueError("labeled and unlabeled index sets overlap")
        if len(merged) != n or (n and (merged.min() < 0 or merged.max() >= n)):
            raise ValueError("index sets must partition the rows")
        for arr in (feats, labels, lab, unl):
            arr.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "labeled_indices", lab)
        object.__setattr__(self, "unlabeled_indices", unl)

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def labeled(self):
        return self.features[self.labeled_indices], self.labels[self.labeled_indices]

    def unlabeled(self):
        return self.features[self.unlabeled_indices]


@dataclass(frozen=True)
class AugmentConfig:
    """Perturbation strengths for the weak and strong views."""

    sigma_weak: float = 0.1
    sigma_strong: float = 0.5
    dropout_frac: float = 0.1

    def __post_init__(self):
        if self.sigma_weak < 0 or self.sigma_strong < 0:
            raise ValueError("sigmas must be >= 0")
        if self.sigma_weak >= self.sigma_strong:
            raise ValueError("weak perturbation must be smaller than strong")
        if not (0 <= self.dropout_frac < 1):
            raise ValueError("dropout_frac must be in [0, 1)")


def long_tail_counts(spec):
    """Per-class labeled counts under exponential decay.

    Rank j gets weight gamma^(-j / (K-1)) so the head/tail weight ratio is
    exactly gamma; weights are scaled to the budget per_class * K, rounded,
    then repaired to hit the budget exactly (additions go to the head,
    removals come off the largest counts) with every class floored at 1.
    Counts land on classes via the rank -> class map in spec.class_order
    (identity when unset).

    Returns an int array indexed by class id.
    """
    K, m_l, gamma = spec.num_classes, spec.per_class, spec.gamma
    budget = m_l * K
    if budget < K:
        raise ValueError("budget smaller than one sample per class")
    ranks = np.arange(K)
    weights = gamma ** (-ranks / (K - 1))
    raw = budget * weights / weights.sum()
    by_rank = np.maximum(1, np.rint(raw).astype(np.int64))
    while by_rank.sum() < budget:
        by_rank[0] += 1
    while by_rank.sum() > budget:
        reducible = by_rank > 1
        top = by_rank[reducible].max()
        # last rank of the tied-max block keeps counts non-increasing
        idx = np.nonzero(reducible & (by_rank == top))[0][-1]
        by_rank[idx] -= 1
    order = spec.class_order if spec.class_order is not None else tuple(range(K))
    counts = np.zeros(K, dtype=np.int64)
    for rank, cls in enumerate(order):
        counts[cls] = by_rank[rank]
    return counts


def domain_rotation(dim, rotation_seed, strength):
    """Seeded orthogonal mixing matrix, identity at strength 0.

    exp(strength * S) with S a seeded random skew-symmetric matrix whose
    spectral scale is normalized, so strength interpolates smoothly from
    no mixing toward a generic rotation.
    """
    if strength == 0:
        return np.eye(dim)
    rng = np.random.default_rng(rotation_seed)
    g = rng.standard_normal((dim, dim))
    skew = (g - g.T) / 2.0
    skew /= max(np.linalg.norm(skew, 2), 1e-12)
    return expm(strength * np.pi * skew)


def generate_domain(domain, class_centroids, n_per_class, seed):
    """Sample Gaussian blobs around per-domain-transformed centroids.

    Class k's centroid becomes Q_d @ (centroid_k + mean_shift) and
    n_per_class[k] samples are drawn around it with isotropic noise at
    the domain's noise_scale. Deterministic given (domain, seed). All
    rows start unlabeled; use split_labeled_unlabeled afterwards.
    """
    centroids = np.asarray(class_centroids, dtype=np.float64)
    n_per_class = np.asarray(n_per_class, dtype=np.int64)
    K, dim = centroids.shape
    if n_per_class.shape != (K,):
        raise ValueError("n_per_class must have one entry per class")
    if domain.mean_shift.shape != (dim,):
        raise ValueError("mean_shift dimension mismatch")
    if len(np.unique(centroids, axis=0)) < K:
        warnings.warn("duplicate class centroids: classes will overlap exactly")

    rot = domain_rotation(dim, domain.rotation_seed, domain.rotation_strength)
    moved = (centroids + domain.mean_shift[None, :]) @ rot.T

    rng = np.random.default_rng(seed)
    feats, labels = [], []
    for k in range(K):
        n_k = int(n_per_class[k])
        feats.append(moved[k][None, :] + domain.noise_scale * rng.standard_normal((n_k, dim)))
        labels.append(np.full(n_k, k, dtype=np.int64))
    features = np.concatenate(feats, axis=0)
    labels = np.concatenate(labels)
    n = features.shape[0]
    return DomainDataset(
        features=features,
        labels=labels,
        labeled_indices=np.empty(0, dtype=np.int64),
        unlabeled_indices=np.arange(n, dtype=np.int64),
        num_classes=K,
        domain_id=domain.domain_id,
        seed=seed,
    )


def split_labeled_unlabeled(data, spec, seed, min_unlabeled_ratio=5.0,
                            longtail_unlabeled=False):
    """Carve the long-tailed labeled subset out of a domain.

    The class order is drawn from ``seed`` unless spec.class_order is set
    (pass an explicit order to share it across domains within a run).
    Labeled counts realize long_tail_counts exactly; everything else
    stays unlabeled. With longtail_unlabeled the leftover pool is
    additionally subsampled to the same decay profile scaled to its size.

    Raises ValueError when a class cannot supply its count plus one
    spare, or when the unlabeled pool would undercut min_unlabeled_ratio.
    """
    rng = np.random.default_rng(seed)
    if spec.class_order is None:
        order = tuple(int(c) for c in rng.permutation(spec.num_classes))
        spec = LongTailSpec(spec.num_classes, spec.per_class, spec.gamma, order)
    counts = long_tail_counts(spec)

    labeled_idx = []
    for k in range(spec.num_classes):
        pool = np.nonzero(data.labels == k)[0]
        if len(pool) < counts[k] + 1:
            raise ValueError(
                f"class {k} has {len(pool)} samples, needs {counts[k]} labeled plus a spare"
            )
        picked = rng.choice(pool, size=counts[k], replace=False)
        labeled_idx.append(picked)
    labeled_idx = np.sort(np.concatenate(labeled_idx))
    mask = np.ones(data.n_samples, dtype=bool)
    mask[labeled_idx] = False
    unlabeled_idx = np.nonzero(mask)[0]

    if longtail_unlabeled:
        unlabeled_idx = _longtail_subsample(data.labels, unlabeled_idx, spec, rng)
        # rows dropped from the pool are excluded from the dataset entirely
        keep = np.sort(np.concatenate([labeled_idx, unlabeled_idx]))
        remap = -np.ones(data.n_samples, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        return DomainDataset(
            features=data.features[keep],
            labels=data.labels[keep],
            labeled_indices=remap[labeled_idx],
            unlabeled_indices=remap[unlabeled_idx],
            num_classes=spec.num_classes,
            domain_id=data.domain_id,
            seed=seed,
        )

    if len(unlabeled_idx) < min_unlabeled_ratio * len(labeled_idx):
        raise ValueError(
            f"unlabeled pool ({len(unlabeled_idx)}) below {min_unlabeled_ratio}x "
            f"the labeled set ({len(labeled_idx)})"
        )
    return DomainDataset(
        features=data.features,
        labels=data.labels,
        labeled_indices=labeled_idx,
        unlabeled_indices=unlabeled_idx,
        num_classes=spec.num_classes,
        domain_id=data.domain_id,
        seed=seed,
    )


def _longtail_subsample(labels, pool_idx, spec, rng):
    """Thin an index pool to the spec's decay profile, scaled to fit."""
    per_class_pool = np.array(
        [np.sum(labels[pool_idx] == k) for k in range(spec.num_classes)]
    )
    weights = np.zeros(spec.num_classes)
    order = spec.class_order
    for rank, cls in enumerate(order):
        weights[cls] = spec.gamma ** (-rank / (spec.num_classes - 1))
    head = order[0]
    scale = per_class_pool[head] / weights[head]
    target = np.maximum(1, np.rint(scale * weights)).astype(np.int64)
    target = np.minimum(target, per_class_pool)
    kept = []
    for k in range(spec.num_classes):
        members = pool_idx[labels[pool_idx] == k]
        kept.append(rng.choice(members, size=target[k], replace=False))
    return np.sort(np.concatenate(kept))


def augment(x, strength, rng, cfg=AugmentConfig()):
    """One perturbed view of a feature vector.

    strength 'weak' adds Gaussian noise at sigma_weak; 'strong' adds
    noise at sigma_strong and zeroes a random dropout_frac of the
    coordinates. ``rng`` may be a Generator or an integer seed.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    x = np.asarray(x, dtype=np.float64)
    if strength == "weak":
        return x + cfg.sigma_weak * rng.standard_normal(x.shape)
    if strength == "strong":
        out = x + cfg.sigma_strong * rng.standard_normal(x.shape)
        drop = rng.random(x.shape) < cfg.dropout_frac
        out[drop] = 0.0
        return out
    raise ValueError(f"strength must be 'weak' or 'strong', got {strength!r}")


def augment_pair(X, rng, cfg=AugmentConfig()):
    """Weak and strong views of a batch, in one call."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    X = np.asarray(X, dtype=np.float64)
    weak = augment(X, "weak", rng, cfg)
    strong = augment(X, "strong", rng, cfg)
    return weak, strong


def save_dataset(data, path):
    """Write a dataset in the columnar text format.

    Header comments record d, K, N, the split seed and the domain id;
    each row is the feature vector followed by the label and a 0/1
    labeled flag. Floats use repr-exact formatting, so a round trip
    through load_dataset is bit-identical.
    """
    flags = np.zeros(data.n_samples, dtype=np.int64)
    flags[data.labeled_indices] = 1
    with open(path, "w") as fh:
        fh.write("# ltinfomax-domain v1\n")
        fh.write(
            f"# d={data.dim} K={data.num_classes} N={data.n_samples} "
            f"seed={data.seed} domain_id={data.domain_id}\n"
        )
        fh.write(f"# columns: f0..f{data.dim - 1} label labeled_flag\n")
        for i in range(data.n_samples):
            cols = [format(v, ".17g") for v in data.features[i]]
            cols += [str(int(data.labels[i])), str(int(flags[i]))]
            fh.write(" ".join(cols) + "\n")


def load_dataset(path):
    """Inverse of save_dataset."""
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        header[k] = int(v)
                continue
            rows.append(line.split())
    for key in ("d", "K", "N", "seed", "domain_id"):
        if key not in header:
            raise ValueError(f"missing header field {key!r}")
    d, n = header["d"], header["N"]
    if len(rows) != n:
        raise ValueError(f"expected {n} rows, found {len(rows)}")
    features = np.empty((n, d))
    labels = np.empty(n, dtype=np.int64)
    flags = np.empty(n, dtype=np.int64)
    for i, cols in enumerate(rows):
        if len(cols) != d + 2:
            raise ValueError(f"row {i}: expected {d + 2} columns, got {len(cols)}")
        features[i] = [float(c) for c in cols[:d]]
        labels[i] = int(cols[d])
        flags[i] = int(cols[d + 1])
    labeled_idx = np.nonzero(flags == 1)[0]
    unlabeled_idx = np.nonzero(flags == 0)[0]
    return DomainDataset(
        features=features,
        labels=labels,
        labeled_indices=labeled_idx,
        unlabeled_indices=unlabeled_idx,
        num_classes=header["K"],
        domain_id=header["domain_id"],
        seed=header["seed"],
    )
