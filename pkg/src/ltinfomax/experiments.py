"""Experiment orchestration: leave-one-domain-out suites, sweeps, ablation.

A suite is |seeds| x |hold-outs| runs. Every run is a pure function of
(config, seed, held-out domain): the synthetic world is rebuilt from the
config's data seed, the long-tail split is drawn from the run seed with
one class order shared across that run's source domains, and training
uses isolated per-run RNG streams. Results land in runs.csv (one row per
run), aggregate.csv (mean and population std) and one JSON log per run
with the per-epoch loss breakdown.
"""

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .data import (
    AugmentConfig,
    DomainSpec,
    LongTailSpec,
    generate_domain,
    split_labeled_unlabeled,
)
from .errors import ConfigError
from .objectives import LossConfig
from .trainer import TrainerConfig, evaluate, train

RUNS_CSV_COLUMNS = ["seed", "heldout", "alpha", "tau", "gamma", "m_l", "accuracy", "wall_s"]
SWEEP_AXES = ("alpha", "gamma", "ml")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a suite needs; flat so it maps 1:1 onto the config file."""

    # objective
    alpha: float = 1.5
    tau: float = 0.95
    marginal_weight: float = 1.0
    include_strong_in_marginal: bool = False
    marginal_momentum: float = 0.0
    # long-tail protocol
    m_l: int = 5
    gamma: float = 10.0
    longtail_unlabeled: bool = False
    # synthetic world
    num_domains: int = 4
    num_classes: int = 5
    feature_dim: int = 16
    n_per_class: int = 40
    centroid_scale: float = 2.0
    noise_scale: float = 1.5
    shift_scale: float = 1.0
    rotation_strength: float = 0.3
    data_seed: int = 7
    # augmentation
    sigma_weak: float = 0.1
    sigma_strong: float = 0.5
    dropout_frac: float = 0.1
    # network / optimizer
    hidden: tuple = (64, 64)
    epochs: int = 20
    learning_rate: float = 0.03
    momentum: float = 0.9
    labeled_batch: int = 16
    unlabeled_batch: int = 64
    # protocol
    held_out: int = None          # None rotates over all domains
    seeds: tuple = (0, 1, 2, 3, 4)
    jobs: int = 1
    out_dir: str = "runs_out"

    def __post_init__(self):
        if self.num_domains < 2:
            raise ConfigError("need at least 2 domains")
        if self.held_out is not None and not (0 <= self.held_out < self.num_domains):
            raise ConfigError(f"held_out must be in [0, {self.num_domains}) or None")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.m_l < 1:
            raise ConfigError("m_l must be >= 1")
        if self.gamma < 1:
            raise ConfigError("gamma must be >= 1")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        # constructing the sub-configs validates the remaining fields
        self.loss_config()
        self.trainer_config()

    def loss_config(self):
        return LossConfig(
            alpha=self.alpha,
            tau=self.tau,
            marginal_weight=self.marginal_weight,
            include_strong_in_marginal=self.include_strong_in_marginal,
            marginal_momentum=self.marginal_momentum,
        )

    def trainer_config(self):
        return TrainerConfig(
            hidden=self.hidden,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            labeled_batch=self.labeled_batch,
            unlabeled_batch=self.unlabeled_batch,
            loss=self.loss_config(),
            augment=AugmentConfig(self.sigma_weak, self.sigma_strong, self.dropout_frac),
        )

    def hash(self):
        """Content hash, independent of field order and output location."""
        d = asdict(self)
        d.pop("out_dir")
        d.pop("jobs")
        blob = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one (seed, held-out) run."""

    config_hash: str
    seed: int
    heldout: int
    alpha: float
    tau: float
    gamma: float
    m_l: int
    accuracy: float
    wall_s: float
    split_hash: str
    epochs: tuple
    report: dict

    def csv_row(self):
        return [self.seed, self.heldout,
                format(self.alpha, ".12g"), format(self.tau, ".12g"),
                format(self.gamma, ".12g"), self.m_l,
                format(self.accuracy, ".12g"), format(self.wall_s, ".6g")]


def build_domains(config):
    """The synthetic world: one DomainDataset per domain, all unsplit.

    Depends only on the config's data fields, so every run of a suite
    (and every ablation variant) sees identical features.
    """
    root = np.random.default_rng(np.random.SeedSequence([config.data_seed, 0]))
    centroids = config.centroid_scale * root.standard_normal(
        (config.num_classes, config.feature_dim)
    )
    n_per_class = np.full(config.num_classes, config.n_per_class, dtype=np.int64)
    domains = []
    for d in range(config.num_domains):
        drng = np.random.default_rng(np.random.SeedSequence([config.data_seed, 1, d]))
        spec = DomainSpec(
            domain_id=d,
            mean_shift=config.shift_scale * drng.standard_normal(config.feature_dim),
            rotation_seed=int(drng.integers(2**31)),
            noise_scale=config.noise_scale,
            rotation_strength=config.rotation_strength,
        )
        sample_seed = int(drng.integers(2**31))
        domains.append(generate_domain(spec, centroids, n_per_class, sample_seed))
    return domains


def split_sources(config, domains, seed, heldout):
    """Long-tail split of the source domains for one run.

    One class order is drawn from the run seed and shared across the
    run's source domains; per-domain index sampling uses child seeds.
    Returns (sources, split_hash).
    """
    order_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 100]))
    order = tuple(int(c) for c in order_rng.permutation(config.num_classes))
    spec = LongTailSpec(config.num_classes, config.m_l, config.gamma, order)
    hasher = hashlib.sha256()
    hasher.update(repr(order).encode())
    sources = []
    for d in range(config.num_domains):
        if d == heldout:
            continue
        split_seed = int(np.random.SeedSequence([int(seed), 101, d]).generate_state(1)[0])
        split = split_labeled_unlabeled(domains[d], spec, split_seed,
                                        longtail_unlabeled=config.longtail_unlabeled)
        hasher.update(np.ascontiguousarray(split.labeled_indices).tobytes())
        sources.append(split)
    return sources, hasher.hexdigest()[:16]


def execute_run(config, seed, heldout, domains=None, supervised_only=False):
    """One leave-one-domain-out run; pure function of its arguments."""
    if domains is None:
        domains = build_domains(config)
    sources, split_hash = split_sources(config, domains, seed, heldout)
    t0 = time.perf_counter()
    state = train(config.trainer_config(), sources, seed, supervised_only=supervised_only)
    report = evaluate(state.model, domains[heldout])
    wall = time.perf_counter() - t0
    return RunRecord(
        config_hash=config.hash(),
        seed=int(seed),
        heldout=int(heldout),
        alpha=config.alpha,
        tau=config.tau,
        gamma=config.gamma,
        m_l=config.m_l,
        accuracy=report.accuracy,
        wall_s=wall,
        split_hash=split_hash,
        epochs=tuple(state.history),
        report=report.to_dict(),
    )


def _run_worker(args):
    config, seed, heldout = args
    return execute_run(config, seed, heldout)


def ensure_writable(out_dir):
    """Fail fast (before any training) if the output path is unusable."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    probe.write_text("ok")
    probe.unlink()
    return out


def run_suite(config, write=True):
    """Execute |seeds| x |hold-outs| runs and persist the results.

    Returns the list of RunRecords (ordered by seed, then held-out id).
    """
    out = ensure_writable(config.out_dir) if write else None
    heldouts = range(config.num_domains) if config.held_out is None else [config.held_out]
    tasks = [(config, s, h) for s in config.seeds for h in heldouts]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            records = list(pool.map(_run_worker, tasks))
    else:
        domains = build_domains(config)
        records = [execute_run(config, s, h, domains) for _, s, h in tasks]
    records.sort(key=lambda r: (r.seed, r.heldout))
    if write:
        write_runs_csv(records, out / "runs.csv")
        write_aggregate_csv([suite_aggregate(config, records)], out / "aggregate.csv")
        for rec in records:
            write_run_json(rec, out / f"run_s{rec.seed}_h{rec.heldout}.json")
    return records


def suite_aggregate(config, records):
    """Mean and population std of accuracy over a suite's runs."""
    acc = np.array([r.accuracy for r in records])
    return {
        "alpha": config.alpha,
        "tau": config.tau,
        "gamma": config.gamma,
        "m_l": config.m_l,
        "n_runs": len(records),
        "mean_accuracy": float(acc.mean()),
        "std_accuracy": float(acc.std()),
    }


def sweep(config, axis, values):
    """run_suite per value of one axis; returns [(value, mean, std), ...].

    Axis is one of 'alpha', 'gamma', 'ml'. Every value is validated
    before any run starts.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    for v in values:
        if axis == "alpha" and not (v > 0):
            raise ConfigError(f"alpha must be > 0, got {v}")
        if axis == "gamma" and not (v >= 1):
            raise ConfigError(f"gamma must be >= 1, got {v}")
        if axis == "ml" and (int(v) != v or v < 1):
            raise ConfigError(f"m_l must be a positive integer, got {v}")

    out = ensure_writable(config.out_dir)
    table = []
    for v in values:
        if axis == "alpha":
            cfg_v = replace(config, alpha=float(v))
        elif axis == "gamma":
            cfg_v = replace(config, gamma=float(v))
        else:
            cfg_v = replace(config, m_l=int(v))
        cfg_v = replace(cfg_v, out_dir=str(out / f"{axis}_{v:g}"))
        records = run_suite(cfg_v)
        agg = suite_aggregate(cfg_v, records)
        table.append((float(v), agg["mean_accuracy"], agg["std_accuracy"]))
    emit_plot_data(table, out / f"sweep_{axis}.dat", header=(axis, "mean", "std"))
    return table


ABLATION_VARIANTS = ("baseline", "+marginal_entropy", "+alpha_marginal_entropy")


def ablation(config):
    """Three-variant comparison on identical seeds and data splits.

    baseline: marginal_weight = 0 (plain semi-supervised objective);
    +marginal_entropy: Shannon marginal term (alpha = 1);
    +alpha_marginal_entropy: the configured alpha.

    Returns rows of (label, mean, std, delta_vs_baseline).
    """
    out = ensure_writable(config.out_dir)
    variants = [
        (ABLATION_VARIANTS[0], replace(config, marginal_weight=0.0)),
        (ABLATION_VARIANTS[1], replace(config, marginal_weight=1.0, alpha=1.0)),
        (ABLATION_VARIANTS[2], replace(config, marginal_weight=1.0)),
    ]
    per_variant = {}
    for label, cfg_v in variants:
        cfg_v = replace(cfg_v, out_dir=str(out / label.replace("+", "plus_")))
        per_variant[label] = run_suite(cfg_v)

    # identical splits across variants: protocol fields are shared
    base = per_variant[ABLATION_VARIANTS[0]]
    for label in ABLATION_VARIANTS[1:]:
        for a, b in zip(base, per_variant[label]):
            if a.split_hash != b.split_hash:
                raise RuntimeError(f"variant {label} saw a different data split")

    rows = []
    base_mean = float(np.mean([r.accuracy for r in base]))
    for label in ABLATION_VARIANTS:
        acc = np.array([r.accuracy for r in per_variant[label]])
        rows.append((label, float(acc.mean()), float(acc.std()),
                     float(acc.mean() - base_mean)))
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "mean_accuracy", "std_accuracy", "delta_vs_baseline"])
        for row in rows:
            w.writerow([row[0]] + [format(v, ".12g") for v in row[1:]])
    return rows


def emit_plot_data(table, path, header=("value", "mean", "std")):
    """Whitespace-separated columns with a '#' header line.

    Floats are written repr-exactly so parse_plot_data round-trips.
    """
    if not table:
        raise ValueError("empty table")
    with open(path, "w") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in table:
            fh.write(" ".join(format(float(v), ".17g") for v in row) + "\n")


def parse_plot_data(path):
    """Read a file written by emit_plot_data back into tuples."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append(tuple(float(t) for t in line.split()))
    return rows


def write_runs_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RUNS_CSV_COLUMNS)
        for rec in records:
            w.writerow(rec.csv_row())


def write_aggregate_csv(aggregates, path):
    cols = ["alpha", "tau", "gamma", "m_l", "n_runs", "mean_accuracy", "std_accuracy"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for agg in aggregates:
            w.writerow([
                format(agg["alpha"], ".12g"), format(agg["tau"], ".12g"),
                format(agg["gamma"], ".12g"), agg["m_l"], agg["n_runs"],
                format(agg["mean_accuracy"], ".12g"), format(agg["std_accuracy"], ".12g"),
            ])


def write_run_json(record, path):
    payload = {
        "config_hash": record.config_hash,
        "seed": record.seed,
        "heldout": record.heldout,
        "alpha": record.alpha,
        "tau": record.tau,
        "gamma": record.gamma,
        "m_l": record.m_l,
        "split_hash": record.split_hash,
        "accuracy": record.accuracy,
        "wall_s": record.wall_s,
        "epochs": list(record.epochs),
        "final": record.report,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


# --- config file handling ---------------------------------------------------

_TUPLE_FIELDS = {"hidden", "seeds"}
_BOOL_FIELDS = {"include_strong_in_marginal", "longtail_unlabeled"}
_INT_FIELDS = {
    "m_l", "num_domains", "num_classes", "feature_dim", "n_per_class",
    "data_seed", "epochs", "labeled_batch", "unlabeled_batch", "jobs",
}
_FLOAT_FIELDS = {
    "alpha", "tau", "marginal_weight", "marginal_momentum", "gamma",
    "centroid_scale", "noise_scale", "shift_scale", "rotation_strength",
    "sigma_weak", "sigma_strong", "dropout_frac", "learning_rate", "momentum",
}


def _coerce(key, value):
    if key == "held_out":
        return None if value.lower() in ("all", "none") else int(value)
    if key == "out_dir":
        return value
    if key in _BOOL_FIELDS:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"bad boolean for {key}: {value!r}")
    if key in _TUPLE_FIELDS:
        return tuple(int(t) for t in value.split(",") if t.strip())
    if key in _INT_FIELDS:
        return int(value)
    if key in _FLOAT_FIELDS:
        return float(value)
    raise ConfigError(f"unknown config key: {key!r}")


def parse_config_file(path):
    """Flat key=value config file -> dict of typed overrides.

    Lines starting with '#' and blank lines are ignored. Unknown keys and
    malformed values raise ConfigError.
    """
    overrides = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (t.strip() for t in line.split("=", 1))
            try:
                overrides[key] = _coerce(key, value)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return overrides


def config_from_overrides(*override_dicts):
    """Build an ExperimentConfig from layered override dicts (later wins).

    Callers include only keys that were explicitly set, so None is a real
    value (held_out=None means rotate over all domains).
    """
    merged = {}
    for d in override_dicts:
        merged.update(d)
    try:
        return ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
