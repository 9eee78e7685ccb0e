"""Data model for irregular, partially observed multivariate time series.

A series is stored as aligned (T, D) arrays: ``values`` with NaN at missing
entries, a {0,1} ``mask``, and per-variable elapsed-time ``intervals``.
Missing entries are never imputed here; imputation is a property of the
recurrent cells.
"""

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError
from .numeric import Rng

TASK_SOFTMAX = "multiclass-softmax"
TASK_SIGMOID = "per-task-sigmoid"


@dataclass(frozen=True)
class Sample:
    """One time series: hours, measurements, observation mask, intervals, label."""

    timestamps: np.ndarray  # (T,) strictly increasing hours
    values: np.ndarray      # (T, D), NaN where unobserved
    mask: np.ndarray        # (T, D) in {0, 1}
    intervals: np.ndarray   # (T, D) hours since previous observation
    label: object           # class index (int) or per-task 0/1 vector

    @property
    def n_steps(self) -> int:
        return self.timestamps.shape[0]

    @property
    def n_variables(self) -> int:
        return self.values.shape[1]


@dataclass
class Dataset:
    samples: list
    variable_names: list
    task_mode: str            # TASK_SOFTMAX or TASK_SIGMOID
    n_outputs: int            # output units C
    n_classes: int = 0        # class count for the softmax mode
    means: np.ndarray = None          # per-variable observed-entry means
    norm_mean: np.ndarray = None      # normalization stats of the fit split
    norm_std: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    @property
    def n_variables(self) -> int:
        return len(self.variable_names)


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the class-conditioned generator with tunable informative missingness."""

    n_samples: int
    n_variables: int
    n_classes: int
    target_missing_rate: float
    correlation_strength: float
    seed: int
    min_steps: int = 12
    max_steps: int = 20
    class_separation: float = 0.35
    noise_sd: float = 0.1

    def __post_init__(self):
        if self.n_samples < 2 or self.n_variables < 1 or self.n_classes < 2:
            raise ConfigError("need n_samples >= 2, n_variables >= 1, n_classes >= 2")
        if not 0.0 < self.target_missing_rate < 1.0:
            raise ConfigError("target_missing_rate must lie in (0, 1)")
        if not 0.0 <= self.correlation_strength <= 1.0:
            raise ConfigError("correlation_strength must lie in [0, 1]")
        if not 1 <= self.min_steps <= self.max_steps:
            raise ConfigError("need 1 <= min_steps <= max_steps")


@dataclass(frozen=True)
class FoldSplit:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class RawSeries:
    """Unaligned readings straight from ingestion, before any binning."""

    series_id: str
    timestamps: np.ndarray  # (n,) hours, non-decreasing
    values: np.ndarray      # (n, D), NaN where the cell was empty
    label: object = None


def compute_intervals(mask, timestamps) -> np.ndarray:
    """Per-variable hours since the last observation strictly before each step.

    Row 0 is all zeros; afterwards the gap accumulates across steps where the
    variable stayed unobserved.
    """
    mask = np.asarray(mask, dtype=np.float64)
    ts = np.asarray(timestamps, dtype=np.float64)
    if mask.ndim != 2 or ts.ndim != 1 or mask.shape[0] != ts.shape[0]:
        raise DataError("mask must be (T, D) aligned with (T,) timestamps")
    if np.any(np.diff(ts) <= 0):
        raise DataError("timestamps must be strictly increasing")
    t_steps, n_vars = mask.shape
    delta = np.zeros((t_steps, n_vars))
    for t in range(1, t_steps):
        gap = ts[t] - ts[t - 1]
        carry = np.where(mask[t - 1] > 0, 0.0, delta[t - 1])
        delta[t] = gap + carry
    return delta


def make_sample(timestamps, values, mask, label) -> Sample:
    """Validate the aligned arrays and derive intervals."""
    ts = np.asarray(timestamps, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)
    if vals.shape != m.shape or vals.ndim != 2 or ts.shape[0] != vals.shape[0]:
        raise DataError("values and mask must be (T, D) aligned with timestamps")
    if not np.all((m == 0.0) | (m == 1.0)):
        raise DataError("mask entries must be 0 or 1")
    if np.any(~np.isfinite(vals[m > 0])):
        raise DataError("observed values must be finite")
    vals = np.where(m > 0, vals, np.nan)
    return Sample(ts, vals, m, compute_intervals(m, ts), label)


def empirical_means(dataset: Dataset, indices=None) -> np.ndarray:
    """Per-variable mean over observed entries of the selected samples.

    A variable that is never observed gets mean 0 (the post-normalization
    default) and a warning.
    """
    idx = range(dataset.n_samples) if indices is None else indices
    total = np.zeros(dataset.n_variables)
    count = np.zeros(dataset.n_variables)
    for i in idx:
        s = dataset.samples[i]
        total += np.where(s.mask > 0, s.values, 0.0).sum(axis=0)
        count += s.mask.sum(axis=0)
    never = count == 0
    if np.any(never):
        names = [dataset.variable_names[d] for d in np.flatnonzero(never)]
        warnings.warn(f"variables never observed, mean set to 0: {names}")
    means = np.where(never, 0.0, total / np.where(never, 1.0, count))
    return means


def normalization_stats(dataset: Dataset, indices=None):
    """Observed-entry mean and population std per variable on the fit split."""
    idx = list(range(dataset.n_samples)) if indices is None else list(indices)
    mean = empirical_means(dataset, idx)
    sq = np.zeros(dataset.n_variables)
    count = np.zeros(dataset.n_variables)
    for i in idx:
        s = dataset.samples[i]
        diff = np.where(s.mask > 0, s.values - mean, 0.0)
        sq += (diff * diff).sum(axis=0)
        count += s.mask.sum(axis=0)
    var = sq / np.maximum(count, 1.0)
    std = np.sqrt(var)
    degenerate = std <= 0.0
    if np.any(degenerate & (count > 0)):
        names = [dataset.variable_names[d]
                 for d in np.flatnonzero(degenerate & (count > 0))]
        warnings.warn(f"zero-variance variables, std clamped to 1: {names}")
    std = np.where(degenerate, 1.0, std)
    return mean, std


def normalize(dataset: Dataset, train_indices=None) -> Dataset:
    """Scale observed entries to mean 0 / std 1 using stats of the fit split.

    Masks and intervals are untouched; the returned dataset carries the stats
    and the post-normalization empirical means of the fit split.
    """
    mean, std = normalization_stats(dataset, train_indices)
    scaled = []
    for s in dataset.samples:
        vals = np.where(s.mask > 0, (s.values - mean) / std, np.nan)
        scaled.append(Sample(s.timestamps, vals, s.mask, s.intervals, s.label))
    out = replace(dataset, samples=scaled)
    out.norm_mean = mean
    out.norm_std = std
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out.means = empirical_means(out, train_indices)
    return out


def resample(raw: RawSeries, bin_hours: float) -> Sample:
    """Aggregate raw readings onto a regular grid indexed from time 0.

    Each (bin, variable) cell is the mean of the readings that fall in it;
    an empty cell stays missing.
    """
    if bin_hours <= 0:
        raise ConfigError("bin_hours must be positive")
    ts = np.asarray(raw.timestamps, dtype=np.float64)
    vals = np.asarray(raw.values, dtype=np.float64)
    if ts.shape[0] == 0:
        raise DataError(f"series {raw.series_id!r} has no readings")
    if np.any(ts < 0):
        raise DataError(f"series {raw.series_id!r} has negative timestamps")
    n_bins = int(math.floor(ts.max() / bin_hours)) + 1
    n_vars = vals.shape[1]
    total = np.zeros((n_bins, n_vars))
    count = np.zeros((n_bins, n_vars))
    bins = np.minimum((ts / bin_hours).astype(int), n_bins - 1)
    for row, b in enumerate(bins):
        observed = np.isfinite(vals[row])
        total[b, observed] += vals[row, observed]
        count[b, observed] += 1
    mask = (count > 0).astype(np.float64)
    values = np.where(mask > 0, total / np.maximum(count, 1.0), np.nan)
    grid = np.arange(n_bins, dtype=np.float64) * bin_hours
    return make_sample(grid, values, mask, raw.label)


def missing_rate(sample: Sample) -> np.ndarray:
    """Fraction of steps at which each variable is unobserved."""
    return 1.0 - sample.mask.mean(axis=0)


def _label_matrix(dataset: Dataset) -> np.ndarray:
    """(N, n_tasks) numeric label matrix: class indices or per-task binaries."""
    if dataset.task_mode == TASK_SOFTMAX:
        return np.array([[float(s.label)] for s in dataset.samples])
    return np.array([np.atleast_1d(np.asarray(s.label, dtype=np.float64))
                     for s in dataset.samples])


def _pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float((xc * xc).sum() * (yc * yc).sum()))
    if denom == 0.0:
        return float("nan")
    return float((xc * yc).sum() / denom)


def missingness_label_correlation(dataset: Dataset):
    """Pearson r between per-sample variable missing rates and each task label.

    Returns ``(r, flat_flags)`` where ``r`` is (D, n_tasks) and the flag marks
    (variable, task) pairs whose missing rate had zero variance (r forced to 0).
    """
    if dataset.n_samples < 2:
        raise DataError("need at least 2 samples for a correlation")
    rates = np.array([missing_rate(s) for s in dataset.samples])  # (N, D)
    labels = _label_matrix(dataset)                               # (N, n_tasks)
    if np.any(labels.std(axis=0) == 0):
        raise DataError("label variance is zero for some task")
    n_vars, n_tasks = rates.shape[1], labels.shape[1]
    r = np.zeros((n_vars, n_tasks))
    flat = np.zeros((n_vars, n_tasks), dtype=bool)
    for d in range(n_vars):
        for k in range(n_tasks):
            val = _pearson(rates[:, d], labels[:, k])
            if math.isnan(val):
                flat[d, k] = True
                val = 0.0
            r[d, k] = val
    if np.any(flat):
        warnings.warn("zero-variance missing rates, correlation reported as 0")
    return r, flat


def truncate_prefix(sample: Sample, cutoff_hours: float) -> Sample:
    """Keep the steps with timestamp <= cutoff; intervals are recomputed
    (identical to the original prefix by construction)."""
    if cutoff_hours <= 0:
        raise ConfigError("cutoff_hours must be positive")
    keep = sample.timestamps <= cutoff_hours
    n = int(keep.sum())
    if n == 0:
        raise ConfigError(f"cutoff {cutoff_hours}h leaves an empty prefix")
    return make_sample(sample.timestamps[:n], sample.values[:n],
                       sample.mask[:n], sample.label)


def _class_ids(dataset: Dataset) -> np.ndarray:
    """Stratification key: class index, or the first task for multi-task labels."""
    if dataset.task_mode == TASK_SOFTMAX:
        return np.array([int(s.label) for s in dataset.samples])
    return np.array([int(np.atleast_1d(s.label)[0]) for s in dataset.samples])


def kfold_split(dataset: Dataset, k: int, seed: int, stratify: bool = True,
                validation_fraction: float = 0.2):
    """Disjoint, exhaustive k folds with a validation carve inside each train part.

    Stratified mode deals each class round-robin into folds (proportions
    within +-1 sample) and takes a per-class validation slice out of every
    training portion for early stopping.
    """
    if k < 2:
        raise ConfigError("k must be >= 2")
    n = dataset.n_samples
    rng = Rng(seed, stream=0)
    if stratify:
        classes = _class_ids(dataset)
        folds = [[] for _ in range(k)]
        for c in sorted(set(classes.tolist())):
            members = np.flatnonzero(classes == c)
            if len(members) < k:
                raise ConfigError(
                    f"class {c} has {len(members)} samples, fewer than k={k}")
            for pos, i in enumerate(rng.shuffled(members.tolist())):
                folds[pos % k].append(i)
    else:
        order = rng.shuffled(range(n))
        folds = [order[f::k] for f in range(k)]
    splits = []
    for f in range(k):
        test = np.array(sorted(folds[f]), dtype=int)
        pool = np.array(sorted(i for g in range(k) if g != f for i in folds[g]),
                        dtype=int)
        val = _carve_validation(dataset, pool, rng, validation_fraction, stratify)
        train = np.array([i for i in pool if i not in set(val.tolist())], dtype=int)
        splits.append(FoldSplit(train=train, validation=val, test=test))
    return splits


def _carve_validation(dataset, pool, rng, fraction, stratify):
    if stratify:
        classes = _class_ids(dataset)
        picked = []
        for c in sorted(set(classes[pool].tolist())):
            members = [i for i in pool if classes[i] == c]
            n_val = int(round(fraction * len(members)))
            if len(members) > 1:
                n_val = max(1, n_val)
            picked.extend(rng.shuffled(members)[:n_val])
        return np.array(sorted(picked), dtype=int)
    n_val = max(1, int(round(fraction * len(pool))))
    return np.array(sorted(rng.shuffled(pool.tolist())[:n_val]), dtype=int)


def subsample_stratified(dataset: Dataset, size: int, seed: int) -> np.ndarray:
    """Label-stratified subset indices preserving class proportions."""
    if size > dataset.n_samples:
        raise ConfigError("subsample size exceeds dataset size")
    classes = _class_ids(dataset)
    uniq = sorted(set(classes.tolist()))
    rng = Rng(seed, stream=0)
    quota = {}
    for c in uniq:
        quota[c] = (size * (classes == c).sum()) / dataset.n_samples
    counts = {c: int(math.floor(quota[c])) for c in uniq}
    remainders = sorted(uniq, key=lambda c: (quota[c] - counts[c]), reverse=True)
    short = size - sum(counts.values())
    for c in remainders[:short]:
        counts[c] += 1
    picked = []
    for c in uniq:
        members = np.flatnonzero(classes == c).tolist()
        picked.extend(rng.shuffled(members)[:counts[c]])
    return np.array(sorted(picked), dtype=int)


def dataset_statistics(dataset: Dataset) -> dict:
    """Summary fields: sizes, step counts, and the mean variable missing rate."""
    steps = np.array([s.n_steps for s in dataset.samples], dtype=np.float64)
    rates = np.array([missing_rate(s) for s in dataset.samples])
    return {
        "n_samples": dataset.n_samples,
        "n_variables": dataset.n_variables,
        "mean_steps": float(steps.mean()),
        "max_steps": int(steps.max()),
        "mean_variable_missing_rate": float(rates.mean()),
    }


# ---------------------------------------------------------------------------
# synthetic generation

def _signal_bank(cfg: SyntheticConfig, rng: Rng):
    """Per-(class, variable) sinusoid parameters sharing a common base so the
    class separation stays controlled."""
    k, d = cfg.n_classes, cfg.n_variables
    sep = cfg.class_separation
    base_amp = 0.6 + 0.6 * rng.uniforms(d)
    base_freq = 0.35 + 0.45 * rng.uniforms(d)
    amp = np.empty((k, d))
    freq = np.empty((k, d))
    phase = np.empty((k, d))
    for c in range(k):
        amp[c] = base_amp * (1.0 + sep * (2.0 * rng.uniforms(d) - 1.0))
        freq[c] = base_freq * (1.0 + sep * (2.0 * rng.uniforms(d) - 1.0))
        phase[c] = 2.0 * np.pi * rng.uniforms(d)
    return amp, freq, phase


def _measure_correlation(rates_per_sample, labels) -> float:
    vals = []
    for d in range(rates_per_sample.shape[1]):
        r = _pearson(rates_per_sample[:, d], labels)
        if not math.isnan(r):
            vals.append(r)
    return float(np.mean(vals)) if vals else 0.0


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    """Class-conditioned sinusoid series with tunable informative missingness.

    The base signals depend only on the seed and the shape parameters, so
    datasets that differ only in ``correlation_strength`` share identical
    measurements and labels.  Missingness is Bernoulli per entry with a
    per-class offset whose magnitude is calibrated by bisection until the mean
    per-variable Pearson correlation between sample missing rates and the
    label matches the requested strength.  Achieved values are measured and
    stored in ``metadata``, never assumed.
    """
    rng_signal = Rng(cfg.seed, stream=0)
    rng_len = Rng(cfg.seed, stream=1)
    rng_mask = Rng(cfg.seed, stream=2)

    n, d, k = cfg.n_samples, cfg.n_variables, cfg.n_classes
    labels = np.array([i % k for i in range(n)])
    amp, freq, phase = _signal_bank(cfg, rng_signal)

    lengths = [rng_len.integer(cfg.min_steps, cfg.max_steps + 1) for _ in range(n)]
    signals = []
    for i in range(n):
        t_steps = lengths[i]
        c = labels[i]
        gain = 0.75 + 0.5 * rng_signal.uniform()
        shift = 2.0 * np.pi * rng_signal.uniform()
        t = np.arange(t_steps, dtype=np.float64)[:, None]
        clean = gain * amp[c] * np.sin(freq[c] * t + phase[c] + shift)
        noise = cfg.noise_sd * rng_signal.gaussians(t_steps * d).reshape(t_steps, d)
        signals.append(clean + noise)

    # fixed uniforms reused across bisection iterations (common random numbers)
    mask_draws = [rng_mask.uniforms(lengths[i] * d).reshape(lengths[i], d)
                  for i in range(n)]
    rate_jitter = _per_variable_rate_jitter(cfg)
    offsets = labels - (k - 1) / 2.0

    lo_gap = cfg.target_missing_rate - 0.02 + rate_jitter.min()
    hi_gap = 0.98 - cfg.target_missing_rate - rate_jitter.max()
    beta_max = min(lo_gap, hi_gap) / max(abs(offsets).max(), 1e-12)
    if beta_max <= 0:
        raise ConfigError(
            f"missing rate {cfg.target_missing_rate} leaves no room for "
            f"label-dependent offsets")

    def masks_for(beta):
        out = []
        rates = np.empty((n, d))
        for i in range(n):
            q = np.clip(cfg.target_missing_rate + rate_jitter + beta * offsets[i],
                        0.0, 1.0)
            m = (mask_draws[i] >= q).astype(np.float64)
            out.append(m)
            rates[i] = 1.0 - m.mean(axis=0)
        return out, rates

    if cfg.correlation_strength == 0.0:
        beta = 0.0
        masks, rates = masks_for(beta)
    else:
        lo, hi = 0.0, beta_max
        _, rates_hi = masks_for(hi)
        reachable = _measure_correlation(rates_hi, labels)
        if reachable < cfg.correlation_strength - 0.02:
            raise ConfigError(
                f"correlation {cfg.correlation_strength} unreachable at missing "
                f"rate {cfg.target_missing_rate}: max achievable ~{reachable:.3f}")
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            _, rates_mid = masks_for(mid)
            if _measure_correlation(rates_mid, labels) < cfg.correlation_strength:
                lo = mid
            else:
                hi = mid
        beta = hi
        masks, rates = masks_for(beta)

    samples = []
    for i in range(n):
        ts = np.arange(lengths[i], dtype=np.float64)
        samples.append(make_sample(ts, signals[i], masks[i], int(labels[i])))

    achieved_r = _measure_correlation(rates, labels)
    achieved_rate = float(np.mean([1.0 - m.mean() for m in masks]))
    per_var = [
        _pearson(rates[:, j], labels) for j in range(d)
    ]
    names = [f"var{j}" for j in range(d)]
    meta = {
        "generator_seed": cfg.seed,
        "target_missing_rate": cfg.target_missing_rate,
        "correlation_strength": cfg.correlation_strength,
        "achieved_missing_rate": achieved_rate,
        "achieved_correlation": achieved_r,
        "per_variable_correlation": [float(v) for v in per_var],
        "beta": float(beta),
    }
    return Dataset(samples=samples, variable_names=names,
                   task_mode=TASK_SOFTMAX, n_outputs=k, n_classes=k,
                   metadata=meta)


def _per_variable_rate_jitter(cfg: SyntheticConfig) -> np.ndarray:
    span = min(0.05, 0.5 * (cfg.target_missing_rate - 0.02),
               0.5 * (0.98 - cfg.target_missing_rate))
    span = max(span, 0.0)
    if cfg.n_variables == 1:
        return np.zeros(1)
    return np.linspace(-span, span, cfg.n_variables)


# ---------------------------------------------------------------------------
# CSV interchange

def save_csv(dataset: Dataset, data_path, labels_path):
    """Wide per-step CSV plus a labels CSV, empty cell = missing."""
    with open(data_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["series_id", "timestamp"] + list(dataset.variable_names))
        for i, s in enumerate(dataset.samples):
            for t in range(s.n_steps):
                row = [str(i), repr(float(s.timestamps[t]))]
                for d in range(s.n_variables):
                    row.append(repr(float(s.values[t, d])) if s.mask[t, d] > 0 else "")
                writer.writerow(row)
    with open(labels_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if dataset.task_mode == TASK_SOFTMAX:
            writer.writerow(["series_id", "label"])
            for i, s in enumerate(dataset.samples):
                writer.writerow([str(i), str(int(s.label))])
        else:
            writer.writerow(["series_id"] + [f"task{j}" for j in range(dataset.n_outputs)])
            for i, s in enumerate(dataset.samples):
                writer.writerow([str(i)] + [str(int(v)) for v in np.atleast_1d(s.label)])


def load_labels_csv(labels_path) -> dict:
    with open(labels_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "series_id":
            raise DataError(f"{labels_path}: first column must be series_id")
        labels = {}
        for row in reader:
            if not row:
                continue
            try:
                vals = [int(float(v)) for v in row[1:]]
            except ValueError as exc:
                raise DataError(f"{labels_path}: non-numeric label in {row}") from exc
            labels[row[0]] = vals[0] if len(vals) == 1 else np.array(vals, dtype=np.float64)
    if not labels:
        raise DataError(f"{labels_path}: no label rows")
    return labels


def load_raw_csv(data_path, labels_path=None) -> list:
    """Read the wide CSV into RawSeries, in file order, labels attached if given."""
    labels = load_labels_csv(labels_path) if labels_path else {}
    order = []
    rows = {}
    with open(data_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["series_id", "timestamp"]:
            raise DataError(f"{data_path}: header must start with series_id,timestamp")
        names = header[2:]
        if not names:
            raise DataError(f"{data_path}: no variable columns")
        for row in reader:
            if not row:
                continue
            sid = row[0]
            if sid not in rows:
                rows[sid] = []
                order.append(sid)
            try:
                ts = float(row[1])
            except ValueError as exc:
                raise DataError(f"{data_path}: bad timestamp {row[1]!r}") from exc
            vals = [float(v) if v != "" else np.nan for v in row[2:]]
            if len(vals) != len(names):
                raise DataError(f"{data_path}: ragged row for series {sid}")
            rows[sid].append((ts, vals))
    series = []
    for sid in order:
        entries = rows[sid]
        ts = np.array([e[0] for e in entries])
        vals = np.array([e[1] for e in entries])
        label = labels.get(sid) if labels else None
        if labels and label is None:
            raise DataError(f"series {sid} missing from labels file")
        series.append(RawSeries(sid, ts, vals, label))
    return series, names


def _task_setup(labels, n_classes=None):
    first = labels[0]
    if isinstance(first, np.ndarray):
        c = len(first)
        return TASK_SIGMOID, c, 0
    values = sorted({int(v) for v in labels})
    k = n_classes if n_classes else max(values) + 1
    if k <= 2:
        return TASK_SIGMOID, 1, 2
    return TASK_SOFTMAX, k, k


def load_csv(data_path, labels_path, bin_hours=None, n_classes=None) -> Dataset:
    """Load the CSV pair into a Dataset; optional re-binning for raw readings."""
    series, names = load_raw_csv(data_path, labels_path)
    samples = []
    for raw in series:
        if bin_hours:
            samples.append(resample(raw, bin_hours))
        else:
            mask = np.isfinite(raw.values).astype(np.float64)
            samples.append(make_sample(raw.timestamps, raw.values, mask, raw.label))
    task_mode, n_outputs, k = _task_setup([s.label for s in samples], n_classes)
    return Dataset(samples=samples, variable_names=list(names),
                   task_mode=task_mode, n_outputs=n_outputs, n_classes=k)
