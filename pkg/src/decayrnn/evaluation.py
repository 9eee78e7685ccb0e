"""Metrics, experiment protocols, and decay introspection reports."""

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import cells
from .cells import CellKind, parse_kind
from .data import (Dataset, empirical_means, kfold_split, normalize,
                   subsample_stratified, truncate_prefix, TASK_SOFTMAX)
from .errors import ConfigError, DataError
from .training import TrainConfig, TrainedModel, predict_proba, train

DECAY_SWEEP_MAX_HOURS = 24.0
DECAY_SWEEP_STEP = 0.25


def auc(scores, labels) -> float:
    """Area under the ROC curve via the rank-sum formulation.

    Tied scores contribute half a concordant pair (midranks).  Returns NaN
    with a warning when only one class is present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ConfigError("scores and labels must be matching 1-D arrays")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        warnings.warn("AUC undefined: labels contain a single class")
        return float("nan")
    _, inverse, counts = np.unique(scores, return_inverse=True,
                                   return_counts=True)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    midranks = starts + (counts + 1) / 2.0  # 1-based average rank per value
    ranks = midranks[inverse]
    rank_sum = float(ranks[labels == 1].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def score_dataset(model: TrainedModel, dataset: Dataset, indices=None):
    idx = list(range(dataset.n_samples)) if indices is None else list(indices)
    scores = np.empty((len(idx), model.n_outputs))
    for j, i in enumerate(idx):
        scores[j] = predict_proba(model, dataset.samples[i])
    labels = [dataset.samples[i].label for i in idx]
    return scores, labels


def per_task_auc(scores, labels, task_mode, n_classes):
    """One AUC per output unit: one-vs-rest for the softmax head, per task
    for the sigmoid head."""
    scores = np.asarray(scores)
    out = []
    if task_mode == TASK_SOFTMAX:
        y = np.asarray(labels, dtype=int)
        for c in range(n_classes):
            out.append(auc(scores[:, c], (y == c).astype(int)))
    else:
        targets = np.asarray(labels, dtype=np.float64).reshape(len(labels), -1)
        for c in range(targets.shape[1]):
            out.append(auc(scores[:, c], targets[:, c].astype(int)))
    return out


def average_auc(scores, labels, task_mode, n_classes) -> float:
    """Unweighted mean of the per-task AUCs."""
    values = [v for v in per_task_auc(scores, labels, task_mode, n_classes)
              if not math.isnan(v)]
    return float(np.mean(values)) if values else float("nan")


@dataclass
class FoldResult:
    fold: int
    seed: int
    test_auc: float
    per_task: list
    best_epoch: int
    epochs_run: int


@dataclass
class CVResult:
    kind: str
    folds: list                 # FoldResult
    mean_auc: float
    std_auc: float
    per_task_mean: list
    models: list = None         # retained only when asked


def _fold_seed(base_seed: int, fold: int) -> int:
    # documented scheme: one fixed stride per fold
    return base_seed * 100003 + fold


def prepare_fold(dataset: Dataset, split) -> Dataset:
    """Normalize with stats of the training portion only and attach the
    post-normalization empirical means of that portion."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prepared = normalize(dataset, split.train)
        prepared.means = empirical_means(prepared, split.train)
    return prepared


def cross_validate(kind, dataset: Dataset, config: TrainConfig, k: int = 5,
                   hidden=None, param_budget=None, keep_models=False) -> CVResult:
    """Stratified k-fold protocol: each fold trains with early stopping on its
    own validation carve and is scored only on its held-out test fold.  Test
    samples never influence normalization stats or empirical means."""
    kind = parse_kind(kind)
    splits = kfold_split(dataset, k, seed=config.seed, stratify=True)
    folds = []
    models = [] if keep_models else None
    for f, split in enumerate(splits):
        prepared = prepare_fold(dataset, split)
        fold_cfg = replace(config, seed=_fold_seed(config.seed, f))
        model, history = train(kind, prepared, split, fold_cfg,
                               hidden=hidden, param_budget=param_budget)
        scores, labels = score_dataset(model, prepared, split.test)
        per_task = per_task_auc(scores, labels, prepared.task_mode,
                                prepared.n_classes)
        folds.append(FoldResult(
            fold=f, seed=fold_cfg.seed,
            test_auc=average_auc(scores, labels, prepared.task_mode,
                                 prepared.n_classes),
            per_task=per_task,
            best_epoch=history["meta"]["best_epoch"],
            epochs_run=len(history["epochs"])))
        if keep_models:
            models.append((model, prepared, split))
    aucs = np.array([f.test_auc for f in folds])
    per_task_mean = np.array([f.per_task for f in folds]).mean(axis=0).tolist()
    return CVResult(kind=kind.value, folds=folds,
                    mean_auc=float(aucs.mean()), std_auc=float(aucs.std()),
                    per_task_mean=per_task_mean, models=models)


def online_eval(model: TrainedModel, dataset: Dataset, indices, cutoffs):
    """AUC from truncated prefixes scored through the unchanged model.

    Returns ``{cutoff: auc}``; cutoffs for which some sample has no step yet
    are skipped and reported in the ``skipped`` list.
    """
    idx = list(indices)
    labels = [dataset.samples[i].label for i in idx]
    results = {}
    skipped = []
    for cutoff in cutoffs:
        truncated = []
        empty = False
        for i in idx:
            s = dataset.samples[i]
            if float(s.timestamps.min()) > cutoff:
                empty = True
                break
            truncated.append(truncate_prefix(s, cutoff))
        if empty:
            skipped.append(cutoff)
            continue
        scores = np.array([predict_proba(model, s) for s in truncated])
        results[cutoff] = average_auc(scores, labels, model.task_mode,
                                      dataset.n_classes)
    return results, skipped


def scaling_experiment(kinds, dataset: Dataset, sizes, config: TrainConfig,
                       k: int = 5, hidden=None, param_budget=None):
    """Cross-validate each kind on stratified subsamples of growing size."""
    results = {}
    for size in sizes:
        idx = subsample_stratified(dataset, size, seed=config.seed)
        subset = replace(dataset, samples=[dataset.samples[i] for i in idx])
        for kind in kinds:
            kind = parse_kind(kind)
            results[(kind.value, int(size))] = cross_validate(
                kind, subset, config, k=k, hidden=hidden,
                param_budget=param_budget)
    return results


@dataclass
class DecayReport:
    variables: list
    sweep: np.ndarray = None          # (S,) interval grid in hours
    input_curves: np.ndarray = None   # (D, S) gamma values
    hidden_hist: list = None          # per variable: (bin_lo, bin_hi, count)


def decay_report(model: TrainedModel, variable_names=None,
                 hist_bins: int = 20) -> DecayReport:
    """Input-decay curves over a 0..24h interval sweep and histograms of each
    variable's hidden-decay weight column."""
    names = variable_names or [f"var{d}" for d in range(model.n_variables)]
    has_input = "w_gx" in model.params
    has_hidden = "w_gh" in model.params
    if not has_input and not has_hidden:
        raise ConfigError(f"{model.kind.value} has no decay blocks to report")
    report = DecayReport(variables=list(names))
    if has_input:
        sweep = np.arange(0.0, DECAY_SWEEP_MAX_HOURS + 1e-9, DECAY_SWEEP_STEP)
        pre = np.outer(model.params["w_gx"], sweep) + model.params["b_gx"][:, None]
        report.sweep = sweep
        report.input_curves = np.exp(-np.maximum(0.0, pre))
    if has_hidden:
        w = model.params["w_gh"]
        lo, hi = float(w.min()), float(w.max())
        if hi <= lo:
            hi = lo + 1e-9
        edges = np.linspace(lo, hi, hist_bins + 1)
        hist = []
        for d in range(model.n_variables):
            counts, _ = np.histogram(w[:, d], bins=edges)
            hist.append([(float(edges[i]), float(edges[i + 1]), int(counts[i]))
                         for i in range(hist_bins)])
        report.hidden_hist = hist
    return report


@dataclass
class EvalReport:
    """Bundle of evaluation outputs with full provenance."""

    seed: int
    fold_count: int
    cv: dict = field(default_factory=dict)            # kind -> CVResult summary
    online: dict = field(default_factory=dict)        # cutoff -> auc
    decay: DecayReport = None
    correlations: list = None                          # (variable, task, r)

    def to_dict(self):
        out = {"seed": self.seed, "fold_count": self.fold_count,
               "cv": self.cv, "online": self.online}
        if self.decay is not None:
            out["decay_variables"] = self.decay.variables
        if self.correlations is not None:
            out["correlations"] = self.correlations
        return out
