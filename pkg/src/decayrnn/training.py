"""Losses, regularization, Adam optimization, and the training loop.

Training is a single logical thread: batches are visited in seeded shuffle
order, per-sample gradients are reduced in index order, and every random
choice comes from a named stream of the run seed, so identical configs give
bit-identical histories.
"""

import copy
import json
import math
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from . import cells
from .cells import CellKind, parse_kind
from .data import Dataset, Sample, TASK_SIGMOID, TASK_SOFTMAX
from .errors import ConfigError, DataError, NumericalError
from .numeric import Rng, sigmoid, softmax

PROB_CLAMP = 1e-12
BN_EPS = 1e-5
BN_MOMENTUM = 0.9


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 300
    patience: int = 10
    head_dropout: float = 0.5
    recurrent_dropout: float = 0.3
    lam: float = 0.0            # weight of the observed-entry NLL regularizer
    seed: int = 0
    batch_norm: bool = True

    def __post_init__(self):
        for name in ("head_dropout", "recurrent_dropout"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1)")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.lam < 0.0:
            raise ConfigError("lam must be >= 0")

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            payload = json.load(fh)
        known = {k: v for k, v in payload.items() if k in cls.__dataclass_fields__}
        unknown = sorted(set(payload) - set(known))
        if unknown:
            raise ConfigError(f"unknown training config keys: {unknown}")
        return cls(**known)


@dataclass
class HeadParams:
    """Affine read-out plus per-unit batch-norm bookkeeping."""

    w: np.ndarray            # (C, H)
    b: np.ndarray            # (C,)
    bn_scale: np.ndarray     # (C,)
    bn_shift: np.ndarray     # (C,)
    bn_mean: np.ndarray      # (C,) running mean
    bn_var: np.ndarray       # (C,) running variance
    bn_steps: int = 0


def init_head(hidden: int, n_outputs: int, rng: Rng) -> HeadParams:
    bound = 1.0 / math.sqrt(hidden)
    w = (bound * (2.0 * rng.uniforms(n_outputs * hidden) - 1.0)).reshape(
        n_outputs, hidden)
    return HeadParams(w=w, b=np.zeros(n_outputs),
                      bn_scale=np.ones(n_outputs), bn_shift=np.zeros(n_outputs),
                      bn_mean=np.zeros(n_outputs), bn_var=np.ones(n_outputs))


def _activate(logits, task_mode):
    if task_mode == TASK_SOFTMAX:
        return softmax(logits)
    if task_mode == TASK_SIGMOID:
        return sigmoid(logits)
    raise ConfigError(f"unknown task mode {task_mode!r}")


def head_forward(head: HeadParams, h, task_mode, phase,
                 batch_norm=True, dropout_rate=0.0, rng=None):
    """Class probabilities from hidden states.

    Train phase applies inverted dropout to the hidden state and normalizes
    each logit unit with batch statistics (updating the running estimates);
    eval phase uses the running statistics and no dropout.
    """
    h = np.asarray(h, dtype=np.float64)
    single = h.ndim == 1
    hb = h[None, :] if single else h
    if phase == "train":
        probs, _ = _head_train_forward(head, hb, task_mode, batch_norm,
                                       dropout_rate, rng)
    elif phase == "eval":
        if batch_norm and head.bn_steps == 0:
            warnings.warn("batch-norm running statistics are uninitialized; "
                          "using mean 0, variance 1")
        logits = hb @ head.w.T + head.b
        if batch_norm:
            logits = head.bn_scale * (logits - head.bn_mean) / np.sqrt(
                head.bn_var + BN_EPS) + head.bn_shift
        probs = _activate(logits, task_mode)
    else:
        raise ConfigError(f"phase must be train or eval, got {phase!r}")
    return probs[0] if single else probs


def _head_train_forward(head, h_batch, task_mode, batch_norm, dropout_rate, rng):
    n = h_batch.shape[0]
    if dropout_rate > 0.0:
        if rng is None:
            raise ConfigError("head dropout needs an rng")
        keep = rng.bernoullis(h_batch.size, 1.0 - dropout_rate).reshape(h_batch.shape)
        h_used = h_batch * keep / (1.0 - dropout_rate)
    else:
        keep = None
        h_used = h_batch
    logits = h_used @ head.w.T + head.b
    cache = {"h_used": h_used, "keep": keep, "dropout_rate": dropout_rate,
             "logits": logits, "batch_norm": batch_norm}
    if batch_norm:
        mu = logits.mean(axis=0)
        var = logits.var(axis=0)
        x_hat = (logits - mu) / np.sqrt(var + BN_EPS)
        out = head.bn_scale * x_hat + head.bn_shift
        head.bn_mean = BN_MOMENTUM * head.bn_mean + (1.0 - BN_MOMENTUM) * mu
        head.bn_var = BN_MOMENTUM * head.bn_var + (1.0 - BN_MOMENTUM) * var
        head.bn_steps += 1
        cache.update({"x_hat": x_hat, "var": var, "n": n})
    else:
        out = logits
    probs = _activate(out, task_mode)
    cache["probs"] = probs
    return probs, cache


def _head_train_backward(head, cache, d_out):
    """Gradients of head parameters and of the raw hidden states."""
    if cache["batch_norm"]:
        x_hat, var, n = cache["x_hat"], cache["var"], cache["n"]
        d_scale = (d_out * x_hat).sum(axis=0)
        d_shift = d_out.sum(axis=0)
        inv = head.bn_scale / np.sqrt(var + BN_EPS)
        d_logits = inv * (d_out - d_out.mean(axis=0)
                          - x_hat * (d_out * x_hat).mean(axis=0))
    else:
        d_scale = np.zeros_like(head.bn_scale)
        d_shift = np.zeros_like(head.bn_shift)
        d_logits = d_out
    grads = {
        "w": d_logits.T @ cache["h_used"],
        "b": d_logits.sum(axis=0),
        "bn_scale": d_scale,
        "bn_shift": d_shift,
    }
    dh = d_logits @ head.w
    if cache["keep"] is not None:
        dh = dh * cache["keep"] / (1.0 - cache["dropout_rate"])
    return grads, dh


def _target_matrix(labels, task_mode, n_outputs):
    rows = []
    for label in labels:
        if task_mode == TASK_SOFTMAX:
            row = np.zeros(n_outputs)
            row[int(label)] = 1.0
        else:
            row = np.atleast_1d(np.asarray(label, dtype=np.float64))
        rows.append(row)
    return np.array(rows)


def loss(probabilities, label, task_mode, aux_nll=0.0, lam=0.0) -> float:
    """Cross-entropy (probabilities clamped) plus lam times the observed-entry
    NLL term; affine in lam for a fixed forward pass."""
    p = np.clip(np.atleast_1d(np.asarray(probabilities, dtype=np.float64)),
                PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = _target_matrix([label], task_mode, p.shape[-1])[0]
    if task_mode == TASK_SOFTMAX:
        data = -float((y * np.log(p)).sum())
    else:
        data = -float((y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).sum())
    return data + lam * aux_nll


def _batch_loss_grad(probs, targets, task_mode):
    """Mean data loss over the batch and its gradient at the activation output."""
    n = probs.shape[0]
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    if task_mode == TASK_SOFTMAX:
        value = float(-(targets * np.log(p)).sum() / n)
    else:
        value = float(-(targets * np.log(p)
                        + (1.0 - targets) * np.log(1.0 - p)).sum() / n)
    return value, (probs - targets) / n


_DROPOUT_BLOCKS = frozenset(
    ["w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "v_z", "v_r", "v_h",
     "w_i", "w_f", "w_o", "w_g", "u_i", "u_f", "u_o", "u_g"])


def recurrent_dropout_masks(params, rate, rng: Rng) -> dict:
    """One Bernoulli(1 - rate) mask per gate-matrix entry, sampled once per
    sequence and reused at every time step."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError("dropout rate must lie in [0, 1)")
    masks = {}
    for name, value in params.items():
        if name in _DROPOUT_BLOCKS:
            masks[name] = rng.bernoullis(value.size, 1.0 - rate).reshape(value.shape)
    return masks


def apply_weight_dropout(params, masks, rate) -> dict:
    """Masked copies with inverted scaling; unmasked blocks shared as-is."""
    if not masks:
        return params
    scale = 1.0 / (1.0 - rate)
    return {name: (value * masks[name] * scale if name in masks else value)
            for name, value in params.items()}


def _unmask_grads(grads, masks, rate):
    if not masks:
        return grads
    scale = 1.0 / (1.0 - rate)
    return {name: (g * masks[name] * scale if name in masks else g)
            for name, g in grads.items()}


class AdamState:
    """First/second moment estimates and the step counter, one slot per block."""

    def __init__(self, params):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0


def adam_step(state: AdamState, params, grads, config: TrainConfig) -> dict:
    """Standard bias-corrected Adam update; returns fresh parameter arrays."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in block {name!r}")
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    correction1 = 1.0 - b1 ** state.t
    correction2 = 1.0 - b2 ** state.t
    out = {}
    for name, value in params.items():
        g = grads[name]
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        out[name] = value - config.learning_rate * m_hat / (np.sqrt(v_hat)
                                                            + config.adam_eps)
    return out


# ---------------------------------------------------------------------------
# trained model container

@dataclass
class TrainedModel:
    kind: CellKind
    n_variables: int
    hidden: int
    n_outputs: int
    task_mode: str
    params: dict
    head: HeadParams
    means: np.ndarray
    norm_mean: np.ndarray
    norm_std: np.ndarray
    batch_norm: bool
    wiring: dict = field(default_factory=dict)


def predict_proba(model: TrainedModel, sample: Sample) -> np.ndarray:
    res = cells.forward_sequence(model.kind, model.params, sample, model.means,
                                 mode="test")
    return head_forward(model.head, res.h_last, model.task_mode, phase="eval",
                        batch_norm=model.batch_norm)


def apply_model_normalization(model: TrainedModel, dataset: Dataset) -> Dataset:
    """Scale a dataset with the stats stored in a trained model (inference
    must never refit normalization)."""
    from dataclasses import replace

    if dataset.n_variables != model.n_variables:
        raise DataError(f"dataset has {dataset.n_variables} variables, "
                        f"model expects {model.n_variables}")
    scaled = []
    for s in dataset.samples:
        vals = np.where(s.mask > 0,
                        (s.values - model.norm_mean) / model.norm_std, np.nan)
        scaled.append(Sample(s.timestamps, vals, s.mask, s.intervals, s.label))
    out = replace(dataset, samples=scaled)
    out.norm_mean = model.norm_mean
    out.norm_std = model.norm_std
    out.means = model.means
    return out


def save_model(model: TrainedModel, path):
    """Self-describing JSON container: kind tag, dimensions, named parameter
    blocks in their canonical order, and the training-split statistics."""
    payload = {
        "format": "decayrnn-model",
        "version": 1,
        "kind": model.kind.value,
        "dims": {"variables": model.n_variables, "hidden": model.hidden,
                 "outputs": model.n_outputs},
        "task_mode": model.task_mode,
        "batch_norm": model.batch_norm,
        "wiring": model.wiring,
        "blocks": {name: model.params[name].tolist()
                   for name in cells.param_shapes(model.kind, model.n_variables,
                                                  model.hidden)},
        "head": {
            "w": model.head.w.tolist(), "b": model.head.b.tolist(),
            "bn_scale": model.head.bn_scale.tolist(),
            "bn_shift": model.head.bn_shift.tolist(),
            "bn_mean": model.head.bn_mean.tolist(),
            "bn_var": model.head.bn_var.tolist(),
            "bn_steps": model.head.bn_steps,
        },
        "means": model.means.tolist(),
        "norm_mean": model.norm_mean.tolist(),
        "norm_std": model.norm_std.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path) -> TrainedModel:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != "decayrnn-model":
        raise DataError(f"{path} is not a model file")
    kind = parse_kind(payload["kind"])
    dims = payload["dims"]
    params = {name: np.asarray(block, dtype=np.float64)
              for name, block in payload["blocks"].items()}
    for name, shape in cells.param_shapes(kind, dims["variables"],
                                          dims["hidden"]).items():
        if name not in params or params[name].shape != shape:
            raise DataError(f"model block {name!r} missing or mis-shaped")
    hp = payload["head"]
    head = HeadParams(w=np.asarray(hp["w"]), b=np.asarray(hp["b"]),
                      bn_scale=np.asarray(hp["bn_scale"]),
                      bn_shift=np.asarray(hp["bn_shift"]),
                      bn_mean=np.asarray(hp["bn_mean"]),
                      bn_var=np.asarray(hp["bn_var"]),
                      bn_steps=int(hp["bn_steps"]))
    return TrainedModel(
        kind=kind, n_variables=dims["variables"], hidden=dims["hidden"],
        n_outputs=dims["outputs"], task_mode=payload["task_mode"],
        params=params, head=head, means=np.asarray(payload["means"]),
        norm_mean=np.asarray(payload["norm_mean"]),
        norm_std=np.asarray(payload["norm_std"]),
        batch_norm=bool(payload["batch_norm"]), wiring=payload.get("wiring", {}))


# ---------------------------------------------------------------------------
# the training loop

def _mean_task_auc(scores, labels, task_mode, n_outputs, n_classes):
    from .evaluation import auc  # local import: evaluation drives train for CV

    scores = np.asarray(scores)
    values = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if task_mode == TASK_SOFTMAX:
            y = np.asarray(labels, dtype=int)
            for c in range(n_classes):
                values.append(auc(scores[:, c], (y == c).astype(int)))
        else:
            targets = np.asarray(labels, dtype=np.float64).reshape(len(labels), -1)
            for c in range(targets.shape[1]):
                values.append(auc(scores[:, c], targets[:, c].astype(int)))
    values = [v for v in values if not math.isnan(v)]
    return float(np.mean(values)) if values else float("nan")


def _snapshot(params, head):
    return copy.deepcopy(params), copy.deepcopy(head)


def train(kind, dataset: Dataset, split, config: TrainConfig,
          hidden=None, param_budget=None):
    """Mini-batch Adam with per-epoch validation AUC and patience-based early
    stopping; returns the best-validation-epoch model and the history."""
    kind = parse_kind(kind)
    if dataset.means is None:
        raise ConfigError("dataset must be normalized before training "
                          "(means and stats missing)")
    n_vars, n_out = dataset.n_variables, dataset.n_outputs
    if hidden is None:
        if param_budget is None:
            raise ConfigError("provide hidden or param_budget")
        hidden = cells.size_for_budget(kind, n_vars, n_out, param_budget)

    rng_init = Rng(config.seed, 0)
    rng_shuffle = Rng(config.seed, 1)
    rng_wdrop = Rng(config.seed, 2)
    rng_hdrop = Rng(config.seed, 3)
    rng_imp = Rng(config.seed, 4)

    params = cells.init_params(kind, n_vars, hidden, rng_init)
    head = init_head(hidden, n_out, rng_init)
    adam_cell = AdamState(params)
    head_train = {"w": head.w, "b": head.b,
                  "bn_scale": head.bn_scale, "bn_shift": head.bn_shift}
    adam_head = AdamState(head_train)

    train_idx = [int(i) for i in split.train]
    val_idx = [int(i) for i in split.validation]
    is_imp = kind is CellKind.GRU_IMP

    history = []
    best_auc = -math.inf
    best_params, best_head = _snapshot(params, head)
    best_epoch = 0
    bad_epochs = 0
    aborted = None

    for epoch in range(1, config.max_epochs + 1):
        order = rng_shuffle.shuffled(train_idx)
        epoch_loss = 0.0
        epoch_nll = 0.0
        seen = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            try:
                batch_loss, batch_nll, cell_grads, head_grads = _batch_pass(
                    kind, params, head, dataset, batch, config,
                    rng_wdrop, rng_hdrop, rng_imp)
                params = adam_step(adam_cell, params, cell_grads, config)
                new_head = adam_step(adam_head,
                                     {"w": head.w, "b": head.b,
                                      "bn_scale": head.bn_scale,
                                      "bn_shift": head.bn_shift},
                                     head_grads, config)
                head.w, head.b = new_head["w"], new_head["b"]
                head.bn_scale, head.bn_shift = (new_head["bn_scale"],
                                                new_head["bn_shift"])
            except NumericalError as exc:
                aborted = str(exc)
                break
            epoch_loss += batch_loss * len(batch)
            epoch_nll += batch_nll * len(batch)
            seen += len(batch)
        if aborted:
            history.append({"epoch": epoch, "aborted": aborted})
            break
        val_auc = _validation_auc(kind, params, head, dataset, val_idx, config)
        record = {"epoch": epoch, "train_loss": epoch_loss / max(seen, 1),
                  "val_auc": val_auc}
        if is_imp:
            record["train_nll"] = epoch_nll / max(seen, 1)
        history.append(record)
        if not math.isnan(val_auc) and val_auc > best_auc:
            best_auc = val_auc
            best_params, best_head = _snapshot(params, head)
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break

    model = TrainedModel(
        kind=kind, n_variables=n_vars, hidden=hidden, n_outputs=n_out,
        task_mode=dataset.task_mode, params=best_params, head=best_head,
        means=dataset.means,
        norm_mean=(dataset.norm_mean if dataset.norm_mean is not None
                   else np.zeros(n_vars)),
        norm_std=(dataset.norm_std if dataset.norm_std is not None
                  else np.ones(n_vars)),
        batch_norm=config.batch_norm, wiring=cells.wiring_card(kind))
    meta = {"best_epoch": best_epoch, "best_val_auc": best_auc,
            "aborted": aborted}
    return model, {"epochs": history, "meta": meta}


def _batch_pass(kind, params, head, dataset, batch, config,
                rng_wdrop, rng_hdrop, rng_imp):
    n = len(batch)
    hidden = head.w.shape[1]
    h_final = np.empty((n, hidden))
    aux = np.zeros(n)
    per_sample = []
    for j, i in enumerate(batch):
        sample = dataset.samples[i]
        if config.recurrent_dropout > 0.0:
            masks = recurrent_dropout_masks(params, config.recurrent_dropout,
                                            rng_wdrop)
            used = apply_weight_dropout(params, masks, config.recurrent_dropout)
        else:
            masks, used = None, params
        res = cells.forward_sequence(
            kind, used, sample, dataset.means,
            mode="train", rng=rng_imp if kind is CellKind.GRU_IMP else None)
        h_final[j] = res.h_last
        aux[j] = res.aux_nll
        per_sample.append((used, masks, res))

    probs, cache = _head_train_forward(head, h_final, dataset.task_mode,
                                       config.batch_norm, config.head_dropout,
                                       rng_hdrop)
    targets = _target_matrix([dataset.samples[i].label for i in batch],
                             dataset.task_mode, dataset.n_outputs)
    data_loss, d_out = _batch_loss_grad(probs, targets, dataset.task_mode)
    batch_nll = float(aux.mean())
    total = data_loss + config.lam * batch_nll
    if not math.isfinite(total):
        raise NumericalError(f"non-finite loss {total}")

    head_grads, dh = _head_train_backward(head, cache, d_out)
    cell_grads = {name: np.zeros_like(v) for name, v in params.items()}
    for j in range(n):
        used, masks, res = per_sample[j]
        g = cells.backward_sequence(kind, used, res.cache, dh[j],
                                    grad_aux=config.lam / n)
        g = _unmask_grads(g, masks, config.recurrent_dropout)
        for name in cell_grads:
            cell_grads[name] += g[name]
    return total, batch_nll, cell_grads, head_grads


def _validation_auc(kind, params, head, dataset, val_idx, config):
    scores = np.empty((len(val_idx), dataset.n_outputs))
    for j, i in enumerate(val_idx):
        res = cells.forward_sequence(kind, params, dataset.samples[i],
                                     dataset.means, mode="test")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            scores[j] = head_forward(head, res.h_last, dataset.task_mode,
                                     phase="eval", batch_norm=config.batch_norm)
    labels = [dataset.samples[i].label for i in val_idx]
    return _mean_task_auc(scores, labels, dataset.task_mode,
                          dataset.n_outputs, dataset.n_classes)


# ---------------------------------------------------------------------------
# gradient verification harness

def _random_params(kind, n_vars, hidden, rng: Rng):
    """Random instance with every block active, including decay weights."""
    params = {}
    for name, shape in cells.param_shapes(kind, n_vars, hidden).items():
        size = int(np.prod(shape))
        if len(shape) == 2:
            bound = 0.8 / math.sqrt(shape[-1])
        else:
            bound = 0.5
        params[name] = (bound * (2.0 * rng.uniforms(size) - 1.0)).reshape(shape)
    return params


def _random_instance(kind, dims, rng: Rng):
    n_vars, hidden, t_steps = dims
    from .data import make_sample

    timestamps = np.cumsum(0.5 + rng.uniforms(t_steps))
    mask = rng.bernoullis(t_steps * n_vars, 0.7).reshape(t_steps, n_vars)
    values = rng.gaussians(t_steps * n_vars).reshape(t_steps, n_vars)
    sample = make_sample(timestamps, values, mask, 0)
    means = 0.5 * (2.0 * rng.uniforms(n_vars) - 1.0)
    params = _random_params(kind, n_vars, hidden, rng)
    return params, sample, means


def _kink_margin(kind, params, sample):
    """Distance of every decay pre-activation from the rectifier kink."""
    info = cells.KIND_INFO[kind]
    margins = [np.inf]
    delta = sample.intervals
    if info.input == "decay":
        margins.append(np.abs(delta * params["w_gx"] + params["b_gx"]).min())
    if info.hidden_decay:
        margins.append(np.abs(delta @ params["w_gh"].T + params["b_gh"]).min())
    if info.mask_decay:
        margins.append(np.abs(delta * params["w_gm"] + params["b_gm"]).min())
    if info.input == "imp":
        margins.append(np.abs(delta * params["w_gi"] + params["b_gi"]).min())
    return float(min(margins))


def _relative_error(a, b):
    scale = max(abs(a), abs(b), 1e-8)
    return abs(a - b) / scale


def gradient_check(kind, dims=(3, 4, 5), seed=0, lam=0.5, fd_step=1e-5) -> dict:
    """Compare exact backprop against central finite differences of the full
    loss (dropout off, batch-norm off) for every parameter block.

    Instances whose decay pre-activations come within 1e-3 of the rectifier
    kink are redrawn, so the finite-difference stencil never straddles it.
    """
    kind = parse_kind(kind)
    n_vars, hidden, t_steps = dims
    params = sample = means = None
    for attempt in range(100):
        rng = Rng(seed, stream=50 + attempt)
        params, sample, means = _random_instance(kind, dims, rng)
        if _kink_margin(kind, params, sample) > 1e-3:
            break
    else:
        raise NumericalError("no kink-free instance found")

    task_cycle = seed % 3
    if task_cycle == 0:
        task_mode, n_out, label = TASK_SOFTMAX, 3, 1
    elif task_cycle == 1:
        task_mode, n_out, label = TASK_SIGMOID, 1, 1
    else:
        task_mode, n_out, label = TASK_SIGMOID, 2, np.array([1.0, 0.0])
    head = init_head(hidden, n_out, Rng(seed, stream=7))
    head.b = 0.3 * (2.0 * Rng(seed, stream=8).uniforms(n_out) - 1.0)
    is_imp = kind is CellKind.GRU_IMP
    lam_used = lam if is_imp else 0.0

    def run_forward(p):
        return cells.forward_sequence(
            kind, p, sample, means,
            mode="train" if is_imp else "test",
            rng=Rng(seed, stream=9) if is_imp else None)  # frozen noise

    def loss_of(p, head_w, head_b):
        res = run_forward(p)
        logits = head_w @ res.h_last + head_b
        probs = _activate(logits, task_mode)
        return loss(probs, label, task_mode, res.aux_nll, lam_used)

    res = run_forward(params)
    logits = head.w @ res.h_last + head.b
    probs = _activate(logits, task_mode)
    target = _target_matrix([label], task_mode, n_out)[0]
    d_logits = probs - target
    head_grads = {"head_w": np.outer(d_logits, res.h_last), "head_b": d_logits}
    dh = head.w.T @ d_logits
    analytic = cells.backward_sequence(kind, params, res.cache, dh,
                                       grad_aux=lam_used)
    analytic.update(head_grads)

    errors = {}
    for name in list(params) + ["head_w", "head_b"]:
        if name == "head_w":
            target_arr = head.w
        elif name == "head_b":
            target_arr = head.b
        else:
            target_arr = params[name]
        block_err = 0.0
        flat = target_arr.reshape(-1)
        grad_flat = analytic[name].reshape(-1)
        for idx in range(flat.shape[0]):
            keep = flat[idx]
            flat[idx] = keep + fd_step
            up = loss_of(params, head.w, head.b)
            flat[idx] = keep - fd_step
            down = loss_of(params, head.w, head.b)
            flat[idx] = keep
            fd = (up - down) / (2.0 * fd_step)
            block_err = max(block_err, _relative_error(grad_flat[idx], fd))
        errors[name] = block_err
    return {"kind": kind.value, "seed": seed, "dims": list(dims),
            "lam": lam_used, "blocks": errors,
            "max_rel_err": max(errors.values())}


# ---------------------------------------------------------------------------
# logistic-regression baseline on a fixed-length grid

@dataclass
class LinearBaseline:
    w: np.ndarray          # (C, F)
    b: np.ndarray          # (C,)
    task_mode: str
    n_outputs: int
    bin_hours: float
    with_masking: bool
    n_bins: int


def baseline_features(dataset: Dataset, bin_hours: float, with_masking: bool):
    """Flattened forward/backward-filled grid, optionally with the mask grid."""
    if bin_hours <= 0:
        raise ConfigError("bin_hours must be positive")
    horizon = max(float(s.timestamps.max()) for s in dataset.samples)
    n_bins = int(math.floor(horizon / bin_hours)) + 1
    n_vars = dataset.n_variables
    feats = np.empty((dataset.n_samples,
                      n_bins * n_vars * (2 if with_masking else 1)))
    for i, s in enumerate(dataset.samples):
        total = np.zeros((n_bins, n_vars))
        count = np.zeros((n_bins, n_vars))
        bins = np.minimum((s.timestamps / bin_hours).astype(int), n_bins - 1)
        for t, b in enumerate(bins):
            obs = s.mask[t] > 0
            total[b, obs] += s.values[t, obs]
            count[b, obs] += 1
        grid_mask = (count > 0).astype(np.float64)
        grid = np.where(grid_mask > 0, total / np.maximum(count, 1.0), np.nan)
        grid = _fill_forward_backward(grid)
        row = [grid.reshape(-1)]
        if with_masking:
            row.append(grid_mask.reshape(-1))
        feats[i] = np.concatenate(row)
    return feats, n_bins


def _fill_forward_backward(grid):
    out = grid.copy()
    n_bins = out.shape[0]
    for t in range(1, n_bins):
        row = out[t]
        prev = out[t - 1]
        hole = ~np.isfinite(row)
        row[hole] = prev[hole]
    for t in range(n_bins - 2, -1, -1):
        row = out[t]
        nxt = out[t + 1]
        hole = ~np.isfinite(row)
        row[hole] = nxt[hole]
    out[~np.isfinite(out)] = 0.0
    return out


def logistic_baseline(dataset: Dataset, split, bin_hours: float,
                      with_masking: bool, config: TrainConfig,
                      l2: float = 1e-4):
    """L2-regularized logistic regression on the flattened grid, trained with
    the same Adam loop and early-stopping protocol as the recurrent models."""
    feats, n_bins = baseline_features(dataset, bin_hours, with_masking)
    n_out = dataset.n_outputs
    rng_init = Rng(config.seed, 0)
    rng_shuffle = Rng(config.seed, 1)
    dim = feats.shape[1]
    params = {"w": (2.0 * rng_init.uniforms(n_out * dim) - 1.0).reshape(
        n_out, dim) / math.sqrt(dim), "b": np.zeros(n_out)}
    adam = AdamState(params)
    train_idx = [int(i) for i in split.train]
    val_idx = [int(i) for i in split.validation]
    targets = _target_matrix([s.label for s in dataset.samples],
                             dataset.task_mode, n_out)
    history = []
    best_auc = -math.inf
    best = copy.deepcopy(params)
    bad = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng_shuffle.shuffled(train_idx)
        epoch_loss, seen = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            x = feats[batch]
            probs = _activate(x @ params["w"].T + params["b"],
                              dataset.task_mode)
            value, d_out = _batch_loss_grad(probs, targets[batch],
                                            dataset.task_mode)
            value += 0.5 * l2 * float((params["w"] ** 2).sum())
            grads = {"w": d_out.T @ x + l2 * params["w"],
                     "b": d_out.sum(axis=0)}
            params = adam_step(adam, params, grads, config)
            epoch_loss += value * len(batch)
            seen += len(batch)
        val_scores = _activate(feats[val_idx] @ params["w"].T + params["b"],
                               dataset.task_mode)
        val_auc = _mean_task_auc(val_scores,
                                 [dataset.samples[i].label for i in val_idx],
                                 dataset.task_mode, n_out, dataset.n_classes)
        history.append({"epoch": epoch, "train_loss": epoch_loss / max(seen, 1),
                        "val_auc": val_auc})
        if not math.isnan(val_auc) and val_auc > best_auc:
            best_auc = val_auc
            best = copy.deepcopy(params)
            bad = 0
        else:
            bad += 1
            if bad >= config.patience:
                break
    model = LinearBaseline(w=best["w"], b=best["b"],
                           task_mode=dataset.task_mode, n_outputs=n_out,
                           bin_hours=bin_hours, with_masking=with_masking,
                           n_bins=n_bins)
    return model, history


def baseline_predict(model: LinearBaseline, features) -> np.ndarray:
    return _activate(np.asarray(features) @ model.w.T + model.b,
                     model.task_mode)
