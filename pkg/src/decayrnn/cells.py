"""Recurrent cell variants for partially observed series.

Eleven cell kinds share one gated recurrence and differ in how missing
measurements enter it: imputation against the empirical mean or the last
observation, concatenated mask/interval channels, learned decay of the
input, hidden state, or mask, and a goal-oriented imputation head that
samples missing inputs from a learned Gaussian.

Gate equations (column vectors, element-wise products):

    z = sigmoid(Wz x + Uz h + [Vz m] + bz)
    r = sigmoid(Wr x + Ur h + [Vr m] + br)
    c = tanh(Wh x + Uh (r * h) + [Vh m] + bh)
    h' = (1 - z) * h + z * c

Decay rates are exp(-max(0, W delta + b)), always in (0, 1], equal to 1
exactly when the pre-activation is non-positive.  ``backward_sequence``
returns the exact loss gradient for every parameter block, including the
paths through the decay terms and imputation blends; the subgradient of
max(0, .) at 0 is taken as 0.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .numeric import Rng, matvec, sigmoid, tanh


class CellKind(enum.Enum):
    GRU_MEAN = "gru-mean"
    GRU_FORWARD = "gru-forward"
    GRU_SIMPLE = "gru-simple"
    GRU_SIMPLE_MASKING = "gru-simple-masking"
    GRU_SIMPLE_INTERVAL = "gru-simple-interval"
    GRU_D = "gru-d"
    GRU_DI = "gru-di"
    GRU_DS = "gru-ds"
    GRU_DM = "gru-dm"
    GRU_IMP = "gru-imp"
    LSTM_MEAN = "lstm-mean"


_ALIASES = {
    "grumean": CellKind.GRU_MEAN,
    "gruforward": CellKind.GRU_FORWARD,
    "grusimple": CellKind.GRU_SIMPLE,
    "grusimplemasking": CellKind.GRU_SIMPLE_MASKING,
    "grusimplemaskingonly": CellKind.GRU_SIMPLE_MASKING,
    "grusimpleinterval": CellKind.GRU_SIMPLE_INTERVAL,
    "grusimpleintervalonly": CellKind.GRU_SIMPLE_INTERVAL,
    "grud": CellKind.GRU_D,
    "grudi": CellKind.GRU_DI,
    "gruds": CellKind.GRU_DS,
    "grudm": CellKind.GRU_DM,
    "gruimp": CellKind.GRU_IMP,
    "lstmmean": CellKind.LSTM_MEAN,
    "lstm": CellKind.LSTM_MEAN,
}


def parse_kind(text) -> CellKind:
    if isinstance(text, CellKind):
        return text
    key = "".join(ch for ch in str(text).lower() if ch.isalnum())
    if key not in _ALIASES:
        raise ConfigError(f"unknown cell kind {text!r}; choices: "
                          + ", ".join(k.value for k in CellKind))
    return _ALIASES[key]


@dataclass(frozen=True)
class KindInfo:
    input: str               # "mean" | "forward" | "decay" | "imp"
    concat_mask: bool = False
    concat_interval: bool = False
    uses_v: bool = False
    hidden_decay: bool = False
    mask_decay: bool = False
    lstm: bool = False


KIND_INFO = {
    CellKind.GRU_MEAN: KindInfo(input="mean"),
    CellKind.GRU_FORWARD: KindInfo(input="forward"),
    CellKind.GRU_SIMPLE: KindInfo(input="mean", concat_mask=True, concat_interval=True),
    CellKind.GRU_SIMPLE_MASKING: KindInfo(input="mean", concat_mask=True),
    CellKind.GRU_SIMPLE_INTERVAL: KindInfo(input="mean", concat_interval=True),
    CellKind.GRU_D: KindInfo(input="decay", uses_v=True, hidden_decay=True),
    CellKind.GRU_DI: KindInfo(input="decay", uses_v=True),
    CellKind.GRU_DS: KindInfo(input="forward", uses_v=True, hidden_decay=True),
    CellKind.GRU_DM: KindInfo(input="forward", uses_v=True, mask_decay=True),
    CellKind.GRU_IMP: KindInfo(input="imp"),
    CellKind.LSTM_MEAN: KindInfo(input="mean", lstm=True),
}


def wiring_card(kind: CellKind) -> dict:
    """Machine-readable record of the structural conventions of a kind."""
    info = KIND_INFO[parse_kind(kind)]
    active = []
    if info.input == "decay":
        active.append("input")
    if info.hidden_decay:
        active.append("hidden")
    if info.mask_decay:
        active.append("mask")
    if info.input == "imp":
        active.append("imputation")
    return {
        "input_fill": info.input,
        "mask_feed": ("decayed" if info.mask_decay else
                      ("raw" if info.uses_v else "none")),
        "active_decays": active,
        "extra_channels": (["mask"] if info.concat_mask else [])
        + (["interval"] if info.concat_interval else []),
    }


def input_width(kind: CellKind, n_vars: int) -> int:
    info = KIND_INFO[parse_kind(kind)]
    return n_vars * (1 + int(info.concat_mask) + int(info.concat_interval))


def param_shapes(kind: CellKind, n_vars: int, hidden: int) -> dict:
    """Ordered parameter blocks for a kind; the order is the serialization order."""
    kind = parse_kind(kind)
    info = KIND_INFO[kind]
    d, h = n_vars, hidden
    din = input_width(kind, d)
    shapes = {}
    if info.lstm:
        for g in ("i", "f", "o", "g"):
            shapes[f"w_{g}"] = (h, din)
        for g in ("i", "f", "o", "g"):
            shapes[f"u_{g}"] = (h, h)
        for g in ("i", "f", "o", "g"):
            shapes[f"b_{g}"] = (h,)
        return shapes
    for g in ("z", "r", "h"):
        shapes[f"w_{g}"] = (h, din)
    for g in ("z", "r", "h"):
        shapes[f"u_{g}"] = (h, h)
    for g in ("z", "r", "h"):
        shapes[f"b_{g}"] = (h,)
    if info.uses_v:
        for g in ("z", "r", "h"):
            shapes[f"v_{g}"] = (h, d)
    if info.input == "decay":
        shapes["w_gx"] = (d,)
        shapes["b_gx"] = (d,)
    if info.hidden_decay:
        shapes["w_gh"] = (h, d)
        shapes["b_gh"] = (h,)
    if info.mask_decay:
        shapes["w_gm"] = (d,)
        shapes["b_gm"] = (d,)
    if info.input == "imp":
        shapes["w_mu"] = (d, h)
        shapes["b_mu"] = (d,)
        shapes["w_gi"] = (d,)
        shapes["b_gi"] = (d,)
    return shapes


def init_params(kind: CellKind, n_vars: int, hidden: int, rng: Rng) -> dict:
    """Gate weights uniform in +-1/sqrt(fan-in); decay blocks and biases zero,
    so every decay starts neutral (gamma = 1) and is learned from data."""
    kind = parse_kind(kind)
    params = {}
    for name, shape in param_shapes(kind, n_vars, hidden).items():
        if name.startswith("b_") or name.startswith(("w_gx", "w_gh", "w_gm", "w_gi")):
            params[name] = np.zeros(shape)
            continue
        fan_in = shape[-1]
        bound = 1.0 / np.sqrt(fan_in)
        size = int(np.prod(shape))
        params[name] = (bound * (2.0 * rng.uniforms(size) - 1.0)).reshape(shape)
    return params


def count_params(kind: CellKind, n_vars: int, hidden: int, n_outputs: int) -> int:
    """Cell parameters plus the classifier head.

    The head counts n_outputs * (hidden + 1) affine values plus 4 batch-norm
    bookkeeping values per output unit (scale, shift, running mean/variance).
    """
    if n_vars < 1 or hidden < 1 or n_outputs < 1:
        raise ConfigError("dimensions must be positive")
    cell = sum(int(np.prod(s)) for s in param_shapes(kind, n_vars, hidden).values())
    head = n_outputs * (hidden + 1) + 4 * n_outputs
    return cell + head


def size_for_budget(kind: CellKind, n_vars: int, n_outputs: int,
                    param_budget: int) -> int:
    """Largest hidden size whose parameter count fits the budget."""
    kind = parse_kind(kind)
    if count_params(kind, n_vars, 1, n_outputs) > param_budget:
        raise ConfigError(f"budget {param_budget} below the minimum model size")
    h = 1
    while count_params(kind, n_vars, h + 1, n_outputs) <= param_budget:
        h += 1
    return h


# ---------------------------------------------------------------------------
# elementwise building blocks

def impute_mean(x_t, m_t, means) -> np.ndarray:
    """Observed entries pass through; missing entries take the variable mean."""
    x = np.where(np.asarray(m_t) > 0, np.asarray(x_t, dtype=np.float64), 0.0)
    return m_t * x + (1.0 - m_t) * means


def impute_forward(x_t, m_t, x_last) -> np.ndarray:
    """Observed entries pass through; missing entries repeat the last observation."""
    x = np.where(np.asarray(m_t) > 0, np.asarray(x_t, dtype=np.float64), 0.0)
    return m_t * x + (1.0 - m_t) * x_last


def build_simple_input(x_imputed, m_t, delta_t, kind) -> np.ndarray:
    """Concatenated [x; m; delta] channels in the layout the kind expects."""
    kind = parse_kind(kind)
    info = KIND_INFO[kind]
    if not (info.concat_mask or info.concat_interval):
        raise ConfigError(f"{kind.value} takes no concatenated channels")
    parts = [np.asarray(x_imputed, dtype=np.float64)]
    if info.concat_mask:
        parts.append(np.asarray(m_t, dtype=np.float64))
    if info.concat_interval:
        parts.append(np.asarray(delta_t, dtype=np.float64))
    return np.concatenate(parts)


def decay_rate(w_gamma, b_gamma, delta_t) -> np.ndarray:
    """exp(-max(0, W delta + b)): in (0, 1], equal to 1 iff the pre-activation
    is non-positive.  1-D weights act diagonally; 2-D weights act as a matrix."""
    w = np.asarray(w_gamma, dtype=np.float64)
    delta = np.asarray(delta_t, dtype=np.float64)
    pre = (matvec(w, delta) if w.ndim == 2 else w * delta) + b_gamma
    return np.exp(-np.maximum(0.0, pre))


def decay_input(x_t, m_t, x_last, means, gamma_x) -> np.ndarray:
    """Missing entries blend between the last observation and the mean."""
    x = np.where(np.asarray(m_t) > 0, np.asarray(x_t, dtype=np.float64), 0.0)
    fill = gamma_x * x_last + (1.0 - gamma_x) * means
    return m_t * x + (1.0 - m_t) * fill


def decay_hidden(h_prev, gamma_h) -> np.ndarray:
    return np.asarray(h_prev, dtype=np.float64) * gamma_h


def decay_mask(m_t, gamma_m) -> np.ndarray:
    """Observed entries stay 1; missing entries report the decayed value."""
    m = np.asarray(m_t, dtype=np.float64)
    return m + (1.0 - m) * gamma_m


# ---------------------------------------------------------------------------
# single steps

@dataclass
class StepState:
    h: np.ndarray
    x_last: np.ndarray      # last observed value per variable, means before that
    means: np.ndarray       # empirical means of the training split
    c: np.ndarray = None    # LSTM cell state


def initial_state(hidden: int, means, lstm: bool = False) -> StepState:
    means = np.asarray(means, dtype=np.float64)
    return StepState(h=np.zeros(hidden), x_last=means.copy(), means=means,
                     c=np.zeros(hidden) if lstm else None)


def gru_step(params, h_prev, x_in):
    """One gated update; the cache keeps the activations needed for backprop."""
    z = sigmoid(matvec(params["w_z"], x_in) + matvec(params["u_z"], h_prev)
                + params["b_z"])
    r = sigmoid(matvec(params["w_r"], x_in) + matvec(params["u_r"], h_prev)
                + params["b_r"])
    c = tanh(matvec(params["w_h"], x_in)
             + matvec(params["u_h"], r * h_prev) + params["b_h"])
    h = (1.0 - z) * h_prev + z * c
    return h, {"z": z, "r": r, "c": c, "x_in": x_in, "h_prev": h_prev}


def _gru_gates(params, x_in, h_dec, m_feed=None):
    extra_z = matvec(params["v_z"], m_feed) if m_feed is not None else 0.0
    extra_r = matvec(params["v_r"], m_feed) if m_feed is not None else 0.0
    extra_h = matvec(params["v_h"], m_feed) if m_feed is not None else 0.0
    z = sigmoid(matvec(params["w_z"], x_in) + matvec(params["u_z"], h_dec)
                + extra_z + params["b_z"])
    r = sigmoid(matvec(params["w_r"], x_in) + matvec(params["u_r"], h_dec)
                + extra_r + params["b_r"])
    c = tanh(matvec(params["w_h"], x_in) + matvec(params["u_h"], r * h_dec)
             + extra_h + params["b_h"])
    h = (1.0 - z) * h_dec + z * c
    return h, z, r, c


def grud_step(params, state: StepState, x_t, m_t, delta_t, kind):
    """One step of a decay-equipped kind; x_last updates where observed."""
    kind = parse_kind(kind)
    info = KIND_INFO[kind]
    if info.input not in ("decay", "forward") or not info.uses_v:
        raise ConfigError(f"grud_step does not handle {kind.value}")
    m = np.asarray(m_t, dtype=np.float64)
    if info.input == "decay":
        gamma_x = decay_rate(params["w_gx"], params["b_gx"], delta_t)
        x_in = decay_input(x_t, m, state.x_last, state.means, gamma_x)
    else:
        x_in = impute_forward(x_t, m, state.x_last)
    h_dec = state.h
    if info.hidden_decay:
        h_dec = decay_hidden(state.h, decay_rate(params["w_gh"], params["b_gh"],
                                                 delta_t))
    m_feed = m
    if info.mask_decay:
        m_feed = decay_mask(m, decay_rate(params["w_gm"], params["b_gm"], delta_t))
    h, z, r, c = _gru_gates(params, x_in, h_dec, m_feed)
    x_obs = np.where(m > 0, np.asarray(x_t, dtype=np.float64), 0.0)
    new_state = StepState(h=h, x_last=m * x_obs + (1.0 - m) * state.x_last,
                          means=state.means)
    cache = {"z": z, "r": r, "c": c, "x_in": x_in, "h_dec": h_dec, "m_feed": m_feed}
    return new_state, cache


def gruimp_step(params, state: StepState, x_t, m_t, delta_t, mode, rng: Rng = None):
    """Goal-oriented imputation step.

    Missing inputs take mu + eps (training) or mu (test), where mu is the
    decayed linear readout of the previous hidden state.  Returns the new
    state, the cache, and the masked average log-density of the observed
    entries under N(mu, 1) (0 when nothing is observed).
    """
    if mode not in ("train", "test"):
        raise ConfigError(f"mode must be train or test, got {mode!r}")
    m = np.asarray(m_t, dtype=np.float64)
    x = np.where(m > 0, np.asarray(x_t, dtype=np.float64), 0.0)
    gamma = decay_rate(params["w_gi"], params["b_gi"], delta_t)
    a = matvec(params["w_mu"], state.h) + params["b_mu"]
    mu = gamma * a
    if mode == "train":
        if rng is None:
            raise ConfigError("train mode needs an rng for the noise draws")
        eps = rng.gaussians(mu.shape[0])
    else:
        eps = np.zeros_like(mu)
    x_tilde = mu + eps
    x_in = m * x + (1.0 - m) * x_tilde
    h, cache = gru_step(params, state.h, x_in)
    n_obs = float(m.sum())
    if n_obs > 0:
        log_p = -0.5 * np.log(2.0 * np.pi) - 0.5 * (x - mu) ** 2
        step_ll = float((m * log_p).sum() / n_obs)
    else:
        step_ll = 0.0
    new_state = StepState(h=h, x_last=m * x + (1.0 - m) * state.x_last,
                          means=state.means)
    cache.update({"mu": mu, "a_mu": a, "gamma_i": gamma, "eps": eps, "mask": m})
    return new_state, cache, step_ll


def lstm_step(params, h_prev, c_prev, x_in):
    i = sigmoid(matvec(params["w_i"], x_in) + matvec(params["u_i"], h_prev)
                + params["b_i"])
    f = sigmoid(matvec(params["w_f"], x_in) + matvec(params["u_f"], h_prev)
                + params["b_f"])
    o = sigmoid(matvec(params["w_o"], x_in) + matvec(params["u_o"], h_prev)
                + params["b_o"])
    g = tanh(matvec(params["w_g"], x_in) + matvec(params["u_g"], h_prev)
             + params["b_g"])
    c = f * c_prev + i * g
    h = o * tanh(c)
    cache = {"i": i, "f": f, "o": o, "g": g, "c_state": c,
             "x_in": x_in, "h_prev": h_prev, "c_prev": c_prev}
    return h, c, cache


# ---------------------------------------------------------------------------
# full-sequence forward with caching

@dataclass
class ForwardResult:
    h_last: np.ndarray
    hidden: np.ndarray      # (T, H) trajectory
    cache: dict
    aux_nll: float = 0.0    # per-sequence average observed-entry Gaussian NLL


def _last_obs_trajectory(x_filled, mask, means):
    """L[t] = value of each variable at its most recent observation strictly
    before step t (the means before anything is seen)."""
    t_steps, n_vars = mask.shape
    out = np.empty((t_steps, n_vars))
    last = np.asarray(means, dtype=np.float64).copy()
    for t in range(t_steps):
        out[t] = last
        last = np.where(mask[t] > 0, x_filled[t], last)
    return out


def forward_sequence(kind, params, sample, means, mode="test", rng=None):
    """Run a sequence through the kind's recurrence from h_0 = 0.

    Gate contributions that do not depend on the hidden state are evaluated
    for all steps at once; the per-step loop only carries the recurrent part.
    ``mode`` matters only for the imputation kind (noise on vs off).
    """
    kind = parse_kind(kind)
    info = KIND_INFO[kind]
    t_steps = sample.n_steps
    if t_steps == 0:
        raise DataError("empty sequence")
    mask = sample.mask
    delta = sample.intervals
    x_filled = np.where(mask > 0, sample.values, 0.0)
    means = np.asarray(means, dtype=np.float64)
    hidden = params["u_z"].shape[0] if not info.lstm else params["u_i"].shape[0]

    cache = {"kind": kind, "mask": mask, "delta": delta, "x_filled": x_filled,
             "means": means}

    if info.lstm:
        return _forward_lstm(params, cache, hidden)

    # input channel, precomputed when it does not depend on the hidden state
    if info.input == "mean":
        x_base = mask * x_filled + (1.0 - mask) * means
    elif info.input == "forward":
        last = _last_obs_trajectory(x_filled, mask, means)
        x_base = mask * x_filled + (1.0 - mask) * last
    elif info.input == "decay":
        last = _last_obs_trajectory(x_filled, mask, means)
        pre_x = delta * params["w_gx"] + params["b_gx"]
        gamma_x = np.exp(-np.maximum(0.0, pre_x))
        x_base = mask * x_filled + (1.0 - mask) * (
            gamma_x * last + (1.0 - gamma_x) * means)
        cache.update({"pre_x": pre_x, "gamma_x": gamma_x, "last_obs": last})
    else:  # imp: built inside the loop
        x_base = None

    if info.mask_decay:
        pre_m = delta * params["w_gm"] + params["b_gm"]
        gamma_m = np.exp(-np.maximum(0.0, pre_m))
        m_feed = mask + (1.0 - mask) * gamma_m
        cache.update({"pre_m": pre_m, "gamma_m": gamma_m})
    else:
        m_feed = mask
    cache["m_feed"] = m_feed if info.uses_v else None

    if info.hidden_decay:
        pre_h = delta @ params["w_gh"].T + params["b_gh"]
        gamma_h = np.exp(-np.maximum(0.0, pre_h))
        cache.update({"pre_h": pre_h, "gamma_h": gamma_h})
    else:
        gamma_h = None

    if x_base is not None:
        parts = [x_base]
        if info.concat_mask:
            parts.append(mask)
        if info.concat_interval:
            parts.append(delta)
        x_in = np.concatenate(parts, axis=1)
        base_z = x_in @ params["w_z"].T + params["b_z"]
        base_r = x_in @ params["w_r"].T + params["b_r"]
        base_c = x_in @ params["w_h"].T + params["b_h"]
        if info.uses_v:
            base_z = base_z + m_feed @ params["v_z"].T
            base_r = base_r + m_feed @ params["v_r"].T
            base_c = base_c + m_feed @ params["v_h"].T
    else:
        x_in = np.empty((t_steps, means.shape[0]))
        base_z = base_r = base_c = None

    is_imp = info.input == "imp"
    if is_imp:
        if mode not in ("train", "test"):
            raise ConfigError(f"mode must be train or test, got {mode!r}")
        if mode == "train" and rng is None:
            raise ConfigError("train mode needs an rng for the noise draws")
        pre_i = delta * params["w_gi"] + params["b_gi"]
        gamma_i = np.exp(-np.maximum(0.0, pre_i))
        n_vars = means.shape[0]
        eps = (rng.gaussians(t_steps * n_vars).reshape(t_steps, n_vars)
               if mode == "train" else np.zeros((t_steps, n_vars)))
        mu_rows = np.empty((t_steps, n_vars))
        a_rows = np.empty((t_steps, n_vars))
        obs = mask.sum(axis=1)
        cache.update({"pre_i": pre_i, "gamma_i": gamma_i, "eps": eps,
                      "obs_count": obs})

    h = np.zeros(hidden)
    hs = np.empty((t_steps, hidden))
    h_prev_rows = np.empty((t_steps, hidden))
    h_dec_rows = np.empty((t_steps, hidden))
    z_rows = np.empty((t_steps, hidden))
    r_rows = np.empty((t_steps, hidden))
    c_rows = np.empty((t_steps, hidden))
    total_ll = 0.0
    for t in range(t_steps):
        h_prev_rows[t] = h
        if is_imp:
            a_rows[t] = params["w_mu"] @ h + params["b_mu"]
            mu_rows[t] = gamma_i[t] * a_rows[t]
            x_tilde = mu_rows[t] + eps[t]
            x_in[t] = mask[t] * x_filled[t] + (1.0 - mask[t]) * x_tilde
            az = params["w_z"] @ x_in[t] + params["b_z"]
            ar = params["w_r"] @ x_in[t] + params["b_r"]
            ac_in = params["w_h"] @ x_in[t] + params["b_h"]
            if obs[t] > 0:
                log_p = -0.5 * np.log(2.0 * np.pi) \
                    - 0.5 * (x_filled[t] - mu_rows[t]) ** 2
                total_ll += float((mask[t] * log_p).sum() / obs[t])
        else:
            az, ar, ac_in = base_z[t], base_r[t], base_c[t]
        hd = gamma_h[t] * h if gamma_h is not None else h
        h_dec_rows[t] = hd
        z = sigmoid(az + params["u_z"] @ hd)
        r = sigmoid(ar + params["u_r"] @ hd)
        c = tanh(ac_in + params["u_h"] @ (r * hd))
        h = (1.0 - z) * hd + z * c
        z_rows[t], r_rows[t], c_rows[t] = z, r, c
        hs[t] = h

    cache.update({"x_in": x_in, "h_prev": h_prev_rows, "h_dec": h_dec_rows,
                  "z": z_rows, "r": r_rows, "c": c_rows})
    if is_imp:
        cache.update({"mu": mu_rows, "a_mu": a_rows})
        aux = -total_ll / t_steps
    else:
        aux = 0.0
    return ForwardResult(h_last=h, hidden=hs, cache=cache, aux_nll=aux)


def _forward_lstm(params, cache, hidden):
    mask, x_filled, means = cache["mask"], cache["x_filled"], cache["means"]
    t_steps = mask.shape[0]
    x_in = mask * x_filled + (1.0 - mask) * means
    base = {g: x_in @ params[f"w_{g}"].T + params[f"b_{g}"]
            for g in ("i", "f", "o", "g")}
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    rows = {k: np.empty((t_steps, hidden))
            for k in ("i", "f", "o", "g", "c_state", "h_prev", "c_prev")}
    hs = np.empty((t_steps, hidden))
    for t in range(t_steps):
        rows["h_prev"][t], rows["c_prev"][t] = h, c
        i = sigmoid(base["i"][t] + params["u_i"] @ h)
        f = sigmoid(base["f"][t] + params["u_f"] @ h)
        o = sigmoid(base["o"][t] + params["u_o"] @ h)
        g = tanh(base["g"][t] + params["u_g"] @ h)
        c = f * rows["c_prev"][t] + i * g
        h = o * tanh(c)
        rows["i"][t], rows["f"][t], rows["o"][t], rows["g"][t] = i, f, o, g
        rows["c_state"][t] = c
        hs[t] = h
    cache.update(rows)
    cache["x_in"] = x_in
    return ForwardResult(h_last=h, hidden=hs, cache=cache, aux_nll=0.0)


# ---------------------------------------------------------------------------
# exact backward pass

def backward_sequence(kind, params, cache, grad_h_last, grad_aux=0.0) -> dict:
    """Gradients of the scalar loss for every parameter block.

    ``grad_h_last`` is the loss gradient at the final hidden state;
    ``grad_aux`` is the loss sensitivity to the sequence's average
    observed-entry NLL (only the imputation kind uses it).
    """
    kind = parse_kind(kind)
    if cache["kind"] is not kind:
        raise ConfigError(f"cache was built for {cache['kind'].value}, "
                          f"not {kind.value}")
    info = KIND_INFO[kind]
    if info.lstm:
        return _backward_lstm(params, cache, grad_h_last)

    mask, delta = cache["mask"], cache["delta"]
    x_in, h_prev, h_dec = cache["x_in"], cache["h_prev"], cache["h_dec"]
    z_rows, r_rows, c_rows = cache["z"], cache["r"], cache["c"]
    t_steps, hidden = z_rows.shape
    n_vars = mask.shape[1]
    is_imp = info.input == "imp"

    da_z = np.empty((t_steps, hidden))
    da_r = np.empty((t_steps, hidden))
    da_c = np.empty((t_steps, hidden))
    dgamma_h = np.empty((t_steps, hidden)) if info.hidden_decay else None
    da_mu = np.empty((t_steps, n_vars)) if is_imp else None
    dmu_rows = np.empty((t_steps, n_vars)) if is_imp else None

    if is_imp:
        # loss += grad_aux * mean_t( -(sum_d m log p) / sum_d m )
        mu, obs = cache["mu"], cache["obs_count"]
        x_filled = cache["x_filled"]
        safe = np.maximum(obs, 1.0)
        dmu_nll = grad_aux * mask * (mu - x_filled) / (t_steps * safe[:, None])
        dmu_nll[obs == 0] = 0.0

    dh = np.asarray(grad_h_last, dtype=np.float64).copy()
    for t in range(t_steps - 1, -1, -1):
        z, r, c, hd = z_rows[t], r_rows[t], c_rows[t], h_dec[t]
        dz = dh * (c - hd)
        dc = dh * z
        dhd = dh * (1.0 - z)
        ac = dc * (1.0 - c * c)
        u_ac = params["u_h"].T @ ac
        dr = u_ac * hd
        dhd = dhd + u_ac * r
        ar = dr * r * (1.0 - r)
        az = dz * z * (1.0 - z)
        dhd = dhd + params["u_z"].T @ az + params["u_r"].T @ ar
        da_z[t], da_r[t], da_c[t] = az, ar, ac
        if info.hidden_decay:
            dgamma_h[t] = dhd * h_prev[t]
            dh = dhd * cache["gamma_h"][t]
        else:
            dh = dhd
        if is_imp:
            dx = params["w_z"].T @ az + params["w_r"].T @ ar + params["w_h"].T @ ac
            dmu = dx * (1.0 - mask[t]) + dmu_nll[t]
            dmu_rows[t] = dmu
            da = dmu * cache["gamma_i"][t]
            da_mu[t] = da
            dh = dh + params["w_mu"].T @ da

    grads = {}
    grads["w_z"] = da_z.T @ x_in
    grads["w_r"] = da_r.T @ x_in
    grads["w_h"] = da_c.T @ x_in
    grads["u_z"] = da_z.T @ h_dec
    grads["u_r"] = da_r.T @ h_dec
    grads["u_h"] = da_c.T @ (r_rows * h_dec)
    grads["b_z"] = da_z.sum(axis=0)
    grads["b_r"] = da_r.sum(axis=0)
    grads["b_h"] = da_c.sum(axis=0)
    if info.uses_v:
        m_feed = cache["m_feed"]
        grads["v_z"] = da_z.T @ m_feed
        grads["v_r"] = da_r.T @ m_feed
        grads["v_h"] = da_c.T @ m_feed
    if info.input == "decay":
        dx_in = da_z @ params["w_z"] + da_r @ params["w_r"] + da_c @ params["w_h"]
        dx_base = dx_in[:, :n_vars]
        dgx = dx_base * (1.0 - mask) * (cache["last_obs"] - cache["means"])
        dpre = -dgx * cache["gamma_x"] * (cache["pre_x"] > 0)
        grads["w_gx"] = (dpre * delta).sum(axis=0)
        grads["b_gx"] = dpre.sum(axis=0)
    if info.hidden_decay:
        dpre_h = -dgamma_h * cache["gamma_h"] * (cache["pre_h"] > 0)
        grads["w_gh"] = dpre_h.T @ delta
        grads["b_gh"] = dpre_h.sum(axis=0)
    if info.mask_decay:
        dm_feed = da_z @ params["v_z"] + da_r @ params["v_r"] + da_c @ params["v_h"]
        dgm = dm_feed * (1.0 - mask)
        dpre_m = -dgm * cache["gamma_m"] * (cache["pre_m"] > 0)
        grads["w_gm"] = (dpre_m * delta).sum(axis=0)
        grads["b_gm"] = dpre_m.sum(axis=0)
    if is_imp:
        grads["w_mu"] = da_mu.T @ h_prev
        grads["b_mu"] = da_mu.sum(axis=0)
        dgi = dmu_rows * cache["a_mu"]
        dpre_i = -dgi * cache["gamma_i"] * (cache["pre_i"] > 0)
        grads["w_gi"] = (dpre_i * delta).sum(axis=0)
        grads["b_gi"] = dpre_i.sum(axis=0)
    return grads


def _backward_lstm(params, cache, grad_h_last):
    t_steps, hidden = cache["i"].shape
    da = {g: np.empty((t_steps, hidden)) for g in ("i", "f", "o", "g")}
    dh = np.asarray(grad_h_last, dtype=np.float64).copy()
    dc = np.zeros(hidden)
    for t in range(t_steps - 1, -1, -1):
        i, f, o, g = (cache[k][t] for k in ("i", "f", "o", "g"))
        c = cache["c_state"][t]
        tc = np.tanh(c)
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        df = dc * cache["c_prev"][t]
        di = dc * g
        dg = dc * i
        a_i = di * i * (1.0 - i)
        a_f = df * f * (1.0 - f)
        a_o = do * o * (1.0 - o)
        a_g = dg * (1.0 - g * g)
        da["i"][t], da["f"][t], da["o"][t], da["g"][t] = a_i, a_f, a_o, a_g
        dh = (params["u_i"].T @ a_i + params["u_f"].T @ a_f
              + params["u_o"].T @ a_o + params["u_g"].T @ a_g)
        dc = dc * f
    grads = {}
    for g in ("i", "f", "o", "g"):
        grads[f"w_{g}"] = da[g].T @ cache["x_in"]
        grads[f"u_{g}"] = da[g].T @ cache["h_prev"]
        grads[f"b_{g}"] = da[g].sum(axis=0)
    return grads
