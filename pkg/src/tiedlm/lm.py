"""Two-layer LSTM language model with untied, tied, and projection-regularized variants.

The embedding pair is either separate input/output matrices or one shared
storage serving both roles. Logits at each position are the output embedding
applied to the top hidden state, optionally through a square projection whose
Frobenius norm is penalized. All gradients are computed by explicit
backpropagation through time and are verified against finite differences in
the test suite.

Shape conventions: batches are [B, T] int arrays, hidden activations
[B, T, H], logits [B, T, C]. Embedding row k is the vector for word k.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .corpus import batchify
from .numcore import PROB_CLAMP, SGD, frobenius_norm, optimizer_step


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class LMConfig:
    vocab_size: int
    hidden: int
    tied: bool = False
    projection: bool = False
    dropout: float = 0.0
    lam: float = 0.15
    init_scale: float = 0.1
    dtype: type = np.float64

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.vocab_size < 1 or self.hidden < 1:
            raise ValueError("vocab_size and hidden must be positive")


@dataclass
class SizePreset:
    """Named hyperparameter bundle for the two reference model sizes."""

    name: str
    hidden: int
    dropout: float
    init_scale: float
    lr: float
    decay_start: int
    decay_factor: float
    epochs: int
    clip_norm: float
    batch_size: int
    seq_len: int


SMALL = SizePreset("small", 200, 0.0, 0.1, 1.0, 4, 0.5, 13, 5.0, 20, 20)
LARGE = SizePreset("large", 1500, 0.65, 0.04, 1.0, 14, 1.0 / 1.15, 55, 10.0, 20, 35)
PRESETS = {p.name: p for p in (SMALL, LARGE)}

N_LAYERS = 2  # two stacked LSTM layers producing h1 and h2


class LMModel:
    """Parameter container; tied storage appears once in the params dict."""

    def __init__(self, config: LMConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params

    @classmethod
    def create(cls, config: LMConfig, seed: int = 0) -> "LMModel":
        rng = np.random.default_rng(seed)
        s = config.init_scale
        C, H = config.vocab_size, config.hidden
        dt = config.dtype

        def u(*shape):
            return rng.uniform(-s, s, shape).astype(dt)

        params: dict[str, np.ndarray] = {}
        if config.tied:
            params["emb"] = u(C, H)
        else:
            params["emb_in"] = u(C, H)
            params["emb_out"] = u(C, H)
        for layer in range(1, N_LAYERS + 1):
            params[f"lstm{layer}_wx"] = u(H, 4 * H)
            params[f"lstm{layer}_wh"] = u(H, 4 * H)
            params[f"lstm{layer}_bx"] = np.zeros(4 * H, dtype=dt)
            params[f"lstm{layer}_bh"] = np.zeros(4 * H, dtype=dt)
        if config.projection:
            params["proj"] = u(H, H)
        return cls(config, params)

    @property
    def emb_in(self) -> np.ndarray:
        return self.params["emb"] if self.config.tied else self.params["emb_in"]

    @property
    def emb_out(self) -> np.ndarray:
        return self.params["emb"] if self.config.tied else self.params["emb_out"]

    def embedding(self, role: str) -> np.ndarray:
        if role == "input":
            return self.emb_in
        if role == "output":
            return self.emb_out
        if role == "tied":
            if not self.config.tied:
                raise ValueError("model is untied; ask for the 'input' or 'output' role")
            return self.params["emb"]
        raise ValueError(f"unknown embedding role {role!r}")

    def clone_untied(self) -> "LMModel":
        """Untied copy whose input and output embeddings both equal this model's storage."""
        cfg = replace(self.config, tied=False)
        params = {k: v.copy() for k, v in self.params.items() if k != "emb"}
        params["emb_in"] = self.emb_in.copy()
        params["emb_out"] = self.emb_out.copy()
        return LMModel(cfg, params)


def param_count(model: LMModel) -> int:
    """Exact trainable-parameter count; tied storage counted once."""
    return int(sum(v.size for v in model.params.values()))


def param_count_config(config: LMConfig) -> int:
    """Closed-form parameter count for a configuration, without allocating it."""
    C, H = config.vocab_size, config.hidden
    total = (1 if config.tied else 2) * C * H
    total += N_LAYERS * (8 * H * H + 8 * H)
    if config.projection:
        total += H * H
    return total


def init_state(model: LMModel, batch_size: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Zero (h, c) pair per layer."""
    H = model.config.hidden
    dt = model.config.dtype
    return [
        (np.zeros((batch_size, H), dtype=dt), np.zeros((batch_size, H), dtype=dt))
        for _ in range(N_LAYERS)
    ]


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _lstm_forward(wx, wh, bx, bh, x, h0, c0):
    """Run one LSTM layer over a [B, T, D] input. Gate order: i, f, g, o."""
    B, T, _ = x.shape
    H = wh.shape[0]
    pre_x = x.reshape(B * T, -1) @ wx
    pre_x = pre_x.reshape(B, T, 4 * H)
    gates = np.empty((B, T, 4 * H), dtype=x.dtype)
    cs = np.empty((B, T, H), dtype=x.dtype)
    tanh_cs = np.empty((B, T, H), dtype=x.dtype)
    hs = np.empty((B, T, H), dtype=x.dtype)
    h_prev, c_prev = h0, c0
    bias = bx + bh
    for t in range(T):
        a = pre_x[:, t] + h_prev @ wh + bias
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H : 2 * H])
        g = np.tanh(a[:, 2 * H : 3 * H])
        o = _sigmoid(a[:, 3 * H :])
        c = f * c_prev + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        gates[:, t, :H] = i
        gates[:, t, H : 2 * H] = f
        gates[:, t, 2 * H : 3 * H] = g
        gates[:, t, 3 * H :] = o
        cs[:, t] = c
        tanh_cs[:, t] = tanh_c
        hs[:, t] = h
        h_prev, c_prev = h, c
    cache = {"x": x, "gates": gates, "c": cs, "tanh_c": tanh_cs, "h": hs, "h0": h0, "c0": c0}
    return hs, (h_prev.copy(), c_prev.copy()), cache


def _lstm_backward(wx, wh, cache, dh_out):
    """BPTT for one layer given dL/dh at every position. Truncated at the batch start."""
    x, gates, cs, tanh_cs, hs = cache["x"], cache["gates"], cache["c"], cache["tanh_c"], cache["h"]
    B, T, H = hs.shape
    i = gates[:, :, :H]
    f = gates[:, :, H : 2 * H]
    g = gates[:, :, 2 * H : 3 * H]
    o = gates[:, :, 3 * H :]
    c_prev_seq = np.concatenate([cache["c0"][:, None], cs[:, :-1]], axis=1)
    h_prev_seq = np.concatenate([cache["h0"][:, None], hs[:, :-1]], axis=1)

    da_all = np.empty((B, T, 4 * H), dtype=hs.dtype)
    dh_next = np.zeros((B, H), dtype=hs.dtype)
    dc_next = np.zeros((B, H), dtype=hs.dtype)
    for t in reversed(range(T)):
        dh = dh_out[:, t] + dh_next
        it, ft, gt, ot = i[:, t], f[:, t], g[:, t], o[:, t]
        tc = tanh_cs[:, t]
        do = dh * tc
        dc = dc_next + dh * ot * (1.0 - tc * tc)
        di = dc * gt
        df = dc * c_prev_seq[:, t]
        dg = dc * it
        dc_next = dc * ft
        da = da_all[:, t]
        da[:, :H] = di * it * (1.0 - it)
        da[:, H : 2 * H] = df * ft * (1.0 - ft)
        da[:, 2 * H : 3 * H] = dg * (1.0 - gt * gt)
        da[:, 3 * H :] = do * ot * (1.0 - ot)
        dh_next = da @ wh.T
    flat_da = da_all.reshape(B * T, 4 * H)
    dwx = x.reshape(B * T, -1).T @ flat_da
    dwh = h_prev_seq.reshape(B * T, H).T @ flat_da
    db = flat_da.sum(axis=0)
    dx = flat_da @ wx.T
    return dx.reshape(x.shape), dwx, dwh, db


def _row_softmax(logits):
    """Softmax over the last axis of a [B, T, C] array."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _make_mask(rng, shape, dropout, dtype):
    keep = 1.0 - dropout
    return (rng.random(shape) < keep).astype(dtype) / dtype(keep)


def forward(
    model: LMModel,
    inputs: np.ndarray,
    state=None,
    rng: np.random.Generator | None = None,
    train: bool = False,
    masks=None,
):
    """Run the model over a [B, T] id batch.

    Returns (logits [B, T, C], final_state, cache). Dropout masks apply at
    three sites (embedded input, between the layers, after the top layer)
    only when train is true and dropout > 0; they are drawn per position from
    ``rng`` unless explicitly supplied via ``masks``.
    """
    cfg = model.config
    inputs = np.asarray(inputs)
    if inputs.ndim != 2:
        raise ValueError(f"inputs must be [batch, seq], got shape {inputs.shape}")
    if inputs.min() < 0 or inputs.max() >= cfg.vocab_size:
        raise ValueError(
            f"input ids must lie in [0, {cfg.vocab_size}), got range "
            f"[{inputs.min()}, {inputs.max()}]"
        )
    B, T = inputs.shape
    if state is None:
        state = init_state(model, B)

    use_dropout = train and cfg.dropout > 0.0
    if use_dropout and masks is None:
        if rng is None:
            raise ValueError("training with dropout needs an rng (or explicit masks)")
        H = cfg.hidden
        masks = tuple(_make_mask(rng, (B, T, H), cfg.dropout, cfg.dtype) for _ in range(3))
    if not use_dropout:
        masks = None

    x = model.emb_in[inputs]
    x_in = x * masks[0] if masks else x
    h1, state1, cache1 = _lstm_forward(
        model.params["lstm1_wx"], model.params["lstm1_wh"],
        model.params["lstm1_bx"], model.params["lstm1_bh"],
        x_in, state[0][0], state[0][1],
    )
    h1_in = h1 * masks[1] if masks else h1
    h2, state2, cache2 = _lstm_forward(
        model.params["lstm2_wx"], model.params["lstm2_wh"],
        model.params["lstm2_bx"], model.params["lstm2_bh"],
        h1_in, state[1][0], state[1][1],
    )
    z = h2 * masks[2] if masks else h2

    if cfg.projection:
        zp = z.reshape(B * T, -1) @ model.params["proj"].T
        zp = zp.reshape(z.shape)
    else:
        zp = z
    logits = zp.reshape(B * T, -1) @ model.emb_out.T
    logits = logits.reshape(B, T, cfg.vocab_size)

    cache = {
        "inputs": inputs,
        "masks": masks,
        "layer1": cache1,
        "layer2": cache2,
        "z": z,
        "zp": zp,
        "logits": logits,
    }
    return logits, [state1, state2], cache


def data_loss(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean cross entropy over all batch x time positions."""
    probs = _row_softmax(np.asarray(logits, dtype=np.float64))
    B, T, _ = probs.shape
    picked = probs[np.arange(B)[:, None], np.arange(T)[None, :], targets]
    return float(-np.log(np.maximum(picked, PROB_CLAMP)).mean())


def total_loss(model: LMModel, logits: np.ndarray, targets: np.ndarray) -> float:
    """Data loss plus the projection penalty lam * ||P||_F when P is present."""
    loss = data_loss(logits, targets)
    if model.config.projection:
        loss += model.config.lam * frobenius_norm(model.params["proj"])
    return loss


def backward(model: LMModel, cache: dict, targets: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of total_loss for every parameter, via full BPTT.

    The input-role and output-role embedding gradients are always formed
    separately; a tied model's shared gradient is their sum, which makes the
    tied update literally the sum of the two role updates.
    """
    cfg = model.config
    inputs = cache["inputs"]
    masks = cache["masks"]
    B, T = inputs.shape
    n_pos = B * T

    probs = _row_softmax(cache["logits"])
    dlogits = probs.astype(cfg.dtype, copy=True)
    dlogits[np.arange(B)[:, None], np.arange(T)[None, :], targets] -= 1.0
    dlogits /= n_pos
    flat_dlogits = dlogits.reshape(n_pos, -1)

    zp_flat = cache["zp"].reshape(n_pos, -1)
    d_emb_out = flat_dlogits.T @ zp_flat
    dzp = flat_dlogits @ model.emb_out

    grads: dict[str, np.ndarray] = {}
    if cfg.projection:
        z_flat = cache["z"].reshape(n_pos, -1)
        grads["proj"] = dzp.T @ z_flat
        norm = frobenius_norm(model.params["proj"])
        if norm > 0.0:
            grads["proj"] += (cfg.lam / norm) * model.params["proj"]
        dz = dzp @ model.params["proj"]
    else:
        dz = dzp
    dz = dz.reshape(B, T, -1)

    dh2 = dz * masks[2] if masks else dz
    dh1_in, dwx2, dwh2, db2 = _lstm_backward(
        model.params["lstm2_wx"], model.params["lstm2_wh"], cache["layer2"], dh2
    )
    dh1 = dh1_in * masks[1] if masks else dh1_in
    dx_in, dwx1, dwh1, db1 = _lstm_backward(
        model.params["lstm1_wx"], model.params["lstm1_wh"], cache["layer1"], dh1
    )
    dx = dx_in * masks[0] if masks else dx_in

    d_emb_in = np.zeros_like(model.emb_in)
    np.add.at(d_emb_in, inputs.reshape(-1), dx.reshape(n_pos, -1))

    grads["lstm1_wx"], grads["lstm1_wh"] = dwx1, dwh1
    grads["lstm1_bx"], grads["lstm1_bh"] = db1, db1.copy()
    grads["lstm2_wx"], grads["lstm2_wh"] = dwx2, dwh2
    grads["lstm2_bx"], grads["lstm2_bh"] = db2, db2.copy()
    if cfg.tied:
        grads["emb"] = d_emb_in + d_emb_out
    else:
        grads["emb_in"] = d_emb_in
        grads["emb_out"] = d_emb_out
    return grads


def embedding_grad_input(p, emb_out, target: int, hidden_jacobian) -> np.ndarray:
    """Standalone input-embedding row gradient for one position.

    Evaluates (sum_x p_x V_x - V_target) @ J, where J is the Jacobian of the
    top hidden state with respect to the embedded input at that position.
    """
    p = np.asarray(p, dtype=np.float64)
    bracket = p @ emb_out - emb_out[target]
    return bracket @ hidden_jacobian


def embedding_grad_output(p, h2, target: int) -> np.ndarray:
    """Standalone full output-embedding gradient for one position.

    Row target gets (p_target - 1) h2; every other row k gets p_k h2.
    """
    p = np.asarray(p, dtype=np.float64)
    d = p.copy()
    d[target] -= 1.0
    return np.outer(d, np.asarray(h2, dtype=np.float64))


def _step_layer_jacobian(wx, wh, bx, bh, x, h_prev, c_prev):
    """One-step hidden output and its Jacobian w.r.t. the step input vector."""
    H = wh.shape[0]
    a = x @ wx + h_prev @ wh + bx + bh
    i = _sigmoid(a[:H])
    f = _sigmoid(a[H : 2 * H])
    g = np.tanh(a[2 * H : 3 * H])
    o = _sigmoid(a[3 * H :])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    j_i = wx[:, :H].T
    j_f = wx[:, H : 2 * H].T
    j_g = wx[:, 2 * H : 3 * H].T
    j_o = wx[:, 3 * H :].T
    jc = (g * i * (1 - i))[:, None] * j_i + (c_prev * f * (1 - f))[:, None] * j_f
    jc += (i * (1 - g * g))[:, None] * j_g
    jh = (tanh_c * o * (1 - o))[:, None] * j_o + (o * (1 - tanh_c * tanh_c))[:, None] * jc
    return h, c, jh


def step_hidden_jacobian(model: LMModel, token: int, state=None):
    """Top hidden state and its Jacobian d h2 / d x for a single-step input.

    ``x`` is the embedded input vector at that step; the recurrent state is
    held fixed. Used to cross-check the standalone input-embedding formula
    against full BPTT.
    """
    if state is None:
        state = init_state(model, 1)
    x = model.emb_in[token]
    p = model.params
    h1, _, j1 = _step_layer_jacobian(
        p["lstm1_wx"], p["lstm1_wh"], p["lstm1_bx"], p["lstm1_bh"],
        x, state[0][0][0], state[0][1][0],
    )
    h2, _, j2 = _step_layer_jacobian(
        p["lstm2_wx"], p["lstm2_wh"], p["lstm2_bx"], p["lstm2_bh"],
        h1, state[1][0][0], state[1][1][0],
    )
    return h2, j2 @ j1


def tied_gradient(model: LMModel, inputs, targets, state=None) -> np.ndarray:
    """Gradient of the shared embedding storage of a tied model for one batch."""
    if not model.config.tied:
        raise ValueError("tied_gradient needs a tied model")
    _, _, cache = forward(model, inputs, state)
    return backward(model, cache, targets)["emb"]


def perplexity(model: LMModel, ids: Sequence[int], batch_size: int = 20, seq_len: int = 20) -> float:
    """exp of the mean per-position negative log likelihood over a corpus.

    Hidden state is carried across consecutive batches; dropout is disabled.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("cannot evaluate perplexity on an empty corpus")
    batches = batchify(ids, batch_size, seq_len)
    state = init_state(model, batch_size)
    total = 0.0
    count = 0
    for batch in batches:
        logits, state, _ = forward(model, batch.inputs, state)
        probs = _row_softmax(np.asarray(logits, dtype=np.float64))
        B, T, _ = probs.shape
        picked = probs[np.arange(B)[:, None], np.arange(T)[None, :], batch.targets]
        total += float(-np.log(np.maximum(picked, PROB_CLAMP)).sum())
        count += B * T
    return float(np.exp(total / count))


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    train_ppl: float
    valid_ppl: float
    wall_seconds: float


def train(
    model: LMModel,
    train_ids: Sequence[int],
    valid_ids: Sequence[int],
    preset: SizePreset,
    seed: int = 0,
) -> list[EpochMetrics]:
    """SGD training with global-norm clipping and the preset's lr decay.

    Fully reproducible for a fixed seed: dropout is the only stochastic
    element and draws from a generator seeded here. Raises DivergenceError
    on a non-finite loss.
    """
    cfg = model.config
    sgd = SGD(
        lr=preset.lr,
        clip_norm=preset.clip_norm,
        decay_start=preset.decay_start,
        decay_factor=preset.decay_factor,
    )
    rng = np.random.default_rng(seed)
    train_ids = np.asarray(train_ids, dtype=np.int64)
    valid_ids = np.asarray(valid_ids, dtype=np.int64)
    batches = batchify(train_ids, preset.batch_size, preset.seq_len)
    metrics: list[EpochMetrics] = []
    for epoch in range(1, preset.epochs + 1):
        t0 = time.perf_counter()
        lr = sgd.lr_at(epoch)
        state = init_state(model, preset.batch_size)
        loss_sum = 0.0
        for batch in batches:
            logits, state, cache = forward(model, batch.inputs, state, rng=rng, train=True)
            loss = data_loss(logits, batch.targets)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}")
            loss_sum += loss
            grads = backward(model, cache, batch.targets)
            optimizer_step(sgd, model.params, grads, lr=lr)
        train_ppl = float(np.exp(loss_sum / len(batches)))
        valid_ppl = perplexity(model, valid_ids, preset.batch_size, preset.seq_len)
        metrics.append(
            EpochMetrics(epoch, lr, train_ppl, valid_ppl, time.perf_counter() - t0)
        )
    return metrics
