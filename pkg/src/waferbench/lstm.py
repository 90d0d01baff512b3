"""LSTM cell with backpropagation through time, plus a linear readout.

Two topologies: sequential (a few hidden units stepping through the series
one sample at a time) and windowed (one step over the whole series, each
sample treated as a feature). Training is online SGD on squared error
against +/-1 targets, like the dense nets.

Gate blocks are stored stacked along the row axis in the order
[input, forget, output, candidate], so the three sigmoid gates occupy the
first 3H rows and the tanh candidate the last H. The per-sample unroll and
BPTT run as numba kernels; evaluation batches across records in numpy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .dense import (EpochStats, Metrics, TrainConfig, TrainingDiverged,
                    classify, epoch_order)

GATE_ORDER = ("input", "forget", "output", "cell")

_INIT_STREAM = 0  # shared convention with dense.init_params

SEQUENTIAL_CLIP_DEFAULT = 5.0  # BPTT over ~150 steps risks exploding gradients

# Mode-tuned starting points. The sequential cell needs a strongly open
# forget gate from the outset: with ~150 steps between a mid-series level
# excursion and the readout, a neutral gate forgets the evidence before it
# can earn gradient. Small recurrent weights keep the early dynamics close
# to a pure integrator. The windowed cell sees the whole series in one step,
# so it instead gets wide input weights and a large fixed readout, which
# breaks the symmetric stall where all probes align into one linear feature.
SEQUENTIAL_FORGET_BIAS = 2.25
SEQUENTIAL_RECURRENT_BOUND = 0.25
SEQUENTIAL_READOUT_INIT = 0.5
WINDOWED_FORGET_BIAS = 1.0
WINDOWED_INPUT_BOUND = 1.5
WINDOWED_READOUT_INIT = 2.0

# The single-step topology tolerates (and needs) a hotter learning rate
# than the 152-step unroll; used when the caller does not override it.
WINDOWED_LEARNING_RATE = 0.004


@dataclass(frozen=True)
class LstmConfig:
    input_dim: int
    hidden_dim: int
    time_steps: int
    mode: str  # "sequential" | "windowed"

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.time_steps) < 1:
            raise ValueError("dimensions must be positive")
        if self.mode not in ("sequential", "windowed"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "windowed" and self.time_steps != 1:
            raise ValueError("windowed mode requires exactly one time step")

    @property
    def series_length(self) -> int:
        return self.input_dim * self.time_steps

    @classmethod
    def sequential(cls, series_length: int = 152, hidden_dim: int = 4) -> "LstmConfig":
        return cls(input_dim=1, hidden_dim=hidden_dim,
                   time_steps=series_length, mode="sequential")

    @classmethod
    def windowed(cls, series_length: int = 152) -> "LstmConfig":
        return cls(input_dim=series_length, hidden_dim=1,
                   time_steps=1, mode="windowed")

    def default_scale_max(self) -> float:
        return 0.5 if self.mode == "sequential" else 0.1


@dataclass(frozen=True)
class LstmCellParams:
    """Stacked gate parameters: wx (4H, D), wh (4H, H), b (4H,)."""

    wx: np.ndarray
    wh: np.ndarray
    b: np.ndarray

    @property
    def hidden_dim(self) -> int:
        return self.wh.shape[1]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(W, U, b) views for one gate block."""
        h = self.hidden_dim
        k = GATE_ORDER.index(name)
        sl = slice(k * h, (k + 1) * h)
        return self.wx[sl], self.wh[sl], self.b[sl]

    def all_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.wx)) and np.all(np.isfinite(self.wh))
                    and np.all(np.isfinite(self.b)))


@dataclass(frozen=True)
class LstmModel:
    config: LstmConfig
    cell: LstmCellParams
    w_out: np.ndarray  # (H,)
    b_out: float


@dataclass(frozen=True)
class LstmState:
    """Unroll record: hidden/cell trajectories and gate caches for BPTT.

    h and c carry time_steps+1 rows (row 0 is the zero initial state);
    gates holds the post-activation [i, f, o, g] blocks per step.
    """

    inputs: np.ndarray  # (T, D)
    h: np.ndarray       # (T+1, H)
    c: np.ndarray       # (T+1, H)
    gates: np.ndarray   # (T, 4H)


@dataclass(frozen=True)
class LstmGrads:
    wx: np.ndarray
    wh: np.ndarray
    b: np.ndarray
    w_out: np.ndarray
    b_out: float


def init_lstm_model(config: LstmConfig, seed: int) -> LstmModel:
    """Mode-tuned start: uniform gate weights, constant positive readout.

    Gate biases are zero apart from the forget block. Deterministic per seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_INIT_STREAM,)))
    h, d = config.hidden_dim, config.input_dim
    if config.mode == "sequential":
        bx, bh = 1.0 / math.sqrt(d), SEQUENTIAL_RECURRENT_BOUND
        forget_bias, readout = SEQUENTIAL_FORGET_BIAS, SEQUENTIAL_READOUT_INIT
    else:
        bx, bh = WINDOWED_INPUT_BOUND, 1.0 / math.sqrt(h)
        forget_bias, readout = WINDOWED_FORGET_BIAS, WINDOWED_READOUT_INIT
    wx = rng.uniform(-bx, bx, size=(4 * h, d))
    wh = rng.uniform(-bh, bh, size=(4 * h, h))
    b = np.zeros(4 * h)
    b[h:2 * h] = forget_bias
    w_out = np.full(h, readout)
    return LstmModel(config, LstmCellParams(wx, wh, b), w_out, 0.0)


def default_train_config(config: LstmConfig, epochs: int = 40,
                         seed: int = 0) -> TrainConfig:
    """Benchmark defaults: 0.001 for the sequential net, hotter windowed."""
    lr = 0.001 if config.mode == "sequential" else WINDOWED_LEARNING_RATE
    return TrainConfig(learning_rate=lr, epochs=epochs, seed=seed)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def cell_forward(params: LstmCellParams, x_t: np.ndarray,
                 h_prev: np.ndarray, c_prev: np.ndarray):
    """One gated step; returns (h, c, gates) with gates = [i, f, o, g] stacked."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (params.wx.shape[1],):
        raise ValueError(f"input shape {x_t.shape} does not match cell input "
                         f"dim {params.wx.shape[1]}")
    hdim = params.hidden_dim
    z = params.wx @ x_t + params.wh @ h_prev + params.b
    gates = np.empty_like(z)
    gates[:3 * hdim] = _sigmoid(z[:3 * hdim])
    gates[3 * hdim:] = np.tanh(z[3 * hdim:])
    i, f, o, g = (gates[k * hdim:(k + 1) * hdim] for k in range(4))
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, gates


@njit(cache=True)
def _unroll_kernel(wx, wh, b, xs, h_tr, c_tr, gates):
    """Forward unroll; fills h_tr/c_tr (T+1, H) and gates (T, 4H) in place."""
    steps, d = xs.shape
    hdim = wh.shape[1]
    for t in range(steps):
        for r in range(4 * hdim):
            z = b[r]
            for j in range(d):
                z += wx[r, j] * xs[t, j]
            for j in range(hdim):
                z += wh[r, j] * h_tr[t, j]
            if r < 3 * hdim:
                gates[t, r] = 1.0 / (1.0 + math.exp(-z))
            else:
                gates[t, r] = math.tanh(z)
        for j in range(hdim):
            c = gates[t, hdim + j] * c_tr[t, j] + gates[t, j] * gates[t, 3 * hdim + j]
            c_tr[t + 1, j] = c
            h_tr[t + 1, j] = gates[t, 2 * hdim + j] * math.tanh(c)


@njit(cache=True)
def _bptt_kernel(wx, wh, xs, h_tr, c_tr, gates, dh, d_wx, d_wh, d_b):
    """Backward pass from dh (grad wrt final h); accumulates into d_* in place."""
    steps, d = xs.shape
    hdim = wh.shape[1]
    dh_t = dh.copy()
    dc_t = np.zeros(hdim)
    dz = np.empty(4 * hdim)
    for t in range(steps - 1, -1, -1):
        for j in range(hdim):
            i = gates[t, j]
            f = gates[t, hdim + j]
            o = gates[t, 2 * hdim + j]
            g = gates[t, 3 * hdim + j]
            tc = math.tanh(c_tr[t + 1, j])
            dc = dh_t[j] * o * (1.0 - tc * tc) + dc_t[j]
            dz[j] = dc * g * i * (1.0 - i)
            dz[hdim + j] = dc * c_tr[t, j] * f * (1.0 - f)
            dz[2 * hdim + j] = dh_t[j] * tc * o * (1.0 - o)
            dz[3 * hdim + j] = dc * i * (1.0 - g * g)
            dc_t[j] = dc * f
        for r in range(4 * hdim):
            for j in range(d):
                d_wx[r, j] += dz[r] * xs[t, j]
            for j in range(hdim):
                d_wh[r, j] += dz[r] * h_tr[t, j]
            d_b[r] += dz[r]
        for j in range(hdim):
            acc = 0.0
            for r in range(4 * hdim):
                acc += wh[r, j] * dz[r]
            dh_t[j] = acc


@njit(cache=True)
def _train_epoch_kernel(wx, wh, b, w_out, b_out, xs_all, targets, order,
                        lr, clip_norm):
    """One epoch of per-pattern SGD; mutates parameters in place.

    b_out is a length-1 array so the kernel can update it. Returns
    (loss_sum, correct_count). clip_norm <= 0 disables clipping.
    """
    n, steps, d = xs_all.shape
    hdim = wh.shape[1]
    h_tr = np.zeros((steps + 1, hdim))
    c_tr = np.zeros((steps + 1, hdim))
    gates = np.empty((steps, 4 * hdim))
    d_wx = np.empty_like(wx)
    d_wh = np.empty_like(wh)
    d_b = np.empty_like(b)
    dh = np.empty(hdim)
    loss_sum = 0.0
    correct = 0
    for s in range(n):
        idx = order[s]
        xs = xs_all[idx]
        for j in range(hdim):
            h_tr[0, j] = 0.0
            c_tr[0, j] = 0.0
        _unroll_kernel(wx, wh, b, xs, h_tr, c_tr, gates)
        y = b_out[0]
        for j in range(hdim):
            y += w_out[j] * h_tr[steps, j]
        resid = y - targets[idx]
        loss_sum += 0.5 * resid * resid
        pred = 1.0 if y >= 0.0 else -1.0
        if pred == targets[idx]:
            correct += 1

        d_wx[:] = 0.0
        d_wh[:] = 0.0
        d_b[:] = 0.0
        for j in range(hdim):
            dh[j] = resid * w_out[j]
        _bptt_kernel(wx, wh, xs, h_tr, c_tr, gates, dh, d_wx, d_wh, d_b)
        d_wout_scale = resid  # d_wout = resid * h_T, d_bout = resid

        if clip_norm > 0.0:
            sq = 0.0
            for r in range(4 * hdim):
                for j in range(d):
                    sq += d_wx[r, j] * d_wx[r, j]
                for j in range(hdim):
                    sq += d_wh[r, j] * d_wh[r, j]
                sq += d_b[r] * d_b[r]
            for j in range(hdim):
                sq += (resid * h_tr[steps, j]) ** 2
            sq += resid * resid
            norm = math.sqrt(sq)
            if norm > clip_norm:
                scale = clip_norm / norm
                for r in range(4 * hdim):
                    for j in range(d):
                        d_wx[r, j] *= scale
                    for j in range(hdim):
                        d_wh[r, j] *= scale
                    d_b[r] *= scale
                d_wout_scale = resid * scale
        else:
            scale = 1.0

        for r in range(4 * hdim):
            for j in range(d):
                wx[r, j] -= lr * d_wx[r, j]
            for j in range(hdim):
                wh[r, j] -= lr * d_wh[r, j]
            b[r] -= lr * d_b[r]
        for j in range(hdim):
            w_out[j] -= lr * d_wout_scale * h_tr[steps, j]
        b_out[0] -= lr * d_wout_scale
    return loss_sum, correct


def _series_matrix(config: LstmConfig, series: np.ndarray) -> np.ndarray:
    series = np.ascontiguousarray(series, dtype=np.float64)
    if series.shape != (config.series_length,):
        raise ValueError(f"series length {series.shape} does not match "
                         f"input_dim*time_steps = {config.series_length}")
    return series.reshape(config.time_steps, config.input_dim)


def unroll_forward(params: LstmCellParams, config: LstmConfig,
                   series: np.ndarray) -> tuple[np.ndarray, LstmState]:
    """Run the cell over the series from zero initial state.

    Windowed mode performs exactly one step on the whole series; sequential
    mode one step per sample.
    """
    xs = _series_matrix(config, series)
    hdim = config.hidden_dim
    h_tr = np.zeros((config.time_steps + 1, hdim))
    c_tr = np.zeros((config.time_steps + 1, hdim))
    gates = np.empty((config.time_steps, 4 * hdim))
    _unroll_kernel(params.wx, params.wh, params.b, xs, h_tr, c_tr, gates)
    return h_tr[-1].copy(), LstmState(xs, h_tr, c_tr, gates)


def output_layer(h_final: np.ndarray, w_out: np.ndarray, b_out: float) -> float:
    """Linear readout, no squashing."""
    w_out = np.asarray(w_out, dtype=np.float64)
    if w_out.shape != np.shape(h_final):
        raise ValueError("readout weight length does not match hidden size")
    return float(w_out @ h_final + b_out)


def lstm_forward(model: LstmModel, series: np.ndarray) -> float:
    h_final, _ = unroll_forward(model.cell, model.config, series)
    return output_layer(h_final, model.w_out, model.b_out)


def bptt(model: LstmModel, state: LstmState, target: float,
         clip_norm: float | None = None) -> LstmGrads:
    """Gradients of 0.5*(y - target)^2 summed over time steps."""
    config = model.config
    steps = config.time_steps
    if state.gates.shape != (steps, 4 * config.hidden_dim):
        raise ValueError("state does not match model configuration")
    h_final = state.h[-1]
    y = output_layer(h_final, model.w_out, model.b_out)
    resid = y - float(target)
    d_wout = resid * h_final
    d_bout = resid
    dh = resid * model.w_out
    d_wx = np.zeros_like(model.cell.wx)
    d_wh = np.zeros_like(model.cell.wh)
    d_b = np.zeros_like(model.cell.b)
    _bptt_kernel(model.cell.wx, model.cell.wh, state.inputs, state.h, state.c,
                 state.gates, dh, d_wx, d_wh, d_b)
    if clip_norm is not None:
        flats = [d_wx, d_wh, d_b, d_wout]
        sq = sum(float(np.sum(a * a)) for a in flats) + d_bout * d_bout
        norm = math.sqrt(sq)
        if norm > clip_norm and norm > 0.0:
            scale = clip_norm / norm
            for a in flats:
                a *= scale
            d_bout *= scale
    grads = LstmGrads(d_wx, d_wh, d_b, d_wout, d_bout)
    for a in (d_wx, d_wh, d_b, d_wout):
        if not np.all(np.isfinite(a)):
            raise TrainingDiverged(epoch=-1, message="non-finite BPTT gradient")
    return grads


def apply_grads(model: LstmModel, grads: LstmGrads, learning_rate: float) -> LstmModel:
    cell = LstmCellParams(model.cell.wx - learning_rate * grads.wx,
                          model.cell.wh - learning_rate * grads.wh,
                          model.cell.b - learning_rate * grads.b)
    return LstmModel(model.config, cell,
                     model.w_out - learning_rate * grads.w_out,
                     model.b_out - learning_rate * grads.b_out)


def train_lstm(config: LstmConfig, records, train_config: TrainConfig,
               on_epoch_end=None) -> tuple[LstmModel, list[EpochStats]]:
    """Online SGD over shuffled training patterns, deterministic per seed.

    The caller is expected to have scaled inputs per mode (0.5 sequential,
    0.1 windowed). Raises TrainingDiverged with the epoch index on
    non-finite loss.
    """
    if not records:
        raise ValueError("training split is empty")
    X = np.stack([r.values for r in records]).astype(np.float64)
    targets = np.array([r.label for r in records], dtype=np.float64)
    n = len(records)
    xs_all = np.ascontiguousarray(
        X.reshape(n, config.time_steps, config.input_dim))

    model = init_lstm_model(config, train_config.seed)
    wx = model.cell.wx.copy()
    wh = model.cell.wh.copy()
    b = model.cell.b.copy()
    w_out = model.w_out.copy()
    b_out = np.zeros(1)
    b_out[0] = model.b_out

    default_clip = SEQUENTIAL_CLIP_DEFAULT if config.mode == "sequential" else None
    clip = train_config.resolved_clip(default=default_clip)
    clip_arg = float(clip) if clip is not None else 0.0

    trace: list[EpochStats] = []
    for epoch in range(1, train_config.epochs + 1):
        order = epoch_order(train_config.seed, epoch, n, train_config.shuffle)
        loss_sum, correct = _train_epoch_kernel(
            wx, wh, b, w_out, b_out, xs_all, targets,
            order.astype(np.int64), train_config.learning_rate, clip_arg)
        mean_loss = loss_sum / n
        trace.append(EpochStats(epoch, mean_loss, correct / n))
        if not np.isfinite(mean_loss):
            raise TrainingDiverged(epoch)
        if on_epoch_end is not None:
            snapshot = LstmModel(config, LstmCellParams(wx.copy(), wh.copy(), b.copy()),
                                 w_out.copy(), float(b_out[0]))
            on_epoch_end(epoch, snapshot)

    final = LstmModel(config, LstmCellParams(wx, wh, b), w_out, float(b_out[0]))
    return final, trace


def predict_batch_lstm(model: LstmModel, X: np.ndarray) -> np.ndarray:
    """Vectorized forward over stacked records; returns (N,) readout values."""
    config = model.config
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != config.series_length:
        raise ValueError(f"batch shape {X.shape} does not match series length "
                         f"{config.series_length}")
    n = X.shape[0]
    hdim = config.hidden_dim
    xs = X.reshape(n, config.time_steps, config.input_dim)
    h = np.zeros((n, hdim))
    c = np.zeros((n, hdim))
    wx_t = model.cell.wx.T
    wh_t = model.cell.wh.T
    for t in range(config.time_steps):
        z = xs[:, t, :] @ wx_t + h @ wh_t + model.cell.b
        i = _sigmoid(z[:, :hdim])
        f = _sigmoid(z[:, hdim:2 * hdim])
        o = _sigmoid(z[:, 2 * hdim:3 * hdim])
        g = np.tanh(z[:, 3 * hdim:])
        c = f * c + i * g
        h = o * np.tanh(c)
    return h @ model.w_out + model.b_out


def evaluate_lstm(model: LstmModel, records) -> Metrics:
    if not records:
        raise ValueError("cannot evaluate on an empty record list")
    X = np.stack([r.values for r in records])
    y = np.array([r.label for r in records])
    outputs = predict_batch_lstm(model, X)
    return Metrics.from_predictions(classify(outputs), y)


def export_unit_traces(model: LstmModel, series: np.ndarray) -> np.ndarray:
    """Per-time-step hidden outputs, one column per unit: (time_steps, H)."""
    _, state = unroll_forward(model.cell, model.config, series)
    return state.h[1:].copy()
