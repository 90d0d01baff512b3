"""Behavioral analog inference on memristive crossbars.

Signed weights map to differential conductance pairs: the magnitude goes on
one device as g_min + (g_max - g_min)*|w|/w_max, the partner stays at g_min,
so the pair difference is proportional to the weight. Each layer (with its
bias folded in as an extra column driven by a constant 1) becomes one
crossbar; matrix-vector products run through the analog model with optional
level quantization, per-read conductance noise, and per-row gain error,
while activations and recurrent state updates stay ideal floating point.

Outputs are reported in millivolts: the unit-scale result times mv_per_unit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dense import NetworkSpec, Parameters, activate
from .lstm import LstmConfig, LstmModel

MV_PER_UNIT = 500.0  # ideal +/-1 network output renders as +/-500 mV

# the ten test-split traces compared row by row in the agreement table
# (1-based row numbers within the test file)
AGREEMENT_INDICES = (23, 47, 7, 3, 3838, 193, 6157, 411, 1534, 4507)


@dataclass(frozen=True)
class DeviceModel:
    """Conductance range, quantization depth, and read nonidealities."""

    g_min: float = 1e-6
    g_max: float = 100e-6
    levels: int | str = "continuous"
    read_noise_sigma: float = 0.01   # per-device relative sigma, per read
    gain_error_sigma: float = 0.01   # per-output-row relative sigma, per read

    def __post_init__(self):
        if not 0.0 < self.g_min < self.g_max:
            raise ValueError("need 0 < g_min < g_max")
        if self.levels != "continuous":
            if int(self.levels) != self.levels or self.levels < 2:
                raise ValueError("levels must be 'continuous' or an integer >= 2")
            object.__setattr__(self, "levels", int(self.levels))
        if self.read_noise_sigma < 0 or self.gain_error_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")

    def ideal(self) -> "DeviceModel":
        """Same range, no quantization, no noise, unit gain."""
        return DeviceModel(self.g_min, self.g_max, "continuous", 0.0, 0.0)

    def quantize(self, g: np.ndarray) -> np.ndarray:
        if self.levels == "continuous":
            return g
        steps = self.levels - 1
        span = self.g_max - self.g_min
        return self.g_min + np.round((g - self.g_min) / span * steps) / steps * span


@dataclass(frozen=True)
class CrossbarProgram:
    """One programmed matrix: differential pair conductances and scaling."""

    g_plus: np.ndarray
    g_minus: np.ndarray
    w_max: float
    output_scale_mv: float  # multiplier from differential current sum to mV

    @property
    def shape(self) -> tuple[int, int]:
        return self.g_plus.shape


def program_weights(W: np.ndarray, device: DeviceModel,
                    mv_per_unit: float = MV_PER_UNIT) -> CrossbarProgram:
    """Map a signed weight matrix onto differential conductance pairs."""
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    if not np.all(np.isfinite(W)):
        raise ValueError("weights must be finite")
    w_max = float(np.max(np.abs(W)))
    if w_max == 0.0:
        raise ValueError("cannot program an all-zero matrix (no scale)")
    span = device.g_max - device.g_min
    mag = np.abs(W) / w_max * span
    g_plus = device.quantize(device.g_min + np.where(W > 0.0, mag, 0.0))
    g_minus = device.quantize(device.g_min + np.where(W < 0.0, mag, 0.0))
    return CrossbarProgram(g_plus, g_minus, w_max,
                           output_scale_mv=mv_per_unit * w_max / span)


def analog_matvec(program: CrossbarProgram, device: DeviceModel,
                  x: np.ndarray, noise_rng) -> np.ndarray:
    """One analog read: differential current sum with per-read noise, in mV.

    noise_rng is a numpy Generator (or an int seed for one-off reads); reads
    consume from it in a fixed order, so a shared stream is deterministic.
    """
    if isinstance(noise_rng, (int, np.integer)):
        noise_rng = np.random.default_rng(noise_rng)
    x = np.asarray(x, dtype=np.float64)
    rows, cols = program.shape
    if x.shape != (cols,):
        raise ValueError(f"input length {x.shape} does not match crossbar "
                         f"columns {cols}")
    g_plus, g_minus = program.g_plus, program.g_minus
    if device.read_noise_sigma > 0.0:
        g_plus = g_plus * (1.0 + noise_rng.normal(0.0, device.read_noise_sigma,
                                                  size=(rows, cols)))
        g_minus = g_minus * (1.0 + noise_rng.normal(0.0, device.read_noise_sigma,
                                                    size=(rows, cols)))
    y = (g_plus - g_minus) @ x
    if device.gain_error_sigma > 0.0:
        y = y * (1.0 + noise_rng.normal(0.0, device.gain_error_sigma, size=rows))
    return y * program.output_scale_mv


def record_noise_rng(noise_seed: int, record_index: int) -> np.random.Generator:
    """Per-record noise stream; parallel evaluation order cannot change it."""
    return np.random.default_rng(
        np.random.SeedSequence(noise_seed, spawn_key=(record_index,)))


def _augmented(W: np.ndarray, b: np.ndarray | None) -> np.ndarray:
    if b is None:
        return W
    return np.hstack([W, np.asarray(b, dtype=np.float64).reshape(-1, 1)])


@dataclass(frozen=True)
class AnalogDense:
    """A dense network with every layer programmed onto its own crossbar."""

    spec: NetworkSpec
    programs: tuple[CrossbarProgram, ...]
    mv_per_unit: float

    @classmethod
    def from_model(cls, spec: NetworkSpec, params: Parameters,
                   device: DeviceModel,
                   mv_per_unit: float = MV_PER_UNIT) -> "AnalogDense":
        programs = []
        for k in range(spec.num_layers):
            b = params.biases[k] if spec.use_bias else None
            programs.append(program_weights(_augmented(params.weights[k], b),
                                            device, mv_per_unit))
        return cls(spec, tuple(programs), mv_per_unit)

    def forward_mv(self, device: DeviceModel, values: np.ndarray,
                   noise_rng) -> float:
        """Analog forward; hidden activations ideal, output left pre-activation.

        Returns the final crossbar read in millivolts (its sign is the
        predicted class, since the output squashing is sign-preserving).
        """
        a = np.asarray(values, dtype=np.float64)
        if a.shape != (self.spec.input_size,):
            raise ValueError("record length does not match network input")
        for k, program in enumerate(self.programs):
            x = np.append(a, 1.0) if self.spec.use_bias else a
            y_mv = analog_matvec(program, device, x, noise_rng)
            if k < self.spec.num_layers - 1:
                a = activate(self.spec.activations[k], y_mv / self.mv_per_unit)
        return float(y_mv[0])


@dataclass(frozen=True)
class AnalogLstm:
    """Gated recurrent cell with the stacked gate matrix and the readout each
    on a crossbar; h/c state updates stay ideal between reads."""

    config: LstmConfig
    cell_program: CrossbarProgram      # (4H, D + H + 1) for [x, h, 1]
    readout_program: CrossbarProgram   # (1, H + 1) for [h, 1]
    mv_per_unit: float

    @classmethod
    def from_model(cls, model: LstmModel, device: DeviceModel,
                   mv_per_unit: float = MV_PER_UNIT) -> "AnalogLstm":
        cell = np.hstack([model.cell.wx, model.cell.wh,
                          model.cell.b.reshape(-1, 1)])
        readout = np.append(model.w_out, model.b_out).reshape(1, -1)
        return cls(model.config,
                   program_weights(cell, device, mv_per_unit),
                   program_weights(readout, device, mv_per_unit),
                   mv_per_unit)

    def _step(self, device: DeviceModel, x_t: np.ndarray, h: np.ndarray,
              c: np.ndarray, noise_rng) -> tuple[np.ndarray, np.ndarray]:
        hdim = self.config.hidden_dim
        drive = np.concatenate([x_t, h, [1.0]])
        z = analog_matvec(self.cell_program, device, drive,
                          noise_rng) / self.mv_per_unit
        i = 1.0 / (1.0 + np.exp(-z[:hdim]))
        f = 1.0 / (1.0 + np.exp(-z[hdim:2 * hdim]))
        o = 1.0 / (1.0 + np.exp(-z[2 * hdim:3 * hdim]))
        g = np.tanh(z[3 * hdim:])
        c = f * c + i * g
        h = o * np.tanh(c)
        return h, c

    def forward_mv(self, device: DeviceModel, values: np.ndarray,
                   noise_rng) -> float:
        y_mv, _ = self.unit_trace(device, values, noise_rng)
        return y_mv

    def unit_trace(self, device: DeviceModel, values: np.ndarray,
                   noise_rng) -> tuple[float, np.ndarray]:
        """Readout in mV plus the per-step hidden outputs, (time_steps, H)."""
        cfg = self.config
        xs = np.asarray(values, dtype=np.float64).reshape(cfg.time_steps,
                                                          cfg.input_dim)
        h = np.zeros(cfg.hidden_dim)
        c = np.zeros(cfg.hidden_dim)
        trace = np.empty((cfg.time_steps, cfg.hidden_dim))
        for t in range(cfg.time_steps):
            h, c = self._step(device, xs[t], h, c, noise_rng)
            trace[t] = h
        y_mv = analog_matvec(self.readout_program, device,
                             np.append(h, 1.0), noise_rng)
        return float(y_mv[0]), trace


def analog_forward(network, device: DeviceModel, values: np.ndarray,
                   record_index: int, noise_seed: int = 0) -> float:
    """Full analog prediction (mV) with the record's own noise stream."""
    rng = record_noise_rng(noise_seed, record_index)
    return network.forward_mv(device, values, rng)


def batch_analog_mv(network, device: DeviceModel, records,
                    noise_seed: int = 0) -> np.ndarray:
    """Analog predictions over records, streamed per record_index."""
    return np.array([analog_forward(network, device, r.values,
                                    r.source_index, noise_seed)
                     for r in records])


@dataclass(frozen=True)
class AgreementRow:
    index: int
    analog_mv: float
    software: float
    sign_agree: bool
    label: int


@dataclass(frozen=True)
class AgreementReport:
    rows: tuple[AgreementRow, ...]
    agreement: float

    CSV_HEADER = "index,analog_mv,software,sign_agree,class"

    def csv_lines(self) -> list[str]:
        lines = [self.CSV_HEADER]
        for r in self.rows:
            lines.append(f"{r.index},{r.analog_mv:.6f},{r.software:.6f},"
                         f"{int(r.sign_agree)},{r.label}")
        return lines


def _sign(v: float) -> int:
    return 1 if v >= 0.0 else -1


def agreement_report(analog_mv, software, labels,
                     indices=None) -> AgreementReport:
    """Row-by-row sign comparison of analog and software predictions."""
    analog_mv = np.asarray(analog_mv, dtype=np.float64)
    software = np.asarray(software, dtype=np.float64)
    labels = np.asarray(labels)
    if not (len(analog_mv) == len(software) == len(labels)):
        raise ValueError("prediction and label lists must have equal length")
    if indices is None:
        indices = range(len(labels))
    rows = []
    agree = 0
    for idx, a, s, lab in zip(indices, analog_mv, software, labels):
        ok = _sign(a) == _sign(s)
        agree += ok
        rows.append(AgreementRow(int(idx), float(a), float(s), bool(ok), int(lab)))
    agreement = agree / len(rows) if rows else 1.0
    return AgreementReport(tuple(rows), agreement)
