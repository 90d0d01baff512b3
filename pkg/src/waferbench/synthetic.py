"""Deterministic wafer-like benchmark data.

Stand-in for the public wafer inspection dataset when the real files are not
on disk: same text format, same split sizes (1000 train / 6164 test), same
series length (152) and the same ~90/10 normal/abnormal class balance.

Each trace is a noisy plateau profile (ramp up, hold, notch, hold, ramp
down), normalized with fixed constants taken from the nominal profile so
every record shares one scale. Abnormal wafers hold the plateau at a wrong
level, too high or too low with graded severity, so a single linear
readout can only ever flag one side while a gated or multi-layer model can
flag both.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset import SplitDataset, TimeSeriesRecord, save_split

# Split shape of the public wafer dataset (train 1000 = 903 normal + 97
# abnormal; test 6164 = 5499 + 665).
DEFAULT_SEED = 20240831
N_TRAIN = 1000
N_TEST = 6164
TRAIN_ABNORMAL = 97
TEST_ABNORMAL = 665
SERIES_LENGTH = 152

# Profile anchors as fractions of the series length.
_RISE_START = 0.06
_RISE_END = 0.16
_NOTCH_START = 0.50
_NOTCH_END = 0.60
_FALL_START = 0.88
_FALL_END = 0.96

_PLATEAU = 2.0          # nominal hold level above base
_NOTCH_DEPTH = 1.2      # below plateau
_LEVEL_WOBBLE = 0.25    # per-region hold-level std-dev (normal variation)
_WOBBLE_CORR = 0.5      # correlation of the two regions' wobble
_TILT_WOBBLE = 0.12     # end-to-end slope variation within each hold
_NOTCH_WOBBLE = 0.2     # notch-level variation
_OFFSET_WOBBLE = 0.08   # whole-trace offset variation
_NOISE_SIGMA = 0.07     # white measurement noise
_ANCHOR_JITTER = 2      # +/- steps on each segment boundary

# Abnormal plateau offsets, in the same raw units as _LEVEL_WOBBLE. Both
# hold regions shift together, up for one fault subtype and down for the
# other. High-side severity is graded and its mild end overlaps the normal
# wobble tail, so borderline cases exist; the low side undershoots below
# the idle baseline, far outside any normal value. A monotone (linear)
# detector can only ever flag one side; catching both requires a
# non-monotone response to the hold level.
_FAULT_HIGH_MIN = 0.7
_FAULT_HIGH_MAX = 1.5
_FAULT_LOW_MIN = 2.6
_FAULT_LOW_MAX = 3.4
_FAULT_HIGH_FRACTION = 0.55   # fraction of abnormal wafers shifted upward


def _segment_bounds(length: int) -> np.ndarray:
    anchors = np.array([_RISE_START, _RISE_END, _NOTCH_START, _NOTCH_END,
                        _FALL_START, _FALL_END])
    return np.rint(anchors * length).astype(int)


def _raw_profile(length: int, bounds, level_a: float, level_b: float,
                 notch_level: float) -> np.ndarray:
    rise_s, rise_e, notch_s, notch_e, fall_s, fall_e = bounds
    t = np.arange(length)
    y = np.zeros(length)
    y[rise_s:rise_e] = level_a * (t[rise_s:rise_e] - rise_s) / max(rise_e - rise_s, 1)
    y[rise_e:notch_s] = level_a
    y[notch_s:notch_e] = notch_level
    y[notch_e:fall_s] = level_b
    y[fall_s:fall_e] = level_b * (1.0 - (t[fall_s:fall_e] - fall_s) / max(fall_e - fall_s, 1))
    return y


def _norm_constants(length: int) -> tuple[float, float]:
    """Mean/std of the nominal fault-free profile, shared by all records."""
    nominal = _raw_profile(length, _segment_bounds(length), _PLATEAU, _PLATEAU,
                           _PLATEAU - _NOTCH_DEPTH)
    return float(nominal.mean()), float(nominal.std())


def _profile(length: int, rng: np.random.Generator, fault: str | None,
             mu: float, sd: float) -> np.ndarray:
    idx = _segment_bounds(length)
    idx += rng.integers(-_ANCHOR_JITTER, _ANCHOR_JITTER + 1, size=idx.shape)
    bounds = np.sort(np.clip(idx, 1, length - 1))

    z1 = rng.standard_normal()
    z2 = _WOBBLE_CORR * z1 + np.sqrt(1.0 - _WOBBLE_CORR**2) * rng.standard_normal()
    level_a = _PLATEAU + _LEVEL_WOBBLE * z1      # hold between ramp and notch
    level_b = _PLATEAU + _LEVEL_WOBBLE * z2      # hold between notch and fall
    notch_level = _PLATEAU - _NOTCH_DEPTH + _NOTCH_WOBBLE * rng.standard_normal()
    tilt_a, tilt_b = _TILT_WOBBLE * rng.standard_normal(2)
    offset = _OFFSET_WOBBLE * rng.standard_normal()

    if fault is not None:
        if fault == "high":
            shift = rng.uniform(_FAULT_HIGH_MIN, _FAULT_HIGH_MAX)
        else:
            shift = -rng.uniform(_FAULT_LOW_MIN, _FAULT_LOW_MAX)
        level_a += shift
        level_b += shift

    y = _raw_profile(length, bounds, level_a, level_b, notch_level)
    _, rise_e, notch_s, notch_e, fall_s, _ = bounds
    if notch_s > rise_e:
        y[rise_e:notch_s] += tilt_a * np.linspace(-0.5, 0.5, notch_s - rise_e)
    if fall_s > notch_e:
        y[notch_e:fall_s] += tilt_b * np.linspace(-0.5, 0.5, fall_s - notch_e)
    y += offset + _NOISE_SIGMA * rng.standard_normal(length)
    return (y - mu) / sd


def _make_split(n: int, n_abnormal: int, length: int,
                rng: np.random.Generator) -> list[TimeSeriesRecord]:
    n_high = int(round(_FAULT_HIGH_FRACTION * n_abnormal))
    faults: list[str | None] = ["high"] * n_high + ["low"] * (n_abnormal - n_high)
    faults += [None] * (n - n_abnormal)
    order = rng.permutation(n)
    mu, sd = _norm_constants(length)
    records = []
    for i in range(n):
        fault = faults[order[i]]
        values = _profile(length, rng, fault, mu, sd)
        label = 1 if fault is None else -1
        records.append(TimeSeriesRecord(label, values, i))
    return records


def generate_wafer_like(
    seed: int = DEFAULT_SEED,
    n_train: int = N_TRAIN,
    n_test: int = N_TEST,
    series_length: int = SERIES_LENGTH,
    train_abnormal: int = TRAIN_ABNORMAL,
    test_abnormal: int = TEST_ABNORMAL,
) -> SplitDataset:
    """Generate the stand-in dataset. Same seed, same bytes."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    train = _make_split(n_train, train_abnormal, series_length, rng)
    test = _make_split(n_test, test_abnormal, series_length, rng)
    return SplitDataset(tuple(train), tuple(test), series_length)


def write_wafer_like(out_dir: str | Path, seed: int = DEFAULT_SEED,
                     series_length: int = SERIES_LENGTH) -> tuple[Path, Path]:
    """Write Wafer_TRAIN.txt / Wafer_TEST.txt into out_dir; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    d = generate_wafer_like(seed=seed, series_length=series_length)
    train_path = out_dir / "Wafer_TRAIN.txt"
    test_path = out_dir / "Wafer_TEST.txt"
    save_split(d.train, train_path)
    save_split(d.test, test_path)
    return train_path, test_path
