"""Spatial pooler pipeline: bucket encoding, sparse binary columns, and a
perceptron readout over the column activity.

Each trace sample is one-hot bucketed over its train-split value range, the
pooler maps the concatenated buckets to a fixed-sparsity binary vector via
column overlap with global top-k inhibition, and a single sign-threshold
neuron classifies the result. Permanence learning follows the usual
reinforce-active / punish-inactive rule, clamped to [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dense
from .dataset import TimeSeriesRecord

_INIT_STREAM = 0

DEFAULT_BINS = 8
DEFAULT_COLUMNS = 256
DEFAULT_ACTIVE = 16


@dataclass(frozen=True)
class BucketEncoder:
    """Per-position one-hot bucketing; ranges come from the training split."""

    lo: np.ndarray    # (L,) lower edge per sample position
    hi: np.ndarray    # (L,) upper edge per sample position
    bins: int

    def __post_init__(self):
        if self.bins < 2:
            raise ValueError("need at least 2 buckets per sample")
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ValueError("bucket edges must be matching 1-d arrays")

    @classmethod
    def from_records(cls, records, bins: int) -> "BucketEncoder":
        if bins < 2:
            raise ValueError("need at least 2 buckets per sample")
        X = np.stack([r.values for r in records])
        return cls(lo=X.min(axis=0), hi=X.max(axis=0), bins=int(bins))

    @property
    def series_length(self) -> int:
        return self.lo.shape[0]

    @property
    def width(self) -> int:
        return self.series_length * self.bins

    def encode(self, values: np.ndarray) -> np.ndarray:
        """One active bit per sample; out-of-range values clamp to the
        boundary bucket. Returns a (L*bins,) uint8 vector."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.lo.shape:
            raise ValueError(f"trace length {values.shape} does not match "
                             f"encoder length {self.lo.shape}")
        span = self.hi - self.lo
        span = np.where(span > 0.0, span, 1.0)  # constant position -> bucket 0
        idx = np.floor((values - self.lo) / span * self.bins).astype(np.int64)
        np.clip(idx, 0, self.bins - 1, out=idx)
        out = np.zeros(self.width, dtype=np.uint8)
        out[np.arange(self.series_length) * self.bins + idx] = 1
        return out

    def encode_batch(self, records) -> np.ndarray:
        return np.stack([self.encode(r.values) for r in records])


@dataclass(frozen=True)
class SpatialPoolerConfig:
    num_columns: int = DEFAULT_COLUMNS
    active_columns: int = DEFAULT_ACTIVE
    potential_fraction: float = 0.5
    permanence_threshold: float = 0.5
    permanence_increment: float = 0.05
    permanence_decrement: float = 0.008
    seed: int = 0

    def __post_init__(self):
        if self.num_columns < 1 or self.active_columns < 1:
            raise ValueError("column counts must be positive")
        if self.active_columns >= self.num_columns:
            raise ValueError("active column count must be below the total")
        if not 0.0 < self.potential_fraction <= 1.0:
            raise ValueError("potential_fraction must be in (0, 1]")
        if not 0.0 <= self.permanence_threshold <= 1.0:
            raise ValueError("permanence_threshold must be in [0, 1]")
        if not 0.0 < self.permanence_increment <= 1.0:
            raise ValueError("permanence_increment must be in (0, 1]")
        if not 0.0 < self.permanence_decrement <= 1.0:
            raise ValueError("permanence_decrement must be in (0, 1]")


class SpatialPooler:
    """Mutable pooler state: a potential-synapse mask and its permanences.

    Columns compete by overlap (count of connected synapses on active input
    bits); the top-k win, ties resolved toward the lower column index, so
    compute() is deterministic for a given state.
    """

    def __init__(self, config: SpatialPoolerConfig, input_width: int):
        if input_width < 1:
            raise ValueError("input width must be positive")
        self.config = config
        self.input_width = int(input_width)
        rng = np.random.default_rng(
            np.random.SeedSequence(config.seed, spawn_key=(_INIT_STREAM,)))
        n_pot = max(1, round(config.potential_fraction * input_width))
        potential = np.zeros((config.num_columns, input_width), dtype=bool)
        perms = np.zeros((config.num_columns, input_width))
        for col in range(config.num_columns):
            chosen = rng.choice(input_width, size=n_pot, replace=False)
            potential[col, chosen] = True
            # start straddling the connection threshold so both growth and
            # decay can change connectivity from the first learning step
            perms[col, chosen] = np.clip(
                config.permanence_threshold
                + rng.uniform(-0.2, 0.2, size=n_pot), 0.0, 1.0)
        self.potential = potential
        self.permanences = perms

    def overlaps(self, input_bits: np.ndarray) -> np.ndarray:
        input_bits = np.asarray(input_bits)
        if input_bits.shape != (self.input_width,):
            raise ValueError(f"input width {input_bits.shape} does not match "
                             f"pooler width {self.input_width}")
        connected = (self.permanences >= self.config.permanence_threshold) \
            & self.potential
        return connected[:, input_bits != 0].sum(axis=1)

    def compute(self, input_bits: np.ndarray, learn: bool = False) -> np.ndarray:
        """Binary column activity with exactly `active_columns` ones."""
        overlap = self.overlaps(input_bits)
        # stable sort on negated overlap -> lower index wins ties
        winners = np.argsort(-overlap, kind="stable")[:self.config.active_columns]
        if learn:
            active = np.asarray(input_bits) != 0
            cfg = self.config
            for col in winners:
                mask = self.potential[col]
                row = self.permanences[col]
                row[mask & active] += cfg.permanence_increment
                row[mask & ~active] -= cfg.permanence_decrement
                np.clip(row, 0.0, 1.0, out=row)
        sdr = np.zeros(self.config.num_columns, dtype=np.uint8)
        sdr[winners] = 1
        return sdr

    def compute_batch(self, inputs: np.ndarray, learn: bool = False) -> np.ndarray:
        return np.stack([self.compute(row, learn=learn) for row in inputs])


def sdr_records(pooler: SpatialPooler, encoded: np.ndarray, records) -> list[TimeSeriesRecord]:
    """Frozen-pooler column activity wrapped as records for the classifier."""
    out = []
    for row, rec in zip(encoded, records):
        sdr = pooler.compute(row, learn=False).astype(np.float64)
        out.append(TimeSeriesRecord(label=rec.label, values=sdr,
                                    source_index=rec.source_index))
    return out


@dataclass(frozen=True)
class HtmPipeline:
    encoder: BucketEncoder
    pooler: SpatialPooler
    classifier_spec: dense.NetworkSpec
    classifier: dense.Parameters


def fit_htm(dataset, sp_config: SpatialPoolerConfig | None = None,
            bins: int = DEFAULT_BINS,
            train_config: dense.TrainConfig | None = None,
            learning_passes: int = 1) -> HtmPipeline:
    """Encoder ranges and pooler learning from the train split only, then a
    perceptron readout trained on the frozen pooler's outputs."""
    sp_config = sp_config or SpatialPoolerConfig()
    train_config = train_config or dense.TrainConfig()
    encoder = BucketEncoder.from_records(dataset.train, bins)
    pooler = SpatialPooler(sp_config, encoder.width)
    encoded = encoder.encode_batch(dataset.train)
    for _ in range(learning_passes):
        pooler.compute_batch(encoded, learn=True)
    cls_spec = dense.NetworkSpec((sp_config.num_columns, 1), ("tanh",))
    train_sdrs = sdr_records(pooler, encoded, dataset.train)
    params, _ = dense.train(cls_spec, train_sdrs, train_config)
    return HtmPipeline(encoder, pooler, cls_spec, params)


def evaluate_htm(pipeline: HtmPipeline, records) -> dense.Metrics:
    encoded = pipeline.encoder.encode_batch(records)
    sdrs = sdr_records(pipeline.pooler, encoded, records)
    return dense.evaluate(pipeline.classifier_spec, pipeline.classifier, sdrs)
