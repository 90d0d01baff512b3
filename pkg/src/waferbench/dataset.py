"""Loading, validation, normalization and scaling of UCR-style wafer data.

File format: one record per line, `label<delim>v1<delim>...<delim>vL`,
labels encoded as +1 (normal) / -1 (abnormal). Values are the z-normalized
inline process measurements of one wafer.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np


class DatasetError(Exception):
    """Missing, malformed, or inconsistent dataset input."""


@dataclass(frozen=True)
class TimeSeriesRecord:
    """One wafer trace: sensor samples plus its normal/abnormal label."""

    label: int                # +1 normal, -1 abnormal
    values: np.ndarray        # (L,) float64, read-only
    source_index: int         # 0-based row position within its split file

    def __post_init__(self):
        if self.label not in (1, -1):
            raise DatasetError(f"label must be +1 or -1, got {self.label}")
        v = np.asarray(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class SplitDataset:
    train: tuple[TimeSeriesRecord, ...]
    test: tuple[TimeSeriesRecord, ...]
    series_length: int

    def __post_init__(self):
        for rec in (*self.train, *self.test):
            if rec.values.shape != (self.series_length,):
                raise DatasetError(
                    f"record {rec.source_index} has length {rec.values.shape[0]}, "
                    f"expected {self.series_length}"
                )


def _detect_delimiter(line: str) -> str:
    # comma first, then tab; both appear in UCR archive releases
    for delim in (",", "\t"):
        if delim in line:
            return delim
    raise DatasetError("could not detect delimiter (no comma or tab in first row)")


def _parse_label(token: str, path: Path, lineno: int) -> int:
    try:
        raw = float(token)
    except ValueError as exc:
        raise DatasetError(f"{path}:{lineno}: non-numeric label {token!r}") from exc
    if raw == 1.0:
        return 1
    if raw == -1.0:
        return -1
    raise DatasetError(f"{path}:{lineno}: unknown label value {token!r} (expected 1 or -1)")


def load_split(path: str | Path, delimiter: str | None = None) -> list[TimeSeriesRecord]:
    """Parse one split file into records. Raises DatasetError on any defect."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset file not found: {path}")
    records: list[TimeSeriesRecord] = []
    length: int | None = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            delim = delimiter or _detect_delimiter(line)
            tokens = line.split(delim)
            if len(tokens) < 2:
                raise DatasetError(f"{path}:{lineno}: row has no sample values")
            label = _parse_label(tokens[0], path, lineno)
            try:
                values = np.array([float(t) for t in tokens[1:]], dtype=np.float64)
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: non-numeric sample token") from exc
            if length is None:
                length = values.shape[0]
            elif values.shape[0] != length:
                raise DatasetError(
                    f"{path}:{lineno}: ragged row ({values.shape[0]} values, expected {length})"
                )
            records.append(TimeSeriesRecord(label, values, len(records)))
    if not records:
        raise DatasetError(f"{path}: file contains no records")
    return records


def load_ucr(
    train_path: str | Path,
    test_path: str | Path,
    delimiter: str | None = None,
) -> SplitDataset:
    """Load train and test splits from two UCR-style text files.

    The two splits must agree on series length. Delimiter is auto-detected
    (comma, then tab) unless given.
    """
    train = load_split(train_path, delimiter)
    test = load_split(test_path, delimiter)
    length = train[0].values.shape[0]
    if test[0].values.shape[0] != length:
        raise DatasetError(
            f"train series length {length} != test series length {test[0].values.shape[0]}"
        )
    return SplitDataset(train=tuple(train), test=tuple(test), series_length=length)


def save_split(records, path: str | Path, delimiter: str = ",") -> None:
    """Write records in the same text format; floats use shortest round-trip repr."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fields = [str(rec.label)] + [repr(float(v)) for v in rec.values]
            fh.write(delimiter.join(fields) + "\n")


def class_balance(d: SplitDataset) -> tuple[float, float]:
    """Fraction of normal (+1) records in (train, test)."""
    fracs = []
    for name, split in (("train", d.train), ("test", d.test)):
        if not split:
            raise DatasetError(f"{name} split is empty")
        fracs.append(sum(1 for r in split if r.label == 1) / len(split))
    return fracs[0], fracs[1]


def scale_inputs(d: SplitDataset, target_max_abs: float) -> SplitDataset:
    """Rescale so the training split's max |value| equals target_max_abs.

    The factor is computed from the training split only and reused on test,
    so test values may exceed the target when a test sample exceeds the
    train maximum. Returns a new dataset; the input is unchanged.
    """
    if target_max_abs <= 0:
        raise DatasetError(f"target_max_abs must be positive, got {target_max_abs}")
    train_max = max(float(np.max(np.abs(r.values))) for r in d.train)
    if train_max == 0.0:
        raise DatasetError("cannot scale: training split is all zeros")
    s = target_max_abs / train_max

    def rescale(split):
        return tuple(replace(r, values=r.values * s) for r in split)

    return SplitDataset(rescale(d.train), rescale(d.test), d.series_length)


def truncate_series(d: SplitDataset, length: int) -> SplitDataset:
    """Drop trailing samples so every record has the given length."""
    if not 0 < length <= d.series_length:
        raise DatasetError(f"cannot truncate length {d.series_length} to {length}")
    if length == d.series_length:
        return d

    def cut(split):
        return tuple(replace(r, values=r.values[:length]) for r in split)

    return SplitDataset(cut(d.train), cut(d.test), length)


def as_arrays(records) -> tuple[np.ndarray, np.ndarray]:
    """Stack records into (X, y): X is (N, L) float64, y is (N,) of +/-1."""
    X = np.stack([r.values for r in records]).astype(np.float64)
    y = np.array([r.label for r in records], dtype=np.float64)
    return X, y
