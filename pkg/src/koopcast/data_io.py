"""Dataset ingestion, splitting, sliding windows, and channel-independent batching.

CSV files have a mandatory header row; an optional leading ``date`` or
``timestamp`` column is dropped; ``#`` comment lines carry trajectory
metadata. Parsing is strict: any cell that is not a finite number aborts the
load with its position, because silent imputation would corrupt downstream
metrics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, DataError

_TIME_COLUMNS = {"date", "timestamp"}


@dataclass(frozen=True)
class Dataset:
    """A dense numeric series: rows are time steps, columns are channels."""

    values: np.ndarray
    channel_names: Tuple[str, ...]
    source: str = ""
    ratios: Tuple[int, int, int] = (7, 1, 2)
    metadata: Dict[str, str] = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def split_ranges(self) -> tuple[tuple[int, int], tuple[int, int], tuple[int, int]]:
        """Contiguous train/val/test ranges: floors for train and val, the
        remainder for test. 20000 rows at 7:1:2 give 14000/2000/4000."""
        a, b, c = self.ratios
        total = a + b + c
        train_end = self.n_rows * a // total
        val_end = train_end + self.n_rows * b // total
        return (0, train_end), (train_end, val_end), (val_end, self.n_rows)

    def range_for(self, name: str) -> tuple[int, int]:
        train, val, test = self.split_ranges()
        try:
            return {"train": train, "val": val, "test": test}[name]
        except KeyError:
            raise ConfigurationError(
                f"unknown split {name!r}; expected train, val or test"
            ) from None


def _parse_metadata(comment_lines: List[str]) -> Dict[str, str]:
    meta: Dict[str, str] = {}
    for line in comment_lines:
        for token in line.lstrip("#").strip().split():
            if "=" in token:
                key, value = token.split("=", 1)
                meta[key] = value
    return meta


def load_csv(
    path,
    schema: Sequence[str] | None = None,
    ratios: Tuple[int, int, int] = (7, 1, 2),
) -> Dataset:
    """Strictly parse a numeric CSV into a Dataset.

    ``schema``, when given, names the value columns that must be present;
    they are selected in schema order. Otherwise every non-time column is
    taken in file order.
    """
    comments: List[str] = []
    rows: List[List[str]] = []
    with open(path, "r", newline="") as f:
        for raw in f:
            if raw.startswith("#"):
                comments.append(raw.rstrip("\n"))
            elif raw.strip():
                rows.append(raw)
    if not rows:
        raise DataError(f"{path}: no header row found")
    parsed = list(csv.reader(rows))
    header = [h.strip() for h in parsed[0]]
    body = parsed[1:]
    if not body:
        raise DataError(f"{path}: header only, the dataset is empty")

    keep = [i for i, name in enumerate(header) if name.lower() not in _TIME_COLUMNS]
    names = [header[i] for i in keep]
    if schema is not None:
        missing = [c for c in schema if c not in names]
        if missing:
            raise DataError(f"{path}: schema columns {missing} not present in {names}")
        keep = [header.index(c) for c in schema]
        names = list(schema)

    values = np.empty((len(body), len(keep)))
    for r, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(
                f"{path}: row {r + 2} has {len(row)} cells, expected {len(header)}"
            )
        for j, col in enumerate(keep):
            cell = row[col].strip()
            try:
                value = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: unparseable cell {cell!r} at row {r + 2}, "
                    f"column {header[col]!r}"
                ) from None
            if not np.isfinite(value):
                raise DataError(
                    f"{path}: non-finite value at row {r + 2}, column {header[col]!r}"
                )
            values[r, j] = value
    return Dataset(
        values=values,
        channel_names=tuple(names),
        source=str(path),
        ratios=ratios,
        metadata=_parse_metadata(comments),
    )


def write_csv(path, values: np.ndarray, channel_names: Sequence[str], comments: Sequence[str] = ()) -> None:
    """Write a matrix as CSV with 17-significant-digit decimal cells."""
    values = np.asarray(values, dtype=np.float64)
    with open(path, "w", newline="\n") as f:
        for line in comments:
            f.write(line if line.startswith("#") else f"# {line}")
            f.write("\n")
        f.write(",".join(channel_names) + "\n")
        for row in np.atleast_2d(values):
            f.write(",".join(repr(float(v)) for v in row) + "\n")


# ---------------------------------------------------------------- windowing


@dataclass(frozen=True)
class WindowSample:
    """A lookback window and its adjacent forecast target."""

    x: np.ndarray  # [L, C]
    y: np.ndarray  # [T, C]
    origin: int    # absolute row index of the window start


def make_windows(
    dataset: Dataset,
    split_range: tuple[int, int],
    lookback: int,
    horizon: int,
    stride: int = 1,
) -> List[WindowSample]:
    """All windows whose full lookback+horizon extent fits inside the range."""
    start, stop = split_range
    span = lookback + horizon
    if stride < 1:
        raise ConfigurationError(f"stride must be >= 1, got {stride}")
    if stop - start < span:
        raise ConfigurationError(
            f"split of {stop - start} rows is too short for lookback {lookback} "
            f"+ horizon {horizon} = {span} rows"
        )
    samples = []
    for origin in range(start, stop - span + 1, stride):
        samples.append(
            WindowSample(
                x=dataset.values[origin : origin + lookback],
                y=dataset.values[origin + lookback : origin + span],
                origin=origin,
            )
        )
    return samples


# ---------------------------------------------------------------- channel independence


@dataclass(frozen=True)
class ChannelUnit:
    """One channel of one window sample, the unit the model consumes."""

    x: np.ndarray  # [L]
    y: np.ndarray  # [T]
    origin: int
    channel: int


def expand_channels(samples: Sequence[WindowSample]) -> List[ChannelUnit]:
    """Flatten multichannel samples into independent single-channel units."""
    units = []
    for sample in samples:
        for c in range(sample.x.shape[1]):
            units.append(
                ChannelUnit(x=sample.x[:, c], y=sample.y[:, c], origin=sample.origin, channel=c)
            )
    return units


def batch_channel_independent(
    samples: Sequence[WindowSample], batch_size: int
) -> List[List[ChannelUnit]]:
    """Expand samples channel-independently and group the units into batches."""
    if batch_size < 1:
        raise ConfigurationError(f"batch size must be >= 1, got {batch_size}")
    units = expand_channels(samples)
    return [units[i : i + batch_size] for i in range(0, len(units), batch_size)]


def reassemble_forecasts(
    units: Sequence[ChannelUnit],
    predictions: Sequence[np.ndarray],
    n_channels: int,
) -> Dict[int, np.ndarray]:
    """Invert :func:`expand_channels`: map (origin, channel) predictions back
    into per-origin [T, C] matrices."""
    if len(units) != len(predictions):
        raise DataError(
            f"{len(predictions)} predictions for {len(units)} units"
        )
    horizon = len(predictions[0]) if predictions else 0
    out: Dict[int, np.ndarray] = {}
    for unit, pred in zip(units, predictions):
        block = out.setdefault(unit.origin, np.full((horizon, n_channels), np.nan))
        block[:, unit.channel] = pred
    for origin, block in out.items():
        if np.any(np.isnan(block)):
            raise DataError(f"window at row {origin} is missing channel forecasts")
    return out


def iter_batches(units: Sequence[ChannelUnit], batch_size: int) -> Iterator[List[ChannelUnit]]:
    for i in range(0, len(units), batch_size):
        yield list(units[i : i + batch_size])


# ---------------------------------------------------------------- standardization


@dataclass(frozen=True)
class Standardizer:
    """Dataset-level per-channel affine scaler, fit on the training split only."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, dataset: Dataset, train_range: tuple[int, int]) -> "Standardizer":
        start, stop = train_range
        block = dataset.values[start:stop]
        mean = block.mean(axis=0)
        std = block.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(mean=mean, std=std)

    def apply(self, dataset: Dataset) -> Dataset:
        return Dataset(
            values=(dataset.values - self.mean) / self.std,
            channel_names=dataset.channel_names,
            source=dataset.source,
            ratios=dataset.ratios,
            metadata=dataset.metadata,
        )

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * self.std + self.mean
