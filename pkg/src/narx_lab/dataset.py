"""Lag/lead embedding of (forcing, displacement) series into supervised rows.

Row for time t (prose convention: y lags newest-first, then the forcing
window newest-first including the current sample):

    inputs  = [y_{t-1} ... y_{t-m},  x_t ... x_{t-m+1}]      (2m columns)
    targets = [y_t, y_{t+1}, ..., y_{t+L}]                   (1+L columns)

Rows are split into contiguous train/validation/test blocks in ratio
2:1:1 and standardized per channel with statistics from the training
block only.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ShapeError
from .oscillator import TimeSeries

__all__ = [
    "EmbeddingSpec",
    "ScalerStats",
    "Partition",
    "NarxDataset",
    "build_windows",
    "split_2_1_1",
    "fit_scaler",
    "apply_scaler",
    "invert_scaler",
    "scale_inputs",
]


@dataclass(frozen=True)
class EmbeddingSpec:
    """n_lags past outputs / forcing window width; n_leads future outputs.

    n_leads = 0 is the standard single-output (ST) embedding.
    """

    n_lags: int
    n_leads: int = 0

    def __post_init__(self):
        if self.n_lags < 1:
            raise ConfigError(f"n_lags must be >= 1, got {self.n_lags}")
        if self.n_leads < 0:
            raise ConfigError(f"n_leads must be >= 0, got {self.n_leads}")

    @property
    def n_inputs(self) -> int:
        return 2 * self.n_lags

    @property
    def n_outputs(self) -> int:
        return 1 + self.n_leads


@dataclass(frozen=True)
class ScalerStats:
    """Per-channel standardization statistics, fit on training rows only."""

    input_mean: np.ndarray
    input_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray

    def __post_init__(self):
        for name in ("input_mean", "input_std", "target_mean", "target_std"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if np.any(self.input_std <= 0) or np.any(self.target_std <= 0):
            raise ConfigError("scaler std must be > 0 for every channel (constant channel?)")


@dataclass(frozen=True)
class Partition:
    """Contiguous row ranges [start, stop) in order train -> val -> test."""

    train: tuple[int, int]
    val: tuple[int, int]
    test: tuple[int, int]

    def block(self, name: str) -> tuple[int, int]:
        try:
            return getattr(self, name)
        except AttributeError:
            raise ConfigError(f"unknown partition block {name!r}") from None


@dataclass(frozen=True)
class NarxDataset:
    inputs: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)
    row_times: np.ndarray = field(repr=False)
    embedding: EmbeddingSpec
    partition: Partition | None = None
    scaler: ScalerStats | None = None

    @property
    def n_rows(self) -> int:
        return self.inputs.shape[0]

    @property
    def scaled(self) -> bool:
        return self.scaler is not None

    def rows(self, block: str) -> tuple[np.ndarray, np.ndarray]:
        """(inputs, targets) view of one partition block."""
        if self.partition is None:
            raise ConfigError("dataset is not partitioned")
        lo, hi = self.partition.block(block)
        return self.inputs[lo:hi], self.targets[lo:hi]


def build_windows(x: TimeSeries, y: TimeSeries, spec: EmbeddingSpec) -> NarxDataset:
    """Embed the series into one row per valid t in [n_lags, N-1-n_leads]."""
    if len(x) != len(y):
        raise ConfigError(f"series lengths differ: {len(x)} vs {len(y)}")
    n = len(y)
    m, leads = spec.n_lags, spec.n_leads
    min_len = m + leads + 1
    if n < min_len:
        raise ConfigError(
            f"series of length {n} too short for n_lags={m}, n_leads={leads}; "
            f"need at least {min_len} samples"
        )

    t = np.arange(m, n - leads)
    inputs = np.empty((t.size, 2 * m))
    for j in range(m):
        inputs[:, j] = y.values[t - 1 - j]
        inputs[:, m + j] = x.values[t - j]
    targets = np.empty((t.size, 1 + leads))
    for j in range(1 + leads):
        targets[:, j] = y.values[t + j]
    return NarxDataset(inputs=inputs, targets=targets, row_times=t, embedding=spec)


def split_2_1_1(ds: NarxDataset) -> NarxDataset:
    """Partition rows into contiguous blocks at n//2 and 3n//4 (no shuffling)."""
    n = ds.n_rows
    if n < 8:
        raise ConfigError(f"need at least 8 rows to split 2:1:1, got {n}")
    i1 = n // 2
    i2 = (3 * n) // 4
    part = Partition(train=(0, i1), val=(i1, i2), test=(i2, n))
    return replace(ds, partition=part)


def fit_scaler(ds: NarxDataset) -> ScalerStats:
    """Per-channel mean/std over the training rows only (population std)."""
    train_in, train_tg = ds.rows("train")
    stats = ScalerStats(
        input_mean=train_in.mean(axis=0),
        input_std=train_in.std(axis=0),
        target_mean=train_tg.mean(axis=0),
        target_std=train_tg.std(axis=0),
    )
    return stats


def apply_scaler(ds: NarxDataset, stats: ScalerStats) -> NarxDataset:
    """Standardize every row with the given statistics."""
    if ds.inputs.shape[1] != stats.input_mean.size or ds.targets.shape[1] != stats.target_mean.size:
        raise ShapeError("scaler channel count does not match dataset")
    return replace(
        ds,
        inputs=(ds.inputs - stats.input_mean) / stats.input_std,
        targets=(ds.targets - stats.target_mean) / stats.target_std,
        scaler=stats,
    )


def scale_inputs(rows: np.ndarray, stats: ScalerStats) -> np.ndarray:
    """Standardize raw input rows (used when assembling prediction inputs)."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[-1] != stats.input_mean.size:
        raise ShapeError(
            f"expected {stats.input_mean.size} input channels, got {rows.shape[-1]}"
        )
    return (rows - stats.input_mean) / stats.input_std


def invert_scaler(values: np.ndarray, stats: ScalerStats, channel: int) -> np.ndarray:
    """Map scaled target-channel values back to original units."""
    if not 0 <= channel < stats.target_mean.size:
        raise ConfigError(f"target channel {channel} out of range")
    return np.asarray(values) * stats.target_std[channel] + stats.target_mean[channel]
