"""Time-series containers, normalisation and windowing."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class MultiSeries:
    """A ``T x D`` real-valued series with optional per-timestep 0/1 labels."""

    values: np.ndarray
    labels: Optional[np.ndarray] = None
    channel_names: Sequence[str] = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"values must be a non-empty T x D matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise ValueError(f"non-finite value at row {bad[0]}, channel {bad[1]}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

        if self.labels is not None:
            labels = np.array(self.labels).astype(np.int64).ravel()
            if labels.shape[0] != values.shape[0]:
                raise ValueError(
                    f"labels length {labels.shape[0]} does not match series length {values.shape[0]}"
                )
            if not np.all((labels == 0) | (labels == 1)):
                raise ValueError("labels must be 0/1")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

        names = tuple(self.channel_names) or tuple(f"ch{d}" for d in range(values.shape[1]))
        if len(names) != values.shape[1]:
            raise ValueError(f"{len(names)} channel names for {values.shape[1]} channels")
        object.__setattr__(self, "channel_names", names)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def D(self) -> int:
        return self.values.shape[1]

    def slice(self, start: int, stop: int) -> "MultiSeries":
        labels = None if self.labels is None else self.labels[start:stop]
        return MultiSeries(self.values[start:stop], labels, self.channel_names)


@dataclass(frozen=True)
class WindowBatch:
    """``B x L x D`` windows cut from a series, with their start offsets."""

    windows: np.ndarray
    origin_index: np.ndarray

    def __post_init__(self):
        if self.windows.ndim != 3:
            raise ValueError(f"windows must be B x L x D, got shape {self.windows.shape}")
        if self.windows.shape[1] < 2:
            raise ValueError("window length must be at least 2")
        if len(self.origin_index) != self.windows.shape[0]:
            raise ValueError("one origin offset per window required")

    @property
    def shape(self) -> tuple:
        return self.windows.shape

    def subset(self, idx) -> "WindowBatch":
        return WindowBatch(self.windows[idx], self.origin_index[idx])


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray


def fit_normalizer(train: MultiSeries) -> NormStats:
    """Per-channel population mean and standard deviation of ``train``.

    The standard deviation is floored at ``1e-8`` so constant channels
    normalise to zero instead of dividing by zero.
    """
    if train.T < 2:
        raise ValueError("need at least two timesteps to fit a normalizer")
    mean = train.values.mean(axis=0)
    std = np.maximum(train.values.std(axis=0), STD_FLOOR)
    return NormStats(mean=mean, std=std)


def apply_normalizer(series: MultiSeries, stats: NormStats) -> MultiSeries:
    if series.D != len(stats.mean):
        raise ValueError(f"series has {series.D} channels, normalizer has {len(stats.mean)}")
    values = (series.values - stats.mean) / stats.std
    return MultiSeries(values, series.labels, series.channel_names)


def invert_normalizer(series: MultiSeries, stats: NormStats) -> MultiSeries:
    if series.D != len(stats.mean):
        raise ValueError(f"series has {series.D} channels, normalizer has {len(stats.mean)}")
    return MultiSeries(series.values * stats.std + stats.mean, series.labels, series.channel_names)


def window_offsets(T: int, length: int, stride: int) -> np.ndarray:
    if length > T:
        raise ValueError(f"window length {length} exceeds series length {T}")
    if length < 2:
        raise ValueError("window length must be at least 2")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return np.arange(0, T - length + 1, stride, dtype=np.int64)


def tiling_offsets(T: int, length: int) -> np.ndarray:
    """Offsets of non-overlapping windows plus one tail window anchored at ``T - length``.

    Every timestep is covered; where the tail window overlaps its
    predecessor the tail window wins.
    """
    offsets = window_offsets(T, length, length)
    if T % length:
        offsets = np.append(offsets, T - length)
    return offsets


def make_windows(series: MultiSeries, length: int, stride: int) -> WindowBatch:
    """Cut windows of ``length`` at offsets ``0, stride, 2*stride, ...``; a trailing partial window is dropped."""
    offsets = window_offsets(series.T, length, stride)
    return windows_at(series, length, offsets)


def windows_at(series: MultiSeries, length: int, offsets: np.ndarray) -> WindowBatch:
    idx = np.asarray(offsets)[:, None] + np.arange(length)[None, :]
    return WindowBatch(windows=series.values[idx], origin_index=np.asarray(offsets, dtype=np.int64))
