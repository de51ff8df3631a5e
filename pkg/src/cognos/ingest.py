"""CSV loading/writing and seeded synthetic datasets with known anomalies."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import MultiSeries
from .rng import Xoshiro256

ANOMALY_KINDS = ("mean_shift", "variance_burst", "drift")


class CsvFormatError(ValueError):
    pass


def load_csv(path, has_header: bool = True, label_column: Optional[str] = None) -> MultiSeries:
    """Read a comma-separated file; every non-label column becomes a channel.

    ``label_column`` names a 0/1 column (by header name, or as a column
    index when the file has no header) that is split off into the labels.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if has_header:
        if not rows:
            raise CsvFormatError(f"{path}: missing header row")
        header, rows = [h.strip() for h in rows[0]], rows[1:]
    else:
        header = [str(i) for i in range(len(rows[0]))] if rows else []
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")

    width = len(header)
    label_idx = None
    if label_column is not None:
        if label_column not in header:
            raise CsvFormatError(f"{path}: label column {label_column!r} not found")
        label_idx = header.index(label_column)
    channel_idx = [j for j in range(width) if j != label_idx]
    if not channel_idx:
        raise CsvFormatError(f"{path}: no numeric channels")

    first_line = 2 if has_header else 1
    values = np.empty((len(rows), len(channel_idx)))
    labels = np.empty(len(rows), dtype=np.int64) if label_idx is not None else None
    for i, row in enumerate(rows):
        line = first_line + i
        if len(row) != width:
            raise CsvFormatError(f"{path}: line {line} has {len(row)} fields, expected {width}")
        for out_j, j in enumerate(channel_idx):
            try:
                v = float(row[j])
            except ValueError:
                raise CsvFormatError(f"{path}: line {line}, column {j + 1}: cannot parse {row[j]!r}") from None
            if not math.isfinite(v):
                raise CsvFormatError(f"{path}: line {line}, column {j + 1}: non-finite value {row[j]!r}")
            values[i, out_j] = v
        if label_idx is not None:
            cell = row[label_idx].strip()
            if cell not in ("0", "1"):
                raise CsvFormatError(f"{path}: line {line}, column {label_idx + 1}: label must be 0 or 1, got {cell!r}")
            labels[i] = int(cell)

    names = [header[j] for j in channel_idx] if has_header else None
    return MultiSeries(values, labels, names or ())


def write_csv(series: MultiSeries, path, header: bool = True, label_column: Optional[str] = None) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            cols = list(series.channel_names)
            if label_column is not None:
                cols.append(label_column)
            writer.writerow(cols)
        for t in range(series.T):
            row = [repr(float(v)) for v in series.values[t]]
            if label_column is not None:
                row.append(str(int(series.labels[t])))
            writer.writerow(row)


def load_labels(path) -> np.ndarray:
    """One 0/1 per line."""
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            cell = line.strip()
            if not cell:
                continue
            if cell not in ("0", "1"):
                raise CsvFormatError(f"{path}: line {line_no}: label must be 0 or 1, got {cell!r}")
            out.append(int(cell))
    return np.asarray(out, dtype=np.int64)


def write_labels(labels, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.writelines(f"{int(v)}\n" for v in labels)


@dataclass(frozen=True)
class Sinusoid:
    amplitude: float
    period: float
    phase: float = 0.0


@dataclass(frozen=True)
class Anomaly:
    start: int
    end: int
    kind: str
    magnitude: float
    channels: Optional[tuple] = None  # None = every channel


@dataclass(frozen=True)
class SyntheticSpec:
    """Sinusoidal base plus white or AR(1) noise with injected anomaly segments.

    ``magnitude`` is the shift for ``mean_shift``, the noise multiplier
    for ``variance_burst`` and the per-step slope for ``drift``.
    """

    T: int
    D: int
    base: Sequence[Sinusoid]
    noise_std: float
    noise_color: str = "white"
    phi: float = 0.0
    anomalies: Sequence[Anomaly] = field(default=())
    seed: int = 0

    def validate(self) -> None:
        if self.T < 1 or self.D < 1:
            raise ValueError("T and D must be positive")
        if len(self.base) != self.D:
            raise ValueError(f"need one base sinusoid per channel ({self.D}), got {len(self.base)}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.noise_color not in ("white", "ar1"):
            raise ValueError(f"unknown noise colour {self.noise_color!r}")
        if self.noise_color == "ar1" and not -1.0 < self.phi < 1.0:
            raise ValueError("AR(1) coefficient must lie in (-1, 1)")
        last_end = None
        for a in sorted(self.anomalies, key=lambda a: a.start):
            if a.kind not in ANOMALY_KINDS:
                raise ValueError(f"unknown anomaly kind {a.kind!r}")
            if not 0 <= a.start < a.end <= self.T:
                raise ValueError(f"anomaly segment [{a.start}, {a.end}) outside [0, {self.T})")
            if last_end is not None and a.start < last_end:
                raise ValueError(f"anomaly segment [{a.start}, {a.end}) overlaps a previous segment")
            if a.channels is not None and any(not 0 <= c < self.D for c in a.channels):
                raise ValueError(f"anomaly channel out of range in {a}")
            last_end = a.end

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticSpec":
        color = doc.get("noise_color", "white")
        phi = float(doc.get("phi", 0.0))
        if isinstance(color, dict):  # {"ar1": 0.8}
            (color, phi), = color.items()
        anomalies = tuple(
            Anomaly(
                start=int(a["start"]),
                end=int(a["end"]),
                kind=a["kind"],
                magnitude=float(a.get("magnitude", a.get("delta", a.get("factor", a.get("slope", 0.0))))),
                channels=tuple(a["channels"]) if a.get("channels") is not None else None,
            )
            for a in doc.get("anomalies", ())
        )
        return cls(
            T=int(doc["T"]),
            D=int(doc["D"]),
            base=tuple(Sinusoid(float(b["amplitude"]), float(b["period"]), float(b.get("phase", 0.0))) for b in doc["base"]),
            noise_std=float(doc["noise_std"]),
            noise_color=color,
            phi=float(phi),
            anomalies=anomalies,
            seed=int(doc.get("seed", 0)),
        )

    @classmethod
    def from_json(cls, path) -> "SyntheticSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def generate_noise(spec: SyntheticSpec) -> np.ndarray:
    """The ``T x D`` noise component: normals drawn timestep-major, channel-minor."""
    rng = Xoshiro256(spec.seed)
    eps = rng.normals(spec.T * spec.D).reshape(spec.T, spec.D) * spec.noise_std
    if spec.noise_color == "white":
        return eps
    noise = np.empty_like(eps)
    noise[0] = eps[0]
    for t in range(1, spec.T):
        noise[t] = spec.phi * noise[t - 1] + eps[t]
    return noise


def generate_synthetic(spec: SyntheticSpec) -> MultiSeries:
    spec.validate()
    t = np.arange(spec.T, dtype=np.float64)
    clean = np.column_stack(
        [b.amplitude * np.sin(2.0 * np.pi * t / b.period + b.phase) for b in spec.base]
    )
    noise = generate_noise(spec)
    values = clean + noise
    labels = np.zeros(spec.T, dtype=np.int64)
    for a in spec.anomalies:
        chans = list(range(spec.D)) if a.channels is None else list(a.channels)
        seg = slice(a.start, a.end)
        if a.kind == "mean_shift":
            values[seg, chans] += a.magnitude
        elif a.kind == "variance_burst":
            values[seg, chans] += (a.magnitude - 1.0) * noise[seg][:, chans]
        else:
            ramp = a.magnitude * (t[seg] - a.start)
            values[seg, chans] += ramp[:, None]
        labels[seg] = 1
    return MultiSeries(values, labels, tuple(f"ch{d}" for d in range(spec.D)))
