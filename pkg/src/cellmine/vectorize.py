"""Turn binned series into fixed-length, zero-score-normalized traffic vectors.

The canonical configuration is 4 aligned weeks of 10-minute slots (4032
values). Vectors can be stored as CSV (``tower_id,v0,...``) or as a compact
length-prefixed little-endian binary.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .common import (
    DEFAULT_TZ_OFFSET_MINUTES,
    SLOT_SECONDS,
    SLOTS_PER_DAY,
    SLOTS_PER_WEEK,
    local_seconds_of_day,
    local_weekday,
)
from .ingest import BinnedSeries

_BIN_MAGIC = b"CMVEC1\n"


class VectorizeError(ValueError):
    pass


@dataclass(slots=True)
class TrafficVector:
    """Zero-score-normalized per-tower time series.

    ``degenerate`` marks towers whose raw series was constant (dead towers);
    their values are all zero and they are excluded from clustering by default.
    """

    tower_id: str
    values: np.ndarray
    degenerate: bool = False

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


def trim_to_weeks(
    series: BinnedSeries,
    weeks: int,
    week_start: int = 0,
    tz_offset_minutes: int = DEFAULT_TZ_OFFSET_MINUTES,
) -> BinnedSeries:
    """Keep the first ``weeks`` whole weeks starting on the configured
    week-start day (civil midnight). Slots before that boundary are dropped.
    """
    if weeks < 1:
        raise VectorizeError(f"weeks must be >= 1, got {weeks}")
    sod = local_seconds_of_day(series.origin, tz_offset_minutes)
    if sod % SLOT_SECONDS != 0:
        raise VectorizeError(
            f"series origin is not slot-aligned to civil midnight "
            f"(seconds of day {sod}); no week boundary falls on a slot edge"
        )
    # slots until the next civil midnight, then whole days to the week start
    to_midnight = (-sod % 86400) // SLOT_SECONDS
    first_midnight = series.origin + to_midnight * SLOT_SECONDS
    days_ahead = (week_start - local_weekday(first_midnight, tz_offset_minutes)) % 7
    offset = to_midnight + days_ahead * SLOTS_PER_DAY
    needed = offset + weeks * SLOTS_PER_WEEK
    if needed > series.n_slots:
        raise VectorizeError(
            f"tower {series.tower_id}: need {needed} slots "
            f"({weeks} aligned weeks from slot {offset}), have {series.n_slots}"
        )
    return BinnedSeries(
        series.tower_id,
        series.origin + offset * SLOT_SECONDS,
        series.slot_bytes[offset : offset + weeks * SLOTS_PER_WEEK].copy(),
    )


def normalize(series: BinnedSeries) -> TrafficVector:
    """Zero-score normalization with the population standard deviation.

    A constant series cannot be scaled; it yields an all-zero vector with the
    degenerate flag set rather than an error.
    """
    raw = np.asarray(series.slot_bytes, dtype=float)
    if raw.size == 0:
        raise VectorizeError(f"tower {series.tower_id}: empty series")
    if np.ptp(raw) == 0.0:
        return TrafficVector(series.tower_id, np.zeros_like(raw), degenerate=True)
    std = raw.std()
    return TrafficVector(series.tower_id, (raw - raw.mean()) / std, degenerate=False)


def write_vectors_csv(path: str | Path, vectors: Sequence[TrafficVector]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        n = vectors[0].n if vectors else 0
        writer.writerow(["tower_id", "degenerate"] + [f"v{i}" for i in range(n)])
        for vec in sorted(vectors, key=lambda v: v.tower_id):
            writer.writerow(
                [vec.tower_id, int(vec.degenerate)] + [repr(float(x)) for x in vec.values]
            )
    return path


def read_vectors_csv(path: str | Path) -> list[TrafficVector]:
    out = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header[:2] != ["tower_id", "degenerate"]:
            raise VectorizeError(f"bad vectors header: {header[:2]}")
        for row in reader:
            out.append(
                TrafficVector(row[0], np.array([float(x) for x in row[2:]]), bool(int(row[1])))
            )
    return out


def write_vectors_binary(path: str | Path, vectors: Sequence[TrafficVector]) -> Path:
    """Length-prefixed binary: magic, u32 record count, then per record a
    u16 id length + UTF-8 id, u8 degenerate flag, u32 value count and the
    values as little-endian float64."""
    path = Path(path)
    with open(path, "wb") as f:
        f.write(_BIN_MAGIC)
        f.write(struct.pack("<I", len(vectors)))
        for vec in sorted(vectors, key=lambda v: v.tower_id):
            ident = vec.tower_id.encode("utf-8")
            f.write(struct.pack("<H", len(ident)))
            f.write(ident)
            f.write(struct.pack("<BI", int(vec.degenerate), vec.n))
            f.write(np.asarray(vec.values, dtype="<f8").tobytes())
    return path


def read_vectors_binary(path: str | Path) -> list[TrafficVector]:
    out = []
    with open(path, "rb") as f:
        magic = f.read(len(_BIN_MAGIC))
        if magic != _BIN_MAGIC:
            raise VectorizeError(f"not a cellmine vector file: {path}")
        (count,) = struct.unpack("<I", f.read(4))
        for _ in range(count):
            (id_len,) = struct.unpack("<H", f.read(2))
            tower_id = f.read(id_len).decode("utf-8")
            degenerate, n = struct.unpack("<BI", f.read(5))
            values = np.frombuffer(f.read(8 * n), dtype="<f8").astype(float)
            out.append(TrafficVector(tower_id, values, bool(degenerate)))
    return out


def read_vectors(path: str | Path) -> list[TrafficVector]:
    """Read either format, sniffing the binary magic."""
    with open(path, "rb") as f:
        magic = f.read(len(_BIN_MAGIC))
    if magic == _BIN_MAGIC:
        return read_vectors_binary(path)
    return read_vectors_csv(path)


def vectorize_all(
    series: Iterable[BinnedSeries],
    weeks: int,
    week_start: int = 0,
    tz_offset_minutes: int = DEFAULT_TZ_OFFSET_MINUTES,
) -> list[TrafficVector]:
    return [
        normalize(trim_to_weeks(s, weeks, week_start, tz_offset_minutes)) for s in series
    ]
