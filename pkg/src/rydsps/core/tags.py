"""Time-tag streams and their on-disk formats.

CSV: header ``channel,timestamp_ns`` then one record per line, sorted by
timestamp. Binary: the 5 magic bytes ``TTAG1`` followed by packed 9-byte
records (little-endian u8 channel, u64 nanoseconds).
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"TTAG1"
RECORD = np.dtype([("channel", "u1"), ("timestamp", "<u8")])  # packed, 9 bytes
CSV_HEADER = "channel,timestamp_ns"


class TagFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TimeTagStream:
    """Detector clicks as parallel arrays, sorted by (timestamp, channel)."""

    channels: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        ch = np.ascontiguousarray(self.channels, dtype=np.uint8)
        ts = np.ascontiguousarray(self.timestamps, dtype=np.int64)
        if ch.shape != ts.shape or ch.ndim != 1:
            raise ValueError("channels and timestamps must be 1-D arrays of equal length")
        if ts.size and ts.min() < 0:
            raise ValueError("timestamps must be non-negative")
        if ts.size > 1 and np.any(np.diff(ts) < 0):
            raise ValueError("stream must be sorted by timestamp")
        ch.setflags(write=False)
        ts.setflags(write=False)
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "timestamps", ts)

    @classmethod
    def merge(cls, parts: dict[int, np.ndarray]) -> "TimeTagStream":
        """Build a stream from per-channel timestamp arrays (any order)."""
        if not parts:
            return cls.empty()
        ch = np.concatenate([np.full(len(t), c, dtype=np.uint8) for c, t in parts.items()])
        ts = np.concatenate([np.asarray(t, dtype=np.int64) for t in parts.values()])
        order = np.lexsort((ch, ts))
        return cls(ch[order], ts[order])

    @classmethod
    def empty(cls) -> "TimeTagStream":
        return cls(np.empty(0, np.uint8), np.empty(0, np.int64))

    def __len__(self) -> int:
        return self.timestamps.size

    def channel(self, c: int) -> np.ndarray:
        """Sorted timestamps (ns) of one channel."""
        return self.timestamps[self.channels == c]

    def channel_ids(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.channels))

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeTagStream):
            return NotImplemented
        return np.array_equal(self.channels, other.channels) and np.array_equal(self.timestamps, other.timestamps)


def write_csv(stream: TimeTagStream, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        if len(stream):
            data = np.column_stack([stream.channels.astype(np.int64), stream.timestamps])
            np.savetxt(fh, data, fmt="%d", delimiter=",")


def read_csv(path: str | os.PathLike) -> TimeTagStream:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise TagFormatError(f"{path}: expected header {CSV_HEADER!r}, got {header!r}")
        body = fh.read()
    if not body.strip():
        return TimeTagStream.empty()
    try:
        data = np.loadtxt(io.StringIO(body), delimiter=",", dtype=np.int64, ndmin=2)
    except ValueError as exc:
        raise TagFormatError(f"{path}: {exc}") from None
    if data.shape[1] != 2:
        raise TagFormatError(f"{path}: expected 2 columns")
    return TimeTagStream(data[:, 0], data[:, 1])


def write_binary(stream: TimeTagStream, path: str | os.PathLike) -> None:
    rec = np.empty(len(stream), dtype=RECORD)
    rec["channel"] = stream.channels
    rec["timestamp"] = stream.timestamps
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(rec.tobytes())


def read_binary(path: str | os.PathLike) -> TimeTagStream:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise TagFormatError(f"{path}: missing {MAGIC!r} magic")
    body = raw[len(MAGIC):]
    if len(body) % RECORD.itemsize:
        raise TagFormatError(f"{path}: truncated record")
    rec = np.frombuffer(body, dtype=RECORD)
    return TimeTagStream(rec["channel"], rec["timestamp"].astype(np.int64))


def read_tags(path: str | os.PathLike) -> TimeTagStream:
    """Read either format, sniffing the magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    return read_binary(path) if head == MAGIC else read_csv(path)


def write_tags(stream: TimeTagStream, path: str | os.PathLike, fmt: str = "csv") -> None:
    if fmt == "csv":
        write_csv(stream, path)
    elif fmt == "binary":
        write_binary(stream, path)
    else:
        raise ValueError(f"unknown tag format {fmt!r}")
