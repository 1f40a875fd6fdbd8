"""CSV ingestion and emission for sensor frames, truth labels and results.

Data files carry a `timestamp,<channel...>` header; timestamps are
ISO-8601 strings or integer epoch-seconds.  Written files use epoch
seconds (integers where exact) so that repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .embedding import TimeSeriesFrame


def parse_timestamp(text: str) -> float:
    """Epoch seconds from an ISO-8601 string or a numeric literal."""
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    iso = text.replace("Z", "+00:00")
    try:
        dt = datetime.fromisoformat(iso)
    except ValueError as exc:
        raise ValueError(f"unparseable timestamp {text!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_timestamp(value: float) -> str:
    """Shortest exact decimal form, integer when the value is integral."""
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def format_float(value: float) -> str:
    return repr(float(value))


def read_frame(path: str | Path) -> TimeSeriesFrame:
    """Load a `timestamp,<channel...>` CSV into a TimeSeriesFrame."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if not header or header[0].strip().lower() != "timestamp":
            raise ValueError(f"{path}: first column must be 'timestamp'")
        channels = tuple(name.strip() for name in header[1:])
        if not channels:
            raise ValueError(f"{path}: no data channels in header")
        stamps: list[float] = []
        rows: list[list[float]] = []
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(channels) + 1:
                raise ValueError(
                    f"{path}:{lineno}: expected {len(channels) + 1} fields, "
                    f"got {len(record)}"
                )
            stamps.append(parse_timestamp(record[0]))
            try:
                rows.append([float(v) for v in record[1:]])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least 2 data rows")
    return TimeSeriesFrame(
        timestamps=np.asarray(stamps),
        values=np.asarray(rows),
        channel_names=channels,
    )


def write_frame(frame: TimeSeriesFrame, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", *frame.channel_names])
        for ts, row in zip(frame.timestamps, frame.values):
            writer.writerow(
                [format_timestamp(ts), *(format_float(v) for v in row)]
            )


def write_truth(path: str | Path, timestamps: np.ndarray,
                patterns: np.ndarray, statuses: list[str]) -> None:
    """Ground-truth companion file: `timestamp,pattern,status`."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "pattern", "status"])
        for ts, pat, status in zip(timestamps, patterns, statuses):
            writer.writerow([format_timestamp(ts), int(pat), status])


def read_truth(path: str | Path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    path = Path(path)
    stamps: list[float] = []
    patterns: list[int] = []
    statuses: list[str] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != [
            "timestamp", "pattern", "status",
        ]:
            raise ValueError(f"{path}: expected header timestamp,pattern,status")
        for record in reader:
            if not record:
                continue
            stamps.append(parse_timestamp(record[0]))
            patterns.append(int(record[1]))
            statuses.append(record[2].strip())
    return np.asarray(stamps), np.asarray(patterns, dtype=int), statuses


def write_results(path: str | Path, records) -> None:
    """Per-sample monitoring output: timestamp, four indices, status."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["timestamp", "bip_ss", "bip_sr", "bip_ds", "bip_dr", "status"]
        )
        for bip, status in records:
            writer.writerow([
                format_timestamp(bip.timestamp),
                format_float(bip.bip_ss),
                format_float(bip.bip_sr),
                format_float(bip.bip_ds),
                format_float(bip.bip_dr),
                status.state.value,
            ])


def read_results(path: str | Path):
    """Parse a results CSV into (timestamps, bip matrix, status names)."""
    path = Path(path)
    stamps: list[float] = []
    bips: list[list[float]] = []
    statuses: list[str] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) != 6:
            raise ValueError(f"{path}: malformed results header")
        for record in reader:
            if not record:
                continue
            stamps.append(parse_timestamp(record[0]))
            bips.append([float(v) for v in record[1:5]])
            statuses.append(record[5].strip())
    return np.asarray(stamps), np.asarray(bips), statuses
