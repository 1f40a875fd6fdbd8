"""Time-lag embedding of multichannel sensor streams.

Turns a raw time series into the lagged, differenced, augmented design
matrix consumed by the clustering and monitoring stages, and selects the
time lag from sample autocorrelation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Timestamp spacing ratio beyond which a missing-sample gap splits the
# frame into segments; lagged rows never span a gap.
GAP_FACTOR = 1.5


@dataclass(frozen=True)
class TimeSeriesFrame:
    """K timestamped samples of J_raw sensor channels.

    Parameters
    ----------
    timestamps : ndarray, shape (K,)
        POSIX seconds, strictly increasing, nominally evenly spaced.
    values : ndarray, shape (K, J_raw)
        Finite sensor readings, one column per channel.
    channel_names : tuple of str
        Column labels, len J_raw.
    """

    timestamps: np.ndarray
    values: np.ndarray
    channel_names: tuple[str, ...]

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("values must be a 2-D matrix")
        if ts.ndim != 1 or ts.shape[0] != vals.shape[0]:
            raise ValueError("timestamps and values disagree on sample count")
        if ts.shape[0] < 2:
            raise ValueError("need at least 2 samples")
        names = tuple(str(n) for n in self.channel_names)
        if vals.shape[1] != len(names):
            raise ValueError("channel_names length must match value columns")
        if not np.all(np.isfinite(ts)):
            raise ValueError("timestamps must be finite")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite (no NaN/inf)")
        if np.any(np.diff(ts) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "channel_names", names)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    @property
    def nominal_spacing(self) -> float:
        """Median timestamp step, in seconds."""
        return float(np.median(np.diff(self.timestamps)))

    def segment_slices(self) -> list[slice]:
        """Contiguous index ranges separated by timestamp gaps.

        A step larger than GAP_FACTOR times the nominal spacing starts a
        new segment.
        """
        dt = np.diff(self.timestamps)
        breaks = np.nonzero(dt > GAP_FACTOR * self.nominal_spacing)[0]
        starts = np.concatenate(([0], breaks + 1))
        ends = np.concatenate((breaks + 1, [self.n_samples]))
        return [slice(int(a), int(b)) for a, b in zip(starts, ends)]


@dataclass(frozen=True)
class AugmentedMatrix:
    """Lagged + differenced design matrix, one row per usable instant.

    Each row concatenates the lagged vector at time k with its forward
    difference (lagged vector at k+1 minus at k), so the column count is
    2 * source_channel_count * lag.  row_timestamps align to the newest
    raw sample entering each lagged vector.  segment_starts marks row
    indices where a new contiguous segment begins; differences and
    rolling windows must not cross those boundaries.
    """

    rows: np.ndarray
    lag: int
    source_channel_count: int
    row_timestamps: np.ndarray
    segment_starts: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        ts = np.asarray(self.row_timestamps, dtype=float)
        starts = np.asarray(self.segment_starts, dtype=int)
        if rows.ndim != 2:
            raise ValueError("rows must be 2-D")
        if rows.shape[1] != 2 * self.source_channel_count * self.lag:
            raise ValueError("column count must equal 2 * channels * lag")
        if rows.shape[0] != ts.shape[0]:
            raise ValueError("row_timestamps must match row count")
        if not np.all(np.isfinite(rows)):
            raise ValueError("augmented rows must be finite")
        if starts.size == 0 or starts[0] != 0:
            raise ValueError("segment_starts must begin at row 0")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "row_timestamps", ts)
        object.__setattr__(self, "segment_starts", starts)

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def width(self) -> int:
        return self.rows.shape[1]

    def segment_bounds(self) -> list[tuple[int, int]]:
        """(start, end) row ranges of the contiguous segments."""
        edges = np.concatenate((self.segment_starts, [self.n_rows]))
        return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


@dataclass(frozen=True)
class LagSelection:
    """Outcome of autocorrelation-based lag selection."""

    lag: int
    within_band: bool
    rss: np.ndarray  # root-summed-squares autocorrelation, index 0 == lag 1


def select_lag(frame: TimeSeriesFrame, confidence_band: float = 0.01,
               max_lag: int = 120) -> LagSelection:
    """Pick the smallest lag whose cross-channel autocorrelation has decayed.

    Computes the biased per-channel sample autocorrelation at lags
    1..max_lag (pairs never span a timestamp gap), combines channels by
    root-summed-squares, and returns the first lag strictly inside the
    confidence band.  If the band is never reached, returns max_lag with
    within_band=False.

    Raises ValueError for a constant channel (autocorrelation undefined)
    or when the frame is too short for max_lag.
    """
    if not 0.0 < confidence_band < 1.0:
        raise ValueError("confidence_band must be in (0, 1)")
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    if max_lag >= frame.n_samples / 2:
        raise ValueError(
            f"frame too short: max_lag={max_lag} needs more than "
            f"{2 * max_lag} samples, got {frame.n_samples}"
        )
    segments = frame.segment_slices()
    if max(s.stop - s.start for s in segments) <= max_lag:
        raise ValueError(
            f"no contiguous segment longer than max_lag={max_lag}"
        )

    k_total = frame.n_samples
    means = frame.values.mean(axis=0)
    centered = frame.values - means
    c0 = np.einsum("ij,ij->j", centered, centered) / k_total
    for j, var in enumerate(c0):
        if var <= 0.0:
            raise ValueError(
                f"channel {frame.channel_names[j]!r} is constant; "
                "autocorrelation is undefined"
            )

    acf = np.zeros((max_lag, frame.n_channels))
    for ell in range(1, max_lag + 1):
        acc = np.zeros(frame.n_channels)
        for seg in segments:
            block = centered[seg]
            if block.shape[0] > ell:
                acc += np.einsum("ij,ij->j", block[:-ell], block[ell:])
        acf[ell - 1] = acc / (k_total * c0)

    rss = np.sqrt(np.sum(acf**2, axis=1))
    inside = np.nonzero(rss < confidence_band)[0]
    if inside.size:
        return LagSelection(lag=int(inside[0]) + 1, within_band=True, rss=rss)
    return LagSelection(lag=max_lag, within_band=False, rss=rss)


def _lag_block(values: np.ndarray, h: int) -> np.ndarray:
    """Lagged rows of one contiguous value block, channel-major per lag.

    Row for time k is [x(k), x(k-1), ..., x(k-h+1)] with all channels
    contiguous within each lag step.
    """
    n = values.shape[0]
    return np.concatenate(
        [values[h - 1 - ell: n - ell] for ell in range(h)], axis=1
    )


def build_lagged(frame: TimeSeriesFrame, h: int) -> np.ndarray:
    """Stack lagged vectors for every instant with h samples of history.

    Returns one row per usable instant; with no gaps that is K - h + 1
    rows of width n_channels * h.  Rows never span a timestamp gap.
    """
    if h < 1:
        raise ValueError("lag must be >= 1")
    if h >= frame.n_samples:
        raise ValueError(
            f"lag {h} requires more than {h} samples, got {frame.n_samples}"
        )
    blocks = [
        _lag_block(frame.values[seg], h)
        for seg in frame.segment_slices()
        if seg.stop - seg.start >= h
    ]
    if not blocks:
        raise ValueError(f"no contiguous segment holds {h} samples")
    return np.concatenate(blocks, axis=0)


def difference(matrix: np.ndarray) -> np.ndarray:
    """First-order forward difference along rows: row i+1 minus row i."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise ValueError("need a 2-D matrix with at least 2 rows")
    return np.diff(matrix, axis=0)


def augment(frame: TimeSeriesFrame, h: int) -> AugmentedMatrix:
    """Build the lagged + forward-differenced design matrix.

    Row i pairs the lagged vector at time k with the forward difference
    (lagged at k+1 minus lagged at k); with no gaps there are K - h rows.
    """
    if h < 1:
        raise ValueError("lag must be >= 1")
    if frame.n_samples <= h + 1:
        raise ValueError(
            f"need more than {h + 1} samples for lag {h}, "
            f"got {frame.n_samples}"
        )
    blocks = []
    stamps = []
    starts = []
    row_count = 0
    for seg in frame.segment_slices():
        if seg.stop - seg.start < h + 2:
            continue
        lagged = _lag_block(frame.values[seg], h)
        diffs = np.diff(lagged, axis=0)
        blocks.append(np.concatenate([lagged[:-1], diffs], axis=1))
        stamps.append(frame.timestamps[seg][h - 1: -1])
        starts.append(row_count)
        row_count += diffs.shape[0]
    if not blocks:
        raise ValueError(f"no contiguous segment holds {h + 2} samples")
    return AugmentedMatrix(
        rows=np.concatenate(blocks, axis=0),
        lag=h,
        source_channel_count=frame.n_channels,
        row_timestamps=np.concatenate(stamps),
        segment_starts=np.asarray(starts, dtype=int),
    )
