"""Quantitative evaluation of monitoring runs and clustering output.

False alarm rate counts NewPattern, Degradation and Fault verdicts;
NormalSwitching is a benign regime change and counts as normal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .fusion import ALARM_STATES, HealthState, HealthStatus

MAX_SEGMENTATION_CLASSES = 32


def _as_states(statuses) -> list[HealthState]:
    out = []
    for item in statuses:
        if isinstance(item, HealthStatus):
            out.append(item.state)
        elif isinstance(item, HealthState):
            out.append(item)
        else:
            out.append(HealthState(str(item)))
    return out


def far(statuses) -> float:
    """Fraction of alarmed samples in a run of ground-truth-normal data."""
    states = _as_states(statuses)
    if not states:
        raise ValueError("cannot compute a false alarm rate on no samples")
    alarms = sum(1 for s in states if s in ALARM_STATES)
    return alarms / len(states)


@dataclass(frozen=True)
class DetectionSummary:
    """Detection timing and coverage for one fault episode.

    fdt_index is the position of the first alarm at or after the onset
    (None when the fault is never detected); fdd counts samples from the
    onset to that alarm, with a wall-clock variant when timestamps are
    supplied.  fdr is the alarmed fraction of post-onset samples.
    """

    fdt_index: int | None
    fdt_timestamp: float | None
    fdd_samples: int | None
    fdd_minutes: float | None
    fdr: float


def fdd_fdr(statuses, onset_index: int,
            timestamps: np.ndarray | None = None) -> DetectionSummary:
    """Detection delay and detection rate against a known fault onset.

    Alarms strictly before the onset are false alarms and never yield a
    negative delay; detection only counts from the onset onward.
    """
    states = _as_states(statuses)
    if not 0 <= onset_index < len(states):
        raise ValueError(
            f"onset index {onset_index} outside the evaluated range "
            f"0..{len(states) - 1}"
        )
    post = states[onset_index:]
    alarmed = [s in ALARM_STATES for s in post]
    n_alarms = sum(alarmed)
    fdr = n_alarms / len(post)
    if n_alarms == 0:
        return DetectionSummary(None, None, None, None, 0.0)
    first = alarmed.index(True) + onset_index
    fdt_ts = None
    fdd_min = None
    if timestamps is not None:
        timestamps = np.asarray(timestamps, dtype=float)
        fdt_ts = float(timestamps[first])
        fdd_min = (timestamps[first] - timestamps[onset_index]) / 60.0
    return DetectionSummary(
        fdt_index=first,
        fdt_timestamp=fdt_ts,
        fdd_samples=first - onset_index,
        fdd_minutes=fdd_min,
        fdr=fdr,
    )


def segmentation_accuracy(predicted, truth) -> float:
    """Label agreement after the best one-to-one label matching.

    Builds the confusion matrix and solves the assignment problem that
    maximizes matched samples, so the score is invariant under any
    permutation of either labeling.
    """
    predicted = np.asarray(predicted, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise ValueError("labelings must be 1-D and of equal length")
    if predicted.size == 0:
        raise ValueError("cannot score empty labelings")
    pred_ids = np.unique(predicted)
    true_ids = np.unique(truth)
    if max(pred_ids.size, true_ids.size) > MAX_SEGMENTATION_CLASSES:
        raise ValueError(
            f"more than {MAX_SEGMENTATION_CLASSES} classes is unsupported"
        )
    size = max(pred_ids.size, true_ids.size)
    confusion = np.zeros((size, size))
    pred_pos = {label: i for i, label in enumerate(pred_ids)}
    true_pos = {label: i for i, label in enumerate(true_ids)}
    for p, t in zip(predicted, truth):
        confusion[pred_pos[p], true_pos[t]] += 1
    row, col = linear_sum_assignment(confusion, maximize=True)
    return float(confusion[row, col].sum() / predicted.size)


def label_run_count(labels) -> int:
    """Number of maximal constant runs in a label sequence."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0
    return int(1 + np.sum(labels[1:] != labels[:-1]))


@dataclass(frozen=True)
class IndexBreakdown:
    """Per-index persistence diagnostics over an evaluated run."""

    violation_rate: float
    first_persistent_index: int | None


@dataclass(frozen=True)
class EvaluationReport:
    far: float
    fdt_index: int | None
    fdt_timestamp: float | None
    fdd_samples: int | None
    fdd_minutes: float | None
    fdr: float
    per_index: dict[str, IndexBreakdown]

    def as_dict(self) -> dict:
        return {
            "far": self.far,
            "fdt_index": self.fdt_index,
            "fdt_timestamp": self.fdt_timestamp,
            "fdd_samples": self.fdd_samples,
            "fdd_minutes": self.fdd_minutes,
            "fdr": self.fdr,
            "per_index": {
                name: {
                    "violation_rate": b.violation_rate,
                    "first_persistent_index": b.first_persistent_index,
                }
                for name, b in self.per_index.items()
            },
        }


def persistent_violations(flags: np.ndarray, run: int = 3) -> np.ndarray:
    """Boolean mask of samples ending a run of `run` consecutive True."""
    flags = np.asarray(flags, dtype=bool)
    out = np.zeros_like(flags)
    streak = 0
    for i, hit in enumerate(flags):
        streak = streak + 1 if hit else 0
        out[i] = streak >= run
    return out


def build_report(timestamps: np.ndarray, bips: np.ndarray, statuses,
                 onset_index: int | None, alpha: float = 0.01,
                 normal_mask: np.ndarray | None = None) -> EvaluationReport:
    """Full evaluation of a monitoring run.

    The false alarm rate is computed over normal_mask samples (all
    pre-onset samples when a mask is not given, the whole run without an
    onset); detection timing comes from the onset.  The per-index
    breakdown reports each global index's violation rate and the first
    sample where it was persistent for 3 consecutive samples.
    """
    timestamps = np.asarray(timestamps, dtype=float)
    bips = np.atleast_2d(np.asarray(bips, dtype=float))
    states = _as_states(statuses)
    if normal_mask is None:
        if onset_index is None:
            normal_mask = np.ones(len(states), dtype=bool)
        else:
            normal_mask = np.arange(len(states)) < onset_index
    normal_states = [s for s, keep in zip(states, normal_mask) if keep]
    far_value = far(normal_states) if normal_states else 0.0

    if onset_index is None:
        detection = DetectionSummary(None, None, None, None, 0.0)
    else:
        detection = fdd_fdr(states, onset_index, timestamps)

    tau = 1.0 - alpha
    per_index = {}
    names = ("bip_ss", "bip_sr", "bip_ds", "bip_dr")
    start = onset_index if onset_index is not None else 0
    for j, name in enumerate(names):
        over = bips[:, j] > tau
        persistent = persistent_violations(over[start:])
        hits = np.nonzero(persistent)[0]
        per_index[name] = IndexBreakdown(
            violation_rate=float(np.mean(over[start:])) if over[start:].size
            else 0.0,
            first_persistent_index=int(hits[0]) + start if hits.size else None,
        )
    return EvaluationReport(
        far=far_value,
        fdt_index=detection.fdt_index,
        fdt_timestamp=detection.fdt_timestamp,
        fdd_samples=detection.fdd_samples,
        fdd_minutes=detection.fdd_minutes,
        fdr=detection.fdr,
        per_index=per_index,
    )
