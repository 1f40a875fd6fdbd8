"""Deterministic synthetic data generator for an integrated heat pump.

Produces inlet/outlet water temperature streams with thermostat cycling,
a library of heating patterns with distinct rates and time constants,
scripted or demand-driven pattern switching, ground-truth labels, and
fault injection (dynamics change, steady-band shift, or both).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .embedding import TimeSeriesFrame

FAULT_KINDS = ("dynamics_change", "mean_shift", "combined")

STATUS_FOR_KIND = {
    "dynamics_change": "Degradation",
    "mean_shift": "NewPattern",
    "combined": "Fault",
}


@dataclass(frozen=True)
class HeatingPattern:
    """One operating regime of the heat pump bank.

    heat_rate / cool_rate are instantaneous temperature slopes (degC per
    minute) at the band edges; time_constant shapes the exponential
    approach toward the implied asymptotes.
    """

    name: str
    heat_rate: float
    cool_rate: float
    noise_sigma: float = 0.05
    time_constant: float = 20.0


@dataclass(frozen=True)
class FaultSpec:
    """One injected fault.

    dynamics_change multiplies both rates by `magnitude` and divides the
    time constant by it; mean_shift offsets the thermostat band by
    `magnitude` degC with unchanged rates; combined applies both uses of
    the single magnitude.
    """

    onset: int
    kind: str
    magnitude: float


@dataclass(frozen=True)
class ScheduleEntry:
    start: int
    pattern: int


@dataclass(frozen=True)
class SimConfig:
    seed: int
    duration: int
    patterns: tuple[HeatingPattern, ...]
    low: float = 46.0
    high: float = 52.0
    schedule: tuple[ScheduleEntry, ...] | None = None
    min_segment: int = 120
    max_segment: int = 360
    faults: tuple[FaultSpec, ...] = ()
    start_epoch: float = 0.0
    outlet_lift: float = 3.0
    outlet_tau: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "patterns", tuple(self.patterns))
        object.__setattr__(self, "faults", tuple(self.faults))
        if self.schedule is not None:
            object.__setattr__(self, "schedule", tuple(self.schedule))
        problems = []
        if self.duration < 2:
            problems.append(f"duration must be >= 2, got {self.duration}")
        if not self.patterns:
            problems.append("pattern library is empty")
        for i, pat in enumerate(self.patterns):
            if pat.heat_rate <= 0 or pat.cool_rate <= 0:
                problems.append(f"pattern {i} ({pat.name}): rates must be positive")
            if pat.noise_sigma < 0:
                problems.append(f"pattern {i} ({pat.name}): negative noise sigma")
            if pat.time_constant <= 0:
                problems.append(
                    f"pattern {i} ({pat.name}): time constant must be positive"
                )
        if not self.low < self.high:
            problems.append(
                f"low set-point {self.low} must be below high {self.high}"
            )
        if self.schedule is not None:
            if not self.schedule or self.schedule[0].start != 0:
                problems.append("schedule must start at sample 0")
            starts = [e.start for e in self.schedule]
            if any(b <= a for a, b in zip(starts, starts[1:])):
                problems.append("schedule starts must be strictly increasing")
            for e in self.schedule:
                if not 0 <= e.pattern < len(self.patterns):
                    problems.append(f"schedule references pattern {e.pattern}")
                if not 0 <= e.start < self.duration:
                    problems.append(
                        f"schedule start {e.start} outside duration"
                    )
        elif not 2 <= self.min_segment <= self.max_segment:
            problems.append("need 2 <= min_segment <= max_segment")
        for f in self.faults:
            if f.kind not in FAULT_KINDS:
                problems.append(f"unknown fault kind {f.kind!r}")
            if not 0 <= f.onset < self.duration:
                problems.append(f"fault onset {f.onset} outside duration")
            if f.magnitude <= 0:
                problems.append(f"fault magnitude must be positive")
        if problems:
            raise ValueError("invalid simulator config: " + "; ".join(problems))


@dataclass(frozen=True)
class LabeledDataset:
    """Generated frame plus per-sample ground truth."""

    frame: TimeSeriesFrame
    pattern_labels: np.ndarray
    statuses: list[str]
    switch_instants: np.ndarray


def _build_schedule(config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """Per-sample pattern index, scripted or drawn segment by segment."""
    labels = np.zeros(config.duration, dtype=int)
    if config.schedule is not None:
        entries = list(config.schedule) + [
            ScheduleEntry(start=config.duration, pattern=0)
        ]
        for cur, nxt in zip(entries[:-1], entries[1:]):
            labels[cur.start: nxt.start] = cur.pattern
        return labels
    # Draw patterns from a reshuffled bag so every regime appears about
    # equally often; avoid back-to-back repeats across bag boundaries.
    n_patterns = len(config.patterns)
    pos = 0
    bag: list[int] = []
    previous = -1
    while pos < config.duration:
        if not bag:
            bag = list(rng.permutation(n_patterns))
            if n_patterns > 1 and bag[0] == previous:
                bag[0], bag[-1] = bag[-1], bag[0]
        current = bag.pop(0)
        previous = current
        length = int(rng.integers(config.min_segment, config.max_segment + 1))
        labels[pos: pos + length] = current
        pos += length
    return labels


def generate(config: SimConfig) -> LabeledDataset:
    """Run the thermal simulation; bit-identical for identical configs."""
    rng = np.random.default_rng(config.seed)
    labels = _build_schedule(config, rng)
    noise = rng.standard_normal((config.duration, 2))

    inlet = np.empty(config.duration)
    outlet = np.empty(config.duration)
    statuses: list[str] = []

    t_in = 0.5 * (config.low + config.high)
    t_out = t_in
    heating = False
    for k in range(config.duration):
        pat = config.patterns[labels[k]]
        heat_rate, cool_rate = pat.heat_rate, pat.cool_rate
        tau = pat.time_constant
        shift = 0.0
        status = "Normal"
        for fault in config.faults:
            if k < fault.onset:
                continue
            status = STATUS_FOR_KIND[fault.kind]
            if fault.kind in ("dynamics_change", "combined"):
                heat_rate *= fault.magnitude
                cool_rate *= fault.magnitude
                tau /= fault.magnitude
            if fault.kind in ("mean_shift", "combined"):
                shift += fault.magnitude
        statuses.append(status)

        low = config.low + shift
        high = config.high + shift
        if t_in <= low:
            heating = True
        elif t_in >= high:
            heating = False
        if heating:
            asymptote = low + heat_rate * tau
        else:
            asymptote = high - cool_rate * tau
        decay = math.exp(-1.0 / tau)
        t_in = asymptote + (t_in - asymptote) * decay

        target_out = t_in + (config.outlet_lift if heating else 0.0)
        out_decay = math.exp(-1.0 / config.outlet_tau)
        t_out = target_out + (t_out - target_out) * out_decay

        sigma = pat.noise_sigma
        inlet[k] = t_in + sigma * noise[k, 0]
        outlet[k] = t_out + sigma * noise[k, 1]

    timestamps = config.start_epoch + 60.0 * np.arange(config.duration)
    frame = TimeSeriesFrame(
        timestamps=timestamps,
        values=np.column_stack([inlet, outlet]),
        channel_names=("inlet_temp", "outlet_temp"),
    )
    switches = np.nonzero(labels[1:] != labels[:-1])[0] + 1
    return LabeledDataset(
        frame=frame,
        pattern_labels=labels,
        statuses=statuses,
        switch_instants=switches,
    )


# Shared pattern library for the reference scenarios: six regimes with
# distinct steady bands and varying speeds.
_REFERENCE_PATTERNS = (
    HeatingPattern("rapid_cycle", heat_rate=0.8, cool_rate=0.5,
                   time_constant=12.0),
    HeatingPattern("slow_drain", heat_rate=0.06, cool_rate=0.06,
                   time_constant=90.0),
    HeatingPattern("fast_heat", heat_rate=0.5, cool_rate=0.1,
                   time_constant=25.0),
    HeatingPattern("fast_drain", heat_rate=0.3, cool_rate=0.4,
                   time_constant=18.0),
    HeatingPattern("hold_upper", heat_rate=0.12, cool_rate=0.05,
                   time_constant=30.0),
    HeatingPattern("slow_heat", heat_rate=0.1, cool_rate=0.04,
                   time_constant=70.0),
)

_EPOCH_APRIL = 1522540800.0  # 2018-04-01T00:00:00Z
_EPOCH_MAY = 1527033600.0    # 2018-05-23T00:00:00Z
_EPOCH_JULY = 1530144000.0   # 2018-06-28T00:00:00Z


def reference_scenarios() -> dict[str, SimConfig]:
    """Named presets used by the acceptance suite and the CLI.

    april-train: six healthy regimes over six days, for model fitting.
    may-newpattern: two healthy days, then a steady-band shift with
    unchanged dynamics.  july-fault: two healthy days, then a combined
    shift-plus-dynamics fault.
    """
    return {
        "april-train": SimConfig(
            seed=20180401,
            duration=6 * 1440,
            patterns=_REFERENCE_PATTERNS,
            min_segment=180,
            max_segment=420,
            start_epoch=_EPOCH_APRIL,
        ),
        "may-newpattern": SimConfig(
            seed=20180523,
            duration=2 * 1440,
            patterns=_REFERENCE_PATTERNS,
            min_segment=180,
            max_segment=420,
            faults=(FaultSpec(onset=1440, kind="mean_shift", magnitude=4.0),),
            start_epoch=_EPOCH_MAY,
        ),
        "july-fault": SimConfig(
            seed=20180628,
            duration=2 * 1440,
            patterns=_REFERENCE_PATTERNS,
            min_segment=180,
            max_segment=420,
            faults=(FaultSpec(onset=1440, kind="combined", magnitude=2.5),),
            start_epoch=_EPOCH_JULY,
        ),
    }
