"""Global health indices, the status rule engine, and online scoring.

Per-pattern local probabilities are fused into four global indices by
posterior weighting; a persistence rule over the last three samples
turns index violations into one of five health statuses.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import limits as limits_mod
from . import mixture as mixture_mod
from . import sfa as sfa_mod
from .embedding import AugmentedMatrix, TimeSeriesFrame, augment

log = logging.getLogger(__name__)

#: number of consecutive violating samples that makes an index persistent
PERSISTENCE = 3

INDEX_NAMES = ("bip_ss", "bip_sr", "bip_ds", "bip_dr")


class HealthState(Enum):
    NORMAL = "Normal"
    NORMAL_SWITCHING = "NormalSwitching"
    NEW_PATTERN = "NewPattern"
    DEGRADATION = "Degradation"
    FAULT = "Fault"


#: states counted as alarms by the evaluation metrics
ALARM_STATES = frozenset(
    {HealthState.NEW_PATTERN, HealthState.DEGRADATION, HealthState.FAULT}
)


@dataclass(frozen=True)
class HealthStatus:
    """Rule-engine verdict for one sample.

    evidence names the indices behind the verdict ("bip_ss" for a
    persistent violation, "bip_ds:spike" for a single-sample one);
    warmup marks verdicts issued before a full persistence window
    existed.
    """

    state: HealthState
    evidence: tuple[str, ...] = ()
    warmup: bool = False


@dataclass(frozen=True)
class BipVector:
    """The four global indices for one sample.

    posterior holds the per-pattern membership probabilities; underflow
    marks samples whose density vanished in every pattern, where the
    posterior falls back to uniform.
    """

    bip_ss: float
    bip_sr: float
    bip_ds: float
    bip_dr: float
    posterior: np.ndarray
    timestamp: float = math.nan
    underflow: bool = False

    def __post_init__(self):
        object.__setattr__(
            self, "posterior", np.asarray(self.posterior, dtype=float)
        )
        for name in INDEX_NAMES:
            value = getattr(self, name)
            if not -1e-12 <= value <= 1.0 + 1e-12:
                raise ValueError(f"{name}={value!r} outside [0, 1]")

    def values(self) -> tuple[float, float, float, float]:
        return (self.bip_ss, self.bip_sr, self.bip_ds, self.bip_dr)


@dataclass(frozen=True)
class PatternModel:
    """One operating pattern: its projection and its control limits."""

    sfa: sfa_mod.PatternSfa
    limits: limits_mod.ControlLimits


@dataclass(frozen=True)
class MsfaModel:
    """The full fitted monitoring model."""

    lag: int
    mixture: mixture_mod.MixtureModel
    patterns: tuple[PatternModel, ...]
    alpha: float
    version: str = "1"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        patterns = tuple(self.patterns)
        if len(patterns) != self.mixture.n_components:
            raise ValueError(
                f"{len(patterns)} patterns for "
                f"{self.mixture.n_components} mixture components"
            )
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("alpha must be in (0, 0.5)")
        object.__setattr__(self, "patterns", patterns)

    @property
    def n_patterns(self) -> int:
        return len(self.patterns)

    @property
    def dim(self) -> int:
        return self.mixture.dim


def fuse(model: MsfaModel, x_d: np.ndarray, xdot_d: np.ndarray,
         timestamp: float = math.nan) -> BipVector:
    """Posterior-weighted fusion of per-pattern local probabilities."""
    x_d = np.asarray(x_d, dtype=float)
    if x_d.ndim != 1 or x_d.size != model.dim:
        raise ValueError(
            f"expected a single row of width {model.dim}, got {x_d.shape}"
        )
    resp = mixture_mod.responsibilities(model.mixture, x_d[None, :])
    posterior = resp.gamma[0]
    locals_per_pattern = np.empty((model.n_patterns, 4))
    for g, pattern in enumerate(model.patterns):
        projected = sfa_mod.project(pattern.sfa, x_d, xdot_d)
        stats = limits_mod.score(pattern.limits, *projected)
        locals_per_pattern[g] = limits_mod.local_probabilities(
            pattern.limits, stats
        )
    fused = posterior @ locals_per_pattern
    fused = np.clip(fused, 0.0, 1.0)
    return BipVector(
        bip_ss=float(fused[0]), bip_sr=float(fused[1]),
        bip_ds=float(fused[2]), bip_dr=float(fused[3]),
        posterior=posterior, timestamp=timestamp,
        underflow=bool(resp.outlier[0]),
    )


def classify(window, alpha: float) -> HealthStatus:
    """Health status from the last PERSISTENCE BipVectors.

    With threshold tau = 1 - alpha, an index is persistent when all
    window samples exceed tau and spiking when only the current one
    does.  Precedence: Fault (steady and dynamic persistent) over
    Degradation (dynamic persistent only) over NewPattern (steady
    persistent only) over NormalSwitching (dynamic spike with all
    steady values inside the band) over Normal.  Short warm-up windows
    report Normal with the warmup flag set.
    """
    window = list(window)
    if not window:
        raise ValueError("need at least one sample to classify")
    if len(window) < PERSISTENCE:
        return HealthStatus(state=HealthState.NORMAL, warmup=True)
    window = window[-PERSISTENCE:]
    tau = 1.0 - alpha
    above = {
        name: [getattr(bip, name) > tau for bip in window]
        for name in INDEX_NAMES
    }
    persistent = {name: all(flags) for name, flags in above.items()}
    spike = {
        name: above[name][-1] and not persistent[name]
        for name in ("bip_ds", "bip_dr")
    }
    steady_hit = persistent["bip_ss"] or persistent["bip_sr"]
    dynamic_hit = persistent["bip_ds"] or persistent["bip_dr"]
    steady_clean = not any(above["bip_ss"]) and not any(above["bip_sr"])

    evidence = tuple(
        name for name in INDEX_NAMES if persistent[name]
    ) + tuple(
        f"{name}:spike" for name in ("bip_ds", "bip_dr") if spike[name]
    )
    if steady_hit and dynamic_hit:
        return HealthStatus(HealthState.FAULT, evidence)
    if dynamic_hit:
        return HealthStatus(HealthState.DEGRADATION, evidence)
    if steady_hit:
        return HealthStatus(HealthState.NEW_PATTERN, evidence)
    if (spike["bip_ds"] or spike["bip_dr"]) and steady_clean:
        return HealthStatus(HealthState.NORMAL_SWITCHING, evidence)
    return HealthStatus(HealthState.NORMAL)


def score_augmented(model: MsfaModel, aug: AugmentedMatrix
                    ) -> list[tuple[BipVector, HealthStatus]]:
    """Fuse and classify every scorable row of an augmented matrix.

    Each row pairs with its forward difference, so the last row of each
    contiguous segment is a warm-up boundary and is not scored; the
    persistence window resets at segment starts.
    """
    records: list[tuple[BipVector, HealthStatus]] = []
    for start, end in aug.segment_bounds():
        window: list[BipVector] = []
        for k in range(start, end - 1):
            diff = aug.rows[k + 1] - aug.rows[k]
            bip = fuse(model, aug.rows[k], diff,
                       timestamp=float(aug.row_timestamps[k]))
            window.append(bip)
            if len(window) > PERSISTENCE:
                window.pop(0)
            records.append((bip, classify(window, model.alpha)))
    return records


def monitor_stream(model: MsfaModel, frame: TimeSeriesFrame
                   ) -> list[tuple[BipVector, HealthStatus]]:
    """Replay a frame through the model in time order.

    Deterministic: identical model and frame produce identical output.
    Timestamp gaps split the stream; lagged windows, differences and the
    persistence window never span a gap.
    """
    aug = augment(frame, model.lag)
    return score_augmented(model, aug)


def update_with_new_pattern(model: MsfaModel,
                            new_samples: AugmentedMatrix) -> MsfaModel:
    """Extend a fitted model with one additional operating pattern.

    Fits a Gaussian component, a slow-feature basis and control limits
    on the new samples, and renormalizes the component weights in
    proportion to effective sample counts.  Returns a new model; the
    input is unchanged.
    """
    if new_samples.width != model.dim:
        raise ValueError(
            f"new samples width {new_samples.width} does not match model "
            f"dimension {model.dim}"
        )
    required = model.dim + 2
    if new_samples.n_rows < required:
        raise ValueError(
            f"need at least {required} new-pattern rows, "
            f"got {new_samples.n_rows}"
        )
    rows = new_samples.rows
    mean = rows.mean(axis=0)
    centered = rows - mean
    cov = centered.T @ centered / rows.shape[0]
    cov = mixture_mod._regularized(cov, model.mixture.config.reg_scale)

    diffs = _segment_diffs(new_samples)
    pattern_sfa = sfa_mod.fit_pattern(
        pattern_id=model.n_patterns, rows=rows, diffs=diffs,
        mean=mean, cov_diag=np.diag(cov),
    )
    s_slow, s_resid = sfa_mod.steady_features(pattern_sfa, rows)
    sdot_slow, sdot_resid = sfa_mod.dynamic_features(pattern_sfa, diffs)
    pattern_limits = limits_mod.fit_limits(
        s_slow, s_resid, sdot_slow, sdot_resid, alpha=model.alpha,
    )

    n_old = model.mixture.n_samples
    n_new = rows.shape[0]
    share = n_new / (n_old + n_new)
    components = tuple(
        mixture_mod.GaussianComponent(
            weight=c.weight * (1.0 - share), mean=c.mean, cov=c.cov
        )
        for c in model.mixture.components
    ) + (
        mixture_mod.GaussianComponent(weight=share, mean=mean, cov=cov),
    )
    new_mixture = mixture_mod.MixtureModel(
        components=components,
        dim=model.dim,
        fit_log=model.mixture.fit_log,
        config=model.mixture.config,
        n_samples=n_old + n_new,
        collapse_count=model.mixture.collapse_count,
    )
    provenance = dict(model.provenance)
    provenance["updated_patterns"] = str(model.n_patterns + 1)
    return MsfaModel(
        lag=model.lag,
        mixture=new_mixture,
        patterns=model.patterns + (
            PatternModel(sfa=pattern_sfa, limits=pattern_limits),
        ),
        alpha=model.alpha,
        version=model.version,
        provenance=provenance,
    )


def _segment_diffs(aug: AugmentedMatrix) -> np.ndarray:
    """Forward differences of augmented rows, never spanning segments."""
    parts = [
        np.diff(aug.rows[a:b], axis=0)
        for a, b in aug.segment_bounds()
        if b - a >= 2
    ]
    if not parts:
        raise ValueError("no contiguous run of at least 2 rows")
    return np.concatenate(parts, axis=0)
