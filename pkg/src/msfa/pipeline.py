"""Training orchestration, the DPCA baseline, and model persistence.

Training iterates the component count upward from g_min, fitting the
mixture, the per-pattern slow-feature bases and control limits at each
candidate, and accepts the first candidate whose validation run never
pushes any global index over its limit for three consecutive samples.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import fusion, limits as limits_mod, metrics, mixture, sfa
from .embedding import AugmentedMatrix, TimeSeriesFrame, augment, select_lag
from .model_io import (  # noqa: F401  (re-exported persistence surface)
    ModelChecksumError,
    ModelCorruptError,
    ModelFileError,
    ModelVersionError,
    load_model,
    models_equal,
    save_model,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Training knobs; defaults follow the shipped reference setup."""

    lag: int | None = None          # None selects by autocorrelation
    band: float = 0.01
    max_lag: int = 60
    g_min: int = 2
    g_max: int = 32
    alpha: float = 0.01
    seed: int = 0
    em_max_iter: int = 500
    em_tol: float = 1e-8
    em_reg_scale: float = 1e-6
    validation_split: float = 0.8
    persistence: int = 3
    min_pattern_rows: int | None = None  # None means augmented width + 2

    def __post_init__(self):
        if not 1 <= self.g_min <= self.g_max:
            raise ValueError("need 1 <= g_min <= g_max")
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("alpha must be in (0, 0.5)")
        if not 0.0 < self.validation_split < 1.0:
            raise ValueError("validation_split must be in (0, 1)")

    def em_config(self) -> mixture.EmConfig:
        return mixture.EmConfig(
            max_iter=self.em_max_iter,
            tol=self.em_tol,
            reg_scale=self.em_reg_scale,
            seed=self.seed,
        )


def split_frame(frame: TimeSeriesFrame, split: float
                ) -> tuple[TimeSeriesFrame, TimeSeriesFrame]:
    """Chronological train/validation split of one frame."""
    cut = int(round(frame.n_samples * split))
    if cut < 2 or frame.n_samples - cut < 2:
        raise ValueError("split leaves too few samples on one side")
    return (
        TimeSeriesFrame(frame.timestamps[:cut], frame.values[:cut],
                        frame.channel_names),
        TimeSeriesFrame(frame.timestamps[cut:], frame.values[cut:],
                        frame.channel_names),
    )


def _pattern_diff_pairs(aug: AugmentedMatrix, labels: np.ndarray,
                        pattern: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows of a pattern and forward diffs whose endpoints share it."""
    rows = aug.rows[labels == pattern]
    diff_parts = []
    for a, b in aug.segment_bounds():
        seg_labels = labels[a:b]
        both = (seg_labels[:-1] == pattern) & (seg_labels[1:] == pattern)
        if np.any(both):
            block = aug.rows[a:b]
            diff_parts.append(block[1:][both] - block[:-1][both])
    diffs = (np.concatenate(diff_parts, axis=0) if diff_parts
             else np.empty((0, aug.width)))
    return rows, diffs


def fit_msfa(aug: AugmentedMatrix, n_components: int,
             config: TrainConfig) -> fusion.MsfaModel:
    """Fit the full monitoring model at a fixed component count.

    Raises ValueError when any pattern receives fewer rows than the
    minimum fit size (the caller's cue to skip this candidate).
    """
    mix = mixture.em_fit(aug, n_components, config.em_config())
    labels = mixture.assign(mix, aug)
    min_rows = (config.min_pattern_rows if config.min_pattern_rows is not None
                else aug.width + 2)
    patterns = []
    for g in range(n_components):
        rows, diffs = _pattern_diff_pairs(aug, labels, g)
        if rows.shape[0] < min_rows or diffs.shape[0] < min_rows:
            raise ValueError(
                f"pattern {g} has {rows.shape[0]} rows / {diffs.shape[0]} "
                f"difference pairs; need at least {min_rows}"
            )
        comp = mix.components[g]
        pattern_sfa = sfa.fit_pattern(
            pattern_id=g, rows=rows, diffs=diffs,
            mean=comp.mean, cov_diag=np.diag(comp.cov),
        )
        s_slow, s_resid = sfa.steady_features(pattern_sfa, rows)
        sdot_slow, sdot_resid = sfa.dynamic_features(pattern_sfa, diffs)
        pattern_limits = limits_mod.fit_limits(
            s_slow, s_resid, sdot_slow, sdot_resid, alpha=config.alpha,
        )
        patterns.append(
            fusion.PatternModel(sfa=pattern_sfa, limits=pattern_limits)
        )
    return fusion.MsfaModel(
        lag=aug.lag,
        mixture=mix,
        patterns=tuple(patterns),
        alpha=config.alpha,
        provenance={"n_components": str(n_components),
                    "seed": str(config.seed)},
    )


def validation_outcome(model: fusion.MsfaModel, valid_aug: AugmentedMatrix,
                       persistence: int = 3) -> tuple[bool, float]:
    """(clean, alarm_rate) of a validation replay.

    clean means no global index exceeded its limit for `persistence`
    consecutive samples anywhere in the run; alarm_rate is the fraction
    of samples with any index over the limit.
    """
    records = fusion.score_augmented(model, valid_aug)
    tau = 1.0 - model.alpha
    any_over = 0
    clean = True
    for start, end in _record_segments(valid_aug):
        streaks = np.zeros(4, dtype=int)
        for bip, _ in records[start:end]:
            over = np.asarray(bip.values()) > tau
            streaks = np.where(over, streaks + 1, 0)
            if np.any(over):
                any_over += 1
            if np.any(streaks >= persistence):
                clean = False
    rate = any_over / max(len(records), 1)
    return clean, rate


def _record_segments(aug: AugmentedMatrix) -> list[tuple[int, int]]:
    """Record index ranges per segment (each segment scores end-1 rows)."""
    spans = []
    pos = 0
    for a, b in aug.segment_bounds():
        n = max(b - a - 1, 0)
        spans.append((pos, pos + n))
        pos += n
    return spans


def train(train_frame: TimeSeriesFrame, valid_frame: TimeSeriesFrame,
          config: TrainConfig = TrainConfig()) -> fusion.MsfaModel:
    """Fit the monitoring model with component-count selection.

    Candidates g_min..g_max are fitted in order; the first whose
    validation run is clean (no index over its limit for `persistence`
    consecutive samples) wins.  If none passes, the candidate with the
    lowest validation alarm rate is returned and flagged in provenance
    (validation_clean = "false").
    """
    if train_frame.timestamps[-1] >= valid_frame.timestamps[0]:
        log.warning("validation frame does not start after training frame")
    lag = config.lag
    if lag is None:
        selection = select_lag(train_frame, config.band, config.max_lag)
        lag = selection.lag
        if not selection.within_band:
            log.warning(
                "autocorrelation never entered the band; using max lag %d",
                lag,
            )
    aug_train = augment(train_frame, lag)
    aug_valid = augment(valid_frame, lag)

    best: fusion.MsfaModel | None = None
    best_rate = np.inf
    for g in range(config.g_min, config.g_max + 1):
        try:
            candidate = fit_msfa(aug_train, g, config)
        except ValueError as exc:
            log.info("skipping G=%d: %s", g, exc)
            continue
        clean, rate = validation_outcome(candidate, aug_valid,
                                         config.persistence)
        log.info("G=%d validation: clean=%s alarm_rate=%.4f", g, clean, rate)
        provenance = dict(candidate.provenance)
        provenance["validation_alarm_rate"] = repr(rate)
        if clean:
            provenance["validation_clean"] = "true"
            return replace(candidate, provenance=provenance)
        if rate < best_rate:
            provenance["validation_clean"] = "false"
            best = replace(candidate, provenance=provenance)
            best_rate = rate
    if best is None:
        raise ValueError(
            "no component count could be fitted; not enough data per pattern"
        )
    log.warning(
        "no component count passed validation; returning G=%s with alarm "
        "rate %.4f", best.provenance["n_components"], best_rate,
    )
    return best


# ---------------------------------------------------------------------------
# DPCA baseline: PCA on the lagged (not differenced) matrix with T2/SPE.

@dataclass(frozen=True)
class DpcaModel:
    lag: int
    mean: np.ndarray
    scale: np.ndarray
    components: np.ndarray          # (J_lag, retained) principal directions
    eigenvalues: np.ndarray         # retained variances
    t2_ref: limits_mod.Chi2Reference
    spe_ref: limits_mod.Chi2Reference | None  # None when residuals vanish
    alpha: float

    @property
    def n_retained(self) -> int:
        return self.components.shape[1]


@dataclass(frozen=True)
class DpcaScores:
    timestamps: np.ndarray
    t2: np.ndarray
    spe: np.ndarray
    t2_over: np.ndarray
    spe_over: np.ndarray
    alarm: np.ndarray  # 3-consecutive persistence on either statistic

    @property
    def first_alarm_index(self) -> int | None:
        hits = np.nonzero(self.alarm)[0]
        return int(hits[0]) if hits.size else None


def _lagged_with_stamps(frame: TimeSeriesFrame, lag: int
                        ) -> tuple[np.ndarray, np.ndarray]:
    parts = []
    stamps = []
    for seg in frame.segment_slices():
        if seg.stop - seg.start < lag:
            continue
        block = frame.values[seg]
        parts.append(np.concatenate(
            [block[lag - 1 - ell: block.shape[0] - ell] for ell in range(lag)],
            axis=1,
        ))
        stamps.append(frame.timestamps[seg][lag - 1:])
    if not parts:
        raise ValueError(f"no contiguous segment holds {lag} samples")
    return np.concatenate(parts, axis=0), np.concatenate(stamps)


def train_dpca(train_frame: TimeSeriesFrame, config: TrainConfig,
               variance_threshold: float = 0.90,
               n_components: int | None = None) -> DpcaModel:
    """PCA monitoring baseline on the lagged design matrix.

    Components are retained up to the cumulative-variance threshold (or
    a fixed count); limits reuse the moment-matched scaled chi-square
    machinery on the training statistic streams.
    """
    lag = config.lag
    if lag is None:
        lag = select_lag(train_frame, config.band, config.max_lag).lag
    lagged, _ = _lagged_with_stamps(train_frame, lag)
    mean = lagged.mean(axis=0)
    scale = lagged.std(axis=0, ddof=1)
    if np.any(scale <= 0):
        raise ValueError("constant lagged column; cannot standardize")
    std = (lagged - mean) / scale
    n = std.shape[0]
    cov = std.T @ std / (n - 1)
    eigval, eigvec = np.linalg.eigh(cov)
    order = np.argsort(eigval)[::-1]
    eigval = np.maximum(eigval[order], 0.0)
    eigvec = eigvec[:, order]
    if n_components is None:
        cum = np.cumsum(eigval) / np.sum(eigval)
        n_components = int(np.searchsorted(cum, variance_threshold) + 1)
    n_components = min(n_components, std.shape[1])
    components = eigvec[:, :n_components]
    eigenvalues = eigval[:n_components]

    scores = std @ components
    t2 = np.sum(scores**2 / eigenvalues, axis=1)
    residual = std - scores @ components.T
    spe = np.sum(residual**2, axis=1)
    t2_ref = limits_mod.chi2_reference_from_stats(
        t2, config.alpha, "DPCA T2"
    )
    if float(np.var(spe, ddof=1)) > 1e-18 and float(np.mean(spe)) > 1e-18:
        spe_ref = limits_mod.chi2_reference_from_stats(
            spe, config.alpha, "DPCA SPE"
        )
    else:
        log.warning("DPCA residual subspace is empty; SPE monitoring off")
        spe_ref = None
    return DpcaModel(
        lag=lag, mean=mean, scale=scale, components=components,
        eigenvalues=eigenvalues, t2_ref=t2_ref, spe_ref=spe_ref,
        alpha=config.alpha,
    )


def score_dpca(model: DpcaModel, frame: TimeSeriesFrame,
               persistence: int = 3) -> DpcaScores:
    """Per-sample DPCA statistics with persistence-based alarms."""
    lagged, stamps = _lagged_with_stamps(frame, model.lag)
    std = (lagged - model.mean) / model.scale
    scores = std @ model.components
    t2 = np.sum(scores**2 / model.eigenvalues, axis=1)
    residual = std - scores @ model.components.T
    spe = np.sum(residual**2, axis=1)
    t2_over = t2 > model.t2_ref.limit
    if model.spe_ref is None:
        spe_over = np.zeros_like(t2_over)
    else:
        spe_over = spe > model.spe_ref.limit
    alarm = (metrics.persistent_violations(t2_over, persistence)
             | metrics.persistent_violations(spe_over, persistence))
    return DpcaScores(
        timestamps=stamps, t2=t2, spe=spe,
        t2_over=t2_over, spe_over=spe_over, alarm=alarm,
    )
