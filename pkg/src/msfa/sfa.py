"""Per-pattern slow feature extraction.

Solves the slowness eigenproblem by whitening the steady covariance and
eigendecomposing the whitened difference covariance; eigenvalues of that
second step are the slowness values (mean squared temporal difference of
each unit-variance feature), sorted ascending so slow features come
first.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

log = logging.getLogger(__name__)

# Steady-covariance eigenvalues below this fraction of the largest are
# treated as rank deficiency and dropped before whitening.
RANK_REL_TOL = 1e-10


@dataclass(frozen=True)
class SfaBasis:
    """Full weight set from one slowness eigenproblem.

    weights columns are ordered by ascending slowness; center is the
    empirical mean (in standardized coordinates) subtracted before
    projection so training features are exactly zero-mean.  dropped
    counts input directions removed as rank-deficient.
    """

    weights: np.ndarray
    slowness: np.ndarray
    center: np.ndarray
    dropped: int


@dataclass(frozen=True)
class PatternSfa:
    """Fitted slow-feature projection for one operating pattern.

    offset and scale standardize incoming augmented rows; weights_slow /
    weights_resid split the feature space at the slowness knee.  The
    slowness vector is ascending over all retained features.
    """

    pattern_id: int
    offset: np.ndarray
    scale: np.ndarray
    weights_slow: np.ndarray
    weights_resid: np.ndarray
    slowness: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        for name in ("offset", "scale", "weights_slow", "weights_resid",
                     "slowness"):
            object.__setattr__(
                self, name, np.asarray(getattr(self, name), dtype=float)
            )
        if self.weights_slow.shape[0] != self.offset.size:
            raise ValueError("weight rows must match input dimension")
        if np.any(self.scale <= 0):
            raise ValueError("scale entries must be positive")
        if np.any(np.diff(self.slowness) < -1e-12):
            raise ValueError("slowness must be non-decreasing")

    @property
    def n_slow(self) -> int:
        return self.weights_slow.shape[1]

    @property
    def n_resid(self) -> int:
        return self.weights_resid.shape[1]


def fit_sfa(rows: np.ndarray, diffs: np.ndarray) -> SfaBasis:
    """Solve for the full slow-feature weight set.

    Parameters
    ----------
    rows : ndarray, shape (n, J)
        Standardized pattern samples; n must exceed the retained rank.
    diffs : ndarray, shape (m, J)
        Temporal differences of consecutive standardized samples (m may
        differ from n when segment boundaries drop pairs).

    Returns
    -------
    SfaBasis
        Weights ordered by ascending slowness.  Training projections
        (rows - center) @ weights have zero mean, unit variance and are
        pairwise uncorrelated; slowness equals the mean squared
        difference of each projected feature.
    """
    rows = np.asarray(rows, dtype=float)
    diffs = np.asarray(diffs, dtype=float)
    if rows.ndim != 2 or diffs.ndim != 2:
        raise ValueError("rows and diffs must be 2-D")
    if rows.shape[1] != diffs.shape[1]:
        raise ValueError("rows and diffs disagree on width")
    n, dim = rows.shape
    if n <= dim:
        raise ValueError(
            f"need more than {dim} rows to fit {dim}-dimensional weights, "
            f"got {n}"
        )
    if diffs.shape[0] < 2:
        raise ValueError("need at least 2 difference rows")

    center = rows.mean(axis=0)
    centered = rows - center
    steady_cov = centered.T @ centered / n

    eigval, eigvec = sla.eigh(steady_cov)
    keep = eigval > RANK_REL_TOL * eigval[-1]
    dropped = int(np.sum(~keep))
    if dropped:
        log.info("dropping %d rank-deficient directions of %d", dropped, dim)
    if np.sum(keep) == 0:
        raise ValueError("steady covariance has no usable directions")
    whiten = eigvec[:, keep] / np.sqrt(eigval[keep])

    diff_white = diffs @ whiten
    diff_cov = diff_white.T @ diff_white / diffs.shape[0]
    slowness, rotation = sla.eigh(diff_cov)
    if slowness[-1] <= 0 or slowness[0] <= 1e-15 * max(slowness[-1], 1.0):
        raise ValueError(
            "difference covariance is singular; slowness is undefined"
        )
    weights = whiten @ rotation
    return SfaBasis(
        weights=weights,
        slowness=np.maximum(slowness, 0.0),
        center=center,
        dropped=dropped,
    )


def select_num_slow_features(slowness: np.ndarray) -> tuple[int, bool]:
    """Knee point of the ascending slowness spectrum.

    Returns (count, degenerate); count is the index maximizing the
    second difference of the spectrum, clamped to [1, J-1].  A flat or
    perfectly linear spectrum has no knee: count falls back to
    max(1, J // 2) and degenerate is True.
    """
    slowness = np.asarray(slowness, dtype=float)
    total = slowness.size
    if total < 2:
        raise ValueError("need at least 2 slowness values")
    if total == 2:
        return 1, False
    curvature = slowness[2:] - 2.0 * slowness[1:-1] + slowness[:-2]
    scale = max(abs(slowness[-1]), abs(slowness[0]), 1.0)
    if np.max(curvature) <= 1e-12 * scale:
        log.warning("slowness spectrum has no knee; using J/2 split")
        return max(1, total // 2), True
    knee = int(np.argmax(curvature)) + 1  # interior index, 0-based
    return min(max(knee + 1, 1), total - 1), False


def fit_pattern(pattern_id: int, rows: np.ndarray, diffs: np.ndarray,
                mean: np.ndarray, cov_diag: np.ndarray,
                n_slow: int | None = None) -> PatternSfa:
    """Standardize pattern samples and fit the split slow/residual basis.

    mean and cov_diag come from the pattern's Gaussian component; the
    empirical residual mean of the standardized rows is folded into the
    stored offset so training features are exactly centered.
    """
    scale = np.sqrt(np.asarray(cov_diag, dtype=float))
    if np.any(scale <= 0):
        raise ValueError(
            f"pattern {pattern_id}: non-positive variance in normalization"
        )
    mean = np.asarray(mean, dtype=float)
    basis = fit_sfa((rows - mean) / scale, diffs / scale)
    if n_slow is None:
        n_slow, _ = select_num_slow_features(basis.slowness)
    if not 1 <= n_slow < basis.weights.shape[1]:
        raise ValueError(
            f"pattern {pattern_id}: slow-feature count {n_slow} out of "
            f"range for {basis.weights.shape[1]} features"
        )
    return PatternSfa(
        pattern_id=pattern_id,
        offset=mean + scale * basis.center,
        scale=scale,
        weights_slow=basis.weights[:, :n_slow],
        weights_resid=basis.weights[:, n_slow:],
        slowness=basis.slowness,
        dropped=basis.dropped,
    )


def steady_features(pattern: PatternSfa, rows: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray]:
    """(slow, residual) features of standardized augmented rows."""
    std = (np.asarray(rows, dtype=float) - pattern.offset) / pattern.scale
    return std @ pattern.weights_slow, std @ pattern.weights_resid


def dynamic_features(pattern: PatternSfa, diffs: np.ndarray
                     ) -> tuple[np.ndarray, np.ndarray]:
    """(slow, residual) features of row differences; offsets cancel."""
    dstd = np.asarray(diffs, dtype=float) / pattern.scale
    return dstd @ pattern.weights_slow, dstd @ pattern.weights_resid


def project(pattern: PatternSfa, x_d: np.ndarray, xdot_d: np.ndarray
            ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Steady and dynamic features of one augmented row (or a batch).

    Returns (s_slow, s_resid, sdot_slow, sdot_resid).  The row is
    standardized with the pattern's stored offset and scale; its
    difference is only rescaled, since offsets cancel in differences.
    """
    x_d = np.asarray(x_d, dtype=float)
    xdot_d = np.asarray(xdot_d, dtype=float)
    if x_d.shape[-1] != pattern.offset.size:
        raise ValueError(
            f"input width {x_d.shape[-1]} does not match pattern "
            f"dimension {pattern.offset.size}"
        )
    if xdot_d.shape[-1] != pattern.offset.size:
        raise ValueError("difference width does not match pattern dimension")
    std = (x_d - pattern.offset) / pattern.scale
    dstd = xdot_d / pattern.scale
    return (
        std @ pattern.weights_slow,
        std @ pattern.weights_resid,
        dstd @ pattern.weights_slow,
        dstd @ pattern.weights_resid,
    )
