"""Monitoring statistics, control limits and local probability indices.

Steady features get quadratic-sum statistics with moment-matched scaled
chi-square limits; dynamic (differenced) features get Mahalanobis-style
statistics with Hotelling F limits.  All distribution functions are
built on the regularized incomplete gamma and beta functions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy.special import betainc, betaincinv, gammainc, gammaincinv

log = logging.getLogger(__name__)


def chi2_cdf(x, dof):
    """Chi-square CDF via the regularized lower incomplete gamma."""
    x = np.asarray(x, dtype=float)
    return gammainc(dof / 2.0, np.maximum(x, 0.0) / 2.0)


def chi2_ppf(q, dof):
    return 2.0 * gammaincinv(dof / 2.0, q)


def f_cdf(x, dof1, dof2):
    """F distribution CDF via the regularized incomplete beta."""
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    y = dof1 * x / (dof1 * x + dof2)
    return betainc(dof1 / 2.0, dof2 / 2.0, y)


def f_ppf(q, dof1, dof2):
    y = betaincinv(dof1 / 2.0, dof2 / 2.0, q)
    return dof2 * y / (dof1 * (1.0 - y))


@dataclass(frozen=True)
class Chi2Reference:
    """Scaled chi-square reference: stat / xi ~ chi2(dof)."""

    xi: float
    dof: float
    limit: float

    def cdf(self, stat):
        return chi2_cdf(np.asarray(stat, dtype=float) / self.xi, self.dof)


@dataclass(frozen=True)
class FReference:
    """Scaled F reference for a Mahalanobis statistic: stat / scale ~ F."""

    scale: float
    dof1: float
    dof2: float
    limit: float
    lam: np.ndarray

    def __post_init__(self):
        lam = np.atleast_2d(np.asarray(self.lam, dtype=float))
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "_lam_inv", _spd_inverse(lam))

    @property
    def lam_inv(self) -> np.ndarray:
        return self._lam_inv

    def cdf(self, stat):
        return f_cdf(
            np.asarray(stat, dtype=float) / self.scale, self.dof1, self.dof2
        )


@dataclass(frozen=True)
class ControlLimits:
    """Per-pattern limits for the four monitoring statistics."""

    alpha: float
    n_train: int
    steady_slow: Chi2Reference
    steady_resid: Chi2Reference
    dyn_slow: FReference
    dyn_resid: FReference

    def __post_init__(self):
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("alpha must be in (0, 0.5)")
        for ref in (self.steady_slow, self.steady_resid,
                    self.dyn_slow, self.dyn_resid):
            if ref.limit <= 0.0:
                raise ValueError("control limits must be strictly positive")


def _spd_inverse(matrix: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix, with jitter fallback."""
    matrix = 0.5 * (matrix + matrix.T)
    dim = matrix.shape[0]
    scale = max(float(np.trace(matrix)) / dim, np.finfo(float).tiny)
    jitter = 0.0
    for _ in range(8):
        try:
            chol = sla.cho_factor(matrix + jitter * np.eye(dim), lower=True)
            return sla.cho_solve(chol, np.eye(dim))
        except sla.LinAlgError:
            jitter = scale * 1e-10 if jitter == 0.0 else jitter * 100.0
    raise ValueError("matrix is not positive definite even with jitter")


def chi2_reference_from_moments(mean: float, var: float, alpha: float,
                                label: str = "statistic") -> Chi2Reference:
    """Moment-matched scaled chi-square limit at confidence 1 - alpha."""
    if mean <= 0.0 or var <= 0.0:
        raise ValueError(f"{label}: zero-variance statistic stream")
    xi = var / (2.0 * mean)
    dof = 2.0 * mean * mean / var
    limit = float(xi * chi2_ppf(1.0 - alpha, dof))
    return Chi2Reference(xi=float(xi), dof=float(dof), limit=limit)


def chi2_reference_from_stats(stats: np.ndarray, alpha: float,
                              label: str = "statistic") -> Chi2Reference:
    stats = np.asarray(stats, dtype=float)
    return chi2_reference_from_moments(
        float(stats.mean()), float(stats.var(ddof=1)), alpha, label
    )


def _f_reference(dyn_features: np.ndarray, alpha: float,
                 label: str) -> FReference:
    dyn = np.asarray(dyn_features, dtype=float)
    n, p = dyn.shape
    if n <= p + 1:
        raise ValueError(
            f"{label}: need more than {p + 1} rows to fit a {p}-dimensional "
            f"dynamic covariance, got {n}"
        )
    lam = np.atleast_2d(np.cov(dyn, rowvar=False, ddof=1))
    if float(np.trace(lam)) <= 0.0:
        raise ValueError(f"{label}: zero-variance statistic stream")
    scale = p * (n**2 - 1.0) / (n * (n - p))
    limit = float(scale * f_ppf(1.0 - alpha, p, n - p))
    return FReference(
        scale=float(scale), dof1=float(p), dof2=float(n - p),
        limit=limit, lam=lam,
    )


def fit_limits(s_slow: np.ndarray, s_resid: np.ndarray,
               sdot_slow: np.ndarray, sdot_resid: np.ndarray,
               alpha: float = 0.01) -> ControlLimits:
    """Fit all four control limits from training feature matrices.

    Steady statistics are row sums of squares of the (unit-variance)
    features, limited by a moment-matched scaled chi-square at
    confidence 1 - alpha.  Dynamic statistics are quadratic forms in the
    inverse covariance of the differenced features, limited by the
    Hotelling-type scaled F for a new observation.
    """
    if not 0.0 < alpha < 0.5:
        raise ValueError("alpha must be in (0, 0.5)")
    s_slow = np.asarray(s_slow, dtype=float)
    s_resid = np.asarray(s_resid, dtype=float)
    n_dyn = np.asarray(sdot_slow, dtype=float).shape[0]
    min_rows = 10 * max(s_slow.shape[1], s_resid.shape[1])
    if s_slow.shape[0] < min_rows:
        log.warning(
            "only %d training rows for limit estimation; %d recommended",
            s_slow.shape[0], min_rows,
        )
    steady_slow = chi2_reference_from_stats(
        np.sum(s_slow**2, axis=1), alpha, "steady slow subspace"
    )
    steady_resid = chi2_reference_from_stats(
        np.sum(s_resid**2, axis=1), alpha, "steady residual subspace"
    )
    dyn_slow = _f_reference(sdot_slow, alpha, "dynamic slow subspace")
    dyn_resid = _f_reference(sdot_resid, alpha, "dynamic residual subspace")
    return ControlLimits(
        alpha=alpha,
        n_train=int(n_dyn),
        steady_slow=steady_slow,
        steady_resid=steady_resid,
        dyn_slow=dyn_slow,
        dyn_resid=dyn_resid,
    )


def _quadratic_form(rows: np.ndarray, inv: np.ndarray) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    return np.einsum("ij,jk,ik->i", rows, inv, rows)


def score(limits: ControlLimits, s_slow, s_resid, sdot_slow, sdot_resid):
    """The four monitoring statistics for one sample or a batch.

    Returns (t2_slow, t2_resid, d2_slow, d2_resid); scalars for 1-D
    inputs, arrays for matrices.
    """
    s_slow = np.asarray(s_slow, dtype=float)
    single = s_slow.ndim == 1
    if np.atleast_2d(s_slow).shape[1] != limits.dyn_slow.lam.shape[0]:
        raise ValueError("slow feature width does not match fitted limits")
    if np.atleast_2d(np.asarray(s_resid)).shape[1] != \
            limits.dyn_resid.lam.shape[0]:
        raise ValueError("residual feature width does not match fitted limits")
    t2_s = np.sum(np.atleast_2d(s_slow)**2, axis=1)
    t2_r = np.sum(np.atleast_2d(np.asarray(s_resid, dtype=float))**2, axis=1)
    d2_s = _quadratic_form(sdot_slow, limits.dyn_slow.lam_inv)
    d2_r = _quadratic_form(sdot_resid, limits.dyn_resid.lam_inv)
    if single:
        return float(t2_s[0]), float(t2_r[0]), float(d2_s[0]), float(d2_r[0])
    return t2_s, t2_r, d2_s, d2_r


def local_probabilities(limits: ControlLimits, statistics):
    """Reference-distribution CDF evaluated at each observed statistic.

    statistics is the (t2_slow, t2_resid, d2_slow, d2_resid) tuple from
    score(); each returned probability is P{stat(X) <= stat(x_k)} under
    the fitted reference, so a statistic exactly at its limit maps to
    1 - alpha.
    """
    t2_s, t2_r, d2_s, d2_r = statistics
    out = (
        limits.steady_slow.cdf(t2_s),
        limits.steady_resid.cdf(t2_r),
        limits.dyn_slow.cdf(d2_s),
        limits.dyn_resid.cdf(d2_r),
    )
    if np.isscalar(t2_s) or np.asarray(t2_s).ndim == 0:
        return tuple(float(p) for p in out)
    return out
