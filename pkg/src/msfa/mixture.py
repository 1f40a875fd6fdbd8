"""Gaussian mixture modelling of the augmented space.

Fits the component weights, means and full covariances with EM, and
exposes log-space posterior responsibilities for pattern assignment.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy.ndimage import median_filter
from scipy.special import logsumexp

log = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class EmConfig:
    """Knobs of the EM fit.

    reg_scale is the diagonal jitter added every M-step, expressed as a
    fraction of the mean covariance eigenvalue (trace / dimension); lagged
    design matrices are rank-deficient by construction, so this floor is
    load-bearing, not cosmetic.
    """

    max_iter: int = 500
    tol: float = 1e-8
    reg_scale: float = 1e-6
    seed: int = 0
    max_collapses: int = 10


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if not 0.0 < self.weight <= 1.0:
            raise ValueError("component weight must be in (0, 1]")
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape must match mean dimension")
        if not np.allclose(cov, cov.T, atol=1e-10):
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True)
class MixtureModel:
    components: tuple[GaussianComponent, ...]
    dim: int
    fit_log: np.ndarray
    config: EmConfig
    n_samples: int
    collapse_count: int = 0

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("need at least one component")
        weights = sum(c.weight for c in comps)
        if abs(weights - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {weights!r}")
        for c in comps:
            if c.mean.size != self.dim:
                raise ValueError("component dimension mismatch")
        object.__setattr__(self, "components", comps)
        object.__setattr__(
            self, "fit_log", np.asarray(self.fit_log, dtype=float)
        )

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])


@dataclass(frozen=True)
class Responsibilities:
    """Posterior component probabilities per sample.

    gamma rows sum to 1; outlier marks samples whose density underflowed
    in every component (the row falls back to uniform).
    """

    gamma: np.ndarray
    outlier: np.ndarray


def _as_matrix(data) -> np.ndarray:
    rows = getattr(data, "rows", data)
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[None, :]
    return rows


def _chol_log_density(x: np.ndarray, mean: np.ndarray,
                      cov: np.ndarray) -> np.ndarray:
    """log N(x | mean, cov) for every row of x, via Cholesky."""
    dim = mean.size
    jitter = 0.0
    scale = max(float(np.trace(cov)) / dim, np.finfo(float).tiny)
    for _ in range(8):
        try:
            chol = sla.cholesky(cov + jitter * np.eye(dim), lower=True)
            break
        except sla.LinAlgError:
            jitter = scale * 1e-10 if jitter == 0.0 else jitter * 100.0
    else:
        raise ValueError("covariance is not positive definite")
    solved = sla.solve_triangular(chol, (x - mean).T, lower=True)
    maha = np.einsum("ij,ij->j", solved, solved)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (dim * LOG_2PI + logdet + maha)


def component_log_densities(model: MixtureModel, data) -> np.ndarray:
    """(n, G) matrix of per-component Gaussian log densities."""
    x = _as_matrix(data)
    if x.shape[1] != model.dim:
        raise ValueError(
            f"data width {x.shape[1]} does not match model dimension "
            f"{model.dim}"
        )
    out = np.empty((x.shape[0], model.n_components))
    for g, comp in enumerate(model.components):
        out[:, g] = _chol_log_density(x, comp.mean, comp.cov)
    return out


def log_likelihood(model: MixtureModel, data) -> float:
    """Total log density of the data under the mixture."""
    joint = component_log_densities(model, data) + np.log(model.weights)
    return float(np.sum(logsumexp(joint, axis=1)))


def responsibilities(model: MixtureModel, data) -> Responsibilities:
    """Posterior component probabilities, computed in log space."""
    joint = component_log_densities(model, data) + np.log(model.weights)
    norm = logsumexp(joint, axis=1)
    bad = ~np.isfinite(norm)
    gamma = np.exp(joint - norm[:, None])
    if np.any(bad):
        gamma[bad] = 1.0 / model.n_components
    return Responsibilities(gamma=gamma, outlier=bad)


def assign(model: MixtureModel, data, smooth_window: int = 0) -> np.ndarray:
    """Hard pattern labels: argmax responsibility, ties to the lower index.

    smooth_window > 0 applies a post-hoc median filter of that (odd)
    width over the label sequence; off by default.
    """
    labels = np.argmax(responsibilities(model, data).gamma, axis=1)
    if smooth_window:
        if smooth_window < 3 or smooth_window % 2 == 0:
            raise ValueError("smooth_window must be an odd integer >= 3")
        labels = median_filter(labels, size=smooth_window, mode="nearest")
    return labels.astype(int)


def _init_farthest_point(x: np.ndarray, n_components: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Deterministic k-means++-style seeding: indices of spread-out rows."""
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for _ in range(n_components - 1):
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((x - x[nxt]) ** 2, axis=1))
    return np.asarray(chosen)


def _regularized(cov: np.ndarray, reg_scale: float) -> np.ndarray:
    dim = cov.shape[0]
    cov = 0.5 * (cov + cov.T)
    eps = reg_scale * float(np.trace(cov)) / dim
    return cov + eps * np.eye(dim)


def em_fit(data, n_components: int, config: EmConfig = EmConfig()
           ) -> MixtureModel:
    """Fit a Gaussian mixture by EM.

    Runs until the relative log-likelihood improvement drops below
    config.tol or max_iter is reached.  A component that collapses
    (vanishing effective count or degenerate covariance) is re-seeded
    from the worst-fit sample; more than max_collapses such events abort
    the fit.

    Parameters
    ----------
    data : AugmentedMatrix or ndarray, shape (n, J)
    n_components : int
        Number of Gaussian components G >= 1.
    """
    x = _as_matrix(data)
    n, dim = x.shape
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    if n <= n_components:
        raise ValueError("need more samples than components")
    if n < n_components * (dim + 1):
        log.warning(
            "EM fit with %d samples is thin for G=%d in %d dimensions",
            n, n_components, dim,
        )

    rng = np.random.default_rng(config.seed)
    global_cov = _regularized(np.cov(x, rowvar=False, ddof=0).reshape(dim, dim),
                              config.reg_scale)

    # Hard-assignment warm start from spread-out seed rows.
    seeds = _init_farthest_point(x, n_components, rng)
    dists = np.stack(
        [np.sum((x - x[s]) ** 2, axis=1) for s in seeds], axis=1
    )
    hard = np.argmin(dists, axis=1)
    weights = np.empty(n_components)
    means = np.empty((n_components, dim))
    covs = np.empty((n_components, dim, dim))
    for g in range(n_components):
        members = x[hard == g]
        weights[g] = max(members.shape[0], 1) / n
        if members.shape[0] < 2:
            means[g] = x[seeds[g]]
            covs[g] = global_cov
        else:
            means[g] = members.mean(axis=0)
            covs[g] = _regularized(
                np.cov(members, rowvar=False, ddof=0).reshape(dim, dim),
                config.reg_scale,
            )
    weights /= weights.sum()

    fit_log: list[float] = []
    collapse_count = 0
    logdens = np.empty((n, n_components))
    for _ in range(config.max_iter):
        for g in range(n_components):
            logdens[:, g] = _chol_log_density(x, means[g], covs[g])
        joint = logdens + np.log(weights)
        norm = logsumexp(joint, axis=1)
        ll = float(np.sum(norm))
        fit_log.append(ll)
        gamma = np.exp(joint - norm[:, None])

        counts = gamma.sum(axis=0)
        collapsed = [g for g in range(n_components) if counts[g] < 1.0]
        if collapsed:
            collapse_count += len(collapsed)
            if collapse_count > config.max_collapses:
                raise ValueError(
                    f"EM aborted: {collapse_count} component collapses "
                    f"(limit {config.max_collapses})"
                )
            worst = int(np.argmin(norm))
            for g in collapsed:
                log.warning("component %d collapsed; reseeding", g)
                means[g] = x[worst]
                covs[g] = global_cov
                weights[g] = 1.0 / n
            weights /= weights.sum()
            continue

        weights = counts / n
        weights /= weights.sum()
        for g in range(n_components):
            means[g] = gamma[:, g] @ x / counts[g]
            centered = x - means[g]
            cov = (gamma[:, g] * centered.T) @ centered / counts[g]
            if float(np.trace(cov)) <= 0.0:
                collapse_count += 1
                if collapse_count > config.max_collapses:
                    raise ValueError(
                        "EM aborted: repeated degenerate covariance"
                    )
                log.warning("component %d degenerate; reseeding", g)
                means[g] = x[int(np.argmin(norm))]
                covs[g] = global_cov
            else:
                covs[g] = _regularized(cov, config.reg_scale)

        if len(fit_log) >= 2:
            prev = fit_log[-2]
            if ll - prev < config.tol * abs(prev):
                break

    components = tuple(
        GaussianComponent(weight=float(weights[g]), mean=means[g].copy(),
                          cov=covs[g].copy())
        for g in range(n_components)
    )
    return MixtureModel(
        components=components,
        dim=dim,
        fit_log=np.asarray(fit_log),
        config=config,
        n_samples=n,
        collapse_count=collapse_count,
    )
