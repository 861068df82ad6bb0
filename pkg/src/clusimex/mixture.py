"""Gaussian mixture and k-means clustering models.

Fitting (EM with restarts, Lloyd with k-means++ seeding), hard
classification rules, sampling from a fitted mixture, and alignment of
component labels between two fits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "GmmParams",
    "GmmFit",
    "KmeansFit",
    "LabeledSample",
    "EmConfig",
    "KmeansConfig",
    "fit_gmm",
    "gmm_loglik",
    "classify_gmm",
    "label_points_gmm",
    "fit_kmeans",
    "classify_kmeans",
    "label_points_kmeans",
    "sample_gmm",
    "align_labels",
    "apply_alignment",
    "permute_components",
]

_WEIGHT_TOL = 1e-12
_SYM_TOL = 1e-10


class DegenerateFitError(RuntimeError):
    """All attempts to fit a clustering model collapsed."""


@dataclass(frozen=True)
class GmmParams:
    """Parameters of an m-component Gaussian mixture in dimension p."""

    weights: np.ndarray      # (m,)
    means: np.ndarray        # (m, p)
    covariances: np.ndarray  # (m, p, p)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        cov = np.asarray(self.covariances, dtype=float)
        if cov.ndim == 2:
            cov = cov[None, :, :]
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)
        m = w.shape[0]
        if m < 1:
            raise ValueError("need at least one component")
        if np.any(w < -_WEIGHT_TOL) or abs(w.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        p = mu.shape[1]
        if mu.shape != (m, p) or cov.shape != (m, p, p):
            raise ValueError("means/covariances shapes inconsistent with m, p")
        for h in range(m):
            s = cov[h]
            if not np.allclose(s, s.T, atol=_SYM_TOL):
                raise ValueError(f"covariance {h} is not symmetric")
            if np.linalg.eigvalsh(s).min() <= 0:
                raise ValueError(f"covariance {h} is not positive definite")

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def p(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class GmmFit:
    """Result of EM fitting: parameters plus convergence diagnostics."""

    params: GmmParams
    loglik: float
    n_iter: int
    converged: bool
    loglik_trace: np.ndarray


@dataclass(frozen=True)
class KmeansFit:
    """Result of Lloyd's algorithm: centroids and total within-cluster SS."""

    centroids: np.ndarray  # (m, p)
    within_ss: float

    @property
    def m(self) -> int:
        return self.centroids.shape[0]


@dataclass(frozen=True)
class LabeledSample:
    """Class labels (1..m) paired with the covariate matrix they came from."""

    labels: np.ndarray  # (n,) ints in 1..m
    data: np.ndarray    # (n, p)

    def __post_init__(self):
        if len(self.labels) != len(self.data):
            raise ValueError("labels and data lengths differ")


#: covariance structures for EM; "bic" fits all of them and keeps the
#: best Bayesian information criterion
COV_STRUCTURES = ("full", "shared", "spherical", "spherical_equal")


@dataclass(frozen=True)
class EmConfig:
    max_iter: int = 500
    tol: float = 1e-8
    restarts: int = 10
    cov_reg: float = 1e-6
    structure: str = "full"

    def __post_init__(self):
        if self.structure not in COV_STRUCTURES + ("bic",):
            raise ValueError(f"unknown covariance structure {self.structure!r}")


@dataclass(frozen=True)
class KmeansConfig:
    max_iter: int = 300
    restarts: int = 10


def _component_log_densities(params: GmmParams, data: np.ndarray) -> np.ndarray:
    """Per-component Gaussian log densities, shape (n, m)."""
    n = data.shape[0]
    out = np.empty((n, params.m))
    for h in range(params.m):
        L = np.linalg.cholesky(params.covariances[h])
        dev = data - params.means[h]
        sol = np.linalg.solve(L, dev.T)
        maha = np.sum(sol * sol, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        out[:, h] = -0.5 * (params.p * np.log(2 * np.pi) + logdet + maha)
    return out


def gmm_loglik(params: GmmParams, data: np.ndarray) -> float:
    """Log-likelihood of data under the mixture."""
    data = _check_data(data, params.p)
    logdens = _component_log_densities(params, data)
    with np.errstate(divide="ignore"):
        logw = np.log(params.weights)
    joint = logdens + logw
    mx = joint.max(axis=1, keepdims=True)
    return float(np.sum(mx[:, 0] + np.log(np.sum(np.exp(joint - mx), axis=1))))


def _check_data(data, p=None):
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if not np.all(np.isfinite(data)):
        raise ValueError("data contains non-finite values")
    if p is not None and data.shape[1] != p:
        raise ValueError(f"expected dimension {p}, got {data.shape[1]}")
    return data


def _kmeanspp_seeds(data: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: points chosen with probability ∝ squared distance."""
    n = data.shape[0]
    idx = [rng.integers(n)]
    d2 = np.sum((data - data[idx[0]]) ** 2, axis=1)
    for _ in range(m - 1):
        total = d2.sum()
        if total <= 0:
            # all remaining mass at chosen points; fall back to uniform
            idx.append(int(rng.integers(n)))
            continue
        probs = d2 / total
        nxt = int(rng.choice(n, p=probs))
        idx.append(nxt)
        d2 = np.minimum(d2, np.sum((data - data[nxt]) ** 2, axis=1))
    return data[np.array(idx)].copy()


def _regularize_cov(cov: np.ndarray, eps: float) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    p = cov.shape[0]
    if np.linalg.eigvalsh(cov).min() < 1e-8:
        tr = np.trace(cov)
        bump = eps * tr / p if tr > 0 else eps
        cov = cov + max(bump, 1e-10) * np.eye(p)
    return cov


def _constrain_covs(covs, nk, structure):
    """Apply the covariance structure constraint after an M-step."""
    m, p, _ = covs.shape
    if structure == "full":
        return covs
    if structure == "shared":
        pooled = np.einsum("h,hij->ij", nk / nk.sum(), covs)
        return np.broadcast_to(pooled, covs.shape).copy()
    if structure == "spherical":
        out = np.zeros_like(covs)
        for h in range(m):
            out[h] = np.trace(covs[h]) / p * np.eye(p)
        return out
    if structure == "spherical_equal":
        sigma2 = float(np.dot(nk / nk.sum(), [np.trace(c) / p for c in covs]))
        return np.broadcast_to(sigma2 * np.eye(p), covs.shape).copy()
    raise ValueError(f"unknown covariance structure {structure!r}")


def _n_free_params(m, p, structure):
    base = (m - 1) + m * p
    cov = {
        "full": m * p * (p + 1) // 2,
        "shared": p * (p + 1) // 2,
        "spherical": m,
        "spherical_equal": 1,
    }[structure]
    return base + cov


def _em_single(data, m, config, rng, structure):
    """One EM run from a k-means++ start. Returns GmmFit or None on collapse."""
    n, p = data.shape
    seeds = _kmeanspp_seeds(data, m, rng)
    assign = np.argmin(
        np.sum((data[:, None, :] - seeds[None, :, :]) ** 2, axis=2), axis=1
    )
    weights = np.empty(m)
    means = np.empty((m, p))
    covs = np.empty((m, p, p))
    pooled = np.cov(data, rowvar=False, ddof=0).reshape(p, p)
    for h in range(m):
        members = data[assign == h]
        weights[h] = max(len(members), 1) / n
        means[h] = members.mean(axis=0) if len(members) else seeds[h]
        covs[h] = (
            np.cov(members, rowvar=False, ddof=0).reshape(p, p)
            if len(members) > p
            else pooled
        )
    covs = _constrain_covs(covs, weights * n, structure)
    for h in range(m):
        covs[h] = _regularize_cov(covs[h], config.cov_reg)
    weights = weights / weights.sum()

    trace = []
    prev = -np.inf
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        try:
            params = GmmParams(weights, means, covs)
        except (ValueError, np.linalg.LinAlgError):
            return None
        logdens = _component_log_densities(params, data)
        with np.errstate(divide="ignore"):
            joint = logdens + np.log(weights)
        mx = joint.max(axis=1, keepdims=True)
        lse = mx[:, 0] + np.log(np.sum(np.exp(joint - mx), axis=1))
        ll = float(lse.sum())
        trace.append(ll)
        resp = np.exp(joint - lse[:, None])

        if np.isfinite(prev) and abs(ll - prev) <= config.tol * (abs(prev) + 1e-12):
            converged = True
            break
        prev = ll

        nk = resp.sum(axis=0)
        if np.any(nk <= 0):
            return None
        weights = nk / n
        means = (resp.T @ data) / nk[:, None]
        for h in range(m):
            dev = data - means[h]
            covs[h] = (resp[:, h, None] * dev).T @ dev / nk[h]
        covs = _constrain_covs(covs, nk, structure)
        for h in range(m):
            covs[h] = _regularize_cov(covs[h], config.cov_reg)

    if not trace:
        return None
    return GmmFit(
        params=GmmParams(weights, means, covs),
        loglik=trace[-1],
        n_iter=it,
        converged=converged,
        loglik_trace=np.array(trace),
    )


def fit_gmm(data, m: int, config: EmConfig = EmConfig(), rng=None) -> GmmFit:
    """Fit an m-component Gaussian mixture by EM, best of several restarts.

    config.structure constrains the component covariances; "bic" fits
    every structure and keeps the one with the best Bayesian information
    criterion, mirroring what reference mixture-model packages do.
    """
    data = _check_data(data)
    n = data.shape[0]
    if n <= m:
        raise ValueError(f"need more than m={m} observations, got {n}")
    rng = np.random.default_rng(rng)
    structures = (
        COV_STRUCTURES if config.structure == "bic" else (config.structure,)
    )
    best = None
    best_bic = -np.inf
    for structure in structures:
        cand = None
        for _ in range(config.restarts):
            fit = _em_single(data, m, config, rng, structure)
            if fit is not None and (cand is None or fit.loglik > cand.loglik):
                cand = fit
        if cand is None:
            continue
        bic = 2 * cand.loglik - _n_free_params(m, data.shape[1], structure) * np.log(n)
        if bic > best_bic:
            best, best_bic = cand, bic
    if best is None:
        raise DegenerateFitError("EM produced no valid likelihood in any restart")
    return best


def classify_gmm(params: GmmParams, z, weighted: bool = False):
    """Hard-classify a single point: argmax of component density.

    With weighted=True the rule uses the mixture-weighted densities
    (MAP rule) instead. Ties go to the lowest index. Returns
    (label, component densities).
    """
    z = np.asarray(z, dtype=float).reshape(1, -1)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite input point")
    logdens = _component_log_densities(params, z)[0]
    score = logdens + np.log(params.weights) if weighted else logdens
    return int(np.argmax(score)) + 1, np.exp(logdens)


def label_points_gmm(params: GmmParams, data, weighted: bool = False) -> np.ndarray:
    """Vectorized hard classification of many points; labels in 1..m."""
    data = _check_data(data, params.p)
    logdens = _component_log_densities(params, data)
    if weighted:
        with np.errstate(divide="ignore"):
            logdens = logdens + np.log(params.weights)
    return np.argmax(logdens, axis=1) + 1


def _lloyd(data, m, config, rng):
    n, _ = data.shape
    centroids = _kmeanspp_seeds(data, m, rng)
    ss_trace = []
    prev_ss = np.inf
    for _ in range(config.max_iter):
        d2 = np.sum((data[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        assign = np.argmin(d2, axis=1)
        ss = float(d2[np.arange(n), assign].sum())
        ss_trace.append(ss)
        new_centroids = centroids.copy()
        for h in range(m):
            members = data[assign == h]
            if len(members) == 0:
                # re-seed empty cluster at the worst-fit point
                new_centroids[h] = data[np.argmax(d2[np.arange(n), assign])]
            else:
                new_centroids[h] = members.mean(axis=0)
        if ss >= prev_ss - 1e-12:
            break
        prev_ss = ss
        centroids = new_centroids
    d2 = np.sum((data[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    ss = float(d2.min(axis=1).sum())
    return centroids, ss, ss_trace


def fit_kmeans(data, m: int, config: KmeansConfig = KmeansConfig(), rng=None) -> KmeansFit:
    """Lloyd's algorithm with k-means++ seeding; best within-SS over restarts."""
    data = _check_data(data)
    if data.shape[0] <= m:
        raise ValueError(f"need more than m={m} observations, got {data.shape[0]}")
    if m > 1 and np.all(data == data[0]):
        raise DegenerateFitError("all points identical; cannot form m > 1 clusters")
    rng = np.random.default_rng(rng)
    best_c, best_ss = None, np.inf
    for _ in range(config.restarts):
        centroids, ss, _ = _lloyd(data, m, config, rng)
        if ss < best_ss:
            best_c, best_ss = centroids, ss
    return KmeansFit(centroids=best_c, within_ss=best_ss)


def classify_kmeans(fit: KmeansFit, z) -> int:
    """Nearest-centroid label for a single point; lowest index on ties."""
    z = np.asarray(z, dtype=float).reshape(1, -1)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite input point")
    d2 = np.sum((fit.centroids - z) ** 2, axis=1)
    return int(np.argmin(d2)) + 1


def label_points_kmeans(fit: KmeansFit, data) -> np.ndarray:
    data = _check_data(data, fit.centroids.shape[1])
    d2 = np.sum((data[:, None, :] - fit.centroids[None, :, :]) ** 2, axis=2)
    return np.argmin(d2, axis=1) + 1


def sample_gmm(params: GmmParams, n: int, rng) -> LabeledSample:
    """Draw n labeled points from the mixture; deterministic given the rng."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(rng)
    cum = np.cumsum(params.weights)
    cum[-1] = 1.0
    labels = np.searchsorted(cum, rng.random(n), side="right") + 1
    data = np.empty((n, params.p))
    for h in range(params.m):
        mask = labels == h + 1
        cnt = int(mask.sum())
        if cnt == 0:
            continue
        L = np.linalg.cholesky(params.covariances[h])
        data[mask] = params.means[h] + rng.standard_normal((cnt, params.p)) @ L.T
    return LabeledSample(labels=labels, data=data)


def align_labels(reference_means, fit_means) -> np.ndarray:
    """Match fit components to reference components by mean proximity.

    Returns a 0-based permutation perm with perm[k] = index of the fit
    component assigned to reference component k, minimizing the total
    squared distance between matched means.
    """
    ref = np.atleast_2d(np.asarray(reference_means, dtype=float))
    fit = np.atleast_2d(np.asarray(fit_means, dtype=float))
    if ref.shape != fit.shape:
        raise ValueError("component counts or dimensions differ")
    cost = np.sum((ref[:, None, :] - fit[None, :, :]) ** 2, axis=2)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(len(rows), dtype=int)
    perm[rows] = cols
    return perm


def apply_alignment(labels: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Relabel so fit component perm[k] becomes class k+1."""
    inverse = np.empty(len(perm), dtype=int)
    inverse[perm] = np.arange(len(perm))
    return inverse[np.asarray(labels) - 1] + 1


def permute_components(params: GmmParams, perm: np.ndarray) -> GmmParams:
    """Reorder components so old component perm[k] becomes component k."""
    return GmmParams(
        weights=params.weights[perm],
        means=params.means[perm],
        covariances=params.covariances[perm],
    )
