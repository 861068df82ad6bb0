"""Outcome models fitted on class labels.

Logistic regression (Newton/IRLS, treatment contrasts with class 1 as
reference) and Cox proportional hazards (Newton on the Efron partial
likelihood, no intercept). Both return coefficients with the inverse
observed information as covariance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit, xlogy

__all__ = [
    "Outcome",
    "RegressionFit",
    "SeparationError",
    "MonotoneLikelihoodError",
    "design_matrix",
    "fit_logistic",
    "fit_cox",
    "logistic_loglik",
    "cox_partial_loglik",
    "fit_family",
]

_DIVERGENCE_BOUND = 15.0
_MAX_ITER = 50
_TOL = 1e-10


class SeparationError(RuntimeError):
    """Logistic coefficients diverge (complete or quasi-complete separation)."""


class MonotoneLikelihoodError(RuntimeError):
    """Cox partial likelihood is monotone in a coefficient; no finite MLE."""


@dataclass(frozen=True)
class Outcome:
    """Binary outcome, or right-censored survival (time, event) pairs."""

    kind: str                      # "binary" | "survival"
    y: Optional[np.ndarray] = None
    time: Optional[np.ndarray] = None
    event: Optional[np.ndarray] = None

    @classmethod
    def binary(cls, y) -> "Outcome":
        y = np.asarray(y, dtype=float)
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise ValueError("binary outcome values must be 0 or 1")
        return cls(kind="binary", y=y)

    @classmethod
    def survival(cls, time, event) -> "Outcome":
        time = np.asarray(time, dtype=float)
        event = np.asarray(event, dtype=float)
        if np.any(time <= 0):
            raise ValueError("survival times must be strictly positive")
        if not np.all(np.isin(event, (0.0, 1.0))):
            raise ValueError("event indicators must be 0 or 1")
        if time.shape != event.shape:
            raise ValueError("time and event lengths differ")
        return cls(kind="survival", time=time, event=event)

    @property
    def n(self) -> int:
        return len(self.y) if self.kind == "binary" else len(self.time)


@dataclass(frozen=True)
class RegressionFit:
    family: str               # "logistic" | "cox"
    coefficients: np.ndarray
    covariance: np.ndarray
    loglik: float
    converged: bool
    n_iter: int

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))


def design_matrix(labels, m: int) -> np.ndarray:
    """Treatment-contrast encoding: intercept column plus indicators 2..m."""
    labels = np.asarray(labels, dtype=int)
    if np.any(labels < 1) or np.any(labels > m):
        raise ValueError(f"labels must lie in 1..{m}")
    n = len(labels)
    X = np.zeros((n, m))
    X[:, 0] = 1.0
    for h in range(2, m + 1):
        X[labels == h, h - 1] = 1.0
    return X


def logistic_loglik(beta, y, X):
    """Bernoulli log-likelihood with logit link and its gradient."""
    eta = X @ beta
    mu = expit(eta)
    ll = float(np.sum(xlogy(y, mu) + xlogy(1 - y, 1 - mu)))
    grad = X.T @ (y - mu)
    return ll, grad


def _check_classes(labels, m):
    present = np.unique(np.asarray(labels, dtype=int))
    missing = sorted(set(range(1, m + 1)) - set(present.tolist()))
    if missing:
        raise ValueError(f"classes {missing} have no observations")


def fit_logistic(outcome, labels, m: int) -> RegressionFit:
    """Newton/IRLS logistic MLE on treatment-contrast labels."""
    y = outcome.y if isinstance(outcome, Outcome) else np.asarray(outcome, dtype=float)
    if y.min() == y.max():
        raise ValueError("binary outcome needs both a 0 and a 1")
    _check_classes(labels, m)
    X = design_matrix(labels, m)
    beta = np.zeros(m)
    ll, grad = logistic_loglik(beta, y, X)
    converged = False
    it = 0
    H = None
    for it in range(1, _MAX_ITER + 1):
        mu = expit(X @ beta)
        w = mu * (1 - mu)
        H = X.T @ (w[:, None] * X)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            raise SeparationError("singular information matrix") from None
        # step-halving on likelihood decrease
        factor = 1.0
        for _ in range(30):
            new_beta = beta + factor * step
            new_ll, new_grad = logistic_loglik(new_beta, y, X)
            if new_ll >= ll - 1e-12:
                break
            factor *= 0.5
        beta, prev_ll, ll, grad = new_beta, ll, new_ll, new_grad
        if np.max(np.abs(beta)) > _DIVERGENCE_BOUND and np.max(np.abs(grad)) >= 1e-6:
            raise SeparationError(
                f"coefficients diverged (max |beta| = {np.max(np.abs(beta)):.2f}); "
                "data are likely separated"
            )
        if abs(ll - prev_ll) <= _TOL * (abs(prev_ll) + 1e-12):
            converged = True
            break
    mu = expit(X @ beta)
    w = mu * (1 - mu)
    H = X.T @ (w[:, None] * X)
    cov = np.linalg.inv(H)
    return RegressionFit(
        family="logistic",
        coefficients=beta,
        covariance=cov,
        loglik=ll,
        converged=converged,
        n_iter=it,
    )


def _run_ends(t):
    """For each index of a descending-sorted time vector, the largest index
    sharing the same time (end of the tie run); the risk set of that time
    is the prefix up to this index."""
    n = len(t)
    run_end = np.empty(n, dtype=int)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and t[j + 1] == t[i]:
            j += 1
        run_end[i : j + 1] = j
        i = j + 1
    return run_end


def _cox_arrays(outcome, labels, m):
    X = design_matrix(labels, m)[:, 1:]  # baseline hazard absorbs the intercept
    order = np.argsort(-outcome.time, kind="stable")
    t = outcome.time[order]
    d = outcome.event[order]
    Xs = X[order]
    return t, d, Xs, _run_ends(t)


def cox_partial_loglik(beta, time, event, X):
    """Efron log partial likelihood and gradient for design X (no intercept)."""
    t = np.asarray(time, dtype=float)
    order = np.argsort(-t, kind="stable")
    ts = t[order]
    ds = np.asarray(event, dtype=float)[order]
    Xs = np.atleast_2d(np.asarray(X, dtype=float))[order]
    ll, grad, _ = _cox_llgh(np.asarray(beta, dtype=float), ts, ds, Xs, _run_ends(ts))
    return ll, grad


def _cox_llgh(beta, t, d, Xs, run_end):
    """Log partial likelihood, gradient, Hessian (Efron ties)."""
    n, q = Xs.shape
    eta = Xs @ beta
    eta = eta - eta.max()  # scale invariance of the partial likelihood
    r = np.exp(eta)
    rx = r[:, None] * Xs
    rxx = rx[:, :, None] * Xs[:, None, :]
    S0 = np.cumsum(r)
    S1 = np.cumsum(rx, axis=0)
    S2 = np.cumsum(rxx, axis=0)

    ev = np.flatnonzero(d == 1)
    # event groups: tied event times share the same run_end
    groups = {}
    for i in ev:
        groups.setdefault(run_end[i], []).append(i)

    untied = [idxs[0] for end, idxs in groups.items() if len(idxs) == 1]
    ll = 0.0
    grad = np.zeros(q)
    hess = np.zeros((q, q))
    if untied:
        idx = np.array(untied)
        end = run_end[idx]
        s0 = S0[end]
        s1 = S1[end]
        s2 = S2[end]
        mu = s1 / s0[:, None]
        ll += float(np.sum(eta[idx] - np.log(s0)))
        grad += Xs[idx].sum(axis=0) - mu.sum(axis=0)
        hess -= np.einsum("kab,k->ab", s2, 1.0 / s0) - np.einsum(
            "ka,kb->ab", mu, mu
        )
    for end, idxs in groups.items():
        dd = len(idxs)
        if dd == 1:
            continue
        idxs = np.array(idxs)
        s0, s1, s2 = S0[end], S1[end], S2[end]
        d0 = r[idxs].sum()
        d1 = rx[idxs].sum(axis=0)
        d2 = rxx[idxs].sum(axis=0)
        ll += float(eta[idxs].sum())
        grad += Xs[idxs].sum(axis=0)
        for l in range(dd):
            f = l / dd
            den = s0 - f * d0
            num1 = s1 - f * d1
            num2 = s2 - f * d2
            mu = num1 / den
            ll -= np.log(den)
            grad -= mu
            hess -= num2 / den - np.outer(mu, mu)
    return ll, grad, hess


def fit_cox(outcome: Outcome, labels, m: int) -> RegressionFit:
    """Newton-Raphson Cox PH fit with Efron tie handling."""
    if outcome.kind != "survival":
        raise ValueError("Cox model needs a survival outcome")
    if outcome.event.sum() < 1:
        raise ValueError("no events observed")
    _check_classes(labels, m)
    t, d, Xs, run_end = _cox_arrays(outcome, labels, m)
    q = m - 1
    beta = np.zeros(q)
    ll, grad, hess = _cox_llgh(beta, t, d, Xs, run_end)
    converged = False
    it = 0
    for it in range(1, _MAX_ITER + 1):
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            raise MonotoneLikelihoodError("singular information matrix") from None
        factor = 1.0
        for _ in range(30):
            new_beta = beta + factor * step
            new_ll, new_grad, new_hess = _cox_llgh(new_beta, t, d, Xs, run_end)
            if new_ll >= ll - 1e-12:
                break
            factor *= 0.5
        beta, prev_ll, ll, grad, hess = new_beta, ll, new_ll, new_grad, new_hess
        if np.max(np.abs(beta)) > _DIVERGENCE_BOUND and np.max(np.abs(grad)) >= 1e-6:
            raise MonotoneLikelihoodError(
                f"coefficients diverged (max |beta| = {np.max(np.abs(beta)):.2f}); "
                "a class likely has monotone risk ordering or no events"
            )
        if abs(ll - prev_ll) <= _TOL * (abs(prev_ll) + 1e-12):
            converged = True
            break
    cov = np.linalg.inv(-hess)
    return RegressionFit(
        family="cox",
        coefficients=beta,
        covariance=cov,
        loglik=ll,
        converged=converged,
        n_iter=it,
    )


def fit_family(outcome: Outcome, labels, m: int, family: str) -> RegressionFit:
    if family == "logistic":
        return fit_logistic(outcome, labels, m)
    if family == "cox":
        return fit_cox(outcome, labels, m)
    raise ValueError(f"unknown family {family!r}")
