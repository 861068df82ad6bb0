"""Simulation-and-extrapolation correction for misclassified labels.

Extra misclassification is simulated along a grid of positive lambda
values by drawing labels from the columns of the matrix power of the
misclassification matrix; the refitted coefficient trajectory is
extrapolated back to lambda = -1. Variance comes from the simulation
(jackknife-style) decomposition or from a full bootstrap that refits the
clustering and re-estimates the misclassification matrix out-of-bag.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import curve_fit

from .misclass import (
    MisclassMatrix,
    PowerExistenceError,
    check_power_validity,
    estimate_misclass_oob,
    matrix_power,
)
from .mixture import (
    EmConfig,
    align_labels,
    fit_gmm,
    label_points_gmm,
    permute_components,
)
from .regress import (
    MonotoneLikelihoodError,
    Outcome,
    RegressionFit,
    SeparationError,
    fit_family,
)

__all__ = [
    "SimexConfig",
    "SimexFit",
    "BootstrapResult",
    "ExtrapolantFit",
    "simulate_labels",
    "fit_extrapolant",
    "extrapolate",
    "run_mcsimex",
    "jackknife_variance",
    "bootstrap_simex",
    "write_simex_report",
    "write_bootstrap_csv",
]

_FIT_ERRORS = (SeparationError, MonotoneLikelihoodError, ValueError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class SimexConfig:
    lambda_grid: tuple = (0.5, 1.0, 1.5, 2.0)
    B: int = 100
    extrapolant: str = "quadratic"
    seed: int = 0

    def __post_init__(self):
        grid = tuple(float(v) for v in self.lambda_grid)
        object.__setattr__(self, "lambda_grid", grid)
        if any(v <= 0 for v in grid):
            raise ValueError("lambda grid values must be positive")
        if any(b >= a for a, b in zip(grid[1:], grid[:-1])):
            raise ValueError("lambda grid must be strictly increasing")
        if self.B < 1:
            raise ValueError("B must be at least 1")
        if self.extrapolant not in ("linear", "quadratic", "loglinear"):
            raise ValueError(f"unknown extrapolant {self.extrapolant!r}")


@dataclass(frozen=True)
class ExtrapolantFit:
    kind: str
    gamma: np.ndarray
    fell_back: bool = False


@dataclass(frozen=True)
class SimexFit:
    family: str
    m: int
    config: SimexConfig
    naive: RegressionFit
    per_lambda: np.ndarray          # (k, q) B-averaged coefficients
    per_lambda_model_var: np.ndarray  # (k, q) B-averaged model variances
    per_lambda_sim_var: np.ndarray    # (k, q) between-replicate variances
    extrapolants: list              # ExtrapolantFit per coefficient
    corrected: np.ndarray           # (q,)
    variance: Optional[np.ndarray]  # (q,) or None
    variance_method: Optional[str]
    n_dropped: np.ndarray           # (k,) failed refits per grid point

    @property
    def curve(self) -> list:
        """(lambda, coefficient vector) pairs, naive point at lambda 0."""
        pts = [(0.0, self.naive.coefficients)]
        pts += list(zip(self.config.lambda_grid, self.per_lambda))
        return pts


@dataclass(frozen=True)
class BootstrapResult:
    replicates: np.ndarray  # (n_ok, q) corrected coefficients
    point: np.ndarray       # mean of replicates
    point_median: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    n_boot: int
    n_failed: int


def simulate_labels(labels, pi_lambda: MisclassMatrix, rng) -> np.ndarray:
    """Draw each label from the column of pi_lambda indexed by its input."""
    labels = np.asarray(labels, dtype=int)
    m = pi_lambda.m
    if np.any(labels < 1) or np.any(labels > m):
        raise ValueError(f"labels must lie in 1..{m}")
    rng = np.random.default_rng(rng)
    cum = np.cumsum(pi_lambda.entries, axis=0)
    cum[-1, :] = 1.0
    u = rng.random(len(labels))
    cols = cum[:, labels - 1]              # (m, n)
    return np.argmax(u[None, :] < cols, axis=0) + 1


def _quad_design(lams, degree):
    lams = np.asarray(lams, dtype=float)
    return np.vander(lams, degree + 1, increasing=True)


def fit_extrapolant(lams, values, kind: str) -> ExtrapolantFit:
    """Least-squares fit of the extrapolant family through (lambda, value) pairs."""
    lams = np.asarray(lams, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(np.unique(lams)) != len(lams):
        raise ValueError("lambda values must be distinct")
    npar = {"linear": 2, "quadratic": 3, "loglinear": 3}[kind]
    if len(lams) < npar:
        raise ValueError(f"{kind} extrapolant needs at least {npar} points")
    if kind in ("linear", "quadratic"):
        degree = 1 if kind == "linear" else 2
        X = _quad_design(lams, degree)
        gamma, *_ = np.linalg.lstsq(X, values, rcond=None)
        return ExtrapolantFit(kind=kind, gamma=gamma)

    # loglinear: g0 + exp(g1 + g2 * lam), seeded from a log-linear fit
    spread = values.max() - values.min()
    g0 = values.min() - max(0.5 * spread, 1e-6)
    resid = values - g0
    A = _quad_design(lams, 1)
    g12, *_ = np.linalg.lstsq(A, np.log(resid), rcond=None)
    try:
        gamma, _ = curve_fit(
            lambda lam, a, b, c: a + np.exp(b + c * lam),
            lams,
            values,
            p0=[g0, g12[0], g12[1]],
            maxfev=5000,
        )
        return ExtrapolantFit(kind="loglinear", gamma=np.asarray(gamma))
    except RuntimeError:
        quad = fit_extrapolant(lams, values, "quadratic")
        return ExtrapolantFit(kind="quadratic", gamma=quad.gamma, fell_back=True)


def extrapolate(gamma, kind: str, lam: float) -> float:
    gamma = np.asarray(gamma, dtype=float)
    if kind == "linear":
        return float(gamma[0] + gamma[1] * lam)
    if kind == "quadratic":
        return float(gamma[0] + gamma[1] * lam + gamma[2] * lam**2)
    if kind == "loglinear":
        return float(gamma[0] + np.exp(gamma[1] + gamma[2] * lam))
    raise ValueError(f"unknown extrapolant {kind!r}")


def _replicate_rng(seed, k, b):
    return np.random.default_rng(np.random.SeedSequence((seed, k, b)))


def run_mcsimex(
    outcome: Outcome,
    labels,
    m: int,
    pi: MisclassMatrix,
    family: str,
    config: SimexConfig = SimexConfig(),
) -> SimexFit:
    """Full simulate-and-extrapolate correction of a regression on labels.

    Raises if the misclassification matrix has no valid fractional powers
    or if more than 20% of refits fail at any grid point.
    """
    labels = np.asarray(labels, dtype=int)
    validity = check_power_validity(pi)
    if not validity.power_exists:
        raise PowerExistenceError(
            f"misclassification matrix has no valid powers "
            f"(eigenvalues {np.round(validity.eigenvalues.real, 6)})"
        )
    naive = fit_family(outcome, labels, m, family)
    q = len(naive.coefficients)
    grid = config.lambda_grid
    k = len(grid)

    per_lambda = np.empty((k, q))
    model_var = np.empty((k, q))
    sim_var = np.zeros((k, q))
    n_dropped = np.zeros(k, dtype=int)
    for ki, lam in enumerate(grid):
        p_lam = matrix_power(pi, lam)
        coefs = []
        mvars = []
        for b in range(config.B):
            rng = _replicate_rng(config.seed, ki, b)
            sim = simulate_labels(labels, p_lam, rng)
            try:
                fit = fit_family(outcome, sim, m, family)
            except _FIT_ERRORS:
                n_dropped[ki] += 1
                continue
            coefs.append(fit.coefficients)
            mvars.append(np.diag(fit.covariance))
        if n_dropped[ki] > 0.2 * config.B:
            raise RuntimeError(
                f"{n_dropped[ki]} of {config.B} refits failed at lambda={lam}"
            )
        coefs = np.array(coefs)
        per_lambda[ki] = coefs.mean(axis=0)
        model_var[ki] = np.array(mvars).mean(axis=0)
        if len(coefs) > 1:
            sim_var[ki] = coefs.var(axis=0, ddof=1)

    all_lams = np.concatenate(([0.0], grid))
    extrapolants = []
    corrected = np.empty(q)
    for j in range(q):
        vals = np.concatenate(([naive.coefficients[j]], per_lambda[:, j]))
        ext = fit_extrapolant(all_lams, vals, config.extrapolant)
        extrapolants.append(ext)
        corrected[j] = extrapolate(ext.gamma, ext.kind, -1.0)

    fit = SimexFit(
        family=family,
        m=m,
        config=config,
        naive=naive,
        per_lambda=per_lambda,
        per_lambda_model_var=model_var,
        per_lambda_sim_var=sim_var,
        extrapolants=extrapolants,
        corrected=corrected,
        variance=None,
        variance_method=None,
        n_dropped=n_dropped,
    )
    if config.B >= 2:
        var = jackknife_variance(fit)
        fit = SimexFit(
            **{**fit.__dict__, "variance": var, "variance_method": "jackknife"}
        )
    return fit


def jackknife_variance(fit: SimexFit) -> np.ndarray:
    """Extrapolate the per-lambda variance decomposition to lambda = -1.

    At each grid point the variance component is the B-averaged
    model-based variance minus the between-replicate variance; the naive
    model variance anchors lambda = 0. Known to understate the truth;
    floored at zero.
    """
    q = len(fit.naive.coefficients)
    grid = np.asarray(fit.config.lambda_grid)
    all_lams = np.concatenate(([0.0], grid))
    naive_var = np.diag(fit.naive.covariance)
    out = np.empty(q)
    for j in range(q):
        comps = fit.per_lambda_model_var[:, j] - fit.per_lambda_sim_var[:, j]
        vals = np.concatenate(([naive_var[j]], comps))
        ext = fit_extrapolant(all_lams, vals, fit.config.extrapolant)
        out[j] = max(0.0, extrapolate(ext.gamma, ext.kind, -1.0))
    return out


def bootstrap_simex(
    outcome: Outcome,
    raw_covariates,
    m: int,
    family: str,
    config: SimexConfig = SimexConfig(),
    n_boot: int = 1000,
    seed: int = 0,
    em_config: EmConfig = EmConfig(),
) -> BootstrapResult:
    """Bootstrap with per-iteration re-clustering and out-of-bag confusion.

    Each iteration resamples with replacement, refits the mixture on the
    in-bag sample, aligns its components to the full-data reference fit,
    estimates the misclassification matrix by cross-tabulating in-bag
    model predictions against reference labels on out-of-bag points, and
    runs the full correction on the in-bag data. Iterations that fail
    anywhere are skipped; more than 10% failures is an error.
    """
    data = np.atleast_2d(np.asarray(raw_covariates, dtype=float))
    n = data.shape[0]
    ref_rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
    reference = fit_gmm(data, m, em_config, rng=ref_rng)
    reference_labels = label_points_gmm(reference.params, data)

    replicates = []
    n_failed = 0
    for b in range(n_boot):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 1, b)))
        idx = rng.integers(0, n, size=n)
        oob = np.setdiff1d(np.arange(n), idx)
        try:
            inbag_fit = fit_gmm(data[idx], m, em_config, rng=rng)
            perm = align_labels(reference.params.means, inbag_fit.params.means)
            aligned = permute_components(inbag_fit.params, perm)
            if len(oob) == 0:
                raise ValueError("empty out-of-bag set")
            pi_hat = estimate_misclass_oob(
                reference_labels[oob], label_points_gmm(aligned, data[oob]), m
            )
            inbag_labels = label_points_gmm(aligned, data[idx])
            inbag_outcome = _subset_outcome(outcome, idx)
            it_config = SimexConfig(
                lambda_grid=config.lambda_grid,
                B=config.B,
                extrapolant=config.extrapolant,
                seed=int(rng.integers(2**31)),
            )
            fit = run_mcsimex(inbag_outcome, inbag_labels, m, pi_hat, family, it_config)
        except (_FIT_ERRORS + (PowerExistenceError, RuntimeError)):
            n_failed += 1
            continue
        replicates.append(fit.corrected)
    if n_failed > 0.1 * n_boot:
        raise RuntimeError(f"{n_failed} of {n_boot} bootstrap iterations failed")
    reps = np.array(replicates)
    return BootstrapResult(
        replicates=reps,
        point=reps.mean(axis=0),
        point_median=np.median(reps, axis=0),
        ci_lower=np.percentile(reps, 2.5, axis=0),
        ci_upper=np.percentile(reps, 97.5, axis=0),
        n_boot=n_boot,
        n_failed=n_failed,
    )


def _subset_outcome(outcome: Outcome, idx) -> Outcome:
    if outcome.kind == "binary":
        return Outcome.binary(outcome.y[idx])
    return Outcome.survival(outcome.time[idx], outcome.event[idx])


def write_simex_report(fit: SimexFit, report_path, curve_path) -> None:
    """Text report plus a (lambda, coef_index, value) curve CSV."""
    with open(curve_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "coef_index", "value"])
        for lam, coefs in fit.curve:
            for j, v in enumerate(coefs):
                writer.writerow([f"{lam:g}", j + 1, f"{v:.12g}"])
    lines = [
        f"family: {fit.family}",
        f"classes: {fit.m}",
        f"lambda grid: {', '.join(f'{v:g}' for v in fit.config.lambda_grid)}",
        f"B: {fit.config.B}",
        f"extrapolant: {fit.config.extrapolant}",
        f"seed: {fit.config.seed}",
        f"dropped refits per lambda: {fit.n_dropped.tolist()}",
        "",
        "coef  naive          corrected      gamma",
    ]
    for j, ext in enumerate(fit.extrapolants):
        gam = ", ".join(f"{g:.6g}" for g in ext.gamma)
        tag = " (fell back to quadratic)" if ext.fell_back else ""
        lines.append(
            f"{j + 1:<5} {fit.naive.coefficients[j]:< 14.6g} "
            f"{fit.corrected[j]:< 14.6g} [{gam}]{tag}"
        )
    if fit.variance is not None:
        lines.append("")
        lines.append(f"variance ({fit.variance_method}): "
                     + ", ".join(f"{v:.6g}" for v in fit.variance))
    with open(report_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_bootstrap_csv(result: BootstrapResult, replicates_path, summary_path) -> None:
    q = result.replicates.shape[1] if result.replicates.size else 0
    with open(replicates_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"coef_{j + 1}" for j in range(q)])
        for row in result.replicates:
            writer.writerow([f"{v:.12g}" for v in row])
    with open(summary_path, "w") as fh:
        fh.write("coef,point_mean,point_median,ci_lower,ci_upper,n_boot,n_failed\n")
        for j in range(q):
            fh.write(
                f"{j + 1},{result.point[j]:.12g},{result.point_median[j]:.12g},"
                f"{result.ci_lower[j]:.12g},{result.ci_upper[j]:.12g},"
                f"{result.n_boot},{result.n_failed}\n"
            )
