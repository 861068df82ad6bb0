"""Misclassification matrices: representation, estimation, spectral powers.

A misclassification matrix is column-stochastic: entry (i, j) is the
probability of observing class i when the true class is j. Fractional
powers are taken through the eigendecomposition and only exist when the
spectrum is real and positive.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .mixture import GmmFit, GmmParams

__all__ = [
    "MisclassMatrix",
    "PowerValidity",
    "PowerExistenceError",
    "matrix_power",
    "check_power_validity",
    "estimate_misclass_mc",
    "estimate_misclass_oob",
    "save_misclass_csv",
    "load_misclass_csv",
]

_COL_TOL = 1e-10
_CLAMP = 1e-10
_IMAG_TOL = 1e-10


class PowerExistenceError(ValueError):
    """Requested matrix power does not exist as a misclassification matrix."""


@dataclass(frozen=True)
class MisclassMatrix:
    """Column-stochastic m x m matrix of label confusion probabilities."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.atleast_2d(np.asarray(self.entries, dtype=float))
        object.__setattr__(self, "entries", e)
        if e.shape[0] != e.shape[1]:
            raise ValueError("misclassification matrix must be square")
        if np.any(e < -1e-12) or np.any(e > 1 + 1e-12):
            raise ValueError("entries must lie in [0, 1]")
        colsums = e.sum(axis=0)
        if np.any(np.abs(colsums - 1.0) > _COL_TOL):
            raise ValueError("columns must sum to 1")

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def identity(cls, m: int) -> "MisclassMatrix":
        return cls(np.eye(m))


@dataclass(frozen=True)
class PowerValidity:
    """Diagnostics for whether fractional powers of a matrix exist."""

    eigenvalues: np.ndarray
    is_diagonalizable: bool
    power_exists: bool
    max_negative_entry: float


def _spectrum(entries: np.ndarray):
    w, E = np.linalg.eig(entries)
    diagonalizable = (
        np.linalg.matrix_rank(E, tol=1e-12) == entries.shape[0]
        and np.linalg.cond(E) < 1e12
    )
    return w, E, diagonalizable


def _raw_power(w, E, lam):
    return np.real(E @ np.diag(w**lam) @ np.linalg.inv(E))


def matrix_power(pi: MisclassMatrix, lam: float) -> MisclassMatrix:
    """Spectral power of a misclassification matrix.

    Tiny negative entries (above -1e-10) produced by floating-point
    reconstruction are clamped and the columns renormalized; anything
    worse raises PowerExistenceError. lam = -1 is permitted for
    diagnostics and skips the stochasticity cleanup.
    """
    if lam < -1:
        raise ValueError("power must be at least -1")
    w, E, diagonalizable = _spectrum(pi.entries)
    if not diagonalizable:
        raise PowerExistenceError("matrix is not diagonalizable")
    if np.any(np.abs(w.imag) > _IMAG_TOL):
        bad = w[np.argmax(np.abs(w.imag))]
        raise PowerExistenceError(f"complex eigenvalue {bad}")
    w = w.real.astype(complex).real
    is_integer = abs(lam - round(lam)) < 1e-12
    if not is_integer and np.any(w <= 0):
        bad = w.min()
        raise PowerExistenceError(
            f"eigenvalue {bad:.6g} is not strictly positive; "
            f"non-integer power {lam} does not exist"
        )
    if lam < 0 and np.any(np.abs(w) < 1e-14):
        raise PowerExistenceError("matrix is singular; negative power does not exist")
    out = _raw_power(w.astype(float), E.real if np.all(np.abs(E.imag) < _IMAG_TOL) else E, lam)
    out = np.real(out)
    if lam < 0:
        # diagnostic use: the inverse of a stochastic matrix need not be one
        obj = object.__new__(MisclassMatrix)
        object.__setattr__(obj, "entries", out)
        return obj
    low = out.min()
    if low < -_CLAMP:
        i, j = np.unravel_index(np.argmin(out), out.shape)
        raise PowerExistenceError(
            f"entry ({i + 1}, {j + 1}) = {low:.3e} after powering; "
            f"power {lam} is not a misclassification matrix"
        )
    out = np.clip(out, 0.0, None)
    out = out / out.sum(axis=0, keepdims=True)
    return MisclassMatrix(out)


def check_power_validity(pi: MisclassMatrix) -> PowerValidity:
    """Spectrum inspection plus a probe over lambda in {0.1, ..., 2.0}."""
    w, E, diagonalizable = _spectrum(pi.entries)
    real_positive = bool(
        np.all(np.abs(w.imag) <= _IMAG_TOL) and np.all(w.real > 0)
    )
    max_neg = 0.0
    stochastic_ok = True
    if diagonalizable and real_positive:
        wr = w.real
        for lam in np.arange(0.1, 2.01, 0.1):
            powed = _raw_power(wr, E, lam)
            max_neg = max(max_neg, float(max(0.0, -powed.min())))
            if powed.min() < -_CLAMP or np.any(
                np.abs(powed.sum(axis=0) - 1.0) > 1e-8
            ):
                stochastic_ok = False
    return PowerValidity(
        eigenvalues=w,
        is_diagonalizable=diagonalizable,
        power_exists=diagonalizable and real_positive and stochastic_ok,
        max_negative_entry=max_neg,
    )


def estimate_misclass_mc(fit, classifier, n_mc: int = 100_000, rng=None) -> MisclassMatrix:
    """Monte Carlo estimate of the confusion induced by a classification rule.

    For each fitted component j, draws n_mc points from its Gaussian and
    records the fraction assigned to each class by `classifier`, a
    callable mapping an (k, p) array to labels in 1..m.
    """
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    params = fit.params if isinstance(fit, GmmFit) else fit
    if not isinstance(params, GmmParams):
        raise TypeError("fit must be a GmmFit or GmmParams")
    rng = np.random.default_rng(rng)
    m = params.m
    entries = np.zeros((m, m))
    for j in range(m):
        L = np.linalg.cholesky(params.covariances[j])
        pts = params.means[j] + rng.standard_normal((n_mc, params.p)) @ L.T
        labels = np.asarray(classifier(pts))
        counts = np.bincount(labels - 1, minlength=m)
        entries[:, j] = counts / n_mc
    return MisclassMatrix(entries)


def estimate_misclass_oob(reference_labels, predicted_labels, m: int) -> MisclassMatrix:
    """Cross-tabulate predictions (rows) against reference labels (columns).

    Columns are normalized to sum to 1; a class absent from the reference
    labels gets the identity column (no information, no assumed error).
    """
    ref = np.asarray(reference_labels, dtype=int)
    pred = np.asarray(predicted_labels, dtype=int)
    if ref.shape != pred.shape:
        raise ValueError("label vectors differ in length")
    if len(ref) == 0:
        raise ValueError("no out-of-bag observations")
    entries = np.zeros((m, m))
    for i, j in zip(pred, ref):
        entries[i - 1, j - 1] += 1
    colsums = entries.sum(axis=0)
    for j in range(m):
        if colsums[j] == 0:
            entries[:, j] = 0.0
            entries[j, j] = 1.0
        else:
            entries[:, j] /= colsums[j]
    return MisclassMatrix(entries)


def save_misclass_csv(pi: MisclassMatrix, path) -> None:
    """Write as plain CSV with header col_1..col_m (columns = true class)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"col_{j + 1}" for j in range(pi.m)])
        for row in pi.entries:
            writer.writerow([f"{v:.12g}" for v in row])


def load_misclass_csv(path) -> MisclassMatrix:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    m = len(header)
    entries = np.array(rows)
    if entries.shape != (m, m):
        raise ValueError(f"expected {m}x{m} matrix, got shape {entries.shape}")
    colsums = entries.sum(axis=0)
    if np.any(np.abs(colsums - 1.0) > 1e-6):
        raise ValueError("columns must sum to 1 within 1e-6")
    return MisclassMatrix(entries / colsums)
