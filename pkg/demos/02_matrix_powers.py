"""Fractional powers of misclassification matrices.

The correction simulates *extra* misclassification by powering the
confusion matrix: Pi^lambda interpolates between no extra noise
(lambda = 0) and the observed noise applied again (lambda = 1). Powers
exist only when the spectrum is real and positive, which is why heavily
confused matrices cannot be corrected this way.
"""

import numpy as np

from clusimex import (
    MisclassMatrix,
    PowerExistenceError,
    check_power_validity,
    matrix_power,
)

pi = MisclassMatrix([[0.9, 0.15], [0.1, 0.85]])
print("confusion matrix:")
print(pi.entries)

for lam in (0.0, 0.5, 1.0, 2.0):
    print(f"\nPi^{lam}:")
    print(np.round(matrix_power(pi, lam).entries, 4))

# semigroup property: the half power composed with itself returns Pi
half = matrix_power(pi, 0.5)
print("\nhalf power squared minus Pi (should vanish):")
print(np.round(half.entries @ half.entries - pi.entries, 12))

# a matrix with more than 50% confusion has a negative eigenvalue
bad = MisclassMatrix([[0.3, 0.7], [0.7, 0.3]])
report = check_power_validity(bad)
print(f"\nheavy confusion eigenvalues: {np.round(report.eigenvalues.real, 3)}")
print(f"fractional powers exist: {report.power_exists}")
try:
    matrix_power(bad, 0.5)
except PowerExistenceError as exc:
    print(f"as expected: {exc}")
