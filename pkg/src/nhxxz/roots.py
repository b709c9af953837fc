"""Polynomial roots by Aberth-Ehrlich simultaneous iteration."""

from __future__ import annotations

import numpy as np


class RootFindingError(RuntimeError):
    pass


def _horner_with_derivative(coeffs: np.ndarray, z: np.ndarray):
    p = np.full_like(z, coeffs[0])
    dp = np.zeros_like(z)
    for c in coeffs[1:]:
        dp = dp * z + p
        p = p * z + c
    return p, dp


def aberth_roots(coeffs, tol: float = 1e-15, max_iter: int = 500) -> np.ndarray:
    """All roots of the polynomial with ``coeffs`` (highest degree first)."""
    coeffs = np.trim_zeros(np.asarray(coeffs, dtype=complex), "f")
    n = len(coeffs) - 1
    if n < 1:
        return np.zeros(0, dtype=complex)
    coeffs = coeffs / coeffs[0]
    # zero roots are exact; strip them so the iteration sees a nonzero constant
    n_zero = 0
    while n > 0 and coeffs[-1] == 0:
        coeffs = coeffs[:-1]
        n -= 1
        n_zero += 1
    if n == 0:
        return np.zeros(n_zero, dtype=complex)

    # initial guesses on a circle of Fujiwara-bound radius
    k = np.arange(1, n + 1)
    radius = 2.0 * np.max(np.abs(coeffs[1:]) ** (1.0 / k))
    angles = 2 * np.pi * np.arange(n) / n + 0.4
    z = radius * np.exp(1j * angles)

    converged = np.zeros(n, dtype=bool)
    for _ in range(max_iter):
        p, dp = _horner_with_derivative(coeffs, z)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = p / dp
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, np.inf)
            repulsion = np.sum(1.0 / diff, axis=1)
            step = ratio / (1.0 - ratio * repulsion)
        step = np.where(np.isfinite(step), step, 0.0)
        step[converged] = 0.0
        z = z - step
        converged |= np.abs(step) <= tol * np.maximum(np.abs(z), 1.0)
        if converged.all():
            break
    else:
        bad = np.nonzero(~converged)[0]
        raise RootFindingError(f"Aberth iteration did not converge for root indices {bad.tolist()}")
    return np.concatenate([z, np.zeros(n_zero, dtype=complex)])


def polish_root(coeffs, z: complex, iters: int = 3) -> complex:
    """A few Newton steps on a single root."""
    coeffs = np.asarray(coeffs, dtype=complex)
    for _ in range(iters):
        p, dp = _horner_with_derivative(coeffs, np.array([z]))
        if dp[0] == 0:
            break
        z = z - p[0] / dp[0]
    return complex(z)
