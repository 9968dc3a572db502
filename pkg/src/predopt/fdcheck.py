"""Central finite-difference oracles for gradient verification.

These are deliberately independent of every analytic formula in the
package: they only evaluate a callable at perturbed points. Tests use
them as the second route when checking closed-form gradients.
"""

from __future__ import annotations

import numpy as np

__all__ = ["central_difference", "central_difference_matrix", "max_relative_error"]


def central_difference(f, x, h: float = 1e-6) -> np.ndarray:
    """Gradient of scalar f at vector x by central differences."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step.flat[i] = h
        grad.flat[i] = (f(x + step) - f(x - step)) / (2.0 * h)
    return grad


def central_difference_matrix(f, X, h: float = 1e-6) -> np.ndarray:
    """Entrywise central differences of scalar f over a matrix argument."""
    X = np.asarray(X, dtype=float)
    grad = np.zeros_like(X)
    it = np.nditer(X, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        step = np.zeros_like(X)
        step[idx] = h
        grad[idx] = (f(X + step) - f(X - step)) / (2.0 * h)
        it.iternext()
    return grad


def max_relative_error(analytic, reference) -> float:
    """max |a - r| scaled by max(1, ||r||_inf); 0 means exact agreement."""
    analytic = np.asarray(analytic, dtype=float)
    reference = np.asarray(reference, dtype=float)
    scale = max(1.0, float(np.max(np.abs(reference), initial=0.0)))
    return float(np.max(np.abs(analytic - reference), initial=0.0)) / scale
