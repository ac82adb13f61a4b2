"""Matrix exponential and the trace-exponential acyclicity function."""
from __future__ import annotations

import math

import numpy as np

EXPM_TOL = 1e-12


def expm(a: np.ndarray, tol: float = EXPM_TOL) -> np.ndarray:
    """Matrix exponential by scaling and squaring a truncated Taylor series.

    The matrix is scaled by ``2**-s`` so its 1-norm is at most 1/2, and the
    series is cut once the tail bound drops below ``tol * 2**-s``; the
    squarings then amplify the truncation error by at most ``2**s``.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    norm = np.abs(a).sum(axis=0).max() if n else 0.0
    s = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    b = a / (2.0**s)
    theta = norm / (2.0**s)
    target = tol * 2.0**-s
    result = np.eye(n)
    term = np.eye(n)
    k = 0
    while True:
        k += 1
        term = term @ b / k
        result = result + term
        # tail after term k: sum_{j>k} theta^j / j! <= theta^(k+1)/(k+1)! / (1 - theta/(k+2))
        tail = theta ** (k + 1) / math.factorial(k + 1) / (1.0 - theta / (k + 2))
        if tail <= target or not term.any():
            break
    for _ in range(s):
        result = result @ result
    return result


def acyclicity_h(w: np.ndarray) -> tuple[float, np.ndarray]:
    """``h(W) = tr(exp(W * W)) - d`` and its gradient ``exp(W * W).T * 2W``."""
    w = np.asarray(w, dtype=float)
    e = expm(w * w)
    value = float(np.trace(e) - w.shape[0])
    grad = e.T * w * 2.0
    return value, grad
