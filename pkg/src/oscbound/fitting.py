"""Power-law decay fits in log-log coordinates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    stderr: float
    n_points: int

    def predict(self, lam):
        return np.exp(self.intercept) * np.asarray(lam, dtype=float) ** self.slope


def decay_fit(samples) -> DecayFit:
    """Least-squares fit of ``log(value)`` against ``log(lam)``.

    ``samples`` is a sequence of ``(lam, value)`` pairs with both entries
    positive.  The slope estimates the decay exponent.
    """
    arr = np.asarray(list(samples), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("samples must be (lambda, value) pairs")
    if arr.shape[0] < 3:
        raise ValueError("need at least three samples")
    lam, val = arr[:, 0], arr[:, 1]
    if np.any(lam <= 0) or np.any(val <= 0) or not np.all(np.isfinite(arr)):
        raise ValueError("lambda and values must be positive and finite")
    x, y = np.log(lam), np.log(val)
    if np.ptp(x) == 0:
        raise ValueError("need at least two distinct lambda values")
    res = stats.linregress(x, y)
    stderr = float(res.stderr) if np.isfinite(res.stderr) else 0.0
    return DecayFit(float(res.slope), float(res.intercept), max(stderr, 0.0), int(arr.shape[0]))


def trend_slope(lams, values) -> float:
    """Slope of ``log(values)`` against ``log(lams)``; a convenience wrapper."""
    return decay_fit(zip(lams, values)).slope


def dyadic_grid(start: int, stop: int, base: float = 2.0) -> list[float]:
    """``base**k`` for ``k = start..stop`` inclusive."""
    return [float(base) ** k for k in range(int(start), int(stop) + 1)]
