"""Scalar numerical primitives: binary entropy, its inverse, Poisson statistics.

All Poisson quantities are evaluated in log space so that intensities of the
order of ``L * mu ~ 1e5`` never overflow a factorial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

# Terms smaller than this fraction of the largest term are dropped from sums.
TRUNCATION_REL = 1e-18

_INVERSE_MAX_ITER = 200


def _check_probability(x: float, name: str) -> None:
    if not 0.0 <= x <= 1.0 or math.isnan(x):
        raise ValueError(f"{name}={x} must be in [0, 1]")


def binary_entropy(x: float) -> float:
    """Binary Shannon entropy in bits, with ``0 log 0 = 0``.

    >>> binary_entropy(0.5)
    1.0
    >>> binary_entropy(0.0)
    0.0
    """
    _check_probability(x, "x")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def binary_entropy_array(x: np.ndarray) -> np.ndarray:
    """Vectorised :func:`binary_entropy`; inputs must already lie in [0, 1]."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > 0.0) & (x < 1.0)
    xi = x[inside]
    out[inside] = -xi * np.log2(xi) - (1.0 - xi) * np.log2(1.0 - xi)
    return out


def inverse_binary_entropy(y: float, tol: float = 1e-15) -> float:
    """Return the unique ``x`` in [0, 1/2] with ``binary_entropy(x) == y``.

    Plain bisection on the increasing branch. Converges to ``tol`` in about
    50 halvings; the iteration cap is only a safety net.
    """
    _check_probability(y, "y")
    if y == 0.0:
        return 0.0
    if y == 1.0:
        return 0.5
    lo, hi = 0.0, 0.5
    for _ in range(_INVERSE_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if binary_entropy(mid) < y:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi)


def _check_lambda(lam: float) -> None:
    if lam < 0 or math.isnan(lam):
        raise ValueError(f"lambda={lam} must be non-negative")


def log_poisson_pmf(lam: float, n):
    """Natural log of ``exp(-lam) lam**n / n!``; works on scalars and arrays."""
    n = np.asarray(n, dtype=float)
    if lam == 0.0:
        return np.where(n == 0, 0.0, -np.inf)
    return -lam + n * math.log(lam) - gammaln(n + 1.0)


def poisson_pmf(lam: float, n: int) -> float:
    """Poisson probability of exactly ``n`` events at mean ``lam``."""
    _check_lambda(lam)
    if n < 0:
        raise ValueError(f"n={n} must be non-negative")
    if lam == 0.0:
        return 1.0 if n == 0 else 0.0
    return math.exp(-lam + n * math.log(lam) - math.lgamma(n + 1))


def poisson_tail_above(lam: float, n_th: int, rel: float = TRUNCATION_REL) -> float:
    """Probability of strictly more than ``n_th`` events.

    Above the mean the tail is summed directly (terms shrink geometrically);
    below it the complement ``1 - P(N <= n_th)`` is summed downwards. Either
    way the sum stops once a term falls under ``rel`` times the running sum.
    """
    _check_lambda(lam)
    if n_th < 0:
        return 1.0
    if lam == 0.0:
        return 0.0
    if n_th + 1 >= lam:
        term = poisson_pmf(lam, n_th + 1)
        total = 0.0
        k = n_th + 1
        while term > 0.0:
            total += term
            if term < rel * total:
                break
            k += 1
            term *= lam / k
        return min(max(total, 0.0), 1.0)
    term = poisson_pmf(lam, n_th)
    total = 0.0
    k = n_th
    while term > 0.0:
        total += term
        if term < rel * total or k == 0:
            break
        term *= k / lam
        k -= 1
    return min(max(1.0 - total, 0.0), 1.0)


@dataclass(frozen=True)
class PoissonWindow:
    """Poisson weights on the contiguous range of ``n`` that carries the mass.

    ``mass_below`` and ``mass_above`` are upper bounds on the probability
    dropped on either side; bound-preserving callers charge them full
    entropy.
    """

    lam: float
    n: np.ndarray
    pmf: np.ndarray
    mass_below: float
    mass_above: float

    @property
    def truncated(self) -> float:
        return self.mass_below + self.mass_above

    def tail_above(self) -> np.ndarray:
        """``P(N > n)`` for every ``n`` in the window."""
        suffix = np.cumsum(self.pmf[::-1])[::-1]
        tails = np.empty_like(self.pmf)
        tails[:-1] = suffix[1:]
        tails[-1] = 0.0
        return tails + self.mass_above


def poisson_window(lam: float, rel: float = TRUNCATION_REL) -> PoissonWindow:
    """Build the window of ``n`` whose pmf exceeds ``rel`` times the mode."""
    _check_lambda(lam)
    if lam == 0.0:
        return PoissonWindow(lam, np.array([0]), np.array([1.0]), 0.0, 0.0)
    mode = math.floor(lam)
    sigma = math.sqrt(lam)
    lo = max(0, int(mode - 12.0 * sigma - 50))
    hi = int(mode + 12.0 * sigma + 60)
    n = np.arange(lo, hi + 1)
    logp = log_poisson_pmf(lam, n)
    keep = logp - logp.max() >= math.log(rel)
    idx = np.flatnonzero(keep)
    n = n[idx[0] : idx[-1] + 1]
    logp = logp[idx[0] : idx[-1] + 1]
    pmf = np.exp(logp)

    n_lo, n_hi = int(n[0]), int(n[-1])
    # Geometric bounds: the pmf ratio is n/lam going down, lam/(n+1) going up.
    mass_below = 0.0
    if n_lo > 0:
        r = (n_lo - 1) / lam
        first = math.exp(float(log_poisson_pmf(lam, n_lo - 1)))
        mass_below = first / (1.0 - r) if r < 1.0 else first * n_lo
    ratio = lam / (n_hi + 2)
    first = math.exp(float(log_poisson_pmf(lam, n_hi + 1)))
    mass_above = first / (1.0 - ratio) if ratio < 1.0 else first * 1e3
    return PoissonWindow(lam, n, pmf, min(mass_below, 1.0), min(mass_above, 1.0))
