"""Per-photon-number phase-error estimates for an L-pulse train.

``syk_bound`` is the worst-case bound used by every key-rate estimator.
``independent_bound`` assumes the channel keeps the n photons independent;
it is only used for comparison tables, never for security-facing rates.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

MAX_ORACLE_N = 30


class PhaseErrorMethod(str, enum.Enum):
    SYK = "syk"
    INDEPENDENT = "independent"


@dataclass(frozen=True)
class PhaseErrorBound:
    value: float
    n: int
    L: int
    method: PhaseErrorMethod


def _check_L(L: int) -> None:
    if L < 2:
        raise ValueError(f"L={L} must be at least 2")


def syk_bound(n: int, L: int) -> float:
    """``min(n / (L - 1), 1/2)``."""
    _check_L(L)
    if n < 0:
        raise ValueError(f"n={n} must be non-negative")
    return min(n / (L - 1), 0.5)


def independent_bound(n: int, L: int) -> float:
    """Odd-photon probability of one pulse when n photons land uniformly.

    Equals ``(1 - (1 - 2/L)**n) / 2``; computed with ``expm1``/``log1p`` so
    that ``n = 1`` returns exactly ``1/L`` up to rounding.
    """
    _check_L(L)
    if n < 0:
        raise ValueError(f"n={n} must be non-negative")
    if L == 2:
        return 0.0 if n == 0 else 0.5
    return -0.5 * math.expm1(n * math.log1p(-2.0 / L))


def independent_bound_oracle(n: int, L: int) -> float:
    """Brute-force binomial sum over odd photon counts in one pulse."""
    _check_L(L)
    if n > MAX_ORACLE_N:
        raise ValueError(f"n={n} exceeds oracle scale limit {MAX_ORACLE_N}")
    p = 1.0 / L
    return math.fsum(
        math.comb(n, k) * p**k * (1.0 - p) ** (n - k) for k in range(1, n + 1, 2)
    )


def large_n_approx(n: int, L: int) -> float:
    """Large-``n`` form ``1/2 - exp(-2n/L)``."""
    _check_L(L)
    return 0.5 - math.exp(-2.0 * n / L)


def small_n_reciprocal_approx(n: int, L: int) -> float:
    """Approximate ``1 / independent_bound(n, L)`` as ``1 + L/n`` for n << L."""
    if n <= 0:
        raise ValueError("reciprocal approximation needs n >= 1")
    _check_L(L)
    return 1.0 + L / n


def bound(n: int, L: int, method: PhaseErrorMethod = PhaseErrorMethod.SYK) -> PhaseErrorBound:
    method = PhaseErrorMethod(method)
    fn = syk_bound if method is PhaseErrorMethod.SYK else independent_bound
    return PhaseErrorBound(fn(n, L), n, L, method)
