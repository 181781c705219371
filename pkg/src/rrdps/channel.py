"""Fiber channel and threshold-detector model.

Yields and error rates assume the eavesdropper leaves photon-number
statistics untouched: each photon survives independently with the overall
transmittance and background clicks are uniformly random.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class BackgroundScenario(str, enum.Enum):
    """How the per-train background rate depends on the pulse count ``L``."""

    L_INDEPENDENT = "l-independent"
    L_DEPENDENT = "l-dependent"


@dataclass(frozen=True)
class ChannelParams:
    """Detector and fiber parameters (defaults: the GYS system)."""

    eta_d: float = 0.045
    alpha: float = 0.2
    e_d: float = 0.033
    y0: float = 1.7e-6
    e0: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.eta_d <= 1.0:
            raise ValueError(f"eta_d={self.eta_d} must be in (0, 1]")
        if self.alpha < 0.0 or math.isnan(self.alpha):
            raise ValueError(f"alpha={self.alpha} must be non-negative")
        for name in ("e_d", "y0", "e0"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} must be in [0, 1]")


GYS = ChannelParams()


@dataclass(frozen=True)
class ChannelPoint:
    eta: float
    Y0: float
    distance: float


def transmittance(distance: float, params: ChannelParams) -> float:
    """Overall transmittance ``eta_d * 10**(-alpha * distance / 10)``."""
    if distance < 0 or math.isnan(distance):
        raise ValueError(f"distance={distance} must be non-negative")
    return params.eta_d * 10.0 ** (-params.alpha * distance / 10.0)


def distance_for_transmittance(eta: float, params: ChannelParams) -> float:
    """Inverse of :func:`transmittance`; ``inf`` for ``eta == 0``."""
    if not 0.0 <= eta <= params.eta_d:
        raise ValueError(f"eta={eta} must be in [0, eta_d]")
    if eta == 0.0:
        return math.inf
    if params.alpha == 0.0:
        return 0.0 if eta == params.eta_d else math.inf
    return 10.0 * math.log10(params.eta_d / eta) / params.alpha


def background_total(L: int, scenario: BackgroundScenario, y0: float) -> float:
    """Background click probability for a whole ``L``-pulse train.

    In the L-dependent scenario this is ``1 - (1 - y0)**L``, evaluated as
    ``-expm1(L * log1p(-y0))`` to keep full precision at ``L ~ 1e5``.
    """
    if L < 1:
        raise ValueError(f"L={L} must be a positive integer")
    scenario = BackgroundScenario(scenario)
    if scenario is BackgroundScenario.L_INDEPENDENT:
        return y0
    if y0 == 1.0:
        return 1.0
    return -math.expm1(L * math.log1p(-y0))


def channel_point(
    distance: float, L: int, params: ChannelParams, scenario: BackgroundScenario
) -> ChannelPoint:
    return ChannelPoint(
        eta=transmittance(distance, params),
        Y0=background_total(L, scenario, params.y0),
        distance=distance,
    )


def _no_click_photons(n, eta: float):
    # (1 - eta)**n, accurate for small eta
    if eta >= 1.0:
        return np.where(np.asarray(n) == 0, 1.0, 0.0)
    return np.exp(np.asarray(n, dtype=float) * math.log1p(-eta))


def yield_n(n, eta: float, Y0: float):
    """Detection probability given ``n`` photons were sent.

    Accepts a scalar or an array of photon numbers.
    """
    y = 1.0 - (1.0 - Y0) * _no_click_photons(n, eta)
    return float(y) if np.ndim(y) == 0 else y


def error_times_yield_n(n, eta: float, Y0: float, e_d: float, e0: float = 0.5):
    """``e_n * Y_n``; defined even where the yield vanishes."""
    ey = e0 * Y0 + e_d * (1.0 - Y0) * (1.0 - _no_click_photons(n, eta))
    return float(ey) if np.ndim(ey) == 0 else ey


def error_n(n: int, eta: float, Y0: float, e_d: float, e0: float = 0.5) -> float:
    """Error rate of detections caused by ``n``-photon emissions."""
    y = yield_n(n, eta, Y0)
    if y <= 0.0:
        raise ZeroDivisionError(f"error rate undefined: zero yield for n={n}")
    return error_times_yield_n(n, eta, Y0, e_d, e0) / y


def _signal_click(L_mu: float, eta: float) -> float:
    return -math.expm1(-eta * L_mu)


def gain(L_mu: float, eta: float, Y0: float) -> float:
    """Overall gain ``Y0 + (1 - Y0)(1 - exp(-eta * L_mu))``."""
    if L_mu < 0:
        raise ValueError(f"L_mu={L_mu} must be non-negative")
    return Y0 + (1.0 - Y0) * _signal_click(L_mu, eta)


def qber(L_mu: float, eta: float, Y0: float, e_d: float, e0: float = 0.5) -> float:
    """Overall bit error rate of detected trains."""
    q = gain(L_mu, eta, Y0)
    if q <= 0.0:
        raise ZeroDivisionError("QBER undefined: zero gain")
    return (e0 * Y0 + e_d * (1.0 - Y0) * _signal_click(L_mu, eta)) / q
