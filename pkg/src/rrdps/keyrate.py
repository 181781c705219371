"""Privacy-amplification cost estimators and the RRDPS key rate.

Three ways to bound the privacy-amplification cost ``H_PA`` of a train with
source intensity ``L * mu`` and observed gain ``Q``:

* ``SYK``: one photon-number threshold, everything above it costs 1 bit.
* ``TAGGING``: worst-case yields assigned to the low photon numbers, each
  high photon-number class charged its own phase-error entropy.
* ``DECOY``: yields pinned by an infinite set of decoy intensities, so the
  model yields are used directly.

Every estimator charges Poisson mass dropped by truncation a full bit, so
truncation can only raise the reported cost.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np

from .channel import (
    BackgroundScenario,
    ChannelParams,
    background_total,
    error_n,
    gain,
    qber,
    transmittance,
    yield_n,
)
from .numerics import (
    TRUNCATION_REL,
    binary_entropy,
    binary_entropy_array,
    poisson_window,
)


class InfeasibleError(ValueError):
    """No valid bound exists at the requested operating point."""


class EstimatorKind(str, enum.Enum):
    SYK = "syk"
    TAGGING = "tagging"
    DECOY = "decoy"


# Default error-correction inefficiency of the BB84 comparison baseline.
BB84_EC_EFFICIENCY = 1.22


@dataclass(frozen=True)
class ProtocolConfig:
    L: int
    mu: float
    scenario: BackgroundScenario = BackgroundScenario.L_DEPENDENT

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise ValueError(f"L={self.L} must be an integer >= 2")
        if not self.mu >= 0.0:
            raise ValueError(f"mu={self.mu} must be non-negative")
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "scenario", BackgroundScenario(self.scenario))

    @classmethod
    def from_L_mu(cls, L: int, L_mu: float, scenario=BackgroundScenario.L_DEPENDENT):
        return cls(L, L_mu / L, scenario)

    @property
    def L_mu(self) -> float:
        return self.L * self.mu


@dataclass(frozen=True)
class RateBreakdown:
    """All intermediate quantities of one key-rate evaluation.

    ``margin`` is ``1 - H(e_bit) - H_PA`` before clamping and ``signed_R``
    the unclamped per-pulse rate; optimizers use them to see past zero.
    """

    L: int
    mu: float
    distance: float
    estimator: EstimatorKind
    scenario: BackgroundScenario
    eta: float
    Y0: float
    Q: float
    E: float
    e_bit: float
    H_PA: float
    n_th: int | None
    margin: float
    signed_R: float
    LR: float
    R: float
    reason: str

    @property
    def L_mu(self) -> float:
        return self.L * self.mu

    def as_dict(self) -> dict:
        d = asdict(self)
        d["estimator"] = self.estimator.value
        d["scenario"] = self.scenario.value
        d["L_mu"] = self.L_mu
        return d


def _syk_entropies(n: np.ndarray, L: int) -> np.ndarray:
    return binary_entropy_array(np.minimum(n / (L - 1), 0.5))


def _check_inputs(L_mu: float, L: int) -> None:
    if L < 2:
        raise ValueError(f"L={L} must be at least 2")
    if L_mu < 0:
        raise ValueError(f"L_mu={L_mu} must be non-negative")


def hpa_syk(L_mu: float, Q: float, L: int, rel: float = TRUNCATION_REL) -> tuple[float, int]:
    """Single-threshold bound, minimised over the threshold photon number.

    For each ``n_th`` whose Poisson tail ``P(N > n_th)`` does not exceed
    ``Q``, the cost is ``[(Q - tail) H(e_ph(n_th)) + tail] / Q``. Returns
    the smallest cost and the threshold achieving it (smallest on ties).
    """
    _check_inputs(L_mu, L)
    if not Q > 0.0:
        raise InfeasibleError("SYK bound needs a positive gain")
    w = poisson_window(L_mu, rel)
    tails = w.tail_above()
    n = w.n
    if n[0] > 0:
        # n_th = 0 is the only candidate below the window worth keeping:
        # its phase-error entropy is zero.
        tail0 = -math.expm1(-L_mu)
        n = np.concatenate(([0], n))
        tails = np.concatenate(([tail0], tails))
    ok = tails <= Q
    if not ok.any():
        raise InfeasibleError(
            f"no threshold photon number has tail <= Q={Q:.3e} at L*mu={L_mu:.3e}"
        )
    n_ok, t_ok = n[ok], tails[ok]
    cost = ((Q - t_ok) * _syk_entropies(n_ok, L) + t_ok) / Q
    i = int(np.argmin(cost))
    return float(min(max(cost[i], 0.0), 1.0)), int(n_ok[i])


def hpa_tagging(L_mu: float, Q: float, L: int, rel: float = TRUNCATION_REL) -> tuple[float, int]:
    """Tagging bound: high photon numbers pass transparently, each charged
    its own phase-error entropy; the gain left over is charged at the
    critical photon number ``n_th``."""
    _check_inputs(L_mu, L)
    if not Q > 0.0:
        raise InfeasibleError("tagging bound needs a positive gain")
    tail0 = -math.expm1(-L_mu)
    w = poisson_window(L_mu, rel)
    H = _syk_entropies(w.n, L)
    if tail0 <= Q:
        # n_th = 0 carries no phase-error entropy; every n >= 1 is tagged.
        above = w.n > 0
        total = float(np.dot(w.pmf[above], H[above])) + w.mass_below + w.mass_above
        return float(min(max(total / Q, 0.0), 1.0)), 0
    tails = w.tail_above()
    ok = np.flatnonzero(tails <= Q)
    if ok.size == 0:
        raise InfeasibleError(f"gain Q={Q:.3e} below the truncated Poisson tail")
    i = int(ok[0])
    # Below-window thresholds are never the critical one unless tail0 <= Q.
    total = (Q - tails[i]) * H[i] + float(np.dot(w.pmf[i + 1 :], H[i + 1 :]))
    total += w.mass_above
    return float(min(max(total / Q, 0.0), 1.0)), int(w.n[i])


def hpa_decoy(
    L_mu: float, L: int, eta: float, Y0: float, rel: float = TRUNCATION_REL
) -> float:
    """Cost with the no-eavesdropper yields of every photon number."""
    _check_inputs(L_mu, L)
    Q = gain(L_mu, eta, Y0)
    if Q <= 0.0:
        raise ZeroDivisionError("decoy cost undefined: zero gain")
    w = poisson_window(L_mu, rel)
    total = float(np.dot(w.pmf * yield_n(w.n, eta, Y0), _syk_entropies(w.n, L)))
    total += w.truncated
    return min(max(total / Q, 0.0), 1.0)


def rrdps_rate(
    config: ProtocolConfig,
    distance: float,
    params: ChannelParams,
    estimator: EstimatorKind = EstimatorKind.DECOY,
    rel: float = TRUNCATION_REL,
) -> RateBreakdown:
    """Per-pulse secure key rate ``R = Q [1 - H(e_bit) - H_PA] / L``.

    The bit error rate is the modelled QBER. Negative rates are clamped to
    zero and ``reason`` says why.
    """
    estimator = EstimatorKind(estimator)
    L, L_mu = config.L, config.L_mu
    eta = transmittance(distance, params)
    Y0 = background_total(L, config.scenario, params.y0)
    Q = gain(L_mu, eta, Y0)
    common = dict(
        L=L, mu=config.mu, distance=distance, estimator=estimator,
        scenario=config.scenario, eta=eta, Y0=Y0, Q=Q,
    )
    if Q <= 0.0:
        return RateBreakdown(
            **common, E=params.e0, e_bit=params.e0, H_PA=1.0, n_th=None,
            margin=-1.0, signed_R=0.0, LR=0.0, R=0.0, reason="no_gain",
        )
    E = qber(L_mu, eta, Y0, params.e_d, params.e0)
    e_bit = min(E, 1.0)
    n_th = None
    reason = "ok"
    try:
        if estimator is EstimatorKind.SYK:
            H_PA, n_th = hpa_syk(L_mu, Q, L, rel)
        elif estimator is EstimatorKind.TAGGING:
            H_PA, n_th = hpa_tagging(L_mu, Q, L, rel)
        else:
            H_PA = hpa_decoy(L_mu, L, eta, Y0, rel)
    except InfeasibleError:
        H_PA, reason = 1.0, "no_threshold"
    margin = 1.0 - binary_entropy(e_bit) - H_PA
    signed_LR = Q * margin
    LR = max(0.0, signed_LR)
    if LR == 0.0 and reason == "ok":
        reason = "ebit_too_high" if e_bit >= 0.5 else "privacy_cost"
    return RateBreakdown(
        **common, E=E, e_bit=e_bit, H_PA=H_PA, n_th=n_th, margin=margin,
        signed_R=signed_LR / L, LR=LR, R=LR / L, reason=reason,
    )


def bb84_decoy_signed_rate(
    mu: float,
    distance: float,
    params: ChannelParams,
    ec_efficiency: float = BB84_EC_EFFICIENCY,
    sifting: float = 1.0,
) -> float:
    """Unclamped infinite-decoy BB84 rate per pulse (see :func:`bb84_decoy_rate`)."""
    if not mu > 0.0:
        raise ValueError(f"mu={mu} must be positive")
    eta = transmittance(distance, params)
    y0 = params.y0
    Q = gain(mu, eta, y0)
    E = qber(mu, eta, y0, params.e_d, params.e0)
    Q1 = mu * math.exp(-mu) * yield_n(1, eta, y0)
    e1 = min(error_n(1, eta, y0, params.e_d, params.e0), 0.5)
    return sifting * (Q1 * (1.0 - binary_entropy(e1)) - ec_efficiency * Q * binary_entropy(min(E, 1.0)))


def bb84_decoy_rate(
    mu: float,
    distance: float,
    params: ChannelParams,
    ec_efficiency: float = BB84_EC_EFFICIENCY,
    sifting: float = 1.0,
) -> float:
    """Asymptotic decoy-state BB84 rate with single-photon quantities from
    the same channel model at intensity ``mu`` and background ``y0``.

    ``ec_efficiency`` multiplies the error-correction leakage; the default
    1.22 is the customary value for the GYS comparison.
    """
    return max(0.0, bb84_decoy_signed_rate(mu, distance, params, ec_efficiency, sifting))
