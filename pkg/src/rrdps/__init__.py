"""Secure-key-rate analysis of round-robin differential-phase-shift QKD."""

from .channel import GYS, BackgroundScenario, ChannelParams
from .keyrate import (
    EstimatorKind,
    InfeasibleError,
    ProtocolConfig,
    RateBreakdown,
    bb84_decoy_rate,
    hpa_decoy,
    hpa_syk,
    hpa_tagging,
    rrdps_rate,
)
from .optimizer import max_distance, optimize_L_mu, optimize_mu

__all__ = [
    "GYS",
    "BackgroundScenario",
    "ChannelParams",
    "EstimatorKind",
    "InfeasibleError",
    "ProtocolConfig",
    "RateBreakdown",
    "bb84_decoy_rate",
    "hpa_decoy",
    "hpa_syk",
    "hpa_tagging",
    "max_distance",
    "optimize_L_mu",
    "optimize_mu",
    "rrdps_rate",
]

__version__ = "0.1.0"
