import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from rrdps.channel import GYS, BackgroundScenario, ChannelParams, gain, transmittance
from rrdps.keyrate import (
    EstimatorKind,
    InfeasibleError,
    ProtocolConfig,
    bb84_decoy_rate,
    hpa_decoy,
    hpa_syk,
    hpa_tagging,
    rrdps_rate,
)
from rrdps.numerics import binary_entropy


def mp_h(x):
    x = mpmath.mpf(x)
    if x == 0:
        return mpmath.mpf(0)
    return -(x * mpmath.log(x, 2) + (1 - x) * mpmath.log(1 - x, 2))


def mp_decoy_cost(L_mu, L, eta, Y0, terms=200):
    lam = mpmath.mpf(L_mu)
    total = mpmath.mpf(0)
    Q = mpmath.mpf(Y0) + (1 - mpmath.mpf(Y0)) * (1 - mpmath.exp(-mpmath.mpf(eta) * lam))
    for n in range(terms):
        p = mpmath.exp(-lam) * lam**n / mpmath.factorial(n)
        y = 1 - (1 - mpmath.mpf(Y0)) * (1 - mpmath.mpf(eta)) ** n
        total += p * y * mp_h(min(mpmath.mpf(n) / (L - 1), mpmath.mpf("0.5")))
    return float(total / Q)


def mp_tail(lam, n_th):
    lam = mpmath.mpf(lam)
    return 1 - mpmath.fsum(mpmath.exp(-lam) * lam**k / mpmath.factorial(k) for k in range(n_th + 1))


def mp_syk_cost(L_mu, Q, L):
    best = None
    for n_th in range(0, 200):
        t = mp_tail(L_mu, n_th)
        if t > Q:
            continue
        e = min(mpmath.mpf(n_th) / (L - 1), mpmath.mpf("0.5"))
        c = ((Q - t) * mp_h(e) + t) / Q
        if best is None or c < best[0]:
            best = (c, n_th)
    return float(best[0]), best[1]


@pytest.mark.parametrize("L,mu,d", [(32, 0.05, 50.0), (32, 0.02, 120.0), (1000, 1e-4, 10.0), (4, 0.2, 0.0)])
def test_decoy_cost_against_series(L, mu, d):
    eta = transmittance(d, GYS)
    Y0 = 1 - (1 - GYS.y0) ** L
    assert hpa_decoy(L * mu, L, eta, Y0) == pytest.approx(mp_decoy_cost(L * mu, L, eta, Y0), rel=1e-9)


@pytest.mark.parametrize("L,mu,d", [(32, 0.05, 10.0), (32, 0.02, 40.0), (64, 0.01, 5.0)])
def test_syk_cost_against_series(L, mu, d):
    eta = transmittance(d, GYS)
    Y0 = 1 - (1 - GYS.y0) ** L
    Q = gain(L * mu, eta, Y0)
    cost, n_th = hpa_syk(L * mu, Q, L)
    ref, ref_n = mp_syk_cost(L * mu, Q, L)
    assert cost == pytest.approx(ref, rel=1e-9)
    assert n_th == ref_n


def test_tagging_critical_photon_number():
    # Q between P(N>1) and P(N>0): threshold 1, tagged n >= 2
    L_mu, L = 0.5, 32
    t0, t1 = float(mp_tail(L_mu, 0)), float(mp_tail(L_mu, 1))
    Q = 0.5 * (t0 + t1)
    cost, n_th = hpa_tagging(L_mu, Q, L)
    assert n_th == 1
    ref = (Q - t1) * binary_entropy(1 / 31)
    ref += sum(
        float(mpmath.exp(-L_mu) * mpmath.mpf(L_mu) ** n / mpmath.factorial(n)) * binary_entropy(min(n / 31, 0.5))
        for n in range(2, 60)
    )
    assert cost == pytest.approx(ref / Q, rel=1e-9)


def test_tagging_zero_threshold_when_gain_exceeds_multi_photon_mass():
    cost, n_th = hpa_tagging(0.01, 0.5, 32)
    assert n_th == 0
    assert cost < 0.01


def test_syk_infeasible_when_gain_below_every_tail():
    with pytest.raises(InfeasibleError):
        hpa_syk(50.0, 1e-30, 32)
    with pytest.raises(InfeasibleError):
        hpa_syk(0.5, 0.0, 32)


cost_inputs = st.tuples(
    st.floats(1e-4, 5.0),  # L*mu
    st.floats(1e-5, 0.5),  # eta
    st.floats(0.0, 0.05),  # Y0
    st.sampled_from([4, 8, 32, 100, 1024]),
)


@settings(max_examples=150, deadline=None)
@given(cost_inputs)
def test_estimator_dominance(args):
    L_mu, eta, Y0, L = args
    Q = gain(L_mu, eta, Y0)
    assume(Q > 1e-12)
    dec = hpa_decoy(L_mu, L, eta, Y0)
    tag, _ = hpa_tagging(L_mu, Q, L)
    try:
        syk, _ = hpa_syk(L_mu, Q, L)
    except InfeasibleError:
        syk = 1.0
    assert dec <= tag + 1e-12
    assert tag <= syk + 1e-12


@settings(max_examples=150, deadline=None)
@given(st.floats(1e-3, 4.0), st.sampled_from([8, 32, 256]), st.integers(0, 2**32 - 1))
def test_tagging_dominates_any_yield_assignment(L_mu, L, seed):
    """Any yields consistent with the observed gain cost at most the tagging bound."""
    rng = np.random.default_rng(seed)
    n = np.arange(80)
    p = np.array([math.exp(-L_mu + k * math.log(L_mu) - math.lgamma(k + 1)) for k in n])
    Y = rng.random(80) ** rng.uniform(0.2, 5.0)
    Q = float(np.dot(p, Y))
    assume(Q > 1e-9)
    H = np.array([binary_entropy(min(k / (L - 1), 0.5)) for k in n])
    cost = float(np.dot(p * Y, H)) / Q
    tag, _ = hpa_tagging(L_mu, Q, L)
    assert cost <= tag + 1e-10


@pytest.mark.parametrize("L,L_mu", [(32, 1.6), (1000, 0.5), (220000, 0.77), (4096, 300.0)])
def test_truncation_only_raises_cost(L, L_mu):
    eta, Y0 = 1e-3, 1e-3
    Q = gain(L_mu, eta, Y0)
    fine = hpa_decoy(L_mu, L, eta, Y0, rel=1e-18)
    for rel in (1e-12, 1e-8, 1e-4):
        assert hpa_decoy(L_mu, L, eta, Y0, rel=rel) >= fine - 1e-15
        assert hpa_tagging(L_mu, Q, L, rel=rel)[0] >= hpa_tagging(L_mu, Q, L)[0] - 1e-15


def test_table2_point():
    params = ChannelParams(eta_d=0.9, alpha=0.2, e_d=0.485, y0=1.7e-6)
    b = rrdps_rate(ProtocolConfig.from_L_mu(220000, 0.77), 1.0, params, EstimatorKind.DECOY)
    assert b.Y0 == pytest.approx(0.3120233069, abs=1e-9)
    assert b.e_bit == pytest.approx(0.4923, abs=1e-4)
    assert b.R == pytest.approx(2.265e-10, rel=0.2)
    assert b.reason == "ok"


def test_rate_formula_consistency():
    b = rrdps_rate(ProtocolConfig(32, 0.05), 50.0, GYS, "decoy")
    assert b.LR == pytest.approx(b.Q * (1 - binary_entropy(b.e_bit) - b.H_PA))
    assert b.R == pytest.approx(b.LR / 32)
    assert b.L_mu == pytest.approx(1.6)
    assert b.as_dict()["estimator"] == "decoy"


def test_rate_clamped_with_reason():
    b = rrdps_rate(ProtocolConfig(32, 0.05), 300.0, GYS, "decoy")
    assert b.R == 0.0 and b.signed_R < 0.0
    assert b.reason == "privacy_cost"
    high = rrdps_rate(ProtocolConfig(32, 0.05), 10.0, ChannelParams(e_d=0.6), "decoy")
    assert high.R == 0.0 and high.reason == "ebit_too_high"
    none = rrdps_rate(ProtocolConfig(32, 0.0), 10.0, ChannelParams(y0=0.0), "decoy")
    assert none.reason == "no_gain"


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 150.0), st.floats(1e-3, 0.3))
def test_rate_ordering_at_fixed_mu(d, mu):
    R = {e: rrdps_rate(ProtocolConfig(32, mu), d, GYS, e).R for e in EstimatorKind}
    assert R[EstimatorKind.DECOY] >= R[EstimatorKind.TAGGING] - 1e-18
    assert R[EstimatorKind.TAGGING] >= R[EstimatorKind.SYK] - 1e-18


def test_protocol_config_validation():
    with pytest.raises(ValueError):
        ProtocolConfig(1, 0.1)
    with pytest.raises(ValueError):
        ProtocolConfig(32, -0.1)
    assert ProtocolConfig(32.0, 0.1).L == 32


def test_bb84_baseline():
    assert bb84_decoy_rate(0.5, 0.0, GYS) > 1e-3
    assert bb84_decoy_rate(0.5, 200.0, GYS) == 0.0
    assert bb84_decoy_rate(0.5, 100.0, ChannelParams(e_d=0.25)) == 0.0
    with pytest.raises(ValueError):
        bb84_decoy_rate(0.0, 10.0, GYS)
