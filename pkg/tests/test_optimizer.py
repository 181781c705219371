import math

import numpy as np
import pytest

from rrdps.channel import GYS, BackgroundScenario, ChannelParams, transmittance
from rrdps.keyrate import EstimatorKind, InfeasibleError, ProtocolConfig, rrdps_rate
from rrdps.optimizer import (
    analytic_eta_min,
    bb84_max_distance,
    bb84_optimize_mu,
    eta_min_floor,
    golden_section_max,
    max_distance,
    maximize_log_scan,
    optimize_L_mu,
    optimize_mu,
    optimize_mu_eta_min,
    threshold_ebit,
)


def dense_grid_max(L, d, estimator, points=4096):
    mus = np.geomspace(1e-6, 0.5, points)
    rates = [rrdps_rate(ProtocolConfig(L, float(m)), d, GYS, estimator).R for m in mus]
    i = int(np.argmax(rates))
    return float(mus[i]), rates[i]


def test_golden_section_on_parabola():
    x, fx, n = golden_section_max(lambda t: -(t - 0.3) ** 2, 0.0, 1.0, 1e-8)
    assert x == pytest.approx(0.3, abs=1e-8)
    assert n < 60


def test_log_scan_finds_narrow_secondary_peak():
    # the peak falls between grid points, where a plateau at the low end
    # beats it; only refining every local maximum recovers it
    def f(x):
        return math.exp(-((math.log(x) - math.log(0.01)) ** 2) / 0.25) + 0.95 * (x < 1e-5)

    x, v, _, _ = maximize_log_scan(f, 1e-6, 1.0, points=32, rel_tol=1e-8)
    assert v > 0.99
    assert x == pytest.approx(0.01, rel=1e-3)


def test_optimize_mu_matches_dense_grid_at_50km():
    mu_ref, r_ref = dense_grid_max(32, 50.0, EstimatorKind.DECOY)
    opt = optimize_mu(32, 50.0, GYS, EstimatorKind.DECOY)
    assert opt.best_rate >= r_ref * (1 - 1e-6)
    assert opt.best_mu == pytest.approx(mu_ref, rel=0.01)
    assert opt.feasible and opt.best_L == 32


@pytest.mark.parametrize("estimator", list(EstimatorKind))
@pytest.mark.parametrize("d", [0.0, 30.0, 75.0])
def test_optimize_mu_never_loses_to_coarse_grid(estimator, d):
    opt = optimize_mu(32, d, GYS, estimator, trace=True)
    assert len(opt.objective_trace) == 64
    grid_best = max(v for _, v in opt.objective_trace)
    assert opt.best_signed_rate >= grid_best


def test_optimize_mu_infeasible_point():
    opt = optimize_mu(32, 300.0, GYS)
    assert not opt.feasible
    assert opt.best_rate == 0.0


def test_optimize_L_mu_prefers_smaller_L_on_ties():
    opt = optimize_L_mu(300.0, GYS, L_grid=[64, 8, 16])
    assert opt.best_rate == 0.0
    with pytest.raises(ValueError):
        optimize_L_mu(10.0, GYS, L_grid=[])


def test_max_distance_decoy_L32():
    sol = max_distance(GYS, EstimatorKind.DECOY, L=32)
    assert 135.0 <= sol.max_distance <= 145.0
    assert not sol.unbounded
    assert optimize_mu(32, sol.max_distance, GYS).best_rate > 0.0
    assert optimize_mu(32, sol.max_distance + sol.tolerance, GYS).best_rate == 0.0
    assert sol.eta_min == pytest.approx(transmittance(sol.max_distance, GYS))


@pytest.mark.parametrize("estimator,expected", [("syk", 77.96), ("tagging", 85.24), ("decoy", 135.00)])
def test_max_distance_regression_anchors(estimator, expected):
    sol = max_distance(GYS, estimator, L=32)
    assert sol.max_distance == pytest.approx(expected, abs=0.1)


def test_max_distance_bracketing_invariant():
    sol = max_distance(GYS, EstimatorKind.TAGGING, L=32, tol=0.5)
    assert optimize_mu(32, sol.max_distance, GYS, "tagging").best_rate > 0.0
    assert optimize_mu(32, sol.max_distance + 0.5, GYS, "tagging").best_rate == 0.0


def test_max_distance_unbounded_flag():
    sol = max_distance(ChannelParams(y0=0.0, e_d=0.0), L=32, d_max=500.0)
    assert sol.unbounded
    assert sol.max_distance == 500.0


def test_max_distance_infeasible_at_origin():
    with pytest.raises(InfeasibleError):
        max_distance(ChannelParams(e_d=0.45), L=32)


@pytest.mark.slow
def test_optimal_L_for_no_decoy_estimators():
    for estimator in ("tagging", "syk"):
        sol = max_distance(GYS, estimator, L="optimize", tol=0.5)
        assert sol.max_distance == pytest.approx(140.0, abs=5.0)
        assert 10**3.5 <= sol.L <= 10**4.5


def test_threshold_ebit():
    c = threshold_ebit(0.06, 10**4)
    from rrdps.numerics import binary_entropy

    assert binary_entropy(c) == pytest.approx(1 - binary_entropy(0.06 * 10**4 / (10**4 - 1)), abs=1e-12)
    with pytest.raises(InfeasibleError):
        threshold_ebit(0.6, 32)


def test_eta_min_L_independent_scaling():
    vals = []
    for L in (10**3, 10**4, 10**5):
        opt = optimize_mu_eta_min(L, GYS, BackgroundScenario.L_INDEPENDENT)
        assert opt.best_mu == pytest.approx(0.06, abs=0.01)
        vals.append(-opt.best_rate)
    assert max(vals) / min(vals) - 1 < 0.01


def test_eta_min_exact_solves_threshold():
    from rrdps.channel import qber

    em = analytic_eta_min(0.05, 1000, GYS, BackgroundScenario.L_INDEPENDENT)
    assert qber(50.0, em.exact, em.Y0, GYS.e_d) == pytest.approx(em.threshold_c, rel=1e-10)
    assert em.exact == pytest.approx(em.approx, rel=0.05)


@pytest.mark.parametrize("L", [10**3, 10**4, 10**5])
def test_eta_min_above_floor_L_dependent(L):
    em = analytic_eta_min(0.05, L, GYS, BackgroundScenario.L_DEPENDENT)
    floor = eta_min_floor(0.05, L, GYS)
    assert em.approx >= floor
    assert em.exact >= floor


def test_bb84_baseline_distance():
    d = bb84_max_distance(GYS)
    assert d == pytest.approx(140.0, abs=10.0)
    assert bb84_optimize_mu(d - 0.5, GYS).best_rate > 0
    assert bb84_optimize_mu(d + 0.5, GYS).best_rate == 0
