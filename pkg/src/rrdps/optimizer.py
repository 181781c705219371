"""Intensity / pulse-count optimization and maximal-distance solving."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .channel import (
    BackgroundScenario,
    ChannelParams,
    background_total,
    distance_for_transmittance,
    qber,
    transmittance,
)
from .keyrate import (
    BB84_EC_EFFICIENCY,
    EstimatorKind,
    InfeasibleError,
    ProtocolConfig,
    bb84_decoy_signed_rate,
    rrdps_rate,
)
from .numerics import binary_entropy, inverse_binary_entropy

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

MU_MIN = 1e-6
MU_MAX = 0.5
MU_GRID_POINTS = 64
MU_REL_TOL = 1e-4

DISTANCE_MAX_KM = 500.0
DISTANCE_TOL_KM = 0.05

DEFAULT_L_GRID = tuple(2**k for k in range(2, 21))


@dataclass
class OptimizationResult:
    best_mu: float
    best_rate: float
    evaluations: int
    best_L: int | None = None
    best_signed_rate: float = 0.0
    feasible: bool = True
    objective_trace: list[tuple[float, float]] = field(default_factory=list)


@dataclass
class DistanceSolution:
    max_distance: float
    eta_min: float
    threshold_c: float | None
    scenario: BackgroundScenario
    unbounded: bool = False
    L: int | None = None
    best_mu: float | None = None
    tolerance: float = DISTANCE_TOL_KM


@dataclass(frozen=True)
class EtaMin:
    """Minimal transmittance for a positive asymptotic key rate.

    ``approx`` is the small-argument closed form; ``exact`` solves
    ``qber(L*mu, eta, Y0) == c`` without linearising the exponential.
    """

    approx: float
    exact: float
    threshold_c: float
    Y0: float


def golden_section_max(
    f: Callable[[float], float], a: float, b: float, tol: float
) -> tuple[float, float, int]:
    """Maximise a unimodal ``f`` on ``[a, b]`` until the bracket is < ``tol``.

    Returns ``(x, f(x), evaluations)``.
    """
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    evals = 2
    while abs(b - a) > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
        evals += 1
    if fc >= fd:
        return c, fc, evals
    return d, fd, evals


def maximize_log_scan(
    objective: Callable[[float], float],
    lo: float = MU_MIN,
    hi: float = MU_MAX,
    points: int = MU_GRID_POINTS,
    rel_tol: float = MU_REL_TOL,
    trace: bool = False,
    max_peaks: int = 3,
) -> tuple[float, float, int, list]:
    """Coarse log-grid scan followed by golden-section refinement in log x.

    Every local maximum of the scan is refined (best ``max_peaks`` of
    them), since near the edge of feasibility the global maximum of the
    grid can sit at the wrong peak. A refined point only replaces the
    incumbent if strictly better, so the result never loses to the scan
    and ties go to smaller x.
    """
    xs = np.geomspace(lo, hi, points)
    vals = np.array([objective(float(x)) for x in xs])
    i = int(np.argmax(vals))
    best_x, best_v = float(xs[i]), float(vals[i])
    evals = points
    padded = np.concatenate(([-np.inf], vals, [-np.inf]))
    # a flat run counts once, at its left end, so plateaus cannot crowd
    # out genuine peaks
    peaks = [
        j for j in range(points)
        if padded[j + 1] > padded[j] and padded[j + 1] >= padded[j + 2]
        and np.isfinite(vals[j])
    ]
    peaks = sorted(peaks, key=lambda j: (-vals[j], j))[:max_peaks]
    for j in sorted(peaks):
        a = math.log(xs[max(j - 1, 0)])
        b = math.log(xs[min(j + 1, points - 1)])
        x, v, n = golden_section_max(lambda t: objective(math.exp(t)), a, b, math.log1p(rel_tol))
        evals += n
        if v > best_v:
            best_x, best_v = math.exp(x), v
    tr = [(float(x_), float(v_)) for x_, v_ in zip(xs, vals)] if trace else []
    return best_x, best_v, evals, tr


def optimize_mu(
    L: int,
    distance: float,
    params: ChannelParams,
    estimator: EstimatorKind = EstimatorKind.DECOY,
    scenario: BackgroundScenario = BackgroundScenario.L_DEPENDENT,
    mu_bounds: tuple[float, float] = (MU_MIN, MU_MAX),
    trace: bool = False,
) -> OptimizationResult:
    """Maximise the RRDPS rate over the per-pulse intensity.

    The search runs on the unclamped rate so that it still moves towards
    the best intensity where every candidate is infeasible; in that case
    ``feasible`` is False and ``best_rate`` is 0.
    """
    if L < 2:
        raise ValueError(f"L={L} must be at least 2")

    def objective(mu: float) -> float:
        return rrdps_rate(ProtocolConfig(L, mu, scenario), distance, params, estimator).signed_R

    mu, signed, evals, tr = maximize_log_scan(objective, *mu_bounds, trace=trace)
    rate = rrdps_rate(ProtocolConfig(L, mu, scenario), distance, params, estimator).R
    return OptimizationResult(
        best_mu=mu, best_rate=rate, evaluations=evals + 1, best_L=L,
        best_signed_rate=signed, feasible=rate > 0.0, objective_trace=tr,
    )


def optimize_L_mu(
    distance: float,
    params: ChannelParams,
    estimator: EstimatorKind = EstimatorKind.DECOY,
    scenario: BackgroundScenario = BackgroundScenario.L_DEPENDENT,
    L_grid: Sequence[int] = DEFAULT_L_GRID,
) -> OptimizationResult:
    """Run :func:`optimize_mu` for each ``L`` and keep the best.

    Ties resolve to the smaller ``L``.
    """
    if len(L_grid) == 0:
        raise ValueError("L_grid must not be empty")
    best = None
    evals = 0
    for L in sorted(L_grid):
        r = optimize_mu(L, distance, params, estimator, scenario)
        evals += r.evaluations
        if best is None or r.best_signed_rate > best.best_signed_rate:
            best = r
    best.evaluations = evals
    return best


def threshold_ebit(mu: float, L: int, approx: bool = False) -> float:
    """Largest bit error rate that still leaves a positive key rate when
    every photon-number class costs ``H(L*mu/(L-1))`` (or ``H(mu)``)."""
    e_ph = mu if approx else L * mu / (L - 1)
    if e_ph >= 0.5:
        raise InfeasibleError(f"phase error {e_ph:.4g} >= 1/2 leaves no key")
    budget = 1.0 - binary_entropy(e_ph)
    if budget <= 0.0:
        raise InfeasibleError("no entropy budget left for bit errors")
    return inverse_binary_entropy(budget)


def analytic_eta_min(
    mu: float,
    L: int,
    params: ChannelParams,
    scenario: BackgroundScenario,
    approx_phase_error: bool = False,
) -> EtaMin:
    c = threshold_ebit(mu, L, approx_phase_error)
    e_d = params.e_d
    if c <= e_d:
        raise InfeasibleError(f"misalignment e_d={e_d} already exceeds threshold c={c:.4g}")
    Y0 = background_total(L, scenario, params.y0)
    L_mu = L * mu
    if Y0 == 0.0:
        return EtaMin(0.0, 0.0, c, Y0)
    k = ((params.e0 - e_d) / (c - e_d) - 1.0) * Y0 / (1.0 - Y0)
    approx = k / L_mu
    if k >= 1.0:
        return EtaMin(approx, math.inf, c, Y0)

    def excess(eta: float) -> float:
        return qber(L_mu, eta, Y0, e_d, params.e0) - c

    hi = 1.0
    if excess(hi) > 0.0:
        exact = math.inf
    else:
        exact = brentq(excess, 0.0, hi, xtol=1e-300, rtol=1e-14)
    return EtaMin(approx, exact, c, Y0)


def eta_min_floor(mu: float, L: int, params: ChannelParams, approx_phase_error: bool = False) -> float:
    """L-independent lower bound on the minimal transmittance when the
    background scales with ``L``: ``(1/mu)(...) * y0``."""
    c = threshold_ebit(mu, L, approx_phase_error)
    return ((params.e0 - params.e_d) / (c - params.e_d) - 1.0) * params.y0 / mu


def optimize_mu_eta_min(
    L: int,
    params: ChannelParams,
    scenario: BackgroundScenario = BackgroundScenario.L_INDEPENDENT,
    exact: bool = False,
    mu_bounds: tuple[float, float] = (1e-3, 0.45),
) -> OptimizationResult:
    """Minimise ``L * eta_min`` over ``mu``; the returned "rate" is
    ``-L * eta_min`` so larger is better like the other results."""

    def objective(mu: float) -> float:
        try:
            em = analytic_eta_min(mu, L, params, scenario)
        except InfeasibleError:
            return -math.inf
        v = em.exact if exact else em.approx
        return -L * v

    mu, v, evals, tr = maximize_log_scan(objective, *mu_bounds, rel_tol=1e-6, trace=True)
    return OptimizationResult(
        best_mu=mu, best_rate=v, evaluations=evals, best_L=L, best_signed_rate=v,
        feasible=math.isfinite(v), objective_trace=tr,
    )


def _optimized(distance, params, estimator, scenario, L) -> OptimizationResult:
    if L == "optimize":
        return optimize_L_mu(distance, params, estimator, scenario)
    return optimize_mu(int(L), distance, params, estimator, scenario)


def max_distance(
    params: ChannelParams,
    estimator: EstimatorKind = EstimatorKind.DECOY,
    scenario: BackgroundScenario = BackgroundScenario.L_DEPENDENT,
    L: int | str = 32,
    d_max: float = DISTANCE_MAX_KM,
    tol: float = DISTANCE_TOL_KM,
) -> DistanceSolution:
    """Largest distance with a positive optimized rate.

    Bisection on the sign of the optimized rate brackets the edge to
    ``tol``; the unclamped optimized rate is continuous in distance, so a
    Brent root search inside the final bracket then pins the edge itself.
    """
    scenario = BackgroundScenario(scenario)

    def solve(d):
        return _optimized(d, params, estimator, scenario, L)

    start = solve(0.0)
    if start.best_rate <= 0.0:
        raise InfeasibleError("no positive key rate even at zero distance")
    end = solve(d_max)
    if end.best_rate > 0.0:
        return _solution(d_max, end, params, scenario, unbounded=True, tol=tol)

    lo, hi, best = 0.0, d_max, start
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        r = solve(mid)
        if r.best_rate > 0.0:
            lo, best = mid, r
        else:
            hi = mid

    def signed(d):
        return solve(d).best_signed_rate

    s_hi = signed(hi)
    edge = lo
    if s_hi <= 0.0 < best.best_signed_rate:
        root = brentq(signed, lo, hi, xtol=1e-6)
        # keep the reported point on the positive side of the edge
        while root > lo and solve(root).best_rate <= 0.0:
            root -= 1e-6
        if root > lo:
            edge = root
            best = solve(edge)
    return _solution(edge, best, params, scenario, unbounded=False, tol=tol)


def _solution(d, opt, params, scenario, unbounded, tol) -> DistanceSolution:
    try:
        c = threshold_ebit(opt.best_mu, opt.best_L)
    except InfeasibleError:
        c = None
    return DistanceSolution(
        max_distance=d, eta_min=transmittance(d, params), threshold_c=c,
        scenario=scenario, unbounded=unbounded, L=opt.best_L,
        best_mu=opt.best_mu, tolerance=tol,
    )


def bb84_optimize_mu(
    distance: float,
    params: ChannelParams,
    ec_efficiency: float = BB84_EC_EFFICIENCY,
    mu_bounds: tuple[float, float] = (1e-4, 1.0),
) -> OptimizationResult:
    def objective(mu: float) -> float:
        return bb84_decoy_signed_rate(mu, distance, params, ec_efficiency)

    mu, v, evals, _ = maximize_log_scan(objective, *mu_bounds)
    return OptimizationResult(
        best_mu=mu, best_rate=max(v, 0.0), evaluations=evals,
        best_signed_rate=v, feasible=v > 0.0,
    )


def bb84_max_distance(
    params: ChannelParams,
    ec_efficiency: float = BB84_EC_EFFICIENCY,
    d_max: float = DISTANCE_MAX_KM,
) -> float:
    """Edge of the decoy-BB84 baseline, found directly with Brent's method."""

    def signed(d):
        return bb84_optimize_mu(d, params, ec_efficiency).best_signed_rate

    if signed(0.0) <= 0.0:
        raise InfeasibleError("BB84 baseline has no key at zero distance")
    if signed(d_max) > 0.0:
        return d_max
    return brentq(signed, 0.0, d_max, xtol=1e-6)


def distance_bound_from_floor(mu: float, L: int, params: ChannelParams) -> float:
    """Distance at the L-independent transmittance floor."""
    floor = eta_min_floor(mu, L, params)
    if floor >= params.eta_d:
        return 0.0
    return distance_for_transmittance(floor, params)
