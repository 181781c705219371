"""Named experiment recipes that regenerate the comparison figures and tables
as CSV data, each with embedded checks against reference values."""

from __future__ import annotations

import csv
import enum
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .channel import GYS, BackgroundScenario, ChannelParams, distance_for_transmittance
from .keyrate import (
    EstimatorKind,
    ProtocolConfig,
    RateBreakdown,
    rrdps_rate,
)
from .optimizer import (
    analytic_eta_min,
    bb84_optimize_mu,
    eta_min_floor,
    max_distance,
    optimize_L_mu,
    optimize_mu,
    optimize_mu_eta_min,
)
from .phase_error import independent_bound, large_n_approx, small_n_reciprocal_approx, syk_bound


class ExperimentId(str, enum.Enum):
    FIG3 = "fig3"
    FIG4 = "fig4"
    FIG_B1 = "figB1"
    FIG_B2 = "figB2"
    TABLE2 = "table2"
    APP_C = "appC"


ESTIMATOR_ORDER = (EstimatorKind.SYK, EstimatorKind.TAGGING, EstimatorKind.DECOY)

RATE_COLUMNS = [
    "L", "mu", "L_mu", "eta", "Y0", "Q", "E", "e_bit", "H_PA", "n_th", "LR", "R", "reason",
]


@dataclass
class SweepSpec:
    experiment_id: ExperimentId
    overrides: dict[str, Any] = field(default_factory=dict)
    output_path: str | os.PathLike | None = None
    threads: int = 1

    def __post_init__(self):
        self.experiment_id = ExperimentId(self.experiment_id)


@dataclass
class Check:
    """One embedded reference check; ``passed`` is None when skipped."""

    name: str
    passed: bool | None
    detail: str = ""

    def line(self) -> str:
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[self.passed]
        return f"{status} {self.name}: {self.detail}"


@dataclass
class ExperimentResult:
    experiment_id: ExperimentId
    columns: list[str]
    rows: list[dict[str, Any]]
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed is not False for c in self.checks)


# ---------------------------------------------------------------- CSV output


def format_value(v: Any) -> str:
    """10 significant digits; ``%g`` switches to scientific below 1e-4."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, enum.Enum):
        return str(v.value)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if v == 0.0:
            return "0"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.10g}"
    return str(v)


def to_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.columns)
    for row in result.rows:
        w.writerow([format_value(row.get(c)) for c in result.columns])
    return buf.getvalue()


def write_csv(result: ExperimentResult, path: str | os.PathLike) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_csv(result), encoding="utf-8")
    return path


# ---------------------------------------------------------------- helpers

_CHANNEL_KEYS = {"eta_d", "alpha", "e_d", "y0", "e0"}


def _params(overrides: dict[str, Any], base: ChannelParams = GYS) -> ChannelParams:
    kw = {k: float(v) for k, v in overrides.items() if k in _CHANNEL_KEYS}
    return replace(base, **kw)


def _check_keys(overrides: dict[str, Any], allowed: Iterable[str]) -> None:
    unknown = set(overrides) - set(allowed) - _CHANNEL_KEYS
    if unknown:
        raise ValueError(f"unknown override(s): {', '.join(sorted(unknown))}")


def _grid(lo: float, hi: float, step: float) -> list[float]:
    if step <= 0:
        raise ValueError("grid step must be positive")
    n = int(math.floor((hi - lo) / step + 1e-9))
    return [round(lo + i * step, 10) for i in range(n + 1)]


def pmap(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Order-preserving map, optionally across worker processes."""
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))


def _rate_row(b: RateBreakdown) -> dict[str, Any]:
    d = b.as_dict()
    return {k: d[k] for k in RATE_COLUMNS}


# ---------------------------------------------------------------- rate versus distance


def _fig3_point(args, params, scenario, L):
    distance, estimator = args
    opt = optimize_mu(L, distance, params, estimator, scenario)
    b = rrdps_rate(ProtocolConfig(L, opt.best_mu, scenario), distance, params, estimator)
    row = {"distance_km": distance, "estimator": estimator.value, "scenario": scenario.value}
    row.update(_rate_row(b))
    return row


def run_fig3(spec: SweepSpec) -> ExperimentResult:
    """Optimized key rate versus distance for the three estimators at L = 32."""
    ov = dict(spec.overrides)
    _check_keys(ov, {"L", "distance_min", "distance_max", "distance_step", "scenario"})
    params = _params(ov)
    L = int(ov.get("L", 32))
    scenario = BackgroundScenario(ov.get("scenario", BackgroundScenario.L_DEPENDENT))
    distances = _grid(
        float(ov.get("distance_min", 0.0)),
        float(ov.get("distance_max", 160.0)),
        float(ov.get("distance_step", 1.0)),
    )
    points = [(d, e) for d in distances for e in ESTIMATOR_ORDER]
    rows = pmap(partial(_fig3_point, params=params, scenario=scenario, L=L), points, spec.threads)
    columns = ["distance_km", "estimator", "scenario"] + RATE_COLUMNS
    result = ExperimentResult(ExperimentId.FIG3, columns, rows)
    result.checks = _fig3_checks(rows, distances)
    return result


def _last_positive(rows, estimator) -> float | None:
    ds = [r["distance_km"] for r in rows if r["estimator"] == estimator and r["R"] > 0]
    return max(ds) if ds else None


def _fig3_checks(rows, distances) -> list[Check]:
    by = {(r["distance_km"], r["estimator"]): r["R"] for r in rows}
    bad = [
        d for d in distances
        if not by[(d, "decoy")] >= by[(d, "tagging")] >= by[(d, "syk")]
    ]
    checks = [
        Check(
            "ordering decoy >= tagging >= syk",
            not bad,
            "all grid points" if not bad else f"violated at {bad[:5]} km",
        )
    ]
    reach = {e.value: _last_positive(rows, e.value) for e in ESTIMATOR_ORDER}
    nested = True
    for weak, strong in (("syk", "tagging"), ("tagging", "decoy")):
        for d in distances:
            if by[(d, weak)] > 0 and not by[(d, strong)] > 0:
                nested = False
    checks.append(Check("positive ranges nested", nested, f"last positive km: {reach}"))
    d = reach["decoy"]
    if max(distances) < 145:
        checks.append(Check("decoy reach 140 +/- 5 km", None, "grid ends before 145 km"))
    else:
        checks.append(Check("decoy reach 140 +/- 5 km", d is not None and 135 <= d <= 145, f"{d} km"))
    return checks


# ---------------------------------------------------------------- misalignment sweep

FIG4_PROTOCOLS = ("rrdps_decoy_L32", "rrdps_decoy_Lopt", "bb84_decoy")


def _fig4_point(args, params, scenario):
    distance, e_d, protocol = args
    p = replace(params, e_d=e_d)
    row = {"distance_km": distance, "e_d": e_d, "protocol": protocol, "mu_optimized": True}
    if protocol == "bb84_decoy":
        opt = bb84_optimize_mu(distance, p)
        row.update(L=1, mu=opt.best_mu, L_mu=opt.best_mu, R=opt.best_rate)
        return row
    if protocol == "rrdps_decoy_L32":
        opt = optimize_mu(32, distance, p, EstimatorKind.DECOY, scenario)
    else:
        opt = optimize_L_mu(distance, p, EstimatorKind.DECOY, scenario)
    b = rrdps_rate(ProtocolConfig(opt.best_L, opt.best_mu, scenario), distance, p, EstimatorKind.DECOY)
    row.update(_rate_row(b))
    return row


def run_fig4(spec: SweepSpec) -> ExperimentResult:
    """Optimized key rate versus misalignment at 50 and 100 km."""
    ov = dict(spec.overrides)
    _check_keys(ov, {"e_d_min", "e_d_max", "e_d_step", "distances", "scenario"})
    params = _params({k: v for k, v in ov.items() if k != "e_d"})
    scenario = BackgroundScenario(ov.get("scenario", BackgroundScenario.L_DEPENDENT))
    eds = _grid(float(ov.get("e_d_min", 0.0)), float(ov.get("e_d_max", 0.5)), float(ov.get("e_d_step", 0.005)))
    distances = ov.get("distances", (50.0, 100.0))
    if isinstance(distances, str):
        distances = [float(x) for x in distances.split(",") if x]
    distances = [float(d) for d in distances]
    points = [(d, e, p) for d in distances for e in eds for p in FIG4_PROTOCOLS]
    rows = pmap(partial(_fig4_point, params=params, scenario=scenario), points, spec.threads)
    columns = ["distance_km", "e_d", "protocol", "mu_optimized"] + RATE_COLUMNS
    result = ExperimentResult(ExperimentId.FIG4, columns, rows)
    result.checks = _fig4_checks(rows, distances, eds)
    return result


def fig4_crossover(rows, distance) -> float | None:
    """Smallest grid e_d where RRDPS (L = 32) is at least the BB84 rate."""
    rr = {r["e_d"]: r["R"] for r in rows if r["distance_km"] == distance and r["protocol"] == "rrdps_decoy_L32"}
    bb = {r["e_d"]: r["R"] for r in rows if r["distance_km"] == distance and r["protocol"] == "bb84_decoy"}
    for e in sorted(rr):
        if rr[e] >= bb[e] and (rr[e] > 0 or bb[e] > 0):
            return e
    return None


def _fig4_checks(rows, distances, eds) -> list[Check]:
    R = {(r["distance_km"], r["e_d"], r["protocol"]): r["R"] for r in rows}
    checks = []
    for d in distances:
        above = [e for e in eds if e > 0.09]
        below = [e for e in eds if e < 0.05]
        # the claim covers every e_d in [0, 0.5]; a truncated sweep cannot decide it
        if not above or not below or max(eds) < 0.5 - 1e-12:
            checks.append(Check(f"crossover 7% +/- 2 at {d:g} km", None, "e_d grid does not span 0-0.5"))
            continue
        # where both rates are zero there is nothing to compare
        wins = all(
            R[(d, e, "rrdps_decoy_L32")] > R[(d, e, "bb84_decoy")]
            for e in above
            if R[(d, e, "rrdps_decoy_L32")] > 0 or R[(d, e, "bb84_decoy")] > 0
        )
        loses = all(R[(d, e, "rrdps_decoy_L32")] < R[(d, e, "bb84_decoy")] for e in below)
        checks.append(
            Check(
                f"crossover 7% +/- 2 at {d:g} km",
                wins and loses,
                f"first e_d with RRDPS >= BB84: {fig4_crossover(rows, d)}",
            )
        )

    def point(name, d, e, protocol, want_positive):
        if d not in distances or not any(abs(x - e) < 1e-12 for x in eds):
            return Check(name, None, f"({d:g} km, e_d={e}) not on the grid")
        v = R[(d, e, protocol)]
        return Check(name, (v > 0) == want_positive, f"R={v:.4g}")

    checks.append(point("RRDPS positive at 50 km, e_d=0.40", 50.0, 0.4, "rrdps_decoy_Lopt", True))
    checks.append(point("RRDPS positive at 100 km, e_d=0.25", 100.0, 0.25, "rrdps_decoy_Lopt", True))
    checks.append(point("BB84 zero at 100 km, e_d=0.25", 100.0, 0.25, "bb84_decoy", False))
    return checks


# ---------------------------------------------------------------- phase-error estimates

B2_PHOTONS = 5


def run_figB1_B2(spec: SweepSpec) -> ExperimentResult:
    """Phase-error estimates versus n (panel B1) and reciprocals versus L/n (B2)."""
    ov = dict(spec.overrides)
    _check_keys(ov, {"L", "n_max", "ratio_max"})
    L = int(ov.get("L", 32))
    n_max = int(ov.get("n_max", 64))
    r_max = int(ov.get("ratio_max", 100))
    rows: list[dict[str, Any]] = []
    panels = {ExperimentId.FIG_B1: ("B1",), ExperimentId.FIG_B2: ("B2",)}.get(spec.experiment_id, ("B1", "B2"))
    if "B1" in panels:
        for n in range(n_max + 1):
            rows.append({
                "panel": "B1", "n": n, "L": L, "syk": syk_bound(n, L),
                "independent": independent_bound(n, L), "independent_large_n": large_n_approx(n, L),
            })
        for n in range(n_max + 1):
            # both estimates vanish as L grows at fixed n
            rows.append({"panel": "B1", "n": n, "L": "inf", "syk": 0.0, "independent": 0.0})
    if "B2" in panels:
        n = B2_PHOTONS
        for r in range(1, r_max + 1):
            Lr = n * r
            s, i = syk_bound(n, Lr), independent_bound(n, Lr)
            rows.append({
                "panel": "B2", "n": n, "L": Lr, "L_over_n": r, "syk": s, "independent": i,
                "syk_reciprocal": 1.0 / s, "independent_reciprocal": 1.0 / i,
                "reciprocal_approx": small_n_reciprocal_approx(n, Lr),
                "syk_reciprocal_limit": float(r),
                "independent_reciprocal_limit": 2.0 / -math.expm1(-2.0 / r),
            })
    columns = [
        "panel", "n", "L", "L_over_n", "syk", "independent", "independent_large_n",
        "syk_reciprocal", "independent_reciprocal", "reciprocal_approx",
        "syk_reciprocal_limit", "independent_reciprocal_limit",
    ]
    result = ExperimentResult(spec.experiment_id, columns, rows)
    result.checks = _figB_checks(rows)
    return result


def _figB_checks(rows) -> list[Check]:
    checks = []
    tighter = all(r["independent"] <= r["syk"] for r in rows)
    checks.append(Check("independent <= SYK", tighter, f"{len(rows)} rows"))
    zero = [r for r in rows if r["n"] == 0]
    if zero:
        checks.append(Check("n = 0 rows vanish", all(r["syk"] == 0 and r["independent"] == 0 for r in zero), ""))
    at20 = [r for r in rows if r.get("L_over_n") == 20]
    if at20:
        r = at20[0]
        ok = abs(r["syk_reciprocal"] - 20) / 20 < 0.05 and abs(r["independent_reciprocal"] - 21) / 21 < 0.05
        checks.append(Check(
            "reciprocals at L/n = 20", ok,
            f"SYK {r['syk_reciprocal']:.4g} (~20), independent {r['independent_reciprocal']:.4g} (~21)",
        ))
    return checks


# ---------------------------------------------------------------- near-half bit error point

TABLE2_SETTINGS = dict(distance=1.0, L=220000, L_mu=0.77, e_d=0.485, eta_d=0.9, y0=1.7e-6, alpha=0.2)
TABLE2_EBIT = (0.4923, 1e-4)  # reference, absolute tolerance
TABLE2_RATE = (2.265e-10, 0.20)  # reference, relative tolerance


def table2_breakdown(overrides: dict[str, Any] | None = None) -> RateBreakdown:
    s = dict(TABLE2_SETTINGS)
    s.update({k: float(v) for k, v in (overrides or {}).items()})
    params = replace(GYS, eta_d=s["eta_d"], e_d=s["e_d"], y0=s["y0"], alpha=s["alpha"],
                     e0=s.get("e0", GYS.e0))
    cfg = ProtocolConfig.from_L_mu(int(s["L"]), s["L_mu"], BackgroundScenario.L_DEPENDENT)
    return rrdps_rate(cfg, s["distance"], params, EstimatorKind.DECOY)


def run_table2(spec: SweepSpec) -> ExperimentResult:
    ov = dict(spec.overrides)
    _check_keys(ov, set(TABLE2_SETTINGS))
    b = table2_breakdown(ov)
    ref_e, tol_e = TABLE2_EBIT
    ref_r, tol_r = TABLE2_RATE
    ok_e = abs(b.e_bit - ref_e) <= tol_e
    ok_r = abs(b.R - ref_r) <= tol_r * ref_r
    rows = [
        {"quantity": "e_bit", "computed": b.e_bit, "reference": ref_e, "tolerance": tol_e,
         "tolerance_kind": "absolute", "passed": ok_e},
        {"quantity": "R", "computed": b.R, "reference": ref_r, "tolerance": tol_r,
         "tolerance_kind": "relative", "passed": ok_r},
    ]
    columns = ["quantity", "computed", "reference", "tolerance", "tolerance_kind", "passed"]
    checks = [
        Check("e_bit = 0.4923 +/- 1e-4", ok_e, f"{b.e_bit:.6f}"),
        Check("R = 2.265e-10 +/- 20%", ok_r, f"{b.R:.4e}"),
    ]
    return ExperimentResult(ExperimentId.TABLE2, columns, rows, checks)


# ---------------------------------------------------------------- minimal transmittance

APPC_L_GRID = (1000, 10000, 100000)


def _appc_point(args, params):
    scenario, L = args
    opt = optimize_mu_eta_min(L, params, scenario)
    em = analytic_eta_min(opt.best_mu, L, params, scenario)
    floor = eta_min_floor(opt.best_mu, L, params)
    sol = max_distance(params, EstimatorKind.DECOY, scenario, L)
    near = optimize_mu(L, max(sol.max_distance - 0.1, 0.0), params, EstimatorKind.DECOY, scenario)
    return {
        "scenario": scenario.value, "L": L, "mu_opt": opt.best_mu, "threshold_c": em.threshold_c,
        "Y0": em.Y0, "eta_min_approx": em.approx, "eta_min_exact": em.exact,
        "eta_min_times_L": em.approx * L, "eta_min_exact_times_L": em.exact * L,
        "eta_floor": floor, "floor_distance_km": distance_for_transmittance(min(floor, params.eta_d), params),
        "max_distance_km": sol.max_distance, "unbounded": sol.unbounded,
        "near_max_mu": near.best_mu, "near_max_rate": near.best_rate,
        "near_max_rate_times_L": near.best_rate * L,
    }


def run_appC_scaling(spec: SweepSpec) -> ExperimentResult:
    """Minimal transmittance and maximal distance versus L for both
    background scenarios."""
    ov = dict(spec.overrides)
    _check_keys(ov, {"L_grid"})
    params = _params(ov)
    L_grid = ov.get("L_grid", APPC_L_GRID)
    if isinstance(L_grid, str):
        L_grid = [int(float(x)) for x in L_grid.split(",") if x]
    L_grid = sorted(int(x) for x in L_grid)
    points = [(s, L) for s in (BackgroundScenario.L_INDEPENDENT, BackgroundScenario.L_DEPENDENT) for L in L_grid]
    rows = pmap(partial(_appc_point, params=params), points, spec.threads)
    columns = list(rows[0].keys())
    result = ExperimentResult(ExperimentId.APP_C, columns, rows)
    result.checks = _appc_checks(rows)
    return result


def _spread(values) -> float:
    return max(values) / min(values) - 1.0


def _appc_checks(rows) -> list[Check]:
    ind = [r for r in rows if r["scenario"] == BackgroundScenario.L_INDEPENDENT.value]
    dep = [r for r in rows if r["scenario"] == BackgroundScenario.L_DEPENDENT.value]
    checks = []
    mus = [r["mu_opt"] for r in ind]
    checks.append(Check("optimal mu = 0.06 +/- 0.01", all(abs(m - 0.06) <= 0.01 for m in mus),
                        ", ".join(f"{m:.4f}" for m in mus)))
    spread = _spread([r["eta_min_times_L"] for r in ind])
    checks.append(Check("eta_min * L constant within 1%", spread < 0.01, f"spread {spread:.2e}"))
    ratios = []
    for a, b in zip(ind, ind[1:]):
        if b["L"] == 10 * a["L"]:
            ratios.append(b["near_max_rate_times_L"] / a["near_max_rate_times_L"] - 1.0)
    if ratios:
        checks.append(Check("near-max rate linear in 1/L within 10%", all(abs(x) < 0.10 for x in ratios),
                            ", ".join(f"{x:+.3%}" for x in ratios)))
    floor_ok = all(r["eta_min_approx"] >= r["eta_floor"] and r["eta_min_exact"] >= r["eta_floor"] for r in dep)
    checks.append(Check("L-dependent eta_min above L-independent floor", floor_ok, ""))
    if len(dep) >= 3:
        d = [r["max_distance_km"] for r in dep]
        steps = [b - a for a, b in zip(d, d[1:])]
        sat = all(s2 < s1 for s1, s2 in zip(steps, steps[1:]))
        checks.append(Check("L-dependent max distance saturates", sat,
                            ", ".join(f"{x:.2f}" for x in d) + " km"))
    return checks


RUNNERS: dict[ExperimentId, Callable[[SweepSpec], ExperimentResult]] = {
    ExperimentId.FIG3: run_fig3,
    ExperimentId.FIG4: run_fig4,
    ExperimentId.FIG_B1: run_figB1_B2,
    ExperimentId.FIG_B2: run_figB1_B2,
    ExperimentId.TABLE2: run_table2,
    ExperimentId.APP_C: run_appC_scaling,
}


def run_experiment(spec: SweepSpec) -> ExperimentResult:
    result = RUNNERS[spec.experiment_id](spec)
    result.rows.sort(key=_sort_key(result))
    if spec.output_path is not None:
        write_csv(result, spec.output_path)
    return result


def _sort_key(result: ExperimentResult):
    # stable sort on the primary coordinate; the recipe already orders
    # secondary keys deterministically
    primary = {
        ExperimentId.FIG3: "distance_km", ExperimentId.FIG4: "distance_km",
        ExperimentId.APP_C: "scenario",
    }.get(result.experiment_id)
    if primary is None:
        return lambda r: 0
    return lambda r: r[primary]


# ---------------------------------------------------------------- generic sweep


def _sweep_point(args, params, estimator, scenario, mu):
    distance, e_d, L = args
    p = replace(params, e_d=e_d)
    if mu is None:
        mu_used = optimize_mu(L, distance, p, estimator, scenario).best_mu
    else:
        mu_used = mu
    b = rrdps_rate(ProtocolConfig(L, mu_used, scenario), distance, p, estimator)
    row = {"distance_km": distance, "e_d": e_d, "estimator": estimator.value,
           "scenario": scenario.value, "mu_optimized": mu is None}
    row.update(_rate_row(b))
    return row


SWEEP_COLUMNS = ["distance_km", "e_d", "estimator", "scenario", "mu_optimized"] + RATE_COLUMNS


def run_sweep(
    params: ChannelParams,
    estimator: EstimatorKind,
    scenario: BackgroundScenario,
    distances: Sequence[float],
    L_values: Sequence[int],
    e_d_values: Sequence[float] | None = None,
    mu: float | None = None,
    threads: int = 1,
) -> ExperimentResult:
    """Rate on the product grid distance x e_d x L; ``mu=None`` optimizes
    the intensity at every point."""
    e_d_values = list(e_d_values) if e_d_values else [params.e_d]
    points = [(d, e, L) for d in sorted(distances) for e in e_d_values for L in L_values]
    rows = pmap(
        partial(_sweep_point, params=params, estimator=EstimatorKind(estimator),
                scenario=BackgroundScenario(scenario), mu=mu),
        points, threads,
    )
    return ExperimentResult(None, SWEEP_COLUMNS, rows)
