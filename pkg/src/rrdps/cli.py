"""Command-line front end.

Exit codes: 0 success, 1 input error, 2 infeasible (zero key rate),
3 reproduction check failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .channel import BackgroundScenario, ChannelParams
from .experiments import (
    ExperimentId,
    SweepSpec,
    format_value,
    run_experiment,
    run_sweep,
    to_csv,
)
from .keyrate import EstimatorKind, InfeasibleError, ProtocolConfig, rrdps_rate
from .optimizer import (
    DEFAULT_L_GRID,
    DISTANCE_MAX_KM,
    DISTANCE_TOL_KM,
    analytic_eta_min,
    max_distance,
    optimize_L_mu,
    optimize_mu,
    optimize_mu_eta_min,
)
from .phase_error import independent_bound, syk_bound

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_CHECK = 0, 1, 2, 3


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


@dataclass
class CliConfig:
    eta_d: float = 0.045
    alpha: float = 0.2
    e_d: float = 0.033
    y0: float = 1.7e-6
    e0: float = 0.5
    L: int | str | None = None
    mu: float | None = None
    L_mu: float | None = None
    scenario: str = BackgroundScenario.L_DEPENDENT.value
    estimator: str = EstimatorKind.DECOY.value
    distance_km: float = 0.0
    output: str | None = None

    def channel(self) -> ChannelParams:
        try:
            return ChannelParams(self.eta_d, self.alpha, self.e_d, self.y0, self.e0)
        except ValueError as exc:
            raise InputError(str(exc)) from None

    def validate(self) -> None:
        self.channel()
        try:
            BackgroundScenario(self.scenario)
        except ValueError:
            raise InputError(f"scenario={self.scenario!r} must be one of l-independent, l-dependent") from None
        try:
            EstimatorKind(self.estimator)
        except ValueError:
            raise InputError(f"estimator={self.estimator!r} must be one of syk, tagging, decoy") from None
        if self.distance_km < 0:
            raise InputError(f"distance_km={self.distance_km} must be non-negative")
        if self.mu is not None and self.L_mu is not None:
            raise InputError("give exactly one of mu / L_mu")
        for name in ("mu", "L_mu"):
            v = getattr(self, name)
            if v is not None and not v >= 0:
                raise InputError(f"{name}={v} must be non-negative")
        if self.L is not None and self.L != "optimize":
            if int(self.L) != self.L or self.L < 2:
                raise InputError(f"L={self.L} must be an integer >= 2")

    def int_L(self) -> int:
        if self.L is None:
            raise InputError("L is required")
        if self.L == "optimize":
            raise InputError("L must be an integer for this command")
        return int(self.L)

    def protocol(self) -> ProtocolConfig:
        L = self.int_L()
        if self.mu is None and self.L_mu is None:
            raise InputError("one of mu / L_mu is required")
        mu = self.mu if self.mu is not None else self.L_mu / L
        return ProtocolConfig(L, mu, BackgroundScenario(self.scenario))


_FLAG_KEYS = {
    "eta_d": float, "alpha": float, "e_d": float, "y0": float, "e0": float,
    "mu": float, "L_mu": float, "scenario": str, "estimator": str,
    "distance_km": float, "output": str,
}


def _parse_L(v):
    if v is None or v == "optimize":
        return v
    try:
        f = float(v)
    except (TypeError, ValueError):
        raise InputError(f"L={v!r} must be an integer or 'optimize'") from None
    if not f.is_integer():
        raise InputError(f"L={v!r} must be an integer")
    return int(f)


def load_config(args: argparse.Namespace) -> CliConfig:
    """Defaults, then the JSON file, then explicit flags."""
    values: dict = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
        known = {f.name for f in fields(CliConfig)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        values.update(data)
    for key in _FLAG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if getattr(args, "L", None) is not None:
        values["L"] = args.L
    if "L" in values:
        values["L"] = _parse_L(values["L"])
    for key, typ in _FLAG_KEYS.items():
        if values.get(key) is not None:
            try:
                values[key] = typ(values[key])
            except (TypeError, ValueError):
                raise InputError(f"{key}={values[key]!r} is not a valid {typ.__name__}") from None
    cfg = CliConfig(**values)
    cfg.validate()
    return cfg


def dump_config(cfg: CliConfig) -> str:
    return json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- output


def _emit(pairs: list[tuple[str, object]], fmt: str, out) -> None:
    if fmt == "csv":
        out.write(",".join(k for k, _ in pairs) + "\n")
        out.write(",".join(format_value(v) for _, v in pairs) + "\n")
    else:
        width = max(len(k) for k, _ in pairs)
        for k, v in pairs:
            out.write(f"{k:<{width}} = {format_value(v)}\n")


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


# ---------------------------------------------------------------- commands


def cmd_rate(cfg: CliConfig, args) -> int:
    b = rrdps_rate(cfg.protocol(), cfg.distance_km, cfg.channel(), EstimatorKind(cfg.estimator))
    pairs = [
        ("L", b.L), ("mu", b.mu), ("L_mu", b.L_mu), ("distance_km", b.distance),
        ("estimator", b.estimator), ("scenario", b.scenario), ("eta", b.eta), ("Y0", b.Y0),
        ("Q", b.Q), ("E", b.E), ("e_bit", b.e_bit), ("H_PA", b.H_PA), ("n_th", b.n_th),
        ("R", b.R), ("LR", b.LR), ("reason", b.reason),
    ]
    out, close = _open_out(cfg.output)
    try:
        _emit(pairs, args.format, out)
    finally:
        if close:
            out.close()
    return EXIT_OK if b.R > 0 else EXIT_INFEASIBLE


def _float_list(spec: str) -> list[float]:
    """``a:b:step`` range or comma-separated values."""
    try:
        if ":" in spec:
            lo, hi, step = (float(x) for x in spec.split(":"))
            if step <= 0:
                raise ValueError
            n = int(math.floor((hi - lo) / step + 1e-9))
            return [round(lo + i * step, 10) for i in range(n + 1)]
        return [float(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"bad grid {spec!r}; use a:b:step or a,b,c") from None


def cmd_sweep(cfg: CliConfig, args) -> int:
    distances = _float_list(args.distances) if args.distances else [cfg.distance_km]
    L_values = [int(x) for x in _float_list(args.L_values)] if args.L_values else [cfg.int_L()]
    e_ds = _float_list(args.e_d_values) if args.e_d_values else None
    mu = None
    if cfg.mu is not None:
        mu = cfg.mu
    elif cfg.L_mu is not None:
        if len(L_values) != 1:
            raise InputError("--L-mu with several L values is ambiguous; use --mu")
        mu = cfg.L_mu / L_values[0]
    for L in L_values:
        if L < 2:
            raise InputError(f"L={L} must be an integer >= 2")
    res = run_sweep(cfg.channel(), EstimatorKind(cfg.estimator), BackgroundScenario(cfg.scenario),
                    distances, L_values, e_ds, mu, threads=args.threads)
    text = to_csv(res)
    if cfg.output:
        Path(cfg.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK if any(r["R"] > 0 for r in res.rows) else EXIT_INFEASIBLE


def cmd_optimize(cfg: CliConfig, args) -> int:
    params = cfg.channel()
    scenario = BackgroundScenario(cfg.scenario)
    if args.objective == "Leta":
        L = cfg.int_L() if cfg.L is not None else 10000
        r = optimize_mu_eta_min(L, params, scenario)
        if not r.feasible:
            return EXIT_INFEASIBLE
        em = analytic_eta_min(r.best_mu, L, params, scenario)
        pairs = [
            ("objective", "Leta"), ("scenario", scenario), ("L", L), ("best_mu", r.best_mu),
            ("L_eta_min", em.approx * L), ("L_eta_min_exact", em.exact * L),
            ("eta_min", em.approx), ("threshold_c", em.threshold_c), ("evaluations", r.evaluations),
        ]
        _emit(pairs, args.format, sys.stdout)
        return EXIT_OK
    estimator = EstimatorKind(cfg.estimator)
    if cfg.L in (None, "optimize"):
        grid = [int(x) for x in _float_list(args.L_grid)] if args.L_grid else list(DEFAULT_L_GRID)
        r = optimize_L_mu(cfg.distance_km, params, estimator, scenario, grid)
    else:
        r = optimize_mu(cfg.int_L(), cfg.distance_km, params, estimator, scenario)
    pairs = [
        ("objective", "rate"), ("estimator", estimator), ("scenario", scenario),
        ("distance_km", cfg.distance_km), ("best_L", r.best_L), ("best_mu", r.best_mu),
        ("best_L_mu", r.best_mu * r.best_L), ("best_rate", r.best_rate),
        ("feasible", r.feasible), ("evaluations", r.evaluations),
    ]
    _emit(pairs, args.format, sys.stdout)
    return EXIT_OK if r.feasible else EXIT_INFEASIBLE


def cmd_max_distance(cfg: CliConfig, args) -> int:
    L = cfg.L if cfg.L is not None else 32
    try:
        sol = max_distance(cfg.channel(), EstimatorKind(cfg.estimator), BackgroundScenario(cfg.scenario),
                           L, d_max=args.d_max, tol=args.tol)
    except InfeasibleError as exc:
        sys.stderr.write(f"infeasible: {exc}\n")
        return EXIT_INFEASIBLE
    pairs = [
        ("max_distance_km", sol.max_distance), ("eta_min", sol.eta_min),
        ("threshold_c", sol.threshold_c), ("scenario", sol.scenario), ("L", sol.L),
        ("best_mu", sol.best_mu), ("unbounded", sol.unbounded), ("tolerance_km", sol.tolerance),
    ]
    _emit(pairs, args.format, sys.stdout)
    if sol.unbounded and args.format == "text":
        sys.stdout.write(f"unbounded within search range (rate still positive at {args.d_max:g} km)\n")
    return EXIT_OK


def cmd_phase_error(cfg: CliConfig, args) -> int:
    L = cfg.int_L() if cfg.L is not None else 32
    out = sys.stdout
    out.write("n,L,syk,independent\n" if args.format == "csv" else f"{'n':>4} {'syk':>14} {'independent':>14}\n")
    for n in range(args.n_max + 1):
        s, i = syk_bound(n, L), independent_bound(n, L)
        if args.format == "csv":
            out.write(f"{n},{L},{format_value(s)},{format_value(i)}\n")
        else:
            out.write(f"{n:>4} {format_value(s):>14} {format_value(i):>14}\n")
    return EXIT_OK


def _parse_overrides(items) -> dict:
    ov = {}
    for item in items or []:
        if "=" not in item:
            raise InputError(f"override {item!r} must look like key=value")
        k, v = item.split("=", 1)
        ov[k.strip()] = v.strip()
    return ov


def cmd_reproduce(cfg: CliConfig, args) -> int:
    try:
        eid = ExperimentId(args.experiment)
    except ValueError:
        raise InputError(
            f"unknown experiment {args.experiment!r}; choose from {', '.join(e.value for e in ExperimentId)}"
        ) from None
    output = cfg.output or f"{eid.value}.csv"
    spec = SweepSpec(eid, _parse_overrides(args.override), output, threads=args.threads)
    try:
        result = run_experiment(spec)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    print(f"wrote {len(result.rows)} rows to {output}")
    for c in result.checks:
        print(c.line())
    return EXIT_OK if result.ok else EXIT_CHECK


COMMANDS = {
    "rate": cmd_rate,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "max-distance": cmd_max_distance,
    "phase-error": cmd_phase_error,
    "reproduce": cmd_reproduce,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH")
    common.add_argument("--estimator", choices=[e.value for e in EstimatorKind])
    common.add_argument("--scenario", choices=[s.value for s in BackgroundScenario])
    common.add_argument("--L", dest="L", help="pulses per train (or 'optimize')")
    common.add_argument("--mu", type=float)
    common.add_argument("--L-mu", dest="L_mu", type=float)
    common.add_argument("--distance-km", dest="distance_km", type=float)
    common.add_argument("--e-d", dest="e_d", type=float)
    common.add_argument("--y0", type=float)
    common.add_argument("--e0", type=float)
    common.add_argument("--eta-d", dest="eta_d", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--format", choices=["text", "csv"], default="text")
    common.add_argument("--output", metavar="PATH")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    common.add_argument("--dump-config", action="store_true",
                        help="print the effective configuration as JSON and exit")

    p = _Parser(prog="rrdps", description="RRDPS QKD key-rate analysis")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("rate", parents=[common], help="key rate at one operating point")
    s = sub.add_parser("sweep", parents=[common], help="rates on a grid (CSV)")
    s.add_argument("--distances", help="a:b:step or comma list (km)")
    s.add_argument("--L-values", dest="L_values", help="comma list of L")
    s.add_argument("--e-d-values", dest="e_d_values", help="a:b:step or comma list")
    o = sub.add_parser("optimize", parents=[common], help="optimize mu (and L)")
    o.add_argument("--objective", choices=["rate", "Leta"], default="rate")
    o.add_argument("--L-grid", dest="L_grid", help="comma list of L for --L optimize")
    m = sub.add_parser("max-distance", parents=[common], help="maximal secure distance")
    m.add_argument("--d-max", dest="d_max", type=float, default=DISTANCE_MAX_KM)
    m.add_argument("--tol", type=float, default=DISTANCE_TOL_KM)
    ph = sub.add_parser("phase-error", parents=[common], help="phase-error bounds versus n")
    ph.add_argument("--n-max", dest="n_max", type=int, default=64)
    r = sub.add_parser("reproduce", parents=[common], help="regenerate a figure/table as CSV")
    r.add_argument("experiment", help=", ".join(e.value for e in ExperimentId))
    r.add_argument("--override", action="append", metavar="KEY=VALUE")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help exits 0; every parse error has already been mapped to 1
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    try:
        cfg = load_config(args)
        if args.dump_config:
            sys.stdout.write(dump_config(cfg))
            return EXIT_OK
        if args.threads < 1:
            raise InputError("--threads must be at least 1")
        return COMMANDS[args.command](cfg, args)
    except InputError as exc:
        sys.stderr.write(f"rrdps: error: {exc}\n")
        return EXIT_INPUT
    except (ValueError, ZeroDivisionError) as exc:
        sys.stderr.write(f"rrdps: error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
