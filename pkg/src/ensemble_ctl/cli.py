"""Command-line experiment runner.

Every subcommand reads an optional JSON config, lets flags override it,
writes its data (CSV or JSON) to the output directory and adds an
``<command>_report.json`` summary next to it.

Exit codes: 0 success, 1 precondition error, 2 internal error or failed
verification, 64 usage error.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import brackets, compare, formats, halving, linear, reach, verify
from .bloch import (E3, Constant, ControlSchedule, EnsembleState, OmegaGrid,
                    restrict_nonnegative, simulate)
from .errors import InternalError, PreconditionError
from .fourier import nearest_pole, pole_distance

EXIT_OK, EXIT_PRECONDITION, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2, 64
THREADS_ENV = "ENSEMBLE_CTL_THREADS"

DEFAULT_CONFIG = {
    "grid": {"omega_min": 0.0, "omega_max": math.pi, "nodes": 1025},
    "n_max": 256,
    "tolerances": {"halving": 1e-8, "descent": 1e-3, "picard": 1e-12,
                   "newton": 1e-12, "reach": 0.02},
    "seed": 0,
    "output": {"directory": "out", "format": "csv"},
}

# which tolerance --tol overrides for each subcommand
TOL_KEY = {"halve": "halving", "descent": "descent", "reach": "picard",
           "compare": "newton", "linctrl": "reach"}


@dataclass
class ExperimentConfig:
    grid: dict
    n_max: int
    tolerances: dict
    seed: int
    output: dict
    grid_given: bool = False

    def omega_grid(self) -> OmegaGrid:
        g = self.grid
        return OmegaGrid.uniform(float(g["omega_min"]), float(g["omega_max"]), int(g["nodes"]))


@dataclass
class ExperimentReport:
    command: str
    started: str
    finished: str = ""
    metrics: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the JSON file, then ``overrides`` (from flags)."""
    data = copy.deepcopy(DEFAULT_CONFIG)
    grid_given = False
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except OSError as exc:
            raise PreconditionError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise PreconditionError(f"config is not valid JSON: {exc.msg} "
                                    f"(line {exc.lineno}, column {exc.colno})") from None
        if not isinstance(user, dict):
            raise PreconditionError("config must be a JSON object")
        unknown = set(user) - set(DEFAULT_CONFIG)
        if unknown:
            raise PreconditionError(f"unknown config keys: {sorted(unknown)}")
        grid_given = "grid" in user
        data = _merge(data, user)
    data = _merge(data, overrides or {})
    cfg = ExperimentConfig(data["grid"], int(data["n_max"]), dict(data["tolerances"]),
                           int(data["seed"]), dict(data["output"]), grid_given)
    if int(cfg.grid["nodes"]) < 2:
        raise PreconditionError("grid.nodes must be at least 2")
    for name, tol in cfg.tolerances.items():
        if not float(tol) > 0:
            raise PreconditionError(f"tolerance {name} must be positive")
    if cfg.output.get("format") not in ("csv", "json"):
        raise PreconditionError("output.format must be csv or json")
    return cfg


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

class Writer:
    def __init__(self, cfg: ExperimentConfig, report: ExperimentReport):
        self.dir = Path(cfg.output["directory"])
        self.fmt = cfg.output["format"]
        self.report = report
        self.dir.mkdir(parents=True, exist_ok=True)

    def table(self, stem: str, columns, rows) -> Path:
        rows = list(rows)
        if self.fmt == "csv":
            path = formats.write_csv(self.dir / f"{stem}.csv", columns, rows)
        else:
            records = [{c: _json_value(v) for c, v in zip(columns, r)} for r in rows]
            path = self.dir / f"{stem}.json"
            path.write_text(json.dumps(records, indent=1) + "\n")
        self.report.artifacts.append(str(path))
        return path

    def json(self, stem: str, payload) -> Path:
        path = self.dir / f"{stem}.json"
        path.write_text(json.dumps(payload, indent=1) + "\n")
        self.report.artifacts.append(str(path))
        return path

    def finish(self) -> Path:
        self.report.finished = _now()
        bad = [k for k, v in self.report.metrics.items() if not math.isfinite(v)]
        if bad:
            raise InternalError(f"non-finite metrics: {bad}")
        path = self.dir / f"{self.report.command}_report.json"
        path.write_text(json.dumps(asdict(self.report), indent=1) + "\n")
        return path


def _json_value(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return formats.finite_or_none(v)
    return v


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise PreconditionError(f"{THREADS_ENV} must be an integer") from None


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args, cfg, out: Writer) -> int:
    if args.schedule is None:
        raise PreconditionError("simulate needs --schedule PATH")
    sched = formats.read_schedule(args.schedule)
    grid = cfg.omega_grid()
    m0 = np.asarray(args.m0 if args.m0 is not None else E3, dtype=float)
    if np.linalg.norm(m0) == 0:
        raise PreconditionError("--m0 must be nonzero")
    state = EnsembleState.constant(grid, m0)
    final = simulate(state, sched)
    out.table("final_state", ("omega", "x", "y", "z"),
              ((w, *m) for w, m in zip(final.omega, final.m)))
    pole = nearest_pole(final)
    dist = pole_distance(final, pole, min(cfg.n_max, 64)) if _even_grid(grid) else None
    out.report.metrics.update({"horizon": sched.horizon, "pulses": sched.pulse_count,
                               "z_min": float(final.z.min()), "z_max": float(final.z.max())})
    if dist is not None:
        out.report.metrics["n_distance_to_pole"] = dist.total
    return EXIT_OK


def _even_grid(grid: OmegaGrid) -> bool:
    return grid.omega_min >= -1e-12 and grid.omega_max <= math.pi + 1e-12


def cmd_halve(args, cfg, out: Writer) -> int:
    rng = verify.make_rng(cfg.seed)
    grid = cfg.omega_grid()
    Z = halving.random_even_transverse(rng, grid, args.norm)
    state = EnsembleState.from_transverse(grid, Z, hemisphere=-1)
    conf = halving.HalvingConfig(n_max=cfg.n_max)
    tol = float(cfg.tolerances["halving"])
    n0 = halving.transverse_norm(state, cfg.n_max)
    final, reports = halving.drive_to_pole(state, conf, tol=tol, max_cycles=args.cycles)
    rows = [(i + 1, r.k, r.n_before, r.n_after, r.z_extreme_after, r.pulse_count,
             r.elapsed_model_time) for i, r in enumerate(reports)]
    out.table("cycles", halving.CSV_COLUMNS, rows)
    half = restrict_nonnegative(final)
    out.report.metrics.update({"n_initial": n0, "n_final": halving.transverse_norm(final, cfg.n_max),
                               "cycles": len(reports),
                               "sup_transverse": float(np.max(np.abs(half.transverse))),
                               "model_time": float(sum(r.elapsed_model_time for r in reports))})
    return EXIT_OK


def cmd_descent(args, cfg, out: Writer) -> int:
    grid = cfg.omega_grid() if cfg.grid_given else brackets.default_grid()
    th = args.theta * grid.nodes
    state = EnsembleState(grid, np.column_stack([np.sin(th), np.zeros_like(th), np.cos(th)]))
    tol = float(cfg.tolerances["descent"])
    final, reports, sup = brackets.h1_descent_loop(state, tol_h1=tol, max_iter=args.cycles,
                                                   max_deg=args.deg)
    rows = [(i + 1, r.a_value, r.tau, r.h1_before, r.h1_after, r.schedule_duration, r.trip_count)
            for i, r in enumerate(reports)]
    out.table("descent", brackets.CSV_COLUMNS, rows)
    out.report.metrics.update({"h1_initial": brackets.h1_seminorm(state),
                               "h1_final": brackets.h1_seminorm(final),
                               "iterations": len(reports), "sup_pole_distance": float(sup)})
    return EXIT_OK


def cmd_linctrl(args, cfg, out: Writer) -> int:
    grid = cfg.omega_grid()
    zf = args.amp * np.exp(1j * args.shift * grid.nodes)
    eta = float(cfg.tolerances["reach"])
    control, rep = linear.approx_reach(zf, grid, args.T, eta, deg_max=args.deg)
    out.table("control", linear.CSV_COLUMNS, formats.control_rows(control))
    out.report.metrics.update({"T": args.T, "eta": eta, "degree": rep.degree, "eps": rep.eps,
                               "achieved_error": rep.achieved_error,
                               "crosscheck_error": rep.crosscheck_error,
                               "control_l2": control.l2_norm()})
    return EXIT_OK


def cmd_reach(args, cfg, out: Writer) -> int:
    T = args.T
    if not T > 0:
        raise PreconditionError("--T must be positive")
    if args.phi:
        x = T * np.arange(81) / 40.0
        table = reach.phi_table(lambda s: np.ones_like(s, dtype=complex), T, x)
        out.table("cubic", reach.CSV_COLUMNS, table.rows())
        mid = table.phi[60]
        out.report.metrics.update({"T": T, "phi_three_halves": float(mid.real),
                                   "phi_expected": T * T / 16,
                                   "max_beyond_T": float(np.max(np.abs(table.phi[x > T])))})
        return EXIT_OK
    if args.cr:
        sched = ControlSchedule((Constant(0.0, T, args.w, 0.0),), T)
        o1 = np.linspace(0.0, 3.0, 31)
        o2 = np.linspace(-0.5, 0.5, 11)
        rep = reach.cauchy_riemann_check(sched, o1, o2, args.h)
        out.json("cauchy_riemann", {"h": args.h,
                                    "grid": {"omega1": o1.tolist(), "omega2": o2.tolist()},
                                    "max_residual": rep.max_residual})
        out.report.metrics.update({"h": args.h, "max_residual": rep.max_residual})
        return EXIT_OK
    ctl = linear.SampledControl.constant(args.w, 0.0, T, 1025)
    sol = reach.fixed_point_solve(ctl, T, tol=float(cfg.tolerances["picard"]))
    out.table("mild_endpoint", ("omega", "re_Z", "im_Z"),
              ((w, z.real, z.imag) for w, z in zip(sol.omega, sol.endpoint)))
    out.report.metrics.update({"T": T, "iterations": sol.iterations, "sup_norm": sol.sup_norm(),
                               "sup_bound": math.sqrt(T) * ctl.l2_norm(),
                               "window_l2_max": float(np.max(sol.window_l2()))})
    return EXIT_OK


def cmd_compare(args, cfg, out: Writer) -> int:
    coeffs = compare.newton_a_eps(args.N, args.eps, float(cfg.tolerances["newton"]))
    a = compare.strategy_impulses(coeffs)
    b = compare.strategy_brackets(coeffs)
    out.table("comparison", compare.CSV_COLUMNS, (a.row(), b.row()))
    out.report.metrics.update({"N": args.N, "eps": args.eps, "newton_residual": coeffs.residual,
                               "newton_steps": coeffs.iterations,
                               "impulse_ratio": a.n_distance_after / a.n_distance_before,
                               "impulse_trips": a.trip_count, "bracket_trips": b.trip_count,
                               "impulse_time": a.model_time, "bracket_time": b.model_time})
    return EXIT_OK


def cmd_verify(args, cfg, out: Writer) -> int:
    results = verify.run_suite(cfg.seed, faults=args.fault or (), only=args.only,
                               threads=_threads())
    rows = [(r.name, r.passed, r.measured, r.threshold, r.detail) for r in results]
    out.table("verify", ("check", "passed", "measured", "threshold", "detail"), rows)
    failed = [r.name for r in results if not r.passed]
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.measured:.6g} ({r.detail})")
    out.report.metrics.update({"checks": len(results), "failed": len(failed)})
    return EXIT_INTERNAL if failed else EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "halve": cmd_halve, "descent": cmd_descent,
            "linctrl": cmd_linctrl, "reach": cmd_reach, "compare": cmd_compare,
            "verify": cmd_verify}


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), help="data file format")
    common.add_argument("--seed", type=int, help="seed of the random generator")
    common.add_argument("--tol", type=float, help="main tolerance of the subcommand")

    parser = _Parser(prog="ensemble-ctl", description="Bloch ensemble control experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="propagate a schedule file")
    p.add_argument("--schedule", metavar="PATH")
    p.add_argument("--m0", type=float, nargs=3, metavar=("X", "Y", "Z"))

    p = sub.add_parser("halve", parents=[common], help="halving cycles from a random state")
    p.add_argument("--cycles", type=int, default=40, help="maximum number of cycles")
    p.add_argument("--norm", type=float, default=0.015, help="initial N(Z)")

    p = sub.add_parser("descent", parents=[common], help="H1 descent then rotation to a pole")
    p.add_argument("--deg", type=int, default=2)
    p.add_argument("--cycles", type=int, default=100, help="maximum descent steps")
    p.add_argument("--theta", type=float, default=0.1, help="initial state (sin tw, 0, cos tw)")

    p = sub.add_parser("linctrl", parents=[common], help="linearised approximate reach")
    p.add_argument("--T", type=float, default=2.0)
    p.add_argument("--deg", type=int, default=20, help="maximum polynomial degree")
    p.add_argument("--amp", type=float, default=0.1)
    p.add_argument("--shift", type=float, default=1.0)

    p = sub.add_parser("reach", parents=[common], help="mild solution, Phi or CR check")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--w", type=float, default=0.1, help="constant control value")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--phi", action="store_true", help="tabulate Phi for W = 1 on [0, T]")
    mode.add_argument("--cr", action="store_true", help="Cauchy-Riemann residual")
    p.add_argument("--h", type=float, default=1e-3)

    p = sub.add_parser("compare", parents=[common], help="impulse vs bracket strategy")
    p.add_argument("--N", type=int, default=4)
    p.add_argument("--eps", type=float, default=0.05)

    p = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    p.add_argument("--fault", action="append", choices=verify.FAULTS)
    p.add_argument("--only", action="append", choices=list(verify.CHECKS))
    return parser


def _overrides(args) -> dict:
    o: dict = {}
    if args.out is not None:
        o.setdefault("output", {})["directory"] = args.out
    if args.format is not None:
        o.setdefault("output", {})["format"] = args.format
    if args.seed is not None:
        o["seed"] = args.seed
    if args.tol is not None and args.command in TOL_KEY:
        o["tolerances"] = {TOL_KEY[args.command]: args.tol}
    return o


def run_experiment(argv=None) -> int:
    """Parse ``argv``, run the subcommand and return the exit code."""
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
        report = ExperimentReport(args.command, _now())
        out = Writer(cfg, report)
        code = COMMANDS[args.command](args, cfg, out)
        out.finish()
        return code
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except Exception as exc:  # noqa: BLE001 - every other failure is internal
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run_experiment())


if __name__ == "__main__":
    main()
