"""Command-line front end: run scenarios, sweep clearing times, list built-ins.

Exit codes: 0 completed (verdict failures do not change it), 2 usage or
scenario errors, 3 solver failures, 4 I/O errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

from .errors import (InitInfeasible, NewtonDivergence, ParseError,
                     PfDivergence, SchemaError, SingularY, UnknownScenario,
                     WindowTooShort)
from .scenarios import (build_builtin, builtin_description, builtin_names,
                        cct_sweep, load_scenario)
from .sim import SimConfig, run_simulation
from .synccheck import (DEFAULT_EPSILON, DEFAULT_SETTLE, DEFAULT_TAIL_TOL,
                        DEFAULT_TAIL_WINDOW, analytic_chi_all, angle_spread,
                        crosscheck_chi, evaluate_device, numeric_chi,
                        system_unstable)

_USAGE_ERRORS = (ParseError, SchemaError, UnknownScenario)
_SOLVER_ERRORS = (NewtonDivergence, PfDivergence, InitInfeasible, SingularY)


def _atomic_write(path, data):
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".synchrolens-")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x):
    return repr(float(x))


def _load(args):
    if args.builtin:
        scenario = build_builtin(args.builtin)
    else:
        with open(args.file, encoding="utf-8") as handle:
            scenario = load_scenario(handle.read())
    if getattr(args, "clear_time", None) is not None:
        from .scenarios import with_clearing_time
        scenario = with_clearing_time(scenario, args.clear_time)
    return scenario


def _out_dir(args):
    out = args.out or os.environ.get("SYNCHROLENS_OUT") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _traj_csv(result):
    buses = list(result.voltages)
    devices = list(result.currents)
    header = ["t"]
    header += [f"v_d:{b}" for b in buses] + [f"v_q:{b}" for b in buses]
    header += [f"i_d:{d}" for d in devices] + [f"i_q:{d}" for d in devices]
    state_cols = []
    for dev, names in result.state_names.items():
        for j, name in enumerate(names):
            state_cols.append((dev, j, f"state:{dev}:{name}"))
    header += [c[2] for c in state_cols]
    lines = [",".join(header)]
    for k in range(len(result.t)):
        row = [_fmt(result.t[k])]
        row += [_fmt(result.voltages[b][k].real) for b in buses]
        row += [_fmt(result.voltages[b][k].imag) for b in buses]
        row += [_fmt(result.currents[d][k].real) for d in devices]
        row += [_fmt(result.currents[d][k].imag) for d in devices]
        row += [_fmt(result.states[dev][k, j]) for dev, j, _ in state_cols]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _chi_csv(result, numeric, analytic):
    devices = list(numeric)
    header = ["t"]
    for dev in devices:
        header += [f"chi_rho_numeric:{dev}", f"chi_omega_numeric:{dev}"]
        if dev in analytic:
            header += [f"chi_rho_analytic:{dev}", f"chi_omega_analytic:{dev}"]
        header.append(f"mask:{dev}")
    lines = [",".join(header)]
    for k in range(len(result.t)):
        row = [_fmt(result.t[k])]
        for dev in devices:
            ch = numeric[dev]
            row += [_fmt(ch.values[k].real), _fmt(ch.values[k].imag)]
            if dev in analytic:
                an = analytic[dev]
                row += [_fmt(an.values[k].real), _fmt(an.values[k].imag)]
            row.append("1" if ch.mask[k] else "0")
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _verdict_dict(v):
    return {
        "device": v.device,
        "bls": {"passed": v.bls.passed, "epsilon": v.bls.epsilon,
                "sup_norm": v.bls.sup_norm, "window": list(v.bls.window)},
        "als": {"passed": v.als.passed, "tail_tol": v.als.tail_tol,
                "tail_max": v.als.tail_max, "slope": v.als.slope,
                "window": list(v.als.window)},
        "chi_at_t0": v.chi_at_t0,
        "notes": v.notes,
    }


def build_report(scenario, result, config, epsilon=DEFAULT_EPSILON,
                 tail_tol=DEFAULT_TAIL_TOL, paths=None):
    """Report dict plus the chi series a run command writes out."""
    numeric = {dev: numeric_chi(result, dev) for dev in result.currents}
    analytic = analytic_chi_all(result, scenario)
    verdicts, crosschecks = [], []
    for dev in result.currents:
        try:
            verdicts.append(_verdict_dict(evaluate_device(
                result, dev, epsilon=epsilon, tail_tol=tail_tol)))
        except WindowTooShort as exc:
            verdicts.append({"device": dev, "bls": None, "als": None,
                             "chi_at_t0": float("nan"),
                             "notes": f"not evaluable: {exc}"})
        if dev in analytic:
            cc = crosscheck_chi(analytic[dev], numeric[dev], dev)
            crosschecks.append({"device": dev, "rms": cc.rms, "max": cc.max,
                                "worst_time": cc.worst_time,
                                "n_samples": cc.n_samples,
                                "passed": cc.passed})
    report = {
        "scenario": scenario.name,
        "config": {"dt": config.dt, "t_end": config.t_end,
                   "epsilon": epsilon, "tail_tol": tail_tol,
                   "settle": DEFAULT_SETTLE, "tail_window": DEFAULT_TAIL_WINDOW},
        "verdicts": verdicts,
        "crosschecks": crosschecks,
        "system": {"instability_angle_separation": system_unstable(result),
                   "angle_spread_rad": angle_spread(result)},
        "outputs": paths or {"trajectories": "", "chi": "", "report": ""},
        "exit_status": 0,
    }
    return report, numeric, analytic


def cmd_run(args):
    scenario = _load(args)
    config = SimConfig.from_scenario(scenario, dt=args.dt, t_end=args.t_end)
    result = run_simulation(scenario, config)
    out = _out_dir(args)

    epsilon = args.epsilon if args.epsilon is not None else DEFAULT_EPSILON
    tail_tol = args.tail_tol if args.tail_tol is not None else DEFAULT_TAIL_TOL
    paths = {
        "trajectories": os.path.join(out, f"{scenario.name}_traj.csv"),
        "chi": os.path.join(out, f"{scenario.name}_chi.csv"),
        "report": os.path.join(out, f"{scenario.name}_report.json"),
    }
    report, numeric, analytic = build_report(scenario, result, config,
                                             epsilon, tail_tol, paths)
    verdicts = report["verdicts"]
    _atomic_write(paths["trajectories"], _traj_csv(result))
    _atomic_write(paths["chi"], _chi_csv(result, numeric, analytic))
    _atomic_write(paths["report"], json.dumps(report, indent=2,
                                              sort_keys=True) + "\n")
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print(f"{scenario.name}: simulated {config.t_end} s "
              f"({len(result.t)} samples)")
        for v in verdicts:
            if v["bls"] is None:
                print(f"  {v['device']}: {v['notes']}")
                continue
            print(f"  {v['device']}: BLS {'pass' if v['bls']['passed'] else 'fail'} "
                  f"(sup {v['bls']['sup_norm']:.3e}) / "
                  f"ALS {'pass' if v['als']['passed'] else 'fail'} "
                  f"(tail {v['als']['tail_max']:.3e})")
        if report["system"]["instability_angle_separation"]:
            print("  system: angle separation beyond 180 degrees")
        print(f"  wrote {paths['trajectories']}, {paths['chi']}, {paths['report']}")
    return 0


def cmd_sweep(args):
    scenario = _load(args)
    if args.t_from is None or args.t_to is None or args.step is None:
        raise SchemaError("sweep needs --from, --to and --step")
    result = cct_sweep(scenario, args.t_from, args.t_to, args.step,
                       tail_tol=args.tail_tol if args.tail_tol is not None
                       else DEFAULT_TAIL_TOL,
                       workers=args.workers)
    out = _out_dir(args)
    device = scenario.monitored[0]
    lines = ["t_cl,max_delta_swing,als_pass"]
    for p in result.points:
        if p.error:
            lines.append(f"{_fmt(p.t_clear)},,error")
            continue
        swing = "" if p.max_swing is None else _fmt(p.max_swing)
        lines.append(f"{_fmt(p.t_clear)},{swing},"
                     f"{'pass' if p.als_pass else 'fail'}")
    path = os.path.join(out, f"{scenario.name}_sweep.csv")
    _atomic_write(path, "\n".join(lines) + "\n")
    summary = {
        "scenario": scenario.name,
        "device": device,
        "boundary": {"last_passing": result.last_passing,
                     "first_failing": result.first_failing},
        "monotone": result.monotone,
        "output": path,
    }
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        print(f"{scenario.name}: sweep of {len(result.points)} points "
              f"({'monotone' if result.monotone else 'NOT monotone'})")
        print(f"  boundary: last passing {result.last_passing}, "
              f"first failing {result.first_failing}")
        print(f"  wrote {path}")
    return 0


def cmd_list(args):
    names = builtin_names()
    if args.json:
        catalogue = [{"name": n, "description": builtin_description(n)}
                     for n in names]
        print(json.dumps(catalogue, indent=2, sort_keys=True))
    else:
        for n in names:
            print(f"{n}: {builtin_description(n)}")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="synchrolens",
        description="Phasor-domain transient simulation with complex-"
                    "frequency local-synchronization analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_scenario_args(p):
        group = p.add_mutually_exclusive_group(required=True)
        group.add_argument("--builtin", help="built-in scenario name")
        group.add_argument("--file", help="scenario file path")
        p.add_argument("--out", help="output directory "
                                     "(default $SYNCHROLENS_OUT or .)")
        p.add_argument("--json", action="store_true",
                       help="machine-readable output")

    run_p = sub.add_parser("run", help="simulate and analyse one scenario")
    add_scenario_args(run_p)
    run_p.add_argument("--dt", type=float, help="integration step override, s")
    run_p.add_argument("--t-end", type=float, help="simulated span override, s")
    run_p.add_argument("--clear-time", type=float,
                       help="move the fault-clearing event to this time, s")
    run_p.add_argument("--epsilon", type=float,
                       help="bounded-synchronization tolerance")
    run_p.add_argument("--tail-tol", type=float,
                       help="asymptotic-synchronization tail tolerance")
    run_p.set_defaults(fn=cmd_run)

    sweep_p = sub.add_parser("sweep", help="clearing-time sweep")
    add_scenario_args(sweep_p)
    sweep_p.add_argument("--from", dest="t_from", type=float,
                         help="first clearing time, s")
    sweep_p.add_argument("--to", dest="t_to", type=float,
                         help="last clearing time, s")
    sweep_p.add_argument("--step", type=float, help="clearing-time step, s")
    sweep_p.add_argument("--tail-tol", type=float)
    sweep_p.add_argument("--workers", type=int, default=1,
                         help="parallel sweep workers")
    sweep_p.set_defaults(fn=cmd_sweep)

    list_p = sub.add_parser("list", help="catalogue of built-in scenarios")
    list_p.add_argument("--json", action="store_true")
    list_p.set_defaults(fn=cmd_list)
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
