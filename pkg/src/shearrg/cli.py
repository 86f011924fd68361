"""Command-line interface.

Exit codes: 0 ok, 1 a validation run disagreed, 2 invalid input, 3 numerically
inconclusive. Every subcommand accepts --config FILE (JSON, see
schema/config.schema.json); explicit flags override values from the file.
"""

import argparse
import math
import sys

import numpy as np

from . import config as cfg
from . import brownian, effective, feynkac, refsolver, rgflow
from .errors import InconclusiveError, StabilityError, UsageError
from .records import ResultRecord, format_csv, write_text
from .spectra import CovarianceKernel, CutoffWindow, Normalization, SpectralParams, synthesize_field

EXIT_OK, EXIT_DISAGREE, EXIT_USAGE, EXIT_INCONCLUSIVE = 0, 1, 2, 3

REGIME_ALIASES = {
    "mean-field": rgflow.Regime.STEADY_MEAN_FIELD,
    "nonlocal": rgflow.Regime.STEADY_NONLOCAL,
    "hyperscaling": rgflow.Regime.STEADY_HYPERSCALING,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _params(a):
    return SpectralParams(a.epsilon, a.z if a.model == "unsteady" else 0.0, a.nu0, a.delta, a.model)


def _add_params(p, delta=0.1):
    p.add_argument("--model", choices=["steady", "unsteady"], default="steady")
    p.add_argument("--epsilon", type=float, required=False)
    p.add_argument("--z", type=float, default=0.0)
    p.add_argument("--nu0", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=delta)


def _add_io(p):
    p.add_argument("--config", help="JSON config; flags override its options")
    p.add_argument("--output", default="-", help="JSON record path (default stdout)")
    p.add_argument("--csv", default=None, help="CSV series path")


def _emit(args, record, header=None, rows=None):
    write_text(args.output, record.to_json())
    if args.csv and header is not None:
        write_text(args.csv, format_csv(header, rows))


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-")
                                                                     for m in missing))


# --- commands --------------------------------------------------------------------


def cmd_classify(args):
    _need(args, "epsilon")
    report = rgflow.classify(_params(args))
    out = report.as_dict()
    print(ResultRecord.create("classify", {"model": args.model, "epsilon": args.epsilon,
                                           "z": args.z}, out).to_json()
          if args.output != "-" or args.record else _compact(out))
    return EXIT_OK


def _compact(out):
    import json

    return json.dumps({k: (v if not (isinstance(v, float) and not math.isfinite(v)) else None)
                       for k, v in out.items()})


def cmd_phase_diagram(args):
    if args.resolution < 2:
        raise UsageError("resolution must be >= 2")
    eps = np.linspace(args.eps_min, args.eps_max, args.resolution)
    zs = np.linspace(args.z_min, args.z_max, args.resolution)
    rows = []
    for e in eps:
        for z in zs:
            report = rgflow.classify(SpectralParams(float(e), float(z), model="unsteady"))
            rows.append((float(e), float(z), report.regime.value, float(report.alpha)))
    text = format_csv(["epsilon", "z", "regime", "alpha"], rows)
    write_text(args.csv or args.output, text)
    return EXIT_OK


def cmd_flow(args):
    _need(args, "epsilon")
    params = _params(args)
    report = rgflow.classify(params)
    if args.regime is not None:
        want = REGIME_ALIASES.get(args.regime) or rgflow.Regime(args.regime)
        if report.regime is not want:
            raise UsageError(f"parameters lie in regime {report.regime.value}, not {want.value}")
    if report.regime is rgflow.Regime.BOUNDARY:
        raise UsageError("parameters lie on a regime boundary")
    l_grid = np.linspace(0.0, args.l_max, args.n_l)
    fixed = None
    try:
        fixed = rgflow.fixed_point_constant(report, params)
    except UsageError:
        pass
    if args.mode == "b-suppressed":
        v0 = np.array([rgflow.v0_b_suppressed(params, report.alpha, l, args.xi, args.t)
                       for l in l_grid])
        stderr = np.zeros(len(l_grid))
    else:
        n_steps = args.n_steps or brownian.STEPS_PER_UNIT
        vals = brownian.path_values(1.0, n_steps, args.seed, np.arange(args.n_paths))
        traj = np.array([rgflow.v0_trajectory(brownian.BrownianPath(1.0, n_steps, row), params,
                                              report.alpha, l_grid, args.xi, args.t)
                         for row in vals])
        v0 = traj.mean(axis=0)
        stderr = (traj.std(axis=0, ddof=1) / math.sqrt(len(traj)) if len(traj) > 1
                  else np.zeros(len(l_grid)))
    target = fixed.value(args.xi, args.t) if fixed is not None else math.nan
    dist = np.abs(v0 - target)
    out = {"regime": report.regime.value, "alpha": report.alpha, "v0_final": float(v0[-1]),
           "fixed_point": target, "distance_final": float(dist[-1]),
           "converged": rgflow.is_converged(dist) if fixed is not None else None}
    record = ResultRecord.create("flow", _inputs(args), out, {"stderr_final": float(stderr[-1])},
                                 args.seed)
    _emit(args, record, ["l", "v0", "stderr", "distance"],
          [(float(l), float(v), float(s), float(d)) for l, v, s, d in zip(l_grid, v0, stderr, dist)])
    return EXIT_OK


def cmd_fixed_point(args):
    _need(args, "epsilon")
    params = _params(args)
    report = rgflow.classify(params)
    fp = rgflow.fixed_point_constant(report, params, args.regime3_form)
    out = {"regime": report.regime.value, "coefficient": fp.coefficient, "t_power": fp.t_power,
           "xi_power": fp.xi_power, "value": fp.value(args.xi, args.t), "description": fp.description}
    _emit(args, ResultRecord.create("fixed-point", _inputs(args), out, {"quadrature": fp.error}))
    return EXIT_OK


def cmd_msd(args):
    _need(args, "epsilon")
    params = _params(args)
    window = CutoffWindow.full(params)
    t_grid = np.geomspace(args.t_min, args.t_max, args.n_t)
    n_steps = args.n_steps or max(2, math.ceil(args.t_max))
    rows = feynkac.estimate_msd(t_grid, params, window, args.n_paths, n_steps, args.seed)
    slope = float(np.polyfit(np.log(rows[:, 0]), np.log(rows[:, 1]), 1)[0])
    out = {"slope": slope, "predicted_slope": 1 + args.epsilon / 2 if 0 < args.epsilon < 2 else None}
    record = ResultRecord.create("msd", _inputs(args), out, {}, args.seed)
    _emit(args, record, ["t", "msd", "stderr"], [tuple(float(v) for v in r) for r in rows])
    return EXIT_OK


def cmd_nu_alpha(args):
    _need(args, "epsilon")
    nu = effective.estimate_nu_alpha(args.epsilon, args.n_paths, args.n_steps or 1024, args.seed)
    q = np.quantile(nu.samples, [0.05, 0.25, 0.5, 0.75, 0.95])
    out = {"mean": nu.mean, "quantiles": dict(zip(["5%", "25%", "50%", "75%", "95%"], q.tolist())),
           "all_nonpositive": bool(np.all(nu.samples <= 0))}
    if args.epsilon == 1.0:
        out["oracle_mean"] = -brownian.nonlocal_mean_oracle(1.0)
    record = ResultRecord.create("nu-alpha", _inputs(args), out, {"stderr": nu.stderr}, args.seed)
    s = np.sort(nu.samples)
    _emit(args, record, ["a", "cdf"], [(float(a), (i + 1) / len(s)) for i, a in enumerate(s)])
    return EXIT_OK


def _low_field(params, l, domain, seed):
    kernel = CovarianceKernel(params, CutoffWindow.low_band(params, l), Normalization.PHYSICAL)
    return synthesize_field(kernel, domain, 512, seed=seed)


def cmd_kernel(args):
    _need(args, "epsilon")
    params = _params(args)
    v = None if args.field_seed is None else _low_field(params, args.l, None, args.field_seed)
    est = effective.intermediate_kernel(args.x, args.x_tilde, args.xi, args.t, args.l, params, v,
                                        args.n_bridges, args.n_steps, args.seed, args.anchor)
    out = {"value": est.value}
    _emit(args, ResultRecord.create("kernel", _inputs(args), out, {"stderr": est.stderr}, args.seed))
    return EXIT_OK


def cmd_validate_fk(args):
    """Frozen-field check: FK on the low band (l = 0 equivalent) vs the reference solver."""
    _need(args, "epsilon")
    params = _params(args)
    if not params.steady:
        raise UsageError("validate-fk uses frozen steady realizations")
    datum = feynkac.InitialDatum.gaussian(args.datum_width)
    grid = refsolver.SolverGrid.for_problem(args.t, params.delta, params.nu0)
    full = CutoffWindow.full(params)
    empty = CutoffWindow(1.0, 1.0)
    kernel = CovarianceKernel(params, full, Normalization.PHYSICAL)
    rows, ok = [], True
    for i in range(args.n_realizations):
        v = synthesize_field(kernel, grid.x_domain, 512, seed=args.seed, index=i)
        ref = complex(refsolver.solve_at(v, args.xi, grid, params.nu0, datum, [args.x])[0])
        mc = feynkac.estimate_That_conditional(args.x, args.xi, args.t, params, full, empty, v,
                                               datum, args.n_paths, args.n_steps, args.seed)
        gap = abs(mc.mean - ref)
        agree = gap <= 3 * mc.stderr
        ok &= agree
        rows.append((i, ref.real, ref.imag, mc.mean.real, mc.mean.imag, mc.stderr, gap / abs(ref)))
    out = {"agree": bool(ok), "max_relative_gap": max(r[-1] for r in rows)}
    record = ResultRecord.create("validate-fk", _inputs(args), out, {}, args.seed)
    _emit(args, record, ["realization", "ref_re", "ref_im", "mc_re", "mc_im", "mc_stderr",
                         "relative_gap"], rows)
    return EXIT_OK if ok else EXIT_DISAGREE


def _inputs(args):
    skip = {"func", "config", "output", "csv", "record"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# --- parser ----------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="shearrg", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("classify", help="regime, alpha and exponents as JSON")
    _add_params(p)
    _add_io(p)
    p.add_argument("--record", action="store_true", help="emit a full result record")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("phase-diagram", help="CSV columns: epsilon,z,regime,alpha (unsteady)")
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--eps-min", type=float, default=-1.0)
    p.add_argument("--eps-max", type=float, default=3.99)
    p.add_argument("--z-min", type=float, default=0.01)
    p.add_argument("--z-max", type=float, default=3.0)
    _add_io(p)
    p.set_defaults(func=cmd_phase_diagram)

    p = sub.add_parser("flow", help="V0(l); CSV columns: l,v0,stderr,distance")
    _add_params(p)
    p.add_argument("--regime", default=None, help="assert the regime (e.g. hyperscaling, II)")
    p.add_argument("--l-max", type=float, default=10.0)
    p.add_argument("--n-l", type=int, default=101)
    p.add_argument("--xi", type=float, default=1.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--mode", choices=["b-suppressed", "paths"], default="b-suppressed")
    p.add_argument("--n-paths", type=int, default=100)
    p.add_argument("--n-steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    _add_io(p)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("fixed-point", help="fixed-point constant V0* = c xi^2 t^p")
    _add_params(p)
    p.add_argument("--xi", type=float, default=1.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--regime3-form", choices=["hyperscaling", "effective"], default="hyperscaling")
    _add_io(p)
    p.set_defaults(func=cmd_fixed_point)

    p = sub.add_parser("msd", help="<Y^2>(t); CSV columns: t,msd,stderr")
    _add_params(p, delta=1e-3)
    p.add_argument("--t-min", type=float, default=100.0)
    p.add_argument("--t-max", type=float, default=1e4)
    p.add_argument("--n-t", type=int, default=9)
    p.add_argument("--n-paths", type=int, default=64)
    p.add_argument("--n-steps", type=int, default=None, help="steps up to t-max")
    p.add_argument("--seed", type=int, default=0)
    _add_io(p)
    p.set_defaults(func=cmd_msd)

    p = sub.add_parser("nu-alpha", help="mixture-parameter law; CSV columns: a,cdf")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--n-paths", type=int, default=1000)
    p.add_argument("--n-steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    _add_io(p)
    p.set_defaults(func=cmd_nu_alpha)

    p = sub.add_parser("kernel", help="intermediate-scale kernel K_l(x, x~, xi, t)")
    _add_params(p)
    p.add_argument("--x", type=float, default=0.0)
    p.add_argument("--x-tilde", type=float, default=0.0)
    p.add_argument("--xi", type=float, default=1.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--l", type=float, default=1.0)
    p.add_argument("--n-bridges", type=int, default=1024)
    p.add_argument("--n-steps", type=int, default=None)
    p.add_argument("--anchor", choices=["end", "start"], default="end")
    p.add_argument("--field-seed", type=int, default=None, help="synthesize v_low (else zero)")
    p.add_argument("--seed", type=int, default=0)
    _add_io(p)
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("validate-fk", help="Feynman-Kac vs reference solver on frozen fields; "
                                           "CSV columns: realization,ref_re,ref_im,mc_re,mc_im,"
                                           "mc_stderr,relative_gap")
    _add_params(p)
    p.add_argument("--x", type=float, default=0.0)
    p.add_argument("--xi", type=float, default=1.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--datum-width", type=float, default=2.0)
    p.add_argument("--n-paths", type=int, default=20000)
    p.add_argument("--n-steps", type=int, default=128)
    p.add_argument("--n-realizations", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    _add_io(p)
    p.set_defaults(func=cmd_validate_fk)
    return parser


def _config_path(argv):
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = build_parser()
        path = _config_path(argv)
        if path is not None and argv and not argv[0].startswith("-"):
            options = cfg.load(path, argv[0])
            sub = parser._subparsers._group_actions[0].choices[argv[0]]
            dests = {a.dest for a in sub._actions}
            unknown = set(options) - dests
            if unknown:
                raise UsageError(f"options not accepted by {argv[0]}: {sorted(unknown)}")
            sub.set_defaults(**options)
        args = parser.parse_args(argv)
        return args.func(args)
    except InconclusiveError as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except (UsageError, StabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
