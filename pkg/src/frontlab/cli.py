"""Command-line front end.

Every subcommand writes into ``<out>/<timestamp>-<hash>/``: CSV tables, SVG
plots and ``manifest.json``, then prints a one-line summary. Exit status is 0
on success, 2 on usage or configuration errors and 1 on numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, fracop
from .coupled import TOLERANCES, SimulationRun, run_fractional_kpp, run_simulation
from .diagnostics import (
    LevelSetTrace,
    communication_run,
    eps_sweep_variation,
    far_field_constant,
    fit_drift_exponent,
    kernel_asymptote,
    probe_field_to_road,
    probe_dirichlet_box,
    probe_road_to_field,
    renormalized_samples,
    trace_level_set,
    validate_linearized_far_field,
)
from .field import InstabilityError
from .io import file_index, read_csv, time_gradient, write_csv, write_json, write_svg
from .model import ConfigError, load_config, make_params
from .transients import TransientGrid, sweep_T_eps, transient_law_fit

# desk-scale defaults per experiment; --config and --param override them
DEFAULTS = {
    "simulate": dict(alpha=0.75, X=131072, Y=60, nx=131072, ny=120, dt=0.02, t_final=25),
    "linearized": dict(alpha=0.5, mode="linearized", X=2.1e6, Y=60, nx=65536, ny=75, dt=0.02, t_final=25,
                       delta0=0.5, x0_init=1.0),
    "renorm": dict(alpha=0.75, X=131072, Y=60, nx=131072, ny=120, dt=0.02, t_final=25),
    "probes": dict(alpha=0.5, X=64, Y=20, nx=256, ny=100, dt=0.01, t_final=2.0),
}

TOLERANCE_TABLE = dict(TOLERANCES, level_set_boundary_cells=5, level_set_edge_fraction=1e-3,
                       fit_min_samples=10, fit_min_span=2.0, far_field_min_cells=32, far_field_noise=1e-14,
                       transient_dt_refine=10)


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="frontlab", description=__doc__.splitlines()[0], allow_abbrev=False)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, params=True):
        p.add_argument("--out", default="runs", help="output root directory")
        if params:
            p.add_argument("--config", help="key = value parameter file")
            p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                           help="override one parameter (repeatable)")

    p = sub.add_parser("simulate", help="nonlinear road-field run with level-set tracking", allow_abbrev=False)
    common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--lam", type=float, default=0.1)
    p.add_argument("--every", type=float, default=0.5, help="snapshot spacing")
    p.add_argument("--window", type=float, nargs=2, default=(10.0, 25.0))

    p = sub.add_parser("linearized", help="linearised run checked against the far-field law", allow_abbrev=False)
    common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--every", type=float, default=2.5)
    p.add_argument("--window", type=float, nargs=2, default=(10.0, 25.0))

    p = sub.add_parser("kpp1d", help="Dirichlet KPP transient timing sweep", allow_abbrev=False)
    common(p, params=False)
    p.add_argument("--eps-max", type=float, default=1e-3)
    p.add_argument("--eps-min", type=float, default=1e-8)
    p.add_argument("--per-decade", type=int, default=1)
    p.add_argument("--theta", type=float, default=0.3)
    p.add_argument("--lam", type=float, default=0.5)
    p.add_argument("--Y", type=float, default=60.0)
    p.add_argument("--dy", type=float, default=0.05)
    p.add_argument("--dt", type=float, default=0.01)

    p = sub.add_parser("fracop-check", help="fractional operator validation tables", allow_abbrev=False)
    common(p, params=False)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--nx", type=int, default=64)

    p = sub.add_parser("kernel-asymptote", help="evaluate the far-field prediction", allow_abbrev=False)
    common(p, params=False)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--k", type=float, default=0.0)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--x", type=float, required=True)

    p = sub.add_parser("fit", help="fit the drift exponent of a level-set trace CSV (t, x)", allow_abbrev=False)
    common(p, params=False)
    p.add_argument("--trace", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--window", type=float, nargs=2)

    p = sub.add_parser("renorm", help="three renormalisations of the road profile", allow_abbrev=False)
    common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--every", type=float, default=0.5)
    p.add_argument("--late-start", type=float, default=10.0)

    p = sub.add_parser("probes", help="road/field communication and Dirichlet comparison probes",
                       allow_abbrev=False)
    common(p)
    p.add_argument("--eps", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4])
    p.add_argument("--L", type=float, default=2.0)
    p.add_argument("--x0", type=float, nargs="+", default=[1e3, 1e4, 1e5])
    return ap


def _raw_params(args, command: str) -> dict:
    raw = dict(DEFAULTS[command])
    if getattr(args, "config", None):
        raw.update(load_config(args.config))
    for item in getattr(args, "param", []):
        if "=" not in item:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    if getattr(args, "alpha", None) is not None:
        raw["alpha"] = args.alpha
    return raw


def _run_dir(root: str, command: str, payload: dict) -> Path:
    h = hashlib.sha256(json.dumps([command, payload], sort_keys=True, default=str).encode()).hexdigest()[:10]
    stamp = time.strftime("%Y%m%d-%H%M%S")
    d = Path(root) / f"{stamp}-{command}-{h}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _finish(run_dir: Path, command: str, payload: dict, files, extra: dict, t0: float) -> None:
    manifest = {
        "code_version": __version__,
        "command": command,
        "arguments": payload,
        "tolerances": TOLERANCE_TABLE,
        "threads": fracop.WORKERS,
        "wall_clock_s": time.perf_counter() - t0,
        "results": extra,
        "outputs": file_index([Path(f) for f in files], run_dir),
    }
    write_json(run_dir / "manifest.json", manifest)


def _snapshots(t_final: float, every: float):
    n = int(round(t_final / every))
    return tuple(np.round(np.arange(n + 1) * every, 12))


def _trace_rows(tr: LevelSetTrace):
    return [(t, p) for t, p, ok in zip(tr.times, tr.positions, tr.valid) if ok]


def cmd_simulate(args, run_dir):
    params = make_params(_raw_params(args, "simulate"))
    res = run_simulation(SimulationRun(params, _snapshots(params.t_final, args.every), out_dir=run_dir / "sim",
                                       field_cadence=10))
    tr = trace_level_set(res.trajectory, args.lam)
    files = [write_csv(run_dir / "level_set.csv", ["t", "x_lambda"], _trace_rows(tr))]
    out = {"lambda": args.lam, "drift_target": -params.drift_exponent}
    try:
        fit = fit_drift_exponent(tr.window(*args.window), params.lambda_star)
        out.update(m_hat=fit.m, stderr=fit.stderr, n=fit.n)
        summary = f"m_hat={fit.m:.4f} +- {fit.stderr:.4f} (target {-params.drift_exponent:.4f})"
    except ValueError as exc:
        out["fit_error"] = str(exc)
        summary = f"no fit: {exc}"
    rows = _trace_rows(tr)
    if rows:
        t, x = np.array(rows).T
        files.append(write_svg(run_dir / "level_set.svg", [(f"x_{args.lam:g}", t, x)], title="level set",
                               xlabel="t", ylabel="x_lambda", logy=True))
    return files, out, summary


def cmd_linearized(args, run_dir):
    params = make_params(_raw_params(args, "linearized"))
    res = run_simulation(SimulationRun(params, _snapshots(params.t_final, args.every)))
    rep = validate_linearized_far_field(res.trajectory, params, t_window=tuple(args.window))
    rows = [(t, m, r) for i, t in enumerate(rep.times) for m, r in zip(rep.fan, rep.ratios[i]) if np.isfinite(r)]
    files = [write_csv(run_dir / "far_field_ratios.csv", ["t", "x_over_front", "ratio"], rows)]
    ok = np.isfinite(rep.median)
    if ok.any():
        files.append(write_svg(run_dir / "far_field_ratios.svg",
                               [("median ratio", rep.times[ok], rep.median[ok]),
                                ("constant", rep.times[ok], np.full(ok.sum(), rep.constant_theory))],
                               title="far-field ratio", xlabel="t", ylabel="ratio"))
    out = dict(constant_theory=rep.constant_theory, latest_ratio=rep.latest_ratio,
               rel_error=rep.latest_rel_error, monotone=rep.monotone, doubling_change=rep.doubling_change,
               remainder_C=rep.remainder_C, remainder_delta=rep.remainder_delta, inconclusive=rep.inconclusive)
    summary = (f"ratio={rep.latest_ratio:.5f} vs {rep.constant_theory:.5f} "
               f"(rel err {rep.latest_rel_error:.3f}, monotone={rep.monotone})")
    return files, out, summary


def cmd_kpp1d(args, run_dir):
    if not 0 < args.eps_min < args.eps_max:
        raise UsageError("need 0 < eps-min < eps-max")
    n = int(round(math.log10(args.eps_max / args.eps_min) * args.per_decade)) + 1
    eps = np.geomspace(args.eps_max, args.eps_min, n)
    from .model import Nonlinearity

    grid = TransientGrid(args.Y, args.dy, args.dt)
    res = sweep_T_eps(eps, args.lam, Nonlinearity("threshold", 1.0, args.theta), grid)
    files = [write_csv(run_dir / "transients.csv", ["eps", "T_eps", "T1_eps", "ratio"],
                       [(r.epsilon, r.T_eps, r.T1_eps, r.ratio) for r in res])]
    fit = transient_law_fit(eps, [r.T_eps for r in res])
    rep = dict(slope=fit.slope, stderr=fit.stderr, ci95=list(fit.ci95), ratio_spread=fit.ratio_spread,
               consistent=fit.consistent, band=list(fit.band), decades=fit.decades)
    files.append(write_json(run_dir / "law_fit.json", rep))
    L = np.log(1 / eps)
    files.append(write_svg(run_dir / "transients.svg",
                           [("T - ln(1/eps)", np.log(L), np.array([r.T_eps for r in res]) - L)],
                           title="transient timing", xlabel="ln ln(1/eps)", ylabel="T - ln(1/eps)"))
    summary = f"slope={fit.slope:.4f} +- {fit.stderr:.4f}, ratio spread={fit.ratio_spread:.4f}"
    return files, rep, summary


def cmd_fracop_check(args, run_dir):
    from .fracop import FracOperator, apply_frac_lap, kernel_tail_check

    if not 0 < args.alpha < 1:
        raise ConfigError(f"alpha out of range: {args.alpha}")
    op = FracOperator(args.alpha, math.pi, args.nx)
    x = op.grid
    rows = []
    for m in range(1, args.nx // 4 + 1):
        f = np.sin(m * x)
        err = float(np.max(np.abs(apply_frac_lap(op, f) - m ** (2 * args.alpha) * f)))
        rows.append((m, err))
    files = [write_csv(run_dir / "eigen_errors.csv", ["mode", "max_error"], rows)]
    X, n = 160.0, 4096  # wide enough that periodic images stay below 1e-3 for alpha >= 1/4
    g = np.exp(-fracop.road_grid(X, n) ** 2)
    sp = apply_frac_lap(FracOperator(args.alpha, X, n), g)
    qu = apply_frac_lap(FracOperator(args.alpha, X, n, "quadrature"), g)
    inner = np.abs(fracop.road_grid(X, n)) <= X / 2
    gauss = float(np.max(np.abs(sp - qu)[inner]) / np.max(np.abs(qu)))
    tail = kernel_tail_check(args.alpha, 5.0, np.geomspace(100, 1000, 11))
    files.append(write_csv(run_dir / "kernel_tail.csv", ["x", "ratio", "far_field"],
                           np.column_stack([tail.x, tail.ratio, tail.far_field])))
    worst = max(e for _, e in rows)
    out = dict(max_eigen_error=worst, gaussian_rel_diff=gauss, tail_variation=tail.last_decade_variation)
    print("mode  max_error")
    for m, e in rows:
        print(f"{m:4d}  {e:.3e}")
    summary = f"eigen max err={worst:.2e}, spectral vs quadrature={gauss:.2e}, tail var={tail.last_decade_variation:.3f}"
    return files, out, summary


def cmd_kernel_asymptote(args, run_dir):
    pred = kernel_asymptote(args.t, args.x, args.alpha, args.mu, args.k)
    out = dict(constant=pred.constant, leading=float(pred.leading), envelope=float(pred.envelope))
    files = [write_json(run_dir / "prediction.json", out)]
    summary = f"constant={pred.constant:.6f} u~{float(pred.leading):.6e} at t={args.t:g}, x={args.x:g}"
    return files, out, summary


def cmd_fit(args, run_dir):
    header, data = read_csv(args.trace)
    if data.shape[1] < 2:
        raise UsageError("trace CSV needs columns t, x")
    lam_star = args.a / (1 + 2 * args.alpha)
    tr = LevelSetTrace(float("nan"), data[:, 0], data[:, 1], np.isfinite(data[:, 1]) & (data[:, 1] > 0))
    if args.window:
        tr = tr.window(*args.window)
    fit = fit_drift_exponent(tr, lam_star)
    out = dict(m_hat=fit.m, stderr=fit.stderr, n=fit.n, span=fit.span, lambda_star=lam_star)
    files = [write_json(run_dir / "fit.json", out)]
    return files, out, f"m_hat={fit.m:.4f} +- {fit.stderr:.4f} (n={fit.n})"


def cmd_renorm(args, run_dir):
    params = make_params(_raw_params(args, "renorm"))
    res = run_simulation(SimulationRun(params, _snapshots(params.t_final, args.every)))
    m_star = params.drift_exponent
    files, scores = [], {}
    for label, m in (("m0", 0.0), ("mstar", m_star), ("m2star", 2 * m_star)):
        tab = renormalized_samples(res.trajectory, m, params.lambda_star, late_start=args.late_start)
        scores[label] = tab.score
        rows = [(t, s, v) for i, t in enumerate(tab.times) for s, v in zip(tab.s, tab.values[i]) if np.isfinite(v)]
        files.append(write_csv(run_dir / f"renorm_{label}.csv", ["t", "s", "u"], rows))
        keep = [i for i, t in enumerate(tab.times) if t >= 1 and np.all(np.isfinite(tab.values[i]))]
        cols = time_gradient(len(keep))
        files.append(write_svg(run_dir / f"renorm_{label}.svg",
                               [(f"t={tab.times[i]:g}", tab.s, tab.values[i]) for i in keep],
                               title=f"u(t, s t^-m e^(lambda* t)), m={m:.3g}", xlabel="s", ylabel="u",
                               logx=True, colors=cols))
    summary = " ".join(f"score({k})={v:.4f}" for k, v in scores.items())
    return files, dict(scores=scores, m_star=m_star), summary


def cmd_probes(args, run_dir):
    params = make_params(_raw_params(args, "probes"))
    road = [probe_road_to_field(communication_run(params, e, "road", args.L), 0.0, 0.0, args.L, e) for e in args.eps]
    field = [probe_field_to_road(communication_run(params, e, "field", args.L), 0.0, 0.0, args.L, e)
             for e in args.eps]
    lem = [probe_dirichlet_box(x0, params.alpha) for x0 in args.x0]
    files = [
        write_csv(run_dir / "road_to_field.csv", ["eps", "constant"], [(r.eps, r.constant) for r in road]),
        write_csv(run_dir / "field_to_road.csv", ["eps", "constant"], [(r.eps, r.constant) for r in field]),
        write_csv(run_dir / "dirichlet_box.csv", ["x0", "eps", "T1", "q", "q_linear"],
                  [(r.x0, r.eps, r.T1, r.q, r.q_linear) for r in lem]),
    ]
    qs = np.array([r.q for r in lem])
    out = dict(road_to_field_variation=eps_sweep_variation(road), field_to_road_variation=eps_sweep_variation(field),
               q=qs.tolist(), q_variation=float(qs.max() / qs.min()))
    summary = (f"c_road->field={min(r.constant for r in road):.4g} c_field->road={min(r.constant for r in field):.4g} "
               f"q={qs.min():.4f}..{qs.max():.4f}")
    return files, out, summary


COMMANDS = {
    "simulate": cmd_simulate,
    "linearized": cmd_linearized,
    "kpp1d": cmd_kpp1d,
    "fracop-check": cmd_fracop_check,
    "kernel-asymptote": cmd_kernel_asymptote,
    "fit": cmd_fit,
    "renorm": cmd_renorm,
    "probes": cmd_probes,
}


def main(argv=None) -> int:
    ap = _parser()
    args = ap.parse_args(argv)  # exits with status 2 on bad usage
    threads = os.environ.get("FRONTLAB_THREADS")
    if threads:
        try:
            fracop.set_threads(int(threads))
        except ValueError:
            print(f"frontlab: FRONTLAB_THREADS must be an integer, got {threads!r}", file=sys.stderr)
            return 2
    payload = {k: v for k, v in vars(args).items() if k != "out"}
    t0 = time.perf_counter()
    run_dir = None
    try:
        run_dir = _run_dir(args.out, args.command, payload)
        files, out, summary = COMMANDS[args.command](args, run_dir)
        _finish(run_dir, args.command, payload, files, out, t0)
    except (UsageError, ConfigError) as exc:
        ap.print_usage(sys.stderr)
        print(f"frontlab: error: {exc}", file=sys.stderr)
        return 2
    except (InstabilityError, ArithmeticError, RuntimeError, ValueError) as exc:
        where = f" (partial outputs in {run_dir})" if run_dir is not None else ""
        print(f"frontlab: numerical failure: {exc}{where}", file=sys.stderr)
        return 1
    print(f"{args.command}: {summary} -> {run_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
