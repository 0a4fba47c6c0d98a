"""Command-line entry point: ``chemflux run|resume|threshold|lemma44|eig``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import solvers
from .config import ConfigError, _float, _ints, load_config
from .fluid import FitError, FluidSolverOptions, estimate_lambda1_stokes
from .grid import make_grid, neumann_lambda1
from .integral_bound import IntegralBoundParams, check_integral_lemma
from .runner import CsvSink, RunSummary, SnapshotSink, resume_simulation, run_simulation
from .sensitivity import Envelope, smallness_threshold
from .snapshot import SnapshotFormatError
from .solvers import SolverError


def _print_summary(summary: RunSummary, out) -> None:
    rec = summary.final
    print(f"steps: {summary.steps}  wall: {summary.wall_time:.2f}s  t: {rec.t:.6g}", file=out)
    adm = summary.admissibility
    print(f"smallness: {'admissible' if adm.admissible else 'NOT admissible'} (margin {adm.margin:.6g})", file=out)
    sp = summary.spectral
    line = f"lambda1 (Neumann): {sp.lambda1_neumann_continuum:.6g}"
    if sp.lambda1_stokes is not None:
        line += f"  lambda1' (Stokes estimate): {sp.lambda1_stokes:.6g}"
    print(line, file=out)
    for name, fit in summary.rates.items():
        target = summary.targets.get(name)
        if fit is None:
            print(f"rate {name}: not fitted ({summary.fit_errors.get(name)})", file=out)
            continue
        tgt = "" if target is None else f"  target >= {target:.4g}"
        print(f"rate {name}: {fit.rate:.6g} (r2 {fit.r_squared:.6f}, window {fit.window[0]:.4g}..{fit.window[1]:.4g}){tgt}", file=out)
    if summary.solver_failure:
        print(f"solver failure: {summary.solver_failure}", file=out)
    print(f"violations: {len(summary.violations)}", file=out)
    for v in summary.violations[:20]:
        print(f"  {v}", file=out)


def _sinks(out_dir: Path | None, append: bool = False):
    if out_dir is None:
        return []
    out_dir.mkdir(parents=True, exist_ok=True)
    return [CsvSink(out_dir / "diagnostics.csv", append=append), SnapshotSink(out_dir / "snapshots")]


def cmd_run(args) -> int:
    solvers.set_serial(args.serial)
    config = load_config(args.config)
    out = Path(args.out) if args.out else None
    sinks = _sinks(out)
    try:
        summary = run_simulation(config, sinks, checkpoint_dir=out / "checkpoints" if out else None)
    finally:
        for s in sinks:
            s.close()
    _print_summary(summary, sys.stdout)
    return summary.exit_code


def cmd_resume(args) -> int:
    solvers.set_serial(args.serial)
    out = Path(args.out) if args.out else None
    sinks = _sinks(out, append=out is not None and (out / "diagnostics.csv").exists())
    try:
        summary, _ = resume_simulation(args.checkpoint, sinks, checkpoint_dir=out / "checkpoints" if out else None)
    finally:
        for s in sinks:
            s.close()
    _print_summary(summary, sys.stdout)
    return summary.exit_code


def cmd_threshold(args) -> int:
    th = smallness_threshold(args.p, args.h, Envelope(args.s0))
    print(f"delta0 = {th.delta0:.17g}")
    print(f"binding = {th.binding}")
    return 0


def cmd_lemma44(args) -> int:
    params = IntegralBoundParams(args.eta, args.alpha, args.beta, args.gamma, args.delta)
    rep = check_integral_lemma(params)
    for t, r in zip(sorted(params.t_samples), rep.ratios):
        print(f"t={t:<6g} ratio={r:.10g}")
    print(f"fitted C = {rep.fitted_C:.10g}")
    print(f"spearman = {rep.spearman:.4f}  tail growth = {rep.tail_growth:.4g}")
    print(f"bound {'holds' if rep.holds else 'VIOLATED'}")
    return 0 if rep.holds else 2


def cmd_eig(args) -> int:
    cells = _ints(args.grid)
    extents = _float_list(args.extents, len(cells)) if args.extents else [1.0] * len(cells)
    grid = make_grid(len(cells), extents, cells)
    info = neumann_lambda1(grid)
    print(f"lambda1 Neumann (continuum) = {info.lambda1_neumann_continuum:.12g}")
    print(f"lambda1 Neumann (discrete)  = {info.lambda1_neumann_discrete:.12g}")
    if not args.no_stokes:
        lam = estimate_lambda1_stokes(grid, FluidSolverOptions(), seed=args.seed)
        print(f"lambda1' Stokes (estimate)  = {lam:.12g}")
    return 0


def _float_list(text: str, n: int) -> list[float]:
    vals = [_float(v) for v in text.replace("x", ",").split(",") if v.strip()]
    if len(vals) != n:
        raise ConfigError(f"--extents needs {n} values, got {len(vals)}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chemflux", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a simulation from a config file or preset name")
    p.add_argument("config")
    p.add_argument("--out", help="directory for diagnostics.csv, snapshots and checkpoints")
    p.add_argument("--serial", action="store_true", help="single-threaded FFTs (bitwise reproducible)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("resume", help="continue from a checkpoint directory")
    p.add_argument("checkpoint")
    p.add_argument("--out")
    p.add_argument("--serial", action="store_true")
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("threshold", help="smallness threshold delta0 for the weighted functional")
    p.add_argument("--p", type=_float, required=True)
    p.add_argument("--h", type=_float, required=True)
    p.add_argument("--s0", type=_float, required=True)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("lemma44", help="quadrature check of the singular convolution bound")
    for name in ("eta", "alpha", "beta", "gamma", "delta"):
        p.add_argument(f"--{name}", type=_float, required=True)
    p.set_defaults(func=cmd_lemma44)

    p = sub.add_parser("eig", help="first Neumann and Stokes eigenvalues of a grid")
    p.add_argument("--grid", required=True, help="cells per axis, e.g. 64x64")
    p.add_argument("--extents", help="box lengths, e.g. 1x2 (default unit box)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-stokes", action="store_true", help="skip the free-decay Stokes estimate")
    p.set_defaults(func=cmd_eig)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"chemflux: solver failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, SnapshotFormatError, FitError, ValueError) as exc:
        print(f"chemflux: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
