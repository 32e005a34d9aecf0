"""Command-line interface.

Subcommands:
  run CONFIG     execute a convection run (or a Rayleigh-number sweep)
  check CONFIG   validate a config and print derived numbers
  toy SYSTEM     integrate a finite-dimensional thermodynamic system

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 I/O error.  The THERMOFEM_THREADS environment variable (and the
--deterministic flag, which forces one thread) pin the BLAS thread
count; they must be honored before numpy is first imported, which is
why the heavy imports live inside main().
"""

import argparse
import os
import sys


def _pin_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _build_parser():
    p = argparse.ArgumentParser(
        prog="thermofem",
        description="Structure-preserving compressible convection solver")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a configured run")
    run.add_argument("config", help="path to the config file")
    run.add_argument("--out", help="override the output directory")
    run.add_argument("--dt", type=float, help="override the time step")
    run.add_argument("--t-end", type=float, help="override the final time")
    run.add_argument("--ra-sweep", choices=("re", "m", "z", "pr"),
                     help="run the onset suite varying one parameter")
    run.add_argument("--deterministic", action="store_true",
                     help="single-threaded BLAS for bitwise reproducibility")

    chk = sub.add_parser("check", help="validate a config, print Ra/Fr/kappa/eta")
    chk.add_argument("config")

    toy = sub.add_parser("toy", help="integrate a toy thermodynamic system")
    toy.add_argument("system", choices=("oscillator", "heated"))
    toy.add_argument("--dt", type=float, default=0.01)
    toy.add_argument("--steps", type=int, default=1000)
    toy.add_argument("--out", help="CSV output path (default: stdout)")
    return p


def _cmd_run(args):
    from dataclasses import replace

    from . import scenario

    try:
        cfg = scenario.load_config(args.config)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}")
        return scenario.EXIT_CONFIG
    if args.dt is not None:
        cfg = replace(cfg, dt=args.dt)
    if args.t_end is not None:
        cfg = replace(cfg, t_end=args.t_end)
    if args.ra_sweep:
        return scenario.run_sweep(cfg, args.ra_sweep, out_dir=args.out)
    return scenario.run(cfg, out_dir=args.out)


def _cmd_check(args):
    from . import scenario

    try:
        cfg = scenario.load_config(args.config)
        ra = scenario.rayleigh_number(cfg)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}")
        return scenario.EXIT_CONFIG
    print(f"config ok: {args.config}")
    print(f"  Ra    = {ra:.6g}")
    print(f"  Fr    = {cfg.Fr:.6g}")
    print(f"  kappa = {cfg.kappa:.6g}")
    print(f"  eta   = {cfg.eta_factor * cfg.kappa:.6g}")
    print(f"  mesh  = {cfg.nx} x {cfg.ny}, DG_{cfg.q} / CG_{cfg.r}^2, "
          f"bc = {cfg.bc_kind}, upwind = {cfg.upwind}")
    return scenario.EXIT_OK


def _cmd_toy(args):
    from . import toy as toylib
    from .errors import NonConvergenceError

    sys_ = (toylib.damped_oscillator() if args.system == "oscillator"
            else toylib.heated_oscillator())
    state = (1.0, 0.0, 0.0, 0.0)
    e0 = sys_.energy(state[0], state[1], state[2])
    lines = ["time,energy,entropy,energy_drift,boundary_flux"]
    lines.append(f"0,{e0:.17g},0,0,0")
    try:
        for _ in range(args.steps):
            new = toylib.step_discrete_gradient(sys_, state, args.dt)
            flux = toylib.midpoint_heat_flow(sys_, state, new, args.dt)
            state = new
            e = sys_.energy(state[0], state[1], state[2])
            lines.append(f"{state[3]:.17g},{e:.17g},{state[2]:.17g},"
                         f"{e - e0:.17g},{flux:.17g}")
    except NonConvergenceError as exc:
        print(f"solver failure: {exc}")
        return 3
    text = "\n".join(lines) + "\n"
    if args.out:
        try:
            with open(args.out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"i/o error: {exc}")
            return 4
        print(f"wrote {args.steps} steps to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    threads = os.environ.get("THERMOFEM_THREADS")
    if getattr(args, "deterministic", False):
        _pin_threads(1)
    elif threads:
        _pin_threads(threads)
    if args.command == "run":
        code = _cmd_run(args)
    elif args.command == "check":
        code = _cmd_check(args)
    else:
        code = _cmd_toy(args)
    return int(code)


if __name__ == "__main__":
    sys.exit(main())
