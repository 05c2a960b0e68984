"""Command-line front end: scenario runs, sweeps and single-shot analyses.

Exit codes: 0 success, 2 validation error, 3 lock lost, 4 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import harmonics, metrics, traceio
from .scenario import (LockLostError, ScenarioError, load_scenario,
                       run_scenario, sweep)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_LOCK_LOST = 3
EXIT_IO = 4

OUT_ENV = "ECDLSIM_OUT"


def _default_out(name: str) -> Path:
    root = os.environ.get(OUT_ENV, ".")
    return Path(root) / name


def _add_common(p):
    p.add_argument("--scenario", required=True, help="scenario config file")
    p.add_argument("--out", default=None, help="output directory "
                   f"(default: $%s/<scenario name>)" % OUT_ENV)
    p.add_argument("--seed", type=int, default=None,
                   help="override the scenario seed list with one seed")
    p.add_argument("--allow-unlock", action="store_true",
                   help="exit 0 even if the loop does not lock")
    p.add_argument("--jobs", type=int, default=1)


def _load(args, outputs=None):
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.seeds = [args.seed]
    if outputs is not None:
        scenario.analysis["outputs"] = outputs
    out = Path(args.out) if args.out else _default_out(scenario.name)
    return scenario, out


def _cmd_simulate(args):
    scenario, out = _load(args)
    summary = run_scenario(scenario, out, allow_unlock=args.allow_unlock)
    for seed, locked, nsat, phi2, cf, eff, det in summary["rows"]:
        state = "locked" if locked else "UNLOCKED"
        print(f"seed {seed}: {state}  phi2={phi2:.4g} rad^2  "
              f"carrier={cf:.4f}  eta={eff:.4f}  sat={nsat}")
    print(f"outputs in {summary['out']}")
    return EXIT_OK


def _cmd_psd(args):
    scenario, out = _load(args, outputs=["psd"])
    run_scenario(scenario, out, allow_unlock=args.allow_unlock)
    print(out / "psd.csv")
    return EXIT_OK


def _cmd_allan(args):
    scenario, out = _load(args, outputs=["allan"])
    run_scenario(scenario, out, allow_unlock=args.allow_unlock)
    print(out / "allan.csv")
    return EXIT_OK


def _cmd_efficiency(args):
    if args.phi2 is not None:
        phi2 = args.phi2
    else:
        if args.scenario is None:
            raise ScenarioError("efficiency: give --phi2 or --scenario")
        scenario = load_scenario(args.scenario)
        if args.seed is not None:
            scenario.seeds = [args.seed]
        scenario.analysis["outputs"] = ["efficiency"]
        out = Path(args.out) if args.out else _default_out(scenario.name)
        summary = run_scenario(scenario, out, allow_unlock=args.allow_unlock)
        phi2 = float(np.mean([r[3] for r in summary["rows"]]))
    eta = harmonics.excitation_efficiency(phi2, args.photons)
    print(f"phi2_rms_rad2 {phi2!r}")
    print(f"carrier_fraction {harmonics.carrier_fraction(phi2)!r}")
    print(f"efficiency_n{args.photons} {eta!r}")
    return EXIT_OK


def _cmd_lineshape(args):
    grid = np.linspace(-args.span / 2, args.span / 2, args.points)
    df = grid[1] - grid[0]
    f = np.arange(-4 * args.points, 4 * args.points + 1) * df
    laser = metrics.SpectrumEstimate(
        freqs=f, psd=harmonics.lorentzian(f, max(args.laser_fwhm, df / 10)),
        rbw=df, averages=1, kind="field")
    prof = harmonics.excitation_spectrum(laser, args.natural_width,
                                         args.transit_width, grid)
    out = Path(args.out) if args.out else _default_out("lineshape.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    traceio.profile_to_csv(grid, prof, out)
    print(out)
    return EXIT_OK


def _cmd_sweep(args):
    grid = {}
    for spec in args.param:
        dotted, _, values = spec.partition("=")
        if not values:
            raise ScenarioError(f"sweep: bad --param {spec!r}, "
                                "expected section.key=v1,v2,...")
        grid[dotted] = values.split(",")
    out = Path(args.out) if args.out else _default_out("sweep")
    results = sweep(args.scenario, grid, out, jobs=args.jobs,
                    allow_unlock=args.allow_unlock)
    lost = [r for r in results if r[2]]
    print(f"{len(results)} points, {len(lost)} lost lock; "
          f"aggregate in {out}/sweep.csv")
    if lost and not args.allow_unlock:
        return EXIT_LOCK_LOST
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecdlsim",
        description="Cavity-stabilized diode laser simulation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario end to end")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("psd", help="residual phase PSD of a scenario")
    _add_common(p)
    p.set_defaults(func=_cmd_psd)

    p = sub.add_parser("allan", help="Allan deviation of a scenario")
    _add_common(p)
    p.set_defaults(func=_cmd_allan)

    p = sub.add_parser("efficiency",
                       help="carrier fraction and n-photon efficiency")
    p.add_argument("--phi2", type=float, default=None,
                   help="integrated phase noise, rad^2 (skips simulation)")
    p.add_argument("--photons", type=int, default=8)
    p.add_argument("--scenario", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--allow-unlock", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_efficiency)

    p = sub.add_parser("lineshape",
                       help="two-photon excitation line profile")
    p.add_argument("--laser-fwhm", type=float, required=True,
                   help="laser field FWHM at 243 nm, Hz")
    p.add_argument("--natural-width", type=float, default=1.3)
    p.add_argument("--transit-width", type=float, default=1e3)
    p.add_argument("--span", type=float, default=2e4)
    p.add_argument("--points", type=int, default=801)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_lineshape)

    p = sub.add_parser("sweep", help="Cartesian parameter sweep")
    _add_common(p)
    p.add_argument("--param", action="append", required=True,
                   metavar="section.key=v1,v2,...",
                   help="repeatable numeric grid specification")
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except LockLostError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOCK_LOST
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
