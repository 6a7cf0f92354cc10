"""Command line entry point: ``bcwfsim {spectrum,run,builtin,validate}``."""

import argparse
import os
import sys

import numpy as np

from ..errors import ConfigurationError, SimulationError
from ..grid_potential import SpatialGrid, build_double_barrier, build_flat
from ..spectral import resonance_search, transmission_spectrum
from . import io
from .builtins import builtin_names, run_builtin
from .runner import StageError, run_scenario, with_seed
from .scenario import ScenarioSpec, load_scenario, validate_scenario


def _common(parser):
    parser.add_argument("--seed", type=int, default=None, help="ensemble seed (overrides run.seed)")
    parser.add_argument("--out-dir", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for independent sub-runs")


def build_parser():
    parser = argparse.ArgumentParser(prog="bcwfsim",
                                     description="Bohmian conditional wave function simulator")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    p = sub.add_parser("spectrum", help="transmission spectrum T(E), R(E) as CSV")
    p.add_argument("scenario", nargs="?", default=None,
                   help="scenario file (default: the built-in double barrier)")
    p.add_argument("--e-min", type=float, default=None)
    p.add_argument("--e-max", type=float, default=None)
    p.add_argument("--dE", type=float, default=None)
    _common(p)
    p = sub.add_parser("run", help="run a scenario file")
    p.add_argument("scenario")
    _common(p)
    p = sub.add_parser("builtin", help="run a code-registered scenario")
    p.add_argument("name", choices=builtin_names())
    _common(p)
    p = sub.add_parser("validate", help="parse and check a scenario file")
    p.add_argument("scenario")
    _common(p)
    return parser


def _spectrum(args):
    spec = load_scenario(args.scenario) if args.scenario else ScenarioSpec(name="spectrum")
    validate_scenario(spec)
    g = spec.grid
    grid = SpatialGrid(g.x_min_nm, g.x_max_nm, g.n_x)
    p = spec.potential
    if p.kind == "flat":
        potential = build_flat(grid, p.level_eV)
    else:
        potential = build_double_barrier(grid, p.well_width_nm, p.barrier_thickness_nm,
                                         p.barrier_height_eV)
    b = spec.basis
    e_min = b.e_min_eV if args.e_min is None else args.e_min
    e_max = b.e_max_eV if args.e_max is None else args.e_max
    dE = b.dE_eV if args.dE is None else args.dE
    if not (0 < e_min < e_max) or dE <= 0:
        raise ConfigurationError("need 0 < e_min < e_max and dE > 0", "--e-min")
    energies = np.arange(e_min, e_max + 0.5 * dE, dE)
    _, t, r = transmission_spectrum(potential, energies)
    out = args.out_dir or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "spectrum.csv")
    io.write_columns(path, ["E_eV", "T", "R"], [energies, t, r])
    top = float(np.max(potential.values))
    if top > 0:
        res = resonance_search(potential, (0.002, top))
        print("resonances_eV = " + " ".join(f"{e:.6f}" for e in res))
    print(f"wrote {path}")


def _run(args):
    spec = load_scenario(args.scenario)
    if args.seed is not None:
        spec = with_seed(spec, args.seed)
    out = args.out_dir or os.path.join("runs", spec.name)
    result = run_scenario(spec, out)
    print(f"{spec.name}: ok ({result.summary['runtime_s']} s) -> {out}")


def _builtin(args):
    out = args.out_dir or os.path.join("runs", args.name)
    results, post = run_builtin(args.name, out, seed=args.seed, threads=max(1, args.threads))
    for label, res in results.items():
        print(f"{args.name}/{label}: ok ({res.summary['runtime_s']} s) -> {res.out_dir}")
    if post:
        for key, value in post.items():
            print(f"{key} = {value:.6g}")


def _validate(args):
    spec = validate_scenario(load_scenario(args.scenario))
    print(f"{spec.name}: valid ({spec.run.solver}, {len(spec.events)} event(s))")


COMMANDS = {"spectrum": _spectrum, "run": _run, "builtin": _builtin, "validate": _validate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except StageError as exc:
        print(f"bcwfsim: error: {exc}", file=sys.stderr)
        return 1
    except ConfigurationError as exc:
        print(f"bcwfsim: error: stage 'configuration' failed: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"bcwfsim: error: stage 'input' failed: {exc}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"bcwfsim: error: stage '{args.command}' failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
