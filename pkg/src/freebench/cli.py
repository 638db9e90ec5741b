"""Command line interface: freebench <command> [options].

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from . import bench, fitting, neural
from .core import (
    DEG, KPA, MM, NMM, DatasetFormatError, FreeModelError, GeneralizedForce, KinematicState,
    read_dataset, write_dataset,
)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _num(x: float) -> str:
    return repr(float(x) + 0.0)  # no signed zeros in output


def _load_params(path, expect: str | None = None):
    try:
        params = fitting.load_params(path)
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"{path}: not a parameter file ({exc})") from None
    if expect is not None and fitting.model_tag(params) != expect:
        raise UsageError(f"{path} holds {fitting.model_tag(params)} parameters, not {expect}")
    return params


def _read(path):
    try:
        return read_dataset(path)
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None


def cmd_synth(args) -> int:
    if args.designs == "table1":
        designs = bench.table1_designs()
    else:
        designs = bench.read_designs(args.designs)
    truth = _load_params(args.truth)
    grid = bench.load_grid(args.grid)
    ds = bench.generate_synthetic(designs, grid, truth, args.noise, args.seed)
    write_dataset(ds, args.output)
    n_flag = sum(r.buckled for r in ds.records)
    print(f"wrote {len(ds)} records ({n_flag} flagged) to {args.output}")
    return EXIT_OK


def cmd_fit(args) -> int:
    train = _read(args.train)
    if not 0.0 < args.val_frac < 1.0:
        raise UsageError("--val-frac must lie in (0, 1)")
    result = fitting.fit_model(args.model, train, args.seed, val_frac=args.val_frac)
    result.save(args.output)
    print(f"{args.model}: training E = {100 * result.training_error_E:.4f}% "
          f"after {result.iterations} iterations")
    if not result.converged:
        print("warning: optimizer did not report convergence", file=sys.stderr)
    return EXIT_OK


def cmd_predict(args) -> int:
    params = _load_params(args.params, args.model)
    design = bench.parse_design(args.design)
    q = KinematicState(design.length_L + args.dl * MM, args.dphi * DEG)
    P = args.pressure * KPA
    if P < 0:
        raise UsageError("pressure must be non-negative")
    if isinstance(params, neural.NetworkParams):
        with warnings.catch_warnings():
            warnings.simplefilter("always", neural.ExtrapolationWarning)
            tau = neural.forward(q, P, design, params)
    else:
        from . import continuum, lumped

        tau = (lumped.predict(q, P, design, params) if args.model == "lumped"
               else continuum.predict(q, P, params, design))
    print(f"F_N={_num(tau.axial_force_F)}")
    print(f"M_Nmm={_num(tau.axial_moment_M / NMM)}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    params = _load_params(args.params)
    test = _read(args.test)
    diag: dict = {}
    E = fitting.evaluate(params, test, diagnostics=diag)
    print(f"{100 * E:.4f}")
    if diag.get("n_failed"):
        print(f"warning: model failed on {diag['n_failed']} of {diag['n_records']} records",
              file=sys.stderr)
    return EXIT_OK


def cmd_heatmap(args) -> int:
    data_dir = Path(args.data_dir)
    if not data_dir.is_dir():
        raise UsageError(f"not a directory: {data_dir}")
    paths = sorted(data_dir.glob("*.csv"))
    if not paths:
        raise UsageError(f"no .csv files in {data_dir}")
    datasets = bench.datasets_from_files(paths)
    result = bench.run_heatmap(datasets, args.model, args.seed, workers=args.workers)
    bench.emit_heatmap(result, args.output, args.svg)
    print(f"{args.model}: {result.errors.size} cells, mean E = {100 * result.mean:.2f}%")
    for key, reason in result.failures.items():
        print(f"failed {key}: {reason}", file=sys.stderr)
    return EXIT_OK


def cmd_invert(args) -> int:
    params = _load_params(args.params)
    design = bench.parse_design(args.design)
    target = GeneralizedForce(args.force, args.moment * NMM)
    q0 = KinematicState(design.length_L + args.dl0 * MM, args.dphi0 * DEG)
    q = bench.invert(target, args.pressure * KPA, design, params, q0)
    print(f"dl_mm={_num((q.length_l - design.length_L) / MM)}")
    print(f"dphi_deg={_num(q.twist_phi / DEG)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="freebench", description="Force models of fiber-reinforced elastomeric actuators.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    tags = list(fitting.MODEL_TAGS)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--designs", required=True, help="design table CSV, or 'table1'")
    s.add_argument("--truth", required=True, help="parameter JSON of the generating model")
    s.add_argument("--grid", default="default", help="'default' or a grid JSON file")
    s.add_argument("--noise", type=float, default=0.0, help="noise level relative to max |F|, |M|")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("fit", help="identify model parameters from a dataset")
    s.add_argument("--model", required=True, choices=tags)
    s.add_argument("--train", required=True)
    s.add_argument("--val-frac", type=float, default=0.16, help="validation share (neural only)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", help="force and moment at one state")
    s.add_argument("--model", required=True, choices=tags)
    s.add_argument("--params", required=True)
    s.add_argument("--design", required=True, help="sample number 1-8 or gamma_deg,L_mm,Ri_mm,Ro_mm")
    s.add_argument("--dl", type=float, required=True, help="length change (mm)")
    s.add_argument("--dphi", type=float, required=True, help="twist (deg)")
    s.add_argument("--pressure", type=float, required=True, help="gauge pressure (kPa)")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", help="normalized error (percent) on a dataset")
    s.add_argument("--params", required=True)
    s.add_argument("--test", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("heatmap", help="train/test cross-evaluation matrix")
    s.add_argument("--model", required=True, choices=tags)
    s.add_argument("--data-dir", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--svg")
    s.set_defaults(func=cmd_heatmap)

    s = sub.add_parser("invert", help="state producing a given force and moment")
    s.add_argument("--params", required=True)
    s.add_argument("--force", type=float, required=True, help="axial force (N)")
    s.add_argument("--moment", type=float, required=True, help="axial moment (N*mm)")
    s.add_argument("--pressure", type=float, required=True, help="gauge pressure (kPa)")
    s.add_argument("--design", required=True, help="sample number 1-8 or gamma_deg,L_mm,Ri_mm,Ro_mm")
    s.add_argument("--dl0", type=float, default=0.0, help="initial length change (mm)")
    s.add_argument("--dphi0", type=float, default=0.0, help="initial twist (deg)")
    s.set_defaults(func=cmd_invert)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FreeModelError as exc:
        print(f"freebench: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, DatasetFormatError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"freebench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"freebench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
