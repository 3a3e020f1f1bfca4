"""Command-line entry point ``oldroyd-cq``.

Subcommands::

    weights --generator {be,sbd} --gamma G --tau T -n N
    solve   --config FILE [--snapshots out.csv]
    oracle  --case {a,b,c,d} --t T --grid G [--alpha A --beta B ...]
    run     --config FILE [--out DIR] [--format csv|md]
    table   --name {t1,t2,t3,t4,t6} [--desk-scale | --full-scale]

Config files are YAML mappings whose keys are the field names of the target
(``ExperimentConfig`` for ``run``; model constants plus ``m``, ``N`` and
solver options for ``solve``).
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .core import ModelParams, make_case
from .cq import weights
from .fem import initial_vector, system_for
from .oracle import reference_solution
from .report import ExperimentConfig, emit, run_experiment, run_table
from .stepper import solve

log = logging.getLogger("oldroyd_cq")

SOLVE_KEYS = {"alpha", "beta", "a", "b", "mu", "T", "case", "scheme", "m", "N",
              "projection", "store_every"}


class CliError(Exception):
    pass


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise CliError(f"malformed config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise CliError(f"config {path} must be a key-value mapping")
    return data


def cmd_weights(args) -> int:
    w = weights(args.generator, args.gamma, args.tau, args.n)
    out = sys.stdout
    for value in w.weights:
        out.write(f"{value:.16e}\n")
    return 0


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    unknown = set(cfg) - SOLVE_KEYS
    if unknown:
        raise CliError(f"unknown solve keys: {', '.join(sorted(unknown))}")
    if "alpha" not in cfg or "beta" not in cfg:
        raise CliError("solve config needs alpha and beta")
    params = ModelParams(*(float(cfg[k]) for k in ("alpha", "beta")),
                         **{k: float(cfg[k]) for k in ("a", "b", "mu", "T") if k in cfg})
    case = make_case(str(cfg.get("case", "a")), params)
    m, N = int(cfg.get("m", 32)), int(cfg.get("N", 100))
    store_every = int(cfg.get("store_every", 1))
    sys_ = system_for(m)
    v = initial_vector(sys_, case.initial, str(cfg.get("projection", "l2")))
    traj = solve(cfg.get("scheme", "sbd"), sys_, params, v, case.source, N,
                 store_every=store_every)
    final = traj.final
    l2 = float(np.sqrt(final @ (sys_.M @ final)))
    print(f"scheme={traj.scheme.value} m={m} N={N} T={params.T:g} "
          f"final_l2={l2:.10e} max={np.max(np.abs(final)):.10e}")
    if args.snapshots:
        pts = sys_.mesh.dof_points
        with open(args.snapshots, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(("n", "t", "x", "y", "value"))
            for n, t, row in zip(traj.steps, traj.times, traj.snapshots):
                for (x, y), value in zip(pts, row):
                    writer.writerow((int(n), repr(float(t)), repr(float(x)), repr(float(y)),
                                     repr(float(value))))
    return 0


def cmd_oracle(args) -> int:
    params = ModelParams(args.alpha, args.beta, args.a, args.b, args.mu, max(args.T, args.t))
    case = make_case(args.case, params)
    if args.grid < 1:
        raise CliError("--grid must be positive")
    s = np.linspace(0.0, 1.0, args.grid + 1)
    X, Y = np.meshgrid(s, s, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    values = reference_solution(params, case, args.t, pts, args.mode_cut)
    writer = csv.writer(sys.stdout)
    writer.writerow(("x", "y", "value"))
    for (x, y), value in zip(pts, values):
        writer.writerow((repr(float(x)), repr(float(y)), repr(float(value))))
    return 0


def _report_name(cfg: ExperimentConfig, ext: str) -> str:
    return f"{cfg.study}_{cfg.case}_{cfg.scheme}_a{cfg.alpha:g}_b{cfg.beta:g}.{ext}"


def cmd_run(args) -> int:
    data = load_config(args.config)
    if args.format is not None:
        data["format"] = args.format
    if args.out is not None:
        data["out_dir"] = args.out
    cfg = ExperimentConfig.from_mapping(data)
    report = run_experiment(cfg)
    path = None
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / _report_name(cfg, cfg.format)
    text = emit(report, cfg.format, path)
    if path is None:
        sys.stdout.write(text)
    else:
        log.info("wrote %s", path)
    return 0


def cmd_table(args) -> int:
    def progress(rep):
        c = rep.config
        log.info("done case=%s scheme=%s alpha=%g beta=%g in %.1fs",
                 c.case, c.scheme, c.alpha, c.beta, rep.wall_time)

    _, text = run_table(args.name, args.desk_scale, progress)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oldroyd-cq", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("weights", help="print convolution-quadrature weights")
    p.add_argument("--generator", choices=("be", "sbd"), required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("-n", type=int, required=True, help="highest weight index")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("solve", help="run one fully discrete simulation")
    p.add_argument("--config", required=True)
    p.add_argument("--snapshots", help="CSV file for the stored time levels")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("oracle", help="spectral reference values on a uniform grid")
    p.add_argument("--case", choices=("a", "b", "c", "d"), required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--grid", type=int, required=True, help="grid intervals per side")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--T", type=float, default=0.5, help="horizon of the model (case c)")
    p.add_argument("--mode-cut", type=int, default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("run", help="run one convergence study from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="directory for the report file")
    p.add_argument("--format", choices=("csv", "md"))
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("table", help="run a named benchmark preset")
    p.add_argument("--name", choices=("t1", "t2", "t3", "t4", "t6"), required=True)
    scale = p.add_mutually_exclusive_group()
    scale.add_argument("--desk-scale", dest="desk_scale", action="store_true", default=True,
                       help="reduced resolutions (default)")
    scale.add_argument("--full-scale", dest="desk_scale", action="store_false",
                       help="fine reference resolutions; slow")
    p.set_defaults(func=cmd_table)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (CliError, ValueError, RuntimeError, OSError) as exc:
        print(f"oldroyd-cq: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
