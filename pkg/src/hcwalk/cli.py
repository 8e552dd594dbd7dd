"""Command line entry point: ``hcwalk validate|solve|simulate|compare|report|replay``.

Exit codes: 0 success, 1 validation or parameter failure, 2 solver
failure, 3 I/O failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as hio
from .analysis import compare_fdd, compare_two_time, label_msd_slopes, occupation_fractions
from .corrector import CorrectorError, solve_correctors
from .environment import EnvironmentValidationError, check_document, lift_connectivity
from .samples import BUILTIN, builtin_path
from .simulate import RngStream, base_start, estimate, limit_sample, run_limit, run_walk, walk_sample
from .testfunctions import LIBRARY, library

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _cell(text):
    try:
        return tuple(int(a) for a in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"cell must look like 0 or 1,0; got {text!r}")


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser():
    p = _Parser(prog="hcwalk", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hcwalk {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def env_arg(sp):
        sp.add_argument("--env", required=True,
                        help=f"environment JSON file, or a bundled name: {', '.join(BUILTIN)}")

    def run_args(sp, out_required=True):
        sp.add_argument("--out", required=out_required, help="output directory")
        sp.add_argument("--workers", type=_positive_int, default=1,
                        help="worker processes (does not change results)")

    sp = sub.add_parser("validate", help="run every environment check")
    env_arg(sp)
    sp.add_argument("--lenient", action="store_true",
                    help="skip model-level checks (classes present, connectivity, irreducibility, rates)")

    sp = sub.add_parser("solve", help="solve correctors and write the effective model")
    env_arg(sp)
    run_args(sp)
    sp.add_argument("--method", choices=("cg", "pinned"), default="cg")

    sp = sub.add_parser("simulate", help="sample microscale and limit paths")
    env_arg(sp)
    run_args(sp)
    sp.add_argument("--eps", type=float, nargs="+", required=True)
    sp.add_argument("--T", type=float, default=1.0, help="time horizon")
    sp.add_argument("--paths", type=_positive_int, default=10000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--grid", type=_positive_int, default=128,
                    help="output grid points for recorded limit trajectories")
    sp.add_argument("--trajectories", type=int, default=0,
                    help="number of full trajectories per process to write")
    sp.add_argument("--start-cell", type=_cell, default=None)
    sp.add_argument("--no-limit", action="store_true", help="skip the limit process")

    sp = sub.add_parser("compare", help="compare microscale and limit expectations")
    env_arg(sp)
    run_args(sp)
    sp.add_argument("--eps", type=float, nargs="+", default=[0.4, 0.2, 0.1])
    sp.add_argument("--t", type=float, nargs="+", default=[0.25, 0.5])
    sp.add_argument("--paths", type=_positive_int, default=20000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tolerance", type=float, default=0.02,
                    help="absolute slack added to the combined 3-sigma band")
    sp.add_argument("--functions", nargs="+", default=["wide"], choices=LIBRARY)
    sp.add_argument("--micro", choices=("auto", "exact", "mc"), default="auto",
                    help="microscale side: exact semigroup, Monte Carlo, or exact when it fits")
    sp.add_argument("--exact-budget", type=_positive_int, default=2_000_000)
    sp.add_argument("--two-time", type=float, nargs=2, metavar=("T1", "T2"), default=None,
                    help="also compare E[F(X(T1)) F(X(T2))] by microscale Monte Carlo")
    sp.add_argument("--start-cell", type=_cell, default=None)

    sp = sub.add_parser("report", help="re-summarize a saved comparison report")
    sp.add_argument("--in", dest="source", required=True, help="report.json or its directory")
    sp.add_argument("--tolerance", type=float, default=None)
    sp.add_argument("--out", default=None)

    sp = sub.add_parser("replay", help="repeat a run from its manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out", default=None, help="override the output directory")
    sp.add_argument("--workers", type=_positive_int, default=1)
    return p


# ----------------------------------------------------------------------------

def _read_env_bytes(arg):
    path = Path(arg)
    if path.is_file():
        return path.read_bytes()
    if arg in BUILTIN:
        return builtin_path(arg).read_bytes()
    raise FileNotFoundError(f"no environment file or bundled environment named {arg!r}")


def _load_env(arg, strict=True):
    data = _read_env_bytes(arg)
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise EnvironmentValidationError("schema", f"not valid JSON: {exc}")
    report, env = check_document(doc, strict=strict)
    bad = report.first_failure
    if bad is not None:
        raise EnvironmentValidationError(bad.name, bad.message)
    return env, hio.sha256_bytes(data)


NOT_PARAMETERS = {"command", "env", "out", "workers"}


def _manifest(args, sha):
    params = {k: (list(v) if isinstance(v, tuple) else v)
              for k, v in sorted(vars(args).items()) if k not in NOT_PARAMETERS}
    return hio.RunManifest(args.command, args.env, sha, params, str(args.out))


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_validate(args):
    data = _read_env_bytes(args.env)
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        print(f"FAIL  schema             not valid JSON: {exc}")
        return EXIT_INVALID
    report, env = check_document(doc, strict=not args.lenient)
    for line in report.lines():
        print(line)
    if env is not None and report.ok:
        for k, verdict in lift_connectivity(env).items():
            print(f"INFO  lift {env.labels[k]}: {verdict.value}")
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_solve(args):
    env, sha = _load_env(args.env)
    correctors, model = solve_correctors(env, method=args.method)
    out = _outdir(args)
    hio.write_json(out / "model.json", hio.model_to_dict(model, env, correctors))
    hio.write_theta_csv(out / "theta.csv", model)
    hio.write_rates_csv(out / "rates.csv", model)
    _manifest(args, sha).write(out / "manifest.json")
    for k in range(model.n_fast):
        print(f"theta[{model.labels[k]}] = {model.theta[k].tolist()}")
    print(f"lambda = {model.lam.tolist()}")
    print(f"residuals = {correctors.residuals}")
    return EXIT_OK


def _check_eps(env, eps_list):
    for eps in eps_list:
        if not 0 < eps <= env.eps_max * (1 + 1e-12):
            raise UsageError(f"--eps {eps} is outside (0, eps_max={env.eps_max:.6g}]")


def _check_start(env, cell):
    if cell is None:
        return
    if len(cell) != env.dim:
        raise UsageError(f"--start-cell needs {env.dim} coordinates")
    flat = int(env.geometry.flat(cell))
    if env.partition.is_astral(int(env.partition.label_of[flat])):
        raise UsageError(f"--start-cell {cell} is an astral cell; pick a fast cell")


def cmd_simulate(args):
    env, sha = _load_env(args.env)
    _check_eps(env, args.eps)
    _check_start(env, args.start_cell)
    if args.T <= 0:
        raise UsageError("--T must be positive")
    out = _outdir(args)
    labels = env.labels
    samples, summary, trajs = [], [], []
    for i, eps in enumerate(args.eps):
        s = walk_sample(env, eps, [args.T], args.paths, args.seed, tag=i,
                        start_cell=args.start_cell, workers=args.workers)
        samples.append(s)
        trajs += [run_walk(env, eps, args.T, RngStream(args.seed, (2000 + i, p)), args.start_cell)
                  for p in range(args.trajectories)]
    if not args.no_limit:
        _, model = solve_correctors(env)
        start = (np.zeros(env.dim), base_start(env, args.start_cell)[1])
        samples.append(limit_sample(model, start, [args.T], args.paths, args.seed, tag=1000,
                                    workers=args.workers))
        trajs += [run_limit(model, start, args.T, RngStream(args.seed, (3000, p)), grid=args.grid)
                  for p in range(args.trajectories)]
    lattice0, _ = base_start(env, args.start_cell)
    for s in samples:
        x = s.positions[:, -1]
        x0 = lattice0 * s.eps if s.eps is not None else np.zeros(env.dim)
        sq = estimate(np.sum((x - x0) ** 2, axis=-1))
        row = {"process": s.kind, "eps": "" if s.eps is None else float(s.eps),
               "n_paths": int(len(x)), "T": float(args.T), "msd": sq.mean, "msd_stderr": sq.stderr}
        for i in range(env.dim):
            m = estimate(x[:, i])
            row[f"mean_x{i + 1}"] = m.mean
            row[f"mean_x{i + 1}_stderr"] = m.stderr
        counts = np.bincount(s.labels[:, -1], minlength=len(labels)) / len(x)
        for k, lab in enumerate(labels):
            row[f"frac_{lab}"] = float(counts[k])
        summary.append(row)
    hio.write_endpoints_csv(out / "endpoints.csv", samples, labels)
    hio.write_summary_csv(out / "summary.csv", summary)
    if trajs:
        hio.write_trajectories_csv(out / "trajectories.csv", trajs, labels)
        occ = [{"process": t.kind, "eps": "" if t.eps is None else float(t.eps), "path": p,
                **{f"occupation_{lab}": float(v) for lab, v in zip(labels, occupation_fractions([t], len(labels)))},
                **{f"slope_{lab}": float(v) for lab, v in zip(labels, label_msd_slopes([t], len(labels)))}}
               for p, t in enumerate(trajs)]
        hio.write_summary_csv(out / "trajectory_stats.csv", occ)
    _manifest(args, sha).write(out / "manifest.json")
    for row in summary:
        print(", ".join(f"{k}={v}" for k, v in row.items()))
    return EXIT_OK


def cmd_compare(args):
    env, sha = _load_env(args.env)
    _check_eps(env, args.eps)
    _check_start(env, args.start_cell)
    if any(t < 0 for t in args.t):
        raise UsageError("--t values must be nonnegative")
    _, model = solve_correctors(env)
    funcs = [library(name, env.labels) for name in args.functions]
    report = compare_fdd(env, model, funcs, args.t, args.eps, args.paths, args.seed,
                         start_cell=args.start_cell, micro=args.micro,
                         exact_budget=args.exact_budget, workers=args.workers,
                         abs_tol=args.tolerance)
    if args.two_time is not None:
        t1, t2 = sorted(args.two_time)
        for F in funcs:
            extra = compare_two_time(env, model, F, F, t1, t2, args.eps, args.paths, args.seed,
                                     start_cell=args.start_cell, workers=args.workers)
            report.rows += extra.rows
        report.summarize()
    out = _outdir(args)
    hio.write_json(out / "report.json", hio.report_to_dict(report))
    hio.write_report_csv(out / "report.csv", report)
    _manifest(args, sha).write(out / "manifest.json")
    print(report.table())
    return EXIT_OK


def cmd_report(args):
    src = Path(args.source)
    if src.is_dir():
        src = src / "report.json"
    doc = hio.read_json(src)
    if args.tolerance is not None:
        doc["abs_tol"] = args.tolerance
    report = hio.report_from_dict(doc)
    print(report.table())
    if args.out:
        out = _outdir(args)
        hio.write_json(out / "report.json", hio.report_to_dict(report))
        hio.write_report_csv(out / "report.csv", report)
        sha = hio.sha256_bytes(src.read_bytes())
        man = hio.RunManifest("report", str(args.source), sha,
                              {"tolerance": report.abs_tol}, str(args.out))
        man.write(out / "manifest.json")
    return EXIT_OK


def cmd_replay(args):
    man = hio.RunManifest.read(args.manifest)
    if man.version != __version__:
        print(f"warning: manifest written by version {man.version}, running {__version__}",
              file=sys.stderr)
    parser = build_parser()
    base = [man.command, "--env", man.environment, "--out", args.out or man.output]
    if man.command in ("validate", "report"):
        raise UsageError(f"cannot replay a {man.command!r} manifest")
    if man.command == "simulate":
        base += ["--eps", "1"]  # placeholder, overwritten below
    ns = parser.parse_args(base)
    for k, v in man.parameters.items():
        if k == "start_cell" and v is not None:
            v = tuple(v)
        setattr(ns, k, v)
    ns.workers = args.workers
    if man.environment_sha256 != hio.sha256_bytes(_read_env_bytes(man.environment)):
        raise EnvironmentValidationError("schema", "environment file changed since the manifest was written")
    return COMMANDS[ns.command](ns)


COMMANDS = {
    "validate": cmd_validate, "solve": cmd_solve, "simulate": cmd_simulate,
    "compare": cmd_compare, "report": cmd_report, "replay": cmd_replay,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except EnvironmentValidationError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CorrectorError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
