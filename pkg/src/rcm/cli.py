"""Command-line entry point.

Every subcommand resolves its configuration as defaults < JSON config file <
explicit flags, writes outputs atomically, and drops a manifest echoing the
resolved configuration next to them.  Exit codes: 0 success, 1 at least one
assertion failed (violations file written), 2 usage or configuration error.
"""

import argparse
import json
import math
import os
import sys
import tempfile
from types import SimpleNamespace

import numpy as np

from . import __version__, calibration, corrector, environment, ineq, moser, stats
from .solver import SolverConfig

_SPEC_KEYS = {
    "constant": {"c"},
    "uniform_elliptic": {"c_low", "c_high"},
    "iid_pareto_mix": {"a", "b"},
    "layered": {"axis", "profile"},
    "gff_exp": {"scale"},
}

_COMMON_DEFAULTS = {"config": None, "seed": None, "out": "rcm_out", "threads": None}

_DEFAULTS = {
    "env-gen": {"spec": None, "out": "env.rcme"},
    "corrector": {"env": None, "tol": 1e-10},
    "walk": {"env": None, "scheme": "vsrw", "t_max": 10.0, "count": 100,
             "keep_paths": 4},
    "clt": {"spec": None, "sizes": "16,32", "count": 1000, "t": 1.0,
            "scheme": "vsrw"},
    "moser": {"spec": None, "n": 16, "p": 3.0, "q": 3.0, "sigma": 1.0,
              "sigma_prime": 0.5, "corpus": None, "calibrate": False,
              "constants": None},
    "sobolev": {"trials": 100, "constants": None},
    "ineq": {"samples": 1_000_000},
    "poincare": {"trials": 100, "constants": None},
}


class ConfigError(Exception):
    pass


def _load_json(path, what):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {what} file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {what} file {path}: {exc}") from exc


def load_env_spec(path, seed_override=None) -> environment.EnvSpec:
    doc = _load_json(path, "environment spec")
    if not isinstance(doc, dict):
        raise ConfigError("environment spec must be a JSON object")
    kind = doc.get("kind")
    if kind not in _SPEC_KEYS:
        raise ConfigError(f"environment spec key 'kind' must be one of "
                          f"{sorted(_SPEC_KEYS)}, got {kind!r}")
    allowed = {"kind", "d", "n", "seed"} | _SPEC_KEYS[kind]
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in environment spec")
    missing = [k for k in ("d", "n") if k not in doc]
    missing += [k for k in _SPEC_KEYS[kind] if k not in doc]
    if missing:
        raise ConfigError(f"environment spec misses required key(s) {missing}")
    seed = seed_override if seed_override is not None else doc.get("seed", 0)
    d, n = int(doc["d"]), int(doc["n"])
    try:
        if kind == "constant":
            return environment.spec_constant(doc["c"], d, n, seed)
        if kind == "uniform_elliptic":
            return environment.spec_uniform_elliptic(doc["c_low"], doc["c_high"],
                                                     d, n, seed)
        if kind == "iid_pareto_mix":
            return environment.spec_iid_pareto_mix(doc["a"], doc["b"], d, n, seed)
        if kind == "layered":
            return environment.spec_layered(doc["axis"], doc["profile"], d, n, seed)
        return environment.spec_gff_exp(doc["scale"], d, n, seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid environment spec: {exc}") from exc


def _atomic_write(path, writer):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _write_manifest(out_dir, subcommand, config):
    manifest = {"tool": "rcm", "version": __version__,
                "subcommand": subcommand, "config": config}
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"

    def write(p):
        with open(p, "w") as fh:
            fh.write(text)

    _atomic_write(os.path.join(out_dir, "manifest.json"), write)


def _resolved_seed(args):
    if args.seed is not None:
        return int(args.seed)
    env_seed = os.environ.get("RCM_SEED")
    return int(env_seed) if env_seed else 0


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_env_gen(args):
    if not args.spec:
        raise ConfigError("env-gen needs --spec")
    spec = load_env_spec(args.spec, seed_override=args.seed)
    env = environment.generate_env(spec)
    _atomic_write(args.out, lambda p: environment.save_env(env, p))
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    _write_manifest(out_dir, "env-gen",
                    {"spec": args.spec, "seed": spec.seed, "out": args.out,
                     "kind": spec.kind, "d": spec.d, "n": spec.n})
    print(f"wrote {args.out} ({spec.label()})")
    return 0


def _write_profile_csv(path, rows):
    def write(p):
        with open(p, "w") as fh:
            fh.write("n,coordinate,value\n")
            for n, j, v in rows:
                fh.write(f"{n},{j + 1},{v!r}\n")

    _atomic_write(path, write)


def _cmd_corrector(args):
    os.makedirs(args.out, exist_ok=True)
    if args.profile_sizes:
        if not args.spec:
            raise ConfigError("profile mode needs --spec (fresh solve per size)")
        spec = load_env_spec(args.spec, seed_override=args.seed)
        sizes = [int(s) for s in str(args.profile_sizes).split(",")]
        cfg = SolverConfig(tol=args.tol)
        rows = corrector.sublinearity_profile(spec, sizes, cfg=cfg)
        _write_profile_csv(os.path.join(args.out, "sublinearity.csv"), rows)
        big = environment.generate_env(spec.with_side(4 * max(sizes)))
        sol = corrector.solve_corrector(big, cfg)
        _write_profile_csv(os.path.join(args.out, "l1_profile.csv"),
                           corrector.l1_profile(sol, sizes))
        _write_manifest(args.out, "corrector",
                        {"spec": args.spec, "profile_sizes": sizes,
                         "tol": args.tol, "seed": spec.seed})
        print(f"profiles over sizes {sizes} written to {args.out}")
        return 0
    if not args.env:
        raise ConfigError("corrector needs --env (or --spec with --profile-sizes)")
    env = environment.load_env(args.env)
    sol = corrector.solve_corrector(env, SolverConfig(tol=args.tol))
    sigma = corrector.sigma_from_corrector(sol)
    _atomic_write(os.path.join(args.out, "chi.csv"),
                  lambda p: corrector.solution_to_csv(sol, p))
    _atomic_write(os.path.join(args.out, "sigma2.csv"),
                  lambda p: corrector.sigma_to_csv(sigma, p))
    _write_manifest(args.out, "corrector",
                    {"env": args.env, "tol": args.tol,
                     "residuals": [float(r) for r in sol.residuals]})
    print(f"sigma2 diagonal: {[float(sigma[j, j]) for j in range(env.lattice.d)]}")
    return 0


def _cmd_walk(args):
    if not args.env:
        raise ConfigError("walk needs --env")
    env = environment.load_env(args.env)
    seed = _resolved_seed(args)
    scheme = args.scheme.upper()
    os.makedirs(args.out, exist_ok=True)
    from .walk import path_to_csv, simulate_csrw, simulate_vsrw, walk_positions_at

    simulate = simulate_vsrw if scheme == "VSRW" else simulate_csrw
    for k in range(min(args.count, args.keep_paths)):
        path = simulate(env, 0, args.t_max, seed + k)
        _atomic_write(os.path.join(args.out, f"path_{k}.csv"),
                      lambda p, path=path: path_to_csv(path, p))
    pos, jumps = walk_positions_at(env, 0, [args.t_max], args.count, seed,
                                   scheme=scheme)
    x = pos[:, 0, :].astype(np.float64)
    cov = x.T @ x / args.count

    def write_stats(p):
        with open(p, "w") as fh:
            d = env.lattice.d
            fh.write("t,count,mean_jumps," + ",".join(
                f"cov_{i + 1}{j + 1}" for i in range(d) for j in range(d)) + "\n")
            flat = ",".join(repr(float(v)) for v in cov.reshape(-1))
            fh.write(f"{args.t_max!r},{args.count},{float(jumps.mean())!r},{flat}\n")

    _atomic_write(os.path.join(args.out, "stats.csv"), write_stats)
    _write_manifest(args.out, "walk",
                    {"env": args.env, "scheme": scheme, "t_max": args.t_max,
                     "count": args.count, "seed": seed})
    print(f"{args.count} {scheme} trajectories, mean jumps {jumps.mean():.2f}")
    return 0


def _cmd_clt(args):
    if not args.spec:
        raise ConfigError("clt needs --spec")
    spec = load_env_spec(args.spec)
    seed = _resolved_seed(args)
    sizes = [int(s) for s in str(args.sizes).split(",")]
    reports = stats.qfclt_suite(spec, sizes, args.count, seed, t=args.t,
                                scheme=args.scheme.upper())
    os.makedirs(args.out, exist_ok=True)
    _atomic_write(os.path.join(args.out, "clt_report.csv"),
                  lambda p: stats.reports_to_csv(reports, p))
    for rep in reports:
        _atomic_write(os.path.join(args.out, f"clt_cov_n{rep.n}.csv"),
                      lambda p, rep=rep: stats.covariance_block_csv(rep, p))
    trend = stats.covariance_trend(reports)

    def write_trend(p):
        with open(p, "w") as fh:
            fh.write("n,max_entry_distance\n")
            for n, dist in trend:
                fh.write(f"{n},{dist!r}\n")

    _atomic_write(os.path.join(args.out, "trend.csv"), write_trend)
    _write_manifest(args.out, "clt",
                    {"spec": args.spec, "sizes": sizes, "count": args.count,
                     "t": args.t, "seed": seed, "scheme": args.scheme.upper()})
    for n, dist in trend:
        print(f"n={n}: max covariance distance {dist:.4f}")
    return 0


def _violation_exit(rows, out_dir, header, fname="violations.csv"):
    def write(p):
        with open(p, "w") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                                  for v in row) + "\n")

    _atomic_write(os.path.join(out_dir, fname), write)
    if rows:
        print(f"{len(rows)} violations written to {fname}", file=sys.stderr)
        return 1
    print("no violations")
    return 0


def _cmd_moser(args):
    seed = _resolved_seed(args)
    os.makedirs(args.out, exist_ok=True)
    if args.calibrate:
        count = args.corpus or 500
        values = calibration.calibrate_constants(seed=seed, count=count)
        _atomic_write(os.path.join(args.out, calibration.CONSTANTS_FILE),
                      lambda p: calibration.save_constants(p, values, seed, count))
        _write_manifest(args.out, "moser",
                        {"calibrate": True, "seed": seed, "corpus": count})
        print(f"calibrated constants written to {args.out}")
        return 0
    if args.corpus:
        constants = calibration.load_constants(args.constants)
        rows = calibration.verify_constants(constants, seed, args.corpus,
                                            families=("maximum",))
        _write_manifest(args.out, "moser", {"corpus": args.corpus, "seed": seed})
        return _violation_exit(rows, args.out, "family,constant,observed,allowed")
    if not args.spec:
        raise ConfigError("moser needs --spec (or --corpus/--calibrate)")
    spec = load_env_spec(args.spec, seed_override=args.seed)
    side = 4 * args.n
    env = environment.generate_env(spec.with_side(side))
    x0 = env.lattice.index_of((side // 2,) * env.lattice.d)
    exps = moser.exponents(env.lattice.d, args.p, args.q)
    slopes = np.zeros(env.lattice.d)
    slopes[0] = 1.0
    drift = env.conductances * (slopes[:, None] / env.lattice.n)
    from .lattice import Ball

    u = moser.poisson_solve_dirichlet(env, Ball(env.lattice, x0, args.n), drift,
                                      SolverConfig())
    report = moser.moser_iterate(env, x0, args.n, u, exps, args.sigma,
                                 args.sigma_prime)
    _atomic_write(os.path.join(args.out, "moser_report.csv"),
                  lambda p: moser.moser_report_to_csv(report, p))
    _write_manifest(args.out, "moser",
                    {"spec": args.spec, "n": args.n, "p": args.p, "q": args.q,
                     "sigma": args.sigma, "sigma_prime": args.sigma_prime,
                     "seed": seed})
    print(f"max {report.max_abs:.3e}, rhs core {report.rhs_core:.3e}, "
          f"ratio {report.ratio:.3f}")
    return 0


def _cmd_sobolev(args):
    seed = _resolved_seed(args)
    os.makedirs(args.out, exist_ok=True)
    constants = calibration.load_constants(args.constants)
    rows = calibration.verify_constants(constants, seed, args.trials,
                                        families=("s1", "sobolev"))
    _write_manifest(args.out, "sobolev", {"trials": args.trials, "seed": seed})
    return _violation_exit(rows, args.out, "family,constant,observed,allowed")


def _cmd_ineq(args):
    seed = _resolved_seed(args)
    os.makedirs(args.out, exist_ok=True)
    rows = ineq.run_sweeps(samples=args.samples, seed=seed)
    _atomic_write(os.path.join(args.out, "violations.csv"),
                  lambda p: ineq.violations_to_csv(rows, p))
    _write_manifest(args.out, "ineq", {"samples": args.samples, "seed": seed})
    if rows:
        print(f"{len(rows)} violations", file=sys.stderr)
        return 1
    print(f"no violations across {4 * args.samples} samples")
    return 0


def _cmd_poincare(args):
    seed = _resolved_seed(args)
    os.makedirs(args.out, exist_ok=True)
    constants = calibration.load_constants(args.constants)
    rows = calibration.verify_constants(constants, seed, args.trials,
                                        families=("poincare",))
    _write_manifest(args.out, "poincare", {"trials": args.trials, "seed": seed})
    return _violation_exit(rows, args.out, "family,constant,observed,allowed")


_HANDLERS = {
    "env-gen": _cmd_env_gen,
    "corrector": _cmd_corrector,
    "walk": _cmd_walk,
    "clt": _cmd_clt,
    "moser": _cmd_moser,
    "sobolev": _cmd_sobolev,
    "ineq": _cmd_ineq,
    "poincare": _cmd_poincare,
}


def _float_or_inf(text):
    return math.inf if str(text).lower() == "inf" else float(text)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rcm", description="random conductance model laboratory")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    s = argparse.SUPPRESS

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, argument_default=s)
        p.add_argument("--config", help="JSON config; flags override its keys")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--threads", type=int)
        return p

    p = add("env-gen", "generate and save an environment")
    p.add_argument("--spec", help="environment spec JSON")

    p = add("corrector", "solve the corrector equation")
    p.add_argument("--env", help="environment file")
    p.add_argument("--tol", type=float)

    p = add("walk", "simulate random walks")
    p.add_argument("--env")
    p.add_argument("--scheme", choices=["vsrw", "csrw"])
    p.add_argument("--t-max", type=float, dest="t_max")
    p.add_argument("--count", type=int)
    p.add_argument("--keep-paths", type=int, dest="keep_paths")

    p = add("clt", "diffusive-limit statistics")
    p.add_argument("--spec")
    p.add_argument("--sizes")
    p.add_argument("--count", type=int)
    p.add_argument("--t", type=float)
    p.add_argument("--scheme", choices=["vsrw", "csrw"])

    p = add("moser", "maximum-inequality machinery")
    p.add_argument("--spec")
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=_float_or_inf)
    p.add_argument("--q", type=_float_or_inf)
    p.add_argument("--sigma", type=float)
    p.add_argument("--sigma-prime", type=float, dest="sigma_prime")
    p.add_argument("--corpus", type=int)
    p.add_argument("--calibrate", action="store_true", default=s)
    p.add_argument("--constants")

    p = add("sobolev", "Sobolev inequality corpus check")
    p.add_argument("--trials", type=int)
    p.add_argument("--constants")

    p = add("ineq", "scalar inequality sweeps")
    p.add_argument("--samples", type=int)

    p = add("poincare", "l1 Poincare corpus check")
    p.add_argument("--trials", type=int)
    p.add_argument("--constants")
    return parser


def _resolve(args) -> SimpleNamespace:
    """defaults < JSON config < explicit flags, rejecting unknown config keys."""
    sub = args.subcommand
    resolved = dict(_COMMON_DEFAULTS)
    resolved.update(_DEFAULTS[sub])
    given = {k: v for k, v in vars(args).items() if k != "subcommand"}
    config_path = given.get("config", resolved.get("config"))
    if config_path:
        doc = _load_json(config_path, "config")
        if not isinstance(doc, dict):
            raise ConfigError("config file must be a JSON object")
        for key, value in doc.items():
            dest = key.replace("-", "_")
            if dest not in resolved:
                raise ConfigError(f"unknown key {key!r} in config file")
            resolved[dest] = value
    resolved.update(given)
    return SimpleNamespace(**resolved)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        resolved = _resolve(args)
        if resolved.threads is not None:
            if int(resolved.threads) < 1:
                raise ConfigError("--threads must be >= 1")
            try:
                import numba

                numba.set_num_threads(min(int(resolved.threads),
                                          numba.config.NUMBA_NUM_THREADS))
            except ImportError:
                pass
        return _HANDLERS[args.subcommand](resolved)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())
