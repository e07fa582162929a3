"""Command-line front end.

Exit codes: 0 alarm or success, 1 configuration/calibration/I-O error,
2 malformed input, 3 end of input without an alarm.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, presets, simlab
from .detectors import PROCEDURES, DetectorConfig, make_detector
from .errors import CalibrationRangeError, ConfigError, DomainError, PairVerificationError
from .families import get_family
from .hypotheses import (
    OptimizerPair,
    ParamSet,
    TabulatedFn,
    constant,
    normal_beta_pair,
    optimizer_from,
    pair_close,
    read_pair_csv,
    verify_pair,
    write_pair_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARSE = 2
EXIT_NO_ALARM = 3

CSV_VERSION = "seqcpd-csv v1"
SEED_ENV = "SEQCPD_SEED"
DEFAULT_SEED = 20080101


class ParseError(ValueError):
    pass


# -- configuration files ----------------------------------------------------


def _floats(text):
    return [float(t) for t in str(text).replace(";", ",").split(",") if t.strip()]


def _param_set(text, open_lo=False, open_hi=False, grid_n=None):
    vals = _floats(text)
    if len(vals) == 1:
        return ParamSet.point(vals[0])
    if len(vals) != 2:
        raise ConfigError(f"expected one value or 'lo, hi', got {text!r}")
    lo, hi = sorted(vals)
    kw = {"grid_n": grid_n} if grid_n else {}
    return ParamSet(lo, hi, closed_lo=not open_lo, closed_hi=not open_hi, **kw)


def _build_pair(text, family, theta, lam, base_dir):
    """``pair`` key: a CSV path, ``q0:<c>``, ``p:<c>`` (unverified constant p) or ``beta:<b>``."""
    kind, _, value = text.partition(":")
    kind = kind.strip().lower()
    if kind == "q0" and value:
        p = optimizer_from(constant(float(value)), family, theta, lam)
        return pair_close(p, family, theta, lam)
    if kind == "p" and value:
        p = constant(float(value))
        q = TabulatedFn(lam.grid(), np.ones_like(lam.grid()))
        return OptimizerPair(p, q, theta, lam, residual=math.inf, meta={"unverified": True})
    if kind == "beta" and value:
        return normal_beta_pair(float(value), theta, lam)
    path = Path(text.strip())
    if not path.is_absolute():
        path = Path(base_dir) / path
    pair = read_pair_csv(path)
    report = verify_pair(pair, family, theta, lam)
    pair.residual = report.residual
    return pair


def load_config(path):
    """Read a ``[detector]`` section into a :class:`DetectorConfig`.

    Keys: procedure, family, theta, lambda, a, beta, eta_grid_n,
    theta_grid_n, theta_open (``lo`` for a pre-change set open at its lower
    end, ``hi`` for the upper end), pair, allow_unverified_pair, label.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if "detector" not in parser:
        raise ConfigError(f"{path}: missing [detector] section")
    sec = parser["detector"]
    return config_from_mapping(dict(sec), base_dir=Path(path).parent)


def config_from_mapping(sec, base_dir="."):
    try:
        procedure = sec["procedure"].strip()
        if procedure not in PROCEDURES:
            raise ConfigError(f"unknown procedure {procedure!r}")
        family = get_family(sec.get("family", "normal"))
        theta_open = sec.get("theta_open", "").strip().lower()
        theta = _param_set(sec["theta"], open_lo=theta_open == "lo", open_hi=theta_open == "hi")
        lam = _param_set(sec["lambda"])
        a = float(sec["a"])
        kwargs = {}
        if "beta" in sec:
            kwargs["beta"] = float(sec["beta"])
        if "eta_grid_n" in sec:
            kwargs["eta_grid_n"] = int(sec["eta_grid_n"])
        if "theta_grid_n" in sec:
            kwargs["theta_grid_n"] = int(sec["theta_grid_n"])
        if "label" in sec:
            kwargs["label"] = sec["label"].strip()
        kwargs["allow_unverified_pair"] = str(sec.get("allow_unverified_pair", "false")).lower() in ("1", "true", "yes")
        if "pair" in sec:
            kwargs["pair"] = _build_pair(sec["pair"], family, theta, lam, base_dir)
        return DetectorConfig(procedure, family, theta, lam, a, **kwargs)
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc.args[0]!r}") from None
    except (DomainError, PairVerificationError, OSError) as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def config_echo(cfg):
    out = {
        "procedure": cfg.procedure,
        "family": cfg.family.name,
        "theta": [cfg.theta.lo, cfg.theta.hi],
        "lambda": [cfg.lam.lo, cfg.lam.hi],
        "a": cfg.a,
    }
    if cfg.beta is not None:
        out["beta"] = cfg.beta
    if cfg.pair is not None:
        out["pair_residual"] = cfg.pair.residual
        out["pair"] = str(cfg.pair.meta or cfg.pair.p)
    if cfg.procedure == "t_star_mixture":
        out["eta_grid_n"] = cfg.eta_grid_n
    return out


# -- observation input ---------------------------------------------------------


def read_observations(lines):
    """Yield floats from text lines; '#' comments and blank lines are skipped."""
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        try:
            value = float(text)
        except ValueError:
            raise ParseError(f"line {lineno}: cannot parse {text!r} as a number") from None
        if not math.isfinite(value):
            raise ParseError(f"line {lineno}: non-finite value {text!r}")
        yield value


# -- output ----------------------------------------------------------------------


def _manifest(command, args, extra=None):
    data = {
        "command": command,
        "argv": list(args.argv),
        "arguments": {k: v for k, v in vars(args).items() if k not in ("func", "argv")},
        "tool_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "created_unix": time.time(),
    }
    if extra:
        data.update(extra)
    return data


def write_csv(path, header, rows, manifest, append=False):
    """Write (or append to) a CSV with a version comment and a JSON manifest sidecar."""
    path = Path(path)
    exists = path.exists() and path.stat().st_size > 0
    mode = "a" if append and exists else "w"
    with open(path, mode, newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if mode == "w":
            fh.write(f"# {CSV_VERSION}\n")
            w.writerow(header)
        for row in rows:
            w.writerow(row)
    sidecar = path.with_name(path.name + ".manifest.json")
    with open(sidecar, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
    return path


def _fmt(x):
    if isinstance(x, float):
        if math.isnan(x):
            return "NA"
        return repr(x)
    return str(x)


def _seed(args):
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get(SEED_ENV)
    return int(env) if env else DEFAULT_SEED


# -- commands ----------------------------------------------------------------------


def cmd_detect(args):
    cfg = load_config(args.config)
    det = make_detector(cfg)
    fh = sys.stdin if args.input in (None, "-") else open(args.input)
    try:
        report = None
        for x in read_observations(fh):
            report = det.step(x)
            if report.stopped:
                break
    finally:
        if fh is not sys.stdin:
            fh.close()
    if report is not None and report.stopped:
        print(report.line())
        return EXIT_OK
    n = 0 if report is None else report.n_stop
    print(f"no-alarm procedure={cfg.name} n={n}")
    return EXIT_NO_ALARM


SIM_HEADER = ["procedure", "a", "mode", "param", "mean", "stderr", "reps", "censored", "horizon", "seed"]


def _estimate_row(cfg, mode, param, est, seed):
    return [cfg.name, _fmt(float(cfg.a)), mode, _fmt(float(param)), _fmt(est.mean), _fmt(est.stderr),
            est.reps, est.censored, est.horizon, seed]


def cmd_simulate(args):
    cfg = load_config(args.config)
    seed = _seed(args)
    seeds = simlab.SeedScheme(seed)
    if args.mode == "delay":
        est = simlab.estimate_delay(cfg, args.param, args.reps, seeds, horizon=args.horizon or 10**6, workers=args.workers)
    else:
        est = simlab.estimate_long_arl(cfg, args.param, args.reps, args.horizon, seeds, workers=args.workers)
    row = _estimate_row(cfg, args.mode, args.param, est, seed)
    print(",".join(str(v) for v in row))
    if args.reps < 2:
        print("warning: a single replication has no standard error", file=sys.stderr)
    if args.out:
        manifest = _manifest("simulate", args, {"config": config_echo(cfg), "seed_scheme": seeds.describe()})
        try:
            write_csv(args.out, SIM_HEADER, [row], manifest, append=True)
        except OSError as exc:
            raise ConfigError(f"cannot write {args.out}: {exc}") from None
    return EXIT_OK


def cmd_calibrate(args):
    cfg = load_config(args.config)
    seed = _seed(args)
    seeds = simlab.SeedScheme(seed)
    res = simlab.calibrate_threshold(
        cfg, args.mode, args.target, args.at, args.reps, seeds, a0=args.a0 or cfg.a,
        horizon=args.horizon, workers=args.workers,
    )
    print(f"a={res.a:.6g} achieved={res.achieved} target={res.target:g} mode={res.mode}")
    if args.out:
        row = _estimate_row(cfg.with_threshold(res.a), args.mode, args.at, res.achieved, seed) + [_fmt(res.target)]
        manifest = _manifest("calibrate", args, {"config": config_echo(cfg), "seed_scheme": seeds.describe(),
                                                 "trials": [list(h) for h in res.history]})
        try:
            write_csv(args.out, SIM_HEADER + ["target"], [row], manifest, append=True)
        except OSError as exc:
            raise ConfigError(f"cannot write {args.out}: {exc}") from None
    return EXIT_OK


def cmd_pair(args):
    family = get_family(args.family)
    grid = args.grid
    try:
        theta = _param_set(args.theta_range, grid_n=grid)
        lam = _param_set(args.lambda_range, grid_n=grid)
        if args.beta is not None:
            pair = normal_beta_pair(args.beta, theta, lam)
            residual = verify_pair(pair, family, theta, lam, tol=args.tol).residual
            pair.residual = residual
        else:
            if args.q0 is None:
                raise ConfigError("one of --q0 or --beta is required")
            try:
                q0 = constant(float(args.q0))
            except ValueError:
                q0 = read_pair_csv(args.q0).q
            p = optimizer_from(q0, family, theta, lam)
            pair = pair_close(p, family, theta, lam, tol=args.tol)
            residual = verify_pair(pair, family, theta, lam, tol=args.tol).residual
    except PairVerificationError as exc:
        print(f"pair verification failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    out = io.StringIO()
    write_pair_csv(pair, out)
    if args.out:
        try:
            Path(args.out).write_text(out.getvalue())
        except OSError as exc:
            raise ConfigError(f"cannot write {args.out}: {exc}") from None
    else:
        sys.stdout.write(out.getvalue())
    passed = residual <= args.tol
    print(f"residual={residual:.3e} tol={args.tol:g} {'pass' if passed else 'FAIL'}", file=sys.stderr)
    return EXIT_OK if passed else EXIT_CONFIG


REPRO_HEADER = [
    "table", "column", "kind", "param", "a", "threshold_source", "reps",
    "published_value", "published_se", "value", "se", "censored", "z",
]


def _z(ours, se, ref, ref_se):
    s = math.sqrt((0.0 if math.isnan(se) else se) ** 2 + ref_se**2)
    return (ours - ref) / s if s > 0 else math.nan


def _thresholds(table, args, seeds, log):
    if args.published_thresholds:
        return dict(presets.THRESHOLDS), "published"
    t = dict(presets.THRESHOLDS)
    if table == "table1":
        for key, cfg in presets.table1_configs().items():
            res = simlab.calibrate_threshold(cfg, "delay", presets.TABLE1_DELAY_TARGET, 0.0, args.calib_reps, seeds,
                                             a0=cfg.a, workers=args.workers)
            t[f"table1_{key}"] = res.a
            log(f"calibrated {key}: a={res.a:.4f} delay={res.achieved}")
    else:
        for key, cfg in presets.table2_configs().items():
            res = simlab.calibrate_threshold(cfg, "long_arl", presets.TABLE2_LONG_ARL_TARGET, 1.0, args.calib_reps,
                                             seeds, a0=cfg.a, workers=args.workers)
            t[f"table2_{key}"] = res.a
            log(f"calibrated {key}: a={res.a:.4f} long ARL={res.achieved}")
    return t, "calibrated"


def reproduce_rows(table, args, log=lambda s: None):
    seeds = simlab.SeedScheme(_seed(args))
    thresholds, source = _thresholds(table, args, seeds, log)
    rows = []
    if table == "table1":
        cfgs = presets.table1_configs(thresholds)
        best_a = {}
        for cell in presets.TABLE1:
            reps = args.reps if cell.param > -0.85 else (args.tail_reps or args.reps)
            if cell.column == "best_possible":
                if not args.best_possible:
                    continue
                if cell.param not in best_a:
                    tmpl = presets.table1_best_possible_config(cell.param, 1.0)
                    res = simlab.calibrate_threshold(tmpl, "delay", presets.TABLE1_DELAY_TARGET, 0.0, args.calib_reps,
                                                     seeds, workers=args.workers)
                    best_a[cell.param] = res.a
                cfg = presets.table1_best_possible_config(cell.param, best_a[cell.param])
                src = "recalibrated"
            else:
                cfg = cfgs[cell.column]
                src = source
            est = simlab.estimate_long_arl(cfg, cell.param, reps, seeds=seeds, workers=args.workers)
            rows.append((cell, cfg, src, est))
            log(f"{cell.column} theta={cell.param:g}: {est}")
    else:
        cfgs = presets.table2_configs(thresholds)
        for cell in presets.TABLE2:
            cfg = cfgs[cell.column]
            if cell.kind == "long_arl":
                est = simlab.estimate_long_arl(cfg, cell.param, args.reps, seeds=seeds, workers=args.workers)
            else:
                est = simlab.estimate_delay(cfg, cell.param, args.delay_reps or 10 * args.reps, seeds=seeds,
                                            workers=args.workers)
            rows.append((cell, cfg, source, est))
            log(f"{cell.column} {cell.kind} {cell.param:g}: {est}")
    out = []
    for cell, cfg, src, est in rows:
        z = _z(est.mean, est.stderr, cell.value, cell.stderr)
        out.append([
            table, cell.column, cell.kind, _fmt(float(cell.param)), _fmt(float(cfg.a)), src, est.reps,
            _fmt(cell.value), _fmt(cell.stderr), _fmt(est.mean), _fmt(est.stderr), est.censored, _fmt(z),
        ])
    return out


def cmd_reproduce(args):
    if args.reps < 100:
        print(f"warning: {args.reps} replications give standard errors too large for a meaningful comparison",
              file=sys.stderr)
    log = (lambda s: print(s, file=sys.stderr)) if args.verbose else (lambda s: None)
    rows = reproduce_rows(args.table, args, log)
    within = sum(1 for r in rows if r[-1] != "NA" and abs(float(r[-1])) <= 3.0)
    summary = f"{args.table}: {within} of {len(rows)} cells within |z| <= 3"
    if args.out:
        out_dir = Path(args.out)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            manifest = _manifest("reproduce", args, {"seed_scheme": simlab.SeedScheme(_seed(args)).describe(),
                                                     "summary": summary})
            write_csv(out_dir / f"{args.table}.csv", REPRO_HEADER, rows, manifest)
        except OSError as exc:
            raise ConfigError(f"cannot write to {out_dir}: {exc}") from None
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(REPRO_HEADER)
        w.writerows(rows)
    print(summary)
    return EXIT_OK


def _replace_out(argv, out):
    """Copy of ``argv`` with its ``--out`` value replaced (or appended)."""
    argv = list(argv)
    for i, tok in enumerate(argv):
        if tok == "--out" and i + 1 < len(argv):
            argv[i + 1] = out
            return argv
        if tok.startswith("--out="):
            argv[i] = f"--out={out}"
            return argv
    return argv + ["--out", out]


def cmd_rerun(args):
    try:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
        argv = manifest["argv"]
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read manifest {args.manifest}: {exc}") from None
    if not argv or argv[0] == "rerun":
        raise ConfigError("manifest does not record a rerunnable command")
    if args.out:
        argv = _replace_out(argv, args.out)
    return main(argv)


# -- parser -------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the configuration code; 2 is reserved for bad input data."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="seqcpd", description="Sequential change-point detection toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", help="run a detector over observations (one number per line)")
    p.add_argument("config", help="INI file with a [detector] section")
    p.add_argument("input", nargs="?", default="-", help="observation file, or '-' for stdin (default)")
    p.set_defaults(func=cmd_detect)

    def add_sim_common(p):
        p.add_argument("config", help="INI file with a [detector] section")
        p.add_argument("--mode", choices=("long_arl", "delay"), required=True)
        p.add_argument("--reps", type=int, default=1000)
        p.add_argument("--seed", type=int, default=None, help=f"master seed (default ${SEED_ENV} or {DEFAULT_SEED})")
        p.add_argument("--horizon", type=int, default=None, help="per-run step budget (runs beyond are censored)")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", default=None, help="CSV file to append to (a .manifest.json sidecar is written)")

    p = sub.add_parser("simulate", help="estimate a long ARL or detection delay")
    add_sim_common(p)
    p.add_argument("--param", type=float, required=True, help="parameter the data are drawn from")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="find the threshold hitting a target run length")
    add_sim_common(p)
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--at", type=float, required=True, help="parameter the data are drawn from")
    p.add_argument("--a0", type=float, default=None, help="starting threshold (default: the config's a)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("pair", help="construct and verify an optimizer pair")
    p.add_argument("--family", required=True)
    p.add_argument("--theta-range", required=True,
                   help="'lo,hi' of the pre-change set (write --theta-range=-1,-0.5 for negative values)")
    p.add_argument("--lambda-range", required=True, help="'lo,hi' of the post-change set")
    p.add_argument("--q0", default=None, help="positive constant, or a pair CSV whose q rows are used")
    p.add_argument("--beta", type=float, default=None, help="closed-form normal pair with this beta")
    p.add_argument("--grid", type=int, default=512)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("reproduce", help="rerun a benchmark study and compare with the published values")
    p.add_argument("table", choices=("table1", "table2"))
    p.add_argument("--reps", type=int, default=1000, help="replications per long-ARL cell")
    p.add_argument("--tail-reps", type=int, default=None, help="replications for the theta <= -0.9 rows of table1")
    p.add_argument("--delay-reps", type=int, default=None, help="replications per delay cell (default 10x --reps)")
    p.add_argument("--calib-reps", type=int, default=10000, help="replications per calibration trial")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--published-thresholds", action="store_true",
                   help="use the preset thresholds instead of calibrating")
    p.add_argument("--best-possible", action="store_true",
                   help="table1: add the recalibrated per-theta CUSUM envelope column (slow)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("rerun", help="replay the command recorded in a .manifest.json sidecar")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="write to this path instead of the recorded one")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ConfigError, CalibrationRangeError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
