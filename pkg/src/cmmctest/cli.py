"""Command-line interface: ``cmmctest <subcommand> ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import exact_fwer
from .conformal import TestSetup, conformal_pvalues, write_pvalues
from .envelopes import storey_bh_envelopes, write_envelope, write_manifest
from .generators import DEFAULT_STRAUSS_STEPS, parse_model, simulate_null
from .multiplicity import apply_procedure, snap_lambda, write_rejections
from .patterns import RngStream, Window, read_pattern, write_pattern
from .study import (
    ScenarioConfig,
    run_global_null_study,
    run_lambda_sweep,
    run_multiplicity_sweep,
    run_study,
)
from .summaries import STATISTICS, DistanceGrid, curve_matrix, write_curve

def _str_tuple(s):
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _float_tuple(s):
    return tuple(float(x) for x in _str_tuple(s))


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_int(s):
    return None if str(s).strip().lower() in ("", "none") else int(s)


# ScenarioConfig fields settable from a config file or flags, with their parsers
CONFIG_FIELDS = {
    "null_model": str,
    "alt_model": str,
    "n": int,
    "m": int,
    "m0": int,
    "scores": _str_tuple,
    "naive": _bool,
    "statistic": str,
    "procedures": _str_tuple,
    "alpha_grid": _float_tuple,
    "lam": float,
    "replications": int,
    "seed": int,
    "fit_from": _opt_int,
    "strauss_steps": int,
    "lgcp_grid": int,
    "grid_size": int,
    "workers": int,
}


def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; lists are comma-separated."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in CONFIG_FIELDS:
            raise ValueError(f"{path}:{lineno}: unknown or malformed entry {raw!r}")
        out[key] = CONFIG_FIELDS[key](value.strip())
    return out


def _window(args) -> Window:
    return Window(*args.window) if args.window else Window(0.0, 1.0, 0.0, 1.0)


def _patterns(directory):
    files = sorted(Path(directory).glob("*.txt"))
    if not files:
        raise SystemExit(f"no pattern files (*.txt) in {directory}")
    return [read_pattern(f) for f in files]


def _grid(args, w) -> DistanceGrid:
    return DistanceGrid.default(w, size=args.grid_size)


def cmd_simulate(args):
    model = parse_model(args.model)
    w = _window(args)
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    stream = RngStream(args.seed, args.stream)
    for k in range(args.count):
        p = simulate_null(model, w, stream.substream(k), strauss_steps=args.strauss_steps)
        write_pattern(p, out / f"pattern_{k:05d}.txt")
    print(f"wrote {args.count} patterns to {out}")


def cmd_curves(args):
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    fn = STATISTICS[args.statistic]
    for f in args.patterns:
        p = read_pattern(f)
        write_curve(fn(p, _grid(args, p.window)), out / f"{Path(f).stem}_{args.statistic}.csv")
    print(f"wrote {len(args.patterns)} curves to {out}")


def _setup(args):
    nulls = _patterns(args.null_dir)
    tests = _patterns(args.test_dir)
    grid = _grid(args, nulls[0].window)
    return TestSetup(curve_matrix(nulls, grid, args.statistic), curve_matrix(tests, grid, args.statistic)), grid


def cmd_test(args):
    setup, _ = _setup(args)
    pv = conformal_pvalues(setup, args.method)
    rej = apply_procedure(args.procedure, pv, args.alpha, snap_lambda(args.lam, pv.n_effective))
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    write_pvalues(pv, out / "pvalues.csv")
    write_rejections(rej, out / "rejections.csv")
    print(f"{rej.n_rejected} of {setup.m} rejected ({args.procedure}, alpha={args.alpha})")


def _int_range(s):
    """``a:b:step`` (inclusive) or a comma list."""
    if ":" in s:
        a, b, *step = (int(x) for x in s.split(":"))
        return list(range(a, b + 1, step[0] if step else 1))
    return [int(x) for x in s.split(",")]


def cmd_fwer_exact(args):
    rows = exact_fwer.fwer_sweep(
        _int_range(args.ns), args.m, args.m0, [float(a) for a in args.alpha.split(",")], _str_tuple(args.procedures)
    )
    lines = ["n,m,m0,procedure,alpha,fwer_exact"]
    for n, m, m0, proc, alpha, f in rows:
        value = f"{f.numerator}/{f.denominator}" if args.rational else f"{float(f):.17g}"
        lines.append(f"{n},{m},{m0},{proc},{alpha:g},{value}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_envelope(args):
    setup, grid = _setup(args)
    reports = storey_bh_envelopes(setup, args.alpha, snap_lambda(args.lam, setup.n), pool=args.pool, grid=grid)
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    for rep in reports:
        write_envelope(rep, out / f"envelope_{rep.test_index:04d}.csv")
    write_manifest(reports, out / "manifest.csv")
    print(f"wrote {len(reports)} envelopes to {out}")


def _config_from(args) -> ScenarioConfig:
    values = read_config(args.config) if args.config else {}
    for key in CONFIG_FIELDS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = CONFIG_FIELDS[key](v)
    return ScenarioConfig(**values)


def cmd_study(args):
    cfg = _config_from(args)
    out = Path(args.outdir)
    if args.kind == "power":
        run_study(cfg).write_csv(out)
    elif args.kind == "lambda":
        for lam, res in run_lambda_sweep(cfg, _float_tuple(args.lambdas)).items():
            res.write_csv(out, prefix=f"lambda{lam:g}_")
    elif args.kind == "multiplicity":
        sweep = run_multiplicity_sweep(cfg, cfg.alpha_grid, _int_range(args.ms), _int_range(args.ns))
        for (m, n), res in sweep.items():
            res.write_csv(out, prefix=f"m{m}_n{n}_")
    else:
        run_global_null_study(cfg).write_csv(out)
    print(f"wrote results to {out}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cmmctest", description="Conformal multiple Monte Carlo testing of point patterns")
    sub = ap.add_subparsers(dest="command", required=True)

    def stat_opts(p):
        p.add_argument("--statistic", default="centered_L", choices=sorted(STATISTICS))
        p.add_argument("--grid-size", type=int, default=64)

    p = sub.add_parser("simulate", help="simulate point patterns")
    p.add_argument("--model", required=True, help="poisson:LAMBDA | strauss:BETA,GAMMA,R | lgcp:MU,SIGMA2,SCALE")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--strauss-steps", type=int, default=DEFAULT_STRAUSS_STEPS)
    p.add_argument("--window", type=float, nargs=4, metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("curves", help="compute summary curves of pattern files")
    p.add_argument("patterns", nargs="+")
    stat_opts(p)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_curves)

    for name, func, helptext in (
        ("test", cmd_test, "conformal p-values and rejections"),
        ("envelope", cmd_envelope, "Storey-BH graphical envelopes"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--null-dir", required=True)
        p.add_argument("--test-dir", required=True)
        stat_opts(p)
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--lam", type=float, default=0.5)
        p.add_argument("--outdir", required=True)
        p.set_defaults(func=func)
        if name == "test":
            p.add_argument("--method", default="parallel_erl", choices=["parallel_erl", "joint_erl", "naive"])
            p.add_argument("--procedure", default="storey_bh")
        else:
            p.add_argument("--pool", default="all", choices=["all", "parallel"])

    p = sub.add_parser("fwer-exact", help="exact FWER of threshold procedures")
    p.add_argument("--ns", default="10:200:10", help="a:b:step or a comma list")
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--m0", type=int, default=5)
    p.add_argument("--alpha", default="0.05")
    p.add_argument("--procedures", default="hochberg,sidak,sidak+1")
    p.add_argument("--rational", action="store_true", help="print exact fractions instead of floats")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fwer_exact)

    p = sub.add_parser("study", help="run a simulation study")
    p.add_argument("--config", help="key = value file of scenario settings")
    p.add_argument("--kind", default="power", choices=["power", "lambda", "multiplicity", "global"])
    p.add_argument("--lambdas", default="0.1,0.3,0.5,0.7")
    p.add_argument("--ms", default="6,10,20,30")
    p.add_argument("--ns", default="240,600,1200,2520")
    p.add_argument("--outdir", required=True)
    for key in CONFIG_FIELDS:
        p.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
    p.set_defaults(func=cmd_study)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
