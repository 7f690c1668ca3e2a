"""Command line: ``combrank test``, ``combrank bounds`` and ``combrank simulate``.

Exit codes: 0 success, 2 invalid input or configuration, 3 inversion or solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import warnings

from . import analysis
from .analysis import ConfigError, RunConfig
from .data import DataValidationError, ingest
from .intervals import InversionError
from .lp import LPError
from .nulldist import EnumerationCapError
from .ranks import RankTransform
from .simulate import format_number, parse_scenario, simulate, to_csv

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3


def _transforms(text: str) -> tuple[RankTransform, ...]:
    """``stephenson:2,6,10`` or ``poly:2,6`` or a mix such as ``identity,stephenson:3``."""
    out, family = [], None
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part or not part.replace(".", "", 1).isdigit():
            family = part.split(":")[0]
            out.append(RankTransform.parse(part))
        elif family is None:
            raise ValueError(f"transform parameter {part!r} without a family")
        else:
            out.append(RankTransform.parse(f"{family}:{part}"))
    if not out:
        raise ValueError("no transforms given")
    return tuple(out)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--method", default="single", choices=analysis.METHODS)
    p.add_argument("--transforms", default="stephenson:2")
    p.add_argument("--weights", default="scheme1", choices=("scheme1", "scheme2"))
    p.add_argument("--solver", default=None, choices=analysis.SOLVERS)
    p.add_argument("--mc-draws", type=int, default=10**4)
    p.add_argument("--null", default="auto", choices=analysis.NULL_MODES,
                   help="exact enumeration, Monte Carlo, or exact when small enough (default)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--group", default="treated", choices=analysis.GROUPS)
    p.add_argument("--direction", default="greater", choices=("greater", "less"))
    p.add_argument("--output", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="combrank", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="p-value for one effect-quantile hypothesis")
    t.add_argument("data")
    _common(t)
    t.add_argument("--k", type=int, required=True)
    t.add_argument("--c", type=float, required=True)

    b = sub.add_parser("bounds", help="simultaneous lower bounds for all effect quantiles")
    b.add_argument("data")
    _common(b)

    s = sub.add_parser("simulate", help="median lower bounds over simulated experiments")
    s.add_argument("--scenario", required=True, help="cre-sigma<s> or sre-s<1|2|3>-sigma<s>")
    s.add_argument("--reps", type=int, default=100)
    s.add_argument("--n", type=int, default=100, help="sample size of CRE scenarios")
    s.add_argument("--scale", type=float, default=1.0, help="multiplier on SRE stratum counts")
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--mc-draws", type=int, default=10**4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--output", default=None)
    return parser


def config_from_args(args) -> RunConfig:
    return RunConfig(
        alpha=args.alpha,
        method=args.method,
        transforms=_transforms(args.transforms),
        weights=args.weights,
        solver=args.solver,
        mc_draws=args.mc_draws,
        seed=args.seed,
        group=args.group,
        direction=args.direction,
        null=args.null,
    )


def _header(cfg: RunConfig, level: float) -> str:
    ts = ",".join(t.label for t in cfg.transforms)
    return (f"# method={cfg.method} transforms={ts} weights={cfg.weights} "
            f"solver={cfg.effective_solver} level={level:g} seed={cfg.seed}\n")


def cmd_test(cfg: RunConfig, data, k: int, c: float) -> str:
    p, exactness = analysis.hypothesis_pvalue(data.z, data.y, data.stratum, cfg, k, c)
    buf = io.StringIO()
    buf.write(_header(cfg, 1.0 - cfg.alpha))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "c", "method", "p_value", "exactness"])
    w.writerow([k, format_number(c), cfg.method, format_number(p), exactness])
    return buf.getvalue()


def cmd_bounds(cfg: RunConfig, data) -> str:
    table = analysis.bounds_table(data.z, data.y, data.stratum, cfg)
    buf = io.StringIO()
    buf.write(_header(cfg, table.level))
    if table.group == "all":
        buf.write(f"# all-units confidence bounds at level 1-2*alpha = {table.level:g}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "group", "lower_bound", "endpoint", "p_at_bound"])
    for k, b, e, p in zip(table.k, table.bounds, table.endpoints, table.p_at_bound):
        w.writerow([int(k), table.group, format_number(b), e, format_number(p)])
    return buf.getvalue()


def cmd_simulate(scenario: str, reps: int = 100, n: int = 100, scale: float = 1.0, alpha: float = 0.1,
                 mc_draws: int = 10**4, seed: int = 0, workers: int = 1) -> str:
    sc = parse_scenario(scenario, n=n, scale=scale, reps=reps, alpha=alpha, mc_draws=mc_draws)
    return to_csv(simulate(sc, seed=seed, workers=workers), seed)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if args.command == "simulate":
                out = cmd_simulate(args.scenario, args.reps, args.n, args.scale, args.alpha,
                                   args.mc_draws, args.seed, args.workers)
            else:
                cfg = config_from_args(args)
                data = ingest(args.data, seed=cfg.seed)
                out = cmd_test(cfg, data, args.k, args.c) if args.command == "test" else cmd_bounds(cfg, data)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    except (InversionError, LPError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, DataValidationError, EnumerationCapError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if getattr(args, "output", None):
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
