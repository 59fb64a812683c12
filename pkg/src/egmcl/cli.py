"""Command line entry point: ``egmcl run | convergence | bench``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import PRESETS, SCHEMES, parse_config
from .errors import ConfigurationError, SolverAbort
from .io import OutputError
from .problems import PROBLEM_NAMES

log = logging.getLogger("egmcl")

# flag dest -> config key
_FLAGS = ("problem", "scheme", "nx", "ny", "dt", "dt_over_h", "t_final", "levels", "out",
          "snapshot_every", "cfl_policy", "profile")


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value file; flags override its entries")
    p.add_argument("--preset", choices=sorted(PRESETS), help="benchmark settings to start from")
    p.add_argument("--problem", help=f"one of {', '.join(PROBLEM_NAMES)}")
    p.add_argument("--scheme", help=f"comma-separated list from {', '.join(SCHEMES)}")
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--dt", type=float, help="time step")
    p.add_argument("--dt-over-h", dest="dt_over_h", type=float, help="time step as a multiple of h")
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--levels", help="refinement exponents k (h = 2^-k), e.g. 2..6 or 4,5,6")
    p.add_argument("--out", help="output directory")
    p.add_argument("--snapshot-every", dest="snapshot_every", type=int,
                   help="VTK cadence in steps (0: first and last step only)")
    p.add_argument("--cfl-policy", dest="cfl_policy", choices=("warn", "assert"))
    p.add_argument("--profile", choices=("none", "midline", "diagonal"))
    p.add_argument("--reproducible", action="store_true", default=None,
                   help="deterministic reports (wall-clock times omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="egmcl", description="Bound-preserving, entropy-stable EG solver "
                                     "for 2D scalar conservation laws.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_flags(sub.add_parser("run", help="single transient run with VTK/CSV/JSON output"))
    _add_run_flags(sub.add_parser("convergence", help="refinement sweep with an EOC table"))
    b = sub.add_parser("bench", help="run a benchmark preset")
    b.add_argument("name", choices=sorted(PRESETS))
    b.add_argument("--out")
    b.add_argument("--scheme", help="override the preset's scheme list")
    b.add_argument("--reproducible", action="store_true", default=None)
    return parser


def config_from_args(args):
    values = {k: getattr(args, k, None) for k in _FLAGS}
    if args.preset:
        values["preset"] = args.preset
    if args.reproducible:
        values["reproducible"] = True
    return parse_config(values, path=args.config)


def main(argv=None) -> int:
    from .runner import bench, run_convergence, run_single

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "bench":
            extra = {"schemes": tuple(s.strip() for s in args.scheme.split(","))} if args.scheme else {}
            summary = bench(args.name, out=args.out, reproducible=bool(args.reproducible), **extra)
            print(f"bench {args.name}: done" + (f" in {summary['wall_clock']:.1f}s" if summary["wall_clock"] else ""))
            return 0
        cfg = config_from_args(args)
        if args.command == "run":
            for scheme in cfg.schemes:
                run = run_single(cfg, scheme=scheme)
                c = run.report["counters"]
                print(f"{cfg.problem}/{scheme}: {run.loop.n_steps} steps -> {run.out_dir} "
                      f"(global {c['global_violations']}, local {c['local_violations']}, "
                      f"entropy {c['entropy_violations']}, cfl {c['cfl_violations']})")
        else:
            rows = run_convergence(cfg)
            for r in rows:
                rate = r.get("rate_L1", r.get("eoc_L1"))
                print(f"{r['scheme']:>6} level {r['level']}: "
                      + (f"rate {rate:.3f}" if rate is not None else "-"))
        return 0
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SolverAbort as exc:
        print(f"solver aborted: {exc}", file=sys.stderr)
        return 3
    except OutputError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
