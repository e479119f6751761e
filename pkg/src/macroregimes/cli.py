"""Command-line entry point: ``macroregimes <subcommand> --config run.yaml --out runs/``."""

from __future__ import annotations

import argparse
import sys

from .pipeline import STAGES, ConfigError, StageError, run, write_synthetic

# subcommand -> last stage executed
_UNTIL = {"run": "strategy", **{s: s for s in STAGES}}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="macroregimes", description=__doc__.split(":")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", *STAGES):
        sp = sub.add_parser(name, help="full pipeline" if name == "run" else f"pipeline up to the {name} stage")
        sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--out", required=True, help="output root; a run directory is created inside")
        sp.add_argument("--resume", action="store_true", help="reuse matching stage caches")
        sp.add_argument("--seed", type=int, default=None, help="override kmeans.seed")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
        sp.add_argument("--name", default=None, help="run directory name (default: UTC timestamp)")
    sp = sub.add_parser("synth", help="write a synthetic panel in the ingest CSV layout")
    sp.add_argument("--out", required=True)
    sp.add_argument("--kind", choices=("regimes", "leadlag"), default="regimes")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--regimes", type=int, default=3, help="regime count (kind=regimes)")
    sp.add_argument("--assets", type=int, default=20, help="asset count (kind=regimes)")
    sp.add_argument("--length", type=int, default=250, help="rows per regime, or total rows for leadlag")
    sp.add_argument("--clusters", type=int, nargs="+", default=[3, 3], help="cluster sizes (kind=leadlag)")
    sp.add_argument("--lag", type=int, default=5)
    sp.add_argument("--coupling", type=float, default=0.8)
    sp.add_argument("--noise", type=float, default=0.2)
    sp.add_argument("--threads", type=int, default=1, help=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "synth":
            if args.kind == "regimes":
                params = {"K": args.regimes, "N": args.assets, "dates_per_regime": args.length}
            else:
                params = {"clusters": args.clusters, "lag": args.lag, "coupling": args.coupling,
                          "noise": args.noise, "T": args.length}
            print(write_synthetic(args.out, args.kind, args.seed, **params))
            return 0
        run_dir = run(args.config, args.out, until=_UNTIL[args.command], resume=args.resume,
                      seed=args.seed, threads=args.threads, run_name=args.name)
    except (ConfigError, StageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(run_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
