"""Command-line entry point.

Exit codes: 0 when every requested flag is true, 2 when the pipeline ran but
at least one flag is false, 1 on execution errors (bad config, I/O, crashes).
"""

from __future__ import annotations

import argparse
import sys

from .config import SchemaError, load_config
from .report import emit, exit_code, orchestrate

SUBCOMMANDS = {
    "fom-run": ["fom"],
    "pod": ["pod"],
    "rom-certify": ["certify"],
    "estimate": ["estimate"],
    "transition": ["transition"],
    "fsi-margin": ["fsi_margin"],
    "fsi-run": ["fsi_run"],
    "report": None,  # every stage whose section is present
}

HELP = {
    "fom-run": "run the full-order model and write the final state",
    "pod": "extract a POD basis and write the reduced-model container",
    "rom-certify": "march the certified reduced model and write the energy ledger",
    "estimate": "compute the residual, the a posteriori bound and the true error",
    "transition": "evaluate the energy, enstrophy and resolvent indicators",
    "fsi-margin": "evaluate the FSI added-mass margins",
    "fsi-run": "run the 1D Robin-Robin testbed and write its ledger",
    "report": "run every configured stage and write the full report",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="certrom", description="Certified reduced-order modeling runs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        report = orchestrate(cfg, SUBCOMMANDS[args.command])
        emit(report, args.out)
    except (SchemaError, OSError) as exc:
        print(f"certrom: error: {exc}", file=sys.stderr)
        return 1
    code = exit_code(report)
    for err in report.body["errors"]:
        print(f"certrom: stage {err['stage']} failed: {err['error']}", file=sys.stderr)
    flags = ", ".join(f"{k}={v}" for k, v in report.flags.items() if v is not None)
    print(f"{args.command}: {flags or 'no flags evaluated'} -> exit {code}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
