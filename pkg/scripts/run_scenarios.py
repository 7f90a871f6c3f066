"""Run every config in configs/ through `certrom report` and tabulate exit codes.

    python scripts/run_scenarios.py --out runs/
"""

import argparse
import json
from pathlib import Path

from certrom.cli import main

ROOT = Path(__file__).resolve().parents[1]


def run(out: Path, seed: int | None):
    rows = []
    for cfg in sorted((ROOT / "configs").glob("*.json")):
        argv = ["report", "--config", str(cfg), "--out", str(out / cfg.stem)]
        if seed is not None:
            argv += ["--seed", str(seed)]
        code = main(argv)
        flags = json.loads((out / cfg.stem / "report.json").read_text())["flags"]
        rows.append((cfg.stem, code, flags))
    return rows


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    print()
    for name, code, flags in run(Path(args.out), args.seed):
        bad = [k for k, v in flags.items() if v is False]
        print(f"{name:<22} exit {code}  false flags: {', '.join(bad) or '-'}")
