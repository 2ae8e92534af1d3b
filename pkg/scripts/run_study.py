"""Run the desk-scale studies end to end and print the value tables.

Usage::

    python3 scripts/run_study.py                      # scour and corrosion
    python3 scripts/run_study.py scour --workers 2
    python3 scripts/run_study.py corrosion --output runs/corr

Each case runs every CLI stage in order (``shm-voi all``). Finished stages
are skipped on re-runs, so the script can be resumed after an interruption.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from shmvoi import cli
from shmvoi.config import load_config

CONFIGS = Path(__file__).resolve().parent / "configs"


def print_table(path: Path) -> None:
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return
    cols = list(rows[0])
    width = [max(len(c), *(len(_short(r[c])) for r in rows)) for c in cols]
    print("  ".join(c.rjust(w) for c, w in zip(cols, width)))
    for r in rows:
        print("  ".join(_short(r[c]).rjust(w) for c, w in zip(cols, width)))


def _short(s: str) -> str:
    try:
        return f"{float(s):.4g}"
    except ValueError:
        return s


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("cases", nargs="*", default=["scour", "corrosion"], choices=["scour", "corrosion"])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output", type=Path, default=None, help="output root (one subdirectory per case)")
    args = p.parse_args(argv)

    for case in args.cases:
        conf = CONFIGS / f"{case}_desk.toml"
        cmd = ["all", "--config", str(conf), "--workers", str(args.workers), "-v"]
        if args.output is not None:
            cmd += ["--output", str(args.output / case)]
        code = cli.main(cmd)
        if code != cli.EXIT_OK:
            return code
        out = args.output / case if args.output is not None else load_config(conf).output
        for stage, name in (("voi", "voi.csv"), ("vppi", "vppi.csv"), ("sensor-study", "voi.csv")):
            table = out / stage / name
            if table.exists():
                print(f"\n{case} {stage}")
                print_table(table)
    return 0


if __name__ == "__main__":
    sys.exit(main())
