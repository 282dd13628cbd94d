"""Run every shipped config and print one line per experiment.

    python3 scripts/run_all_configs.py [--out out] [--horizon N]
"""
import argparse
import sys
import time
from pathlib import Path

from ergolab.cli import run
from ergolab.config import load_config

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--horizon", type=int, default=None, help="override every config's horizon")
    args = p.parse_args()
    failed = 0
    for path in sorted((ROOT / "configs").glob("*.json")):
        exp = path.stem.split("_")[0]
        cfg = load_config(path, exp, {"horizon": args.horizon})
        t0 = time.perf_counter()
        res = run(cfg, args.out / path.stem)
        dt = time.perf_counter() - t0
        status = "PASS" if res.passed else "FAIL"
        failed += not res.passed
        print(f"{status} {path.stem:<24} {dt:7.1f}s  " + " ".join(f"{k}={v}" for k, v in res.verdicts.items()))
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
