"""Run the desk-scale simulation sweep and write tables and plots.

    python3 scripts/run_sweep.py --config configs/sweep_desk.json --out results/desk

Equivalent to ``trainbias sweep``; kept as a script so the run can be edited
in place (extra logging, different variant sets) without touching the CLI.
"""

import argparse
import logging
import time
from dataclasses import replace

from trainbias import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/sweep_desk.json")
    ap.add_argument("--out", default="results/desk")
    ap.add_argument("--jobs", type=int, default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = harness.SweepConfig.from_json(args.config)
    if args.jobs:
        cfg = replace(cfg, jobs=args.jobs)
    start = time.perf_counter()
    result = harness.run_sweep(cfg)
    tables = harness.summarize(result)
    harness.emit_report(tables, args.out, result=result)
    logging.info("done in %.0f s; %d runs, %d skipped", time.perf_counter() - start,
                 len(result.records), len(result.skipped))

    # quick console view: rare-class overshoot per variant at each size
    for row in tables.overshoot:
        if row.cls == 2:
            print(f"{row.variant:>10} N={row.size:<7} {row.metric:<12} "
                  f"{row.value:+.4f} +/- {row.variance ** 0.5:.4f}")


if __name__ == "__main__":
    main()
