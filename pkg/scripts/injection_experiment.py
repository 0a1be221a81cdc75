"""Rank of the held-out target reaction under every method across seeds.

    python3 scripts/injection_experiment.py --seeds 20 --n 20000 [--csv ranks.csv]
"""
import argparse
import csv
import statistics
import sys
import time

from adrscan import pipeline, scenarios


def _median(ranks, missing):
    return statistics.median(missing if r is None else r for r in ranks)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--n", type=int, default=20_000)
    p.add_argument("--csv")
    args = p.parse_args()

    rows = []
    t0 = time.perf_counter()
    for seed in range(args.first_seed, args.first_seed + args.seeds):
        out = scenarios.run_seed(seed, args.n)
        dress = out.reports["dress"]
        row = {"seed": seed, **{m: out.rank(m) for m in pipeline.METHODS}}
        row["dress_cluster"] = dress.entry(scenarios.TARGET_ADR).cluster if dress.entry(scenarios.TARGET_ADR) else None
        ind = dress.entry(scenarios.INDICATION)
        row["indicator"] = "absent" if ind is None else (ind.filtered_by or f"rank {ind.rank}")
        rows.append(row)
        print(" ".join(f"{k}={v}" for k, v in row.items()), flush=True)

    worst = 10**6  # unranked targets count as worse than any rank
    print(f"\n{len(rows)} seeds in {time.perf_counter() - t0:.1f}s")
    for m in pipeline.METHODS:
        ranks = [r[m] for r in rows]
        top10 = sum(r is not None and r <= 10 for r in ranks)
        print(f"{m:7s} median rank {_median(ranks, worst):>8}  top-10 {top10}/{len(rows)}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
