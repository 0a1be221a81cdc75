"""Largest surviving score on cohorts with nothing injected, one line per seed.

    python3 scripts/null_calibration.py --seeds 20 --n 20000 [--threshold 3]
"""
import argparse
import sys

from adrscan import scenarios


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--n", type=int, default=20_000)
    p.add_argument("--threshold", type=float, default=3.0)
    args = p.parse_args()
    maxima = []
    for seed in range(args.seeds):
        out = scenarios.run_seed(seed, args.n, inject=False, methods=("dress",))
        top = out.reports["dress"].ranked()[:1]
        maxima.append(out.max_dress_score())
        print(f"seed={seed} max_score={maxima[-1]:.4f} top={top[0].code if top else '-'}", flush=True)
    below = sum(m < args.threshold for m in maxima)
    print(f"\nmax score < {args.threshold}: {below}/{len(maxima)} seeds")
    return 0


if __name__ == "__main__":
    sys.exit(main())
