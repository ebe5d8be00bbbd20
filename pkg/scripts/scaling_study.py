"""Per-iteration wall-time versus dataset size.

Measures one full training iteration (intrinsic + social + apply) at growing
rating counts with fixed trust, and at growing trust counts with fixed
ratings, printing the doubling ratios.  Equivalent to `aspectmf bench`.

Usage: python scripts/scaling_study.py [--full]
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from aspectmf.data import SyntheticConfig
from aspectmf.evaluation import scaling_benchmark
from aspectmf.model import AspectConfig, HyperParams


def synth_for(num_ratings, num_edges, seed, per_user=40, items=1000, factors=5):
    users = max(2, num_ratings // per_user)
    density = min(1.0, num_edges / (users * (users - 1))) if num_edges else 0.0
    return SyntheticConfig(num_users=users, num_items=items,
                           num_factors=factors, ratings_per_user=per_user,
                           time_span_days=365, trust_density=density, seed=seed)


def report(rows, key):
    for row in rows:
        print(f"  |R|={row['num_ratings']:6d} |T|={row['num_edges']:6d} "
              f"{row['seconds_per_iteration']:.3f}s/iter")
    for a, b in zip(rows, rows[1:]):
        ratio = b["seconds_per_iteration"] / a["seconds_per_iteration"]
        print(f"  doubling {key}: time ratio {ratio:.2f}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--full", action="store_true",
                    help="acceptance sizes (20k/40k/80k) instead of a quick run")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    hyper = HyperParams(D=5, seed=0)
    cfg = AspectConfig(dynamic_bias=True, dynamic_feature=True,
                       dynamic_feature_value=True, social=True,
                       conditional=True, implicit_feedback=True)
    r_sizes = (20_000, 40_000, 80_000) if args.full else (5_000, 10_000, 20_000)
    t_sizes = (5_000, 10_000, 20_000) if args.full else (1_000, 2_000, 4_000)

    print("== rating-count scaling (fixed trust) ==")
    rows = scaling_benchmark([synth_for(n, 2_000, seed=10 + i)
                              for i, n in enumerate(r_sizes)],
                             hyper, cfg, repeats=args.repeats)
    report(rows, "|R|")
    print("== trust-count scaling (fixed ratings) ==")
    rows = scaling_benchmark([synth_for(r_sizes[0], n, seed=20 + i)
                              for i, n in enumerate(t_sizes)],
                             hyper, cfg, repeats=args.repeats)
    report(rows, "|T|")


if __name__ == "__main__":
    main()
