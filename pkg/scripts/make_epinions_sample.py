"""Regenerate the packaged 1% Epinions-format sample under data/.

Simulates a 1% user-based subsample of a corpus with Epinions-scale
marginals (about 664.8k ratings from 40,163 users over 139,738 items,
487k trust statements, integer ratings on a 1-5 scale): 402 users keep
their full rating lists, so the sampled rating count is ~1% of the corpus
and the per-user activity distribution is preserved.  Raw ids are
non-contiguous to exercise the dense remapping, the trust file uses the
two-column form (weight defaults to 1), and a few users are pinned to
exactly 4 and exactly 5 ratings for the cold-start boundary checks.

Deterministic: the committed files must match a fresh run byte-for-byte.
"""

import os

import numpy as np

FULL_RATINGS = 664_824
FULL_USERS = 40_163
FULL_ITEMS = 139_738
SAMPLE_RATE = 0.01
SEED = 20240131

T0 = 978_307_200     # 2001-01-01
T1 = 1_293_840_000   # 2011-01-01

RATING_PROBS = [0.05, 0.07, 0.13, 0.30, 0.45]  # positively skewed like the corpus


def main():
    rng = np.random.default_rng(SEED)
    num_users = int(round(FULL_USERS * SAMPLE_RATE))
    raw_users = rng.choice(np.arange(1, FULL_USERS + 1), size=num_users,
                           replace=False)

    # heavy-tailed per-user activity with corpus-like mean (~16.6)
    counts = 1 + rng.poisson(rng.lognormal(2.15, 1.1, size=num_users))
    counts = np.minimum(counts, 400)
    counts[0] = 4   # pinned cold-start boundary users
    counts[1] = 5
    counts[2] = 4
    counts[3] = 5

    lines = ["# 1% user subsample in Epinions format: user item rating timestamp"]
    trust_lines = ["# trust statements among the sampled users: truster trustee"]
    for u, k in zip(raw_users, counts):
        items: set[int] = set()
        while len(items) < k:
            if rng.random() < 0.3:
                items.add(int(rng.integers(1, 501)))
            else:
                items.add(int(rng.integers(1, FULL_ITEMS + 1)))
        for j in sorted(items):
            rating = int(rng.choice([1, 2, 3, 4, 5], p=RATING_PROBS))
            ts = int(rng.integers(T0, T1))
            lines.append(f"{u} {j} {rating} {ts}")

    # expected within-sample trust edges scale with the square of the rate
    target_edges = int(round(487_183 * SAMPLE_RATE ** 2))
    seen = set()
    while len(seen) < target_edges:
        a, b = rng.choice(raw_users, size=2, replace=False)
        if (a, b) not in seen:
            seen.add((int(a), int(b)))
    for a, b in sorted(seen):
        trust_lines.append(f"{a} {b}")

    root = os.path.join(os.path.dirname(__file__), "..", "data")
    os.makedirs(root, exist_ok=True)
    ratings_path = os.path.join(root, "epinions_sample_ratings.txt")
    trust_path = os.path.join(root, "epinions_sample_trust.txt")
    with open(ratings_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(trust_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(trust_lines) + "\n")

    n_ratings = len(lines) - 1
    print(f"wrote {n_ratings} ratings for {num_users} users "
          f"({n_ratings / FULL_RATINGS:.4%} of the corpus) to {ratings_path}")
    print(f"wrote {len(seen)} trust statements to {trust_path}")
    print(f"per-user counts: mean {counts.mean():.2f}, "
          f"cold (<5): {(counts < 5).sum()}")


if __name__ == "__main__":
    main()
