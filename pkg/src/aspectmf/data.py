"""Rating and trust data: file parsing, statistics, splits, synthetic generation.

File formats
------------
Ratings: UTF-8 text, one record per line, fields ``user item rating timestamp``
separated by whitespace (or a configured single-character delimiter).
Lines starting with ``#`` are comments.  Trust: ``truster trustee [weight]``
with the weight defaulting to 1.

All parsed structures remap raw ids to dense 0-based integer ranges and are
immutable after construction, so they are safe to share read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from aspectmf import temporal
from aspectmf.temporal import SECONDS_PER_DAY


class DataError(Exception):
    """Raised for malformed input files or invalid data arguments."""


class RatingRecord(NamedTuple):
    user: int
    item: int
    rating: float
    timestamp: int


class RatingDataset:
    """Observed (user, item, rating, timestamp) quadruples with indexes.

    Holds parallel arrays plus per-user and per-item indexes:
    ``user_items(u)`` / ``user_times(u)`` are the items rated by u and the
    timestamps of those ratings; ``item_users(j)`` / ``item_times(j)`` are
    the users who rated j and the timestamps of those ratings.
    """

    def __init__(self, users, items, ratings, timestamps, num_users, num_items,
                 rating_scale):
        self.users = np.asarray(users, dtype=np.int64)
        self.items = np.asarray(items, dtype=np.int64)
        self.ratings = np.asarray(ratings, dtype=np.float64)
        self.timestamps = np.asarray(timestamps, dtype=np.int64)
        self.num_users = int(num_users)
        self.num_items = int(num_items)
        self.rating_scale = (float(rating_scale[0]), float(rating_scale[1]))
        n = len(self.users)
        if not (len(self.items) == len(self.ratings) == len(self.timestamps) == n):
            raise DataError("rating arrays must have equal length")
        seen = set(zip(self.users.tolist(), self.items.tolist()))
        if len(seen) != n:
            raise DataError("duplicate (user, item) pairs in dataset")
        self._user_rows = [[] for _ in range(self.num_users)]
        self._item_rows = [[] for _ in range(self.num_items)]
        for r in range(n):
            self._user_rows[self.users[r]].append(r)
            self._item_rows[self.items[r]].append(r)
        self._user_rows = [np.asarray(rows, dtype=np.int64) for rows in self._user_rows]
        self._item_rows = [np.asarray(rows, dtype=np.int64) for rows in self._item_rows]

    def __len__(self) -> int:
        return len(self.users)

    @property
    def records(self) -> list[RatingRecord]:
        return [RatingRecord(int(u), int(i), float(r), int(t))
                for u, i, r, t in zip(self.users, self.items, self.ratings, self.timestamps)]

    def user_items(self, u: int) -> np.ndarray:
        return self.items[self._user_rows[u]]

    def user_times(self, u: int) -> np.ndarray:
        return self.timestamps[self._user_rows[u]]

    def user_count(self, u: int) -> int:
        return len(self._user_rows[u])

    def item_users(self, j: int) -> np.ndarray:
        return self.users[self._item_rows[j]]

    def item_times(self, j: int) -> np.ndarray:
        return self.timestamps[self._item_rows[j]]

    def item_count(self, j: int) -> int:
        return len(self._item_rows[j])

    def user_rows(self, u: int) -> np.ndarray:
        return self._user_rows[u]

    def subset(self, rows: np.ndarray) -> "RatingDataset":
        """New dataset over the given record rows, same id space and scale."""
        rows = np.asarray(rows, dtype=np.int64)
        return RatingDataset(self.users[rows], self.items[rows], self.ratings[rows],
                             self.timestamps[rows], self.num_users, self.num_items,
                             self.rating_scale)

    def days(self) -> np.ndarray:
        return self.timestamps // SECONDS_PER_DAY


class TrustNetwork:
    """Sparse directed trust statements between users.

    ``trustees(u)`` and ``trust_weights(u)`` give the out-neighbourhood of
    user u; ``in_degree`` counts incoming statements per user.
    """

    def __init__(self, edges: Iterable[tuple[int, int, float]], num_users: int):
        edges = list(edges)
        self.num_users = int(num_users)
        if edges:
            src = np.asarray([e[0] for e in edges], dtype=np.int64)
            dst = np.asarray([e[1] for e in edges], dtype=np.int64)
            w = np.asarray([e[2] for e in edges], dtype=np.float64)
        else:
            src = np.zeros(0, dtype=np.int64)
            dst = np.zeros(0, dtype=np.int64)
            w = np.zeros(0, dtype=np.float64)
        if np.any(src == dst):
            raise DataError("self-loops are not allowed in a trust network")
        if np.any(w < 0):
            raise DataError("trust weights must be non-negative")
        self.src = src
        self.dst = dst
        self.weights = w
        self._out = [[] for _ in range(self.num_users)]
        self.in_degree = np.zeros(self.num_users, dtype=np.int64)
        for k in range(len(src)):
            self._out[src[k]].append(k)
            self.in_degree[dst[k]] += 1
        self._out = [np.asarray(rows, dtype=np.int64) for rows in self._out]

    def __len__(self) -> int:
        return len(self.src)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(u), int(v), float(w))
                for u, v, w in zip(self.src, self.dst, self.weights)]

    def trustees(self, u: int) -> np.ndarray:
        if u >= self.num_users:
            return np.zeros(0, dtype=np.int64)
        return self.dst[self._out[u]]

    def trust_weights(self, u: int) -> np.ndarray:
        if u >= self.num_users:
            return np.zeros(0, dtype=np.float64)
        return self.weights[self._out[u]]

    def out_degree(self, u: int) -> int:
        if u >= self.num_users:
            return 0
        return len(self._out[u])

    @classmethod
    def empty(cls, num_users: int) -> "TrustNetwork":
        return cls([], num_users)


@dataclass
class StatsReport:
    num_users: int
    num_items: int
    num_ratings: int
    num_trust_edges: int
    rating_density: float
    trust_density: float
    mean_ratings_per_user: float
    mean_ratings_per_cold_user: float
    num_cold_users: int


@dataclass
class DriftProfile:
    """Which planted aspects drift, and how strongly.

    Slope magnitudes are standard deviations of the per-user long-term
    drift slopes; day_noise_std drives the day-specific offsets.
    """

    bias: bool = False
    feature: bool = False
    feature_value: bool = False
    bias_slope_std: float = 0.05
    feature_slope_std: float = 0.05
    feature_value_slope_std: float = 0.05
    day_noise_std: float = 0.0


@dataclass
class SyntheticConfig:
    num_users: int = 100
    num_items: int = 200
    num_factors: int = 3
    rating_scale: tuple[float, float] = (1.0, 5.0)
    time_span_days: int = 1000
    drift_profile: DriftProfile = field(default_factory=DriftProfile)
    trust_density: float = 0.0
    noise_std: float = 0.2
    seed: int = 0
    ratings_per_user: int = 30
    beta: float = 0.4

    def validate(self):
        if self.num_users <= 0 or self.num_items <= 0 or self.num_factors <= 0:
            raise ValueError("counts must be positive")
        if not (0.0 <= self.trust_density <= 1.0):
            raise ValueError("trust_density must lie in [0, 1]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.time_span_days <= 0 or self.ratings_per_user <= 0:
            raise ValueError("time span and ratings per user must be positive")
        if self.rating_scale[0] >= self.rating_scale[1]:
            raise ValueError("rating scale must satisfy min < max")


@dataclass
class GroundTruth:
    """Planted parameters behind a synthetic dataset."""

    config: SyntheticConfig
    mu: float
    bu: np.ndarray
    bi: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    bias_slope: np.ndarray
    feature_slope: np.ndarray
    w_slope: np.ndarray
    z_slope: np.ndarray
    t_u: np.ndarray


def _split_line(line: str, delimiter: str | None) -> list[str]:
    return line.split() if delimiter is None else line.split(delimiter)


def _dense_id_map(raw_ids) -> dict[str, int]:
    """Assign dense 0-based ids in sorted raw-id order.

    Numeric sort when every raw id parses as an integer (the common case
    for public rating corpora), lexicographic otherwise.  Sorting makes
    the mapping independent of record order, so the canonical writer and
    the parser round-trip exactly.
    """
    ids = list(raw_ids)
    try:
        ids.sort(key=int)
    except ValueError:
        ids.sort()
    return {raw: dense for dense, raw in enumerate(ids)}


def parse_ratings(path, scale, delimiter: str | None = None,
                  return_user_map: bool = False):
    """Parse a ratings file into a dense-id RatingDataset.

    Raw ids are remapped (first-appearance order) to dense 0-based ranges.
    Duplicate (user, item) pairs keep the entry with the latest timestamp;
    on a timestamp tie the later line wins.  With ``return_user_map`` the
    raw-to-dense user mapping is returned alongside the dataset so a trust
    file can share the id space.
    """
    lo, hi = float(scale[0]), float(scale[1])
    best: dict[tuple[str, str], tuple[float, int]] = {}
    order: list[tuple[str, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = _split_line(line, delimiter)
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                rating = float(parts[2])
                ts = int(float(parts[3]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if not (lo <= rating <= hi):
                raise DataError(
                    f"{path}:{lineno}: rating {rating} outside scale [{lo}, {hi}]")
            if ts < 0:
                raise DataError(f"{path}:{lineno}: negative timestamp")
            key = (parts[0], parts[1])
            if key not in best:
                order.append(key)
                best[key] = (rating, ts)
            elif ts >= best[key][1]:
                best[key] = (rating, ts)
    if not best:
        raise DataError(f"{path}: empty ratings file")
    user_map = _dense_id_map({k[0] for k in order})
    item_map = _dense_id_map({k[1] for k in order})
    users = [user_map[k[0]] for k in order]
    items = [item_map[k[1]] for k in order]
    ratings = [best[k][0] for k in order]
    stamps = [best[k][1] for k in order]
    dataset = RatingDataset(users, items, ratings, stamps,
                            num_users=len(user_map), num_items=len(item_map),
                            rating_scale=(lo, hi))
    if return_user_map:
        return dataset, user_map
    return dataset


def parse_trust(path, num_users: int | None = None,
                user_map: dict[str, int] | None = None,
                delimiter: str | None = None) -> tuple[TrustNetwork, int]:
    """Parse a trust file; returns (network, skipped_line_count).

    Skipped lines are self-loops plus, when ``user_map`` is given, edges
    touching users absent from the ratings id space.  Duplicate directed
    edges keep the first occurrence.  Without a ``user_map``, raw ids are
    densely remapped on their own (sorted raw-id order).
    """
    raw_edges: list[tuple[str, str, float]] = []
    skipped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = _split_line(line, delimiter)
            if len(parts) not in (2, 3):
                raise DataError(f"{path}:{lineno}: expected 2 or 3 fields, got {len(parts)}")
            try:
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if w < 0:
                raise DataError(f"{path}:{lineno}: negative trust weight")
            if parts[0] == parts[1]:
                skipped += 1
                continue
            if user_map is not None and (parts[0] not in user_map
                                         or parts[1] not in user_map):
                skipped += 1
                continue
            raw_edges.append((parts[0], parts[1], w))
    if user_map is None:
        user_map = _dense_id_map({e[0] for e in raw_edges}
                                 | {e[1] for e in raw_edges})
        if num_users is None:
            num_users = len(user_map)
    elif num_users is None:
        num_users = len(user_map)
    seen: set[tuple[int, int]] = set()
    edges: list[tuple[int, int, float]] = []
    for a, b, w in raw_edges:
        u, v = user_map[a], user_map[b]
        if (u, v) in seen:
            continue
        seen.add((u, v))
        edges.append((u, v, w))
    return TrustNetwork(edges, num_users), skipped


def parse_pair(ratings_path, trust_path, scale,
               delimiter: str | None = None) -> tuple[RatingDataset, TrustNetwork, int]:
    """Parse ratings and trust files sharing one raw user-id space.

    Trust edges touching users absent from the ratings file are skipped
    (counted in the returned skip count) since the model's id space is
    defined by the rating data.
    """
    dataset, user_map = parse_ratings(ratings_path, scale, delimiter,
                                      return_user_map=True)
    trust, skipped = parse_trust(trust_path, num_users=dataset.num_users,
                                 user_map=user_map, delimiter=delimiter)
    return dataset, trust, skipped


def write_ratings(dataset: RatingDataset, path):
    """Canonical writer: space-delimited, newline-terminated lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for u, j, r, t in zip(dataset.users, dataset.items, dataset.ratings,
                              dataset.timestamps):
            fh.write(f"{u} {j} {r:.17g} {t}\n")


def write_trust(trust: TrustNetwork, path):
    with open(path, "w", encoding="utf-8") as fh:
        for u, v, w in zip(trust.src, trust.dst, trust.weights):
            fh.write(f"{u} {v} {w:.17g}\n")


def dataset_stats(dataset: RatingDataset, trust: TrustNetwork | None = None,
                  cold_threshold: int = 5) -> StatsReport:
    """Densities and mean ratings-per-user figures, overall and cold-start."""
    n, m = dataset.num_users, dataset.num_items
    if n <= 0 or m <= 0:
        raise DataError("dataset must have at least one user and item")
    counts = np.asarray([dataset.user_count(u) for u in range(n)])
    cold = counts < cold_threshold
    num_edges = len(trust) if trust is not None else 0
    trust_density = num_edges / (n * (n - 1)) if n > 1 else 0.0
    mean_cold = float(counts[cold].mean()) if cold.any() else 0.0
    return StatsReport(
        num_users=n,
        num_items=m,
        num_ratings=len(dataset),
        num_trust_edges=num_edges,
        rating_density=len(dataset) / (n * m),
        trust_density=trust_density,
        mean_ratings_per_user=float(counts.mean()),
        mean_ratings_per_cold_user=mean_cold,
        num_cold_users=int(cold.sum()),
    )


def split_random(dataset: RatingDataset, train_fraction: float,
                 seed: int) -> tuple[RatingDataset, RatingDataset]:
    """Uniform random per-rating split; deterministic given the seed.

    Both halves keep the parent's id space and rating scale, so entities
    can be train-only or test-only.
    """
    if not (0.0 < train_fraction < 1.0):
        raise ValueError("train_fraction must lie strictly inside (0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(dataset))
    n_train = int(round(train_fraction * len(dataset)))
    train_rows = np.sort(perm[:n_train])
    test_rows = np.sort(perm[n_train:])
    return dataset.subset(train_rows), dataset.subset(test_rows)


def cold_start_users(train: RatingDataset, threshold: int = 5) -> set[int]:
    """Users with strictly fewer than `threshold` training ratings."""
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    return {u for u in range(train.num_users) if train.user_count(u) < threshold}


def generate_synthetic(cfg: SyntheticConfig) -> tuple[RatingDataset, TrustNetwork, GroundTruth]:
    """Generate ratings from a planted drifting model plus Gaussian noise.

    The planted model is a biased latent-factor form whose user bias and
    user feature preferences optionally drift long-term (per-user slope
    times the signed power-law day deviation) with optional day-specific
    noise.  Ratings are clipped to the configured scale.  Deterministic
    given cfg.seed.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n, m, d = cfg.num_users, cfg.num_items, cfg.num_factors
    lo, hi = cfg.rating_scale
    prof = cfg.drift_profile

    mu = 0.5 * (lo + hi)
    bu = rng.normal(0.0, 0.35, size=n)
    bi = rng.normal(0.0, 0.35, size=m)
    # choose factor scales so the latent term has std ~0.5
    s = (0.25 / d) ** 0.25
    P = rng.normal(0.0, s, size=(n, d))
    Q = rng.normal(0.0, s, size=(m, d))
    bias_slope = rng.normal(0.0, prof.bias_slope_std, size=n) if prof.bias else np.zeros(n)
    feature_slope = (rng.normal(0.0, prof.feature_slope_std, size=n)
                     if prof.feature else np.zeros(n))
    w_slope = (rng.normal(0.0, prof.feature_value_slope_std, size=n)
               if prof.feature_value else np.zeros(n))
    z_slope = (rng.normal(0.0, prof.feature_value_slope_std, size=n)
               if prof.feature_value else np.zeros(n))

    users, items, stamps = [], [], []
    for u in range(n):
        k = min(cfg.ratings_per_user, m)
        rated = rng.choice(m, size=k, replace=False)
        days = rng.integers(0, cfg.time_span_days, size=k)
        users.extend([u] * k)
        items.extend(rated.tolist())
        stamps.extend((days * SECONDS_PER_DAY).tolist())
    users = np.asarray(users)
    items = np.asarray(items)
    stamps = np.asarray(stamps, dtype=np.int64)
    days = stamps // SECONDS_PER_DAY

    t_u = np.zeros(n)
    for u in range(n):
        t_u[u] = days[users == u].mean()

    diff = days - t_u[users]
    dev = np.sign(diff) * np.abs(diff) ** cfg.beta

    qsum = Q.sum(axis=1)
    base = (mu + bu[users] + bi[items]
            + np.einsum("rf,rf->r", P[users], Q[items]))
    drift = bias_slope[users] * dev
    drift = drift + feature_slope[users] * dev * qsum[items]
    # W drifts around 1, Z around 0: contributes slope*dev*(P.Q) + slope*dev*P.1
    drift = drift + w_slope[users] * dev * np.einsum("rf,rf->r", P[users], Q[items])
    drift = drift + z_slope[users] * dev * P[users].sum(axis=1)
    values = base + drift
    if prof.day_noise_std > 0:
        day_offsets: dict[tuple[int, int], float] = {}
        for r in range(len(users)):
            key = (int(users[r]), int(days[r]))
            if key not in day_offsets:
                day_offsets[key] = rng.normal(0.0, prof.day_noise_std)
            values[r] += day_offsets[key]
    if cfg.noise_std > 0:
        values = values + rng.normal(0.0, cfg.noise_std, size=len(values))
    values = np.clip(values, lo, hi)

    dataset = RatingDataset(users, items, values, stamps, n, m, (lo, hi))

    edges = []
    if cfg.trust_density > 0 and n > 1:
        mask = rng.random((n, n)) < cfg.trust_density
        np.fill_diagonal(mask, False)
        for u, v in zip(*np.nonzero(mask)):
            edges.append((int(u), int(v), 1.0))
    trust = TrustNetwork(edges, n)

    truth = GroundTruth(config=cfg, mu=mu, bu=bu, bi=bi, P=P, Q=Q,
                        bias_slope=bias_slope, feature_slope=feature_slope,
                        w_slope=w_slope, z_slope=z_slope, t_u=t_u)
    return dataset, trust, truth
