"""Time arithmetic shared by the model and the trainer.

Timestamps are epoch seconds; internally every computation works on integer
day indices.  A user's temporal reference point is the mean day of their
training ratings, and long-term drift is measured by a signed power-law
distance from that reference day.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SECONDS_PER_DAY = 86_400


@dataclass
class TemporalContext:
    """Day-index bounds and per-user reference days of a training set.

    Attributes:
        beta: exponent of the signed power-law deviation kernel (> 0).
        num_bins: number of equal-width item-bias bins over [t_min, t_max].
        t_min, t_max: day-index bounds of the training data.
        t_u: per-user mean rating day (real-valued, length num_users).
        day_length: seconds per day.
    """

    beta: float = 0.4
    num_bins: int = 30
    t_min: int = 0
    t_max: int = 0
    t_u: np.ndarray = field(default_factory=lambda: np.zeros(0))
    day_length: int = SECONDS_PER_DAY

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.num_bins < 1:
            raise ValueError("num_bins must be >= 1")
        if self.t_min > self.t_max:
            raise ValueError("t_min must be <= t_max")

    @classmethod
    def from_dataset(cls, dataset, beta: float = 0.4, num_bins: int = 30) -> "TemporalContext":
        """Build a context from a training RatingDataset.

        Users without any training rating get the midpoint of the observed
        day span as their reference day; their drift slopes are never
        trained, so the value is inert but keeps t_u well-defined.
        """
        days = dataset.timestamps // SECONDS_PER_DAY
        if len(days) == 0:
            raise ValueError("cannot build a temporal context from an empty dataset")
        t_min = int(days.min())
        t_max = int(days.max())
        mid = 0.5 * (t_min + t_max)
        t_u = np.full(dataset.num_users, mid, dtype=float)
        for u in range(dataset.num_users):
            ut = dataset.user_times(u)
            if len(ut):
                t_u[u] = mean_rating_day(ut // SECONDS_PER_DAY)
        return cls(beta=beta, num_bins=num_bins, t_min=t_min, t_max=t_max, t_u=t_u)

    def user_day(self, u: int) -> float:
        """Reference day for user u; midpoint of the span for unseen users."""
        if 0 <= u < len(self.t_u):
            return float(self.t_u[u])
        return 0.5 * (self.t_min + self.t_max)


def day_index(timestamp: int, ctx: TemporalContext | None = None) -> int:
    """Map epoch seconds to an integer day index (floor division)."""
    if timestamp < 0:
        raise ValueError("timestamp must be >= 0")
    day_length = ctx.day_length if ctx is not None else SECONDS_PER_DAY
    return int(timestamp // day_length)


def mean_rating_day(user_days) -> float:
    """Arithmetic mean of a user's rating days, kept as a real number."""
    arr = np.asarray(user_days, dtype=float)
    if arr.size == 0:
        raise ValueError("user has no rating days")
    return float(arr.mean())


def deviation(t: float, t_u: float, beta: float) -> float:
    """Signed power-law distance of day t from the reference day t_u.

    sign(t - t_u) * |t - t_u| ** beta; exactly 0 at t == t_u.
    """
    d = t - t_u
    if d == 0:
        return 0.0
    return float(np.sign(d) * np.abs(d) ** beta)


def deviation_array(t: np.ndarray, t_u: float, beta: float) -> np.ndarray:
    """Vectorised `deviation` over an array of days."""
    d = np.asarray(t, dtype=float) - t_u
    return np.sign(d) * np.abs(d) ** beta


def bin_index(t: int, ctx: TemporalContext) -> int:
    """Equal-width bin of day t over [t_min, t_max], clamped at the edges.

    Out-of-span days (test-time extrapolation) map to the nearest bin.
    """
    if t <= ctx.t_min:
        return 0
    if t >= ctx.t_max:
        return ctx.num_bins - 1
    span = ctx.t_max - ctx.t_min + 1
    return int((t - ctx.t_min) * ctx.num_bins // span)
