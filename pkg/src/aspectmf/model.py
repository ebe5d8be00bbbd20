"""Model state and forward computations.

Houses every trainable tensor of the drifting preference model, the
aspect on/off configuration, rating prediction, the drifting per-aspect
values, the trust-estimate triplet, and a versioned text serialization.

Parameter groups
----------------
Static: global mean mu, user bias bu, item bias bi, feature preferences P,
item features Q, feature-value gradient W and intercept Z, inter-feature
coupling Y, social influence omega, implicit feedback y, item-bias user
scale C.  Temporal: per-user drift slopes (alpha for bias, alpha_P/W/Z for
the latent aspects), day-specific offset tables (but, Ct, Pt, Wt, Zt) and
binned item-bias offsets bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from aspectmf.temporal import TemporalContext, bin_index, deviation

# the seven switchable drift combinations plus the all-static model
COMBO_LABELS = {
    "static": (),
    "b": ("b",),
    "f": ("f",),
    "fv": ("fv",),
    "bf": ("b", "f"),
    "bfv": ("b", "fv"),
    "ffv": ("f", "fv"),
    "bffv": ("b", "f", "fv"),
}


@dataclass
class AspectConfig:
    """On/off switches for the model's preference aspects.

    The three dynamic flags gate temporal drift of bias (b), feature
    preferences (f), and feature-value preferences (fv); the remaining
    flags gate the social, conditional, and implicit-feedback components.
    """

    dynamic_bias: bool = False
    dynamic_feature: bool = False
    dynamic_feature_value: bool = False
    social: bool = True
    conditional: bool = True
    implicit_feedback: bool = True

    @classmethod
    def from_label(cls, label: str, social: bool = True, conditional: bool = True,
                   implicit_feedback: bool = True) -> "AspectConfig":
        if label not in COMBO_LABELS:
            raise ValueError(f"unknown aspect combination {label!r}; "
                             f"expected one of {sorted(COMBO_LABELS)}")
        parts = COMBO_LABELS[label]
        return cls(dynamic_bias="b" in parts,
                   dynamic_feature="f" in parts,
                   dynamic_feature_value="fv" in parts,
                   social=social, conditional=conditional,
                   implicit_feedback=implicit_feedback)

    @property
    def label(self) -> str:
        parts = []
        if self.dynamic_bias:
            parts.append("b")
        if self.dynamic_feature:
            parts.append("f")
        if self.dynamic_feature_value:
            parts.append("fv")
        return "".join(parts) or "static"

    def any_dynamic(self) -> bool:
        return self.dynamic_bias or self.dynamic_feature or self.dynamic_feature_value


@dataclass
class HyperParams:
    """Factor count, learning rates and regularizers per parameter group.

    Field names double as the keys of the flat ``key = value`` config file;
    unknown keys in a config file are rejected.
    """

    D: int = 5
    beta: float = 0.4
    num_bins: int = 30
    max_iter: int = 30
    lr_decay: float = 1.0
    init_mean: float = 0.0
    init_std: float = 0.1
    seed: int = 0
    snapshot_best: bool = False
    # social component weights
    lambda_t: float = 0.5
    eta_P: float = 1.0
    eta_W: float = 1.0
    eta_Z: float = 1.0
    # regularizers
    lambda_T: float = 0.05
    lambda_P: float = 0.05
    lambda_Pt: float = 0.1
    lambda_alpha_P: float = 0.05
    lambda_Q: float = 0.05
    lambda_W: float = 0.05
    lambda_Wt: float = 0.1
    lambda_alpha_W: float = 0.05
    lambda_Z: float = 0.05
    lambda_Zt: float = 0.1
    lambda_alpha_Z: float = 0.05
    lambda_omega: float = 0.05
    lambda_y: float = 0.05
    lambda_bu: float = 0.05
    lambda_alpha: float = 0.05
    lambda_but: float = 0.1
    lambda_C: float = 0.05
    lambda_Ct: float = 0.1
    lambda_bi: float = 0.05
    lambda_bit: float = 0.1
    lambda_Y: float = 0.05
    # learning rates
    gamma_P: float = 0.01
    gamma_Pt: float = 0.005
    gamma_alpha_P: float = 0.0005
    gamma_Q: float = 0.01
    gamma_W: float = 0.005
    gamma_Wt: float = 0.0025
    gamma_alpha_W: float = 0.0002
    gamma_Z: float = 0.005
    gamma_Zt: float = 0.0025
    gamma_alpha_Z: float = 0.0002
    gamma_omega: float = 0.005
    gamma_y: float = 0.01
    gamma_bu: float = 0.01
    gamma_alpha: float = 0.001
    gamma_but: float = 0.005
    gamma_C: float = 0.005
    gamma_Ct: float = 0.0025
    gamma_bi: float = 0.01
    gamma_bit: float = 0.005
    gamma_Y: float = 0.005

    def validate(self):
        if self.D < 1:
            raise ValueError("D must be >= 1")
        if not (0.0 < self.lr_decay <= 1.0):
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.num_bins < 1:
            raise ValueError("num_bins must be >= 1")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        for f in fields(self):
            if f.name.startswith(("lambda_", "gamma_", "eta_")):
                if getattr(self, f.name) < 0:
                    raise ValueError(f"{f.name} must be >= 0")

    def with_all_gammas(self, value: float) -> "HyperParams":
        """Copy with every learning rate set to `value`."""
        overrides = {f.name: value for f in fields(self) if f.name.startswith("gamma_")}
        return replace(self, **overrides)


class UserIndexes:
    """Per-user and per-item index structures the forward pass needs.

    Built once from a training dataset (and optional trust network):
    rated-item lists, rating-day lists, trustee lists, and the
    inverse-square-root count weights (0 where a count is 0).
    """

    def __init__(self, train, trust=None):
        n, m = train.num_users, train.num_items
        self.num_users, self.num_items = n, m
        self.user_items = [train.user_items(u) for u in range(n)]
        self.user_days = [train.user_times(u) // 86_400 for u in range(n)]
        counts_u = np.asarray([len(it) for it in self.user_items], dtype=float)
        counts_j = np.asarray([train.item_count(j) for j in range(m)], dtype=float)
        with np.errstate(divide="ignore"):
            self.inv_sqrt_I = np.where(counts_u > 0, counts_u ** -0.5, 0.0)
            self.inv_sqrt_U = np.where(counts_j > 0, counts_j ** -0.5, 0.0)
        if trust is not None:
            self.trustees = [trust.trustees(u) for u in range(n)]
            self.trust_values = [trust.trust_weights(u) for u in range(n)]
            out_deg = np.asarray([len(t) for t in self.trustees], dtype=float)
            in_deg = trust.in_degree[:n].astype(float)
        else:
            self.trustees = [np.zeros(0, dtype=np.int64) for _ in range(n)]
            self.trust_values = [np.zeros(0) for _ in range(n)]
            out_deg = np.zeros(n)
            in_deg = np.zeros(n)
        with np.errstate(divide="ignore"):
            self.inv_sqrt_T = np.where(out_deg > 0, out_deg ** -0.5, 0.0)
            self.inv_sqrt_Tplus = np.where(in_deg > 0, in_deg ** -0.5, 0.0)


class ModelParams:
    """All trainable tensors plus the sparse day-table registry.

    Day-keyed offsets (but, Ct, Pt, Wt, Zt) share one (user, day) -> slot
    registry; entries exist only for pairs observed in training and read
    as zero elsewhere.
    """

    def __init__(self, num_users: int, num_items: int, num_factors: int,
                 num_bins: int, mu: float = 0.0):
        n, m, d = num_users, num_items, num_factors
        self.mu = float(mu)
        self.bu = np.zeros(n)
        self.alpha = np.zeros(n)
        self.bi = np.zeros(m)
        self.bit = np.zeros((m, num_bins))
        self.C = np.ones(n)
        self.P = np.zeros((n, d))
        self.alpha_P = np.zeros(n)
        self.Q = np.zeros((m, d))
        self.W = np.ones((n, d))
        self.alpha_W = np.zeros(n)
        self.Z = np.zeros((n, d))
        self.alpha_Z = np.zeros(n)
        self.Y = np.zeros((d, d))
        self.omega = np.zeros((n, d))
        self.y = np.zeros((m, d))
        self._day_key: dict[tuple[int, int], int] = {}
        self.day_user = np.zeros(0, dtype=np.int64)
        self.day_day = np.zeros(0, dtype=np.int64)
        self.but = np.zeros(0)
        self.Ct = np.zeros(0)
        self.Pt = np.zeros((0, d))
        self.Wt = np.zeros((0, d))
        self.Zt = np.zeros((0, d))

    @property
    def num_users(self) -> int:
        return len(self.bu)

    @property
    def num_items(self) -> int:
        return len(self.bi)

    @property
    def num_factors(self) -> int:
        return self.P.shape[1]

    @property
    def num_bins(self) -> int:
        return self.bit.shape[1]

    @property
    def num_day_slots(self) -> int:
        return len(self.but)

    def day_slot(self, u: int, day: int) -> int:
        """Slot of the (user, day) pair, or -1 when never observed."""
        return self._day_key.get((u, day), -1)

    def register_days(self, pairs) -> None:
        """Materialise zero-valued day-table rows for new (user, day) pairs."""
        new = []
        for u, day in pairs:
            key = (int(u), int(day))
            if key not in self._day_key:
                self._day_key[key] = len(self._day_key)
                new.append(key)
        if not new:
            return
        k = len(new)
        d = self.num_factors
        self.day_user = np.concatenate([self.day_user,
                                        np.asarray([p[0] for p in new], dtype=np.int64)])
        self.day_day = np.concatenate([self.day_day,
                                       np.asarray([p[1] for p in new], dtype=np.int64)])
        self.but = np.concatenate([self.but, np.zeros(k)])
        self.Ct = np.concatenate([self.Ct, np.zeros(k)])
        self.Pt = np.concatenate([self.Pt, np.zeros((k, d))])
        self.Wt = np.concatenate([self.Wt, np.zeros((k, d))])
        self.Zt = np.concatenate([self.Zt, np.zeros((k, d))])

    def copy(self) -> "ModelParams":
        other = ModelParams(self.num_users, self.num_items, self.num_factors,
                            self.num_bins, self.mu)
        for name in ("bu", "alpha", "bi", "bit", "C", "P", "alpha_P", "Q", "W",
                     "alpha_W", "Z", "alpha_Z", "Y", "omega", "y", "day_user",
                     "day_day", "but", "Ct", "Pt", "Wt", "Zt"):
            setattr(other, name, getattr(self, name).copy())
        other._day_key = dict(self._day_key)
        return other


def init_params(num_users: int, num_items: int, hyper: HyperParams,
                cfg: AspectConfig, mu: float = 0.0) -> ModelParams:
    """Gaussian-initialised parameters; deterministic given hyper.seed.

    P, Q, y, omega, bu, bi are Gaussian(init_mean, init_std).  W and C
    start at 1 and Z, Y, the drift slopes and all day tables at 0, which
    makes the initial model coincide with its static trust-SVD ancestor:
    with W=0 the whole latent interaction would vanish and Q's gradient
    would stall, and with C=0 the multiplicative item bias (and its
    gradient) would be annihilated.
    """
    if num_users < 1 or num_items < 1:
        raise ValueError("need at least one user and one item")
    hyper.validate()
    rng = np.random.default_rng(hyper.seed)
    p = ModelParams(num_users, num_items, hyper.D, hyper.num_bins, mu=mu)
    loc, std = hyper.init_mean, hyper.init_std
    p.bu = rng.normal(loc, std, size=num_users)
    p.bi = rng.normal(loc, std, size=num_items)
    p.P = rng.normal(loc, std, size=(num_users, hyper.D))
    p.Q = rng.normal(loc, std, size=(num_items, hyper.D))
    p.y = rng.normal(loc, std, size=(num_items, hyper.D))
    p.omega = rng.normal(loc, std, size=(num_users, hyper.D))
    return p


def dynamic_user_bias(p: ModelParams, u: int, day: int, ctx: TemporalContext,
                      cfg: AspectConfig) -> float:
    """bu_u plus, when bias drift is on, slope * deviation + day offset."""
    base = float(p.bu[u])
    if not cfg.dynamic_bias:
        return base
    dev = deviation(day, ctx.user_day(u), ctx.beta)
    slot = p.day_slot(u, day)
    offs = float(p.but[slot]) if slot >= 0 else 0.0
    return base + float(p.alpha[u]) * dev + offs


def dynamic_item_bias(p: ModelParams, u: int, j: int, day: int,
                      ctx: TemporalContext, cfg: AspectConfig) -> float:
    """(bi_j + binned offset) scaled by the user's (C_u + day offset).

    Unknown users scale by 1 (identity); with bias drift off this is
    plain bi_j.
    """
    if not cfg.dynamic_bias:
        return float(p.bi[j])
    base = float(p.bi[j]) + float(p.bit[j, bin_index(day, ctx)])
    if 0 <= u < p.num_users:
        slot = p.day_slot(u, day)
        ct = float(p.Ct[slot]) if slot >= 0 else 0.0
        scale = float(p.C[u]) + ct
    else:
        scale = 1.0
    return base * scale


def user_vectors_at(p: ModelParams, u: int, dev: float, slot: int,
                    cfg: AspectConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(P_u(t), W_u(t), Z_u(t)) with drift terms gated by the aspect flags.

    `dev` is the precomputed deviation of the rating day and `slot` the
    day-table slot (-1 when the (user, day) pair was never observed).
    """
    P_t = p.P[u]
    if cfg.dynamic_feature:
        P_t = P_t + p.alpha_P[u] * dev
        if slot >= 0:
            P_t = P_t + p.Pt[slot]
    W_t = p.W[u]
    Z_t = p.Z[u]
    if cfg.dynamic_feature_value:
        W_t = W_t + p.alpha_W[u] * dev
        Z_t = Z_t + p.alpha_Z[u] * dev
        if slot >= 0:
            W_t = W_t + p.Wt[slot]
            Z_t = Z_t + p.Zt[slot]
    return P_t, W_t, Z_t


def aspect_at_time(p: ModelParams, which: str, u: int, f: int, day: int,
                   ctx: TemporalContext, cfg: AspectConfig) -> float:
    """Drifting value of one latent aspect entry (which in {P, W, Z})."""
    if which not in ("P", "W", "Z"):
        raise ValueError("which must be one of 'P', 'W', 'Z'")
    dev = deviation(day, ctx.user_day(u), ctx.beta)
    slot = p.day_slot(u, day)
    P_t, W_t, Z_t = user_vectors_at(p, u, dev, slot, cfg)
    return float({"P": P_t, "W": W_t, "Z": Z_t}[which][f])


def implicit_sum(p: ModelParams, idx: UserIndexes, u: int) -> np.ndarray:
    """|I_u|^{-1/2}-weighted sum of y over the user's rated items."""
    items = idx.user_items[u]
    if len(items) == 0:
        return np.zeros(p.num_factors)
    return idx.inv_sqrt_I[u] * p.y[items].sum(axis=0)


def social_sum(p: ModelParams, idx: UserIndexes, u: int) -> np.ndarray:
    """|T_u|^{-1/2}-weighted sum of omega over the user's trustees."""
    trustees = idx.trustees[u]
    if len(trustees) == 0:
        return np.zeros(p.num_factors)
    return idx.inv_sqrt_T[u] * p.omega[trustees].sum(axis=0)


def predict(p: ModelParams, idx: UserIndexes, u: int, j: int, day: int,
            ctx: TemporalContext, cfg: AspectConfig,
            clip: tuple[float, float] | None = None) -> float:
    """Predicted rating of user u for item j on the given day.

    Total over all valid ids: entities absent from training contribute
    zero latent terms and the prediction falls back to the global mean
    plus whatever trained biases exist.
    """
    known_u = 0 <= u < p.num_users
    known_j = 0 <= j < p.num_items
    acc = p.mu
    if known_u:
        acc += dynamic_user_bias(p, u, day, ctx, cfg)
    if known_j:
        acc += dynamic_item_bias(p, u, j, day, ctx, cfg)
    if known_u and known_j:
        dev = deviation(day, ctx.user_day(u), ctx.beta)
        slot = p.day_slot(u, day)
        P_t, W_t, Z_t = user_vectors_at(p, u, dev, slot, cfg)
        h = P_t
        if cfg.implicit_feedback:
            h = h + implicit_sum(p, idx, u)
        if cfg.social:
            h = h + social_sum(p, idx, u)
        g = W_t * p.Q[j] + Z_t
        acc += float(h @ g)
        if cfg.conditional:
            acc += float(g @ (p.Y @ g))
    if clip is not None:
        acc = min(max(acc, clip[0]), clip[1])
    return float(acc)


def averaged_user_vectors(p: ModelParams, u: int, user_days: np.ndarray,
                          ctx: TemporalContext, cfg: AspectConfig):
    """Time-averaged (P_bar, W_bar, Z_bar, dev_mean) over a user's rating days.

    The average runs over the multiset of rating days (one entry per
    rating, repeated days counted with multiplicity).
    """
    n = len(user_days)
    if n == 0:
        raise ValueError("user has no rating days")
    P_bar = p.P[u].astype(float).copy()
    W_bar = p.W[u].astype(float).copy()
    Z_bar = p.Z[u].astype(float).copy()
    t_u = ctx.user_day(u)
    devs = np.sign(user_days - t_u) * np.abs(user_days - t_u) ** ctx.beta
    dev_mean = float(devs.mean())
    if cfg.dynamic_feature or cfg.dynamic_feature_value:
        day_sum_P = np.zeros(p.num_factors)
        day_sum_W = np.zeros(p.num_factors)
        day_sum_Z = np.zeros(p.num_factors)
        for day in user_days:
            slot = p.day_slot(int(u), int(day))
            if slot >= 0:
                day_sum_P += p.Pt[slot]
                day_sum_W += p.Wt[slot]
                day_sum_Z += p.Zt[slot]
        if cfg.dynamic_feature:
            P_bar += p.alpha_P[u] * dev_mean + day_sum_P / n
        if cfg.dynamic_feature_value:
            W_bar += p.alpha_W[u] * dev_mean + day_sum_W / n
            Z_bar += p.alpha_Z[u] * dev_mean + day_sum_Z / n
    return P_bar, W_bar, Z_bar, dev_mean


def estimate_trust_triplet(p: ModelParams, u: int, v: int, user_days,
                           ctx: TemporalContext,
                           cfg: AspectConfig) -> tuple[float, float, float]:
    """Time-averaged trust estimates of user u towards user v.

    Averages the inner products of v's influence vector with u's drifting
    preference vectors over u's rating days: (P_bar . omega_v,
    (1 - W_bar) . omega_v, Z_bar . omega_v).  A user with no ratings gets
    (0, 0, 0) and is excluded from the social loss.
    """
    user_days = np.asarray(user_days)
    if len(user_days) == 0:
        return 0.0, 0.0, 0.0
    P_bar, W_bar, Z_bar, _ = averaged_user_vectors(p, u, user_days, ctx, cfg)
    w_v = p.omega[v]
    return (float(P_bar @ w_v), float((1.0 - W_bar) @ w_v), float(Z_bar @ w_v))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_ASPECT_FIELDS = ("dynamic_bias", "dynamic_feature", "dynamic_feature_value",
                  "social", "conditional", "implicit_feedback")


def save_model(p: ModelParams, ctx: TemporalContext, cfg: AspectConfig, path):
    """Versioned text format; round-trips exactly at 17 significant digits."""
    n, m, d = p.num_users, p.num_items, p.num_factors
    lines = [f"aspectmf v1 {n} {m} {d} {p.num_bins} {ctx.beta:.17g} {p.mu:.17g}"]

    def vec(name, arr):
        lines.append(f"group {name} {len(arr)}")
        for i, val in enumerate(arr):
            lines.append(f"{i} {val:.17g}")

    def mat(name, arr):
        lines.append(f"group {name} {arr.size}")
        for i in range(arr.shape[0]):
            for f in range(arr.shape[1]):
                lines.append(f"{i} {f} {arr[i, f]:.17g}")

    lines.append("group t_bounds 2")
    lines.append(f"0 {ctx.t_min}")
    lines.append(f"1 {ctx.t_max}")
    lines.append(f"group aspects {len(_ASPECT_FIELDS)}")
    for name in _ASPECT_FIELDS:
        lines.append(f"{name} {int(getattr(cfg, name))}")
    vec("t_u", ctx.t_u)
    vec("bu", p.bu)
    vec("alpha", p.alpha)
    vec("bi", p.bi)
    vec("C", p.C)
    vec("alpha_P", p.alpha_P)
    vec("alpha_W", p.alpha_W)
    vec("alpha_Z", p.alpha_Z)
    mat("P", p.P)
    mat("Q", p.Q)
    mat("W", p.W)
    mat("Z", p.Z)
    mat("Y", p.Y)
    mat("omega", p.omega)
    mat("y", p.y)
    mat("bit", p.bit)
    k = p.num_day_slots
    for name, table in (("but", p.but), ("Ct", p.Ct)):
        lines.append(f"group {name} {k}")
        for s in range(k):
            lines.append(f"{p.day_user[s]} {p.day_day[s]} {table[s]:.17g}")
    for name, table in (("Pt", p.Pt), ("Wt", p.Wt), ("Zt", p.Zt)):
        lines.append(f"group {name} {k * d}")
        for s in range(k):
            for f in range(d):
                lines.append(f"{p.day_user[s]} {p.day_day[s]} {f} {table[s, f]:.17g}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


class ModelFormatError(Exception):
    """Raised when a model file is malformed."""


def load_model(path) -> tuple[ModelParams, TemporalContext, AspectConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines:
        raise ModelFormatError(f"{path}: empty model file")
    head = lines[0].split()
    if len(head) != 8 or head[0] != "aspectmf" or head[1] != "v1":
        raise ModelFormatError(f"{path}: malformed model header")
    n, m, d, num_bins = (int(x) for x in head[2:6])
    beta, mu = float(head[6]), float(head[7])
    p = ModelParams(n, m, d, num_bins, mu=mu)
    cfg = AspectConfig()
    t_u = np.zeros(n)
    t_min = t_max = 0

    pos = 1
    expected_rows = {
        "t_bounds": 2, "aspects": len(_ASPECT_FIELDS), "t_u": n, "bu": n,
        "alpha": n, "bi": m, "C": n, "alpha_P": n, "alpha_W": n, "alpha_Z": n,
        "P": n * d, "Q": m * d, "W": n * d, "Z": n * d, "Y": d * d,
        "omega": n * d, "y": m * d, "bit": m * num_bins,
    }
    day_rows: dict[str, list] = {"but": [], "Ct": [], "Pt": [], "Wt": [], "Zt": []}
    seen = set()
    while pos < len(lines):
        if not lines[pos].strip():
            pos += 1
            continue
        parts = lines[pos].split()
        if parts[0] != "group" or len(parts) != 3:
            raise ModelFormatError(f"{path}:{pos + 1}: expected a group header")
        name, count = parts[1], int(parts[2])
        if name not in expected_rows and name not in day_rows:
            raise ModelFormatError(f"{path}:{pos + 1}: unknown group {name!r}")
        if name in expected_rows and count != expected_rows[name]:
            raise ModelFormatError(
                f"{path}:{pos + 1}: group {name} expects {expected_rows[name]} rows")
        seen.add(name)
        rows = lines[pos + 1: pos + 1 + count]
        if len(rows) != count:
            raise ModelFormatError(f"{path}: truncated group {name}")
        pos += 1 + count
        if name == "t_bounds":
            t_min = int(rows[0].split()[1])
            t_max = int(rows[1].split()[1])
        elif name == "aspects":
            for row in rows:
                key, val = row.split()
                if key not in _ASPECT_FIELDS:
                    raise ModelFormatError(f"{path}: unknown aspect flag {key!r}")
                setattr(cfg, key, bool(int(val)))
        elif name == "t_u":
            for row in rows:
                i, val = row.split()
                t_u[int(i)] = float(val)
        elif name in ("bu", "alpha", "bi", "C", "alpha_P", "alpha_W", "alpha_Z"):
            arr = getattr(p, name)
            for row in rows:
                i, val = row.split()
                arr[int(i)] = float(val)
        elif name in ("P", "Q", "W", "Z", "Y", "omega", "y", "bit"):
            arr = getattr(p, name)
            for row in rows:
                i, f, val = row.split()
                arr[int(i), int(f)] = float(val)
        elif name in ("but", "Ct"):
            for row in rows:
                u, day, val = row.split()
                day_rows[name].append((int(u), int(day), float(val)))
        else:  # Pt, Wt, Zt
            for row in rows:
                u, day, f, val = row.split()
                day_rows[name].append((int(u), int(day), int(f), float(val)))

    missing = set(expected_rows) - seen
    if missing:
        raise ModelFormatError(f"{path}: missing groups {sorted(missing)}")
    pairs = {(r[0], r[1]) for rows in day_rows.values() for r in rows}
    p.register_days(sorted(pairs))
    for name in ("but", "Ct"):
        table = getattr(p, name)
        for u, day, val in day_rows[name]:
            table[p.day_slot(u, day)] = val
    for name in ("Pt", "Wt", "Zt"):
        table = getattr(p, name)
        for u, day, f, val in day_rows[name]:
            table[p.day_slot(u, day), f] = val
    ctx = TemporalContext(beta=beta, num_bins=num_bins, t_min=t_min, t_max=t_max,
                          t_u=t_u)
    return p, ctx, cfg
