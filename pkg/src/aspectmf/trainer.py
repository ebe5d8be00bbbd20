"""Training: loss, gradients, the two SGD passes, and verification oracles.

The objective is E = E_R + E_T.  E_R sums squared rating residuals plus
count-weighted (|I_u|^{-1/2}, |U_j|^{-1/2}) regularizers over all static
and temporal parameter groups; E_T sums the social residuals against the
time-averaged trust estimates plus |T_u|^{-1/2} / |T_v+|^{-1/2}-weighted
regularizers.  Day-keyed offsets are regularized once per training rating
that touches them (so a day rated twice counts its offset twice), which is
the reading consistent with the per-rating update scheme.

One training iteration runs an intrinsic pass over the ratings (bias
groups, Q, y, and Y update immediately; the user-side latent groups and
omega accumulate), a social pass over the trust edges (accumulates only),
and one deferred application of the accumulated gradients.

`full_batch_step` and `gradient_check` are deterministic verification
surrogates: exact batch gradients of the same objective, and a central
finite-difference comparison per parameter group.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from aspectmf.data import RatingDataset, TrustNetwork
from aspectmf.model import (AspectConfig, HyperParams, ModelParams, UserIndexes,
                            averaged_user_vectors, init_params)
from aspectmf.temporal import TemporalContext


# verified step size for exact gradient descent on the standard small instance
DEFAULT_FULL_BATCH_STEP = 0.002


class DivergenceError(Exception):
    """Raised when training produces a non-finite loss."""

    def __init__(self, group: str, iteration: int):
        self.group = group
        self.iteration = iteration
        super().__init__(
            f"non-finite values in parameter group '{group}' at iteration {iteration}")


@dataclass
class TrainReport:
    loss_history: list = field(default_factory=list)        # (E, E_R, E_T) per iter
    iter_seconds: list = field(default_factory=list)
    best_iteration: int = -1
    best_loss: float = float("inf")


@dataclass
class GradCheckReport:
    """Max relative error between analytic and numeric gradient per group."""

    errors: dict
    tolerance: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def failing_groups(self) -> list[str]:
        return [g for g, e in self.errors.items() if e >= self.tolerance]


class TrainerState:
    """Per-iteration accumulators for the deferred parameter groups."""

    def __init__(self, p: ModelParams):
        n, d, k = p.num_users, p.num_factors, p.num_day_slots
        self.P_s = np.zeros((n, d))
        self.W_s = np.zeros((n, d))
        self.Z_s = np.zeros((n, d))
        self.omega_s = np.zeros((n, d))
        self.beta_P = np.zeros(n)
        self.beta_W = np.zeros(n)
        self.beta_Z = np.zeros(n)
        self.Pt_s = np.zeros((k, d))
        self.Wt_s = np.zeros((k, d))
        self.Zt_s = np.zeros((k, d))
        self.iteration = 0
        self.lr_scale = 1.0
        self.loss_history: list = []

    def zero(self):
        for name in ("P_s", "W_s", "Z_s", "omega_s", "beta_P", "beta_W",
                     "beta_Z", "Pt_s", "Wt_s", "Zt_s"):
            getattr(self, name).fill(0.0)


class Precomp:
    """Per-rating day arithmetic and per-user/slot aggregates, built once.

    Everything here depends only on the data and the temporal context, so
    it is shared across iterations and across loss/gradient evaluations.
    """

    def __init__(self, p: ModelParams, train: RatingDataset,
                 trust: TrustNetwork | None, hyper: HyperParams,
                 cfg: AspectConfig, ctx: TemporalContext):
        from aspectmf.temporal import bin_index

        self.idx = UserIndexes(train, trust if cfg.social else None)
        days = train.days()
        p.register_days(zip(train.users.tolist(), days.tolist()))
        self.days = days
        t_ref = np.array([ctx.user_day(u) for u in range(train.num_users)])
        diff = days - t_ref[train.users]
        self.devs = np.sign(diff) * np.abs(diff) ** ctx.beta
        self.slots = np.array([p.day_slot(int(u), int(d))
                               for u, d in zip(train.users, days)], dtype=np.int64)
        self.bins = np.array([bin_index(int(d), ctx) for d in days], dtype=np.int64)
        k = p.num_day_slots
        self.slot_counts = np.bincount(self.slots, minlength=k).astype(float)
        self.slot_user = p.day_user.copy()
        # per-user unique day slots with multiplicities, for the social pass
        self.user_slots: list[np.ndarray] = [np.zeros(0, dtype=np.int64)] * train.num_users
        self.user_slot_counts: list[np.ndarray] = [np.zeros(0)] * train.num_users
        order = np.argsort(self.slot_user, kind="stable")
        bounds = np.searchsorted(self.slot_user[order], np.arange(train.num_users + 1))
        for u in range(train.num_users):
            s = order[bounds[u]:bounds[u + 1]]
            self.user_slots[u] = s
            self.user_slot_counts[u] = self.slot_counts[s]
        self.rating_count = len(train)
        # multiplicity of each (item, bin) pair among training ratings
        self.bit_counts = np.zeros((train.num_items, hyper.num_bins))
        np.add.at(self.bit_counts, (train.items, self.bins), 1.0)


def _user_sums(p: ModelParams, idx: UserIndexes, cfg: AspectConfig):
    """Per-user implicit-feedback and social sums (N x D each)."""
    n, d = p.num_users, p.num_factors
    sum_y = np.zeros((n, d))
    sum_om = np.zeros((n, d))
    if cfg.implicit_feedback:
        for u in range(n):
            items = idx.user_items[u]
            if len(items):
                sum_y[u] = idx.inv_sqrt_I[u] * p.y[items].sum(axis=0)
    if cfg.social:
        for u in range(n):
            t = idx.trustees[u]
            if len(t):
                sum_om[u] = idx.inv_sqrt_T[u] * p.omega[t].sum(axis=0)
    return sum_y, sum_om


def _forward_arrays(p: ModelParams, train: RatingDataset, cfg: AspectConfig,
                    pre: Precomp):
    """Vectorised forward pass over all training ratings.

    Returns (residuals e, g, h, m, W_t, bias pieces) as R-length arrays /
    R x D matrices; m = h + 2 (Y g) is the shared latent factor of the
    W/Z-side gradients.
    """
    users, items = train.users, train.items
    devs, slots, bins = pre.devs, pre.slots, pre.bins
    sum_y, sum_om = _user_sums(p, pre.idx, cfg)

    P_t = p.P[users]
    if cfg.dynamic_feature:
        P_t = P_t + p.alpha_P[users, None] * devs[:, None] + p.Pt[slots]
    W_t = p.W[users]
    Z_t = p.Z[users]
    if cfg.dynamic_feature_value:
        W_t = W_t + p.alpha_W[users, None] * devs[:, None] + p.Wt[slots]
        Z_t = Z_t + p.alpha_Z[users, None] * devs[:, None] + p.Zt[slots]
    h = P_t.copy()
    if cfg.implicit_feedback:
        h += sum_y[users]
    if cfg.social:
        h += sum_om[users]
    g = W_t * p.Q[items] + Z_t

    bu_t = p.bu[users]
    if cfg.dynamic_bias:
        bu_t = bu_t + p.alpha[users] * devs + p.but[slots]
    if cfg.dynamic_bias:
        bias_base = p.bi[items] + p.bit[items, bins]
        bias_scale = p.C[users] + p.Ct[slots]
        bi_t = bias_base * bias_scale
    else:
        bias_base = p.bi[items]
        bias_scale = np.ones(len(users))
        bi_t = bias_base

    pred = p.mu + bu_t + bi_t + np.einsum("rf,rf->r", h, g)
    if cfg.conditional:
        Yg = g @ p.Y.T
        pred = pred + np.einsum("rf,rf->r", g, Yg)
        m = h + 2.0 * Yg
    else:
        m = h
    e = train.ratings - pred
    return e, g, h, m, W_t, bias_base, bias_scale


def total_loss(p: ModelParams, train: RatingDataset, trust: TrustNetwork | None,
               hyper: HyperParams, cfg: AspectConfig, ctx: TemporalContext,
               pre: Precomp | None = None) -> tuple[float, float, float]:
    """(E, E_R, E_T) of the objective at the current parameters."""
    if pre is None:
        pre = Precomp(p, train, trust, hyper, cfg, ctx)
    idx = pre.idx
    users = train.users
    e, *_ = _forward_arrays(p, train, cfg, pre)

    iu = idx.inv_sqrt_I
    uj = idx.inv_sqrt_U
    e_r = 0.5 * float(e @ e)
    e_r += 0.5 * hyper.lambda_bu * float(iu @ (p.bu ** 2))
    e_r += 0.5 * hyper.lambda_bi * float(uj @ (p.bi ** 2))
    e_r += 0.5 * hyper.lambda_P * float(iu @ (p.P ** 2).sum(axis=1))
    e_r += 0.5 * hyper.lambda_W * float(iu @ (p.W ** 2).sum(axis=1))
    e_r += 0.5 * hyper.lambda_Z * float(iu @ (p.Z ** 2).sum(axis=1))
    e_r += 0.5 * hyper.lambda_Q * float(uj @ (p.Q ** 2).sum(axis=1))
    if cfg.implicit_feedback:
        e_r += 0.5 * hyper.lambda_y * float(uj @ (p.y ** 2).sum(axis=1))
    if cfg.conditional:
        e_r += 0.5 * hyper.lambda_Y * float((p.Y ** 2).sum())
    if cfg.dynamic_bias:
        e_r += 0.5 * hyper.lambda_alpha * float(iu @ (p.alpha ** 2))
        e_r += 0.5 * hyper.lambda_C * float(iu @ (p.C ** 2))
        slot_w = iu[pre.slot_user] * pre.slot_counts
        e_r += 0.5 * hyper.lambda_but * float(slot_w @ (p.but ** 2))
        e_r += 0.5 * hyper.lambda_Ct * float(slot_w @ (p.Ct ** 2))
        e_r += 0.5 * hyper.lambda_bit * float(
            (uj[:, None] * pre.bit_counts * p.bit ** 2).sum())
    if cfg.dynamic_feature:
        e_r += 0.5 * hyper.lambda_alpha_P * float(iu @ (p.alpha_P ** 2))
        slot_w = iu[pre.slot_user] * pre.slot_counts
        e_r += 0.5 * hyper.lambda_Pt * float(slot_w @ (p.Pt ** 2).sum(axis=1))
    if cfg.dynamic_feature_value:
        e_r += 0.5 * hyper.lambda_alpha_W * float(iu @ (p.alpha_W ** 2))
        e_r += 0.5 * hyper.lambda_alpha_Z * float(iu @ (p.alpha_Z ** 2))
        slot_w = iu[pre.slot_user] * pre.slot_counts
        e_r += 0.5 * hyper.lambda_Wt * float(slot_w @ (p.Wt ** 2).sum(axis=1))
        e_r += 0.5 * hyper.lambda_Zt * float(slot_w @ (p.Zt ** 2).sum(axis=1))

    e_t = 0.0
    if cfg.social and trust is not None and len(trust) > 0:
        tu = idx.inv_sqrt_T
        e_t += 0.5 * hyper.lambda_T * float(tu @ (p.P ** 2).sum(axis=1))
        e_t += 0.5 * hyper.lambda_T * float(tu @ (p.W ** 2).sum(axis=1))
        e_t += 0.5 * hyper.lambda_T * float(tu @ (p.Z ** 2).sum(axis=1))
        slot_w = tu[pre.slot_user] * pre.slot_counts
        if cfg.dynamic_feature:
            e_t += 0.5 * hyper.lambda_T * float(tu @ (p.alpha_P ** 2))
            e_t += 0.5 * hyper.lambda_T * float(slot_w @ (p.Pt ** 2).sum(axis=1))
        if cfg.dynamic_feature_value:
            e_t += 0.5 * hyper.lambda_T * float(tu @ (p.alpha_W ** 2))
            e_t += 0.5 * hyper.lambda_T * float(tu @ (p.alpha_Z ** 2))
            e_t += 0.5 * hyper.lambda_T * float(slot_w @ (p.Wt ** 2).sum(axis=1))
            e_t += 0.5 * hyper.lambda_T * float(slot_w @ (p.Zt ** 2).sum(axis=1))
        e_t += 0.5 * hyper.lambda_omega * float(
            idx.inv_sqrt_Tplus @ (p.omega ** 2).sum(axis=1))
        lam_t = hyper.lambda_t
        for u in range(p.num_users):
            trustees = idx.trustees[u]
            if len(trustees) == 0:
                continue
            days_u = pre.idx.user_days[u]
            if len(days_u) == 0:
                continue  # no ratings: triplet undefined, excluded from loss
            P_bar, W_bar, Z_bar, _ = averaged_user_vectors(p, u, days_u, ctx, cfg)
            om = p.omega[trustees]
            tv = idx.trust_values[u]
            e1 = tv - om @ P_bar
            e2 = tv - om @ (1.0 - W_bar)
            e3 = tv - om @ Z_bar
            e_t += 0.5 * lam_t * (hyper.eta_P * float(e1 @ e1)
                                  + hyper.eta_W * float(e2 @ e2)
                                  + hyper.eta_Z * float(e3 @ e3))
    return e_r + e_t, e_r, e_t


class BatchGradients:
    """Exact gradients of the objective, one array per active group."""

    def __init__(self, p: ModelParams):
        n, m, d, k = p.num_users, p.num_items, p.num_factors, p.num_day_slots
        self.bu = np.zeros(n)
        self.alpha = np.zeros(n)
        self.bi = np.zeros(m)
        self.bit = np.zeros((m, p.num_bins))
        self.C = np.zeros(n)
        self.P = np.zeros((n, d))
        self.alpha_P = np.zeros(n)
        self.Q = np.zeros((m, d))
        self.W = np.zeros((n, d))
        self.alpha_W = np.zeros(n)
        self.Z = np.zeros((n, d))
        self.alpha_Z = np.zeros(n)
        self.Y = np.zeros((d, d))
        self.omega = np.zeros((n, d))
        self.y = np.zeros((m, d))
        self.but = np.zeros(k)
        self.Ct = np.zeros(k)
        self.Pt = np.zeros((k, d))
        self.Wt = np.zeros((k, d))
        self.Zt = np.zeros((k, d))

    def active_groups(self, cfg: AspectConfig) -> list[str]:
        groups = ["bu", "bi", "P", "Q", "W", "Z"]
        if cfg.dynamic_bias:
            groups += ["alpha", "but", "bit", "C", "Ct"]
        if cfg.dynamic_feature:
            groups += ["alpha_P", "Pt"]
        if cfg.dynamic_feature_value:
            groups += ["alpha_W", "Wt", "alpha_Z", "Zt"]
        if cfg.social:
            groups += ["omega"]
        if cfg.conditional:
            groups += ["Y"]
        if cfg.implicit_feedback:
            groups += ["y"]
        return groups


def batch_gradients(p: ModelParams, train: RatingDataset,
                    trust: TrustNetwork | None, hyper: HyperParams,
                    cfg: AspectConfig, ctx: TemporalContext,
                    pre: Precomp | None = None) -> BatchGradients:
    """Analytic gradient of `total_loss` for every active parameter group."""
    if pre is None:
        pre = Precomp(p, train, trust, hyper, cfg, ctx)
    idx = pre.idx
    users, items = train.users, train.items
    devs, slots, bins = pre.devs, pre.slots, pre.bins
    e, g, h, m, W_t, bias_base, bias_scale = _forward_arrays(p, train, cfg, pre)
    grads = BatchGradients(p)

    # residual parts, accumulated per rating
    np.add.at(grads.bu, users, -e)
    np.add.at(grads.bi, items, -e * bias_scale)
    np.add.at(grads.P, users, -e[:, None] * g)
    np.add.at(grads.Q, items, -e[:, None] * (W_t * m))
    np.add.at(grads.W, users, -e[:, None] * (p.Q[items] * m))
    np.add.at(grads.Z, users, -e[:, None] * m)
    if cfg.dynamic_bias:
        np.add.at(grads.alpha, users, -e * devs)
        np.add.at(grads.but, slots, -e)
        np.add.at(grads.bit, (items, bins), -e * bias_scale)
        np.add.at(grads.C, users, -e * bias_base)
        np.add.at(grads.Ct, slots, -e * bias_base)
    if cfg.dynamic_feature:
        np.add.at(grads.Pt, slots, -e[:, None] * g)
        np.add.at(grads.alpha_P, users, -e * devs * g.sum(axis=1))
    if cfg.dynamic_feature_value:
        qm = p.Q[items] * m
        np.add.at(grads.Wt, slots, -e[:, None] * qm)
        np.add.at(grads.alpha_W, users, -e * devs * qm.sum(axis=1))
        np.add.at(grads.Zt, slots, -e[:, None] * m)
        np.add.at(grads.alpha_Z, users, -e * devs * m.sum(axis=1))
    if cfg.conditional:
        gg = -(e[:, None, None] * (g[:, :, None] * g[:, None, :])).sum(axis=0)
        np.fill_diagonal(gg, 0.0)
        grads.Y += gg
    if cfg.implicit_feedback:
        for r in range(len(users)):
            u = users[r]
            rated = idx.user_items[u]
            grads.y[rated] += (-e[r] * idx.inv_sqrt_I[u]) * g[r]
    if cfg.social:
        for r in range(len(users)):
            u = users[r]
            trustees = idx.trustees[u]
            if len(trustees):
                grads.omega[trustees] += (-e[r] * idx.inv_sqrt_T[u]) * g[r]

    # rating-side regularizers
    iu = idx.inv_sqrt_I
    uj = idx.inv_sqrt_U
    grads.bu += hyper.lambda_bu * iu * p.bu
    grads.bi += hyper.lambda_bi * uj * p.bi
    grads.P += hyper.lambda_P * iu[:, None] * p.P
    grads.W += hyper.lambda_W * iu[:, None] * p.W
    grads.Z += hyper.lambda_Z * iu[:, None] * p.Z
    grads.Q += hyper.lambda_Q * uj[:, None] * p.Q
    if cfg.implicit_feedback:
        grads.y += hyper.lambda_y * uj[:, None] * p.y
    if cfg.conditional:
        yreg = hyper.lambda_Y * p.Y.copy()
        np.fill_diagonal(yreg, 0.0)
        grads.Y += yreg
    slot_w = iu[pre.slot_user] * pre.slot_counts
    if cfg.dynamic_bias:
        grads.alpha += hyper.lambda_alpha * iu * p.alpha
        grads.C += hyper.lambda_C * iu * p.C
        grads.but += hyper.lambda_but * slot_w * p.but
        grads.Ct += hyper.lambda_Ct * slot_w * p.Ct
        grads.bit += hyper.lambda_bit * uj[:, None] * pre.bit_counts * p.bit
    if cfg.dynamic_feature:
        grads.alpha_P += hyper.lambda_alpha_P * iu * p.alpha_P
        grads.Pt += hyper.lambda_Pt * slot_w[:, None] * p.Pt
    if cfg.dynamic_feature_value:
        grads.alpha_W += hyper.lambda_alpha_W * iu * p.alpha_W
        grads.alpha_Z += hyper.lambda_alpha_Z * iu * p.alpha_Z
        grads.Wt += hyper.lambda_Wt * slot_w[:, None] * p.Wt
        grads.Zt += hyper.lambda_Zt * slot_w[:, None] * p.Zt

    # trust side
    if cfg.social and trust is not None and len(trust) > 0:
        tu = idx.inv_sqrt_T
        grads.P += hyper.lambda_T * tu[:, None] * p.P
        grads.W += hyper.lambda_T * tu[:, None] * p.W
        grads.Z += hyper.lambda_T * tu[:, None] * p.Z
        tslot_w = tu[pre.slot_user] * pre.slot_counts
        if cfg.dynamic_feature:
            grads.alpha_P += hyper.lambda_T * tu * p.alpha_P
            grads.Pt += hyper.lambda_T * tslot_w[:, None] * p.Pt
        if cfg.dynamic_feature_value:
            grads.alpha_W += hyper.lambda_T * tu * p.alpha_W
            grads.alpha_Z += hyper.lambda_T * tu * p.alpha_Z
            grads.Wt += hyper.lambda_T * tslot_w[:, None] * p.Wt
            grads.Zt += hyper.lambda_T * tslot_w[:, None] * p.Zt
        grads.omega += hyper.lambda_omega * idx.inv_sqrt_Tplus[:, None] * p.omega
        lam_t = hyper.lambda_t
        for u in range(p.num_users):
            trustees = idx.trustees[u]
            if len(trustees) == 0:
                continue
            days_u = idx.user_days[u]
            if len(days_u) == 0:
                continue
            n_u = len(days_u)
            P_bar, W_bar, Z_bar, dev_mean = averaged_user_vectors(p, u, days_u, ctx, cfg)
            om = p.omega[trustees]
            tv = idx.trust_values[u]
            e1 = tv - om @ P_bar
            e2 = tv - om @ (1.0 - W_bar)
            e3 = tv - om @ Z_bar
            grads.P[u] += -lam_t * hyper.eta_P * (e1 @ om)
            grads.W[u] += lam_t * hyper.eta_W * (e2 @ om)
            grads.Z[u] += -lam_t * hyper.eta_Z * (e3 @ om)
            s_u = pre.user_slots[u]
            c_u = pre.user_slot_counts[u]
            if cfg.dynamic_feature:
                grads.alpha_P[u] += -lam_t * hyper.eta_P * dev_mean * float(
                    e1 @ om.sum(axis=1))
                grads.Pt[s_u] += (-lam_t * hyper.eta_P / n_u) * c_u[:, None] * (e1 @ om)
            if cfg.dynamic_feature_value:
                grads.alpha_W[u] += lam_t * hyper.eta_W * dev_mean * float(
                    e2 @ om.sum(axis=1))
                grads.Wt[s_u] += (lam_t * hyper.eta_W / n_u) * c_u[:, None] * (e2 @ om)
                grads.alpha_Z[u] += -lam_t * hyper.eta_Z * dev_mean * float(
                    e3 @ om.sum(axis=1))
                grads.Zt[s_u] += (-lam_t * hyper.eta_Z / n_u) * c_u[:, None] * (e3 @ om)
            grads.omega[trustees] += -lam_t * (
                hyper.eta_P * e1[:, None] * P_bar[None, :]
                + hyper.eta_W * e2[:, None] * (1.0 - W_bar)[None, :]
                + hyper.eta_Z * e3[:, None] * Z_bar[None, :])
    return grads


def full_batch_step(p: ModelParams, train: RatingDataset,
                    trust: TrustNetwork | None, hyper: HyperParams,
                    cfg: AspectConfig, ctx: TemporalContext, step_size: float,
                    pre: Precomp | None = None) -> ModelParams:
    """One exact gradient-descent step on the full objective (in place)."""
    if step_size <= 0:
        raise ValueError("step_size must be > 0")
    grads = batch_gradients(p, train, trust, hyper, cfg, ctx, pre)
    for name in grads.active_groups(cfg):
        arr = getattr(p, name)
        arr -= step_size * getattr(grads, name)
    return p


def gradient_check(p: ModelParams, train: RatingDataset,
                   trust: TrustNetwork | None, hyper: HyperParams,
                   cfg: AspectConfig, ctx: TemporalContext,
                   epsilon: float = 1e-5,
                   tolerance: float = 1e-4) -> GradCheckReport:
    """Central finite differences of the loss versus the analytic gradient.

    Relative error per entry is |a - n| / max(|a|, |n|, 1e-8); the report
    carries the maximum over each active parameter group.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    pre = Precomp(p, train, trust, hyper, cfg, ctx)
    grads = batch_gradients(p, train, trust, hyper, cfg, ctx, pre)

    def loss() -> float:
        return total_loss(p, train, trust, hyper, cfg, ctx, pre)[0]

    errors: dict[str, float] = {}
    for name in grads.active_groups(cfg):
        arr = getattr(p, name)
        analytic = getattr(grads, name)
        worst = 0.0
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            pos = it.multi_index
            if name == "Y" and pos[0] == pos[1]:
                continue  # the coupling matrix has a fixed zero diagonal
            orig = arr[pos]
            arr[pos] = orig + epsilon
            up = loss()
            arr[pos] = orig - epsilon
            down = loss()
            arr[pos] = orig
            numeric = (up - down) / (2.0 * epsilon)
            a = float(analytic[pos])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
        errors[name] = worst
    return GradCheckReport(errors=errors, tolerance=tolerance)


def intrinsic_pass(p: ModelParams, state: TrainerState, train: RatingDataset,
                   hyper: HyperParams, cfg: AspectConfig, ctx: TemporalContext,
                   pre: Precomp | None = None,
                   order: np.ndarray | None = None) -> tuple[ModelParams, TrainerState]:
    """One SGD sweep over the ratings.

    Bias groups, Q, y, and the coupling matrix Y update immediately from
    each rating's fresh residual; the user-side latent groups, their drift
    parameters, and omega accumulate into `state` for deferred application.
    """
    if pre is None:
        pre = Precomp(p, train, None, hyper, cfg, ctx)
    idx = pre.idx
    if order is None:
        order = np.arange(len(train))
    lr = state.lr_scale
    dyn_b, dyn_f, dyn_fv = cfg.dynamic_bias, cfg.dynamic_feature, cfg.dynamic_feature_value

    # omega is deferred, so the per-user social sums are constant all pass
    sum_om = None
    if cfg.social:
        sum_om = np.zeros((p.num_users, p.num_factors))
        for u in range(p.num_users):
            t = idx.trustees[u]
            if len(t):
                sum_om[u] = idx.inv_sqrt_T[u] * p.omega[t].sum(axis=0)

    g_bu = lr * hyper.gamma_bu
    g_alpha = lr * hyper.gamma_alpha
    g_but = lr * hyper.gamma_but
    g_bi = lr * hyper.gamma_bi
    g_bit = lr * hyper.gamma_bit
    g_C = lr * hyper.gamma_C
    g_Ct = lr * hyper.gamma_Ct
    g_Q = lr * hyper.gamma_Q
    g_y = lr * hyper.gamma_y
    g_Y = lr * hyper.gamma_Y

    for r in order:
        u = int(train.users[r])
        j = int(train.items[r])
        rv = train.ratings[r]
        dev = pre.devs[r]
        s = pre.slots[r]
        b = pre.bins[r]
        ciu = idx.inv_sqrt_I[u]
        cj = idx.inv_sqrt_U[j]
        Qj = p.Q[j].copy()  # snapshot: the deferred terms must not see the Q update

        P_t = p.P[u]
        if dyn_f:
            P_t = P_t + p.alpha_P[u] * dev + p.Pt[s]
        W_t = p.W[u]
        Z_t = p.Z[u]
        if dyn_fv:
            W_t = W_t + p.alpha_W[u] * dev + p.Wt[s]
            Z_t = Z_t + p.alpha_Z[u] * dev + p.Zt[s]
        h = P_t
        if cfg.implicit_feedback:
            rated = idx.user_items[u]
            h = h + ciu * p.y[rated].sum(axis=0)
        if cfg.social:
            h = h + sum_om[u]
        g = W_t * Qj + Z_t

        bu_t = p.bu[u]
        if dyn_b:
            bu_t = bu_t + p.alpha[u] * dev + p.but[s]
            base = p.bi[j] + p.bit[j, b]
            scale = p.C[u] + p.Ct[s]
            bi_t = base * scale
        else:
            base = p.bi[j]
            scale = 1.0
            bi_t = base
        pred = p.mu + bu_t + bi_t + h @ g
        if cfg.conditional:
            Yg = p.Y @ g
            pred += g @ Yg
            m = h + 2.0 * Yg
        else:
            m = h
        e = rv - pred

        # immediate updates (fresh residual, old values on the right)
        p.bu[u] += g_bu * (e - hyper.lambda_bu * ciu * p.bu[u])
        if dyn_b:
            p.alpha[u] += g_alpha * (e * dev - hyper.lambda_alpha * ciu * p.alpha[u])
            p.but[s] += g_but * (e - hyper.lambda_but * ciu * p.but[s])
            p.bi[j] += g_bi * (e * scale - hyper.lambda_bi * cj * p.bi[j])
            p.bit[j, b] += g_bit * (e * scale - hyper.lambda_bit * cj * p.bit[j, b])
            p.C[u] += g_C * (e * base - hyper.lambda_C * ciu * p.C[u])
            p.Ct[s] += g_Ct * (e * base - hyper.lambda_Ct * ciu * p.Ct[s])
        else:
            p.bi[j] += g_bi * (e - hyper.lambda_bi * cj * p.bi[j])
        p.Q[j] = Qj + g_Q * (e * (W_t * m) - hyper.lambda_Q * cj * Qj)
        if cfg.implicit_feedback:
            p.y[rated] += g_y * (e * ciu * g
                                 - hyper.lambda_y * idx.inv_sqrt_U[rated][:, None] * p.y[rated])
        if cfg.conditional:
            dY = g_Y * (e * np.outer(g, g) - hyper.lambda_Y * p.Y)
            np.fill_diagonal(dY, 0.0)
            p.Y += dY

        # deferred accumulation (true gradient contributions)
        state.P_s[u] += -e * g + hyper.lambda_P * ciu * p.P[u]
        state.W_s[u] += -e * (Qj * m) + hyper.lambda_W * ciu * p.W[u]
        state.Z_s[u] += -e * m + hyper.lambda_Z * ciu * p.Z[u]
        if dyn_f:
            state.Pt_s[s] += -e * g + hyper.lambda_Pt * ciu * p.Pt[s]
            state.beta_P[u] += -e * dev * g.sum() + hyper.lambda_alpha_P * ciu * p.alpha_P[u]
        if dyn_fv:
            qm = Qj * m
            state.Wt_s[s] += -e * qm + hyper.lambda_Wt * ciu * p.Wt[s]
            state.beta_W[u] += -e * dev * qm.sum() + hyper.lambda_alpha_W * ciu * p.alpha_W[u]
            state.Zt_s[s] += -e * m + hyper.lambda_Zt * ciu * p.Zt[s]
            state.beta_Z[u] += -e * dev * m.sum() + hyper.lambda_alpha_Z * ciu * p.alpha_Z[u]
        if cfg.social:
            trustees = idx.trustees[u]
            if len(trustees):
                state.omega_s[trustees] += (-e * idx.inv_sqrt_T[u]) * g
    return p, state


def social_pass(p: ModelParams, state: TrainerState, trust: TrustNetwork | None,
                hyper: HyperParams, cfg: AspectConfig, ctx: TemporalContext,
                pre: Precomp) -> TrainerState:
    """One sweep over the trust edges, accumulating social-loss gradients.

    No-op when the social aspect is off or the network is empty.  Edges of
    users without any rating contribute only their regularizer terms (the
    trust estimates are undefined for them).
    """
    if not cfg.social or trust is None or len(trust) == 0:
        return state
    idx = pre.idx
    lam_t = hyper.lambda_t
    lam_T = hyper.lambda_T
    for u in range(p.num_users):
        trustees = idx.trustees[u]
        n_edges = len(trustees)
        if n_edges == 0:
            continue
        dtu = idx.inv_sqrt_T[u]
        # regularizer hits, one per edge
        state.P_s[u] += n_edges * lam_T * dtu * p.P[u]
        state.W_s[u] += n_edges * lam_T * dtu * p.W[u]
        state.Z_s[u] += n_edges * lam_T * dtu * p.Z[u]
        s_u = pre.user_slots[u]
        c_u = pre.user_slot_counts[u]
        if cfg.dynamic_feature:
            state.beta_P[u] += n_edges * lam_T * dtu * p.alpha_P[u]
            if len(s_u):
                state.Pt_s[s_u] += (n_edges * lam_T * dtu) * c_u[:, None] * p.Pt[s_u]
        if cfg.dynamic_feature_value:
            state.beta_W[u] += n_edges * lam_T * dtu * p.alpha_W[u]
            state.beta_Z[u] += n_edges * lam_T * dtu * p.alpha_Z[u]
            if len(s_u):
                state.Wt_s[s_u] += (n_edges * lam_T * dtu) * c_u[:, None] * p.Wt[s_u]
                state.Zt_s[s_u] += (n_edges * lam_T * dtu) * c_u[:, None] * p.Zt[s_u]
        state.omega_s[trustees] += (
            hyper.lambda_omega * idx.inv_sqrt_Tplus[trustees][:, None] * p.omega[trustees])

        days_u = idx.user_days[u]
        if len(days_u) == 0:
            continue
        n_u = len(days_u)
        P_bar, W_bar, Z_bar, dev_mean = averaged_user_vectors(p, u, days_u, ctx, cfg)
        om = p.omega[trustees]
        tv = idx.trust_values[u]
        e1 = tv - om @ P_bar
        e2 = tv - om @ (1.0 - W_bar)
        e3 = tv - om @ Z_bar
        state.P_s[u] += -lam_t * hyper.eta_P * (e1 @ om)
        state.W_s[u] += lam_t * hyper.eta_W * (e2 @ om)
        state.Z_s[u] += -lam_t * hyper.eta_Z * (e3 @ om)
        if cfg.dynamic_feature:
            state.beta_P[u] += -lam_t * hyper.eta_P * dev_mean * float(e1 @ om.sum(axis=1))
            if len(s_u):
                state.Pt_s[s_u] += (-lam_t * hyper.eta_P / n_u) * c_u[:, None] * (e1 @ om)
        if cfg.dynamic_feature_value:
            state.beta_W[u] += lam_t * hyper.eta_W * dev_mean * float(e2 @ om.sum(axis=1))
            state.beta_Z[u] += -lam_t * hyper.eta_Z * dev_mean * float(e3 @ om.sum(axis=1))
            if len(s_u):
                state.Wt_s[s_u] += (lam_t * hyper.eta_W / n_u) * c_u[:, None] * (e2 @ om)
                state.Zt_s[s_u] += (-lam_t * hyper.eta_Z / n_u) * c_u[:, None] * (e3 @ om)
        state.omega_s[trustees] += -lam_t * (
            hyper.eta_P * e1[:, None] * P_bar[None, :]
            + hyper.eta_W * e2[:, None] * (1.0 - W_bar)[None, :]
            + hyper.eta_Z * e3[:, None] * Z_bar[None, :])
    return state


def apply_updates(p: ModelParams, state: TrainerState,
                  hyper: HyperParams, cfg: AspectConfig) -> ModelParams:
    """Apply the deferred accumulators as one descent step, then zero them."""
    lr = state.lr_scale
    p.P -= lr * hyper.gamma_P * state.P_s
    p.W -= lr * hyper.gamma_W * state.W_s
    p.Z -= lr * hyper.gamma_Z * state.Z_s
    if cfg.social:
        p.omega -= lr * hyper.gamma_omega * state.omega_s
    if cfg.dynamic_feature:
        p.alpha_P -= lr * hyper.gamma_alpha_P * state.beta_P
        p.Pt -= lr * hyper.gamma_Pt * state.Pt_s
    if cfg.dynamic_feature_value:
        p.alpha_W -= lr * hyper.gamma_alpha_W * state.beta_W
        p.alpha_Z -= lr * hyper.gamma_alpha_Z * state.beta_Z
        p.Wt -= lr * hyper.gamma_Wt * state.Wt_s
        p.Zt -= lr * hyper.gamma_Zt * state.Zt_s
    state.zero()
    return p


_CHECK_GROUPS = ("bu", "alpha", "bi", "bit", "C", "P", "alpha_P", "Q", "W",
                 "alpha_W", "Z", "alpha_Z", "Y", "omega", "y", "but", "Ct",
                 "Pt", "Wt", "Zt")


def _first_nonfinite_group(p: ModelParams) -> str | None:
    for name in _CHECK_GROUPS:
        if not np.all(np.isfinite(getattr(p, name))):
            return name
    return None


def train(train_set: RatingDataset, trust: TrustNetwork | None,
          hyper: HyperParams, cfg: AspectConfig,
          ctx: TemporalContext | None = None,
          on_iteration=None) -> tuple[ModelParams, TrainReport, TemporalContext]:
    """Full training run: init, then max_iter iterations of the three phases.

    Learning rates shrink by lr_decay after every iteration.  The loss is
    recorded each iteration; with hyper.snapshot_best the returned
    parameters come from the best-loss iteration instead of the last.
    Raises DivergenceError on a non-finite loss.
    """
    hyper.validate()
    if hyper.max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if ctx is None:
        ctx = TemporalContext.from_dataset(train_set, hyper.beta, hyper.num_bins)
    mu = float(train_set.ratings.mean())
    p = init_params(train_set.num_users, train_set.num_items, hyper, cfg, mu=mu)
    pre = Precomp(p, train_set, trust, hyper, cfg, ctx)
    state = TrainerState(p)
    report = TrainReport()
    best: ModelParams | None = None
    for it in range(hyper.max_iter):
        start = time.perf_counter()
        state.iteration = it
        order = np.random.default_rng([hyper.seed, it]).permutation(len(train_set))
        intrinsic_pass(p, state, train_set, hyper, cfg, ctx, pre, order)
        social_pass(p, state, trust, hyper, cfg, ctx, pre)
        apply_updates(p, state, hyper, cfg)
        loss = total_loss(p, train_set, trust, hyper, cfg, ctx, pre)
        report.iter_seconds.append(time.perf_counter() - start)
        report.loss_history.append(loss)
        if not np.isfinite(loss[0]):
            group = _first_nonfinite_group(p) or "loss"
            raise DivergenceError(group, it)
        if loss[0] < report.best_loss:
            report.best_loss = loss[0]
            report.best_iteration = it
            if hyper.snapshot_best:
                best = p.copy()
        if on_iteration is not None:
            on_iteration(it, p)
        state.lr_scale *= hyper.lr_decay
    if hyper.snapshot_best and best is not None:
        p = best
    return p, report, ctx


def timed_iteration(train_set: RatingDataset, trust: TrustNetwork | None,
                    hyper: HyperParams, cfg: AspectConfig) -> float:
    """Wall-clock seconds of one full training iteration (all three phases)."""
    ctx = TemporalContext.from_dataset(train_set, hyper.beta, hyper.num_bins)
    mu = float(train_set.ratings.mean())
    p = init_params(train_set.num_users, train_set.num_items, hyper, cfg, mu=mu)
    pre = Precomp(p, train_set, trust, hyper, cfg, ctx)
    state = TrainerState(p)
    order = np.random.default_rng([hyper.seed, 0]).permutation(len(train_set))
    start = time.perf_counter()
    intrinsic_pass(p, state, train_set, hyper, cfg, ctx, pre, order)
    social_pass(p, state, trust, hyper, cfg, ctx, pre)
    apply_updates(p, state, hyper, cfg)
    return time.perf_counter() - start


def randomize_params(p: ModelParams, seed: int, cfg: AspectConfig,
                     scale: float = 0.1) -> ModelParams:
    """Fill every active group with Gaussian noise (verification helper).

    Day tables must already be registered; W and C are perturbed around
    their identity initialisation, Y stays symmetric with a zero diagonal.
    """
    rng = np.random.default_rng(seed)
    p.bu = rng.normal(0, scale, p.bu.shape)
    p.bi = rng.normal(0, scale, p.bi.shape)
    p.P = rng.normal(0, scale, p.P.shape)
    p.Q = rng.normal(0, scale, p.Q.shape)
    p.W = 1.0 + rng.normal(0, scale, p.W.shape)
    p.Z = rng.normal(0, scale, p.Z.shape)
    if cfg.implicit_feedback:
        p.y = rng.normal(0, scale, p.y.shape)
    if cfg.social:
        p.omega = rng.normal(0, scale, p.omega.shape)
    if cfg.conditional:
        a = rng.normal(0, scale, p.Y.shape)
        p.Y = 0.5 * (a + a.T)
        np.fill_diagonal(p.Y, 0.0)
    if cfg.dynamic_bias:
        p.alpha = rng.normal(0, scale, p.alpha.shape)
        p.C = 1.0 + rng.normal(0, scale, p.C.shape)
        p.but = rng.normal(0, scale, p.but.shape)
        p.Ct = rng.normal(0, scale, p.Ct.shape)
        p.bit = rng.normal(0, scale, p.bit.shape)
    if cfg.dynamic_feature:
        p.alpha_P = rng.normal(0, scale, p.alpha_P.shape)
        p.Pt = rng.normal(0, scale, p.Pt.shape)
    if cfg.dynamic_feature_value:
        p.alpha_W = rng.normal(0, scale, p.alpha_W.shape)
        p.alpha_Z = rng.normal(0, scale, p.alpha_Z.shape)
        p.Wt = rng.normal(0, scale, p.Wt.shape)
        p.Zt = rng.normal(0, scale, p.Zt.shape)
    return p


def standard_instance(seed: int = 42, num_users: int = 5, num_items: int = 8,
                      num_factors: int = 3, num_edges: int = 3,
                      span_days: int = 100, ratings_per_user: int = 5):
    """The small random instance used by the verification commands.

    Returns (train, trust, hyper, cfg, ctx, params) with every aspect
    enabled and all parameter groups randomised so each gradient path is
    exercised.
    """
    rng = np.random.default_rng(seed)
    users, items, values, stamps = [], [], [], []
    for u in range(num_users):
        rated = rng.choice(num_items, size=min(ratings_per_user, num_items),
                           replace=False)
        for j in rated:
            users.append(u)
            items.append(int(j))
            values.append(float(rng.uniform(1.0, 5.0)))
            stamps.append(int(rng.integers(0, span_days)) * 86_400)
    train_set = RatingDataset(users, items, values, stamps, num_users, num_items,
                              (1.0, 5.0))
    edges = set()
    while len(edges) < num_edges:
        u, v = rng.integers(0, num_users, size=2)
        if u != v:
            edges.add((int(u), int(v)))
    trust = TrustNetwork([(u, v, 1.0) for u, v in sorted(edges)], num_users)
    hyper = HyperParams(D=num_factors, max_iter=10, seed=seed)
    cfg = AspectConfig(dynamic_bias=True, dynamic_feature=True,
                       dynamic_feature_value=True, social=True,
                       conditional=True, implicit_feedback=True)
    ctx = TemporalContext.from_dataset(train_set, hyper.beta, hyper.num_bins)
    p = init_params(num_users, num_items, hyper, cfg,
                    mu=float(train_set.ratings.mean()))
    p.register_days(zip(train_set.users.tolist(), train_set.days().tolist()))
    randomize_params(p, seed + 1, cfg)
    return train_set, trust, hyper, cfg, ctx, p
