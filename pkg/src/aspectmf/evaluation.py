"""Accuracy metrics, statistical comparison, and the experiment drivers.

MAE/RMSE are reported separately for the whole test set and for the
cold-start slice (users below the rating-count threshold in the training
split).  The model comparison across repeated runs uses Welch's
unequal-variance t-test.  `aspect_sweep` and `robustness_experiment`
produce flat row tables (one dict per cell) that serialize to delimited
text or JSON.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from aspectmf import data as data_mod
from aspectmf import model as model_mod
from aspectmf import trainer as trainer_mod
from aspectmf.model import AspectConfig, HyperParams, ModelParams, UserIndexes, predict
from aspectmf.temporal import TemporalContext

METRICS = ("mae", "rmse")
SLICES = ("all", "cold")
SWEEP_COMBOS = ("b", "bf", "bffv", "bfv", "f", "ffv", "fv", "static")


@dataclass
class EvalReport:
    mae_all: float
    rmse_all: float
    n_all: int
    mae_cold: float | None = None
    rmse_cold: float | None = None
    n_cold: int = 0

    def value(self, metric: str, slice_name: str) -> float | None:
        return getattr(self, f"{metric}_{slice_name}")


@dataclass
class TTestResult:
    t_statistic: float
    p_value: float
    degrees_of_freedom: float
    mean_a: float
    mean_b: float
    var_a: float
    var_b: float
    n_a: int
    n_b: int


def mae(pairs) -> float:
    """Mean absolute error over (predicted, actual) pairs."""
    arr = np.asarray(pairs, dtype=float)
    if arr.size == 0:
        raise ValueError("mae of an empty pair list")
    return float(np.abs(arr[:, 0] - arr[:, 1]).mean())


def rmse(pairs) -> float:
    """Root mean squared error over (predicted, actual) pairs."""
    arr = np.asarray(pairs, dtype=float)
    if arr.size == 0:
        raise ValueError("rmse of an empty pair list")
    return float(np.sqrt(((arr[:, 0] - arr[:, 1]) ** 2).mean()))


def evaluate(p: ModelParams, test, cold_set: set[int], ctx: TemporalContext,
             cfg: AspectConfig, idx: UserIndexes,
             clip: bool = True) -> EvalReport:
    """MAE/RMSE on the full test set and its cold-start slice.

    Predictions are made at each record's timestamp and, by default,
    clipped to the test set's rating scale.  An empty cold slice reports
    absent (None) cold metrics rather than zeros.
    """
    if len(test) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    bounds = test.rating_scale if clip else None
    days = test.days()
    preds = np.empty(len(test))
    for r in range(len(test)):
        preds[r] = predict(p, idx, int(test.users[r]), int(test.items[r]),
                           int(days[r]), ctx, cfg, clip=bounds)
    err = preds - test.ratings
    cold_mask = np.asarray([int(u) in cold_set for u in test.users])
    report = EvalReport(
        mae_all=float(np.abs(err).mean()),
        rmse_all=float(np.sqrt((err ** 2).mean())),
        n_all=len(test),
        n_cold=int(cold_mask.sum()),
    )
    if report.n_cold:
        ce = err[cold_mask]
        report.mae_cold = float(np.abs(ce).mean())
        report.rmse_cold = float(np.sqrt((ce ** 2).mean()))
    return report


def welch_t_test(sample_a, sample_b) -> TTestResult:
    """Welch's unequal-variance t-test with a two-sided p-value.

    Degrees of freedom follow the Welch-Satterthwaite approximation.
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("both samples need at least 2 elements")
    na, nb = len(a), len(b)
    ma, mb = float(a.mean()), float(b.mean())
    va, vb = float(a.var(ddof=1)), float(b.var(ddof=1))
    sa, sb = va / na, vb / nb
    denom = sa + sb
    if denom == 0.0:
        # two constant samples: identical means give no evidence at all
        t = 0.0 if ma == mb else math.copysign(math.inf, ma - mb)
        pval = 1.0 if ma == mb else 0.0
        df = float(na + nb - 2)
    else:
        t = (ma - mb) / math.sqrt(denom)
        df = denom ** 2 / (sa ** 2 / (na - 1) + sb ** 2 / (nb - 1))
        pval = 2.0 * float(special.stdtr(df, -abs(t)))
    return TTestResult(t_statistic=float(t), p_value=float(pval),
                       degrees_of_freedom=float(df), mean_a=ma, mean_b=mb,
                       var_a=va, var_b=vb, n_a=na, n_b=nb)


class _BestTracker:
    """Per-metric minimum over training iterations (per-run best values)."""

    def __init__(self, test, cold_set, ctx, cfg, idx, clip=True):
        self.test = test
        self.cold_set = cold_set
        self.ctx = ctx
        self.cfg = cfg
        self.idx = idx
        self.clip = clip
        self.best: dict[tuple[str, str], float] = {}
        self.n_all = 0
        self.n_cold = 0

    def __call__(self, iteration: int, params: ModelParams):
        rep = evaluate(params, self.test, self.cold_set, self.ctx, self.cfg,
                       self.idx, clip=self.clip)
        self.n_all, self.n_cold = rep.n_all, rep.n_cold
        for metric in METRICS:
            for slc in SLICES:
                val = rep.value(metric, slc)
                if val is None:
                    continue
                key = (metric, slc)
                if key not in self.best or val < self.best[key]:
                    self.best[key] = val

    def report(self) -> EvalReport:
        return EvalReport(
            mae_all=self.best[("mae", "all")],
            rmse_all=self.best[("rmse", "all")],
            n_all=self.n_all,
            mae_cold=self.best.get(("mae", "cold")),
            rmse_cold=self.best.get(("rmse", "cold")),
            n_cold=self.n_cold,
        )


def train_and_evaluate(train_set, trust, test, hyper: HyperParams,
                       cfg: AspectConfig, cold_set=None, track_best: bool = True,
                       clip: bool = True) -> EvalReport:
    """One full train+evaluate run for a single (config, seed) cell.

    With track_best the test metrics are evaluated after every iteration
    and the per-metric minimum is reported; otherwise only the final
    model is evaluated.
    """
    if cold_set is None:
        cold_set = data_mod.cold_start_users(train_set)
    ctx = TemporalContext.from_dataset(train_set, hyper.beta, hyper.num_bins)
    idx = UserIndexes(train_set, trust if cfg.social else None)
    if track_best:
        tracker = _BestTracker(test, cold_set, ctx, cfg, idx, clip)
        trainer_mod.train(train_set, trust, hyper, cfg, ctx, on_iteration=tracker)
        return tracker.report()
    params, _, ctx = trainer_mod.train(train_set, trust, hyper, cfg, ctx)
    return evaluate(params, test, cold_set, ctx, cfg, idx, clip=clip)


def _sweep_cell(args):
    train_set, trust, test, hyper, base_cfg, combo, seed, track_best = args
    cfg = replace(base_cfg,
                  dynamic_bias="b" in model_mod.COMBO_LABELS[combo],
                  dynamic_feature="f" in model_mod.COMBO_LABELS[combo],
                  dynamic_feature_value="fv" in model_mod.COMBO_LABELS[combo])
    hyper_s = replace(hyper, seed=seed)
    try:
        rep = train_and_evaluate(train_set, trust, test, hyper_s, cfg,
                                 track_best=track_best)
        return combo, seed, rep, None
    except trainer_mod.DivergenceError as exc:
        return combo, seed, None, str(exc)


def aspect_sweep(train_set, trust, test, hyper: HyperParams,
                 base_cfg: AspectConfig, seeds, combos=SWEEP_COMBOS,
                 track_best: bool = True, workers: int = 1):
    """Train and evaluate every aspect combination over the given seeds.

    Returns (cells, aggregates): one row dict per (combination, seed,
    metric, slice) plus mean/std aggregate rows per combination.  Training
    divergence is recorded in the affected cells, not raised.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    jobs = [(train_set, trust, test, hyper, base_cfg, combo, seed, track_best)
            for combo in combos for seed in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(job) for job in jobs]

    cells = []
    values: dict[tuple[str, str, str], list[float]] = {}
    for combo, seed, rep, error in results:
        if error is not None:
            cells.append({"combination": combo, "seed": seed, "fraction": "",
                          "metric": "", "slice": "", "value": "",
                          "error": error})
            continue
        for metric in METRICS:
            for slc in SLICES:
                val = rep.value(metric, slc)
                if val is None:
                    continue
                cells.append({"combination": combo, "seed": seed, "fraction": "",
                              "metric": metric, "slice": slc, "value": val,
                              "error": ""})
                values.setdefault((combo, metric, slc), []).append(val)
    aggregates = []
    for combo in combos:
        for metric in METRICS:
            for slc in SLICES:
                vals = values.get((combo, metric, slc))
                if not vals:
                    continue
                std = float(np.std(vals, ddof=1)) if len(vals) > 1 else None
                aggregates.append({"combination": combo, "metric": metric,
                                   "slice": slc, "mean": float(np.mean(vals)),
                                   "std": std, "n": len(vals)})
    return cells, aggregates


def robustness_experiment(dataset, trust, hyper: HyperParams, cfg: AspectConfig,
                          fractions=(0.8, 0.6, 0.4), seeds=(0,),
                          track_best: bool = True):
    """Accuracy deterioration as the training fraction shrinks.

    For each training fraction the dataset is re-split per seed, trained
    and evaluated; the table reports the percent error increase between
    consecutive fractions, per metric and slice.
    """
    fractions = list(fractions)
    if any(not (0.0 < f < 1.0) for f in fractions):
        raise ValueError("fractions must lie in (0, 1)")
    if any(b >= a for a, b in zip(fractions, fractions[1:])):
        raise ValueError("fractions must be strictly decreasing")
    means: dict[tuple[float, str, str], float] = {}
    cells = []
    for fraction in fractions:
        per_metric: dict[tuple[str, str], list[float]] = {}
        for seed in seeds:
            train_set, test = data_mod.split_random(dataset, fraction, seed)
            hyper_s = replace(hyper, seed=seed)
            try:
                rep = train_and_evaluate(train_set, trust, test, hyper_s, cfg,
                                         track_best=track_best)
            except trainer_mod.DivergenceError as exc:
                cells.append({"combination": cfg.label, "seed": seed,
                              "fraction": fraction, "metric": "", "slice": "",
                              "value": "", "error": str(exc)})
                continue
            for metric in METRICS:
                for slc in SLICES:
                    val = rep.value(metric, slc)
                    if val is None:
                        continue
                    per_metric.setdefault((metric, slc), []).append(val)
                    cells.append({"combination": cfg.label, "seed": seed,
                                  "fraction": fraction, "metric": metric,
                                  "slice": slc, "value": val, "error": ""})
        for key, vals in per_metric.items():
            means[(fraction, *key)] = float(np.mean(vals))
    increases = []
    for hi, lo in zip(fractions, fractions[1:]):
        pair = f"{int(hi * 100)}-{int(lo * 100)}"
        for metric in METRICS:
            for slc in SLICES:
                hi_val = means.get((hi, metric, slc))
                lo_val = means.get((lo, metric, slc))
                if hi_val is None or lo_val is None:
                    continue
                increases.append({
                    "pair": pair, "metric": metric, "slice": slc,
                    "higher_fraction_error": hi_val,
                    "lower_fraction_error": lo_val,
                    "percent_increase": 100.0 * (lo_val - hi_val) / hi_val,
                })
    return cells, increases


def scaling_benchmark(configs, hyper: HyperParams, cfg: AspectConfig,
                      repeats: int = 3):
    """Wall-time of one training iteration per generated dataset size.

    Each row carries the rating count, trust-edge count, and the median
    single-iteration time over `repeats` measurements.
    """
    configs = list(configs)
    if len(configs) < 2:
        raise ValueError("need at least two sizes to compare")
    rows = []
    for synth_cfg in configs:
        dataset, trust, _ = data_mod.generate_synthetic(synth_cfg)
        times = [trainer_mod.timed_iteration(dataset, trust, hyper, cfg)
                 for _ in range(repeats)]
        rows.append({"num_ratings": len(dataset), "num_edges": len(trust),
                     "seconds_per_iteration": float(np.median(times))})
    return rows


def rows_to_delimited(rows, columns=None, delimiter="\t") -> str:
    """Render row dicts as a delimited text table with a header line."""
    if not rows:
        return ""
    if columns is None:
        columns = list(rows[0].keys())

    def fmt(value):
        if value is None:
            return "NA"
        if isinstance(value, float):
            return f"{value:.10g}"
        return str(value)

    lines = [delimiter.join(columns)]
    for row in rows:
        lines.append(delimiter.join(fmt(row.get(c)) for c in columns))
    return "\n".join(lines) + "\n"
