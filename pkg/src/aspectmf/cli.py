"""Command-line entry point.

Subcommands: synth (generate a planted-drift dataset), train, eval,
gradcheck (finite-difference verification of the analytic gradients),
sweep (aspect-combination study or training-fraction robustness study),
and bench (linear-scaling measurement).

Every run writes a manifest.json alongside its outputs with the resolved
configuration, input digests, and seeds, so any primary output can be
reproduced byte-for-byte from its manifest.

Exit codes: 0 success, 1 usage error, 2 data error, 3 divergence,
4 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, replace

from aspectmf import config as config_mod
from aspectmf import data as data_mod
from aspectmf import evaluation as eval_mod
from aspectmf import model as model_mod
from aspectmf import trainer as trainer_mod
from aspectmf.model import AspectConfig, COMBO_LABELS, HyperParams

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGENCE = 3
EXIT_VERIFICATION = 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _out_dir(args) -> str:
    out = args.out_dir or os.environ.get("ASPECTMF_OUT") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_manifest(out_dir, command, resolved, inputs, seeds, outputs,
                    started, finished):
    manifest = {
        "command": command,
        "config": resolved,
        "inputs": {str(p): _sha256(p) for p in inputs if p},
        "seeds": seeds,
        "outputs": [str(p) for p in outputs],
        "started": started,
        "finished": finished,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _parse_scale(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise CliError(f"invalid --scale {text!r}; expected 'min,max'", EXIT_USAGE)
    if lo >= hi:
        raise CliError("--scale must satisfy min < max", EXIT_USAGE)
    return lo, hi


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise CliError(f"invalid {flag} {text!r}; expected comma-separated integers",
                       EXIT_USAGE)


def _load_hyper(args) -> HyperParams:
    hyper = HyperParams()
    if getattr(args, "config", None):
        try:
            hyper = config_mod.load_config(args.config)
        except FileNotFoundError:
            raise CliError(f"config file not found: {args.config}", EXIT_DATA)
        except config_mod.ConfigError as exc:
            raise CliError(f"config error: {exc}", EXIT_USAGE)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "max_iter", None) is not None:
        overrides["max_iter"] = args.max_iter
    if getattr(args, "snapshot_best", False):
        overrides["snapshot_best"] = True
    if overrides:
        hyper = replace(hyper, **overrides)
    if getattr(args, "gamma_all", None) is not None:
        hyper = hyper.with_all_gammas(args.gamma_all)
    return hyper


def _aspect_config(args, have_trust: bool) -> AspectConfig:
    label = getattr(args, "aspects", "static") or "static"
    if label == "none":
        label = "static"
    if label not in COMBO_LABELS:
        raise CliError(f"unknown --aspects value {label!r}; expected one of "
                       f"{sorted(COMBO_LABELS)} (or 'none')", EXIT_USAGE)
    social = not getattr(args, "no_social", False)
    if social and not have_trust:
        print("warning: no trust file given; social component disabled",
              file=sys.stderr)
        social = False
    return AspectConfig.from_label(
        label, social=social,
        conditional=not getattr(args, "no_conditional", False),
        implicit_feedback=not getattr(args, "no_implicit", False))


def _load_datasets(args, need_trust=True):
    scale = _parse_scale(args.scale)
    try:
        if getattr(args, "trust", None):
            dataset, trust, skipped = data_mod.parse_pair(args.ratings, args.trust,
                                                          scale)
            if skipped:
                print(f"warning: skipped {skipped} trust lines "
                      "(self-loops or unknown users)", file=sys.stderr)
        else:
            dataset = data_mod.parse_ratings(args.ratings, scale)
            trust = data_mod.TrustNetwork.empty(dataset.num_users)
    except FileNotFoundError as exc:
        raise CliError(f"input file not found: {exc.filename}", EXIT_DATA)
    except data_mod.DataError as exc:
        raise CliError(str(exc), EXIT_DATA)
    return dataset, trust


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    started = time.time()
    out = _out_dir(args)
    label = "static" if args.drift in ("none", "static") else args.drift
    if label not in COMBO_LABELS:
        raise CliError(f"unknown --drift value {args.drift!r}", EXIT_USAGE)
    parts = COMBO_LABELS[label]
    profile = data_mod.DriftProfile(
        bias="b" in parts, feature="f" in parts, feature_value="fv" in parts,
        bias_slope_std=args.bias_slope, feature_slope_std=args.feature_slope,
        feature_value_slope_std=args.fv_slope, day_noise_std=args.day_noise)
    cfg = data_mod.SyntheticConfig(
        num_users=args.users, num_items=args.items, num_factors=args.factors,
        rating_scale=_parse_scale(args.scale), time_span_days=args.span_days,
        drift_profile=profile, trust_density=args.trust_density,
        noise_std=args.noise, seed=args.seed,
        ratings_per_user=args.ratings_per_user)
    try:
        dataset, trust, truth = data_mod.generate_synthetic(cfg)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE)
    ratings_path = os.path.join(out, "ratings.txt")
    trust_path = os.path.join(out, "trust.txt")
    truth_path = os.path.join(out, "ground_truth.json")
    data_mod.write_ratings(dataset, ratings_path)
    data_mod.write_trust(trust, trust_path)
    truth_doc = {
        "config": {**asdict(cfg), "drift_profile": asdict(cfg.drift_profile)},
        "mu": truth.mu,
        "bu": truth.bu.tolist(), "bi": truth.bi.tolist(),
        "P": truth.P.tolist(), "Q": truth.Q.tolist(),
        "bias_slope": truth.bias_slope.tolist(),
        "feature_slope": truth.feature_slope.tolist(),
        "w_slope": truth.w_slope.tolist(), "z_slope": truth.z_slope.tolist(),
        "t_u": truth.t_u.tolist(),
    }
    with open(truth_path, "w", encoding="utf-8") as fh:
        json.dump(truth_doc, fh)
        fh.write("\n")
    print(f"wrote {len(dataset)} ratings, {len(trust)} trust edges to {out}")
    _write_manifest(out, "synth", truth_doc["config"], [], {"seed": args.seed},
                    [ratings_path, trust_path, truth_path], started, time.time())
    return EXIT_OK


def cmd_train(args) -> int:
    started = time.time()
    out = _out_dir(args)
    hyper = _load_hyper(args)
    dataset, trust = _load_datasets(args)
    cfg = _aspect_config(args, have_trust=bool(args.trust))
    outputs = []
    test_set = None
    if args.train_fraction is not None:
        split_seed = args.split_seed if args.split_seed is not None else hyper.seed
        train_set, test_set = data_mod.split_random(dataset, args.train_fraction,
                                                    split_seed)
        test_path = os.path.join(out, "test.txt")
        data_mod.write_ratings(test_set, test_path)
        outputs.append(test_path)
    else:
        train_set = dataset
    try:
        params, report, ctx = trainer_mod.train(train_set, trust, hyper, cfg)
    except trainer_mod.DivergenceError as exc:
        raise CliError(f"training diverged: {exc}", EXIT_DIVERGENCE)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE)
    model_path = os.path.join(out, "model.txt")
    model_mod.save_model(params, ctx, cfg, model_path)
    report_path = os.path.join(out, "report.txt")
    rows = [{"iteration": i, "E": e, "E_R": er, "E_T": et, "seconds": s}
            for i, ((e, er, et), s) in enumerate(zip(report.loss_history,
                                                     report.iter_seconds))]
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(eval_mod.rows_to_delimited(
            rows, ["iteration", "E", "E_R", "E_T", "seconds"]))
    outputs = [model_path, report_path] + outputs
    print(f"trained {cfg.label} model for {hyper.max_iter} iterations; "
          f"final loss {report.loss_history[-1][0]:.6g}")
    _write_manifest(out, "train",
                    {"hyper": asdict(hyper), "aspects": asdict(cfg),
                     "train_fraction": args.train_fraction},
                    [args.ratings, args.trust, args.config],
                    {"seed": hyper.seed, "split_seed": args.split_seed},
                    outputs, started, time.time())
    return EXIT_OK


def cmd_eval(args) -> int:
    started = time.time()
    out = _out_dir(args)
    try:
        params, ctx, cfg = model_mod.load_model(args.model)
    except FileNotFoundError:
        raise CliError(f"model file not found: {args.model}", EXIT_DATA)
    except model_mod.ModelFormatError as exc:
        raise CliError(str(exc), EXIT_DATA)
    dataset, trust = _load_datasets(args)
    if args.test:
        train_set = dataset
        try:
            test_set = data_mod.parse_ratings(args.test, _parse_scale(args.scale))
        except FileNotFoundError as exc:
            raise CliError(f"input file not found: {exc.filename}", EXIT_DATA)
        except data_mod.DataError as exc:
            raise CliError(str(exc), EXIT_DATA)
    elif args.train_fraction is not None:
        split_seed = args.split_seed if args.split_seed is not None else 0
        train_set, test_set = data_mod.split_random(dataset, args.train_fraction,
                                                    split_seed)
    else:
        raise CliError("eval needs either --test or --train-fraction", EXIT_USAGE)
    cold = data_mod.cold_start_users(train_set, args.cold_threshold)
    idx = model_mod.UserIndexes(train_set, trust if cfg.social else None)
    try:
        report = eval_mod.evaluate(params, test_set, cold, ctx, cfg, idx,
                                   clip=not args.no_clip)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_DATA)
    rows = []
    for metric in eval_mod.METRICS:
        for slc in eval_mod.SLICES:
            rows.append({"metric": metric, "slice": slc,
                         "value": report.value(metric, slc),
                         "n": report.n_all if slc == "all" else report.n_cold})
    if args.json:
        eval_path = os.path.join(out, "eval.json")
        with open(eval_path, "w", encoding="utf-8") as fh:
            json.dump({"results": rows}, fh, indent=2)
            fh.write("\n")
    else:
        eval_path = os.path.join(out, "eval.txt")
        with open(eval_path, "w", encoding="utf-8") as fh:
            fh.write(eval_mod.rows_to_delimited(rows, ["metric", "slice", "value", "n"]))
    print(eval_mod.rows_to_delimited(rows, ["metric", "slice", "value", "n"]))
    _write_manifest(out, "eval", {"cold_threshold": args.cold_threshold,
                                  "clip": not args.no_clip,
                                  "train_fraction": args.train_fraction},
                    [args.model, args.ratings, args.trust, args.test],
                    {"split_seed": args.split_seed}, [eval_path],
                    started, time.time())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    started = time.time()
    out = _out_dir(args)
    train_set, trust, hyper, cfg, ctx, params = trainer_mod.standard_instance(args.seed)
    report = trainer_mod.gradient_check(params, train_set, trust, hyper, cfg, ctx,
                                        epsilon=args.eps, tolerance=args.tolerance)
    rows = [{"group": g, "max_rel_error": e,
             "pass": "yes" if e < args.tolerance else "no"}
            for g, e in sorted(report.errors.items())]
    text = eval_mod.rows_to_delimited(rows, ["group", "max_rel_error", "pass"])
    path = os.path.join(out, "gradcheck.json" if args.json else "gradcheck.txt")
    with open(path, "w", encoding="utf-8") as fh:
        if args.json:
            json.dump({"tolerance": args.tolerance, "results": rows}, fh, indent=2)
            fh.write("\n")
        else:
            fh.write(text)
    print(text)
    print(f"max relative error {report.max_error:.3e} "
          f"(tolerance {args.tolerance:g})")
    _write_manifest(out, "gradcheck", {"eps": args.eps, "tolerance": args.tolerance},
                    [], {"seed": args.seed}, [path], started, time.time())
    if not report.passed:
        print(f"FAILED groups: {report.failing_groups()}", file=sys.stderr)
        return EXIT_VERIFICATION
    return EXIT_OK


def cmd_sweep(args) -> int:
    started = time.time()
    out = _out_dir(args)
    hyper = _load_hyper(args)
    dataset, trust = _load_datasets(args)
    cfg = _aspect_config(args, have_trust=bool(args.trust))
    seeds = _parse_int_list(args.seeds, "--seeds")
    if not seeds:
        raise CliError("--seeds must name at least one seed", EXIT_USAGE)
    track_best = not args.no_best
    if args.fractions:
        fractions = [float(x) for x in args.fractions.split(",")]
        cells, table = eval_mod.robustness_experiment(
            dataset, trust, hyper, cfg, fractions=fractions, seeds=seeds,
            track_best=track_best)
        table_cols = ["pair", "metric", "slice", "higher_fraction_error",
                      "lower_fraction_error", "percent_increase"]
        table_name = "robustness"
    else:
        combos = (args.combinations.split(",") if args.combinations
                  else list(eval_mod.SWEEP_COMBOS))
        for combo in combos:
            if combo not in COMBO_LABELS:
                raise CliError(f"unknown combination {combo!r}", EXIT_USAGE)
        split_seed = args.split_seed if args.split_seed is not None else 0
        train_set, test_set = data_mod.split_random(dataset, args.train_fraction,
                                                    split_seed)
        cells, table = eval_mod.aspect_sweep(
            train_set, trust, test_set, hyper, cfg, seeds, combos=combos,
            track_best=track_best, workers=args.workers)
        table_cols = ["combination", "metric", "slice", "mean", "std", "n"]
        table_name = "aggregates"
    cell_cols = ["combination", "seed", "fraction", "metric", "slice", "value",
                 "error"]
    outputs = []
    if args.json:
        path = os.path.join(out, "sweep.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"cells": cells, table_name: table}, fh, indent=2)
            fh.write("\n")
        outputs.append(path)
    else:
        cells_path = os.path.join(out, "sweep_cells.txt")
        with open(cells_path, "w", encoding="utf-8") as fh:
            fh.write(eval_mod.rows_to_delimited(cells, cell_cols))
        table_path = os.path.join(out, f"sweep_{table_name}.txt")
        with open(table_path, "w", encoding="utf-8") as fh:
            fh.write(eval_mod.rows_to_delimited(table, table_cols))
        outputs += [cells_path, table_path]
    print(eval_mod.rows_to_delimited(table, table_cols))
    _write_manifest(out, "sweep",
                    {"hyper": asdict(hyper), "aspects": asdict(cfg),
                     "train_fraction": args.train_fraction,
                     "fractions": args.fractions,
                     "combinations": args.combinations, "best": track_best},
                    [args.ratings, args.trust, args.config],
                    {"seeds": seeds, "split_seed": args.split_seed},
                    outputs, started, time.time())
    return EXIT_OK


def cmd_bench(args) -> int:
    started = time.time()
    out = _out_dir(args)
    hyper = _load_hyper(args)
    if getattr(args, "aspects", None) is None:
        args.aspects = "bffv"
    cfg = _aspect_config(args, have_trust=True)
    rating_sizes = _parse_int_list(args.rating_sizes, "--rating-sizes")
    edge_sizes = _parse_int_list(args.edge_sizes, "--edge-sizes") if args.edge_sizes else []

    def synth_for(num_ratings: int, num_edges: int, seed: int):
        per_user = args.ratings_per_user
        users = max(2, num_ratings // per_user)
        density = min(1.0, num_edges / (users * (users - 1))) if num_edges else 0.0
        return data_mod.SyntheticConfig(
            num_users=users, num_items=args.items, num_factors=hyper.D,
            ratings_per_user=per_user, time_span_days=365,
            trust_density=density, seed=seed)

    rows = []
    configs = [synth_for(nr, args.base_edges, seed=10 + i)
               for i, nr in enumerate(rating_sizes)]
    for row in eval_mod.scaling_benchmark(configs, hyper, cfg, repeats=args.repeats):
        rows.append({"study": "ratings", **row})
    if edge_sizes:
        configs = [synth_for(rating_sizes[0], ne, seed=20 + i)
                   for i, ne in enumerate(edge_sizes)]
        for row in eval_mod.scaling_benchmark(configs, hyper, cfg,
                                              repeats=args.repeats):
            rows.append({"study": "edges", **row})
    cols = ["study", "num_ratings", "num_edges", "seconds_per_iteration"]
    path = os.path.join(out, "bench.json" if args.json else "bench.txt")
    with open(path, "w", encoding="utf-8") as fh:
        if args.json:
            json.dump({"results": rows}, fh, indent=2)
            fh.write("\n")
        else:
            fh.write(eval_mod.rows_to_delimited(rows, cols))
    print(eval_mod.rows_to_delimited(rows, cols))
    _write_manifest(out, "bench",
                    {"rating_sizes": rating_sizes, "edge_sizes": edge_sizes,
                     "repeats": args.repeats, "aspects": asdict(cfg)},
                    [], {"seed": hyper.seed}, [path], started, time.time())
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _add_common_model_flags(sp):
    sp.add_argument("--config", help="hyperparameter config file (key = value)")
    sp.add_argument("--aspects", default="static",
                    help="drift combination: static|b|f|fv|bf|bfv|ffv|bffv")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--max-iter", type=int, default=None)
    sp.add_argument("--gamma-all", type=float, default=None,
                    help="override every learning rate with one value")
    sp.add_argument("--no-social", action="store_true")
    sp.add_argument("--no-conditional", action="store_true")
    sp.add_argument("--no-implicit", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aspectmf", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic planted-drift dataset")
    sp.add_argument("--users", type=int, default=100)
    sp.add_argument("--items", type=int, default=200)
    sp.add_argument("--factors", type=int, default=3)
    sp.add_argument("--scale", default="1,5")
    sp.add_argument("--span-days", type=int, default=1000)
    sp.add_argument("--ratings-per-user", type=int, default=30)
    sp.add_argument("--drift", default="none",
                    help="planted drift aspects: none|b|f|fv|bf|bfv|ffv|bffv")
    sp.add_argument("--bias-slope", type=float, default=0.05)
    sp.add_argument("--feature-slope", type=float, default=0.05)
    sp.add_argument("--fv-slope", type=float, default=0.05)
    sp.add_argument("--day-noise", type=float, default=0.0)
    sp.add_argument("--trust-density", type=float, default=0.0)
    sp.add_argument("--noise", type=float, default=0.2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out-dir")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train a model on a ratings file")
    sp.add_argument("--ratings", required=True)
    sp.add_argument("--trust")
    sp.add_argument("--scale", default="1,5")
    sp.add_argument("--train-fraction", type=float, default=None,
                    help="hold out a test split before training")
    sp.add_argument("--split-seed", type=int, default=None)
    sp.add_argument("--snapshot-best", action="store_true")
    _add_common_model_flags(sp)
    sp.add_argument("--out-dir")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a serialized model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--ratings", required=True,
                    help="training ratings that define the model's indexes")
    sp.add_argument("--trust")
    sp.add_argument("--test", help="test ratings file")
    sp.add_argument("--scale", default="1,5")
    sp.add_argument("--train-fraction", type=float, default=None,
                    help="split --ratings instead of passing --test")
    sp.add_argument("--split-seed", type=int, default=None)
    sp.add_argument("--cold-threshold", type=int, default=5)
    sp.add_argument("--no-clip", action="store_true")
    sp.add_argument("--json", action="store_true")
    sp.add_argument("--out-dir")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("gradcheck",
                        help="check analytic gradients against finite differences")
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--eps", type=float, default=1e-5)
    sp.add_argument("--tolerance", type=float, default=1e-4)
    sp.add_argument("--json", action="store_true")
    sp.add_argument("--out-dir")
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("sweep", help="aspect-combination or robustness study")
    sp.add_argument("--ratings", required=True)
    sp.add_argument("--trust")
    sp.add_argument("--scale", default="1,5")
    sp.add_argument("--seeds", default="0")
    sp.add_argument("--combinations",
                    help="comma list of combinations (default: all eight)")
    sp.add_argument("--train-fraction", type=float, default=0.8)
    sp.add_argument("--split-seed", type=int, default=None)
    sp.add_argument("--fractions",
                    help="comma list of decreasing training fractions; "
                         "switches to the robustness study")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--no-best", action="store_true",
                    help="evaluate only the final iteration (faster)")
    sp.add_argument("--json", action="store_true")
    _add_common_model_flags(sp)
    sp.add_argument("--out-dir")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("bench", help="per-iteration wall-time scaling study")
    sp.add_argument("--rating-sizes", default="20000,40000,80000")
    sp.add_argument("--edge-sizes", default="")
    sp.add_argument("--base-edges", type=int, default=2000)
    sp.add_argument("--ratings-per-user", type=int, default=40)
    sp.add_argument("--items", type=int, default=1000)
    sp.add_argument("--repeats", type=int, default=3)
    sp.add_argument("--json", action="store_true")
    _add_common_model_flags(sp)
    sp.set_defaults(aspects="bffv")
    sp.add_argument("--out-dir")
    sp.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
