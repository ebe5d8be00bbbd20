import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aspectmf.data import RatingDataset, SyntheticConfig, TrustNetwork, \
    cold_start_users, generate_synthetic, split_random
from aspectmf.evaluation import (EvalReport, aspect_sweep, evaluate, mae,
                                 robustness_experiment, rows_to_delimited, rmse,
                                 scaling_benchmark, train_and_evaluate,
                                 welch_t_test)
from aspectmf.model import AspectConfig, HyperParams, UserIndexes
from aspectmf.temporal import TemporalContext
from aspectmf.trainer import standard_instance, train

# frozen references computed with an independent statistics implementation
WELCH_REFERENCE = {
    "t": -6.12372435695794,
    "p": 0.0036022326091040163,
    "df": 4.0,
}


class TestErrorMetrics:
    def test_perfect_predictions(self):
        pairs = [(3.0, 3.0), (4.5, 4.5)]
        assert mae(pairs) == 0.0
        assert rmse(pairs) == 0.0

    def test_hand_arithmetic(self):
        pairs = [(3.0, 4.0), (4.0, 2.0)]
        assert mae(pairs) == pytest.approx(1.5)
        assert rmse(pairs) == pytest.approx(np.sqrt(2.5))

    def test_constant_error_equalizes(self):
        pairs = [(x + 0.7, x) for x in (1.0, 2.0, 3.0)]
        assert mae(pairs) == pytest.approx(0.7)
        assert rmse(pairs) == pytest.approx(0.7)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mae([])
        with pytest.raises(ValueError):
            rmse([])

    @given(st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10)),
                    min_size=1, max_size=50))
    @settings(max_examples=100, deadline=None)
    def test_rmse_dominates_mae(self, pairs):
        assert rmse(pairs) >= mae(pairs) - 1e-12


class TestEvaluate:
    def _fitted(self, seed=3):
        train_set, trust, hyper, cfg, ctx, p = standard_instance(seed)
        idx = UserIndexes(train_set, trust)
        return p, train_set, ctx, cfg, idx

    def test_single_record_error(self):
        p, train_set, ctx, cfg, idx = self._fitted()
        test = RatingDataset([0], [0], [3.0], [86_400], train_set.num_users,
                             train_set.num_items, (1.0, 5.0))
        from aspectmf.model import predict
        pred = predict(p, idx, 0, 0, 1, ctx, cfg, clip=(1.0, 5.0))
        rep = evaluate(p, test, set(), ctx, cfg, idx)
        assert rep.mae_all == pytest.approx(abs(pred - 3.0))
        assert rep.rmse_all == pytest.approx(abs(pred - 3.0))
        assert rep.n_all == 1

    def test_empty_cold_slice_absent(self):
        p, train_set, ctx, cfg, idx = self._fitted()
        test = RatingDataset([0, 1], [0, 1], [3.0, 4.0], [0, 0],
                             train_set.num_users, train_set.num_items, (1.0, 5.0))
        rep = evaluate(p, test, set(), ctx, cfg, idx)
        assert rep.mae_cold is None and rep.rmse_cold is None
        assert rep.n_cold == 0

    def test_cold_slice_selected_by_user(self):
        p, train_set, ctx, cfg, idx = self._fitted()
        test = RatingDataset([0, 1, 2], [0, 1, 2], [3.0, 4.0, 2.0], [0, 0, 0],
                             train_set.num_users, train_set.num_items, (1.0, 5.0))
        rep = evaluate(p, test, {1}, ctx, cfg, idx)
        assert rep.n_cold == 1
        assert rep.rmse_cold >= rep.mae_cold >= 0

    def test_permutation_invariance(self):
        p, train_set, ctx, cfg, idx = self._fitted()
        test = RatingDataset([0, 1, 2], [2, 0, 1], [3.0, 4.0, 2.0],
                             [0, 86_400, 2 * 86_400], train_set.num_users,
                             train_set.num_items, (1.0, 5.0))
        perm = RatingDataset([2, 0, 1], [1, 2, 0], [2.0, 3.0, 4.0],
                             [2 * 86_400, 0, 86_400], train_set.num_users,
                             train_set.num_items, (1.0, 5.0))
        a = evaluate(p, test, {2}, ctx, cfg, idx)
        b = evaluate(p, perm, {2}, ctx, cfg, idx)
        assert a == b

    def test_empty_test_rejected(self):
        p, train_set, ctx, cfg, idx = self._fitted()
        empty = RatingDataset([], [], [], [], train_set.num_users,
                              train_set.num_items, (1.0, 5.0))
        with pytest.raises(ValueError):
            evaluate(p, empty, set(), ctx, cfg, idx)


class TestWelchTTest:
    def test_identical_samples(self):
        res = welch_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert res.t_statistic == 0.0
        assert res.p_value == pytest.approx(1.0)

    def test_strong_separation(self):
        res = welch_t_test([1.0, 2.0, 3.0], [11.0, 12.0, 13.0])
        assert abs(res.t_statistic) > 5
        assert res.p_value < 0.01

    def test_frozen_reference(self):
        res = welch_t_test([2.1, 2.0, 1.9], [2.4, 2.5, 2.6])
        assert res.t_statistic == pytest.approx(WELCH_REFERENCE["t"], abs=1e-9)
        assert res.p_value == pytest.approx(WELCH_REFERENCE["p"], abs=1e-9)
        assert res.degrees_of_freedom == pytest.approx(WELCH_REFERENCE["df"],
                                                       abs=1e-9)

    def test_matches_library_reference(self):
        from scipy import stats
        rng = np.random.default_rng(5)
        for _ in range(20):
            a = rng.normal(0, 1, size=rng.integers(2, 12))
            b = rng.normal(0.3, 2, size=rng.integers(2, 12))
            mine = welch_t_test(a, b)
            ref = stats.ttest_ind(a, b, equal_var=False)
            assert mine.t_statistic == pytest.approx(ref.statistic, abs=1e-10)
            assert mine.p_value == pytest.approx(ref.pvalue, abs=1e-10)

    def test_antisymmetric_in_sample_order(self):
        a = [0.8, 0.9, 1.1, 0.85]
        b = [1.0, 1.3, 1.2]
        ab = welch_t_test(a, b)
        ba = welch_t_test(b, a)
        assert ab.t_statistic == pytest.approx(-ba.t_statistic)
        assert ab.p_value == pytest.approx(ba.p_value)

    def test_undersized_samples_rejected(self):
        with pytest.raises(ValueError):
            welch_t_test([1.0], [1.0, 2.0])

    def test_constant_equal_samples(self):
        res = welch_t_test([2.0, 2.0, 2.0], [2.0, 2.0])
        assert res.t_statistic == 0.0 and res.p_value == 1.0


def _small_split(seed=0):
    cfg = SyntheticConfig(num_users=25, num_items=40, num_factors=2,
                          ratings_per_user=12, seed=seed, noise_std=0.3)
    ds, trust, _ = generate_synthetic(cfg)
    return split_random(ds, 0.8, seed=1) + (trust,)


FAST_HYPER = HyperParams(D=2, max_iter=4, seed=0)
LEAN_CFG = AspectConfig(social=False, conditional=False, implicit_feedback=False)


class TestAspectSweep:
    def test_static_single_seed_has_no_std(self):
        train_set, test, trust = _small_split()
        cells, agg = aspect_sweep(train_set, trust, test, FAST_HYPER, LEAN_CFG,
                                  seeds=[0], combos=("static",), track_best=False)
        assert {c["combination"] for c in cells} == {"static"}
        assert all(row["std"] is None and row["n"] == 1 for row in agg)

    def test_identical_seeds_zero_std(self):
        train_set, test, trust = _small_split()
        _, agg = aspect_sweep(train_set, trust, test, FAST_HYPER, LEAN_CFG,
                              seeds=[3, 3], combos=("static",), track_best=False)
        assert all(row["std"] == 0.0 for row in agg)

    def test_static_row_equals_direct_run(self):
        train_set, test, trust = _small_split()
        cells, _ = aspect_sweep(train_set, trust, test, FAST_HYPER, LEAN_CFG,
                                seeds=[7], combos=("static",), track_best=False)
        direct = train_and_evaluate(train_set, trust, test,
                                    HyperParams(D=2, max_iter=4, seed=7),
                                    LEAN_CFG, track_best=False)
        by_key = {(c["metric"], c["slice"]): c["value"] for c in cells}
        assert by_key[("mae", "all")] == direct.mae_all
        assert by_key[("rmse", "all")] == direct.rmse_all

    def test_cell_cardinality(self):
        train_set, test, trust = _small_split()
        cells, agg = aspect_sweep(train_set, trust, test, FAST_HYPER, LEAN_CFG,
                                  seeds=[1, 2], combos=("b", "f"),
                                  track_best=False)
        combos_seen = {(c["combination"], c["seed"]) for c in cells}
        assert combos_seen == {("b", 1), ("b", 2), ("f", 1), ("f", 2)}

    def test_parallel_matches_serial(self):
        train_set, test, trust = _small_split()
        serial = aspect_sweep(train_set, trust, test, FAST_HYPER, LEAN_CFG,
                              seeds=[1], combos=("static", "b"),
                              track_best=False, workers=1)
        parallel = aspect_sweep(train_set, trust, test, FAST_HYPER, LEAN_CFG,
                                seeds=[1], combos=("static", "b"),
                                track_best=False, workers=2)
        assert serial == parallel

    def test_best_tracking_never_worse_than_final(self):
        train_set, test, trust = _small_split()
        best = train_and_evaluate(train_set, trust, test, FAST_HYPER, LEAN_CFG,
                                  track_best=True)
        final = train_and_evaluate(train_set, trust, test, FAST_HYPER, LEAN_CFG,
                                   track_best=False)
        assert best.rmse_all <= final.rmse_all + 1e-12
        assert best.mae_all <= final.mae_all + 1e-12


class TestRobustness:
    def test_percent_increase_arithmetic(self):
        cfg = SyntheticConfig(num_users=25, num_items=40, num_factors=2,
                              ratings_per_user=12, seed=4, noise_std=0.3)
        ds, trust, _ = generate_synthetic(cfg)
        cells, table = robustness_experiment(ds, trust, FAST_HYPER, LEAN_CFG,
                                             fractions=(0.8, 0.6), seeds=(0, 1),
                                             track_best=False)
        assert {row["pair"] for row in table} == {"80-60"}
        for row in table:
            recomputed = 100.0 * (row["lower_fraction_error"]
                                  - row["higher_fraction_error"]) \
                / row["higher_fraction_error"]
            assert row["percent_increase"] == pytest.approx(recomputed)
        mean_cells = {}
        for c in cells:
            if c["error"]:
                continue
            key = (c["fraction"], c["metric"], c["slice"])
            mean_cells.setdefault(key, []).append(c["value"])
        for row in table:
            vals = mean_cells[(0.8, row["metric"], row["slice"])]
            assert row["higher_fraction_error"] == pytest.approx(np.mean(vals))

    def test_fraction_validation(self):
        ds, trust, _ = generate_synthetic(SyntheticConfig(num_users=10,
                                                          num_items=20,
                                                          ratings_per_user=5))
        with pytest.raises(ValueError):
            robustness_experiment(ds, trust, FAST_HYPER, LEAN_CFG,
                                  fractions=(0.6, 0.8))
        with pytest.raises(ValueError):
            robustness_experiment(ds, trust, FAST_HYPER, LEAN_CFG,
                                  fractions=(0.8, 0.0))


class TestScalingBenchmark:
    def test_equal_sizes_repeatable(self):
        base = dict(num_users=40, num_items=60, num_factors=2,
                    ratings_per_user=15, noise_std=0.2)
        configs = [SyntheticConfig(seed=1, **base), SyntheticConfig(seed=2, **base)]
        hyper = HyperParams(D=2, seed=0)
        rows = scaling_benchmark(configs, hyper, LEAN_CFG, repeats=3)
        assert len(rows) == 2
        ratio = rows[1]["seconds_per_iteration"] / rows[0]["seconds_per_iteration"]
        assert 0.5 <= ratio <= 2.0

    def test_needs_two_sizes(self):
        with pytest.raises(ValueError):
            scaling_benchmark([SyntheticConfig()], HyperParams(), LEAN_CFG)


class TestRowsToDelimited:
    def test_header_and_na(self):
        rows = [{"a": 1, "b": None}, {"a": 2.5, "b": "x"}]
        text = rows_to_delimited(rows, ["a", "b"])
        lines = text.strip().split("\n")
        assert lines[0] == "a\tb"
        assert lines[1] == "1\tNA"
        assert lines[2] == "2.5\tx"

    def test_empty(self):
        assert rows_to_delimited([]) == ""
